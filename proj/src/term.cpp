#include "tchr/term.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

namespace tchr {

term_ptr term::mk_var(int id) {
  auto t = std::make_shared<term>();
  t->kind = term_kind::var;
  t->var = id;
  return t;
}

term_ptr term::mk_atom(std::string name) {
  auto t = std::make_shared<term>();
  t->kind = term_kind::atom;
  t->var = -1;
  t->name = std::move(name);
  return t;
}

term_ptr term::mk_int(long long v) {
  auto t = std::make_shared<term>();
  t->kind = term_kind::integer;
  t->var = -1;
  t->int_value = v;
  return t;
}

term_ptr term::mk_compound(std::string functor, std::vector<term_ptr> args) {
  if (args.empty()) return mk_atom(std::move(functor));
  auto t = std::make_shared<term>();
  t->kind = term_kind::compound;
  t->var = -1;
  t->name = std::move(functor);
  t->args = std::move(args);
  return t;
}

std::string to_string(const functor_key& k) {
  return k.name + "/" + std::to_string(k.arity);
}

functor_key functor_of(const term_ptr& t) {
  if (t->is_atom()) return {t->name, 0};
  if (t->is_compound()) return {t->name, t->arity()};
  return {"", -1};
}

void trail::undo_to(mark_t m, bindings& b) {
  while (entries_.size() > m) {
    entry& e = entries_.back();
    if (e.var >= 0)
      b.unbind(e.var);
    else
      e.undo();
    entries_.pop_back();
  }
}

std::vector<int> trail::vars_bound_since(mark_t m) const {
  std::vector<int> out;
  for (size_t i = m; i < entries_.size(); ++i)
    if (entries_[i].var >= 0) out.push_back(entries_[i].var);
  return out;
}

bool trail::any_bound_below(mark_t m, int var_watermark) const {
  for (size_t i = m; i < entries_.size(); ++i)
    if (entries_[i].var >= 0 && entries_[i].var < var_watermark) return true;
  return false;
}

int bindings::fresh() {
  slots_.push_back(nullptr);
  return next_var_++;
}

void bindings::reserve_ids(int upto) {
  if (upto > next_var_) {
    slots_.resize(upto);
    next_var_ = upto;
  }
}

bool bindings::is_bound(int v) const {
  return v >= 0 && v < static_cast<int>(slots_.size()) && slots_[v] != nullptr;
}

term_ptr bindings::lookup(int v) const {
  if (v < 0 || v >= static_cast<int>(slots_.size())) return nullptr;
  return slots_[v];
}

void bindings::bind(int v, term_ptr t, trail& tr) {
  assert(v >= 0 && v < next_var_ && !is_bound(v));
  if (v >= static_cast<int>(slots_.size())) slots_.resize(next_var_);
  slots_[v] = std::move(t);
  tr.push_bind(v);
}

void bindings::unbind(int v) {
  assert(is_bound(v));
  slots_[v] = nullptr;
}

term_ptr bindings::walk(const term_ptr& t) const {
  term_ptr cur = t;
  while (cur->is_var()) {
    term_ptr next = lookup(cur->var);
    if (!next) return cur;
    cur = next;
  }
  return cur;
}

term_ptr bindings::resolve(const term_ptr& t) const {
  term_ptr w = walk(t);
  if (!w->is_compound()) return w;
  bool changed = false;
  std::vector<term_ptr> args;
  args.reserve(w->args.size());
  for (const auto& a : w->args) {
    term_ptr r = resolve(a);
    if (r != a) changed = true;
    args.push_back(std::move(r));
  }
  if (!changed) return w;
  return term::mk_compound(w->name, std::move(args));
}

namespace {

bool occurs(int v, const term_ptr& t, const bindings& b) {
  term_ptr w = b.walk(t);
  if (w->is_var()) return w->var == v;
  if (w->is_compound())
    for (const auto& a : w->args)
      if (occurs(v, a, b)) return true;
  return false;
}

bool unify_rec(const term_ptr& a, const term_ptr& b, bindings& bs, trail& tr) {
  term_ptr x = bs.walk(a);
  term_ptr y = bs.walk(b);
  if (x->is_var() && y->is_var() && x->var == y->var) return true;
  if (x->is_var()) {
    if (occurs(x->var, y, bs)) return false;
    bs.bind(x->var, y, tr);
    return true;
  }
  if (y->is_var()) {
    if (occurs(y->var, x, bs)) return false;
    bs.bind(y->var, x, tr);
    return true;
  }
  if (x->kind != y->kind) return false;
  switch (x->kind) {
    case term_kind::integer: return x->int_value == y->int_value;
    case term_kind::atom: return x->name == y->name;
    case term_kind::compound: {
      if (x->name != y->name || x->args.size() != y->args.size()) return false;
      for (size_t i = 0; i < x->args.size(); ++i)
        if (!unify_rec(x->args[i], y->args[i], bs, tr)) return false;
      return true;
    }
    default: return false;
  }
}

bool match_rec(const term_ptr& pattern, const term_ptr& t, bindings& b, trail& tr,
               int watermark) {
  term_ptr p = b.walk(pattern);
  term_ptr s = b.walk(t);
  if (p->is_var()) {
    if (s->is_var() && s->var == p->var) return true;
    if (p->var < watermark) return false; // store variable in pattern position
    b.bind(p->var, s, tr);
    return true;
  }
  if (s->is_var()) return false; // would instantiate the store side
  if (p->kind != s->kind) return false;
  switch (p->kind) {
    case term_kind::integer: return p->int_value == s->int_value;
    case term_kind::atom: return p->name == s->name;
    case term_kind::compound: {
      if (p->name != s->name || p->args.size() != s->args.size()) return false;
      for (size_t i = 0; i < p->args.size(); ++i)
        if (!match_rec(p->args[i], s->args[i], b, tr, watermark)) return false;
      return true;
    }
    default: return false;
  }
}

} // namespace

bool unify(const term_ptr& a, const term_ptr& b, bindings& bs, trail& tr) {
  trail::mark_t m = tr.mark();
  if (unify_rec(a, b, bs, tr)) return true;
  tr.undo_to(m, bs);
  return false;
}

bool match(const term_ptr& pattern, const term_ptr& t, bindings& b, trail& tr,
           int bind_watermark) {
  trail::mark_t m = tr.mark();
  if (match_rec(pattern, t, b, tr, bind_watermark)) return true;
  tr.undo_to(m, b);
  return false;
}

bool terms_equal(const term_ptr& a, const term_ptr& b, const bindings& bs) {
  term_ptr x = bs.walk(a);
  term_ptr y = bs.walk(b);
  if (x->kind != y->kind) return false;
  switch (x->kind) {
    case term_kind::var: return x->var == y->var;
    case term_kind::integer: return x->int_value == y->int_value;
    case term_kind::atom: return x->name == y->name;
    case term_kind::compound: {
      if (x->name != y->name || x->args.size() != y->args.size()) return false;
      for (size_t i = 0; i < x->args.size(); ++i)
        if (!terms_equal(x->args[i], y->args[i], bs)) return false;
      return true;
    }
  }
  return false;
}

int term_compare(const term_ptr& a, const term_ptr& b) {
  auto rank = [](const term_ptr& t) {
    switch (t->kind) {
      case term_kind::var: return 0;
      case term_kind::integer: return 1;
      case term_kind::atom: return 2;
      case term_kind::compound: return 3;
    }
    return 4;
  };
  int ra = rank(a), rb = rank(b);
  if (ra != rb) return ra < rb ? -1 : 1;
  switch (a->kind) {
    case term_kind::var: return a->var < b->var ? -1 : (a->var > b->var ? 1 : 0);
    case term_kind::integer:
      return a->int_value < b->int_value ? -1 : (a->int_value > b->int_value ? 1 : 0);
    case term_kind::atom: return a->name.compare(b->name) < 0 ? -1 : (a->name == b->name ? 0 : 1);
    case term_kind::compound: {
      if (a->args.size() != b->args.size()) return a->args.size() < b->args.size() ? -1 : 1;
      int c = a->name.compare(b->name);
      if (c != 0) return c < 0 ? -1 : 1;
      for (size_t i = 0; i < a->args.size(); ++i) {
        c = term_compare(a->args[i], b->args[i]);
        if (c != 0) return c;
      }
      return 0;
    }
  }
  return 0;
}

size_t term_hash(const term_ptr& t) {
  size_t h = 1469598103934665603ull;
  auto mix = [&h](size_t v) {
    h ^= v;
    h *= 1099511628211ull;
  };
  switch (t->kind) {
    case term_kind::var: mix(0x11), mix(static_cast<size_t>(t->var)); break;
    case term_kind::integer: mix(0x22), mix(static_cast<size_t>(t->int_value)); break;
    case term_kind::atom: mix(0x33), mix(std::hash<std::string>{}(t->name)); break;
    case term_kind::compound:
      mix(0x44);
      mix(std::hash<std::string>{}(t->name));
      for (const auto& a : t->args) mix(term_hash(a));
      break;
  }
  return h;
}

size_t term_node_count(const term_ptr& t) {
  size_t n = 1;
  if (t->is_compound())
    for (const auto& a : t->args) n += term_node_count(a);
  return n;
}

term_ptr rename_apart(const term_ptr& t, bindings& b, std::map<int, term_ptr>& var_map) {
  term_ptr w = b.walk(t);
  switch (w->kind) {
    case term_kind::var: {
      auto it = var_map.find(w->var);
      if (it != var_map.end()) return it->second;
      term_ptr fresh = term::mk_var(b.fresh());
      var_map.emplace(w->var, fresh);
      return fresh;
    }
    case term_kind::compound: {
      std::vector<term_ptr> args;
      args.reserve(w->args.size());
      for (const auto& a : w->args) args.push_back(rename_apart(a, b, var_map));
      return term::mk_compound(w->name, std::move(args));
    }
    default: return w;
  }
}

term_ptr rename_apart(const term_ptr& t, bindings& b) {
  std::map<int, term_ptr> m;
  return rename_apart(t, b, m);
}

term_ptr variant_key(const term_ptr& t, const bindings& b, std::map<int, int>& numbering) {
  term_ptr w = b.walk(t);
  switch (w->kind) {
    case term_kind::var: {
      // Canonical variables get negative ids so they can never collide with
      // (or dereference through) live engine variables.
      auto it = numbering.find(w->var);
      int n;
      if (it != numbering.end())
        n = it->second;
      else {
        n = static_cast<int>(numbering.size());
        numbering.emplace(w->var, n);
      }
      return term::mk_var(-1 - n);
    }
    case term_kind::compound: {
      std::vector<term_ptr> args;
      args.reserve(w->args.size());
      for (const auto& a : w->args) args.push_back(variant_key(a, b, numbering));
      return term::mk_compound(w->name, std::move(args));
    }
    default: return w;
  }
}

term_ptr variant_key(const term_ptr& t, const bindings& b) {
  std::map<int, int> numbering;
  return variant_key(t, b, numbering);
}

void collect_vars(const term_ptr& t, const bindings& b, std::vector<int>& out) {
  term_ptr w = b.walk(t);
  if (w->is_var()) {
    if (std::find(out.begin(), out.end(), w->var) == out.end()) out.push_back(w->var);
  } else if (w->is_compound()) {
    for (const auto& a : w->args) collect_vars(a, b, out);
  }
}

std::string int_to_string(long long v) { return std::to_string(v); }

namespace {

bool atom_needs_quotes(const std::string& s) {
  if (s.empty()) return true;
  if (s == "[]" || s == "!" || s == ";") return false;
  if (islower(static_cast<unsigned char>(s[0]))) {
    for (char c : s)
      if (!isalnum(static_cast<unsigned char>(c)) && c != '_') return true;
    return false;
  }
  // Purely symbolic atoms print bare.
  const std::string sym = "+-*/\\^<>=~:.?@#&";
  for (char c : s)
    if (sym.find(c) == std::string::npos) return true;
  return false;
}

struct printer {
  const bindings& b;
  const std::map<int, std::string>* names;
  std::ostringstream out;

  void atom(const std::string& s) {
    if (atom_needs_quotes(s)) {
      out << '\'';
      for (char c : s) {
        if (c == '\'' || c == '\\') out << '\\';
        out << c;
      }
      out << '\'';
    } else {
      out << s;
    }
  }

  // Operator table mirrored from the parser, used to print infix forms.
  static int infix_prec(const std::string& n, int arity) {
    if (arity != 2) return 0;
    if (n == ":-") return 1200;
    if (n == "@") return 1190;
    if (n == "<=>" || n == "==>") return 1180;
    if (n == "\\") return 1150;
    if (n == "|") return 1100;
    if (n == ",") return 1000;
    if (n == "=" || n == "==" || n == "\\==" || n == "is" || n == "<" || n == ">" ||
        n == "=<" || n == ">=")
      return 700;
    if (n == "+" || n == "-") return 500;
    if (n == "*" || n == "//") return 400;
    return 0;
  }

  void print(const term_ptr& t, int max_prec) {
    term_ptr w = b.walk(t);
    switch (w->kind) {
      case term_kind::var: {
        if (w->var < 0) {
          out << "$" << (-1 - w->var); // canonical (variant-numbered) variable
          return;
        }
        if (names) {
          auto it = names->find(w->var);
          if (it != names->end()) {
            out << it->second;
            return;
          }
        }
        out << "_" << w->var;
        return;
      }
      case term_kind::integer:
        out << w->int_value;
        return;
      case term_kind::atom:
        atom(w->name);
        return;
      case term_kind::compound: {
        // List sugar.
        if (w->name == "." && w->args.size() == 2) {
          out << '[';
          print(w->args[0], 999);
          term_ptr tail = b.walk(w->args[1]);
          while (tail->is_compound() && tail->name == "." && tail->args.size() == 2) {
            out << ',';
            print(tail->args[0], 999);
            tail = b.walk(tail->args[1]);
          }
          if (!tail->is_atom_named("[]")) {
            out << '|';
            print(tail, 999);
          }
          out << ']';
          return;
        }
        if (w->name == "\\+" && w->args.size() == 1) {
          bool paren = max_prec < 900;
          if (paren) out << '(';
          out << "\\+ ";
          print(w->args[0], 900);
          if (paren) out << ')';
          return;
        }
        if (w->name == "-" && w->args.size() == 1) {
          bool paren = max_prec < 200;
          if (paren) out << '(';
          out << "-";
          print(w->args[0], 200);
          if (paren) out << ')';
          return;
        }
        int prec = infix_prec(w->name, static_cast<int>(w->args.size()));
        if (prec > 0) {
          bool paren = prec > max_prec;
          if (paren) out << '(';
          // Right-associative for , and |; left otherwise.
          bool xfy = (w->name == "," || w->name == "|");
          print(w->args[0], xfy ? prec - 1 : prec - 1);
          if (w->name == ",")
            out << ", ";
          else
            out << ' ' << w->name << ' ';
          print(w->args[1], xfy ? prec : prec - 1);
          if (paren) out << ')';
          return;
        }
        atom(w->name);
        out << '(';
        for (size_t i = 0; i < w->args.size(); ++i) {
          if (i) out << ',';
          print(w->args[i], 999);
        }
        out << ')';
        return;
      }
    }
  }
};

} // namespace

std::string term_to_string(const term_ptr& t, const bindings& b,
                           const std::map<int, std::string>* names) {
  printer p{b, names, {}};
  p.print(t, 1200);
  return p.out.str();
}

} // namespace tchr
