#include "tchr/program.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace tchr {

namespace {

struct token {
  enum class kind { atom, variable, integer, punct, end_clause, eof };
  kind k;
  std::string text;
  long long value = 0;
  int line = 1, col = 1;
};

struct lexer {
  const std::string& src;
  size_t pos = 0;
  int line = 1, col = 1;

  explicit lexer(const std::string& s) : src(s) {}

  [[noreturn]] void fail(const std::string& msg) const { throw parse_error(msg, line, col); }

  int peek() const { return pos < src.size() ? static_cast<unsigned char>(src[pos]) : -1; }
  int peek2() const { return pos + 1 < src.size() ? static_cast<unsigned char>(src[pos + 1]) : -1; }

  void advance() {
    if (pos < src.size()) {
      if (src[pos] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++pos;
    }
  }

  void skip_ws() {
    for (;;) {
      int c = peek();
      if (c == '%') {
        while (peek() != '\n' && peek() != -1) advance();
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else {
        return;
      }
    }
  }

  static bool is_symbol_char(int c) {
    return std::string("+-*/\\^<>=~:.?@#&").find(static_cast<char>(c)) != std::string::npos;
  }

  token next() {
    skip_ws();
    token t;
    t.line = line;
    t.col = col;
    int c = peek();
    if (c == -1) {
      t.k = token::kind::eof;
      return t;
    }
    // End of clause: '.' followed by layout or EOF.
    if (c == '.') {
      int n = peek2();
      if (n == -1 || n == ' ' || n == '\t' || n == '\r' || n == '\n' || n == '%') {
        advance();
        t.k = token::kind::end_clause;
        t.text = ".";
        return t;
      }
    }
    if (isdigit(c)) {
      std::string num;
      while (isdigit(peek())) {
        num += static_cast<char>(peek());
        advance();
      }
      t.k = token::kind::integer;
      t.value = std::stoll(num);
      t.text = num;
      return t;
    }
    if (islower(c)) {
      std::string name;
      while (isalnum(peek()) || peek() == '_') {
        name += static_cast<char>(peek());
        advance();
      }
      t.k = token::kind::atom;
      t.text = name;
      return t;
    }
    if (isupper(c) || c == '_') {
      std::string name;
      while (isalnum(peek()) || peek() == '_') {
        name += static_cast<char>(peek());
        advance();
      }
      t.k = token::kind::variable;
      t.text = name;
      return t;
    }
    if (c == '\'') {
      advance();
      std::string name;
      for (;;) {
        int d = peek();
        if (d == -1) fail("unterminated quoted atom");
        if (d == '\\') {
          advance();
          int e = peek();
          if (e == -1) fail("unterminated escape in quoted atom");
          name += static_cast<char>(e);
          advance();
          continue;
        }
        if (d == '\'') {
          advance();
          break;
        }
        name += static_cast<char>(d);
        advance();
      }
      t.k = token::kind::atom;
      t.text = name;
      return t;
    }
    if (c == '(' || c == ')' || c == '[' || c == ']' || c == ',' || c == '|' || c == '!') {
      advance();
      t.k = token::kind::punct;
      t.text = std::string(1, static_cast<char>(c));
      return t;
    }
    if (is_symbol_char(c)) {
      std::string sym;
      while (is_symbol_char(peek())) {
        sym += static_cast<char>(peek());
        advance();
      }
      t.k = token::kind::atom;
      t.text = sym;
      return t;
    }
    fail("unexpected character '" + std::string(1, static_cast<char>(c)) + "'");
  }
};

struct op_info {
  int prec;
  enum class assoc { xfx, xfy, yfx } a;
};

const std::map<std::string, op_info>& infix_ops() {
  static const std::map<std::string, op_info> ops = {
      {":-", {1200, op_info::assoc::xfx}}, {"@", {1190, op_info::assoc::xfx}},
      {"<=>", {1180, op_info::assoc::xfx}}, {"==>", {1180, op_info::assoc::xfx}},
      {"\\", {1150, op_info::assoc::xfx}},  {"|", {1100, op_info::assoc::xfy}},
      {",", {1000, op_info::assoc::xfy}},   {"=", {700, op_info::assoc::xfx}},
      {"==", {700, op_info::assoc::xfx}},   {"\\==", {700, op_info::assoc::xfx}},
      {"is", {700, op_info::assoc::xfx}},   {"<", {700, op_info::assoc::xfx}},
      {">", {700, op_info::assoc::xfx}},    {"=<", {700, op_info::assoc::xfx}},
      {">=", {700, op_info::assoc::xfx}},   {"+", {500, op_info::assoc::yfx}},
      {"-", {500, op_info::assoc::yfx}},    {"*", {400, op_info::assoc::yfx}},
      {"//", {400, op_info::assoc::yfx}},
  };
  return ops;
}

struct parser {
  lexer lex;
  token cur;
  bindings& b;
  std::map<std::string, int> var_ids;
  std::vector<std::string> var_order;

  parser(const std::string& text, bindings& bb) : lex(text), b(bb) { cur = lex.next(); }

  [[noreturn]] void fail(const std::string& msg) const {
    throw parse_error(msg + " (got '" + cur.text + "')", cur.line, cur.col);
  }

  void consume() { cur = lex.next(); }

  bool at_atom(const std::string& s) const { return cur.k == token::kind::atom && cur.text == s; }
  bool at_punct(const std::string& s) const { return cur.k == token::kind::punct && cur.text == s; }

  void expect_punct(const std::string& s) {
    if (!at_punct(s)) fail("expected '" + s + "'");
    consume();
  }

  term_ptr var_term(const std::string& name) {
    if (name == "_") return term::mk_var(b.fresh());
    auto it = var_ids.find(name);
    if (it != var_ids.end()) return term::mk_var(it->second);
    int id = b.fresh();
    var_ids.emplace(name, id);
    var_order.push_back(name);
    return term::mk_var(id);
  }

  // Comma-separated args inside parens/brackets bind tighter than ','.
  term_ptr parse_arg() { return parse_expr(999); }

  term_ptr parse_list() {
    expect_punct("[");
    if (at_punct("]")) {
      consume();
      return term::mk_atom("[]");
    }
    std::vector<term_ptr> items;
    items.push_back(parse_arg());
    while (at_punct(",")) {
      consume();
      items.push_back(parse_arg());
    }
    term_ptr tail = term::mk_atom("[]");
    if (at_punct("|")) {
      consume();
      tail = parse_arg();
    }
    expect_punct("]");
    for (auto it = items.rbegin(); it != items.rend(); ++it)
      tail = term::mk_compound(".", {*it, tail});
    return tail;
  }

  term_ptr parse_primary() {
    switch (cur.k) {
      case token::kind::integer: {
        term_ptr t = term::mk_int(cur.value);
        consume();
        return t;
      }
      case token::kind::variable: {
        term_ptr t = var_term(cur.text);
        consume();
        return t;
      }
      case token::kind::atom: {
        std::string name = cur.text;
        if (name == "\\+") {
          consume();
          term_ptr arg = parse_expr(900);
          return term::mk_compound("\\+", {arg});
        }
        if (name == "-") {
          // Prefix minus; folds integer literals.
          consume();
          term_ptr arg = parse_expr(200);
          if (arg->is_int()) return term::mk_int(-arg->int_value);
          return term::mk_compound("-", {arg});
        }
        consume();
        if (at_punct("(")) {
          consume();
          std::vector<term_ptr> args;
          args.push_back(parse_arg());
          while (at_punct(",")) {
            consume();
            args.push_back(parse_arg());
          }
          expect_punct(")");
          return term::mk_compound(name, std::move(args));
        }
        return term::mk_atom(name);
      }
      case token::kind::punct:
        if (cur.text == "(") {
          consume();
          term_ptr t = parse_expr(1200);
          expect_punct(")");
          return t;
        }
        if (cur.text == "[") return parse_list();
        fail("expected a term");
      default: fail("expected a term");
    }
  }

  term_ptr parse_expr(int max_prec) {
    term_ptr left = parse_primary();
    int left_prec = 0;
    for (;;) {
      std::string opname;
      if (cur.k == token::kind::atom)
        opname = cur.text;
      else if (at_punct(","))
        opname = ",";
      else if (at_punct("|"))
        opname = "|";
      else
        break;
      auto it = infix_ops().find(opname);
      if (it == infix_ops().end()) break;
      const op_info& op = it->second;
      if (op.prec > max_prec) break;
      int left_max = op.a == op_info::assoc::yfx ? op.prec : op.prec - 1;
      if (left_prec > left_max) break;
      consume();
      int right_max = op.a == op_info::assoc::xfy ? op.prec : op.prec - 1;
      term_ptr right = parse_expr(right_max);
      left = term::mk_compound(opname, {left, right});
      left_prec = op.prec;
    }
    return left;
  }

  // One clause-level term up to '.', or nullopt at EOF.
  std::optional<term_ptr> parse_statement() {
    if (cur.k == token::kind::eof) return std::nullopt;
    var_ids.clear();
    var_order.clear();
    term_ptr t = parse_expr(1200);
    if (cur.k != token::kind::end_clause) fail("expected '.' at end of clause");
    consume();
    return t;
  }
};

void flatten_conj(const term_ptr& t, std::vector<term_ptr>& out) {
  if (t->is_compound() && t->name == "," && t->args.size() == 2) {
    flatten_conj(t->args[0], out);
    flatten_conj(t->args[1], out);
  } else {
    out.push_back(t);
  }
}

std::vector<term_ptr> conj_list(const term_ptr& t) {
  std::vector<term_ptr> out;
  flatten_conj(t, out);
  return out;
}

bool list_to_vector(const term_ptr& t, std::vector<term_ptr>& out) {
  term_ptr cur = t;
  while (cur->is_compound() && cur->name == "." && cur->args.size() == 2) {
    out.push_back(cur->args[0]);
    cur = cur->args[1];
  }
  return cur->is_atom_named("[]");
}

struct program_builder {
  program& p;
  bindings& b;
  int rule_counter;

  void add_table_decl(const term_ptr& spec, const term_ptr& options) {
    table_decl d;
    if (spec->is_compound() && spec->name == "/" && spec->args.size() == 2 &&
        spec->args[0]->is_atom() && spec->args[1]->is_int()) {
      d.pred = {spec->args[0]->name, static_cast<int>(spec->args[1]->int_value)};
      d.modes.assign(d.pred.arity, arg_mode::plain);
    } else if (spec->is_compound() || spec->is_atom()) {
      d.pred = functor_of(spec);
      for (const auto& a : spec->is_compound() ? spec->args : std::vector<term_ptr>{}) {
        if (a->is_atom_named("chr"))
          d.modes.push_back(arg_mode::chr);
        else if (a->is_var())
          d.modes.push_back(arg_mode::plain);
        else
          throw load_error("table_chr argument modes must be _ or chr");
      }
    } else {
      throw load_error("malformed table_chr declaration");
    }
    if (options) {
      std::vector<term_ptr> opts;
      if (!list_to_vector(options, opts)) throw load_error("table_chr options must be a list");
      for (const auto& o : opts) {
        if (o->is_compound() && o->args.size() == 1) {
          const term_ptr& a = o->args[0];
          if (o->name == "encoding") {
            if (a->is_atom_named("suspension"))
              d.encoding = store_encoding::suspension;
            else if (a->is_atom_named("goal"))
              d.encoding = store_encoding::goal;
            else
              throw load_error("encoding option expects suspension or goal");
            continue;
          }
          if (o->name == "projection" && a->is_atom()) {
            d.projection = a->name;
            continue;
          }
          if (o->name == "canonical_form" && a->is_atom()) {
            d.canonical_form = a->name;
            continue;
          }
          if (o->name == "answer_combination" && a->is_atom()) {
            d.answer_combination = a->name;
            continue;
          }
          if (o->name == "answer_combination_relaxed" && a->is_atom()) {
            d.answer_combination = a->name;
            d.relaxed_combination = true;
            continue;
          }
        }
        throw load_error("unknown table_chr option");
      }
    }
    if (p.table_decls.count(d.pred))
      throw load_error("predicate " + to_string(d.pred) + " tabled twice");
    p.table_decls.emplace(d.pred, std::move(d));
  }

  void add_directive(const term_ptr& t) {
    throw load_error("unknown directive: " + term_to_string(t, b));
  }

  void add_chr_rule(std::optional<std::string> name, const term_ptr& heads_part,
                    const term_ptr& rhs, bool propagation) {
    chr_rule r;
    r.name = std::move(name);
    r.text_order = rule_counter++;
    term_ptr kept, removed;
    if (!propagation && heads_part->is_compound() && heads_part->name == "\\" &&
        heads_part->args.size() == 2) {
      kept = heads_part->args[0];
      removed = heads_part->args[1];
    } else if (propagation) {
      kept = heads_part;
    } else {
      removed = heads_part;
    }
    if (kept) r.kept_heads = conj_list(kept);
    if (removed) r.removed_heads = conj_list(removed);
    term_ptr body_part = rhs;
    if (rhs->is_compound() && rhs->name == "|" && rhs->args.size() == 2) {
      r.guard = conj_list(rhs->args[0]);
      body_part = rhs->args[1];
    }
    r.body = conj_list(body_part);
    p.rules.push_back(std::move(r));
  }

  void add_clause(const term_ptr& head, const term_ptr& body,
                  std::map<int, std::string> names) {
    clause c;
    c.head = head;
    if (body) c.body = conj_list(body);
    c.var_names = std::move(names);
    functor_key k = functor_of(head);
    if (k.arity < 0) throw load_error("clause head must be an atom or compound");
    if (!p.clauses.count(k)) p.clause_order.push_back(k);
    p.clauses[k].push_back(std::move(c));
  }

  void add_statement(const term_ptr& t, const std::map<int, std::string>& names) {
    if (t->is_compound() && t->name == ":-" && t->args.size() == 1) {
      add_directive(t->args[0]);
      return;
    }
    // Directive with binary :- does not exist after parse_expr; directives are
    // detected before this point.
    term_ptr rule_part = t;
    std::optional<std::string> rname;
    if (rule_part->is_compound() && rule_part->name == "@" && rule_part->args.size() == 2) {
      if (!rule_part->args[0]->is_atom()) throw load_error("rule name must be an atom");
      rname = rule_part->args[0]->name;
      rule_part = rule_part->args[1];
    }
    if (rule_part->is_compound() && rule_part->name == "<=>" && rule_part->args.size() == 2) {
      add_chr_rule(rname, rule_part->args[0], rule_part->args[1], false);
      return;
    }
    if (rule_part->is_compound() && rule_part->name == "==>" && rule_part->args.size() == 2) {
      add_chr_rule(rname, rule_part->args[0], rule_part->args[1], true);
      return;
    }
    if (rname) throw load_error("'@' must name a CHR rule");
    if (t->is_compound() && t->name == ":-" && t->args.size() == 2) {
      add_clause(t->args[0], t->args[1], names);
      return;
    }
    add_clause(t, nullptr, names);
  }
};

} // namespace

void program::index_rules() {
  rules_by_functor.clear();
  for (size_t i = 0; i < rules.size(); ++i) {
    auto add = [&](const std::vector<term_ptr>& hs) {
      for (const auto& h : hs) {
        functor_key k = functor_of(h);
        auto& v = rules_by_functor[k];
        if (std::find(v.begin(), v.end(), i) == v.end()) v.push_back(i);
      }
    };
    add(rules[i].kept_heads);
    add(rules[i].removed_heads);
  }
}

void program::validate() const {
  for (const auto& r : rules) {
    for (const auto& hs : {r.kept_heads, r.removed_heads})
      for (const auto& h : hs) {
        functor_key k = functor_of(h);
        if (!is_constraint(k))
          throw load_error("CHR rule head " + to_string(k) + " is not a declared constraint");
      }
  }
  for (const auto& [k, cs] : clauses) {
    if (is_constraint(k))
      throw load_error("predicate " + to_string(k) + " clashes with a CHR constraint symbol");
    (void)cs;
  }
  for (const auto& [k, d] : table_decls) {
    if (!d.modes.empty() && static_cast<int>(d.modes.size()) != k.arity)
      throw load_error("table_chr modes arity mismatch for " + to_string(k));
    (void)d;
  }
}

program parse_program(const std::string& text, bindings& b) {
  program p;
  parse_program_into(text, b, p);
  return p;
}

void parse_program_into(const std::string& text, bindings& b, program& p) {
  parser ps(text, b);
  program_builder builder{p, b, static_cast<int>(p.rules.size())};
  for (;;) {
    // Directives need a lookahead hack for "table_chr Spec with Options":
    // 'with' is not an operator, so we parse the directive body manually.
    if (ps.cur.k == token::kind::atom && ps.cur.text == ":-") {
      ps.consume();
      if (ps.at_atom("table_chr")) {
        ps.consume();
        term_ptr spec = ps.parse_expr(999);
        // Allow p/N via explicit check: parse_expr yields atom followed by
        // '/'? '/' is a symbolic atom token; handle "p/2" shape.
        if (ps.at_atom("/")) {
          ps.consume();
          if (ps.cur.k != token::kind::integer) ps.fail("expected arity after '/'");
          spec = term::mk_compound("/", {spec, term::mk_int(ps.cur.value)});
          ps.consume();
        }
        term_ptr options = nullptr;
        if (ps.at_atom("with")) {
          ps.consume();
          options = ps.parse_expr(999);
        }
        if (ps.cur.k != token::kind::end_clause) ps.fail("expected '.' after declaration");
        ps.consume();
        builder.add_table_decl(spec, options);
        continue;
      }
      if (ps.at_atom("constraints") || ps.at_atom("constraint")) {
        ps.consume();
        // Items f/N separated by commas.
        for (;;) {
          term_ptr name_t = ps.parse_expr(399);
          if (!ps.at_atom("/")) ps.fail("expected '/' in constraint declaration");
          ps.consume();
          if (ps.cur.k != token::kind::integer) ps.fail("expected arity after '/'");
          long long arity = ps.cur.value;
          ps.consume();
          if (!name_t->is_atom()) throw load_error("constraint name must be an atom");
          p.constraint_decls.insert({name_t->name, static_cast<int>(arity)});
          if (ps.at_punct(",")) {
            ps.consume();
            continue;
          }
          break;
        }
        if (ps.cur.k != token::kind::end_clause) ps.fail("expected '.' after declaration");
        ps.consume();
        continue;
      }
      // Generic directive.
      term_ptr t = ps.parse_expr(1200);
      if (ps.cur.k != token::kind::end_clause) ps.fail("expected '.' at end of directive");
      ps.consume();
      builder.add_directive(t);
      continue;
    }
    auto stmt = ps.parse_statement();
    if (!stmt) break;
    std::map<int, std::string> names;
    for (const auto& [n, id] : ps.var_ids) names.emplace(id, n);
    builder.add_statement(*stmt, names);
  }
  p.index_rules();
  p.validate();
}

parsed_query parse_query(const std::string& text, bindings& b) {
  parser ps(text, b);
  if (ps.at_atom("?-")) ps.consume();
  if (ps.cur.k == token::kind::end_clause || ps.cur.k == token::kind::eof)
    ps.fail("empty query");
  term_ptr t = ps.parse_expr(1200);
  if (ps.cur.k == token::kind::end_clause) ps.consume();
  if (ps.cur.k != token::kind::eof) ps.fail("trailing input after query");
  parsed_query q;
  q.goals = conj_list(t);
  q.var_ids = ps.var_ids;
  q.var_order = ps.var_order;
  return q;
}

namespace {

std::string goals_to_string(const std::vector<term_ptr>& gs, const bindings& b,
                            const std::map<int, std::string>* names) {
  std::string out;
  for (size_t i = 0; i < gs.size(); ++i) {
    if (i) out += ", ";
    out += term_to_string(gs[i], b, names);
  }
  return out;
}

} // namespace

std::string pretty_print(const program& p, const bindings& b) {
  std::ostringstream out;
  for (const auto& k : p.constraint_decls) out << ":- constraints " << to_string(k) << ".\n";
  for (const auto& [k, d] : p.table_decls) {
    out << ":- table_chr ";
    if (d.modes.empty()) {
      out << to_string(k);
    } else {
      out << k.name << "(";
      for (size_t i = 0; i < d.modes.size(); ++i) {
        if (i) out << ",";
        out << (d.modes[i] == arg_mode::chr ? "chr" : "_");
      }
      out << ")";
    }
    out << " with [encoding(" << (d.encoding == store_encoding::goal ? "goal" : "suspension")
        << ")";
    if (d.projection) out << ", projection(" << *d.projection << ")";
    if (d.canonical_form) out << ", canonical_form(" << *d.canonical_form << ")";
    if (d.answer_combination)
      out << ", " << (d.relaxed_combination ? "answer_combination_relaxed(" : "answer_combination(")
          << *d.answer_combination << ")";
    out << "].\n";
  }
  for (const auto& r : p.rules) {
    if (r.name) out << *r.name << " @ ";
    if (!r.kept_heads.empty() && !r.removed_heads.empty())
      out << goals_to_string(r.kept_heads, b, nullptr) << " \\ "
          << goals_to_string(r.removed_heads, b, nullptr) << " <=> ";
    else if (r.removed_heads.empty())
      out << goals_to_string(r.kept_heads, b, nullptr) << " ==> ";
    else
      out << goals_to_string(r.removed_heads, b, nullptr) << " <=> ";
    if (!r.guard.empty()) out << goals_to_string(r.guard, b, nullptr) << " | ";
    out << goals_to_string(r.body, b, nullptr) << ".\n";
  }
  for (const auto& k : p.clause_order) {
    for (const auto& c : p.clauses.at(k)) {
      out << term_to_string(c.head, b, &c.var_names);
      if (!c.body.empty()) out << " :- " << goals_to_string(c.body, b, &c.var_names);
      out << ".\n";
    }
  }
  return out.str();
}

} // namespace tchr
