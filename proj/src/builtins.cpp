#include "tchr/builtins.hpp"

#include <algorithm>

namespace tchr {

bool is_builtin(const functor_key& k) {
  static const std::set<functor_key> table = {
      {"true", 0}, {"fail", 0},  {"=", 2},      {"==", 2},  {"\\==", 2},
      {"is", 2},   {"<", 2},     {">", 2},      {"=<", 2},  {">=", 2},
      {"number", 1}, {"member", 2}, {"sort", 2}, {"\\+", 1},
  };
  return table.count(k) > 0;
}

goal_class classify_goal(const term_ptr& g, const program& p, const bindings& b) {
  term_ptr w = b.walk(g);
  functor_key k = functor_of(w);
  if (k.arity < 0) throw engine_error(engine_fault::type, "goal is not callable");
  if (is_builtin(k)) return goal_class::builtin;
  if (p.is_constraint(k)) return goal_class::chr_constraint;
  return goal_class::user;
}

long long eval_arith(const term_ptr& t, const bindings& b) {
  term_ptr w = b.walk(t);
  switch (w->kind) {
    case term_kind::integer: return w->int_value;
    case term_kind::var:
      throw engine_error(engine_fault::instantiation, "unbound variable in arithmetic");
    case term_kind::atom:
      throw engine_error(engine_fault::type, "atom '" + w->name + "' in arithmetic");
    case term_kind::compound: {
      if (w->args.size() == 2) {
        long long x = eval_arith(w->args[0], b);
        long long y = eval_arith(w->args[1], b);
        if (w->name == "+") return x + y;
        if (w->name == "-") return x - y;
        if (w->name == "*") return x * y;
        if (w->name == "//") {
          if (y == 0) throw engine_error(engine_fault::type, "division by zero");
          return x / y; // truncating
        }
        if (w->name == "min") return std::min(x, y);
        if (w->name == "max") return std::max(x, y);
      }
      if (w->args.size() == 1 && w->name == "-") return -eval_arith(w->args[0], b);
      throw engine_error(engine_fault::type, "unknown evaluable functor " + w->name);
    }
  }
  throw engine_error(engine_fault::type, "bad arithmetic term");
}

bool list_elements(const term_ptr& list, const bindings& b, std::vector<term_ptr>& out) {
  term_ptr cur = b.walk(list);
  while (cur->is_compound() && cur->name == "." && cur->args.size() == 2) {
    out.push_back(cur->args[0]);
    cur = b.walk(cur->args[1]);
  }
  return cur->is_atom_named("[]");
}

term_ptr vector_to_list(const std::vector<term_ptr>& items) {
  term_ptr tail = term::mk_atom("[]");
  for (auto it = items.rbegin(); it != items.rend(); ++it)
    tail = term::mk_compound(".", {*it, tail});
  return tail;
}

bool sort_dedup_list(const term_ptr& list, const bindings& b, std::vector<term_ptr>& out) {
  std::vector<term_ptr> items;
  if (!list_elements(list, b, items)) return false;
  for (auto& t : items) out.push_back(b.resolve(t));
  std::sort(out.begin(), out.end(),
            [](const term_ptr& a, const term_ptr& c) { return term_compare(a, c) < 0; });
  out.erase(std::unique(out.begin(), out.end(),
                        [](const term_ptr& a, const term_ptr& c) {
                          return term_compare(a, c) == 0;
                        }),
            out.end());
  return true;
}

namespace {

// Guard-mode evaluation: conjunction with backtracking; a solution only
// counts if no variable older than the watermark is left bound at its end.
bool guard_solve(const std::vector<term_ptr>& goals, size_t idx, bindings& b, trail& tr,
                 int watermark, trail::mark_t entry_mark);

bool guard_goal(const term_ptr& goal, bindings& b, trail& tr, int watermark,
                const solution_sink& k) {
  term_ptr g = b.walk(goal);
  if (g->is_compound() && g->name == "\\+" && g->args.size() == 1) {
    std::vector<term_ptr> sub;
    // \+ over a conjunction of built-ins.
    std::function<void(const term_ptr&)> flat = [&](const term_ptr& t) {
      term_ptr w = b.walk(t);
      if (w->is_compound() && w->name == "," && w->args.size() == 2) {
        flat(w->args[0]);
        flat(w->args[1]);
      } else {
        sub.push_back(w);
      }
    };
    flat(g->args[0]);
    trail::mark_t m = tr.mark();
    bool found = guard_solve(sub, 0, b, tr, watermark, m);
    tr.undo_to(m, b);
    return found ? false : k();
  }
  return solve_builtin(g, b, tr, k);
}

bool guard_solve(const std::vector<term_ptr>& goals, size_t idx, bindings& b, trail& tr,
                 int watermark, trail::mark_t entry_mark) {
  if (idx == goals.size())
    return !tr.any_bound_below(entry_mark, watermark);
  return guard_goal(goals[idx], b, tr, watermark, [&]() {
    return guard_solve(goals, idx + 1, b, tr, watermark, entry_mark);
  });
}

} // namespace

bool eval_guard(const std::vector<term_ptr>& goals, bindings& b, trail& tr, int var_watermark) {
  trail::mark_t m = tr.mark();
  bool ok;
  try {
    ok = guard_solve(goals, 0, b, tr, var_watermark, m);
  } catch (const engine_error& e) {
    if (e.fault == engine_fault::instantiation || e.fault == engine_fault::type)
      ok = false;
    else {
      tr.undo_to(m, b);
      throw;
    }
  }
  tr.undo_to(m, b);
  return ok;
}

bool solve_builtin(const term_ptr& goal, bindings& b, trail& tr, const solution_sink& k) {
  term_ptr g = b.walk(goal);
  functor_key key = functor_of(g);

  if (key == functor_key{"true", 0}) return k();
  if (key == functor_key{"fail", 0}) return false;

  if (key == functor_key{"=", 2}) {
    trail::mark_t m = tr.mark();
    if (unify(g->args[0], g->args[1], b, tr)) {
      if (k()) return true;
    }
    tr.undo_to(m, b);
    return false;
  }
  if (key == functor_key{"==", 2}) {
    term_ptr a = b.resolve(g->args[0]);
    term_ptr c = b.resolve(g->args[1]);
    return term_compare(a, c) == 0 ? k() : false;
  }
  if (key == functor_key{"\\==", 2}) {
    term_ptr a = b.resolve(g->args[0]);
    term_ptr c = b.resolve(g->args[1]);
    return term_compare(a, c) != 0 ? k() : false;
  }
  if (key == functor_key{"is", 2}) {
    long long v = eval_arith(g->args[1], b);
    trail::mark_t m = tr.mark();
    if (unify(g->args[0], term::mk_int(v), b, tr)) {
      if (k()) return true;
    }
    tr.undo_to(m, b);
    return false;
  }
  if (key.arity == 2 &&
      (key.name == "<" || key.name == ">" || key.name == "=<" || key.name == ">=")) {
    long long x = eval_arith(g->args[0], b);
    long long y = eval_arith(g->args[1], b);
    bool ok = key.name == "<" ? x < y : key.name == ">" ? x > y : key.name == "=<" ? x <= y : x >= y;
    return ok ? k() : false;
  }
  if (key == functor_key{"number", 1}) {
    return b.walk(g->args[0])->is_int() ? k() : false;
  }
  if (key == functor_key{"member", 2}) {
    std::vector<term_ptr> items;
    if (!list_elements(g->args[1], b, items))
      throw engine_error(engine_fault::instantiation, "member/2 needs a proper list");
    for (const auto& item : items) {
      trail::mark_t m = tr.mark();
      if (unify(g->args[0], item, b, tr)) {
        if (k()) return true;
      }
      tr.undo_to(m, b);
    }
    return false;
  }
  if (key == functor_key{"sort", 2}) {
    std::vector<term_ptr> out;
    if (!sort_dedup_list(g->args[0], b, out))
      throw engine_error(engine_fault::instantiation, "sort/2 needs a proper list");
    trail::mark_t m = tr.mark();
    if (unify(g->args[1], vector_to_list(out), b, tr)) {
      if (k()) return true;
    }
    tr.undo_to(m, b);
    return false;
  }
  if (key == functor_key{"\\+", 1}) {
    // Outside guards \+ is rejected at load time; reaching here means a
    // guard-style check over the plain semantics.
    trail::mark_t m = tr.mark();
    bool found = solve_builtin(b.walk(g)->args[0], b, tr, []() { return true; });
    tr.undo_to(m, b);
    return found ? false : k();
  }
  throw engine_error(engine_fault::unknown_predicate,
                     "unknown built-in " + to_string(key));
}

bool eval_builtin(const term_ptr& goal, bindings& b, trail& tr) {
  return solve_builtin(goal, b, tr, []() { return true; });
}

} // namespace tchr
