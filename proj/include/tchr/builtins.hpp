#pragma once

#include "tchr/program.hpp"
#include "tchr/term.hpp"

#include <functional>

namespace tchr {

enum class engine_fault {
  instantiation,
  type,
  unknown_predicate,
  step_budget,
  answer_budget,
};

struct engine_error : std::runtime_error {
  engine_fault fault;
  engine_error(engine_fault f, std::string msg)
      : std::runtime_error(std::move(msg)), fault(f) {}
};

enum class goal_class { builtin, chr_constraint, user };

goal_class classify_goal(const term_ptr& g, const program& p, const bindings& b);
bool is_builtin(const functor_key& k);

// Integer arithmetic over +, -, *, //, min, max.
long long eval_arith(const term_ptr& t, const bindings& b);

// Enumerates the solutions of one built-in goal, calling `k` for each with
// bindings in place; returns true iff some call to `k` returned true (stop).
// Bindings made for a rejected solution are undone before the next one.
// `=` is full unification, member/2 backtracks over list elements.
using solution_sink = std::function<bool()>;
bool solve_builtin(const term_ptr& goal, bindings& b, trail& tr, const solution_sink& k);

// Deterministic convenience wrapper: first solution wins, bindings kept.
bool eval_builtin(const term_ptr& goal, bindings& b, trail& tr);

// Guard check: the conjunction holds iff it has a solution that leaves every
// variable older than `var_watermark` unbound. Solutions that instantiate such
// a variable are skipped; \+ inverts under the same rule. All bindings are
// undone before returning, and instantiation errors read as failure.
bool eval_guard(const std::vector<term_ptr>& goals, bindings& b, trail& tr, int var_watermark);

bool sort_dedup_list(const term_ptr& list, const bindings& b, std::vector<term_ptr>& out);
term_ptr vector_to_list(const std::vector<term_ptr>& items);
bool list_elements(const term_ptr& list, const bindings& b, std::vector<term_ptr>& out);

} // namespace tchr
