#include "tchr/engine.hpp"

#include <algorithm>
#include <cassert>
#include <ostream>
#include <sstream>

namespace tchr {

engine::engine(program p, engine_options opts) : prog_(std::move(p)), opts_(opts) {
  prog_.index_rules();
  stats_.fire_log.clear();
}

void engine::step() {
  if (++stats_.steps > opts_.step_budget)
    throw engine_error(engine_fault::step_budget, "step budget exceeded");
}

void engine::trace_line(const std::string& s) const {
  if (opts_.trace) *opts_.trace << s << "\n";
}

engine::goal_list engine::make_goal_list(const std::vector<term_ptr>& gs, goal_list tail) {
  goal_list head = std::move(tail);
  for (auto it = gs.rbegin(); it != gs.rend(); ++it)
    head = std::make_shared<goal_cell>(goal_cell{*it, head});
  return head;
}

// ---------------------------------------------------------------------------
// CHR store maintenance
// ---------------------------------------------------------------------------

void engine::index_suspension_vars(const susp_ptr& s) {
  std::vector<int> vars;
  collect_vars(s->constraint, binds_, vars);
  for (int v : vars) {
    auto& bucket = store_by_var_[v];
    if (std::find_if(bucket.begin(), bucket.end(),
                     [&](const susp_ptr& x) { return x->id == s->id; }) != bucket.end())
      continue;
    bucket.push_back(s);
    trail_.push_undo([this, v]() {
      auto it = store_by_var_.find(v);
      if (it != store_by_var_.end()) {
        it->second.pop_back();
        if (it->second.empty()) store_by_var_.erase(it);
      }
    });
  }
}

void engine::insert_suspension(const susp_ptr& s) {
  s->stored = true;
  s->removed = false;
  store_order_.push_back(s);
  store_by_functor_[s->functor].push_back(s);
  trail_.push_undo([this, s]() {
    store_order_.pop_back();
    auto& bucket = store_by_functor_[s->functor];
    bucket.pop_back();
    if (bucket.empty()) store_by_functor_.erase(s->functor);
    s->stored = false;
  });
  index_suspension_vars(s);
}

void engine::remove_suspension(const susp_ptr& s) {
  assert(s->stored && !s->removed);
  s->removed = true;
  trail_.push_undo([s]() { s->removed = false; });
}

std::vector<susp_ptr> engine::live_suspensions() const {
  std::vector<susp_ptr> out;
  for (const auto& s : store_order_)
    if (s->stored && !s->removed) out.push_back(s);
  return out;
}

void engine::check_coherence() const {
  for (const auto& s : store_order_) {
    if (!s->stored || s->removed) continue;
    std::vector<int> vars;
    collect_vars(s->constraint, binds_, vars);
    for (int v : vars) {
      auto it = store_by_var_.find(v);
      bool found = false;
      if (it != store_by_var_.end())
        for (const auto& x : it->second)
          if (x->id == s->id) found = true;
      if (!found)
        throw std::logic_error("coherence: unbound var _" + std::to_string(v) +
                               " of suspension #" + std::to_string(s->id) + " not indexed");
    }
  }
  for (const auto& [v, bucket] : store_by_var_) {
    for (const auto& s : bucket) {
      if (!s->stored || s->removed) continue;
      if (binds_.is_bound(v)) continue; // bucket not yet swept for this var
      std::vector<int> vars;
      collect_vars(s->constraint, binds_, vars);
      if (std::find(vars.begin(), vars.end(), v) == vars.end())
        throw std::logic_error("coherence: index entry _" + std::to_string(v) +
                               " -> #" + std::to_string(s->id) + " is stale");
    }
  }
}

// ---------------------------------------------------------------------------
// Solve transition: built-in execution plus wake-up of affected suspensions
// ---------------------------------------------------------------------------

bool engine::wake_bound_since(trail::mark_t m) {
  std::vector<int> vars = trail_.vars_bound_since(m);
  if (vars.empty()) return true;
  std::vector<susp_ptr> to_wake;
  std::set<int> seen;
  for (int v : vars) {
    auto it = store_by_var_.find(v);
    if (it == store_by_var_.end()) continue;
    std::vector<susp_ptr> bucket = it->second;
    // The variable is bound now; retire its bucket (undo restores it).
    store_by_var_.erase(it);
    trail_.push_undo([this, v, bucket]() { store_by_var_[v] = bucket; });
    for (const auto& s : bucket)
      if (s->stored && !s->removed && seen.insert(s->id).second) to_wake.push_back(s);
  }
  std::sort(to_wake.begin(), to_wake.end(),
            [](const susp_ptr& a, const susp_ptr& b) { return a->id < b->id; });
  for (const auto& s : to_wake) {
    if (s->removed || !s->stored) continue;
    if (!reactivate(s)) return false;
  }
  return true;
}

bool engine::solve_builtin_goal(const term_ptr& c) {
  stats_.solve_events++;
  trace_line("SOLVE " + term_to_string(c, binds_));
  trail::mark_t m = trail_.mark();
  if (!eval_builtin(c, binds_, trail_)) {
    trail_.undo_to(m, binds_);
    return false;
  }
  if (!wake_bound_since(m)) {
    trail_.undo_to(m, binds_);
    return false;
  }
  return true;
}

bool engine::unify_and_wake(const term_ptr& a, const term_ptr& b) {
  trail::mark_t m = trail_.mark();
  if (!unify(a, b, binds_, trail_)) return false;
  if (!wake_bound_since(m)) {
    trail_.undo_to(m, binds_);
    return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Introduce / Apply / Reactivate
// ---------------------------------------------------------------------------

bool engine::history_blocks(size_t rule_idx, const std::vector<susp_ptr>& heads) const {
  std::vector<int> ids;
  ids.reserve(heads.size());
  for (const auto& h : heads) ids.push_back(h->id);
  return history_.count({rule_idx, ids}) > 0;
}

void engine::record_history(size_t rule_idx, const std::vector<susp_ptr>& heads) {
  std::vector<int> ids;
  ids.reserve(heads.size());
  for (const auto& h : heads) ids.push_back(h->id);
  auto key = std::make_pair(rule_idx, ids);
  history_.insert(key);
  trail_.push_undo([this, key]() { history_.erase(key); });
  for (const auto& h : heads) {
    h->history.emplace_back(rule_idx, ids);
    susp_ptr hs = h;
    trail_.push_undo([hs]() { hs->history.pop_back(); });
  }
}

namespace {
struct body_failure {};
} // namespace

// One committed-choice attempt cycle for `rule` with the active constraint at
// `active_pos`. Fires as long as fresh partner combinations exist; each fire
// commits (removed heads deleted, body run) and the search restarts with a
// fresh renaming. Fired rule variables stay bound; they are unreachable
// afterwards. Only failed attempts are rewound. Returns false via
// body_failure when a body fails (committed choice, activation fails).
bool engine::try_rule_at(const chr_rule& rule, size_t rule_idx, size_t active_pos,
                         const susp_ptr& s, bool& active_died) {
  const size_t n_kept = rule.kept_heads.size();
  const size_t n_heads = n_kept + rule.removed_heads.size();
  auto head_term = [&](size_t i) -> const term_ptr& {
    return i < n_kept ? rule.kept_heads[i] : rule.removed_heads[i - n_kept];
  };

  bool fired_any = false;
  for (;;) {
    if (s->removed || !s->stored) {
      active_died = true;
      return fired_any;
    }
    step();
    int watermark = binds_.next_var();
    std::map<int, term_ptr> var_map;
    std::vector<term_ptr> heads(n_heads);
    for (size_t i = 0; i < n_heads; ++i) heads[i] = rename_apart(head_term(i), binds_, var_map);
    std::vector<term_ptr> guard, body;
    guard.reserve(rule.guard.size());
    body.reserve(rule.body.size());
    for (const auto& g : rule.guard) guard.push_back(rename_apart(g, binds_, var_map));
    for (const auto& g : rule.body) body.push_back(rename_apart(g, binds_, var_map));

    std::vector<susp_ptr> chosen(n_heads);
    chosen[active_pos] = s;

    // Depth-first partner assignment; fires at most once per attempt.
    std::function<bool(size_t)> assign = [&](size_t pos) -> bool {
      while (pos < n_heads && pos == active_pos) ++pos;
      if (pos >= n_heads) {
        if (!eval_guard(guard, binds_, trail_, watermark)) return false;
        if (rule.is_propagation()) {
          if (history_blocks(rule_idx, chosen)) return false;
          record_history(rule_idx, chosen);
        }
        stats_.total_applications++;
        if (rule.is_propagation()) stats_.propagation_applications++;
        stats_.rule_applications[rule.display_name()]++;
        if (opts_.keep_fire_log) {
          std::vector<int> ids;
          for (const auto& h : chosen) ids.push_back(h->id);
          stats_.fire_log.emplace_back(rule.display_name(), ids);
        }
        if (opts_.trace) {
          std::string ids;
          for (size_t i = 0; i < chosen.size(); ++i)
            ids += (i ? "," : "") + std::to_string(chosen[i]->id);
          trace_line("APPLY " + rule.display_name() + " [" + ids + "]");
        }
        for (size_t i = n_kept; i < n_heads; ++i) remove_suspension(chosen[i]);
        bool body_ok = solve_goals(make_goal_list(body),
                                   exec_ctx{SIZE_MAX, false, true, nullptr},
                                   []() { return true; });
        if (!body_ok) throw body_failure{};
        if (opts_.debug_checks) check_coherence();
        return true;
      }
      auto bucket_it = store_by_functor_.find(functor_of(head_term(pos)));
      if (bucket_it == store_by_functor_.end()) return false;
      std::vector<susp_ptr> candidates = bucket_it->second; // snapshot, oldest first
      for (const auto& cand : candidates) {
        if (!cand->stored || cand->removed) continue;
        bool used = false;
        for (size_t i = 0; i < n_heads; ++i)
          if (chosen[i] && chosen[i]->id == cand->id) used = true;
        if (used) continue;
        trail::mark_t m = trail_.mark();
        if (!match(heads[pos], cand->constraint, binds_, trail_, watermark)) continue;
        chosen[pos] = cand;
        if (assign(pos + 1)) return true; // committed, keep bindings
        chosen[pos] = nullptr;
        trail_.undo_to(m, binds_);
      }
      return false;
    };

    trail::mark_t attempt_mark = trail_.mark();
    if (!match(heads[active_pos], s->constraint, binds_, trail_, watermark)) {
      trail_.undo_to(attempt_mark, binds_);
      return fired_any;
    }
    if (!assign(0)) {
      trail_.undo_to(attempt_mark, binds_);
      return fired_any;
    }
    fired_any = true;
    // Loop: further combinations are found by a fresh search. Removed
    // partners and the propagation history prevent refiring on old ones.
  }
}

bool engine::try_rules_for(const susp_ptr& s) {
  auto rules_it = prog_.rules_by_functor.find(s->functor);
  if (rules_it == prog_.rules_by_functor.end()) return true;
  for (size_t rule_idx : rules_it->second) {
    const chr_rule& rule = prog_.rules[rule_idx];
    const size_t n_kept = rule.kept_heads.size();
    const size_t n_heads = n_kept + rule.removed_heads.size();
    for (size_t pos = 0; pos < n_heads; ++pos) {
      const term_ptr& h =
          pos < n_kept ? rule.kept_heads[pos] : rule.removed_heads[pos - n_kept];
      if (functor_of(h) != s->functor) continue;
      if (s->removed || !s->stored) return true;
      bool active_died = false;
      try {
        try_rule_at(rule, rule_idx, pos, s, active_died);
      } catch (const body_failure&) {
        return false;
      }
      if (active_died || s->removed) return true;
    }
  }
  return true;
}

bool engine::introduce_and_activate(const term_ptr& c) {
  term_ptr w = binds_.walk(c);
  functor_key k = functor_of(w);
  stats_.introduce_events++;
  susp_ptr s = std::make_shared<suspension>();
  s->id = next_susp_id_++;
  trail_.push_undo([this]() { next_susp_id_--; });
  s->constraint = w;
  s->functor = k;
  trace_line("INTRODUCE " + term_to_string(w, binds_) + "#" + std::to_string(s->id));
  insert_suspension(s);
  bool ok = try_rules_for(s);
  if (opts_.debug_checks && ok) check_coherence();
  return ok;
}

bool engine::reactivate(const susp_ptr& s) {
  if (!s->stored || s->removed) return true;
  stats_.reactivate_events++;
  trace_line("REACTIVATE " + term_to_string(s->constraint, binds_) + "#" +
             std::to_string(s->id));
  // Binding a variable to a partial structure can expose new variables.
  index_suspension_vars(s);
  return try_rules_for(s);
}

// ---------------------------------------------------------------------------
// Goal execution
// ---------------------------------------------------------------------------

bool engine::solve_goals(const goal_list& gs, const exec_ctx& ctx,
                         const std::function<bool()>& k) {
  if (!gs) {
    if (ctx.toplevel || ctx.owner_table != SIZE_MAX) {
      if (!emit_answer(ctx)) return false;
    }
    return k();
  }
  step();
  term_ptr g = binds_.walk(gs->goal);
  switch (classify_goal(g, prog_, binds_)) {
    case goal_class::builtin: {
      if (g->is_compound() && g->name == "\\+")
        throw load_error("\\+ is only allowed in CHR guards");
      trail::mark_t m = trail_.mark();
      bool stop = solve_builtin(g, binds_, trail_, [&]() {
        if (!wake_bound_since(m)) return false;
        return solve_goals(gs->next, ctx, k);
      });
      if (!stop) trail_.undo_to(m, binds_);
      return stop;
    }
    case goal_class::chr_constraint: {
      trail::mark_t m = trail_.mark();
      if (!introduce_and_activate(g)) {
        trail_.undo_to(m, binds_);
        return false;
      }
      if (solve_goals(gs->next, ctx, k)) return true;
      trail_.undo_to(m, binds_);
      return false;
    }
    case goal_class::user:
      return solve_user(g, gs->next, ctx, k);
  }
  return false;
}

bool engine::solve_user(const term_ptr& g, const goal_list& rest, const exec_ctx& ctx,
                        const std::function<bool()>& k) {
  functor_key key = functor_of(g);
  if (opts_.tabling && prog_.is_tabled(key)) {
    if (ctx.in_chr_body)
      throw load_error("tabled call to " + to_string(key) + " inside a CHR rule body");
    if (ctx.owner_table == SIZE_MAX && !ctx.toplevel)
      throw load_error("tabled call to " + to_string(key) + " outside a query context");
    capture_tabled_call(g, rest, ctx);
    return false; // answers arrive through scheduled resumptions
  }
  const std::vector<clause>* cs = prog_.clauses_of(key);
  if (!cs) {
    if (prog_.is_tabled(key)) return false; // tabled, no clauses, tabling off
    throw engine_error(engine_fault::unknown_predicate,
                       "unknown predicate " + to_string(key));
  }
  for (const clause& c : *cs) {
    step();
    trail::mark_t m = trail_.mark();
    std::map<int, term_ptr> var_map;
    term_ptr head = rename_apart(c.head, binds_, var_map);
    if (!unify(head, g, binds_, trail_)) {
      trail_.undo_to(m, binds_);
      continue;
    }
    if (!wake_bound_since(m)) {
      trail_.undo_to(m, binds_);
      continue;
    }
    std::vector<term_ptr> body;
    body.reserve(c.body.size());
    for (const auto& b : c.body) body.push_back(rename_apart(b, binds_, var_map));
    if (solve_goals(make_goal_list(body, rest), ctx, k)) return true;
    trail_.undo_to(m, binds_);
  }
  return false;
}

bool engine::run_goal_list(const std::vector<term_ptr>& goals) {
  exec_ctx ctx;
  trail::mark_t m = trail_.mark();
  bool ok = solve_goals(make_goal_list(goals), ctx, []() { return true; });
  if (!ok) trail_.undo_to(m, binds_);
  return ok;
}

} // namespace tchr
