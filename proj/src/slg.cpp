#include "tchr/engine.hpp"

#include <algorithm>
#include <ostream>
#include <sstream>

namespace tchr {

namespace {

term_ptr args_tuple(const term_ptr& goal) {
  term_ptr w = goal;
  if (w->is_compound()) return term::mk_compound("$args", w->args);
  return term::mk_atom("$args");
}

} // namespace

abstracted_call engine::abstract_call(const term_ptr& goal, const table_decl& decl) {
  term_ptr w = binds_.walk(goal);
  abstracted_call out;
  if (!w->is_compound()) {
    out.abstract_goal = w;
    return out;
  }
  std::vector<term_ptr> args;
  args.reserve(w->args.size());
  for (size_t i = 0; i < w->args.size(); ++i) {
    arg_mode m = i < decl.modes.size() ? decl.modes[i] : arg_mode::plain;
    if (m == arg_mode::chr) {
      term_ptr fresh = term::mk_var(binds_.fresh());
      out.restore_unifications.emplace_back(fresh, w->args[i]);
      args.push_back(fresh);
    } else {
      args.push_back(w->args[i]);
    }
  }
  out.abstract_goal = term::mk_compound(w->name, std::move(args));
  return out;
}

slg_table& engine::ensure_table(const term_ptr& abstract_goal, const table_decl& decl) {
  term_ptr resolved = binds_.resolve(abstract_goal);
  std::string key = term_to_string(variant_key(resolved, binds_), binds_);
  auto it = table_index_.find(key);
  if (it != table_index_.end()) return *tables_[it->second];

  auto tbl = std::make_unique<slg_table>();
  tbl->index = tables_.size();
  tbl->pred = functor_of(resolved);
  tbl->decl = &decl;
  tbl->key_str = key;
  // Live-variable instance used by the generator for clause resolution.
  bindings scratch = binds_; // cheap: vector copy, used only for renaming map
  tbl->key_goal = rename_apart(resolved, binds_);
  tbl->status = table_status::fresh;
  table_index_.emplace(key, tbl->index);
  tables_.push_back(std::move(tbl));
  slg_table& ref = *tables_.back();
  worklist_.push_back(task{task::kind::generate, ref.index, 0, 0});
  return ref;
}

slg_table* engine::find_table(const std::string& key) const {
  auto it = table_index_.find(key);
  return it == table_index_.end() ? nullptr : tables_[it->second].get();
}

bool engine::capture_tabled_call(const term_ptr& g, const goal_list& rest,
                                 const exec_ctx& ctx) {
  const table_decl& decl = prog_.table_decls.at(functor_of(binds_.walk(g)));
  validate_decl_targets(decl);
  abstracted_call abs = abstract_call(g, decl);
  slg_table& tbl = ensure_table(abs.abstract_goal, decl);
  if (ctx.owner_table != SIZE_MAX && ctx.owner_table != tbl.index)
    tables_[ctx.owner_table]->depends_on.insert(tbl.index);
  if (ctx.owner_table == tbl.index) tbl.depends_on.insert(tbl.index);

  // Snapshot the continuation: pending goals, the call itself, the owner's
  // answer template and the current store, all jointly renamed into a private
  // variable namespace so later backtracking cannot disturb them.
  std::vector<term_ptr> rest_goals;
  for (goal_list c = rest; c; c = c->next) rest_goals.push_back(c->goal);
  encoded_store snap = encode_store(store_encoding::suspension);

  std::vector<term_ptr> parts;
  parts.push_back(binds_.resolve(g));
  parts.push_back(ctx.answer_template ? binds_.resolve(ctx.answer_template)
                                      : term::mk_atom("$none"));
  for (auto& t : rest_goals) parts.push_back(binds_.resolve(t));
  for (auto& t : snap.entries) parts.push_back(binds_.resolve(t));
  term_ptr bundle = term::mk_compound("$snap", std::move(parts));
  bundle = rename_apart(bundle, binds_);

  consumer_rec c;
  c.owner_table = ctx.toplevel ? SIZE_MAX : ctx.owner_table;
  c.call_goal = bundle->args[0];
  c.answer_template = bundle->args[1];
  size_t off = 2;
  for (size_t i = 0; i < rest_goals.size(); ++i) c.rest_goals.push_back(bundle->args[off + i]);
  off += rest_goals.size();
  c.caller_store.mode = store_encoding::suspension;
  for (size_t i = 0; i < snap.entries.size(); ++i)
    c.caller_store.entries.push_back(bundle->args[off + i]);

  tbl.consumers.push_back(std::move(c));
  size_t ci = tbl.consumers.size() - 1;
  for (size_t ai = 0; ai < tbl.answers.size(); ++ai)
    if (tbl.answers[ai].alive)
      worklist_.push_back(task{task::kind::resume, tbl.index, ci, ai});
  return true;
}

void engine::run_generator(slg_table& tbl) {
  if (tbl.status == table_status::complete) return;
  tbl.status = table_status::evaluating;
  const std::vector<clause>* cs = prog_.clauses_of(tbl.pred);
  if (!cs) return; // no clauses: empty table, completes at drain
  for (const clause& c : *cs) {
    stats_.clause_resolutions++;
    step();
    trail::mark_t m = trail_.mark();
    std::map<int, term_ptr> var_map;
    term_ptr head = rename_apart(c.head, binds_, var_map);
    term_ptr call = rename_apart(tbl.key_goal, binds_);
    if (!unify(head, call, binds_, trail_)) {
      trail_.undo_to(m, binds_);
      continue;
    }
    std::vector<term_ptr> body;
    body.reserve(c.body.size());
    for (const auto& b : c.body) body.push_back(rename_apart(b, binds_, var_map));
    exec_ctx ctx;
    ctx.owner_table = tbl.index;
    ctx.answer_template = args_tuple(binds_.walk(call));
    solve_goals(make_goal_list(body), ctx, []() { return false; });
    trail_.undo_to(m, binds_);
  }
}

void engine::run_resume(slg_table& tbl, size_t consumer_idx, size_t answer_idx) {
  if (!tbl.answers[answer_idx].alive) return; // deleted before delivery
  consumer_rec& con = tbl.consumers[consumer_idx];
  const slg_answer& ans = tbl.answers[answer_idx];

  trail::mark_t m = trail_.mark();

  // Private copies for this resumption.
  std::vector<term_ptr> parts;
  parts.push_back(con.call_goal);
  parts.push_back(con.answer_template);
  for (const auto& t : con.rest_goals) parts.push_back(t);
  for (const auto& t : con.caller_store.entries) parts.push_back(t);
  term_ptr bundle = rename_apart(term::mk_compound("$snap", std::move(parts)), binds_);
  term_ptr call_goal = bundle->args[0];
  term_ptr tmpl = bundle->args[1];
  std::vector<term_ptr> rest;
  size_t off = 2;
  for (size_t i = 0; i < con.rest_goals.size(); ++i) rest.push_back(bundle->args[off + i]);
  off += con.rest_goals.size();
  encoded_store caller_store;
  caller_store.mode = store_encoding::suspension;
  for (size_t i = 0; i < con.caller_store.entries.size(); ++i)
    caller_store.entries.push_back(bundle->args[off + i]);

  std::vector<term_ptr> ans_parts;
  ans_parts.push_back(ans.args);
  for (const auto& t : ans.store.entries) ans_parts.push_back(t);
  term_ptr ans_bundle = rename_apart(term::mk_compound("$ans", std::move(ans_parts)), binds_);
  term_ptr ans_args = ans_bundle->args[0];
  encoded_store ans_store;
  ans_store.mode = ans.store.mode;
  for (size_t i = 1; i < ans_bundle->args.size(); ++i)
    ans_store.entries.push_back(ans_bundle->args[i]);

  // Abstract the renamed call: fresh variables at chr positions, with the
  // trailing restore unifications.
  abstracted_call abs = abstract_call(call_goal, *tbl.decl);

  con.consumed++;
  delivery_log.emplace_back(tbl.index, consumer_idx, answer_idx);

  bool ok = unify(args_tuple(binds_.walk(abs.abstract_goal)), ans_args, binds_, trail_);
  if (ok) ok = decode_store(caller_store);
  if (ok) ok = decode_store(ans_store);
  if (ok) {
    for (const auto& [fresh, orig] : abs.restore_unifications) {
      if (!unify_and_wake(fresh, orig)) {
        ok = false;
        break;
      }
    }
  }
  if (ok) {
    exec_ctx ctx;
    if (con.owner_table == SIZE_MAX) {
      ctx.toplevel = true;
    } else {
      ctx.owner_table = con.owner_table;
    }
    ctx.answer_template = tmpl;
    solve_goals(make_goal_list(rest), ctx, []() { return false; });
  }
  trail_.undo_to(m, binds_);
}

void engine::run_task(const task& t) {
  switch (t.k) {
    case task::kind::generate: run_generator(*tables_[t.table]); break;
    case task::kind::resume: run_resume(*tables_[t.table], t.consumer, t.answer); break;
  }
}

void engine::drive() {
  while (!worklist_.empty()) {
    task t = worklist_.back();
    worklist_.pop_back();
    run_task(t);
  }
}

// Completion: Tarjan SCCs over depends_on; SCCs come out children-first, so
// marking in emission order completes dependencies before dependents.
void engine::complete_tables() {
  size_t n = tables_.size();
  std::vector<int> idx(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<size_t> stack;
  int counter = 0;
  std::function<void(size_t)> strongconnect = [&](size_t v) {
    idx[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (size_t w : tables_[v]->depends_on) {
      if (idx[w] < 0) {
        strongconnect(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], idx[w]);
      }
    }
    if (low[v] == idx[v]) {
      for (;;) {
        size_t w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        if (tables_[w]->status == table_status::evaluating)
          tables_[w]->status = table_status::complete;
        if (w == v) break;
      }
    }
  };
  for (size_t v = 0; v < n; ++v)
    if (idx[v] < 0 && tables_[v]->status == table_status::evaluating) strongconnect(v);
}

bool engine::project_answer(const term_ptr& answer_template, const table_decl& decl) {
  if (!decl.projection || !opts_.projection) return true;
  std::vector<int> vars;
  collect_vars(answer_template, binds_, vars);
  std::vector<term_ptr> var_terms;
  for (int v : vars) var_terms.push_back(term::mk_var(v));
  term_ptr marker = term::mk_compound(*decl.projection, {vector_to_list(var_terms)});
  return introduce_and_activate(marker);
}

bool engine::emit_answer(const exec_ctx& ctx) {
  if (ctx.toplevel) {
    record_toplevel_answer(ctx);
    return true;
  }
  slg_table& tbl = *tables_[ctx.owner_table];
  trail::mark_t m = trail_.mark();
  if (!project_answer(ctx.answer_template, *tbl.decl)) {
    trail_.undo_to(m, binds_);
    return false;
  }
  encoded_store store = encode_store(tbl.decl->encoding);
  term_ptr args = binds_.resolve(ctx.answer_template);
  insert_outcome out = insert_answer(tbl, args, store.entries);
  trail_.undo_to(m, binds_); // projection effects are local to the emission
  if (out != insert_outcome::rejected &&
      tbl.alive_answer_count() > opts_.max_answers_per_table)
    throw engine_error(engine_fault::answer_budget,
                       "answer budget exceeded for table " + tbl.key_str);
  return true;
}

void engine::record_toplevel_answer(const exec_ctx& ctx) {
  query_answer qa;
  term_ptr tmpl = binds_.resolve(ctx.answer_template);
  encoded_store snapshot = encode_store(store_encoding::goal);
  auto [cargs, centries] = canonical_answer(tmpl, snapshot.entries, std::string("sort"));
  std::string key = answer_identity(cargs, centries);
  if (!query_answer_keys_.insert(key).second) return;
  qa.args = tmpl;
  qa.store_entries = snapshot.entries;
  qa.canonical_store = centries;
  if (current_query_) {
    // Template is '$q'(V1,...,Vk) over the query variables, in source order.
    term_ptr w = binds_.walk(tmpl);
    for (size_t i = 0; i < current_query_->var_order.size(); ++i) {
      term_ptr val = w->is_compound() && i < w->args.size() ? w->args[i] : nullptr;
      if (val) qa.var_bindings.emplace_back(current_query_->var_order[i], val);
    }
  }
  query_answers_.push_back(std::move(qa));
}

void engine::validate_decl_targets(const table_decl& d) const {
  if (d.projection) {
    bool has_rule = false;
    for (const auto& r : prog_.rules) {
      for (const auto& hs : {r.kept_heads, r.removed_heads})
        for (const auto& h : hs)
          if (functor_of(h).name == *d.projection) has_rule = true;
    }
    if (!has_rule)
      throw load_error("projection constraint " + *d.projection + " has no rules");
  }
  if (d.answer_combination && !prog_.clauses_of({*d.answer_combination, 3}))
    throw load_error("answer_combination predicate " + *d.answer_combination +
                     "/3 is not defined");
  if (d.canonical_form && *d.canonical_form != "sort" &&
      !prog_.clauses_of({*d.canonical_form, 2}))
    throw load_error("canonical_form predicate " + *d.canonical_form + "/2 is not defined");
}

query_result engine::run_query(const parsed_query& q) {
  for (const auto& [k, d] : prog_.table_decls) {
    (void)k;
    if (opts_.tabling) validate_decl_targets(d);
  }
  current_query_ = &q;
  query_answers_.clear();
  query_answer_keys_.clear();
  delivery_log.clear();

  std::vector<term_ptr> tmpl_args;
  for (const auto& name : q.var_order) tmpl_args.push_back(term::mk_var(q.var_ids.at(name)));
  exec_ctx ctx;
  ctx.toplevel = true;
  ctx.answer_template = term::mk_compound("$q", std::move(tmpl_args));

  trail::mark_t m = trail_.mark();
  try {
    solve_goals(make_goal_list(q.goals), ctx, []() { return false; });
    trail_.undo_to(m, binds_);
    drive();
  } catch (...) {
    current_query_ = nullptr;
    throw;
  }
  complete_tables();
  current_query_ = nullptr;

  query_result out;
  out.answers = std::move(query_answers_);
  return out;
}

void engine::dump_tables(std::ostream& outs) const {
  for (const auto& tbl : tables_) {
    const char* st = tbl->status == table_status::complete     ? "complete"
                     : tbl->status == table_status::evaluating ? "evaluating"
                                                               : "fresh";
    outs << "table " << tbl->key_str << ": status=" << st
         << " answers=" << tbl->alive_answer_count() << "\n";
    for (const auto& a : tbl->answers) {
      if (!a.alive) continue;
      outs << "  " << a.identity << "\n";
    }
  }
}

void engine::show_transform(std::ostream& outs) const {
  for (const auto& [k, d] : prog_.table_decls) {
    std::string lowered;
    std::vector<std::string> args, abs_args, restores;
    for (int i = 0; i < k.arity; ++i) {
      std::string v = "X" + std::to_string(i + 1);
      args.push_back(v);
      if (i < static_cast<int>(d.modes.size()) && d.modes[i] == arg_mode::chr) {
        abs_args.push_back(v + "a");
        restores.push_back(v + "a = " + v);
      } else {
        abs_args.push_back(v);
      }
    }
    auto join = [](const std::vector<std::string>& xs) {
      std::string s;
      for (size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + xs[i];
      return s;
    };
    std::string head = k.name + (k.arity ? "(" + join(args) + ")" : "");
    std::string abs = "tabled_" + k.name + "(" + join(abs_args) +
                      (k.arity ? "," : "") + "AnswerStoreEncoding)";
    outs << head << " :-\n"
         << "    encode_store(StoreEncoding),\n"
         << "    empty_store,\n"
         << "    " << abs << ",\n"
         << "    decode_store(StoreEncoding),\n"
         << "    decode_store(AnswerStoreEncoding)";
    for (const auto& r : restores) outs << ",\n    " << r;
    outs << ".\n\n";
    outs << ":- table tabled_" << k.name << "/" << (k.arity + 1) << ".\n\n";
    outs << "tabled_" << k.name << "(" << join(abs_args) << (k.arity ? "," : "")
         << "AnswerStoreEncoding) :-\n"
         << "    original_" << k.name << "(" << join(abs_args) << "),\n";
    if (d.projection)
      outs << "    " << *d.projection << "([" << join(abs_args) << "]),\n";
    outs << "    encode_store(AnswerStoreEncoding),\n"
         << "    empty_store.\n\n";
    outs << "original_" << head.substr(k.name.size() ? 0 : 0) << " :- ... .\n\n";
  }
}

} // namespace tchr
