#include "tchr/engine.hpp"

#include <algorithm>
#include <sstream>

namespace tchr {

encoded_store engine::encode_store(store_encoding mode) {
  encoded_store e;
  e.mode = mode;
  std::vector<susp_ptr> live;
  for (const auto& s : store_order_)
    if (s->stored && !s->removed) live.push_back(s);

  if (mode == store_encoding::goal) {
    for (const auto& s : live) e.entries.push_back(binds_.resolve(s->constraint));
    return e;
  }

  std::set<int> live_ids;
  for (const auto& s : live) live_ids.insert(s->id);
  // Shared placeholder variables, one per live suspension. They stay unbound;
  // decoding maps them to fresh identifiers.
  std::map<int, term_ptr> placeholder;
  for (const auto& s : live) placeholder[s->id] = term::mk_var(binds_.fresh());

  for (const auto& s : live) {
    std::vector<term_ptr> hist;
    for (const auto& [rule_idx, ids] : s->history) {
      bool all_live = true;
      for (int id : ids)
        if (!live_ids.count(id)) all_live = false;
      if (!all_live) continue; // entries naming removed constraints are dropped
      std::vector<term_ptr> id_terms;
      for (int id : ids) id_terms.push_back(placeholder[id]);
      hist.push_back(term::mk_compound(
          "hist", {term::mk_atom(prog_.rules[rule_idx].display_name()),
                   vector_to_list(id_terms)}));
    }
    e.entries.push_back(term::mk_compound(
        "susp",
        {placeholder[s->id], binds_.resolve(s->constraint), vector_to_list(hist)}));
  }
  return e;
}

bool engine::decode_store(const encoded_store& e) {
  if (e.mode == store_encoding::goal) {
    for (const auto& entry : e.entries) {
      trail::mark_t m = trail_.mark();
      if (!introduce_and_activate(entry)) {
        trail_.undo_to(m, binds_);
        return false;
      }
    }
    return true;
  }

  // Pass 1: assign fresh identifiers to the placeholder variables.
  std::map<int, int> fresh_ids; // placeholder var -> new suspension id
  struct pending {
    int id;
    term_ptr constraint;
    std::vector<std::pair<size_t, std::vector<int>>> history;
  };
  std::vector<pending> ps;
  std::map<std::string, size_t> rule_by_name;
  for (size_t i = 0; i < prog_.rules.size(); ++i)
    rule_by_name[prog_.rules[i].display_name()] = i;

  for (const auto& entry : e.entries) {
    term_ptr w = binds_.walk(entry);
    if (!(w->is_compound() && w->name == "susp" && w->args.size() == 3))
      throw load_error("malformed suspension encoding entry");
    term_ptr idv = binds_.walk(w->args[0]);
    if (!idv->is_var()) throw load_error("suspension encoding id is not a placeholder");
    int nid = next_susp_id_++;
    trail_.push_undo([this]() { next_susp_id_--; });
    fresh_ids[idv->var] = nid;
    ps.push_back(pending{nid, w->args[1], {}});
  }
  size_t i = 0;
  for (const auto& entry : e.entries) {
    term_ptr w = binds_.walk(entry);
    std::vector<term_ptr> hist;
    list_elements(w->args[2], binds_, hist);
    for (const auto& h : hist) {
      term_ptr hw = binds_.walk(h);
      if (!(hw->is_compound() && hw->name == "hist" && hw->args.size() == 2))
        throw load_error("malformed history entry in suspension encoding");
      term_ptr rn = binds_.walk(hw->args[0]);
      auto rit = rule_by_name.find(rn->name);
      if (rit == rule_by_name.end()) continue; // rule no longer present
      std::vector<term_ptr> idts;
      list_elements(hw->args[1], binds_, idts);
      std::vector<int> ids;
      bool ok = true;
      for (const auto& idt : idts) {
        term_ptr iw = binds_.walk(idt);
        if (iw->is_var() && fresh_ids.count(iw->var))
          ids.push_back(fresh_ids[iw->var]);
        else
          ok = false;
      }
      if (ok) ps[i].history.emplace_back(rit->second, ids);
    }
    ++i;
  }

  // Pass 2: insert with history, then reactivate in id order.
  std::vector<susp_ptr> inserted;
  for (auto& p : ps) {
    susp_ptr s = std::make_shared<suspension>();
    s->id = p.id;
    s->constraint = binds_.resolve(p.constraint);
    s->functor = functor_of(binds_.walk(s->constraint));
    s->history = std::move(p.history);
    insert_suspension(s);
    for (const auto& [rule_idx, ids] : s->history) {
      auto key = std::make_pair(rule_idx, ids);
      if (history_.insert(key).second)
        trail_.push_undo([this, key]() { history_.erase(key); });
    }
    inserted.push_back(s);
  }
  for (const auto& s : inserted) {
    if (s->removed || !s->stored) continue;
    if (!reactivate(s)) return false;
  }
  return true;
}

void engine::empty_store() {
  auto order = std::move(store_order_);
  auto by_functor = std::move(store_by_functor_);
  auto by_var = std::move(store_by_var_);
  auto hist = std::move(history_);
  store_order_.clear();
  store_by_functor_.clear();
  store_by_var_.clear();
  history_.clear();
  trail_.push_undo([this, order = std::move(order), by_functor = std::move(by_functor),
                    by_var = std::move(by_var), hist = std::move(hist)]() mutable {
    store_order_ = std::move(order);
    store_by_functor_ = std::move(by_functor);
    store_by_var_ = std::move(by_var);
    history_ = std::move(hist);
  });
}

std::vector<term_ptr> engine::canonicalize(const std::vector<term_ptr>& entries,
                                           const std::optional<std::string>& canon) {
  if (canon && *canon != "sort") {
    // User canonicalization predicate: canon(Entries, Out).
    functor_key k{*canon, 2};
    if (!prog_.clauses_of(k))
      throw engine_error(engine_fault::unknown_predicate,
                         "canonical_form predicate " + to_string(k) + " is not defined");
    std::vector<term_ptr> resolved;
    for (const auto& t : entries) resolved.push_back(binds_.resolve(t));
    term_ptr out_var = term::mk_var(binds_.fresh());
    term_ptr goal = term::mk_compound(*canon, {vector_to_list(resolved), out_var});
    trail::mark_t m = trail_.mark();
    std::vector<term_ptr> out;
    if (run_user_predicate_query(goal)) {
      list_elements(out_var, binds_, out);
      for (auto& t : out) t = binds_.resolve(t);
    } else {
      out = resolved; // canonicalizer declined; keep raw form
    }
    trail_.undo_to(m, binds_);
    return out;
  }
  // Default: sort by the total term order with duplicate removal.
  std::vector<term_ptr> out;
  for (const auto& t : entries) out.push_back(binds_.resolve(t));
  std::sort(out.begin(), out.end(),
            [](const term_ptr& a, const term_ptr& b) { return term_compare(a, b) < 0; });
  out.erase(std::unique(out.begin(), out.end(),
                        [](const term_ptr& a, const term_ptr& b) {
                          return term_compare(a, b) == 0;
                        }),
            out.end());
  return out;
}

std::pair<term_ptr, std::vector<term_ptr>> engine::canonical_answer(
    const term_ptr& args, const std::vector<term_ptr>& entries,
    const std::optional<std::string>& canon) {
  std::vector<term_ptr> es;
  if (canon) {
    es = canonicalize(entries, canon);
  } else {
    for (const auto& t : entries) es.push_back(binds_.resolve(t));
  }
  // Number variables starting from the answer arguments, then normalize.
  std::map<int, int> numbering;
  term_ptr cargs = variant_key(args, binds_, numbering);
  for (auto& t : es) t = variant_key(t, binds_, numbering);
  if (canon) {
    // Entry order is canonical (sorted); a second pass pins local-variable
    // numbers that depended on the pre-sort order.
    std::sort(es.begin(), es.end(),
              [](const term_ptr& a, const term_ptr& b) { return term_compare(a, b) < 0; });
    std::map<int, int> renum;
    bindings empty;
    cargs = variant_key(cargs, empty, renum);
    for (auto& t : es) t = variant_key(t, empty, renum);
    std::sort(es.begin(), es.end(),
              [](const term_ptr& a, const term_ptr& b) { return term_compare(a, b) < 0; });
    es.erase(std::unique(es.begin(), es.end(),
                         [](const term_ptr& a, const term_ptr& b) {
                           return term_compare(a, b) == 0;
                         }),
             es.end());
  }
  return {cargs, es};
}

std::string engine::answer_identity(const term_ptr& canonical_args,
                                    const std::vector<term_ptr>& canonical_entries) {
  bindings empty;
  std::ostringstream out;
  out << term_to_string(canonical_args, empty) << " | ";
  for (size_t i = 0; i < canonical_entries.size(); ++i) {
    if (i) out << ", ";
    out << term_to_string(canonical_entries[i], empty);
  }
  return out.str();
}

size_t engine::term_nodes_in_tables() const {
  size_t n = 0;
  for (const auto& tbl : tables_)
    for (const auto& a : tbl->answers) {
      if (!a.alive) continue;
      n += term_node_count(a.args);
      for (const auto& t : a.store.entries) n += term_node_count(t);
    }
  return n;
}

} // namespace tchr
