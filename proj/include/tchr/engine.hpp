#pragma once

#include "tchr/builtins.hpp"
#include "tchr/program.hpp"
#include "tchr/term.hpp"

#include <iosfwd>
#include <memory>
#include <set>

namespace tchr {

struct engine_options {
  bool tabling = true;
  bool subsumption = true;
  bool projection = true;
  unsigned long long step_budget = 50'000'000;
  size_t max_answers_per_table = 1'000'000;
  bool debug_checks = false;
  bool keep_fire_log = false;
  std::ostream* trace = nullptr;
};

struct firing_stats {
  std::map<std::string, long long> rule_applications;
  long long total_applications = 0;
  long long propagation_applications = 0; // kept-heads-only rules
  long long introduce_events = 0;
  long long solve_events = 0;
  long long reactivate_events = 0;
  long long clause_resolutions = 0;
  unsigned long long steps = 0;
  // Only with keep_fire_log: (rule display name, matched ids) per application.
  std::vector<std::pair<std::string, std::vector<int>>> fire_log;
};

struct suspension {
  int id = 0;
  term_ptr constraint;
  functor_key functor;
  bool stored = false;
  bool removed = false;
  // Propagation-history slice: (rule index, ids of all heads in rule order).
  std::vector<std::pair<size_t, std::vector<int>>> history;
};
using susp_ptr = std::shared_ptr<suspension>;

struct encoded_store {
  store_encoding mode = store_encoding::goal;
  // goal mode: bare constraint terms.
  // suspension mode: susp(IdVar, Constraint, [hist(Rule,[IdVar...]),...]).
  std::vector<term_ptr> entries;
};

enum class table_status { fresh, evaluating, complete };

struct slg_answer {
  term_ptr args; // '$args'(...) tuple over answer-private variables
  encoded_store store;
  std::vector<term_ptr> canonical; // canonical entries ($-numbered variables)
  term_ptr canonical_args;
  std::string identity; // printed canonical (args, store) pair
  bool alive = true;
};

struct consumer_rec {
  size_t owner_table;           // SIZE_MAX = top level
  term_ptr call_goal;           // private copy of the original call
  term_ptr answer_template;     // owner's answer tuple at capture time
  std::vector<term_ptr> rest_goals;
  encoded_store caller_store;   // suspension-mode snapshot
  size_t consumed = 0;
};

struct slg_table {
  size_t index = 0;
  functor_key pred;
  const table_decl* decl = nullptr;
  term_ptr key_goal;   // live-variable instance of the abstracted call
  std::string key_str; // canonical key
  table_status status = table_status::fresh;
  std::vector<slg_answer> answers;
  std::vector<consumer_rec> consumers;
  std::set<size_t> depends_on;
  size_t alive_answer_count() const {
    size_t n = 0;
    for (const auto& a : answers)
      if (a.alive) ++n;
    return n;
  }
};

struct abstracted_call {
  term_ptr abstract_goal;
  std::vector<std::pair<term_ptr, term_ptr>> restore_unifications; // (fresh, original)
};

struct query_answer {
  std::vector<std::pair<std::string, term_ptr>> var_bindings; // query var name -> value
  std::vector<term_ptr> store_entries;                        // resolved, private vars
  std::vector<term_ptr> canonical_store;
  term_ptr args;
};

struct query_result {
  std::vector<query_answer> answers;
};

// One engine instance owns a CHR state, its tables and its statistics.
// Single-threaded; independent instances are fully isolated.
class engine {
public:
  engine(program p, engine_options opts = {});

  bindings& binds() { return binds_; }
  trail& get_trail() { return trail_; }
  const program& prog() const { return prog_; }
  firing_stats& stats() { return stats_; }
  const engine_options& options() const { return opts_; }
  void set_option_tabling(bool v) { opts_.tabling = v; }
  void set_option_subsumption(bool v) { opts_.subsumption = v; }
  void set_option_projection(bool v) { opts_.projection = v; }

  // --- chr-engine surface -------------------------------------------------
  // Runs goals left to right (built-ins, CHR constraints, plain predicates).
  // Tabled calls are not allowed on this surface; use run_query.
  bool run_goal_list(const std::vector<term_ptr>& goals);
  bool solve_builtin_goal(const term_ptr& c);     // Solve transition + wakeups
  bool introduce_and_activate(const term_ptr& c); // Introduce + Activate
  bool reactivate(const susp_ptr& s);
  bool unify_and_wake(const term_ptr& a, const term_ptr& b);

  std::vector<susp_ptr> live_suspensions() const;
  const std::set<std::pair<size_t, std::vector<int>>>& history() const { return history_; }
  void check_coherence() const; // throws std::logic_error on violation

  // --- store-codec surface ------------------------------------------------
  encoded_store encode_store(store_encoding mode);
  bool decode_store(const encoded_store& e);
  void empty_store();
  // Sort + dedup (default / "sort") or a user canonicalization predicate.
  std::vector<term_ptr> canonicalize(const std::vector<term_ptr>& entries,
                                     const std::optional<std::string>& canon);
  // Variant-normalized canonical pair for answer identity; `canon` empty means
  // raw (order-sensitive) form.
  std::pair<term_ptr, std::vector<term_ptr>> canonical_answer(
      const term_ptr& args, const std::vector<term_ptr>& entries,
      const std::optional<std::string>& canon);
  static std::string answer_identity(const term_ptr& canonical_args,
                                     const std::vector<term_ptr>& canonical_entries);

  // --- slg-engine surface -------------------------------------------------
  query_result run_query(const parsed_query& q);
  abstracted_call abstract_call(const term_ptr& goal, const table_decl& decl);
  const std::vector<std::unique_ptr<slg_table>>& tables() const { return tables_; }
  slg_table* find_table(const std::string& key) const;
  void dump_tables(std::ostream& out) const;
  void show_transform(std::ostream& out) const;

  // --- answer-opt surface -------------------------------------------------
  enum class insert_outcome { inserted, merged, rejected };
  insert_outcome insert_answer(slg_table& tbl, const term_ptr& args,
                               const std::vector<term_ptr>& store_entries);
  void del_answer(slg_table& tbl, size_t answer_idx);
  // Instrumentation for subsumption-faithfulness tests.
  struct subsumption_event {
    enum class kind { deleted_previous, rejected_new } k;
    size_t table;
    term_ptr args;
    std::vector<term_ptr> kept_entries;    // the store that covers
    std::vector<term_ptr> dropped_entries; // the store that is covered
  };
  std::vector<subsumption_event> subsumption_log;

  // Ground-cover helper: true iff decoding `store` and then unifying the
  // pairs in `valuation` succeeds (everything undone afterwards).
  bool covers_valuation(const encoded_store& store,
                        const std::vector<std::pair<term_ptr, term_ptr>>& valuation);

  size_t term_nodes_in_tables() const;
  // Delivery log for scheduling tests: (table, consumer, answer) triples.
  std::vector<std::tuple<size_t, size_t, size_t>> delivery_log;

private:
  struct goal_cell {
    term_ptr goal;
    std::shared_ptr<goal_cell> next;
  };
  using goal_list = std::shared_ptr<goal_cell>;
  static goal_list make_goal_list(const std::vector<term_ptr>& gs, goal_list tail = nullptr);

  struct exec_ctx {
    size_t owner_table = SIZE_MAX; // SIZE_MAX + !toplevel = plain context
    bool toplevel = false;
    bool in_chr_body = false;
    term_ptr answer_template; // set for toplevel and generator contexts
  };

  struct task {
    enum class kind { generate, resume } k;
    size_t table = 0;
    size_t consumer = 0;
    size_t answer = 0;
  };

  // Execution core.
  bool solve_goals(const goal_list& gs, const exec_ctx& ctx, const std::function<bool()>& k);
  bool solve_user(const term_ptr& g, const goal_list& rest, const exec_ctx& ctx,
                  const std::function<bool()>& k);
  bool emit_answer(const exec_ctx& ctx);
  void step();

  // CHR internals.
  void insert_suspension(const susp_ptr& s);
  void remove_suspension(const susp_ptr& s);
  void index_suspension_vars(const susp_ptr& s);
  bool wake_bound_since(trail::mark_t m);
  bool try_rules_for(const susp_ptr& s);
  bool try_rule_at(const chr_rule& rule, size_t rule_idx, size_t active_pos, const susp_ptr& s,
                   bool& active_died);
  void record_history(size_t rule_idx, const std::vector<susp_ptr>& heads);
  bool history_blocks(size_t rule_idx, const std::vector<susp_ptr>& heads) const;
  void trace_line(const std::string& s) const;

  // Tabling internals.
  bool capture_tabled_call(const term_ptr& g, const goal_list& rest, const exec_ctx& ctx);
  slg_table& ensure_table(const term_ptr& abstract_goal, const table_decl& decl);
  void run_task(const task& t);
  void run_generator(slg_table& tbl);
  void run_resume(slg_table& tbl, size_t consumer_idx, size_t answer_idx);
  void drive();
  void complete_tables();
  bool project_answer(const term_ptr& answer_template, const table_decl& decl);
  void record_toplevel_answer(const exec_ctx& ctx);
  void validate_decl_targets(const table_decl& d) const;

  // Answer-opt internals.
  insert_outcome insert_plain(slg_table& tbl, slg_answer&& ans);
  insert_outcome insert_with_subsumption(slg_table& tbl, slg_answer&& ans);
  insert_outcome insert_with_combination(slg_table& tbl, slg_answer&& ans, int depth);
  slg_answer seal_answer(slg_table& tbl, const term_ptr& args,
                         const std::vector<term_ptr>& entries);
  // Conjunction C0 /\ C1 via decode into a fresh context; nullopt = failed.
  std::optional<std::string> conjunction_identity(slg_table& tbl, const slg_answer& prev,
                                                  const slg_answer& next);
  bool run_user_predicate_query(const term_ptr& goal); // plain SLD, first solution

  program prog_;
  engine_options opts_;
  bindings binds_;
  trail trail_;

  // CHR store.
  std::vector<susp_ptr> store_order_; // insertion order, live + removed
  std::map<functor_key, std::vector<susp_ptr>> store_by_functor_;
  std::map<int, std::vector<susp_ptr>> store_by_var_;
  std::set<std::pair<size_t, std::vector<int>>> history_;
  int next_susp_id_ = 1;

  firing_stats stats_;

  // Tables.
  std::vector<std::unique_ptr<slg_table>> tables_;
  std::map<std::string, size_t> table_index_;
  std::vector<task> worklist_;

  // Current query.
  const parsed_query* current_query_ = nullptr;
  std::vector<query_answer> query_answers_;
  std::set<std::string> query_answer_keys_;

  friend struct engine_test_access;
};

} // namespace tchr
