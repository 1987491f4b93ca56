#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tchr {

// First-order terms: variables, atoms, integers, compounds.
// Terms are immutable and freely shared; all mutation lives in `bindings`.
class term;
using term_ptr = std::shared_ptr<const term>;

enum class term_kind { var, atom, integer, compound };

class term {
public:
  term_kind kind;
  int var;                    // term_kind::var
  long long int_value;        // term_kind::integer
  std::string name;           // atom / compound functor
  std::vector<term_ptr> args; // compound only, arity >= 1

  static term_ptr mk_var(int id);
  static term_ptr mk_atom(std::string name);
  static term_ptr mk_int(long long v);
  // A compound with no arguments collapses to an atom.
  static term_ptr mk_compound(std::string functor, std::vector<term_ptr> args);

  bool is_var() const { return kind == term_kind::var; }
  bool is_atom() const { return kind == term_kind::atom; }
  bool is_int() const { return kind == term_kind::integer; }
  bool is_compound() const { return kind == term_kind::compound; }
  bool is_atom_named(const std::string& n) const { return is_atom() && name == n; }
  int arity() const { return is_compound() ? static_cast<int>(args.size()) : 0; }
};

// name/arity pair identifying a predicate or constraint symbol.
struct functor_key {
  std::string name;
  int arity = 0;
  bool operator==(const functor_key&) const = default;
  auto operator<=>(const functor_key&) const = default;
};
std::string to_string(const functor_key& k);
functor_key functor_of(const term_ptr& t);

// Undo log. Variable bindings are recorded as typed entries so callers can
// ask which variables were bound since a mark; everything else (store edits,
// history, indexes) is an opaque undo closure.
class bindings;
class trail {
public:
  using mark_t = size_t;

  mark_t mark() const { return entries_.size(); }
  void push_bind(int var) { entries_.push_back(entry{var, nullptr}); }
  void push_undo(std::function<void()> f) { entries_.push_back(entry{-1, std::move(f)}); }
  void undo_to(mark_t m, bindings& b);
  // Variables bound between `m` and the current top, oldest first.
  std::vector<int> vars_bound_since(mark_t m) const;
  bool any_bound_below(mark_t m, int var_watermark) const;
  size_t size() const { return entries_.size(); }

private:
  struct entry {
    int var; // >= 0: binding of this var; -1: custom undo
    std::function<void()> undo;
  };
  std::vector<entry> entries_;
};

// Variable store: slot per variable id, nullptr = unbound. Ids are handed out
// by fresh() and never reused within one engine run.
class bindings {
public:
  int fresh();
  int next_var() const { return next_var_; }
  // Pre-extend the id space (parser-produced terms carry their own ids).
  void reserve_ids(int upto);

  bool is_bound(int v) const;
  term_ptr lookup(int v) const;
  void bind(int v, term_ptr t, trail& tr);
  void unbind(int v); // trail internal

  // Dereference the root of t through bound-variable chains.
  term_ptr walk(const term_ptr& t) const;
  // Deep substitution: every bound variable replaced by its (walked) value.
  term_ptr resolve(const term_ptr& t) const;

private:
  std::vector<term_ptr> slots_;
  int next_var_ = 0;
};

// Most general unification with occurs check; on failure the trail is rewound
// to the state at entry.
bool unify(const term_ptr& a, const term_ptr& b, bindings& b_, trail& tr);

// One-way matching: only variables of `pattern` may be bound. A pattern
// variable that is already bound must dereference to a term structurally
// equal to the target. Store-side variables are never touched. Variables
// with id below `bind_watermark` count as store-side even in pattern
// position (they are matched by identity only).
bool match(const term_ptr& pattern, const term_ptr& t, bindings& b, trail& tr,
           int bind_watermark = 0);

// Structural equality after full dereference (variables by identity).
bool terms_equal(const term_ptr& a, const term_ptr& b, const bindings& b_);

// Total order on fully resolved terms: Var < Int < Atom < Compound, then by
// id / value / name / arity / args. Used for canonical sorting.
int term_compare(const term_ptr& a, const term_ptr& b);
size_t term_hash(const term_ptr& t);
size_t term_node_count(const term_ptr& t);

// Copy t with every distinct unbound variable replaced by a fresh one.
term_ptr rename_apart(const term_ptr& t, bindings& b);
term_ptr rename_apart(const term_ptr& t, bindings& b, std::map<int, term_ptr>& var_map);

// Canonical variant key: variables renumbered 0,1,... by first occurrence in
// left-to-right depth-first order. Two terms have equal keys iff they are
// variants of each other.
term_ptr variant_key(const term_ptr& t, const bindings& b);
term_ptr variant_key(const term_ptr& t, const bindings& b, std::map<int, int>& numbering);

void collect_vars(const term_ptr& t, const bindings& b, std::vector<int>& out);

// Printing. Variables render as _<id> unless `names` overrides them.
std::string term_to_string(const term_ptr& t, const bindings& b,
                           const std::map<int, std::string>* names = nullptr);

std::string int_to_string(long long v);

} // namespace tchr
