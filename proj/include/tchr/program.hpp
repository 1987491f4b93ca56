#pragma once

#include "tchr/term.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tchr {

struct parse_error : std::runtime_error {
  int line, column;
  parse_error(std::string msg, int l, int c)
      : std::runtime_error(std::move(msg)), line(l), column(c) {}
};

struct load_error : std::runtime_error {
  explicit load_error(std::string msg) : std::runtime_error(std::move(msg)) {}
};

struct chr_rule {
  std::optional<std::string> name;
  std::vector<term_ptr> kept_heads;
  std::vector<term_ptr> removed_heads;
  std::vector<term_ptr> guard;
  std::vector<term_ptr> body;
  int text_order = 0;

  bool is_propagation() const { return removed_heads.empty(); }
  bool is_simplification() const { return kept_heads.empty(); }
  // Stable identifier used in traces and propagation-history encodings.
  std::string display_name() const {
    return name ? *name : "$r" + std::to_string(text_order);
  }
};

struct clause {
  term_ptr head;
  std::vector<term_ptr> body;
  std::map<int, std::string> var_names; // parse-time names, for oracles/printing
};

enum class arg_mode { plain, chr };
enum class store_encoding { suspension, goal };

struct table_decl {
  functor_key pred;
  std::vector<arg_mode> modes;
  store_encoding encoding = store_encoding::suspension;
  std::optional<std::string> projection;
  std::optional<std::string> canonical_form;
  std::optional<std::string> answer_combination;
  bool relaxed_combination = false;
};

struct program {
  std::map<functor_key, std::vector<clause>> clauses;
  std::vector<functor_key> clause_order; // predicates in first-appearance order
  std::vector<chr_rule> rules;
  std::set<functor_key> constraint_decls;
  std::map<functor_key, table_decl> table_decls;

  bool is_constraint(const functor_key& k) const { return constraint_decls.count(k) > 0; }
  bool is_tabled(const functor_key& k) const { return table_decls.count(k) > 0; }
  const std::vector<clause>* clauses_of(const functor_key& k) const {
    auto it = clauses.find(k);
    return it == clauses.end() ? nullptr : &it->second;
  }
  // Rule indexes whose heads mention the given constraint functor.
  std::map<functor_key, std::vector<size_t>> rules_by_functor;
  void index_rules();
  // Checks symbol disjointness, guard purity, \+ placement, option targets.
  void validate() const;
};

struct parsed_query {
  std::vector<term_ptr> goals;
  std::map<std::string, int> var_ids;   // source name -> variable id
  std::vector<std::string> var_order;   // names in first-occurrence order
};

// Parses a program file. Variable ids are drawn from `b`.
program parse_program(const std::string& text, bindings& b);
// Parses additional text into an existing program (corpus composition).
void parse_program_into(const std::string& text, bindings& b, program& p);
parsed_query parse_query(const std::string& text, bindings& b);

std::string pretty_print(const program& p, const bindings& b);

} // namespace tchr
