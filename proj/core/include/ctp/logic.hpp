#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace ctp {

// Variable names match [A-Z][A-Za-z0-9_]*; anything else is a constant symbol.
bool is_variable_name(std::string_view s);

struct Term {
  enum class Kind { constant, variable };
  Kind kind = Kind::constant;
  std::string text;

  static Term constant(std::string symbol);
  static Term variable(std::string name);

  bool is_variable() const { return kind == Kind::variable; }
  bool is_constant() const { return kind == Kind::constant; }

  bool operator==(const Term&) const = default;
  auto operator<=>(const Term&) const = default;
};

// Binary atoms everywhere; arity is fixed at 2.
struct Atom {
  std::string predicate;
  std::array<Term, 2> args;

  bool ground() const { return args[0].is_constant() && args[1].is_constant(); }

  bool operator==(const Atom&) const = default;
  auto operator<=>(const Atom&) const = default;
};

struct AtomHash {
  std::size_t operator()(const Atom& a) const;
};

// Horn clause; empty body means fact.
struct Rule {
  Atom head;
  std::vector<Atom> body;

  bool is_fact() const { return body.empty(); }
  bool operator==(const Rule&) const = default;
};

// Variable name -> term. Ordered map so iteration is deterministic.
using Substitution = std::map<std::string, Term>;

// Follows binding chains to a fixed point; throws on a cyclic chain.
Term resolve_term(const Substitution& subst, Term term);
Atom apply_substitution(const Atom& atom, const Substitution& subst);

// Monotone source of fresh variable names (_V<n>).
struct VariableCounter {
  std::int64_t next = 0;
  std::string fresh() { return "_V" + std::to_string(next++); }
};

Rule standardize_apart(const Rule& rule, VariableCounter& counter);

enum class FactFormat { prolog, tsv };

struct ParseError : std::runtime_error {
  std::size_t line_no;
  std::string text;
  ParseError(const std::string& message, std::size_t line, std::string offending);
};

// prolog: `pred(a,b).`   tsv: `a<TAB>pred<TAB>b`
Atom parse_fact_line(std::string_view line, FactFormat format, std::size_t line_no = 0);
std::string format_fact(const Atom& atom, FactFormat format);

struct KnowledgeBase {
  std::vector<Atom> facts;
  std::vector<Rule> rules;
  std::vector<std::string> entity_vocab;     // first-occurrence order
  std::vector<std::string> predicate_vocab;  // first-occurrence order
  std::size_t duplicate_count = 0;

  void add_fact(const Atom& fact);  // deduplicates; fact must be ground
  void add_rule(const Rule& rule);
  void add_entity(const std::string& symbol);
  void add_predicate(const std::string& symbol);

  bool has_fact(const Atom& fact) const { return fact_set_.contains(fact); }
  bool has_entity(const std::string& s) const { return entity_set_.contains(s); }
  bool has_predicate(const std::string& s) const { return predicate_set_.contains(s); }

 private:
  std::unordered_set<Atom, AtomHash> fact_set_;
  std::unordered_set<std::string> entity_set_;
  std::unordered_set<std::string> predicate_set_;
};

// One fact per line, `#` comments, blank lines ignored. Parse failures are
// aggregated into a single error listing every bad line.
KnowledgeBase load_kb(const std::string& path, FactFormat format);
KnowledgeBase kb_from_facts(const std::vector<Atom>& facts);

// Exact depth-bounded backward chaining over kb.facts/kb.rules.
// depth counts nested rule applications; facts cost nothing.
bool symbolic_entails(const KnowledgeBase& kb, const Atom& goal, int depth);

}  // namespace ctp
