#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ctp/autodiff.hpp"
#include "ctp/embeddings.hpp"
#include "ctp/logic.hpp"

namespace ctp {

struct Reformulator;

// Argument of an embedded atom: either a free variable or a grounded
// vocabulary constant carried with its embedding row.
struct EmbeddedArg {
  std::string var;     // non-empty iff variable
  std::string symbol;  // constant symbol when ground
  NodePtr vec;         // embedding when ground

  bool is_variable() const { return !var.empty(); }
  static EmbeddedArg variable(std::string name) { return {std::move(name), {}, nullptr}; }
  static EmbeddedArg ground(std::string symbol, NodePtr vec) {
    return {{}, std::move(symbol), std::move(vec)};
  }
};

// Atom over embedding space: the predicate is always a vector (possibly a
// generated one with no vocabulary symbol), arguments are vectors or variables.
struct EmbeddedAtom {
  NodePtr predicate;
  std::string predicate_symbol;  // empty for generated predicate vectors
  std::array<EmbeddedArg, 2> args;
};

// Rule over embedding space with template variables in fixed positions.
struct EmbeddedRule {
  EmbeddedAtom head;
  std::vector<EmbeddedAtom> body;
};

// One unification event along a proof path, chained parent-first.
struct TraceNode {
  std::shared_ptr<const TraceNode> parent;
  int depth = 0;
  std::string kind;         // "fact" or "rule"
  std::string description;  // rendered fact / rule head and body
  std::vector<double> kernels;
  double success_after = 0.0;
  Substitution new_bindings;
};
using TracePtr = std::shared_ptr<const TraceNode>;

struct ProofState {
  Substitution subst;
  NodePtr success;  // scalar in (0, 1]
  TracePtr trace;

  double value() const { return success->value.scalar_value(); }
};

struct ProverConfig {
  int depth = 2;
  std::vector<const Reformulator*> reformulators;
  bool unify_facts = true;
  double bandwidth = 1.0;
  const Atom* masked_fact = nullptr;  // skipped during fact unification
  bool trace = false;
  // Dominance pruning drops partial proofs whose running score cannot exceed
  // the best completed proof; the final max (and its gradient) is unchanged.
  bool prune = true;
  // Memoise fully ground subgoals and keep only their best sub-proof. A ground
  // subgoal binds nothing and min() is monotone, so only its best sub-proof
  // can ever appear on the winning path; the final max is again unchanged.
  bool collapse_ground = true;
};

struct StateSink {
  virtual void operator()(ProofState state) const = 0;

 protected:
  ~StateSink() = default;
};

// Mutable per-proof context: pruning bound, fresh-variable counter, the
// pre-embedded fact list, and kernel/select/ground-subgoal caches. A Search
// may be reused across goals as long as parameters stay frozen.
struct Search {
  struct GroundKey {
    const Node* pred;
    const Node* arg0;
    const Node* arg1;
    int depth;
    bool operator==(const GroundKey&) const = default;
  };
  struct GroundKeyHash {
    std::size_t operator()(const GroundKey& k) const;
  };

  const KnowledgeBase* kb;
  const EmbeddingStore& store;
  const ProverConfig& config;
  double best = -1.0;
  VariableCounter vars;
  NodePtr one;
  std::vector<EmbeddedAtom> fact_atoms;
  std::vector<const Atom*> fact_sources;
  std::size_t masked_index = static_cast<std::size_t>(-1);
  NodePtr predicate_matrix;  // lazy; shared by attentive reformulators
  std::unordered_map<const Node*, std::unordered_map<const Node*, NodePtr>> kernel_cache;
  std::unordered_map<GroundKey, std::optional<ProofState>, GroundKeyHash> ground_memo;
  std::map<std::pair<std::size_t, const Node*>, std::vector<EmbeddedRule>> select_cache;
  const Atom* memo_mask = nullptr;

  Search(const KnowledgeBase& kb, const EmbeddingStore& store, const ProverConfig& config);

  // Swap in a new fact set while keeping kernel/select caches, which depend
  // only on the frozen parameters. The ground memo is invalidated.
  void rebind(const KnowledgeBase& new_kb);

  NodePtr kernel(const NodePtr& a, const NodePtr& b);
  const NodePtr& predicates_matrix();
  // Rules a reformulator generates for this goal predicate, cached per proof
  // context; fresh variable names are drawn once and reused, which is safe
  // because no root-to-leaf path applies the same cached rule twice.
  const std::vector<EmbeddedRule>& rules_for(std::size_t index, const EmbeddedAtom& goal);
  void sync_mask();  // applies config.masked_fact, invalidating the memo on change
  ProofState initial_state() const { return ProofState{{}, one, nullptr}; }
};

// Constants become embedding lookups; variables are resolved through subst
// first and pass through symbolically if unbound.
EmbeddedAtom embed_atom(const Atom& atom, const EmbeddingStore& store, const Substitution& subst);

// Soft unification: variable positions bind, ground-vs-ground positions
// contribute kernel factors folded into a running min with state.success.
// Fails only when a bound variable would be re-bound to a different constant.
std::optional<ProofState> unify(const EmbeddedAtom& head, const EmbeddedAtom& goal,
                                const ProofState& state, Search& search);

// Facts first (when enabled), then every rule generated for the goal by each
// reformulator in declared order, with depth spent on rule applications.
void or_step(const EmbeddedAtom& goal, int depth, const ProofState& state, Search& search,
             const StateSink& sink);

void and_step(const std::vector<EmbeddedAtom>& body, std::size_t index, int depth,
              const ProofState& state, Search& search, const StateSink& sink);

struct ProveResult {
  NodePtr score;      // reduce_max over proof scores, or constant 0
  double value = 0.0;
  TracePtr best_trace;
};

// Differentiable proof score of a ground goal: max over all proof paths.
ProveResult prove(const KnowledgeBase& kb, const EmbeddingStore& store,
                  const ProverConfig& config, const Atom& goal);

// Same, reusing a Search so kernel/select subgraphs are shared across goals
// proven against one frozen parameter snapshot.
ProveResult prove_with(Search& search, const Atom& goal);

}  // namespace ctp
