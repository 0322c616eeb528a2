#include "ctp/prover.hpp"

#include <cmath>
#include <stdexcept>

#include "ctp/reformulator.hpp"

namespace ctp {

std::size_t Search::GroundKeyHash::operator()(const GroundKey& k) const {
  auto mix = [](std::size_t h, std::size_t v) {
    return h ^ (v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2));
  };
  std::size_t h = std::hash<const void*>{}(k.pred);
  h = mix(h, std::hash<const void*>{}(k.arg0));
  h = mix(h, std::hash<const void*>{}(k.arg1));
  return mix(h, static_cast<std::size_t>(k.depth));
}

Search::Search(const KnowledgeBase& kb, const EmbeddingStore& store, const ProverConfig& config)
    : kb(&kb), store(store), config(config) {
  one = make(Tensor::scalar(1.0), false, "one");
  rebind(kb);
}

void Search::rebind(const KnowledgeBase& new_kb) {
  kb = &new_kb;
  fact_atoms.clear();
  fact_sources.clear();
  fact_atoms.reserve(new_kb.facts.size());
  fact_sources.reserve(new_kb.facts.size());
  for (const Atom& f : new_kb.facts) {
    fact_atoms.push_back(embed_atom(f, store, {}));
    fact_sources.push_back(&f);
  }
  ground_memo.clear();
  memo_mask = nullptr;
  sync_mask();
}

void Search::sync_mask() {
  if (config.masked_fact != memo_mask) ground_memo.clear();
  memo_mask = config.masked_fact;
  masked_index = static_cast<std::size_t>(-1);
  if (!config.masked_fact) return;
  for (std::size_t i = 0; i < fact_sources.size(); ++i)
    if (*fact_sources[i] == *config.masked_fact) {
      masked_index = i;
      break;
    }
}

const std::vector<EmbeddedRule>& Search::rules_for(std::size_t index, const EmbeddedAtom& goal) {
  auto key = std::make_pair(index, goal.predicate.get());
  auto it = select_cache.find(key);
  if (it == select_cache.end())
    it = select_cache.emplace(key, select(*config.reformulators[index], goal, store, vars, this))
             .first;
  return it->second;
}

NodePtr Search::kernel(const NodePtr& a, const NodePtr& b) {
  auto& by_second = kernel_cache[a.get()];
  auto it = by_second.find(b.get());
  if (it != by_second.end()) return it->second;
  NodePtr k = gaussian_kernel(a, b, config.bandwidth);
  by_second.emplace(b.get(), k);
  return k;
}

const NodePtr& Search::predicates_matrix() {
  if (!predicate_matrix) {
    std::vector<NodePtr> rows;
    rows.reserve(store.predicate_rows.size());
    for (const Parameter& p : store.predicate_rows) rows.push_back(p.node);
    predicate_matrix = stack(std::move(rows));
  }
  return predicate_matrix;
}

EmbeddedAtom embed_atom(const Atom& atom, const EmbeddingStore& store, const Substitution& subst) {
  EmbeddedAtom out;
  out.predicate = store.predicate_vector(atom.predicate);
  out.predicate_symbol = atom.predicate;
  for (std::size_t i = 0; i < 2; ++i) {
    Term t = resolve_term(subst, atom.args[i]);
    if (t.is_constant())
      out.args[i] = EmbeddedArg::ground(t.text, store.entity_vector(t.text));
    else
      out.args[i] = EmbeddedArg::variable(t.text);
  }
  return out;
}

namespace {

struct ResolvedArg {
  bool is_var = false;
  std::string var;
  std::string symbol;
  const NodePtr* vec = nullptr;
  bool through_binding = false;  // syntactic variable resolved to a constant
};

ResolvedArg resolve_arg(const EmbeddedArg& arg, const Substitution& subst,
                        const EmbeddingStore& store) {
  ResolvedArg out;
  if (!arg.is_variable()) {
    out.symbol = arg.symbol;
    out.vec = &arg.vec;
    return out;
  }
  Term t = resolve_term(subst, Term::variable(arg.var));
  if (t.is_variable()) {
    out.is_var = true;
    out.var = t.text;
    return out;
  }
  out.symbol = t.text;
  out.vec = &store.entity_vector(t.text);
  out.through_binding = true;
  return out;
}

std::string render_arg(const EmbeddedArg& arg) { return arg.is_variable() ? arg.var : arg.symbol; }

std::string render_atom(const EmbeddedAtom& atom, const EmbeddingStore& store, double bandwidth) {
  std::string pred = atom.predicate_symbol;
  if (pred.empty()) {
    auto [sym, sim] =
        store.nearest_symbol(atom.predicate->value.data, EmbeddingStore::Table::predicates,
                             bandwidth);
    pred = "~" + sym;
    (void)sim;
  }
  return pred + "(" + render_arg(atom.args[0]) + "," + render_arg(atom.args[1]) + ")";
}

struct TraceLabel {
  const char* kind = "";
  std::string text;
  int depth = 0;
};

std::optional<ProofState> unify_impl(const EmbeddedAtom& head, const EmbeddedAtom& goal,
                                     const ProofState& state, Search& search,
                                     const TraceLabel& label) {
  Substitution subst = state.subst;
  std::vector<NodePtr> factors;
  std::vector<double> kernel_values;
  double running = state.success->value.scalar_value();
  const bool prune = search.config.prune;

  auto add_factor = [&](const NodePtr& a, const NodePtr& b) {
    if (a.get() == b.get()) return true;  // identical vectors, kernel is exactly 1
    NodePtr k = search.kernel(a, b);
    double v = k->value.scalar_value();
    if (v < running) running = v;
    if (search.config.trace) kernel_values.push_back(v);
    factors.push_back(std::move(k));
    return !(prune && running <= search.best);
  };

  if (!add_factor(head.predicate, goal.predicate)) return std::nullopt;

  for (std::size_t i = 0; i < 2; ++i) {
    ResolvedArg h = resolve_arg(head.args[i], subst, search.store);
    ResolvedArg g = resolve_arg(goal.args[i], subst, search.store);
    if (h.is_var) {
      if (!g.is_var || g.var != h.var)
        subst[h.var] = g.is_var ? Term::variable(g.var) : Term::constant(g.symbol);
    } else if (g.is_var) {
      subst[g.var] = Term::constant(h.symbol);
    } else if (h.symbol == g.symbol) {
      // identical constants, kernel is exactly 1
    } else if (h.through_binding || g.through_binding) {
      return std::nullopt;  // re-binding a bound variable to a different constant
    } else {
      if (!add_factor(*h.vec, *g.vec)) return std::nullopt;
    }
  }

  ProofState out;
  out.subst = std::move(subst);
  if (factors.empty()) {
    out.success = state.success;
  } else if (factors.size() == 1 && state.success.get() == search.one.get()) {
    out.success = factors[0];
  } else {
    std::vector<NodePtr> parts;
    parts.reserve(factors.size() + 1);
    parts.push_back(state.success);
    for (NodePtr& f : factors) parts.push_back(std::move(f));
    out.success = reduce_min(concat(std::move(parts)));
  }

  if (search.config.trace) {
    auto node = std::make_shared<TraceNode>();
    node->parent = state.trace;
    node->depth = label.depth;
    node->kind = label.kind;
    node->description = label.text;
    node->kernels = std::move(kernel_values);
    node->success_after = out.success->value.scalar_value();
    for (const auto& [k, v] : out.subst)
      if (!state.subst.contains(k)) node->new_bindings.emplace(k, v);
    out.trace = std::move(node);
  } else {
    out.trace = state.trace;
  }
  return out;
}

struct AndContinuation final : StateSink {
  const std::vector<EmbeddedAtom>& body;
  std::size_t index;
  int depth;
  Search& search;
  const StateSink& sink;

  AndContinuation(const std::vector<EmbeddedAtom>& body, std::size_t index, int depth,
                  Search& search, const StateSink& sink)
      : body(body), index(index), depth(depth), search(search), sink(sink) {}

  void operator()(ProofState state) const override {
    and_step(body, index, depth, state, search, sink);
  }
};

EmbeddedAtom resolve_atom(const EmbeddedAtom& atom, const Substitution& subst,
                          const EmbeddingStore& store) {
  EmbeddedAtom out;
  out.predicate = atom.predicate;
  out.predicate_symbol = atom.predicate_symbol;
  for (std::size_t i = 0; i < 2; ++i) {
    const EmbeddedArg& arg = atom.args[i];
    if (!arg.is_variable()) {
      out.args[i] = arg;
      continue;
    }
    Term t = resolve_term(subst, Term::variable(arg.var));
    if (t.is_constant())
      out.args[i] = EmbeddedArg::ground(t.text, store.entity_vector(t.text));
    else
      out.args[i] = EmbeddedArg::variable(t.text);
  }
  return out;
}

}  // namespace

std::optional<ProofState> unify(const EmbeddedAtom& head, const EmbeddedAtom& goal,
                                const ProofState& state, Search& search) {
  return unify_impl(head, goal, state, search, {});
}

void or_step(const EmbeddedAtom& goal, int depth, const ProofState& state, Search& search,
             const StateSink& sink) {
  const ProverConfig& cfg = search.config;
  if (cfg.unify_facts) {
    for (std::size_t i = 0; i < search.fact_atoms.size(); ++i) {
      if (i == search.masked_index) continue;
      TraceLabel label;
      if (cfg.trace) {
        label.kind = "fact";
        label.text = render_atom(search.fact_atoms[i], search.store, cfg.bandwidth);
        label.depth = depth;
      }
      if (auto st = unify_impl(search.fact_atoms[i], goal, state, search, label))
        sink(std::move(*st));
    }
  }
  if (depth <= 0) return;
  for (std::size_t r = 0; r < cfg.reformulators.size(); ++r) {
    const std::vector<EmbeddedRule>& rules = search.rules_for(r, goal);
    for (const EmbeddedRule& rule : rules) {
      TraceLabel label;
      if (cfg.trace) {
        label.kind = "rule";
        label.depth = depth;
        std::string text =
            "reformulator[" + std::to_string(r) + "] " +
            render_atom(rule.head, search.store, cfg.bandwidth) + " :-";
        for (std::size_t b = 0; b < rule.body.size(); ++b)
          text += (b ? ", " : " ") + render_atom(rule.body[b], search.store, cfg.bandwidth);
        label.text = std::move(text);
      }
      if (auto st = unify_impl(rule.head, goal, state, search, label))
        and_step(rule.body, 0, depth, *st, search, sink);
    }
  }
}

namespace {

// Retains the best completed state of a ground-subgoal enumeration; ties keep
// the first, matching reduce_max.
struct BestSink final : StateSink {
  Search& search;
  std::optional<ProofState>& best;

  BestSink(Search& search, std::optional<ProofState>& best) : search(search), best(best) {}

  void operator()(ProofState state) const override {
    double v = state.success->value.scalar_value();
    if (best && v <= best->success->value.scalar_value()) return;
    best = std::move(state);
    if (search.config.prune) search.best = v;
  }
};

}  // namespace

void and_step(const std::vector<EmbeddedAtom>& body, std::size_t index, int depth,
              const ProofState& state, Search& search, const StateSink& sink) {
  if (index == body.size()) {
    sink(state);
    return;
  }
  if (depth <= 0) return;  // budget exhausted with subgoals left
  if (search.config.prune && state.success->value.scalar_value() <= search.best) return;
  EmbeddedAtom subgoal = resolve_atom(body[index], state.subst, search.store);

  const bool ground = !subgoal.args[0].is_variable() && !subgoal.args[1].is_variable();
  if (ground && search.config.collapse_ground && !search.config.trace) {
    Search::GroundKey key{subgoal.predicate.get(), subgoal.args[0].vec.get(),
                          subgoal.args[1].vec.get(), depth - 1};
    auto it = search.ground_memo.find(key);
    if (it == search.ground_memo.end()) {
      double saved_best = search.best;
      search.best = -1.0;
      std::optional<ProofState> best;
      BestSink best_sink(search, best);
      or_step(subgoal, depth - 1, search.initial_state(), search, best_sink);
      search.best = saved_best;
      it = search.ground_memo.emplace(key, std::move(best)).first;
    }
    const std::optional<ProofState>& sub = it->second;
    if (!sub) return;
    NodePtr merged;
    if (state.success.get() == search.one.get())
      merged = sub->success;
    else if (sub->success.get() == search.one.get())
      merged = state.success;
    else
      merged = reduce_min(concat({state.success, sub->success}));
    and_step(body, index + 1, depth, ProofState{state.subst, std::move(merged), state.trace},
             search, sink);
    return;
  }

  AndContinuation cont(body, index + 1, depth, search, sink);
  or_step(subgoal, depth - 1, state, search, cont);
}

namespace {

struct CollectStates final : StateSink {
  Search& search;
  std::vector<ProofState>& kept;

  CollectStates(Search& search, std::vector<ProofState>& kept) : search(search), kept(kept) {}

  void operator()(ProofState state) const override {
    double v = state.success->value.scalar_value();
    if (search.config.prune) {
      if (v <= search.best) return;
      search.best = v;
    }
    kept.push_back(std::move(state));
  }
};

}  // namespace

ProveResult prove(const KnowledgeBase& kb, const EmbeddingStore& store,
                  const ProverConfig& config, const Atom& goal) {
  Search search(kb, store, config);
  return prove_with(search, goal);
}

ProveResult prove_with(Search& search, const Atom& goal) {
  if (!goal.ground()) throw std::invalid_argument("prove: goal must be ground");
  search.sync_mask();
  search.best = -1.0;
  EmbeddedAtom g = embed_atom(goal, search.store, {});
  std::vector<ProofState> kept;
  CollectStates collect(search, kept);
  or_step(g, search.config.depth, search.initial_state(), search, collect);

  ProveResult result;
  if (kept.empty()) {
    result.score = constant(0.0);
    result.value = 0.0;
    return result;
  }
  if (kept.size() == 1) {
    result.score = kept[0].success;
    result.value = result.score->value.scalar_value();
    result.best_trace = kept[0].trace;
    return result;
  }
  std::vector<NodePtr> scores;
  scores.reserve(kept.size());
  for (const ProofState& st : kept) scores.push_back(st.success);
  result.score = reduce_max(concat(std::move(scores)));
  result.value = result.score->value.scalar_value();
  result.best_trace = kept[static_cast<std::size_t>(result.score->aux_index)].trace;
  return result;
}

}  // namespace ctp
