#include "ctp/reformulator.hpp"

#include <cmath>
#include <stdexcept>

#include "ctp/rng.hpp"

namespace ctp {

const char* to_string(RulePattern p) {
  switch (p) {
    case RulePattern::direct: return "direct";
    case RulePattern::inverse: return "inverse";
    case RulePattern::chain: return "chain";
  }
  return "?";
}

const char* to_string(ReformVariant v) {
  switch (v) {
    case ReformVariant::linear: return "linear";
    case ReformVariant::attentive: return "attentive";
    case ReformVariant::memory: return "memory";
  }
  return "?";
}

const char* to_string(HeadMode m) { return m == HeadMode::goal ? "goal" : "transformed"; }

RulePattern rule_pattern_from(const std::string& s) {
  if (s == "direct") return RulePattern::direct;
  if (s == "inverse") return RulePattern::inverse;
  if (s == "chain") return RulePattern::chain;
  throw std::invalid_argument("unknown rule pattern: " + s);
}

ReformVariant reform_variant_from(const std::string& s) {
  if (s == "linear") return ReformVariant::linear;
  if (s == "attentive") return ReformVariant::attentive;
  if (s == "memory") return ReformVariant::memory;
  throw std::invalid_argument("unknown reformulator variant: " + s);
}

HeadMode head_mode_from(const std::string& s) {
  if (s == "goal") return HeadMode::goal;
  if (s == "transformed") return HeadMode::transformed;
  throw std::invalid_argument("unknown head mode: " + s);
}

std::size_t body_slots(RulePattern p) { return p == RulePattern::chain ? 2 : 1; }

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
  std::vector<double> data(rows * cols);
  for (double& v : data) v = scale * rng.next_normal();
  return Tensor::matrix(rows, cols, std::move(data));
}

std::size_t slot_count(const Reformulator& r) {
  return body_slots(r.pattern) + (r.head_mode == HeadMode::transformed ? 1 : 0);
}

}  // namespace

Reformulator Reformulator::linear(std::size_t dim, RulePattern pattern, std::uint64_t seed,
                                  HeadMode head) {
  Reformulator r;
  r.variant = ReformVariant::linear;
  r.pattern = pattern;
  r.head_mode = head;
  r.dim = dim;
  Rng rng(seed);
  double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t s = 0; s < slot_count(r); ++s) {
    std::string tag = std::to_string(s);
    r.params.push_back(Parameter::create("W" + tag, random_matrix(dim, dim, scale, rng)));
    r.params.push_back(Parameter::create("b" + tag, Tensor::zeros({dim})));
  }
  return r;
}

Reformulator Reformulator::attentive(std::size_t dim, std::size_t n_relations,
                                     RulePattern pattern, std::uint64_t seed, HeadMode head) {
  Reformulator r;
  r.variant = ReformVariant::attentive;
  r.pattern = pattern;
  r.head_mode = head;
  r.dim = dim;
  Rng rng(seed);
  double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t s = 0; s < slot_count(r); ++s)
    r.params.push_back(
        Parameter::create("W" + std::to_string(s), random_matrix(n_relations, dim, scale, rng)));
  return r;
}

Reformulator Reformulator::memory(std::size_t dim, std::size_t n_rules, RulePattern pattern,
                                  std::uint64_t seed, double scale, HeadMode head) {
  if (n_rules == 0) throw std::invalid_argument("memory reformulator needs n_rules >= 1");
  Reformulator r;
  r.variant = ReformVariant::memory;
  r.pattern = pattern;
  r.head_mode = head;
  r.dim = dim;
  r.memory_rules = n_rules;
  Rng rng(seed);
  double key_scale = 1.0 / std::sqrt(static_cast<double>(dim));
  r.params.push_back(Parameter::create("W", random_matrix(n_rules, dim, key_scale, rng)));
  for (std::size_t s = 0; s < slot_count(r); ++s)
    r.params.push_back(
        Parameter::create("M" + std::to_string(s), random_matrix(n_rules, dim, scale, rng)));
  return r;
}

Reformulator Reformulator::fixed_rule(const Rule& rule, const EmbeddingStore& store) {
  RulePattern pattern;
  const auto& head_args = rule.head.args;
  if (!head_args[0].is_variable() || !head_args[1].is_variable() ||
      head_args[0] == head_args[1])
    throw std::invalid_argument("fixed_rule: head must be H(X,Y) with distinct variables");
  if (rule.body.size() == 1) {
    const auto& b = rule.body[0].args;
    if (b[0] == head_args[0] && b[1] == head_args[1])
      pattern = RulePattern::direct;
    else if (b[0] == head_args[1] && b[1] == head_args[0])
      pattern = RulePattern::inverse;
    else
      throw std::invalid_argument("fixed_rule: body does not match direct/inverse template");
  } else if (rule.body.size() == 2) {
    const auto& b1 = rule.body[0].args;
    const auto& b2 = rule.body[1].args;
    if (!(b1[0] == head_args[0] && b2[1] == head_args[1] && b1[1] == b2[0] &&
          b1[1].is_variable()))
      throw std::invalid_argument("fixed_rule: body does not match chain template");
    pattern = RulePattern::chain;
  } else {
    throw std::invalid_argument("fixed_rule: body must have 1 or 2 atoms");
  }

  Reformulator r;
  r.variant = ReformVariant::memory;
  r.pattern = pattern;
  r.head_mode = HeadMode::transformed;
  r.dim = store.dim;
  r.memory_rules = 1;
  r.trainable = false;

  auto frozen_row = [&](const std::string& predicate) {
    const Tensor& row = store.predicate_vector(predicate)->value;
    Tensor m = Tensor::matrix(1, store.dim, row.data);
    return m;
  };
  r.params.push_back(
      Parameter{"W", make(Tensor::zeros({1, store.dim}), false, "W")});
  r.params.push_back(
      Parameter{"M0", make(frozen_row(rule.head.predicate), false, "M0")});
  for (std::size_t i = 0; i < rule.body.size(); ++i)
    r.params.push_back(Parameter{"M" + std::to_string(i + 1),
                                 make(frozen_row(rule.body[i].predicate), false,
                                      "M" + std::to_string(i + 1))});
  return r;
}

std::vector<Parameter*> Reformulator::parameters() {
  std::vector<Parameter*> out;
  if (!trainable) return out;
  out.reserve(params.size());
  for (Parameter& p : params) out.push_back(&p);
  return out;
}

const Parameter& Reformulator::param(const std::string& name) const {
  for (const Parameter& p : params)
    if (p.name == name) return p;
  throw std::out_of_range("reformulator has no parameter " + name);
}

namespace {

// f_i over the goal predicate vector; slot 0 is the head slot when the head is
// transformed, body slots follow.
NodePtr slot_forward(const Reformulator& r, std::size_t slot, const NodePtr& x,
                     const EmbeddingStore& store, Search* search, NodePtr& memory_attention) {
  switch (r.variant) {
    case ReformVariant::linear: {
      const NodePtr& w = r.params[2 * slot].node;
      const NodePtr& b = r.params[2 * slot + 1].node;
      return add(matvec(w, x), b);
    }
    case ReformVariant::attentive: {
      const NodePtr& w = r.params[slot].node;
      NodePtr attention = softmax(matvec(w, x));
      NodePtr table = search ? search->predicates_matrix() : [&] {
        std::vector<NodePtr> rows;
        rows.reserve(store.predicate_rows.size());
        for (const Parameter& p : store.predicate_rows) rows.push_back(p.node);
        return stack(std::move(rows));
      }();
      return tmatvec(table, attention);
    }
    case ReformVariant::memory: {
      if (!memory_attention)
        memory_attention = softmax(matvec(r.params[0].node, x));  // shared key lookup
      const NodePtr& values = r.params[1 + slot].node;
      return tmatvec(values, memory_attention);
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace

std::vector<EmbeddedRule> select(const Reformulator& r, const EmbeddedAtom& goal,
                                 const EmbeddingStore& store, VariableCounter& vars,
                                 Search* search) {
  if (!goal.predicate || goal.predicate->value.size() != r.dim)
    throw std::invalid_argument("select: goal predicate dimension mismatch");
  const NodePtr& x = goal.predicate;

  NodePtr memory_attention;
  std::size_t next_slot = 0;
  NodePtr head_vec;
  std::string head_symbol;
  if (r.head_mode == HeadMode::transformed) {
    head_vec = slot_forward(r, next_slot++, x, store, search, memory_attention);
  } else {
    head_vec = x;
    head_symbol = goal.predicate_symbol;
  }
  std::vector<NodePtr> body_vecs;
  for (std::size_t s = 0; s < body_slots(r.pattern); ++s)
    body_vecs.push_back(slot_forward(r, next_slot++, x, store, search, memory_attention));

  std::string vx = vars.fresh();
  std::string vy = vars.fresh();
  auto atom = [](NodePtr pred, std::string symbol, EmbeddedArg a, EmbeddedArg b) {
    EmbeddedAtom out;
    out.predicate = std::move(pred);
    out.predicate_symbol = std::move(symbol);
    out.args = {std::move(a), std::move(b)};
    return out;
  };

  EmbeddedRule rule;
  rule.head = atom(head_vec, head_symbol, EmbeddedArg::variable(vx), EmbeddedArg::variable(vy));
  switch (r.pattern) {
    case RulePattern::direct:
      rule.body.push_back(
          atom(body_vecs[0], {}, EmbeddedArg::variable(vx), EmbeddedArg::variable(vy)));
      break;
    case RulePattern::inverse:
      rule.body.push_back(
          atom(body_vecs[0], {}, EmbeddedArg::variable(vy), EmbeddedArg::variable(vx)));
      break;
    case RulePattern::chain: {
      std::string vz = vars.fresh();
      rule.body.push_back(
          atom(body_vecs[0], {}, EmbeddedArg::variable(vx), EmbeddedArg::variable(vz)));
      rule.body.push_back(
          atom(body_vecs[1], {}, EmbeddedArg::variable(vz), EmbeddedArg::variable(vy)));
      break;
    }
  }
  std::vector<EmbeddedRule> out;
  out.push_back(std::move(rule));
  return out;
}

DecodedRule decode_rule(const Reformulator& r, const std::string& goal_predicate,
                        const EmbeddingStore& store, double bandwidth) {
  EmbeddedAtom goal;
  goal.predicate = store.predicate_vector(goal_predicate);
  goal.predicate_symbol = goal_predicate;
  goal.args = {EmbeddedArg::variable("X"), EmbeddedArg::variable("Y")};
  VariableCounter vars;
  EmbeddedRule selected = select(r, goal, store, vars)[0];

  DecodedRule out;
  Term x = Term::variable("X"), y = Term::variable("Y"), z = Term::variable("Z");

  std::string head_symbol = goal_predicate;
  if (r.head_mode == HeadMode::transformed) {
    auto [sym, sim] = store.nearest_symbol(selected.head.predicate->value.data,
                                           EmbeddingStore::Table::predicates, bandwidth);
    head_symbol = sym;
    out.slot_similarities.push_back(sim);
  }
  out.rule.head = Atom{head_symbol, {x, y}};

  std::vector<std::string> body_symbols;
  for (const EmbeddedAtom& b : selected.body) {
    auto [sym, sim] = store.nearest_symbol(b.predicate->value.data,
                                           EmbeddingStore::Table::predicates, bandwidth);
    body_symbols.push_back(sym);
    out.slot_similarities.push_back(sim);
  }
  switch (r.pattern) {
    case RulePattern::direct:
      out.rule.body = {Atom{body_symbols[0], {x, y}}};
      break;
    case RulePattern::inverse:
      out.rule.body = {Atom{body_symbols[0], {y, x}}};
      break;
    case RulePattern::chain:
      out.rule.body = {Atom{body_symbols[0], {x, z}}, Atom{body_symbols[1], {z, y}}};
      break;
  }
  double sum = 0.0;
  for (double s : out.slot_similarities) sum += s;
  out.mean_similarity = out.slot_similarities.empty()
                            ? 0.0
                            : sum / static_cast<double>(out.slot_similarities.size());
  return out;
}

}  // namespace ctp
