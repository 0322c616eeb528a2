#include "ctp/model.hpp"

#include <cctype>
#include <stdexcept>

namespace ctp {

std::vector<ReformSpec> default_reformulator_specs(ReformVariant variant) {
  // Five goal reformulators: three chains plus one direct and one inverse.
  std::vector<ReformSpec> specs(5);
  for (auto& s : specs) s.variant = variant;
  specs[0].pattern = RulePattern::chain;
  specs[1].pattern = RulePattern::chain;
  specs[2].pattern = RulePattern::direct;
  specs[3].pattern = RulePattern::inverse;
  specs[4].pattern = RulePattern::chain;
  return specs;
}

std::vector<ReformSpec> parse_reformulator_specs(const std::string& templates,
                                                 ReformVariant variant,
                                                 std::size_t memory_rules) {
  std::vector<ReformSpec> specs;
  std::string token;
  auto flush = [&]() {
    if (token.empty()) return;
    ReformSpec s;
    s.variant = variant;
    s.pattern = rule_pattern_from(token);
    s.memory_rules = memory_rules;
    specs.push_back(s);
    token.clear();
  };
  for (char c : templates) {
    if (c == ',') {
      flush();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      token.push_back(c);
    }
  }
  flush();
  if (specs.empty()) throw std::invalid_argument("no reformulator templates given");
  return specs;
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out = store.parameters();
  for (Reformulator& r : reformulators)
    for (Parameter* p : r.parameters()) out.push_back(p);
  return out;
}

std::vector<const Reformulator*> Model::reformulator_ptrs() const {
  std::vector<const Reformulator*> out;
  out.reserve(reformulators.size());
  for (const Reformulator& r : reformulators) out.push_back(&r);
  return out;
}

ProverConfig Model::prover_config(int depth) const {
  ProverConfig cfg;
  cfg.depth = depth;
  cfg.reformulators = reformulator_ptrs();
  cfg.bandwidth = bandwidth;
  return cfg;
}

Model build_model(const KnowledgeBase& kb, std::size_t dim, std::uint64_t seed,
                  double init_scale, const std::vector<ReformSpec>& specs, double bandwidth) {
  Model model;
  model.bandwidth = bandwidth;
  model.store = EmbeddingStore::init(kb, dim, seed, init_scale);
  std::uint64_t sub_seed = seed;
  for (const ReformSpec& spec : specs) {
    sub_seed = sub_seed * 6364136223846793005ull + 1442695040888963407ull;
    switch (spec.variant) {
      case ReformVariant::linear:
        model.reformulators.push_back(Reformulator::linear(dim, spec.pattern, sub_seed,
                                                           spec.head_mode));
        break;
      case ReformVariant::attentive:
        model.reformulators.push_back(Reformulator::attentive(
            dim, kb.predicate_vocab.size(), spec.pattern, sub_seed, spec.head_mode));
        break;
      case ReformVariant::memory:
        model.reformulators.push_back(Reformulator::memory(
            dim, spec.memory_rules, spec.pattern, sub_seed, init_scale, spec.head_mode));
        break;
    }
  }
  return model;
}

}  // namespace ctp
