#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctp/embeddings.hpp"
#include "ctp/logic.hpp"
#include "ctp/prover.hpp"
#include "ctp/reformulator.hpp"

namespace ctp {

struct ReformSpec {
  ReformVariant variant = ReformVariant::linear;
  RulePattern pattern = RulePattern::chain;
  HeadMode head_mode = HeadMode::goal;
  std::size_t memory_rules = 32;
};

// Parses e.g. "chain,chain,direct,inverse,chain" with a shared variant.
std::vector<ReformSpec> parse_reformulator_specs(const std::string& templates,
                                                 ReformVariant variant,
                                                 std::size_t memory_rules = 32);
std::vector<ReformSpec> default_reformulator_specs(ReformVariant variant);

// Embeddings plus goal reformulators; everything the optimizer touches.
struct Model {
  EmbeddingStore store;
  std::vector<Reformulator> reformulators;
  double bandwidth = 1.0;

  std::vector<Parameter*> parameters();  // embeddings first, then reformulators
  std::vector<const Reformulator*> reformulator_ptrs() const;
  ProverConfig prover_config(int depth) const;
};

Model build_model(const KnowledgeBase& kb, std::size_t dim, std::uint64_t seed,
                  double init_scale, const std::vector<ReformSpec>& specs,
                  double bandwidth = 1.0);

}  // namespace ctp
