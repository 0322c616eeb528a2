#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctp/embeddings.hpp"
#include "ctp/prover.hpp"

namespace ctp {

// Fixed variable pattern of a generated rule. Only the predicate vectors vary,
// which is what keeps rule generation end-to-end differentiable.
enum class RulePattern { direct, inverse, chain };

enum class ReformVariant { linear, attentive, memory };

// Head predicate of the generated rule: reuse the goal's own predicate vector,
// or produce it with a dedicated head slot like the body slots.
enum class HeadMode { goal, transformed };

const char* to_string(RulePattern p);
const char* to_string(ReformVariant v);
const char* to_string(HeadMode m);
RulePattern rule_pattern_from(const std::string& s);
ReformVariant reform_variant_from(const std::string& s);
HeadMode head_mode_from(const std::string& s);

std::size_t body_slots(RulePattern p);  // 1 for direct/inverse, 2 for chain

// A trainable map from a goal to one rule (Horn clause over embedding space).
// linear:    f_i(x) = W_i x + b_i
// attentive: f_i(x) = softmax(W_i x) . E_R
// memory:    a = softmax(W x); f_i(x) = a . M_i   (shared key matrix)
struct Reformulator {
  ReformVariant variant = ReformVariant::linear;
  RulePattern pattern = RulePattern::chain;
  HeadMode head_mode = HeadMode::goal;
  std::size_t dim = 0;
  std::size_t memory_rules = 0;  // n, memory variant only
  bool trainable = true;
  std::vector<Parameter> params;

  static Reformulator linear(std::size_t dim, RulePattern pattern, std::uint64_t seed,
                             HeadMode head = HeadMode::goal);
  static Reformulator attentive(std::size_t dim, std::size_t n_relations, RulePattern pattern,
                                std::uint64_t seed, HeadMode head = HeadMode::goal);
  static Reformulator memory(std::size_t dim, std::size_t n_rules, RulePattern pattern,
                             std::uint64_t seed, double scale, HeadMode head = HeadMode::goal);

  // Non-trainable single-rule memory that always emits `rule`, head included.
  // The rule shape must match one of the templates.
  static Reformulator fixed_rule(const Rule& rule, const EmbeddingStore& store);

  std::vector<Parameter*> parameters();
  const Parameter& param(const std::string& name) const;
};

// Generates the reformulator's rule for a goal, with fresh variables drawn
// from `vars`. `search`, when given, shares the per-proof predicate matrix.
std::vector<EmbeddedRule> select(const Reformulator& reformulator, const EmbeddedAtom& goal,
                                 const EmbeddingStore& store, VariableCounter& vars,
                                 Search* search = nullptr);

struct DecodedRule {
  Rule rule;
  std::vector<double> slot_similarities;  // head slot first when transformed
  double mean_similarity = 0.0;
};

// Runs select on a goal predicate and maps every produced predicate vector to
// its nearest vocabulary predicate.
DecodedRule decode_rule(const Reformulator& reformulator, const std::string& goal_predicate,
                        const EmbeddingStore& store, double bandwidth = 1.0);

}  // namespace ctp
