#pragma once

#include <map>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "ctp/datasets.hpp"
#include "ctp/logic.hpp"
#include "ctp/model.hpp"
#include "ctp/prover.hpp"

namespace ctp {

enum class CorruptSlot { subject, object };

struct RankingResult {
  Atom query;
  CorruptSlot slot = CorruptSlot::object;
  int rank = 0;  // filtered, average-tie (rounded up)
  int candidate_count = 0;
};

using FactSet = std::unordered_set<Atom, AtomHash>;

// Scores every entity substituted into the slot; candidates that form known
// true facts (other than the query itself) are filtered out.
RankingResult rank_entities(Search& search, const Atom& query, CorruptSlot slot,
                            const FactSet& known);

struct RankingMetrics {
  double mrr = 0.0;
  std::map<int, double> hits;  // k -> Hits@k
  std::size_t count = 0;
};

RankingMetrics mrr_hits(const std::vector<RankingResult>& results,
                        const std::set<int>& ks = {1, 3, 10});

// Area under the precision-recall curve by the step method: descending-score
// thresholds with ties grouped, no trapezoids.
double auc_pr(const std::vector<double>& scores, const std::vector<bool>& labels);

struct HopBucket {
  int correct = 0;
  int total = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};
using HopAccuracy = std::map<int, HopBucket>;

// Anything that scores every candidate relation for a graph instance.
struct RelationScorer {
  virtual ~RelationScorer() = default;
  virtual const std::vector<std::string>& relations() const = 0;
  virtual std::vector<double> relation_scores(const GraphInstance& instance) = 0;
};

// Scores relations with prove() on the instance's own fact set. depth < 0
// gives each instance the minimal budget for its hop count (hops - 1).
struct ModelRelationScorer final : RelationScorer {
  Model& model;
  int depth;
  std::vector<std::string> relation_vocab;
  bool prune = true;

  ModelRelationScorer(Model& model, int depth, std::vector<std::string> relation_vocab)
      : model(model), depth(depth), relation_vocab(std::move(relation_vocab)) {}

  const std::vector<std::string>& relations() const override { return relation_vocab; }
  std::vector<double> relation_scores(const GraphInstance& instance) override;

 private:
  ProverConfig config_;
  std::optional<Search> search_;
};

// Exact backward chaining over the composition-table rules; scores are 0/1.
struct OracleRelationScorer final : RelationScorer {
  const CompositionTable& table;

  explicit OracleRelationScorer(const CompositionTable& table) : table(table) {}

  const std::vector<std::string>& relations() const override { return table.relations; }
  std::vector<double> relation_scores(const GraphInstance& instance) override;
};

// Argmax prediction per instance, bucketed by hop count. Hops with no
// instances do not appear in the map.
HopAccuracy per_hop_accuracy(RelationScorer& scorer, const std::vector<GraphInstance>& instances);

struct ExtractedRule {
  std::string goal_predicate;
  std::size_t reformulator_index = 0;
  DecodedRule decoded;
};

// decode_rule for every predicate x reformulator, sorted by mean similarity
// descending.
std::vector<ExtractedRule> extract_rules(const Model& model);

// AUC-PR over (subject, candidate-object) pairs where candidates are the
// objects seen in `positives`; known true facts other than the positives are
// excluded from the negatives.
double object_candidates_auc_pr(Search& search, const std::vector<Atom>& positives,
                                const FactSet& known);

}  // namespace ctp
