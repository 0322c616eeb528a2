#include "ctp/evaluation.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace ctp {

RankingResult rank_entities(Search& search, const Atom& query, CorruptSlot slot,
                            const FactSet& known) {
  if (!query.ground()) throw std::invalid_argument("rank_entities: query must be ground");
  const std::size_t pos = slot == CorruptSlot::subject ? 0 : 1;
  const std::string& true_entity = query.args[pos].text;
  if (!search.store.has_entity(true_entity))
    throw std::out_of_range("rank_entities: unknown entity " + true_entity);

  double true_score = 0.0;
  std::vector<double> scores;
  scores.reserve(search.store.entity_symbols.size());
  for (const std::string& candidate : search.store.entity_symbols) {
    Atom corrupted = query;
    corrupted.args[pos] = Term::constant(candidate);
    const bool is_true = candidate == true_entity;
    if (!is_true && known.contains(corrupted)) continue;  // filtered setting
    double s = prove_with(search, corrupted).value;
    scores.push_back(s);
    if (is_true) true_score = s;
  }

  int higher = 0, ties = 0;
  for (double s : scores) {
    if (s > true_score) ++higher;
    if (s == true_score) ++ties;
  }
  --ties;  // the true entity itself

  RankingResult result;
  result.query = query;
  result.slot = slot;
  result.candidate_count = static_cast<int>(scores.size());
  result.rank = 1 + higher + (ties + 1) / 2;  // average-tie, rounded up
  return result;
}

RankingMetrics mrr_hits(const std::vector<RankingResult>& results, const std::set<int>& ks) {
  if (results.empty()) throw std::invalid_argument("mrr_hits: empty result set");
  RankingMetrics m;
  m.count = results.size();
  for (int k : ks) m.hits[k] = 0.0;
  for (const RankingResult& r : results) {
    m.mrr += 1.0 / r.rank;
    for (int k : ks)
      if (r.rank <= k) m.hits[k] += 1.0;
  }
  m.mrr /= static_cast<double>(results.size());
  for (auto& [k, v] : m.hits) v /= static_cast<double>(results.size());
  return m;
}

double auc_pr(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auc_pr: scores/labels length mismatch");
  long positives = std::count(labels.begin(), labels.end(), true);
  if (positives == 0) throw std::invalid_argument("auc_pr: needs at least one positive label");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double auc = 0.0, prev_recall = 0.0;
  long tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]]) ++tp;
      else ++fp;
      ++j;
    }
    double recall = static_cast<double>(tp) / static_cast<double>(positives);
    double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    auc += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return auc;
}

std::vector<double> ModelRelationScorer::relation_scores(const GraphInstance& instance) {
  KnowledgeBase kb = instance_kb(instance);
  config_ = model.prover_config(depth >= 0 ? depth : std::max(0, instance.hops - 1));
  config_.prune = prune;
  if (!search_)
    search_.emplace(kb, model.store, config_);
  else
    search_->rebind(kb);
  Atom goal{"", {Term::constant(instance.query.first), Term::constant(instance.query.second)}};
  std::vector<double> out;
  out.reserve(relation_vocab.size());
  for (const std::string& r : relation_vocab) {
    goal.predicate = r;
    out.push_back(prove_with(*search_, goal).value);
  }
  return out;
}

std::vector<double> OracleRelationScorer::relation_scores(const GraphInstance& instance) {
  KnowledgeBase kb = instance_kb(instance, &table);
  Atom goal{"", {Term::constant(instance.query.first), Term::constant(instance.query.second)}};
  std::vector<double> out;
  out.reserve(table.relations.size());
  for (const std::string& r : table.relations) {
    goal.predicate = r;
    out.push_back(symbolic_entails(kb, goal, instance.hops - 1) ? 1.0 : 0.0);
  }
  return out;
}

HopAccuracy per_hop_accuracy(RelationScorer& scorer, const std::vector<GraphInstance>& instances) {
  HopAccuracy out;
  const auto& relations = scorer.relations();
  for (const GraphInstance& inst : instances) {
    std::vector<double> scores = scorer.relation_scores(inst);
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
      if (scores[i] > scores[best]) best = i;
    HopBucket& bucket = out[inst.hops];
    ++bucket.total;
    if (relations[best] == inst.target) ++bucket.correct;
  }
  return out;
}

std::vector<ExtractedRule> extract_rules(const Model& model) {
  std::vector<ExtractedRule> out;
  for (std::size_t p = 0; p < model.store.predicate_symbols.size(); ++p)
    for (std::size_t r = 0; r < model.reformulators.size(); ++r) {
      ExtractedRule e;
      e.goal_predicate = model.store.predicate_symbols[p];
      e.reformulator_index = r;
      e.decoded = decode_rule(model.reformulators[r], e.goal_predicate, model.store,
                              model.bandwidth);
      out.push_back(std::move(e));
    }
  std::stable_sort(out.begin(), out.end(), [](const ExtractedRule& a, const ExtractedRule& b) {
    return a.decoded.mean_similarity > b.decoded.mean_similarity;
  });
  return out;
}

double object_candidates_auc_pr(Search& search, const std::vector<Atom>& positives,
                                const FactSet& known) {
  if (positives.empty()) throw std::invalid_argument("no positive facts given");
  FactSet positive_set;
  std::vector<std::string> subjects, objects;
  std::unordered_set<std::string> seen_subj, seen_obj;
  for (const Atom& p : positives) {
    positive_set.insert(p);
    if (seen_subj.insert(p.args[0].text).second) subjects.push_back(p.args[0].text);
    if (seen_obj.insert(p.args[1].text).second) objects.push_back(p.args[1].text);
  }
  const std::string& predicate = positives.front().predicate;

  std::vector<double> scores;
  std::vector<bool> labels;
  for (const std::string& s : subjects)
    for (const std::string& o : objects) {
      Atom pair{predicate, {Term::constant(s), Term::constant(o)}};
      bool is_positive = positive_set.contains(pair);
      if (!is_positive && known.contains(pair)) continue;  // true but not under test
      scores.push_back(prove_with(search, pair).value);
      labels.push_back(is_positive);
    }
  return auc_pr(scores, labels);
}

}  // namespace ctp
