#include "ctp/embeddings.hpp"

#include <cmath>
#include <stdexcept>

#include "ctp/rng.hpp"

namespace ctp {

EmbeddingStore EmbeddingStore::init(const KnowledgeBase& kb, std::size_t dim, std::uint64_t seed,
                                    double scale) {
  if (dim < 1) throw std::invalid_argument("embedding dim must be >= 1");
  if (kb.predicate_vocab.empty() || kb.entity_vocab.empty())
    throw std::invalid_argument("cannot initialise embeddings over an empty vocabulary");

  EmbeddingStore store;
  store.dim = dim;
  Rng rng(seed);
  auto draw_row = [&]() {
    std::vector<double> row(dim);
    for (double& v : row) v = scale * rng.next_normal();
    return Tensor::vec(std::move(row));
  };
  for (const std::string& p : kb.predicate_vocab) {
    store.predicate_symbols.push_back(p);
    store.predicate_rows.push_back(Parameter::create("pred:" + p, draw_row()));
  }
  for (const std::string& e : kb.entity_vocab) {
    store.entity_symbols.push_back(e);
    store.entity_rows.push_back(Parameter::create("ent:" + e, draw_row()));
  }
  store.rebuild_index();
  return store;
}

void EmbeddingStore::rebuild_index() {
  pred_index_.clear();
  ent_index_.clear();
  for (std::size_t i = 0; i < predicate_symbols.size(); ++i) pred_index_[predicate_symbols[i]] = i;
  for (std::size_t i = 0; i < entity_symbols.size(); ++i) ent_index_[entity_symbols[i]] = i;
}

const NodePtr& EmbeddingStore::predicate_vector(const std::string& symbol) const {
  auto it = pred_index_.find(symbol);
  if (it == pred_index_.end()) throw std::out_of_range("unknown predicate symbol: " + symbol);
  return predicate_rows[it->second].node;
}

const NodePtr& EmbeddingStore::entity_vector(const std::string& symbol) const {
  auto it = ent_index_.find(symbol);
  if (it == ent_index_.end()) throw std::out_of_range("unknown entity symbol: " + symbol);
  return entity_rows[it->second].node;
}

std::pair<std::string, double> EmbeddingStore::nearest_symbol(std::span<const double> query,
                                                              Table table,
                                                              double bandwidth) const {
  const auto& rows = table == Table::predicates ? predicate_rows : entity_rows;
  const auto& symbols = table == Table::predicates ? predicate_symbols : entity_symbols;
  if (rows.empty()) throw std::logic_error("nearest_symbol over an empty table");
  if (query.size() != dim) throw std::invalid_argument("query length does not match dim");

  std::size_t best = 0;
  double best_dist2 = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& row = rows[r].node->value;
    double dist2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      double d = query[i] - row.at(i);
      dist2 += d * d;
    }
    if (r == 0 || dist2 < best_dist2) {
      best = r;
      best_dist2 = dist2;
    }
  }
  return {symbols[best], std::exp(-best_dist2 / bandwidth)};
}

std::vector<Parameter*> EmbeddingStore::parameters() {
  std::vector<Parameter*> out;
  out.reserve(predicate_rows.size() + entity_rows.size());
  for (Parameter& p : predicate_rows) out.push_back(&p);
  for (Parameter& p : entity_rows) out.push_back(&p);
  return out;
}

}  // namespace ctp
