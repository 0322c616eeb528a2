#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ctp/autodiff.hpp"
#include "ctp/logic.hpp"

namespace ctp {

// Trainable symbol tables: one k-vector parameter per predicate and per
// entity. Rows are independent leaves so gradients stay sparse.
struct EmbeddingStore {
  std::size_t dim = 0;
  std::vector<std::string> predicate_symbols;
  std::vector<std::string> entity_symbols;
  std::vector<Parameter> predicate_rows;
  std::vector<Parameter> entity_rows;

  enum class Table { predicates, entities };

  // Entries drawn i.i.d. Normal(0, scale^2); deterministic per seed.
  static EmbeddingStore init(const KnowledgeBase& kb, std::size_t dim, std::uint64_t seed,
                             double scale);

  const NodePtr& predicate_vector(const std::string& symbol) const;
  const NodePtr& entity_vector(const std::string& symbol) const;
  bool has_predicate(const std::string& symbol) const { return pred_index_.contains(symbol); }
  bool has_entity(const std::string& symbol) const { return ent_index_.contains(symbol); }
  std::size_t predicate_count() const { return predicate_rows.size(); }
  std::size_t entity_count() const { return entity_rows.size(); }

  // Argmax of K(query, row) over a table; ties broken by lowest row index.
  std::pair<std::string, double> nearest_symbol(std::span<const double> query, Table table,
                                                double bandwidth = 1.0) const;

  // All rows, predicates first, in vocabulary order.
  std::vector<Parameter*> parameters();

  void rebuild_index();

 private:
  std::unordered_map<std::string, std::size_t> pred_index_;
  std::unordered_map<std::string, std::size_t> ent_index_;
};

}  // namespace ctp
