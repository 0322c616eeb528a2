#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ctp/logic.hpp"

namespace ctp {

// One relation-classification instance: a labelled graph, a query pair, and
// the relation holding between the query entities.
struct GraphInstance {
  std::vector<std::array<std::string, 3>> edges;  // subject, predicate, object
  std::pair<std::string, std::string> query;
  std::string target;
  int hops = 0;

  bool operator==(const GraphInstance&) const = default;
};

// A total composition map over relation symbols: compose(a, b) is the relation
// holding between x and y whenever a(x,z) and b(z,y). Must be associative for
// generated targets to be unique.
struct CompositionTable {
  std::vector<std::string> relations;
  std::vector<std::string> edge_labels;  // labels the generator draws edges from
  std::map<std::pair<std::string, std::string>, std::string> entries;

  const std::string& compose(const std::string& a, const std::string& b) const;
  bool defined(const std::string& a, const std::string& b) const;

  // Chain rules c(X,Y) :- a(X,Z), b(Z,Y) for every table entry.
  std::vector<Rule> rules() const;

  // Checks every composition reachable by folding edge labels is defined;
  // throws naming the first missing pair.
  void validate_closed(int max_hops) const;

  // Relations form the cyclic group Z_n under index addition.
  static CompositionTable cyclic(std::vector<std::string> names,
                                 std::vector<std::string> labels);
  static CompositionTable kinship9();     // nine family relation types
  static CompositionTable kinship6();     // six-relation variant
  static CompositionTable grandparent();  // child/grand only, child-labelled edges
};

struct KinshipConfig {
  CompositionTable table;
  std::vector<int> train_hops;
  std::vector<int> eval_hops;
  int instances_per_hop = 0;
  int distractors = 0;  // extra branch edges to fresh leaf entities
};

struct KinshipSplits {
  std::vector<GraphInstance> train;
  std::vector<GraphInstance> eval;
};

KinshipSplits generate_kinship_instances(const KinshipConfig& config, std::uint64_t seed);

// Facts from the instance edges; pass a table to also install its chain rules
// (e.g. for the symbolic oracle).
KnowledgeBase instance_kb(const GraphInstance& instance, const CompositionTable* table = nullptr);

void write_instances_jsonl(const std::string& path, const std::vector<GraphInstance>& instances);
std::vector<GraphInstance> load_instances_jsonl(const std::string& path);

// Synthetic region/subregion/country geography for the locatedIn completion
// task: held-out country->region facts are recoverable through
// locatedIn(country, subregion) and locatedIn(subregion, region).
struct GeoConfig {
  int regions = 5;
  int subregions_per_region = 3;
  int countries_per_subregion = 5;
  int valid_countries = 12;
  int test_countries = 12;
  int neighbor_pairs = 40;
};

struct GeoSplits {
  std::vector<Atom> train;
  std::vector<Atom> valid;  // held-out locatedIn(country, region)
  std::vector<Atom> test;   // held-out locatedIn(country, region)
};

GeoSplits generate_geo_s1(const GeoConfig& config, std::uint64_t seed);

void write_facts(const std::string& path, const std::vector<Atom>& facts, FactFormat format);

}  // namespace ctp
