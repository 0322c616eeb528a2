#include "ctp/datasets.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ctp/rng.hpp"
#include "json.hpp"

namespace ctp {

const std::string& CompositionTable::compose(const std::string& a, const std::string& b) const {
  auto it = entries.find({a, b});
  if (it == entries.end())
    throw std::invalid_argument("composition table incomplete: missing (" + a + ", " + b + ")");
  return it->second;
}

bool CompositionTable::defined(const std::string& a, const std::string& b) const {
  return entries.contains({a, b});
}

std::vector<Rule> CompositionTable::rules() const {
  std::vector<Rule> out;
  out.reserve(entries.size());
  Term x = Term::variable("X"), y = Term::variable("Y"), z = Term::variable("Z");
  for (const auto& [pair, result] : entries) {
    Rule r;
    r.head = Atom{result, {x, y}};
    r.body = {Atom{pair.first, {x, z}}, Atom{pair.second, {z, y}}};
    out.push_back(std::move(r));
  }
  return out;
}

void CompositionTable::validate_closed(int max_hops) const {
  if (edge_labels.empty()) throw std::invalid_argument("composition table has no edge labels");
  std::set<std::string> reachable(edge_labels.begin(), edge_labels.end());
  for (int hop = 2; hop <= max_hops; ++hop) {
    std::set<std::string> next;
    for (const auto& a : reachable)
      for (const auto& l : edge_labels) next.insert(compose(a, l));  // throws when missing
    reachable.insert(next.begin(), next.end());
  }
}

CompositionTable CompositionTable::cyclic(std::vector<std::string> names,
                                          std::vector<std::string> labels) {
  CompositionTable t;
  t.relations = std::move(names);
  t.edge_labels = std::move(labels);
  const std::size_t n = t.relations.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      t.entries[{t.relations[i], t.relations[j]}] = t.relations[(i + j) % n];
  return t;
}

CompositionTable CompositionTable::kinship9() {
  // Indices chosen so each relation's inverse sits at -i mod 9.
  return cyclic({"sibling", "child", "grand", "un", "in-law", "inv-in-law", "inv-un",
                 "inv-grand", "inv-child"},
                {"child", "inv-child", "sibling", "un"});
}

CompositionTable CompositionTable::kinship6() {
  return cyclic({"sibling", "child", "grand", "cousin", "inv-grand", "inv-child"},
                {"child", "inv-child", "sibling"});
}

CompositionTable CompositionTable::grandparent() {
  return cyclic({"grand", "child"}, {"child"});
}

namespace {

GraphInstance make_chain_instance(const CompositionTable& table, int hops, int distractors,
                                  Rng& rng) {
  GraphInstance inst;
  inst.hops = hops;
  auto entity = [](int i) { return "e" + std::to_string(i); };
  std::string target;
  for (int i = 0; i < hops; ++i) {
    const std::string& label = table.edge_labels[rng.next_index(table.edge_labels.size())];
    inst.edges.push_back({entity(i), label, entity(i + 1)});
    target = (i == 0) ? label : table.compose(target, label);
  }
  for (int d = 0; d < distractors; ++d) {
    int from = static_cast<int>(rng.next_index(static_cast<std::size_t>(hops + 1)));
    const std::string& label = table.edge_labels[rng.next_index(table.edge_labels.size())];
    inst.edges.push_back({entity(from), label, "d" + std::to_string(d)});
  }
  inst.query = {entity(0), entity(hops)};
  inst.target = target;
  return inst;
}

}  // namespace

KinshipSplits generate_kinship_instances(const KinshipConfig& config, std::uint64_t seed) {
  int max_hops = 1;
  for (int h : config.train_hops) max_hops = std::max(max_hops, h);
  for (int h : config.eval_hops) max_hops = std::max(max_hops, h);
  config.table.validate_closed(max_hops);

  Rng rng(seed);
  KinshipSplits splits;
  for (int h : config.train_hops)
    for (int i = 0; i < config.instances_per_hop; ++i)
      splits.train.push_back(make_chain_instance(config.table, h, config.distractors, rng));
  for (int h : config.eval_hops)
    for (int i = 0; i < config.instances_per_hop; ++i)
      splits.eval.push_back(make_chain_instance(config.table, h, config.distractors, rng));
  return splits;
}

KnowledgeBase instance_kb(const GraphInstance& instance, const CompositionTable* table) {
  KnowledgeBase kb;
  for (const auto& e : instance.edges)
    kb.add_fact(Atom{e[1], {Term::constant(e[0]), Term::constant(e[2])}});
  if (table) {
    for (const auto& r : table->relations) kb.add_predicate(r);
    for (const Rule& rule : table->rules()) kb.add_rule(rule);
  }
  return kb;
}

void write_instances_jsonl(const std::string& path, const std::vector<GraphInstance>& instances) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const GraphInstance& inst : instances) {
    nlohmann::json j;
    j["edges"] = inst.edges;
    j["query"] = {inst.query.first, inst.query.second};
    j["target"] = inst.target;
    j["hops"] = inst.hops;
    out << j.dump() << "\n";
  }
}

std::vector<GraphInstance> load_instances_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open instance file: " + path);
  std::vector<GraphInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    GraphInstance inst;
    inst.edges = j.at("edges").get<std::vector<std::array<std::string, 3>>>();
    auto q = j.at("query").get<std::vector<std::string>>();
    if (q.size() != 2)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": query must have 2 items");
    inst.query = {q[0], q[1]};
    inst.target = j.at("target").get<std::string>();
    inst.hops = j.at("hops").get<int>();
    out.push_back(std::move(inst));
  }
  return out;
}

GeoSplits generate_geo_s1(const GeoConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  GeoSplits splits;
  auto con = [](const std::string& s) { return Term::constant(s); };

  std::vector<std::string> countries;
  std::vector<std::string> country_region;     // region of countries[i]
  std::vector<std::string> country_subregion;  // subregion of countries[i]
  int sub_id = 0, country_id = 0;
  for (int r = 0; r < config.regions; ++r) {
    std::string region = "region" + std::to_string(r);
    for (int s = 0; s < config.subregions_per_region; ++s) {
      std::string sub = "sub" + std::to_string(sub_id++);
      splits.train.push_back(Atom{"locatedIn", {con(sub), con(region)}});
      for (int c = 0; c < config.countries_per_subregion; ++c) {
        std::string country = "c" + std::to_string(country_id++);
        countries.push_back(country);
        country_region.push_back(region);
        country_subregion.push_back(sub);
        splits.train.push_back(Atom{"locatedIn", {con(country), con(sub)}});
      }
    }
  }

  const int held_out = config.valid_countries + config.test_countries;
  if (held_out > static_cast<int>(countries.size()))
    throw std::invalid_argument("not enough countries for the requested valid/test sizes");

  std::vector<std::size_t> order(countries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  for (std::size_t k = 0; k < countries.size(); ++k) {
    std::size_t i = order[k];
    Atom fact{"locatedIn", {con(countries[i]), con(country_region[i])}};
    if (k < static_cast<std::size_t>(config.valid_countries))
      splits.valid.push_back(fact);
    else if (k < static_cast<std::size_t>(held_out))
      splits.test.push_back(fact);
    else
      splits.train.push_back(fact);
  }

  // Neighbour edges between countries of the same subregion, both directions.
  std::set<std::pair<std::size_t, std::size_t>> used;
  int added = 0, attempts = 0;
  while (added < config.neighbor_pairs && attempts < config.neighbor_pairs * 50) {
    ++attempts;
    std::size_t a = rng.next_index(countries.size());
    std::size_t b = rng.next_index(countries.size());
    if (a == b || country_subregion[a] != country_subregion[b]) continue;
    if (a > b) std::swap(a, b);
    if (!used.insert({a, b}).second) continue;
    splits.train.push_back(Atom{"neighborOf", {con(countries[a]), con(countries[b])}});
    splits.train.push_back(Atom{"neighborOf", {con(countries[b]), con(countries[a])}});
    ++added;
  }
  return splits;
}

void write_facts(const std::string& path, const std::vector<Atom>& facts, FactFormat format) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const Atom& f : facts) out << format_fact(f, format) << "\n";
}

}  // namespace ctp
