#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ctp/datasets.hpp"
#include "ctp/evaluation.hpp"
#include "json.hpp"
#include "test_helpers.hpp"

using namespace ctp;

namespace {

KinshipConfig small_config() {
  KinshipConfig c;
  c.table = CompositionTable::kinship6();
  c.train_hops = {2, 3};
  c.eval_hops = {4};
  c.instances_per_hop = 25;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("composition tables are total and closed") {
  for (const CompositionTable& t :
       {CompositionTable::kinship9(), CompositionTable::kinship6()}) {
    CHECK_NOTHROW(t.validate_closed(10));
    for (const auto& a : t.relations)
      for (const auto& b : t.relations) CHECK(t.defined(a, b));
  }
  CHECK(CompositionTable::kinship9().relations.size() == 9);
  CHECK(CompositionTable::kinship6().relations.size() == 6);
  CHECK(CompositionTable::kinship9().compose("child", "child") == "grand");
  CHECK(CompositionTable::kinship6().compose("child", "inv-child") == "sibling");
}

TEST_CASE("incomplete tables fail closure validation naming the pair") {
  CompositionTable t;
  t.relations = {"a", "b"};
  t.edge_labels = {"a"};
  t.entries[{"a", "a"}] = "b";  // (b, a) missing
  try {
    t.validate_closed(3);
    CHECK(false);
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("(b, a)") != std::string::npos);
  }
}

TEST_CASE("generated chains have derivable targets and exact hop counts") {
  KinshipConfig config = small_config();
  KinshipSplits splits = generate_kinship_instances(config, 11);
  CHECK(splits.train.size() == 50);
  CHECK(splits.eval.size() == 25);

  for (const GraphInstance& inst : splits.train) {
    CHECK((inst.hops == 2 || inst.hops == 3));
    CHECK(inst.edges.size() == static_cast<std::size_t>(inst.hops));
    CHECK(inst.query.first == "e0");
    CHECK(inst.query.second == "e" + std::to_string(inst.hops));

    // fold the chain through the table
    std::string acc = inst.edges[0][1];
    for (std::size_t i = 1; i < inst.edges.size(); ++i)
      acc = config.table.compose(acc, inst.edges[i][1]);
    CHECK(acc == inst.target);
  }
}

TEST_CASE("oracle confirms the target and refutes every other relation") {
  KinshipConfig config = small_config();
  config.eval_hops = {4, 5};
  KinshipSplits splits = generate_kinship_instances(config, 17);
  std::vector<GraphInstance> all = splits.train;
  all.insert(all.end(), splits.eval.begin(), splits.eval.end());

  for (const GraphInstance& inst : all) {
    KnowledgeBase kb = instance_kb(inst, &config.table);
    Atom goal{inst.target,
              {Term::constant(inst.query.first), Term::constant(inst.query.second)}};
    CHECK(symbolic_entails(kb, goal, inst.hops - 1));
    int entailed = 0;
    for (const std::string& r : config.table.relations) {
      goal.predicate = r;
      if (symbolic_entails(kb, goal, inst.hops - 1)) ++entailed;
    }
    CHECK(entailed == 1);  // exactly the target
  }
}

TEST_CASE("distractor branches do not change the derivable target") {
  KinshipConfig config = small_config();
  config.distractors = 3;
  KinshipSplits splits = generate_kinship_instances(config, 23);
  for (const GraphInstance& inst : splits.train) {
    CHECK(inst.edges.size() == static_cast<std::size_t>(inst.hops + 3));
    KnowledgeBase kb = instance_kb(inst, &config.table);
    int entailed = 0;
    for (const std::string& r : config.table.relations) {
      Atom goal{r, {Term::constant(inst.query.first), Term::constant(inst.query.second)}};
      if (symbolic_entails(kb, goal, inst.hops - 1)) ++entailed;
    }
    CHECK(entailed == 1);
  }
}

TEST_CASE("generation is deterministic per seed, byte for byte") {
  KinshipConfig config = small_config();
  KinshipSplits a = generate_kinship_instances(config, 42);
  KinshipSplits b = generate_kinship_instances(config, 42);
  CHECK(a.train == b.train);
  CHECK(a.eval == b.eval);

  write_instances_jsonl("gen_a.jsonl", a.train);
  write_instances_jsonl("gen_b.jsonl", b.train);
  CHECK(slurp("gen_a.jsonl") == slurp("gen_b.jsonl"));
  std::remove("gen_a.jsonl");
  std::remove("gen_b.jsonl");

  KinshipSplits c = generate_kinship_instances(config, 43);
  CHECK(a.train != c.train);
}

TEST_CASE("zero instances per hop yields empty splits") {
  KinshipConfig config = small_config();
  config.instances_per_hop = 0;
  KinshipSplits splits = generate_kinship_instances(config, 1);
  CHECK(splits.train.empty());
  CHECK(splits.eval.empty());
}

TEST_CASE("instance jsonl round trip with exact keys") {
  KinshipConfig config = small_config();
  KinshipSplits splits = generate_kinship_instances(config, 5);
  write_instances_jsonl("roundtrip.jsonl", splits.train);
  std::vector<GraphInstance> loaded = load_instances_jsonl("roundtrip.jsonl");
  CHECK(loaded == splits.train);

  std::ifstream in("roundtrip.jsonl");
  std::string first_line;
  std::getline(in, first_line);
  auto j = nlohmann::json::parse(first_line);
  std::set<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.insert(it.key());
  CHECK(keys == std::set<std::string>{"edges", "query", "target", "hops"});
  std::remove("roundtrip.jsonl");
}

TEST_CASE("instance_kb exposes edges as facts") {
  GraphInstance inst;
  inst.edges = {{"e0", "child", "e1"}, {"e1", "child", "e2"}};
  inst.query = {"e0", "e2"};
  inst.target = "grand";
  inst.hops = 2;
  KnowledgeBase kb = instance_kb(inst);
  CHECK(kb.facts.size() == 2);
  CHECK(kb.has_fact(testutil::fact("child", "e0", "e1")));
  CHECK(kb.entity_vocab == std::vector<std::string>{"e0", "e1", "e2"});
}

TEST_CASE("synthetic geography splits are disjoint and rule-recoverable") {
  GeoConfig config;
  GeoSplits splits = generate_geo_s1(config, 3);

  FactSet train_set;
  for (const Atom& f : splits.train) train_set.insert(f);
  for (const Atom& f : splits.valid) CHECK_FALSE(train_set.contains(f));
  for (const Atom& f : splits.test) CHECK_FALSE(train_set.contains(f));
  CHECK(splits.valid.size() == static_cast<std::size_t>(config.valid_countries));
  CHECK(splits.test.size() == static_cast<std::size_t>(config.test_countries));

  // every held-out country->region fact is derivable through its subregion
  KnowledgeBase kb = kb_from_facts(splits.train);
  Rule chain;
  chain.head = testutil::atom("locatedIn", testutil::var("X"), testutil::var("Y"));
  chain.body = {testutil::atom("locatedIn", testutil::var("X"), testutil::var("Z")),
                testutil::atom("locatedIn", testutil::var("Z"), testutil::var("Y"))};
  kb.add_rule(chain);
  for (const Atom& held : splits.valid) CHECK(symbolic_entails(kb, held, 1));
  for (const Atom& held : splits.test) CHECK(symbolic_entails(kb, held, 1));

  GeoSplits again = generate_geo_s1(config, 3);
  CHECK(again.train == splits.train);
  CHECK(again.test == splits.test);
}

TEST_CASE("write_facts emits parseable files in both formats") {
  std::vector<Atom> facts = {testutil::fact("p", "a", "b"), testutil::fact("q", "b", "c")};
  for (FactFormat f : {FactFormat::prolog, FactFormat::tsv}) {
    write_facts("facts_out.txt", facts, f);
    KnowledgeBase kb = load_kb("facts_out.txt", f);
    CHECK(kb.facts == facts);
  }
  std::remove("facts_out.txt");
}
