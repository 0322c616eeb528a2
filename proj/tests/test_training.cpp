#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ctp/checkpoint.hpp"
#include "ctp/training.hpp"
#include "test_helpers.hpp"

using namespace ctp;
using testutil::fact;

namespace {

// Two-predicate toy task: chains of two child edges, target grand.
CompositionTable grandparent_table() {
  CompositionTable t;
  t.relations = {"child", "grand"};
  t.edge_labels = {"child"};
  t.entries[{"child", "child"}] = "grand";
  return t;
}

TrainConfig toy_config(std::uint64_t seed, int epochs) {
  TrainConfig config;
  config.task = Task::classification;
  config.dim = 8;
  config.depth = 1;
  config.variant = ReformVariant::linear;
  config.reformulators = {ReformSpec{ReformVariant::linear, RulePattern::chain}};
  config.learning_rate = 0.05;
  config.epochs = epochs;
  config.batch_size = 8;
  config.seed = seed;
  config.eval_every = 5;
  config.init_scale = 0.25;
  config.temperature = 0.3;
  return config;
}

TrainData toy_data(std::uint64_t seed, int n = 20) {
  KinshipConfig kc;
  kc.table = grandparent_table();
  kc.train_hops = {2};
  kc.eval_hops = {};
  kc.instances_per_hop = n;
  TrainData data;
  data.train_instances = generate_kinship_instances(kc, seed).train;
  return data;
}

}  // namespace

TEST_CASE("sample_negatives corrupts alternately and avoids known facts") {
  KnowledgeBase kb;
  kb.add_fact(fact("p", "a", "b"));
  kb.add_entity("c");
  Rng rng(1);
  std::vector<Atom> negs = sample_negatives(kb, fact("p", "a", "b"), 1, rng);
  REQUIRE(negs.size() == 1);
  CHECK((negs[0] == fact("p", "a", "a") || negs[0] == fact("p", "a", "c")));
  CHECK_FALSE(kb.has_fact(negs[0]));
}

TEST_CASE("sample_negatives returns fewer with a warning when exhausted") {
  KnowledgeBase kb;
  kb.add_fact(fact("p", "a", "b"));
  std::size_t warnings = 0;
  Rng rng(2);
  std::vector<Atom> negs = sample_negatives(kb, fact("p", "a", "b"), 6, rng, &warnings);
  CHECK(negs.size() == 2);  // p(a,a) and p(b,b) are the only corruptions
  CHECK(warnings == 1);
  std::set<Atom> unique(negs.begin(), negs.end());
  CHECK(unique.size() == negs.size());
}

TEST_CASE("sample_negatives is deterministic per seed stream") {
  KnowledgeBase kb;
  for (int i = 0; i < 8; ++i)
    kb.add_fact(fact("p", "e" + std::to_string(i), "e" + std::to_string((i + 1) % 8)));
  Rng rng_a(7), rng_b(7), rng_c(8);
  Atom target = fact("p", "e0", "e1");
  CHECK(sample_negatives(kb, target, 4, rng_a) == sample_negatives(kb, target, 4, rng_b));
  CHECK(sample_negatives(kb, target, 4, rng_a) != sample_negatives(kb, target, 4, rng_c));
}

TEST_CASE("link prediction loss values") {
  auto s = [](double v) { return constant(v); };
  CHECK(loss_link_prediction({s(1.0 - 1e-7)}, {s(1e-7)})->value.scalar_value() ==
        doctest::Approx(1e-7).epsilon(0.1));
  CHECK(loss_link_prediction({s(0.5)}, {s(0.5)})->value.scalar_value() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-9));

  NodePtr pos = make(Tensor::scalar(0.6), true);
  GradientMap g = backward(loss_link_prediction({pos}, {}));
  CHECK(g.find(pos)->scalar_value() < 0.0);  // raising the positive lowers the loss

  NodePtr neg = make(Tensor::scalar(0.6), true);
  GradientMap g2 = backward(loss_link_prediction({}, {neg}));
  CHECK(g2.find(neg)->scalar_value() > 0.0);
}

TEST_CASE("classification loss values") {
  NodePtr separated = constant(Tensor::vec({1.0, 0.0, 0.0}));
  CHECK(loss_classification(separated, 0, 0.1)->value.scalar_value() ==
        doctest::Approx(0.0).epsilon(1e-4));

  NodePtr uniform = constant(Tensor::vec({0.4, 0.4, 0.4}));
  CHECK(loss_classification(uniform, 1, 0.1)->value.scalar_value() ==
        doctest::Approx(std::log(3.0)).epsilon(1e-9));

  // loss is smallest when the target is the argmax
  NodePtr scores = constant(Tensor::vec({0.9, 0.2, 0.4}));
  double right = loss_classification(scores, 0)->value.scalar_value();
  double wrong = loss_classification(scores, 1)->value.scalar_value();
  CHECK(right < wrong);
}

TEST_CASE("adam first step has learning-rate magnitude") {
  Parameter p = Parameter::create("w", Tensor::vec({1.0, -2.0}));
  std::vector<Parameter*> params{&p};
  OptimizerState state;
  state.init(params);
  AdamHyper hyper;
  hyper.learning_rate = 0.01;

  GradientMap grads;
  grads.grads.emplace(p.node.get(), Tensor::vec({0.5, -0.25}));
  Tensor before = p.node->value;
  adam_step(params, grads, state, hyper);
  CHECK(p.node->value.at(0) == doctest::Approx(before.at(0) - 0.01).epsilon(1e-4));
  CHECK(p.node->value.at(1) == doctest::Approx(before.at(1) + 0.01).epsilon(1e-4));
  CHECK(state.step == 1);
}

TEST_CASE("adam leaves zero-gradient parameters unchanged while moments decay") {
  Parameter p = Parameter::create("w", Tensor::vec({1.0}));
  std::vector<Parameter*> params{&p};
  OptimizerState state;
  state.init(params);
  AdamHyper hyper;

  GradientMap first;
  first.grads.emplace(p.node.get(), Tensor::vec({1.0}));
  adam_step(params, first, state, hyper);
  double m_after_first = state.m[0].at(0);
  Tensor value_after_first = p.node->value;

  GradientMap zeros;
  zeros.grads.emplace(p.node.get(), Tensor::vec({0.0}));
  adam_step(params, zeros, state, hyper);
  CHECK(p.node->value == value_after_first);
  CHECK(std::abs(state.m[0].at(0)) < std::abs(m_after_first));
}

TEST_CASE("adam skips absent and non-finite gradients") {
  Parameter a = Parameter::create("a", Tensor::vec({1.0}));
  Parameter b = Parameter::create("b", Tensor::vec({2.0}));
  std::vector<Parameter*> params{&a, &b};
  OptimizerState state;
  state.init(params);
  AdamHyper hyper;

  GradientMap grads;  // only a present
  grads.grads.emplace(a.node.get(), Tensor::vec({1.0}));
  adam_step(params, grads, state, hyper);
  CHECK(a.node->value.at(0) != 1.0);
  CHECK(b.node->value.at(0) == 2.0);
  CHECK(state.m[1].at(0) == 0.0);  // untouched entirely

  GradientMap bad;
  Tensor nan_grad = Tensor::vec({0.0});
  nan_grad.data[0] = std::nan("");
  bad.grads.emplace(a.node.get(), nan_grad);
  Tensor before = a.node->value;
  adam_step(params, bad, state, hyper);
  CHECK(a.node->value == before);
  CHECK(state.warnings == 1);
}

TEST_CASE("adam trajectories are deterministic") {
  auto run = [] {
    Parameter p = Parameter::create("w", Tensor::vec({0.3, -0.8, 1.4}));
    std::vector<Parameter*> params{&p};
    OptimizerState state;
    state.init(params);
    AdamHyper hyper;
    Rng rng(5);
    for (int i = 0; i < 25; ++i) {
      GradientMap grads;
      std::vector<double> g(3);
      for (double& v : g) v = rng.next_double() - 0.5;
      grads.grads.emplace(p.node.get(), Tensor::vec(g));
      adam_step(params, grads, state, hyper);
    }
    return p.node->value.data;
  };
  CHECK(run() == run());
}

TEST_CASE("train with epochs=0 returns the initialised checkpoint and empty log") {
  TrainConfig config = toy_config(0, 0);
  TrainData data = toy_data(0, 8);
  TrainResult result = train(config, data);
  CHECK(result.metric_log.empty());
  CHECK_FALSE(result.best_model_state.is_null());
  CHECK(result.relations == std::vector<std::string>{"child", "grand"});
  Model restored = model_from_json(result.best_model_state);
  CHECK(restored.store.predicate_count() == 2);
}

TEST_CASE("toy-task loss decreases over the first 10 epochs for seeds 0..4") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainConfig config = toy_config(seed, 10);
    TrainData data = toy_data(seed, 16);
    TrainResult result = train(config, data);
    REQUIRE(result.metric_log.size() == 10);
    double first = result.metric_log.front().at("loss").get<double>();
    double last = result.metric_log.back().at("loss").get<double>();
    CHECK(last < first);
  }
}

TEST_CASE("training runs are bit-deterministic given the seed") {
  TrainConfig config = toy_config(3, 6);
  TrainData data = toy_data(3, 10);
  TrainResult a = train(config, data);
  TrainResult b = train(config, data);
  CHECK(a.best_model_state == b.best_model_state);
  REQUIRE(a.metric_log.size() == b.metric_log.size());
  for (std::size_t i = 0; i < a.metric_log.size(); ++i) {
    nlohmann::json ea = a.metric_log[i], eb = b.metric_log[i];
    ea.erase("wall_time_ms");
    eb.erase("wall_time_ms");
    CHECK(ea == eb);
  }
}

TEST_CASE("evaluation facts leaking into the train KB abort training") {
  TrainConfig config;
  config.task = Task::link_prediction;
  config.dim = 4;
  config.epochs = 1;
  TrainData data;
  data.train_kb.add_fact(fact("p", "a", "b"));
  data.train_kb.add_fact(fact("p", "b", "c"));
  data.test_facts = {fact("p", "a", "b")};  // already in train
  CHECK_THROWS_WITH_AS(train(config, data), doctest::Contains("leaked"), std::runtime_error);
}

TEST_CASE("link-prediction training improves validation MRR on a tiny cycle") {
  // six entities in a ring; r-successor facts; hold out two for validation
  TrainData data;
  for (int i = 0; i < 6; ++i)
    data.train_kb.add_fact(
        fact("r", "e" + std::to_string(i), "e" + std::to_string((i + 1) % 6)));
  data.valid_facts = {fact("s", "e0", "e1"), fact("s", "e3", "e4")};
  data.train_kb.add_fact(fact("s", "e1", "e2"));
  data.train_kb.add_fact(fact("s", "e2", "e3"));

  TrainConfig config;
  config.task = Task::link_prediction;
  config.dim = 8;
  config.depth = 0;
  config.reformulators = {};
  config.variant = ReformVariant::linear;
  config.epochs = 8;
  config.eval_every = 4;
  config.batch_size = 4;
  config.seed = 1;
  config.learning_rate = 0.05;
  config.init_scale = 0.3;
  config.negatives_per_positive = 2;

  TrainResult result = train(config, data);
  CHECK(result.metric_log.size() == 8);
  CHECK(result.best_metric > 0.0);
  bool saw_validation = false;
  for (const auto& entry : result.metric_log)
    if (!entry.at("val_metric").is_null()) saw_validation = true;
  CHECK(saw_validation);
}
