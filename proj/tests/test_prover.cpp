#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ctp/prover.hpp"
#include "ctp/reformulator.hpp"
#include "test_helpers.hpp"

using namespace ctp;
using testutil::atom;
using testutil::con;
using testutil::fact;
using testutil::var;

namespace {

struct Collect final : StateSink {
  mutable std::vector<ProofState> states;
  void operator()(ProofState s) const override { states.push_back(std::move(s)); }
};

}  // namespace

TEST_CASE("embed_atom grounds constants and passes variables through") {
  KnowledgeBase kb = testutil::example_kb();
  EmbeddingStore store = EmbeddingStore::init(kb, 6, 0, 1.0);

  EmbeddedAtom g = embed_atom(fact("g", "rick", "morty"), store, {});
  CHECK(g.predicate.get() == store.predicate_vector("g").get());
  CHECK(g.args[0].symbol == "rick");
  CHECK(g.args[0].vec.get() == store.entity_vector("rick").get());
  CHECK(g.args[1].symbol == "morty");

  Substitution s{{"X", con("rick")}};
  EmbeddedAtom p = embed_atom(atom("p", var("X"), var("Z")), store, s);
  CHECK(p.args[0].symbol == "rick");
  CHECK(p.args[1].is_variable());
  CHECK(p.args[1].var == "Z");

  EmbeddedAtom open = embed_atom(atom("p", var("X"), var("Y")), store, {});
  CHECK(open.args[0].is_variable());
  CHECK(open.args[1].is_variable());

  CHECK_THROWS(embed_atom(fact("p", "nobody", "rick"), store, {}));
}

TEST_CASE("unify binds variables and scores identical predicates at 1") {
  KnowledgeBase kb = testutil::example_kb();
  EmbeddingStore store = EmbeddingStore::init(kb, 6, 1, 1.0);
  ProverConfig cfg;
  Search search(kb, store, cfg);

  EmbeddedAtom head = embed_atom(atom("g", var("X"), var("Y")), store, {});
  EmbeddedAtom goal = embed_atom(fact("g", "rick", "morty"), store, {});
  auto state = unify(head, goal, search.initial_state(), search);
  REQUIRE(state);
  CHECK(state->subst.at("X") == con("rick"));
  CHECK(state->subst.at("Y") == con("morty"));
  CHECK(state->value() == 1.0);
}

TEST_CASE("unify scores lexically different predicates by their kernel") {
  KnowledgeBase kb = testutil::example_kb();
  kb.add_predicate("grandPa");
  EmbeddingStore store = EmbeddingStore::init(kb, 6, 2, 0.8);
  ProverConfig cfg;
  Search search(kb, store, cfg);

  EmbeddedAtom head = embed_atom(atom("grandPa", var("X"), var("Y")), store, {});
  EmbeddedAtom goal = embed_atom(fact("g", "rick", "morty"), store, {});
  auto state = unify(head, goal, search.initial_state(), search);
  REQUIRE(state);
  double expected = gaussian_kernel(store.predicate_vector("grandPa"),
                                    store.predicate_vector("g"))
                        ->value.scalar_value();
  CHECK(state->value() == expected);
  CHECK(state->value() < 1.0);
}

TEST_CASE("unify on one-hot embeddings yields exp(-2) per mismatched slot") {
  KnowledgeBase kb;
  kb.add_fact(fact("p", "a", "b"));
  kb.add_fact(fact("p", "a", "c"));
  Model model = testutil::onehot_model(kb, {});
  ProverConfig cfg;
  Search search(kb, model.store, cfg);

  EmbeddedAtom head = embed_atom(fact("p", "a", "b"), model.store, {});
  EmbeddedAtom goal = embed_atom(fact("p", "a", "c"), model.store, {});
  auto state = unify(head, goal, search.initial_state(), search);
  REQUIRE(state);
  CHECK(state->value() == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
}

TEST_CASE("unify fails only on conflicting re-binding of a bound variable") {
  KnowledgeBase kb;
  kb.add_fact(fact("p", "a", "b"));
  Model model = testutil::onehot_model(kb, {});
  ProverConfig cfg;
  Search search(kb, model.store, cfg);

  // head p(X,X) against goal p(a,b): X/a then X vs b conflicts
  EmbeddedAtom head = embed_atom(atom("p", var("X"), var("X")), model.store, {});
  EmbeddedAtom goal = embed_atom(fact("p", "a", "b"), model.store, {});
  CHECK_FALSE(unify(head, goal, search.initial_state(), search).has_value());

  // same constant on both positions is fine
  EmbeddedAtom goal2 = embed_atom(fact("p", "a", "a"), model.store, {});
  auto ok = unify(head, goal2, search.initial_state(), search);
  REQUIRE(ok);
  CHECK(ok->value() == 1.0);

  // variable-vs-variable binds head var to goal var without a kernel factor
  EmbeddedAtom head3 = embed_atom(atom("p", var("U"), var("V")), model.store, {});
  EmbeddedAtom goal3 = embed_atom(atom("p", var("G"), con("b")), model.store, {});
  auto vv = unify(head3, goal3, search.initial_state(), search);
  REQUIRE(vv);
  CHECK(vv->subst.at("U") == var("G"));
  CHECK(vv->subst.at("V") == con("b"));
  CHECK(vv->value() == 1.0);
}

TEST_CASE("or_step yields fact unifications at depth 0") {
  KnowledgeBase kb = testutil::example_kb();
  Model model = testutil::onehot_model(kb, {testutil::grandparent_rule()});
  ProverConfig cfg = model.prover_config(0);
  cfg.prune = false;
  Search search(kb, model.store, cfg);

  Collect sink;
  or_step(embed_atom(fact("p", "rick", "beth"), model.store, {}), 0, search.initial_state(),
          search, sink);
  REQUIRE(sink.states.size() == 2);  // one state per KB fact
  CHECK(sink.states[0].value() == 1.0);
  CHECK(sink.states[1].value() < 1.0);

  ProverConfig no_facts = model.prover_config(0);
  no_facts.unify_facts = false;
  Search search2(kb, model.store, no_facts);
  Collect sink2;
  or_step(embed_atom(fact("p", "rick", "beth"), model.store, {}), 0, search2.initial_state(),
          search2, sink2);
  CHECK(sink2.states.empty());
}

TEST_CASE("or_step at depth 1 applies the reformulated rule recursively") {
  KnowledgeBase kb = testutil::example_kb();
  Model model = testutil::onehot_model(kb, {testutil::grandparent_rule()});
  ProverConfig cfg = model.prover_config(1);
  cfg.prune = false;
  cfg.collapse_ground = false;
  Search search(kb, model.store, cfg);

  Collect sink;
  or_step(embed_atom(fact("g", "rick", "morty"), model.store, {}), 1, search.initial_state(),
          search, sink);
  // 2 direct fact unifications + 2x2 chain groundings through the rule
  CHECK(sink.states.size() == 6);
  double best = 0.0;
  for (const ProofState& st : sink.states) best = std::max(best, st.value());
  CHECK(best == 1.0);  // p(rick,Z)/p(Z,morty) both ground out exactly
}

TEST_CASE("and_step base cases") {
  KnowledgeBase kb = testutil::example_kb();
  Model model = testutil::onehot_model(kb, {});
  ProverConfig cfg = model.prover_config(1);
  cfg.prune = false;
  cfg.collapse_ground = false;
  Search search(kb, model.store, cfg);

  Collect empty_body;
  and_step({}, 0, 0, search.initial_state(), search, empty_body);
  REQUIRE(empty_body.states.size() == 1);
  CHECK(empty_body.states[0].value() == 1.0);

  std::vector<EmbeddedAtom> body = {
      embed_atom(atom("p", var("X"), var("Z")), model.store, {}),
      embed_atom(atom("p", var("Z"), var("Y")), model.store, {})};

  Collect exhausted;
  and_step(body, 0, 0, search.initial_state(), search, exhausted);
  CHECK(exhausted.states.empty());

  ProofState bound = search.initial_state();
  bound.subst = {{"X", con("rick")}, {"Y", con("morty")}};
  Collect chain;
  and_step(body, 0, 1, bound, search, chain);
  CHECK(chain.states.size() == 4);  // soft unification keeps every fact pairing
  bool found_exact = false;
  for (const ProofState& st : chain.states)
    if (st.subst.at("Z") == con("beth") && st.value() == 1.0) found_exact = true;
  CHECK(found_exact);
}

TEST_CASE("prove on the shared-embedding grandparent goal reaches 1") {
  KnowledgeBase kb = testutil::example_kb();
  Model model = testutil::onehot_model(kb, {testutil::grandparent_rule()});
  ProverConfig cfg = model.prover_config(1);
  ProveResult r = prove(kb, model.store, cfg, fact("g", "rick", "morty"));
  CHECK(r.value == 1.0);
  CHECK(prove(kb, model.store, cfg, fact("g", "morty", "rick")).value < 0.5);
}

TEST_CASE("prove scores a lexically different goal by the head kernel") {
  KnowledgeBase kb = testutil::example_kb();
  kb.add_predicate("grandPa");
  EmbeddingStore store = EmbeddingStore::init(kb, 8, 5, 0.6);
  Model model;
  model.store = std::move(store);
  model.reformulators.push_back(
      Reformulator::fixed_rule(testutil::grandparent_rule(), model.store));

  ProverConfig cfg = model.prover_config(1);
  double expected = gaussian_kernel(model.store.predicate_vector("grandPa"),
                                    model.store.predicate_vector("g"))
                        ->value.scalar_value();
  ProveResult r = prove(kb, model.store, cfg, fact("grandPa", "rick", "morty"));
  // best path: rule head kernel vs grandPa, exact body groundings
  CHECK(r.value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("prove returns constant 0 for an empty stream") {
  KnowledgeBase kb;
  kb.add_predicate("p");
  kb.add_entity("a");
  Model model = testutil::onehot_model(kb, {});
  ProverConfig cfg = model.prover_config(2);
  ProveResult r = prove(kb, model.store, cfg, fact("p", "a", "a"));
  CHECK(r.value == 0.0);
  CHECK_FALSE(r.score->requires_grad);
}

TEST_CASE("prove requires ground goals and known symbols") {
  KnowledgeBase kb = testutil::example_kb();
  Model model = testutil::onehot_model(kb, {});
  ProverConfig cfg = model.prover_config(1);
  CHECK_THROWS(prove(kb, model.store, cfg, atom("p", var("X"), con("beth"))));
  CHECK_THROWS(prove(kb, model.store, cfg, fact("nope", "rick", "beth")));
}

TEST_CASE("masked facts are skipped during fact unification") {
  KnowledgeBase kb = testutil::example_kb();
  Model model = testutil::onehot_model(kb, {});
  ProverConfig cfg = model.prover_config(0);
  Atom target = fact("p", "rick", "beth");
  ProveResult with = prove(kb, model.store, cfg, target);
  CHECK(with.value == 1.0);
  cfg.masked_fact = &target;
  ProveResult without = prove(kb, model.store, cfg, target);
  CHECK(without.value < 1.0);  // only the other fact's soft match remains
}

TEST_CASE("score stays in [0,1] and thresholded prove matches the oracle") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    testutil::RandomCase rc = testutil::random_case(seed);
    Model model = testutil::onehot_model(rc.kb, rc.rules);
    ProverConfig cfg = model.prover_config(rc.depth);

    KnowledgeBase oracle_kb = rc.kb;
    for (const Rule& r : rc.rules) oracle_kb.add_rule(r);

    for (const std::string& p : rc.kb.predicate_vocab)
      for (const std::string& a : rc.kb.entity_vocab)
        for (const std::string& b : rc.kb.entity_vocab) {
          Atom goal = fact(p, a, b);
          double score = prove(rc.kb, model.store, cfg, goal).value;
          CHECK(score >= 0.0);
          CHECK(score <= 1.0);
          CHECK((score > 0.5) == symbolic_entails(oracle_kb, goal, rc.depth));
          ++checked;
        }
  }
  CHECK(checked > 1000);
}

TEST_CASE("prove equals the brute-force max over all proof paths") {
  for (std::uint64_t seed = 100; seed < 112; ++seed) {
    testutil::RandomCase rc = testutil::random_case(seed);
    Model model = testutil::onehot_model(rc.kb, rc.rules);
    ProverConfig cfg = model.prover_config(rc.depth);
    for (const std::string& p : rc.kb.predicate_vocab) {
      Atom goal = fact(p, rc.kb.entity_vocab[0], rc.kb.entity_vocab.back());
      double fast = prove(rc.kb, model.store, cfg, goal).value;
      double slow = testutil::brute_force_prove(rc.kb, model, goal, rc.depth);
      CHECK(fast == doctest::Approx(slow).epsilon(1e-12));
    }
  }
}

TEST_CASE("prove is monotone in depth and in reformulator count") {
  for (std::uint64_t seed = 200; seed < 212; ++seed) {
    testutil::RandomCase rc = testutil::random_case(seed);
    Model model = testutil::onehot_model(rc.kb, rc.rules);
    Atom goal = fact(rc.kb.predicate_vocab[0], rc.kb.entity_vocab[0],
                     rc.kb.entity_vocab[rc.kb.entity_vocab.size() / 2]);

    double prev = -1.0;
    for (int d = 0; d <= 2; ++d) {
      ProverConfig cfg = model.prover_config(d);
      double v = prove(rc.kb, model.store, cfg, goal).value;
      CHECK(v >= prev);
      prev = v;
    }

    std::vector<const Reformulator*> all = model.reformulator_ptrs();
    prev = -1.0;
    for (std::size_t n = 0; n <= all.size(); ++n) {
      ProverConfig cfg;
      cfg.depth = rc.depth;
      cfg.reformulators.assign(all.begin(), all.begin() + static_cast<long>(n));
      double v = prove(rc.kb, model.store, cfg, goal).value;
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("pruning and ground-collapse both preserve the max exactly") {
  for (std::uint64_t seed = 300; seed < 310; ++seed) {
    testutil::RandomCase rc = testutil::random_case(seed);
    Model model = testutil::onehot_model(rc.kb, rc.rules);
    ProverConfig pruned = model.prover_config(rc.depth);
    ProverConfig full = model.prover_config(rc.depth);
    full.prune = false;
    full.collapse_ground = false;
    ProverConfig half = model.prover_config(rc.depth);
    half.collapse_ground = false;
    for (const std::string& p : rc.kb.predicate_vocab) {
      Atom goal = fact(p, rc.kb.entity_vocab.back(), rc.kb.entity_vocab[0]);
      double a = prove(rc.kb, model.store, pruned, goal).value;
      double b = prove(rc.kb, model.store, full, goal).value;
      double c = prove(rc.kb, model.store, half, goal).value;
      CHECK(a == b);
      CHECK(a == c);
    }
  }
}

TEST_CASE("gradient flows only into the argmax proof path") {
  KnowledgeBase kb;
  kb.add_fact(fact("p", "a", "b"));
  kb.add_fact(fact("q", "a", "b"));
  kb.add_predicate("r");
  EmbeddingStore store = EmbeddingStore::init(kb, 5, 11, 0.5);
  Model model;
  model.store = std::move(store);

  ProverConfig cfg = model.prover_config(0);
  ProveResult res = prove(kb, model.store, cfg, fact("r", "a", "b"));
  double via_p = gaussian_kernel(model.store.predicate_vector("r"),
                                 model.store.predicate_vector("p"))
                     ->value.scalar_value();
  double via_q = gaussian_kernel(model.store.predicate_vector("r"),
                                 model.store.predicate_vector("q"))
                     ->value.scalar_value();
  GradientMap grads = backward(res.score);

  auto grad_norm = [&](const std::string& pred) {
    const Tensor* g = grads.find(model.store.predicate_vector(pred));
    if (!g) return 0.0;
    double n = 0.0;
    for (double v : g->data) n += std::abs(v);
    return n;
  };
  const std::string winner = via_p > via_q ? "p" : "q";
  const std::string loser = via_p > via_q ? "q" : "p";
  CHECK(grad_norm(winner) > 0.0);
  CHECK(grad_norm(loser) == 0.0);
  CHECK(grad_norm("r") > 0.0);
}

TEST_CASE("prove emits a trace for the winning path") {
  KnowledgeBase kb = testutil::example_kb();
  Model model = testutil::onehot_model(kb, {testutil::grandparent_rule()});
  ProverConfig cfg = model.prover_config(1);
  cfg.trace = true;
  ProveResult r = prove(kb, model.store, cfg, fact("g", "rick", "morty"));
  REQUIRE(r.best_trace);

  std::vector<const TraceNode*> chain;
  for (const TraceNode* t = r.best_trace.get(); t; t = t->parent.get()) chain.push_back(t);
  CHECK(chain.size() == 3);  // rule head + two body facts
  CHECK(chain.back()->kind == "rule");
  CHECK(chain.front()->kind == "fact");
  CHECK(r.best_trace->success_after == 1.0);
}

TEST_CASE("or_step yields facts first, then reformulators in declared order") {
  KnowledgeBase kb = testutil::example_kb();
  Rule direct;
  direct.head = atom("g", var("X"), var("Y"));
  direct.body = {atom("p", var("X"), var("Y"))};
  Model model = testutil::onehot_model(kb, {direct, testutil::grandparent_rule()});
  ProverConfig cfg = model.prover_config(1);
  cfg.prune = false;
  cfg.collapse_ground = false;
  cfg.trace = true;
  Search search(kb, model.store, cfg);

  Collect sink;
  or_step(embed_atom(fact("g", "rick", "morty"), model.store, {}), 1, search.initial_state(),
          search, sink);
  REQUIRE(sink.states.size() >= 4);
  // the first two states come from fact unification, later ones from rules
  CHECK(sink.states[0].trace->kind == "fact");
  CHECK(sink.states[1].trace->kind == "fact");
  // first rule state stems from reformulator[0] (the direct rule)
  const TraceNode* root = sink.states[2].trace.get();
  while (root->parent) root = root->parent.get();
  CHECK(root->kind == "rule");
  CHECK(root->description.find("reformulator[0]") != std::string::npos);
  // last yielded state's chain starts at reformulator[1]
  root = sink.states.back().trace.get();
  while (root->parent) root = root->parent.get();
  CHECK(root->description.find("reformulator[1]") != std::string::npos);
}

TEST_CASE("ground-subgoal memo is invalidated when the masked fact changes") {
  KnowledgeBase kb = testutil::example_kb();
  Model model = testutil::onehot_model(kb, {testutil::grandparent_rule()});
  ProverConfig cfg = model.prover_config(1);
  Search search(kb, model.store, cfg);
  Atom goal = fact("g", "rick", "morty");
  Atom leaf = fact("p", "rick", "beth");

  double open_score = prove_with(search, goal).value;
  CHECK(open_score == 1.0);

  cfg.masked_fact = &leaf;  // removes the first chain grounding
  double masked_score = prove_with(search, goal).value;
  CHECK(masked_score < 1.0);

  cfg.masked_fact = nullptr;
  CHECK(prove_with(search, goal).value == 1.0);
}
