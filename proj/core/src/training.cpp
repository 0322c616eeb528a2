#include "ctp/training.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "ctp/checkpoint.hpp"

namespace ctp {

Task task_from(const std::string& s) {
  if (s == "link_prediction") return Task::link_prediction;
  if (s == "classification") return Task::classification;
  throw std::invalid_argument("unknown task: " + s);
}

const char* to_string(Task t) {
  return t == Task::link_prediction ? "link_prediction" : "classification";
}

ValMetric val_metric_from(const std::string& s) {
  if (s == "mrr") return ValMetric::mrr;
  if (s == "auc_pr") return ValMetric::auc_pr;
  if (s == "accuracy") return ValMetric::accuracy;
  throw std::invalid_argument("unknown val_metric: " + s);
}

const char* to_string(ValMetric m) {
  switch (m) {
    case ValMetric::mrr: return "mrr";
    case ValMetric::auc_pr: return "auc_pr";
    case ValMetric::accuracy: return "accuracy";
  }
  return "?";
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("task")) c.task = task_from(j.at("task").get<std::string>());
  c.dim = j.value("dim", c.dim);
  c.depth = j.value("depth", c.depth);
  if (j.contains("variant")) c.variant = reform_variant_from(j.at("variant").get<std::string>());
  if (j.contains("reformulators")) {
    const auto& r = j.at("reformulators");
    if (r.is_string()) {
      c.reformulators = parse_reformulator_specs(r.get<std::string>(), c.variant,
                                                 j.value("memory_rules", 32));
    } else {
      for (const auto& rj : r) {
        ReformSpec spec;
        spec.variant = rj.contains("variant")
                           ? reform_variant_from(rj.at("variant").get<std::string>())
                           : c.variant;
        spec.pattern = rule_pattern_from(rj.value("pattern", "chain"));
        spec.head_mode = head_mode_from(rj.value("head_mode", "goal"));
        spec.memory_rules = rj.value("memory_rules", 32);
        c.reformulators.push_back(spec);
      }
    }
  }
  c.negatives_per_positive = j.value("negatives_per_positive", c.negatives_per_positive);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.bandwidth = j.value("bandwidth", c.bandwidth);
  c.temperature = j.value("temperature", c.temperature);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  if (j.contains("val_metric"))
    c.val_metric = val_metric_from(j.at("val_metric").get<std::string>());
  else
    c.val_metric = c.task == Task::classification ? ValMetric::accuracy : ValMetric::mrr;
  c.train_path = j.value("train", "");
  c.valid_path = j.value("valid", "");
  c.test_path = j.value("test", "");
  if (j.contains("format"))
    c.format = j.at("format").get<std::string>() == "prolog" ? FactFormat::prolog
                                                             : FactFormat::tsv;
  c.train_instances_path = j.value("train_instances", "");
  c.eval_instances_path = j.value("eval_instances", "");
  return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json r = nlohmann::json::array();
  for (const ReformSpec& s : c.reformulators)
    r.push_back({{"variant", to_string(s.variant)},
                 {"pattern", to_string(s.pattern)},
                 {"head_mode", to_string(s.head_mode)},
                 {"memory_rules", s.memory_rules}});
  return nlohmann::json{
      {"task", to_string(c.task)},
      {"dim", c.dim},
      {"depth", c.depth},
      {"variant", to_string(c.variant)},
      {"reformulators", r},
      {"negatives_per_positive", c.negatives_per_positive},
      {"learning_rate", c.learning_rate},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"epsilon", c.epsilon},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"eval_every", c.eval_every},
      {"init_scale", c.init_scale},
      {"bandwidth", c.bandwidth},
      {"temperature", c.temperature},
      {"val_fraction", c.val_fraction},
      {"val_metric", to_string(c.val_metric)},
      {"train", c.train_path},
      {"valid", c.valid_path},
      {"test", c.test_path},
      {"format", c.format == FactFormat::prolog ? "prolog" : "tsv"},
      {"train_instances", c.train_instances_path},
      {"eval_instances", c.eval_instances_path}};
}

TrainData load_train_data(const TrainConfig& config) {
  TrainData data;
  if (config.task == Task::link_prediction) {
    if (config.train_path.empty()) throw std::invalid_argument("train config needs a train file");
    data.train_kb = load_kb(config.train_path, config.format);
    if (!config.valid_path.empty())
      data.valid_facts = load_kb(config.valid_path, config.format).facts;
    if (!config.test_path.empty())
      data.test_facts = load_kb(config.test_path, config.format).facts;
  } else {
    if (config.train_instances_path.empty())
      throw std::invalid_argument("train config needs a train_instances file");
    data.train_instances = load_instances_jsonl(config.train_instances_path);
    if (!config.eval_instances_path.empty())
      data.eval_instances = load_instances_jsonl(config.eval_instances_path);
  }
  return data;
}

std::vector<Atom> sample_negatives(const KnowledgeBase& kb, const Atom& fact, int n, Rng& rng,
                                   std::size_t* warnings) {
  if (n < 1) throw std::invalid_argument("sample_negatives: n must be >= 1");
  const auto& entities = kb.entity_vocab;
  std::vector<Atom> out;
  std::unordered_set<Atom, AtomHash> produced;

  auto try_slot = [&](std::size_t pos) -> bool {
    const std::string& original = fact.args[pos].text;
    for (int attempt = 0; attempt < 50; ++attempt) {
      const std::string& e = entities[rng.next_index(entities.size())];
      if (e == original) continue;
      Atom corrupted = fact;
      corrupted.args[pos] = Term::constant(e);
      if (kb.has_fact(corrupted) || produced.contains(corrupted)) continue;
      produced.insert(corrupted);
      out.push_back(std::move(corrupted));
      return true;
    }
    // Exhaustive fallback from a random start so small vocabularies terminate.
    std::size_t start = rng.next_index(entities.size());
    for (std::size_t k = 0; k < entities.size(); ++k) {
      const std::string& e = entities[(start + k) % entities.size()];
      if (e == original) continue;
      Atom corrupted = fact;
      corrupted.args[pos] = Term::constant(e);
      if (kb.has_fact(corrupted) || produced.contains(corrupted)) continue;
      produced.insert(corrupted);
      out.push_back(std::move(corrupted));
      return true;
    }
    return false;
  };

  for (int i = 0; i < n; ++i) {
    std::size_t pos = (i % 2 == 0) ? 1 : 0;  // object first, then alternate
    if (!try_slot(pos) && !try_slot(1 - pos)) {
      if (warnings) ++*warnings;
      std::cerr << "warning: only " << out.size() << "/" << n << " distinct corruptions for "
                << format_fact(fact, FactFormat::prolog) << "\n";
      break;
    }
  }
  return out;
}

namespace {

constexpr double kScoreClamp = 1e-7;

NodePtr mean_of(std::vector<NodePtr> terms) {
  const double inv = 1.0 / static_cast<double>(terms.size());
  NodePtr total = terms.size() == 1 ? terms[0] : reduce_sum(concat(std::move(terms)));
  return scale(total, constant(inv));
}

}  // namespace

NodePtr loss_link_prediction(const std::vector<NodePtr>& positive_scores,
                             const std::vector<NodePtr>& negative_scores) {
  if (positive_scores.empty() && negative_scores.empty())
    throw std::invalid_argument("loss_link_prediction: no scores");
  NodePtr one = constant(1.0);
  std::vector<NodePtr> terms;
  terms.reserve(positive_scores.size() + negative_scores.size());
  for (const NodePtr& s : positive_scores)
    terms.push_back(negate(log(clamp(s, kScoreClamp, 1.0 - kScoreClamp))));
  for (const NodePtr& s : negative_scores)
    terms.push_back(negate(log(clamp(sub(one, s), kScoreClamp, 1.0 - kScoreClamp))));
  return mean_of(std::move(terms));
}

NodePtr loss_classification(const NodePtr& relation_scores, std::size_t target,
                            double temperature) {
  if (!(temperature > 0)) throw std::invalid_argument("temperature must be positive");
  NodePtr scaled = scale(relation_scores, constant(1.0 / temperature));
  NodePtr probs = softmax(scaled);
  return negate(log(pick(probs, target)));
}

void OptimizerState::init(const std::vector<Parameter*>& params) {
  m.clear();
  v.clear();
  for (const Parameter* p : params) {
    m.push_back(Tensor::zeros(p->node->value.shape));
    v.push_back(Tensor::zeros(p->node->value.shape));
  }
  step = 0;
}

void adam_step(const std::vector<Parameter*>& params, const GradientMap& grads,
               OptimizerState& state, const AdamHyper& hyper) {
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: optimizer state not initialised for these params");
  ++state.step;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter* p = params[i];
    const Tensor* g = grads.find(p->node);
    if (!g) continue;  // not part of this step's graph
    if (!g->finite()) {
      ++state.warnings;
      std::cerr << "warning: non-finite gradient for " << p->name << ", skipping update\n";
      continue;
    }
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    bool all_zero = true;
    for (std::size_t k = 0; k < g->size(); ++k) {
      double gk = g->data[k];
      m.data[k] = hyper.beta1 * m.data[k] + (1.0 - hyper.beta1) * gk;
      v.data[k] = hyper.beta2 * v.data[k] + (1.0 - hyper.beta2) * gk * gk;
      if (gk != 0.0) all_zero = false;
    }
    if (all_zero) continue;  // moments decay, parameter stays put
    Tensor next = p->node->value;
    for (std::size_t k = 0; k < next.size(); ++k) {
      double mh = m.data[k] / bc1;
      double vh = v.data[k] / bc2;
      next.data[k] -= hyper.learning_rate * mh / (std::sqrt(vh) + hyper.epsilon);
    }
    p->node = make(std::move(next), true, p->name);
  }
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

struct BestTracker {
  nlohmann::json state;
  double metric = -1.0;
  int epoch = 0;

  void consider(double value, int at_epoch, const Model& model) {
    if (state.is_null() || value > metric) {
      metric = value;
      epoch = at_epoch;
      state = model_to_json(model);
    }
  }
};

double validate_link_prediction(Model& model, const KnowledgeBase& kb,
                                const std::vector<Atom>& valid_facts, const FactSet& known,
                                const TrainConfig& config) {
  if (valid_facts.empty()) return 0.0;
  ProverConfig cfg = model.prover_config(config.depth);
  Search search(kb, model.store, cfg);
  if (config.val_metric == ValMetric::auc_pr)
    return object_candidates_auc_pr(search, valid_facts, known);
  std::vector<RankingResult> results;
  results.reserve(valid_facts.size() * 2);
  for (const Atom& f : valid_facts) {
    results.push_back(rank_entities(search, f, CorruptSlot::subject, known));
    results.push_back(rank_entities(search, f, CorruptSlot::object, known));
  }
  return mrr_hits(results).mrr;
}

double validate_classification(Model& model, const std::vector<GraphInstance>& instances,
                               const std::vector<std::string>& relations, int depth) {
  if (instances.empty()) return 0.0;
  ModelRelationScorer scorer(model, depth, relations);
  HopAccuracy per_hop = per_hop_accuracy(scorer, instances);
  int correct = 0, total = 0;
  for (const auto& [hop, bucket] : per_hop) {
    correct += bucket.correct;
    total += bucket.total;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / total;
}

TrainResult train_link_prediction(const TrainConfig& config, const TrainData& data) {
  TrainResult result;
  KnowledgeBase kb = data.train_kb;

  // Evaluation facts contribute vocabulary only; leaking one into the train
  // fact set is a hard error.
  for (const std::vector<Atom>* split : {&data.valid_facts, &data.test_facts})
    for (const Atom& f : *split) {
      if (kb.has_fact(f))
        throw std::runtime_error("evaluation fact leaked into the training KB: " +
                                 format_fact(f, FactFormat::prolog));
      kb.add_predicate(f.predicate);
      kb.add_entity(f.args[0].text);
      kb.add_entity(f.args[1].text);
    }

  FactSet known;
  for (const Atom& f : kb.facts) known.insert(f);
  for (const Atom& f : data.valid_facts) known.insert(f);
  for (const Atom& f : data.test_facts) known.insert(f);

  std::vector<ReformSpec> specs =
      config.reformulators.empty() ? default_reformulator_specs(config.variant)
                                   : config.reformulators;
  Model model = build_model(kb, config.dim, config.seed, config.init_scale, specs,
                            config.bandwidth);
  std::vector<Parameter*> params = model.parameters();
  OptimizerState opt;
  opt.init(params);
  AdamHyper hyper{config.learning_rate, config.beta1, config.beta2, config.epsilon};
  Rng rng(config.seed * 0x9e3779b97f4a7c15ull + 1);

  BestTracker best;
  best.consider(-1.0, 0, model);  // epochs=0 returns the initialised model

  std::vector<std::size_t> order(kb.facts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    auto epoch_start = Clock::now();
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t examples = 0;
    bool diverged = false;

    for (std::size_t begin = 0; begin < order.size() && !diverged;
         begin += static_cast<std::size_t>(config.batch_size)) {
      std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      ProverConfig cfg = model.prover_config(config.depth);
      Search search(kb, model.store, cfg);
      std::vector<NodePtr> losses;
      for (std::size_t k = begin; k < end; ++k) {
        const Atom& fact = kb.facts[order[k]];
        std::vector<Atom> negatives =
            sample_negatives(kb, fact, config.negatives_per_positive, rng, &opt.warnings);
        cfg.masked_fact = &fact;
        NodePtr positive = prove_with(search, fact).score;
        cfg.masked_fact = nullptr;
        std::vector<NodePtr> negative_scores;
        negative_scores.reserve(negatives.size());
        for (const Atom& neg : negatives)
          negative_scores.push_back(prove_with(search, neg).score);
        losses.push_back(loss_link_prediction({positive}, negative_scores));
      }
      NodePtr batch_loss = mean_of(std::move(losses));
      double value = batch_loss->value.scalar_value();
      if (!std::isfinite(value)) {
        diverged = true;
        break;
      }
      epoch_loss += value * static_cast<double>(end - begin);
      examples += end - begin;
      GradientMap grads = backward(batch_loss);
      adam_step(params, grads, opt, hyper);
    }

    nlohmann::json entry;
    entry["epoch"] = epoch;
    entry["loss"] = examples ? epoch_loss / static_cast<double>(examples) : 0.0;
    if (diverged) {
      entry["diverged"] = true;
      entry["wall_time_ms"] = ms_since(epoch_start);
      result.metric_log.push_back(entry);
      result.diverged = true;
      break;
    }
    if (config.eval_every > 0 &&
        (epoch % config.eval_every == 0 || epoch == config.epochs)) {
      double val = validate_link_prediction(model, kb, data.valid_facts, known, config);
      entry["val_metric"] = val;
      best.consider(val, epoch, model);
    } else {
      entry["val_metric"] = nullptr;
    }
    entry["wall_time_ms"] = ms_since(epoch_start);
    result.metric_log.push_back(std::move(entry));
  }

  result.model = std::move(model);
  result.best_model_state = std::move(best.state);
  result.best_metric = best.metric;
  result.best_epoch = best.epoch;
  return result;
}

TrainResult train_classification(const TrainConfig& config, const TrainData& data) {
  TrainResult result;

  // Relation and entity vocabularies in first-encounter order across splits;
  // evaluation instances contribute vocabulary, never gradients.
  KnowledgeBase vocab;
  for (const std::vector<GraphInstance>* split : {&data.train_instances, &data.eval_instances})
    for (const GraphInstance& inst : *split) {
      for (const auto& e : inst.edges) {
        vocab.add_predicate(e[1]);
        vocab.add_entity(e[0]);
        vocab.add_entity(e[2]);
      }
      vocab.add_predicate(inst.target);
      vocab.add_entity(inst.query.first);
      vocab.add_entity(inst.query.second);
    }
  if (vocab.predicate_vocab.empty())
    throw std::invalid_argument("classification training needs at least one instance");
  result.relations = vocab.predicate_vocab;

  std::vector<ReformSpec> specs =
      config.reformulators.empty() ? default_reformulator_specs(config.variant)
                                   : config.reformulators;
  Model model = build_model(vocab, config.dim, config.seed, config.init_scale, specs,
                            config.bandwidth);
  std::vector<Parameter*> params = model.parameters();
  OptimizerState opt;
  opt.init(params);
  AdamHyper hyper{config.learning_rate, config.beta1, config.beta2, config.epsilon};
  Rng rng(config.seed * 0x9e3779b97f4a7c15ull + 1);

  // Carve a validation split from the shuffled training instances.
  std::vector<std::size_t> order(data.train_instances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::size_t val_count = static_cast<std::size_t>(
      std::round(config.val_fraction * static_cast<double>(order.size())));
  if (order.size() > 1) val_count = std::max<std::size_t>(1, std::min(val_count, order.size() - 1));
  else val_count = 0;
  std::vector<GraphInstance> val_instances;
  std::vector<std::size_t> train_order(order.begin(), order.end() - static_cast<long>(val_count));
  for (std::size_t k = order.size() - val_count; k < order.size(); ++k)
    val_instances.push_back(data.train_instances[order[k]]);

  std::unordered_map<std::string, std::size_t> relation_index;
  for (std::size_t i = 0; i < result.relations.size(); ++i)
    relation_index[result.relations[i]] = i;

  BestTracker best;
  best.consider(-1.0, 0, model);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    auto epoch_start = Clock::now();
    rng.shuffle(train_order);
    double epoch_loss = 0.0;
    std::size_t examples = 0;
    bool diverged = false;

    for (std::size_t begin = 0; begin < train_order.size() && !diverged;
         begin += static_cast<std::size_t>(config.batch_size)) {
      std::size_t end =
          std::min(train_order.size(), begin + static_cast<std::size_t>(config.batch_size));
      std::vector<NodePtr> losses;
      ProverConfig cfg = model.prover_config(config.depth);
      for (std::size_t k = begin; k < end; ++k) {
        const GraphInstance& inst = data.train_instances[train_order[k]];
        KnowledgeBase kb = instance_kb(inst);
        Search search(kb, model.store, cfg);
        std::vector<NodePtr> scores;
        scores.reserve(result.relations.size());
        Atom goal{"", {Term::constant(inst.query.first), Term::constant(inst.query.second)}};
        for (const std::string& r : result.relations) {
          goal.predicate = r;
          scores.push_back(prove_with(search, goal).score);
        }
        losses.push_back(loss_classification(concat(std::move(scores)),
                                             relation_index.at(inst.target),
                                             config.temperature));
      }
      NodePtr batch_loss = mean_of(std::move(losses));
      double value = batch_loss->value.scalar_value();
      if (!std::isfinite(value)) {
        diverged = true;
        break;
      }
      epoch_loss += value * static_cast<double>(end - begin);
      examples += end - begin;
      GradientMap grads = backward(batch_loss);
      adam_step(params, grads, opt, hyper);
    }

    nlohmann::json entry;
    entry["epoch"] = epoch;
    entry["loss"] = examples ? epoch_loss / static_cast<double>(examples) : 0.0;
    if (diverged) {
      entry["diverged"] = true;
      entry["wall_time_ms"] = ms_since(epoch_start);
      result.metric_log.push_back(entry);
      result.diverged = true;
      break;
    }
    if (config.eval_every > 0 &&
        (epoch % config.eval_every == 0 || epoch == config.epochs)) {
      double val = validate_classification(model, val_instances, result.relations, config.depth);
      entry["val_metric"] = val;
      best.consider(val, epoch, model);
    } else {
      entry["val_metric"] = nullptr;
    }
    entry["wall_time_ms"] = ms_since(epoch_start);
    result.metric_log.push_back(std::move(entry));
  }

  result.model = std::move(model);
  result.best_model_state = std::move(best.state);
  result.best_metric = best.metric;
  result.best_epoch = best.epoch;
  return result;
}

}  // namespace

TrainResult train(const TrainConfig& config, const TrainData& data) {
  if (config.task == Task::link_prediction) return train_link_prediction(config, data);
  return train_classification(config, data);
}

}  // namespace ctp
