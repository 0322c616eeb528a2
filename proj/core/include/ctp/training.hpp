#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctp/datasets.hpp"
#include "ctp/evaluation.hpp"
#include "ctp/model.hpp"
#include "ctp/rng.hpp"
#include "json.hpp"

namespace ctp {

enum class Task { link_prediction, classification };
enum class ValMetric { mrr, auc_pr, accuracy };

Task task_from(const std::string& s);
const char* to_string(Task t);
ValMetric val_metric_from(const std::string& s);
const char* to_string(ValMetric m);

struct TrainConfig {
  Task task = Task::link_prediction;
  std::size_t dim = 50;
  int depth = 2;
  ReformVariant variant = ReformVariant::linear;
  std::vector<ReformSpec> reformulators;  // empty -> default five
  int negatives_per_positive = 4;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 100;
  int batch_size = 16;
  std::uint64_t seed = 0;
  int eval_every = 5;
  double init_scale = 0.1;
  double bandwidth = 1.0;
  double temperature = 0.1;   // classification softmax sharpening
  double val_fraction = 0.2;  // classification: validation share of train
  ValMetric val_metric = ValMetric::mrr;

  // link prediction: fact files
  std::string train_path;
  std::string valid_path;
  std::string test_path;
  FactFormat format = FactFormat::tsv;

  // classification: instance files
  std::string train_instances_path;
  std::string eval_instances_path;
};

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& config);

struct TrainData {
  KnowledgeBase train_kb;
  std::vector<Atom> valid_facts;
  std::vector<Atom> test_facts;
  std::vector<GraphInstance> train_instances;
  std::vector<GraphInstance> eval_instances;
};

TrainData load_train_data(const TrainConfig& config);

// Corrupts subject/object alternately with uniform entities, resampling
// corruptions that are known true facts. Returns fewer than n (with a bumped
// warning count) when the vocabulary cannot supply n distinct corruptions.
std::vector<Atom> sample_negatives(const KnowledgeBase& kb, const Atom& fact, int n, Rng& rng,
                                   std::size_t* warnings = nullptr);

// Binary cross-entropy over proof scores, clamped to [1e-7, 1-1e-7], averaged
// over all atoms.
NodePtr loss_link_prediction(const std::vector<NodePtr>& positive_scores,
                             const std::vector<NodePtr>& negative_scores);

// Cross-entropy of softmax(scores / temperature) against the target relation.
NodePtr loss_classification(const NodePtr& relation_scores, std::size_t target,
                            double temperature = 0.1);

struct AdamHyper {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;
  std::size_t warnings = 0;

  void init(const std::vector<Parameter*>& params);
};

// Adam with bias correction. Parameters absent from grads are untouched;
// present-but-all-zero gradients decay the moments but leave the parameter
// unchanged; non-finite gradients skip the tensor with a warning.
void adam_step(const std::vector<Parameter*>& params, const GradientMap& grads,
               OptimizerState& state, const AdamHyper& hyper);

struct TrainResult {
  Model model;                       // parameters after the last step
  nlohmann::json best_model_state;   // snapshot at the best validation metric
  double best_metric = 0.0;
  int best_epoch = 0;
  std::vector<nlohmann::json> metric_log;  // one object per epoch
  bool diverged = false;
  std::vector<std::string> relations;  // classification relation vocabulary
};

TrainResult train(const TrainConfig& config, const TrainData& data);

}  // namespace ctp
