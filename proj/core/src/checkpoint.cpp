#include "ctp/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace ctp {

namespace {

nlohmann::json tensor_to_json(const Tensor& t) {
  return nlohmann::json{{"shape", t.shape}, {"data", t.data}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
  Tensor t;
  t.shape = j.at("shape").get<std::vector<std::size_t>>();
  t.data = j.at("data").get<std::vector<double>>();
  std::size_t n = 1;
  for (std::size_t d : t.shape) n *= d;
  if (t.data.size() != n) throw std::runtime_error("checkpoint tensor shape/data mismatch");
  return t;
}

nlohmann::json table_to_json(std::size_t dim, const std::vector<std::string>& symbols,
                             const std::vector<Parameter>& rows) {
  std::vector<double> flat;
  flat.reserve(symbols.size() * dim);
  for (const Parameter& p : rows)
    flat.insert(flat.end(), p.node->value.data.begin(), p.node->value.data.end());
  return nlohmann::json{{"dim", dim}, {"symbols", symbols}, {"data", flat}};
}

}  // namespace

nlohmann::json model_to_json(const Model& model) {
  nlohmann::json j;
  j["bandwidth"] = model.bandwidth;
  j["embeddings"] = {
      {"predicates",
       table_to_json(model.store.dim, model.store.predicate_symbols, model.store.predicate_rows)},
      {"entities",
       table_to_json(model.store.dim, model.store.entity_symbols, model.store.entity_rows)}};
  j["reformulators"] = nlohmann::json::array();
  for (const Reformulator& r : model.reformulators) {
    nlohmann::json rj;
    rj["variant"] = to_string(r.variant);
    rj["pattern"] = to_string(r.pattern);
    rj["head_mode"] = to_string(r.head_mode);
    rj["memory_rules"] = r.memory_rules;
    rj["trainable"] = r.trainable;
    rj["params"] = nlohmann::json::array();
    for (const Parameter& p : r.params)
      rj["params"].push_back({{"name", p.name}, {"value", tensor_to_json(p.node->value)}});
    j["reformulators"].push_back(std::move(rj));
  }
  return j;
}

Model model_from_json(const nlohmann::json& j) {
  Model model;
  model.bandwidth = j.at("bandwidth").get<double>();

  auto load_table = [](const nlohmann::json& tj, std::vector<std::string>& symbols,
                       std::vector<Parameter>& rows, const std::string& prefix,
                       std::size_t& dim) {
    dim = tj.at("dim").get<std::size_t>();
    symbols = tj.at("symbols").get<std::vector<std::string>>();
    auto flat = tj.at("data").get<std::vector<double>>();
    if (flat.size() != symbols.size() * dim)
      throw std::runtime_error("checkpoint table size mismatch");
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      std::vector<double> row(flat.begin() + static_cast<long>(i * dim),
                              flat.begin() + static_cast<long>((i + 1) * dim));
      rows.push_back(Parameter::create(prefix + symbols[i], Tensor::vec(std::move(row))));
    }
  };

  std::size_t dim = 0;
  load_table(j.at("embeddings").at("predicates"), model.store.predicate_symbols,
             model.store.predicate_rows, "pred:", dim);
  model.store.dim = dim;
  std::size_t ent_dim = 0;
  load_table(j.at("embeddings").at("entities"), model.store.entity_symbols,
             model.store.entity_rows, "ent:", ent_dim);
  if (ent_dim != dim) throw std::runtime_error("checkpoint dim mismatch between tables");
  model.store.rebuild_index();

  for (const auto& rj : j.at("reformulators")) {
    Reformulator r;
    r.variant = reform_variant_from(rj.at("variant").get<std::string>());
    r.pattern = rule_pattern_from(rj.at("pattern").get<std::string>());
    r.head_mode = head_mode_from(rj.at("head_mode").get<std::string>());
    r.memory_rules = rj.at("memory_rules").get<std::size_t>();
    r.trainable = rj.at("trainable").get<bool>();
    r.dim = dim;
    for (const auto& pj : rj.at("params")) {
      std::string name = pj.at("name").get<std::string>();
      Tensor value = tensor_from_json(pj.at("value"));
      if (r.trainable)
        r.params.push_back(Parameter::create(name, std::move(value)));
      else
        r.params.push_back(Parameter{name, make(std::move(value), false, name)});
    }
    model.reformulators.push_back(std::move(r));
  }
  return model;
}

void save_checkpoint(const std::string& path, const Model& model, const nlohmann::json& config,
                     const std::string& metrics_path) {
  nlohmann::json j;
  j["format"] = "ctp-checkpoint-v1";
  j["config"] = config;
  j["metrics_path"] = metrics_path;
  j["model"] = model_to_json(model);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format", "") != "ctp-checkpoint-v1")
    throw std::runtime_error("unrecognised checkpoint format in " + path);
  Checkpoint ck;
  ck.config = j.at("config");
  ck.metrics_path = j.value("metrics_path", "");
  ck.model = model_from_json(j.at("model"));
  return ck;
}

}  // namespace ctp
