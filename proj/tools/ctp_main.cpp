#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <algorithm>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctp/checkpoint.hpp"
#include "ctp/datasets.hpp"
#include "ctp/evaluation.hpp"
#include "ctp/gradcheck_suite.hpp"
#include "ctp/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::string token;
  for (char ch : s + ",") {
    if (ch == ',') {
      if (!token.empty()) out.push_back(std::stoi(token));
      token.clear();
    } else {
      token.push_back(ch);
    }
  }
  return out;
}

std::string rule_to_string(const ctp::Rule& rule) {
  auto atom = [](const ctp::Atom& a) {
    return a.predicate + "(" + a.args[0].text + "," + a.args[1].text + ")";
  };
  std::string out = atom(rule.head) + " :- ";
  for (std::size_t i = 0; i < rule.body.size(); ++i) out += (i ? ", " : "") + atom(rule.body[i]);
  return out;
}

json trace_to_json(const ctp::TracePtr& leaf) {
  std::vector<const ctp::TraceNode*> chain;
  for (const ctp::TraceNode* t = leaf.get(); t; t = t->parent.get()) chain.push_back(t);
  std::reverse(chain.begin(), chain.end());

  json root = json::array();
  // Parents are the most recent shallower-depth rule events.
  std::vector<std::pair<int, json*>> stack{{1 << 30, &root}};
  for (const ctp::TraceNode* t : chain) {
    while (stack.size() > 1 && stack.back().first <= t->depth) stack.pop_back();
    json event;
    event["kind"] = t->kind;
    event["step"] = t->description;
    event["depth"] = t->depth;
    event["kernels"] = t->kernels;
    event["success"] = t->success_after;
    json bindings = json::object();
    for (const auto& [var, term] : t->new_bindings) bindings[var] = term.text;
    event["bindings"] = std::move(bindings);
    event["children"] = json::array();
    json* where = stack.back().second;
    where->push_back(std::move(event));
    if (t->kind == "rule") stack.push_back({t->depth, &where->back()["children"]});
  }
  return root;
}

std::vector<std::string> parse_str_list(const std::string& s) {
  std::vector<std::string> out;
  std::string token;
  for (char ch : s + ",") {
    if (ch == ',') {
      if (!token.empty()) out.push_back(token);
      token.clear();
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      token.push_back(ch);
    }
  }
  return out;
}

int run_generate(const std::string& task, const std::string& out_dir, std::uint64_t seed,
                 const std::string& train_hops, const std::string& eval_hops, int n,
                 int distractors, int relations, const std::string& labels,
                 const ctp::GeoConfig& geo) {
  fs::create_directories(out_dir);
  if (task == "kinship") {
    ctp::KinshipConfig config;
    config.table = relations == 2   ? ctp::CompositionTable::grandparent()
                   : relations == 6 ? ctp::CompositionTable::kinship6()
                                    : ctp::CompositionTable::kinship9();
    if (!labels.empty()) {
      config.table.edge_labels = parse_str_list(labels);
      for (const std::string& l : config.table.edge_labels)
        if (std::find(config.table.relations.begin(), config.table.relations.end(), l) ==
            config.table.relations.end())
          throw std::invalid_argument("--labels names unknown relation: " + l);
    }
    config.train_hops = parse_int_list(train_hops);
    config.eval_hops = parse_int_list(eval_hops);
    config.instances_per_hop = n;
    config.distractors = distractors;
    ctp::KinshipSplits splits = ctp::generate_kinship_instances(config, seed);
    ctp::write_instances_jsonl(out_dir + "/train.jsonl", splits.train);
    ctp::write_instances_jsonl(out_dir + "/eval.jsonl", splits.eval);
    std::cout << "wrote " << splits.train.size() << " train / " << splits.eval.size()
              << " eval instances to " << out_dir << "\n";
    return 0;
  }
  if (task == "geo-s1") {
    ctp::GeoSplits splits = ctp::generate_geo_s1(geo, seed);
    ctp::write_facts(out_dir + "/train.txt", splits.train, ctp::FactFormat::tsv);
    ctp::write_facts(out_dir + "/valid.txt", splits.valid, ctp::FactFormat::tsv);
    ctp::write_facts(out_dir + "/test.txt", splits.test, ctp::FactFormat::tsv);
    std::cout << "wrote " << splits.train.size() << " train / " << splits.valid.size()
              << " valid / " << splits.test.size() << " test facts to " << out_dir << "\n";
    return 0;
  }
  throw std::invalid_argument("unknown generation task: " + task);
}

struct TrainOverrides {
  long seed = -1;
  long epochs = -1;
  long dim = -1;
  long depth = -1;
  std::string variant;
  std::string reformulators;
};

int run_train(const std::string& config_path, const std::string& out_dir,
              const TrainOverrides& over) {
  std::ifstream in(config_path);
  if (!in) throw std::runtime_error("cannot open config: " + config_path);
  json config_json = json::parse(in);
  ctp::TrainConfig config = ctp::train_config_from_json(config_json);
  if (over.seed >= 0) config.seed = static_cast<std::uint64_t>(over.seed);
  if (over.epochs >= 0) config.epochs = static_cast<int>(over.epochs);
  if (over.dim > 0) config.dim = static_cast<std::size_t>(over.dim);
  if (over.depth >= 0) config.depth = static_cast<int>(over.depth);
  if (!over.variant.empty()) {
    config.variant = ctp::reform_variant_from(over.variant);
    for (ctp::ReformSpec& spec : config.reformulators) spec.variant = config.variant;
  }
  if (!over.reformulators.empty())
    config.reformulators = ctp::parse_reformulator_specs(over.reformulators, config.variant);

  ctp::TrainData data = ctp::load_train_data(config);
  ctp::TrainResult result = ctp::train(config, data);

  fs::create_directories(out_dir);
  std::string metrics_name = "metrics.jsonl";
  {
    std::ofstream metrics(out_dir + "/" + metrics_name);
    for (const json& entry : result.metric_log) metrics << entry.dump() << "\n";
  }
  json echo = ctp::train_config_to_json(config);
  echo["relations"] = result.relations;
  ctp::Model best = ctp::model_from_json(result.best_model_state);
  ctp::save_checkpoint(out_dir + "/best.json", best, echo, metrics_name);
  ctp::save_checkpoint(out_dir + "/last.json", result.model, echo, metrics_name);

  std::cout << "best val_metric " << result.best_metric << " at epoch " << result.best_epoch
            << (result.diverged ? " (diverged, last good checkpoint retained)" : "") << "\n"
            << "checkpoints written to " << out_dir << "\n";
  return 0;
}

struct EvalOptions {
  std::string checkpoint;
  std::string train_path, valid_path, test_path;
  std::string instances_path;
  std::string split;       // resolves to <data>/<split>.jsonl when set
  std::string data_dir = "data";
  std::string format = "tsv";
  std::string metric;  // "", "mrr", "auc_pr"
  int depth = -1;
  bool adaptive_depth = false;
  bool trace = false;
  int trace_limit = 10;
  bool rules = false;
  std::string out_path;
  std::vector<std::string> asserts;
  std::uint64_t seed = 0;
};

bool apply_asserts(const std::vector<std::string>& asserts, const json& metrics) {
  bool ok = true;
  for (const std::string& a : asserts) {
    auto pos = a.find(">=");
    if (pos == std::string::npos)
      throw std::invalid_argument("--assert expects metric>=value, got: " + a);
    std::string key = a.substr(0, pos);
    double threshold = std::stod(a.substr(pos + 2));
    if (!metrics.contains(key))
      throw std::invalid_argument("--assert names unknown metric: " + key);
    double actual = metrics.at(key).get<double>();
    bool pass = actual >= threshold;
    std::cout << (pass ? "assert ok: " : "assert FAILED: ") << key << "=" << actual
              << " (need >= " << threshold << ")\n";
    ok = ok && pass;
  }
  return ok;
}

int run_eval(const EvalOptions& opt) {
  ctp::Checkpoint ck = ctp::load_checkpoint(opt.checkpoint);
  ctp::TrainConfig train_config = ctp::train_config_from_json(ck.config);
  int depth = opt.depth >= 0 ? opt.depth : train_config.depth;
  ctp::FactFormat format =
      opt.format == "prolog" ? ctp::FactFormat::prolog : ctp::FactFormat::tsv;

  std::string instances_path = opt.instances_path;
  if (instances_path.empty() && !opt.split.empty())
    instances_path = opt.data_dir + "/" + opt.split + ".jsonl";

  json report;
  report["config"] = ck.config;
  report["seed"] = opt.seed;
  json metrics = json::object();
  json traces = json::array();

  if (!instances_path.empty()) {
    report["task"] = "classification";
    std::vector<ctp::GraphInstance> instances = ctp::load_instances_jsonl(instances_path);
    std::vector<std::string> relations =
        ck.config.value("relations", std::vector<std::string>{});
    if (relations.empty()) relations = ck.model.store.predicate_symbols;
    ctp::ModelRelationScorer scorer(ck.model, opt.adaptive_depth ? -1 : depth, relations);
    ctp::HopAccuracy per_hop = ctp::per_hop_accuracy(scorer, instances);
    json hops = json::object();
    int correct = 0, total = 0;
    for (const auto& [hop, bucket] : per_hop) {
      hops[std::to_string(hop)] = {{"accuracy", bucket.accuracy()}, {"n", bucket.total}};
      metrics["accuracy_hop" + std::to_string(hop)] = bucket.accuracy();
      correct += bucket.correct;
      total += bucket.total;
    }
    metrics["accuracy"] = total == 0 ? 0.0 : static_cast<double>(correct) / total;
    report["per_hop"] = hops;

    if (opt.trace) {
      ctp::ProverConfig cfg = ck.model.prover_config(depth);
      cfg.trace = true;
      for (std::size_t i = 0; i < instances.size() && i < static_cast<std::size_t>(opt.trace_limit);
           ++i) {
        const ctp::GraphInstance& inst = instances[i];
        ctp::KnowledgeBase kb = ctp::instance_kb(inst);
        ctp::Search search(kb, ck.model.store, cfg);
        ctp::Atom goal{inst.target,
                       {ctp::Term::constant(inst.query.first),
                        ctp::Term::constant(inst.query.second)}};
        ctp::ProveResult pr = ctp::prove_with(search, goal);
        traces.push_back({{"goal", ctp::format_fact(goal, ctp::FactFormat::prolog)},
                          {"score", pr.value},
                          {"proof", trace_to_json(pr.best_trace)}});
      }
    }
  } else {
    report["task"] = "link_prediction";
    if (opt.train_path.empty() || opt.test_path.empty())
      throw std::invalid_argument("link-prediction eval needs --train and --test files");
    ctp::KnowledgeBase kb = ctp::load_kb(opt.train_path, format);
    std::vector<ctp::Atom> valid_facts, test_facts;
    if (!opt.valid_path.empty()) valid_facts = ctp::load_kb(opt.valid_path, format).facts;
    test_facts = ctp::load_kb(opt.test_path, format).facts;
    for (const auto* split : {&valid_facts, &test_facts})
      for (const ctp::Atom& f : *split) {
        kb.add_predicate(f.predicate);
        kb.add_entity(f.args[0].text);
        kb.add_entity(f.args[1].text);
      }
    ctp::FactSet known;
    for (const ctp::Atom& f : kb.facts) known.insert(f);
    for (const ctp::Atom& f : valid_facts) known.insert(f);
    for (const ctp::Atom& f : test_facts) known.insert(f);

    ctp::ProverConfig cfg = ck.model.prover_config(depth);
    ctp::Search search(kb, ck.model.store, cfg);
    if (opt.metric == "auc_pr") {
      metrics["auc_pr"] = ctp::object_candidates_auc_pr(search, test_facts, known);
    } else {
      std::vector<ctp::RankingResult> results;
      for (const ctp::Atom& f : test_facts) {
        results.push_back(ctp::rank_entities(search, f, ctp::CorruptSlot::subject, known));
        results.push_back(ctp::rank_entities(search, f, ctp::CorruptSlot::object, known));
      }
      ctp::RankingMetrics rm = ctp::mrr_hits(results);
      metrics["mrr"] = rm.mrr;
      for (const auto& [k, v] : rm.hits) metrics["hits@" + std::to_string(k)] = v;
    }

    if (opt.trace) {
      ctp::ProverConfig tcfg = ck.model.prover_config(depth);
      tcfg.trace = true;
      ctp::Search tsearch(kb, ck.model.store, tcfg);
      for (std::size_t i = 0; i < test_facts.size() && i < static_cast<std::size_t>(opt.trace_limit);
           ++i) {
        ctp::ProveResult pr = ctp::prove_with(tsearch, test_facts[i]);
        traces.push_back({{"goal", ctp::format_fact(test_facts[i], ctp::FactFormat::prolog)},
                          {"score", pr.value},
                          {"proof", trace_to_json(pr.best_trace)}});
      }
    }
  }

  if (opt.rules) {
    json rules = json::array();
    for (const ctp::ExtractedRule& e : ctp::extract_rules(ck.model))
      rules.push_back({{"goal_predicate", e.goal_predicate},
                       {"reformulator", e.reformulator_index},
                       {"rule", rule_to_string(e.decoded.rule)},
                       {"similarities", e.decoded.slot_similarities},
                       {"mean_similarity", e.decoded.mean_similarity}});
    report["rules"] = std::move(rules);
  }
  if (opt.trace) report["traces"] = std::move(traces);
  report["metrics"] = metrics;

  std::string dump = report.dump(2);
  if (!opt.out_path.empty()) {
    fs::create_directories(fs::path(opt.out_path).parent_path().string().empty()
                               ? "."
                               : fs::path(opt.out_path).parent_path().string());
    std::ofstream out(opt.out_path);
    out << dump << "\n";
    std::cout << "report written to " << opt.out_path << "\n";
  } else {
    std::cout << dump << "\n";
  }
  return apply_asserts(opt.asserts, metrics) ? 0 : 3;
}

int run_extract(const std::string& checkpoint, const std::string& out_path) {
  ctp::Checkpoint ck = ctp::load_checkpoint(checkpoint);
  std::vector<ctp::ExtractedRule> rules = ctp::extract_rules(ck.model);
  json out = json::array();
  for (const ctp::ExtractedRule& e : rules) {
    out.push_back({{"goal_predicate", e.goal_predicate},
                   {"reformulator", e.reformulator_index},
                   {"rule", rule_to_string(e.decoded.rule)},
                   {"similarities", e.decoded.slot_similarities},
                   {"mean_similarity", e.decoded.mean_similarity}});
    std::cout << std::fixed << std::setprecision(3) << e.decoded.mean_similarity << "  "
              << rule_to_string(e.decoded.rule) << "  [reformulator " << e.reformulator_index
              << "]\n";
  }
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    f << out.dump(2) << "\n";
  }
  return 0;
}

int run_gradcheck(std::uint64_t seed, int samples, double epsilon) {
  ctp::GradCheckReport ops = ctp::gradcheck_ops(seed, samples, epsilon);
  double prove_err = ctp::gradcheck_prove(seed, epsilon);
  double worst = std::max(ops.max_rel_error, prove_err);
  std::cout << "op graphs checked: " << ops.graphs << " (max rel error " << ops.max_rel_error
            << ")\n"
            << "prove graph max rel error: " << prove_err << "\n"
            << "max relative error: " << worst << "\n";
  return worst <= 1e-4 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentiable backward-chaining prover with goal-conditioned rule generation"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "generate synthetic datasets");
  std::string gen_task = "kinship", gen_out = "data", gen_train_hops = "2,3",
              gen_eval_hops = "4,5";
  std::uint64_t gen_seed = 0;
  int gen_n = 200, gen_distractors = 0, gen_relations = 9;
  std::string gen_labels;
  ctp::GeoConfig geo;
  gen->add_option("--task", gen_task, "kinship | geo-s1")->capture_default_str();
  gen->add_option("--out", gen_out, "output directory")->capture_default_str();
  gen->add_option("--seed", gen_seed, "generation seed")->capture_default_str();
  gen->add_option("--train-hops", gen_train_hops, "comma-separated hop counts")
      ->capture_default_str();
  gen->add_option("--eval-hops", gen_eval_hops, "comma-separated hop counts")
      ->capture_default_str();
  gen->add_option("--n", gen_n, "instances per hop")->capture_default_str();
  gen->add_option("--distractors", gen_distractors, "branch edges per instance")
      ->capture_default_str();
  gen->add_option("--relations", gen_relations, "kinship relation count (9, 6, or 2)")
      ->capture_default_str();
  gen->add_option("--labels", gen_labels, "restrict kinship edge labels (comma-separated)");
  gen->add_option("--regions", geo.regions, "geo-s1: regions")->capture_default_str();
  gen->add_option("--subregions", geo.subregions_per_region, "geo-s1: subregions per region")
      ->capture_default_str();
  gen->add_option("--countries", geo.countries_per_subregion, "geo-s1: countries per subregion")
      ->capture_default_str();
  gen->add_option("--valid-countries", geo.valid_countries, "geo-s1: held-out valid countries")
      ->capture_default_str();
  gen->add_option("--test-countries", geo.test_countries, "geo-s1: held-out test countries")
      ->capture_default_str();
  gen->add_option("--neighbors", geo.neighbor_pairs, "geo-s1: neighbour pairs")
      ->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "train a model from a JSON config");
  std::string tr_config, tr_out = "run";
  TrainOverrides tr_over;
  tr->add_option("--config", tr_config, "JSON config path")->required();
  tr->add_option("--out", tr_out, "output directory")->capture_default_str();
  tr->add_option("--seed", tr_over.seed, "override config seed");
  tr->add_option("--epochs", tr_over.epochs, "override config epochs");
  tr->add_option("--dim", tr_over.dim, "override embedding dimension");
  tr->add_option("--depth", tr_over.depth, "override proof depth");
  tr->add_option("--variant", tr_over.variant, "override variant: linear|attentive|memory");
  tr->add_option("--reformulators", tr_over.reformulators,
                 "override templates, e.g. chain,chain,direct");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  EvalOptions opt;
  ev->add_option("--checkpoint", opt.checkpoint, "checkpoint path")->required();
  ev->add_option("--train,--kb", opt.train_path, "training facts (proof KB)");
  ev->add_option("--valid", opt.valid_path, "validation facts (for filtering)");
  ev->add_option("--test", opt.test_path, "test facts to rank");
  ev->add_option("--instances", opt.instances_path, "instance JSONL (classification)");
  ev->add_option("--split", opt.split, "instance split name, resolved as <data>/<split>.jsonl");
  ev->add_option("--data", opt.data_dir, "directory for --split")->capture_default_str();
  ev->add_option("--format", opt.format, "fact file format: tsv | prolog")
      ->capture_default_str();
  ev->add_option("--metric", opt.metric, "link-prediction metric: mrr | auc_pr");
  ev->add_option("--depth", opt.depth, "proof depth (default: training depth)");
  ev->add_flag("--adaptive-depth", opt.adaptive_depth,
               "per-instance proof depth of hops-1 (classification)");
  ev->add_flag("--trace", opt.trace, "emit proof traces");
  ev->add_option("--trace-limit", opt.trace_limit, "max traces")->capture_default_str();
  ev->add_flag("--rules", opt.rules, "include decoded rules in the report");
  ev->add_option("--out", opt.out_path, "report path (default: stdout)");
  ev->add_option("--assert", opt.asserts, "metric>=value, exit 3 when violated");
  ev->add_option("--seed", opt.seed, "echoed into the report")->capture_default_str();

  // extract-rules
  auto* ex = app.add_subcommand("extract-rules", "decode rules from a checkpoint");
  std::string ex_checkpoint, ex_out;
  std::uint64_t ex_seed = 0;
  ex->add_option("--checkpoint", ex_checkpoint, "checkpoint path")->required();
  ex->add_option("--out", ex_out, "JSON output path");
  ex->add_option("--seed", ex_seed, "accepted for uniformity; decoding is deterministic")
      ->capture_default_str();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of all gradients");
  std::uint64_t gc_seed = 0;
  int gc_samples = 10;
  double gc_eps = 1e-5;
  gc->add_option("--seed", gc_seed, "seed")->capture_default_str();
  gc->add_option("--samples", gc_samples, "graphs per op kind")->capture_default_str();
  gc->add_option("--eps", gc_eps, "finite-difference step")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // 0 for --help, 1 for usage errors
  }

  try {
    if (gen->parsed())
      return run_generate(gen_task, gen_out, gen_seed, gen_train_hops, gen_eval_hops, gen_n,
                          gen_distractors, gen_relations, gen_labels, geo);
    if (tr->parsed()) return run_train(tr_config, tr_out, tr_over);
    if (ev->parsed()) return run_eval(opt);
    if (ex->parsed()) return run_extract(ex_checkpoint, ex_out);
    if (gc->parsed()) return run_gradcheck(gc_seed, gc_samples, gc_eps);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
