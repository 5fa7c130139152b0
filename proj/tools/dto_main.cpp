#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "dto/cli.hpp"
#include "dto/errors.hpp"
#include "dto/synthetic.hpp"

namespace {

using namespace dto;

std::set<MetricId> parse_metrics(const std::vector<std::string>& names) {
  std::set<MetricId> out;
  for (const auto& n : names) out.insert(parse_metric(n));
  return out;
}

FieldMap load_fields(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open field map " + path);
  return FieldMap::from_json(nlohmann::json::parse(in));
}

struct ConfigOverrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::string objective;
  std::optional<std::size_t> epochs;
  std::optional<double> learning_rate;
  std::optional<std::size_t> batch_size;

  void attach(CLI::App* app, bool training) {
    app->add_option("-c,--config", config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "override the run seed");
    app->add_option("-o,--output-dir", output_dir, "override the output directory");
    if (training) {
      app->add_option("--objective", objective, "NLL | DTO-Score | DTO-Delta | DTO-Score+Delta | CPO | DPO");
      app->add_option("--epochs", epochs);
      app->add_option("--lr", learning_rate);
      app->add_option("--batch-size", batch_size);
    }
  }

  RunConfig resolve() const {
    std::ifstream in(config);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(config + ": " + e.what());
    }
    if (seed) j["seed"] = *seed;
    if (!output_dir.empty()) j["output_dir"] = output_dir;
    auto& train = j["train"];
    if (train.is_null()) train = nlohmann::json::object();
    if (!objective.empty()) train["objective"]["variant"] = objective;
    if (epochs) train["epochs"] = *epochs;
    if (learning_rate) train["learning_rate"] = *learning_rate;
    if (batch_size) train["batch_size"] = *batch_size;
    if (seed) train["seed"] = *seed;
    return RunConfig::from_json(j);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual story rewriting: training, evaluation and LLM baselines"};
  app.require_subcommand(1);

  // data
  auto* data = app.add_subcommand("data", "check or summarize dataset splits");
  data->require_subcommand(1);
  std::string d_train, d_val, d_test, d_mode = "full", d_fields;
  for (auto* sub : {data->add_subcommand("validate", "parse every record"),
                    data->add_subcommand("stats", "counts and ending-length statistics")}) {
    sub->add_option("--train", d_train);
    sub->add_option("--validation", d_val);
    sub->add_option("--test", d_test);
    sub->add_option("--mode", d_mode, "full | ablated | art")->capture_default_str();
    sub->add_option("--fields", d_fields, "JSON field-name map");
  }
  auto* synth = data->add_subcommand("synth", "write a synthetic story corpus as JSONL");
  std::size_t s_count = 16;
  std::uint64_t s_seed = 0;
  std::string s_out, s_prefix = "syn";
  synth->add_option("--count", s_count)->capture_default_str();
  synth->add_option("--seed", s_seed)->capture_default_str();
  synth->add_option("--id-prefix", s_prefix)->capture_default_str();
  synth->add_option("-o,--output", s_out)->required();

  // train
  auto* train = app.add_subcommand("train", "train a generator");
  ConfigOverrides train_cfg;
  train_cfg.attach(train, true);

  // predict
  auto* predict = app.add_subcommand("predict", "greedy predictions from a checkpoint");
  std::string p_ckpt, p_input, p_split = "test", p_mode = "full", p_out, p_fields;
  std::optional<std::size_t> p_max_len;
  predict->add_option("--checkpoint", p_ckpt)->required()->check(CLI::ExistingFile);
  predict->add_option("--input", p_input)->required();
  predict->add_option("--split", p_split)->capture_default_str();
  predict->add_option("--mode", p_mode)->capture_default_str();
  predict->add_option("-o,--output", p_out)->required();
  predict->add_option("--max-len", p_max_len);
  predict->add_option("--fields", p_fields);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score predictions against references");
  EvaluateRequest ev;
  std::string e_split = "test", e_mode = "full", e_fields;
  std::string e_scorer;
  std::vector<std::string> e_metrics = {"rouge_l", "bleu"};
  evaluate->add_option("--predictions", ev.predictions)->required();
  evaluate->add_option("--input", ev.input)->required();
  evaluate->add_option("--split", e_split)->capture_default_str();
  evaluate->add_option("--mode", e_mode)->capture_default_str();
  evaluate->add_option("--metrics", e_metrics, "scorer_ll, rouge_l, bleu")->capture_default_str();
  evaluate->add_option("--scorer", e_scorer, "scorer checkpoint (for scorer_ll)");
  evaluate->add_option("-o,--output-dir", ev.output_dir)->capture_default_str();
  evaluate->add_option("--method", ev.method, "row label in report.csv")->capture_default_str();
  evaluate->add_flag("--multi-reference-bleu", ev.multi_reference_bleu);
  evaluate->add_option("--fields", e_fields);

  // compare
  auto* compare = app.add_subcommand("compare", "paired one-tailed bootstrap test (is A better than B?)");
  std::string c_a, c_b, c_metric = "rouge_l", c_column = "adjusted", c_out;
  std::size_t c_resamples = 10000;
  std::uint64_t c_seed = 0;
  compare->add_option("a", c_a, "per_sample.jsonl of system A")->required();
  compare->add_option("b", c_b, "per_sample.jsonl of system B")->required();
  compare->add_option("--metric", c_metric)->capture_default_str();
  compare->add_option("--column", c_column, "predictive | delta | adjusted")->capture_default_str();
  compare->add_option("--resamples", c_resamples)->capture_default_str();
  compare->add_option("--seed", c_seed)->capture_default_str();
  compare->add_option("-o,--output", c_out, "also write the JSON result here");

  // llm
  auto* llm = app.add_subcommand("llm", "prompted LLM baselines");
  ConfigOverrides llm_cfg;
  llm_cfg.attach(llm, false);
  std::vector<std::string> l_modes;
  llm->add_option("--modes", l_modes, "zero_shot, one_shot_random, one_shot_fixed, one_shot_rag");
  auto* index = llm->add_subcommand("index", "embed the training split into a retrieval store");
  std::string i_out;
  index->add_option("--store", i_out, "output store path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      std::vector<nlohmann::json> rows;
      for (const auto& r : synthetic_corpus(s_count, s_seed, s_prefix)) rows.push_back(to_json(r));
      write_text(s_out, "");
      write_jsonl(s_out, rows);
    } else if (data->parsed()) {
      std::map<Split, std::string> paths;
      if (!d_train.empty()) paths[Split::kTrain] = d_train;
      if (!d_val.empty()) paths[Split::kValidation] = d_val;
      if (!d_test.empty()) paths[Split::kTest] = d_test;
      if (paths.empty()) throw ConfigError("data: pass at least one of --train, --validation, --test");
      const TaskMode mode = parse_task_mode(d_mode);
      const FieldMap fields = load_fields(d_fields);
      const auto out = data->got_subcommand("validate") ? cmd_data_validate(paths, mode, fields)
                                                        : cmd_data_stats(paths, mode, fields);
      std::cout << out.dump(2) << "\n";
    } else if (train->parsed()) {
      const auto art = cmd_train(train_cfg.resolve());
      std::cout << nlohmann::json{{"generator", art.generator_checkpoint},
                                  {"scorer", art.scorer_checkpoint},
                                  {"history", art.history_csv},
                                  {"config", art.config_json}}
                       .dump(2)
                << "\n";
    } else if (predict->parsed()) {
      const auto preds = cmd_predict(p_ckpt, p_input, parse_split(p_split), parse_task_mode(p_mode),
                                     p_out, p_max_len, load_fields(p_fields));
      std::size_t empty = 0;
      for (const auto& p : preds) empty += p.text.empty();
      std::cerr << preds.size() << " predictions (" << empty << " empty) -> " << p_out << "\n";
    } else if (evaluate->parsed()) {
      ev.split = parse_split(e_split);
      ev.mode = parse_task_mode(e_mode);
      ev.metrics = parse_metrics(e_metrics);
      if (!e_scorer.empty()) ev.scorer_checkpoint = e_scorer;
      ev.fields = load_fields(e_fields);
      const auto report = cmd_evaluate(ev);
      std::cout << report_csv(ev.method, report);
    } else if (compare->parsed()) {
      const auto res = cmd_compare(c_a, c_b, parse_metric(c_metric), parse_score_column(c_column),
                                   c_resamples, c_seed);
      const auto j = res.to_json();
      if (!c_out.empty()) write_text(c_out, j.dump(2) + "\n");
      std::cout << j.dump(2) << "\n";
    } else if (llm->parsed()) {
      RunConfig cfg = llm_cfg.resolve();
      if (index->parsed()) {
        const auto store = cmd_build_store(cfg, i_out);
        std::cerr << store.size() << " entries -> " << i_out << "\n";
      } else {
        if (!l_modes.empty()) {
          cfg.llm.modes.clear();
          for (const auto& m : l_modes) cfg.llm.modes.push_back(parse_prompt_mode(m));
        }
        const auto rows = cmd_llm(cfg);
        std::size_t failed = 0;
        for (const auto& r : rows) failed += r.error.has_value();
        std::cerr << rows.size() << " rows (" << failed << " failed) -> " << cfg.output_dir
                  << "/llm_predictions.jsonl\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}
