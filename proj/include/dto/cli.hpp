#pragma once

// Command implementations behind the `dto` executable. Each command reads
// files, does its work through the library and writes its artifacts; the
// executable only parses flags and maps errors to exit codes.

#include <cstdint>
#include <exception>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "dto/llm_baselines.hpp"
#include "dto/metrics.hpp"
#include "dto/trainer.hpp"

namespace dto {

struct DataPaths {
  std::optional<std::string> train, validation, test;
  FieldMap fields;
};

struct ScorerSetup {
  std::optional<std::string> checkpoint;  // otherwise pretrained on the training endings
  ScorerPretrainConfig pretrain;
};

struct LlmSetup {
  std::string provider = "mock";  // mock | openai
  MockProvider::Options mock;
  std::vector<PromptMode> modes = all_prompt_modes();
  PromptConfig prompt;
  std::optional<std::string> store;
  bool derive_token_limit = false;  // from the training split's edited endings
  int parallelism = 1;
  RetryPolicy retry;
  std::string chat_model = "gpt-4o-2024-08-06";
  std::string embedding_model = "text-embedding-3-large";
};

struct RunConfig {
  TaskMode mode = TaskMode::kFull;
  std::uint64_t seed = 0;
  DataPaths data;
  std::string output_dir = "run";
  ModelConfig model;
  std::size_t vocab_size = 1000;
  std::optional<std::string> init_checkpoint;
  TrainConfig train;
  ScorerSetup scorer;
  std::set<MetricId> metrics = {MetricId::kScorerLl, MetricId::kRougeL, MetricId::kBleu};
  bool multi_reference_bleu = false;
  LlmSetup llm;

  // `seed` is required; it seeds training, scorer pretraining and prompting
  // unless those sections set their own.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  nlohmann::json to_json() const;
};

// 0 success, 1 usage/config, 2 data, 3 runtime.
int exit_code_for(const std::exception& e);

// --- data -------------------------------------------------------------------

// Parses every record; reports counts per file.
nlohmann::json cmd_data_validate(const std::map<Split, std::string>& paths, TaskMode mode,
                                 const FieldMap& fields = {});
// Counts and ending-length statistics per split, with the derived token limit.
nlohmann::json cmd_data_stats(const std::map<Split, std::string>& paths, TaskMode mode,
                              const FieldMap& fields = {});

// --- train ------------------------------------------------------------------

struct TrainArtifacts {
  std::string generator_checkpoint;
  std::string scorer_checkpoint;
  std::string history_csv;
  std::string config_json;
  TrainResult result;
};

TrainArtifacts cmd_train(const RunConfig& cfg);

// --- predict ----------------------------------------------------------------

// Greedy predictions as JSONL {story_id, mode, prediction[, empty]}.
std::vector<Prediction> cmd_predict(const std::string& checkpoint, const std::string& input,
                                    Split split, TaskMode mode, const std::string& output,
                                    std::optional<std::size_t> max_len = std::nullopt,
                                    const FieldMap& fields = {});

std::vector<Prediction> read_predictions(const std::string& path);

// --- evaluate ---------------------------------------------------------------

struct EvaluateRequest {
  std::string predictions;
  std::string input;
  Split split = Split::kTest;
  TaskMode mode = TaskMode::kFull;
  std::set<MetricId> metrics = {MetricId::kRougeL, MetricId::kBleu};
  std::optional<std::string> scorer_checkpoint;
  std::string output_dir = ".";
  std::string method = "model";
  bool multi_reference_bleu = false;
  FieldMap fields;
};

// Writes report.csv and per_sample.jsonl into output_dir.
MetricReport cmd_evaluate(const EvaluateRequest& req);

// --- compare ----------------------------------------------------------------

enum class ScoreColumn { kPredictive, kDelta, kAdjusted };
ScoreColumn parse_score_column(std::string_view s);

// Paired bootstrap over two per-sample JSONL files (as written by evaluate).
BootstrapResult cmd_compare(const std::string& scores_a, const std::string& scores_b,
                            MetricId metric, ScoreColumn column, std::size_t n_resamples,
                            std::uint64_t seed);

// --- llm --------------------------------------------------------------------

std::unique_ptr<Provider> make_provider(const LlmSetup& setup);

// Runs every configured prompt mode over the test split and writes
// llm_predictions.jsonl into the output directory.
std::vector<BaselineRow> cmd_llm(const RunConfig& cfg);

// Embeds the training split into a retrieval store file.
RetrievalStore cmd_build_store(const RunConfig& cfg, const std::string& output);

// Writes `text` to `path`, creating parent directories.
void write_text(const std::string& path, const std::string& text);

}  // namespace dto
