#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "dto/metrics.hpp"
#include "dto/models.hpp"
#include "dto/objectives.hpp"

namespace dto {

struct TrainConfig {
  LossConfig objective;
  double learning_rate = 1e-4;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  std::size_t max_input_len = 1024;
  std::size_t max_output_len = 250;
  std::size_t validation_every = 0;  // steps; 0 validates once per epoch
  std::optional<double> clip_norm = 1.0;
  bool shuffle = true;

  // Hyperparameters used for the full-size pretrained model: lr 5e-9, batch 2,
  // 10 epochs, Gumbel-softmax at temperature 1 without hard sampling.
  static TrainConfig paper_profile();

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::optional<double> train_loss;
  std::optional<double> val_loss;
};

struct TrainHistory {
  std::vector<StepRecord> rows;  // step 0 holds the pre-training validation loss
  std::vector<double> epoch_train_loss;
  std::vector<std::optional<double>> epoch_val_loss;
  std::optional<double> initial_val_loss;
  std::vector<double> epoch_seconds;  // wall clock; not part of the CSV

  std::size_t steps() const;
  // step,epoch,train_loss,val_loss
  std::string to_csv() const;
};

struct TrainOptions {
  const std::vector<Example>* validation = nullptr;
  const GeneratorModel* reference = nullptr;         // DPO; defaults to a frozen start copy
  std::optional<std::string> checkpoint_path;        // written on success and on divergence
  std::function<void(std::size_t epoch, double train_loss)> on_epoch;
};

struct TrainResult {
  TrainHistory history;
  std::uint64_t scorer_checksum_before = 0;
  std::uint64_t scorer_checksum_after = 0;
};

// Trains `gen` in place. Raises DivergenceDetected on a non-finite loss or
// gradient after restoring (and checkpointing) the last good parameters.
TrainResult train(GeneratorModel& gen, const ScorerModel* scorer,
                  const std::vector<Example>& train_set, const TrainConfig& cfg,
                  const TrainOptions& options = {});

struct ValidationResult {
  double mean_loss = 0.0;
  MetricReport report;
  std::vector<Prediction> predictions;
};

// Mean objective loss (Gumbel off, one example per evaluation) plus metric
// scores of greedy predictions. No parameter changes.
ValidationResult validate(const GeneratorModel& gen, const ScorerModel* scorer,
                          const std::vector<Example>& val_set, const TrainConfig& cfg,
                          const std::set<MetricId>& metrics = {},
                          const GeneratorModel* reference = nullptr);

double validation_loss(const GeneratorModel& gen, const ScorerModel* scorer,
                       const std::vector<Example>& val_set, const TrainConfig& cfg,
                       const GeneratorModel* reference = nullptr);

// Greedy predictions for a set of examples, in order.
std::vector<Prediction> predict(const GeneratorModel& gen, const std::vector<Example>& examples,
                                std::size_t max_len, const std::string& mode = "greedy");

struct GradientProbe {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct AuditResult {
  double max_rel_error = 0.0;
  std::vector<GradientProbe> probes;
  bool passed(double tol = 1e-3) const { return max_rel_error <= tol; }
};

struct AuditOptions {
  double eps = 1e-4;
  std::size_t n_params = 32;
  std::uint64_t seed = 0;
  // Negative control: cut the soft prediction from the generator before it
  // reaches the scorer, so analytic gradients vanish.
  bool detach_soft = false;
};

// |a - n| / max(|a|, |n|, 1e-6) between analytic and central-difference
// gradients for randomly chosen parameter entries.
AuditResult finite_difference_audit(GeneratorModel& gen, const ScorerModel* scorer,
                                    const std::vector<const Example*>& batch,
                                    const LossConfig& objective, const AuditOptions& options,
                                    std::size_t max_output_len,
                                    const GeneratorModel* reference = nullptr);

struct ScorerPretrainConfig {
  ModelConfig model;
  std::size_t epochs = 30;
  double learning_rate = 3e-3;
  std::size_t batch_size = 8;
  double noise = 0.15;  // per-token drop / replace probability of the source
  std::uint64_t seed = 0;
};

// Denoising/copy pretraining: learns to reproduce each text from a corrupted
// copy of itself. The returned scorer is frozen.
ScorerModel pretrain_scorer(const Tokenizer& tokenizer, const std::vector<std::string>& texts,
                            const ScorerPretrainConfig& cfg);

}  // namespace dto
