#pragma once

#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dto/models.hpp"
#include "dto/soft_bridge.hpp"

namespace dto {

enum class ObjectiveVariant { kNll, kDtoScore, kDtoDelta, kDtoScoreDelta, kCpo, kDpo };

// Exact names: NLL, DTO-Score, DTO-Delta, DTO-Score+Delta, CPO, DPO.
ObjectiveVariant parse_objective(std::string_view name);
std::string to_string(ObjectiveVariant v);
const std::vector<std::string>& objective_names();

bool needs_scorer(ObjectiveVariant v);
bool needs_reference_policy(ObjectiveVariant v);
bool needs_original_ending(ObjectiveVariant v);

struct LossConfig {
  ObjectiveVariant variant = ObjectiveVariant::kNll;
  double beta = 1.0;    // CPO / DPO
  double lambda = 1.0;  // CPO
  std::optional<GumbelConfig> gumbel;
  // DTO-Delta: floor on the repelled log-likelihood; unset leaves it unbounded.
  std::optional<double> delta_floor;
  // CPO: contrast each pair separately instead of the batch means.
  bool per_sentence_cpo = false;
  // DTO ablation: decode on the reference prefix instead of free-running.
  bool teacher_forced_soft = false;

  void validate() const;
  nlohmann::json to_json() const;
  static LossConfig from_json(const nlohmann::json& j);
};

// Mean over reference positions of -log softmax(logits)[token]. `logits` may
// have extra trailing rows.
ad::Var nll_loss(const ad::Var& logits, const std::vector<int>& reference);

// Negated scorer likelihood of `y_edited` given the soft prediction.
ad::Var dto_score_loss(const SoftSequence& soft, const std::vector<int>& y_edited,
                       const ScorerModel& scorer);
ad::Var dto_delta_loss(const SoftSequence& soft, const std::vector<int>& y_edited,
                       const std::vector<int>& x_original, const ScorerModel& scorer,
                       std::optional<double> floor = std::nullopt);
ad::Var dto_score_delta_loss(const SoftSequence& soft, const std::vector<int>& y_edited,
                             const std::vector<int>& x_original, const ScorerModel& scorer);

// The same losses on precomputed mean log-likelihoods, so several variants can
// share one scorer pass.
ad::Var dto_score_from(const ad::Var& ll_edited);
ad::Var dto_delta_from(const ad::Var& ll_edited, const ad::Var& ll_original,
                       std::optional<double> floor = std::nullopt);
// Built as score + delta so the decomposition holds exactly.
ad::Var dto_score_delta_from(const ad::Var& ll_edited, const ad::Var& ll_original);

// -[log sigmoid(beta*a - beta*b) + lambda*a] on per-token mean log-probs.
ad::Var cpo_loss(const ad::Var& logprob_w, const ad::Var& logprob_l, double beta, double lambda);
double cpo_loss(double logprob_w, double logprob_l, double beta, double lambda);

// -log sigmoid(beta * [(w - w_ref) - (l - l_ref)]).
ad::Var dpo_loss(const ad::Var& w, const ad::Var& l, const ad::Var& w_ref, const ad::Var& l_ref,
                 double beta);
double dpo_loss(double w, double l, double w_ref, double l_ref, double beta);

// Batch-level CPO: contrast of the batch-mean log-probs, one sigmoid per batch.
// With `per_sentence`, the mean of per-pair losses instead.
ad::Var batch_cpo_loss(const std::vector<ad::Var>& logprob_w, const std::vector<ad::Var>& logprob_l,
                       double beta, double lambda, bool per_sentence = false);

// Everything an objective may need besides the generator.
struct ObjectiveContext {
  const ScorerModel* scorer = nullptr;
  const GeneratorModel* reference = nullptr;  // DPO
  std::size_t max_output_len = 250;
  // Gradient-check negative control: the scorer sees a detached copy of the
  // soft prediction.
  bool detach_soft = false;
};

// Loss of one batch under `cfg`. Per-example losses are averaged; CPO follows
// `per_sentence_cpo`. `rng` drives Gumbel noise and may be null when Gumbel
// is off.
ad::Var objective_loss(const GeneratorModel& gen, const std::vector<const Example*>& batch,
                       const LossConfig& cfg, const ObjectiveContext& ctx,
                       std::mt19937_64* rng = nullptr);

}  // namespace dto
