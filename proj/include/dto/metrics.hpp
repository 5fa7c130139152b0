#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dto/models.hpp"
#include "dto/story_data.hpp"

namespace dto {

enum class MetricId { kScorerLl, kRougeL, kBleu };

MetricId parse_metric(std::string_view s);
std::string to_string(MetricId m);

// Mean per-token log-probability of `hypothesis` (+ EOS) given `source` under
// the frozen scorer. Always <= 0.
double scorer_ll(const ScorerModel& scorer, const ScorerSource& source,
                 const std::vector<int>& hypothesis);
double scorer_ll(const ScorerModel& scorer, std::string_view source, std::string_view hypothesis);

// Lowercased alphanumeric tokens (ROUGE convention).
std::vector<std::string> rouge_tokens(std::string_view text);
// mteval-v13a style tokens (BLEU convention).
std::vector<std::string> bleu_tokens(std::string_view text);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Sentence ROUGE-L F1 in [0, 1]. Empty on either side scores 0.
double rouge_l(std::string_view hypothesis, std::string_view reference);

struct BleuStats {
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
  std::array<std::size_t, 4> correct{};
  std::array<std::size_t, 4> total{};
};

BleuStats bleu_stats(std::string_view hypothesis, const std::vector<std::string>& references);

// BLEU-4 in [0, 100] from sufficient statistics. `smooth_exp` enables
// exponential smoothing of zero-match orders; `effective_order` drops orders
// the hypothesis is too short to have.
double bleu_from_stats(const BleuStats& s, bool smooth_exp, bool effective_order);

// Sentence BLEU (exp smoothing, effective order).
double bleu(std::string_view hypothesis, const std::vector<std::string>& references);
// Corpus BLEU: statistics summed over segments, then one score.
double corpus_bleu(const std::vector<std::string>& hypotheses,
                   const std::vector<std::vector<std::string>>& references);

// M(first, second): `first` is the prediction (the scorer's conditioning
// source), `second` the reference text being matched or scored.
double metric_value(MetricId metric, std::string_view first, std::string_view second,
                    const ScorerModel* scorer = nullptr);

double delta_score(MetricId metric, std::string_view prediction, std::string_view edited,
                   std::string_view original, const ScorerModel* scorer = nullptr);
double adjusted_score(MetricId metric, std::string_view prediction, std::string_view edited,
                      std::string_view original, const ScorerModel* scorer = nullptr);

// Delta and adjusted scores from already computed components.
inline double delta_from(double predictive, double against_original) {
  return predictive - against_original;
}
inline double adjusted_from(double predictive, double against_original) {
  return predictive + delta_from(predictive, against_original);
}

struct SampleScores {
  std::string story_id;
  MetricId metric = MetricId::kRougeL;
  double predictive = 0.0;
  std::optional<double> against_original;
  std::optional<double> delta;
  std::optional<double> adjusted;

  nlohmann::json to_json() const;
};

struct CorpusMeans {
  MetricId metric = MetricId::kRougeL;
  double predictive = 0.0;
  std::optional<double> delta;
  std::optional<double> adjusted;
};

struct MetricReport {
  std::vector<SampleScores> per_sample;  // grouped by metric, record order within
  std::vector<CorpusMeans> corpus_means;
  std::size_t records = 0;

  std::vector<const SampleScores*> samples_for(MetricId m) const;
};

struct Prediction {
  std::string story_id;
  std::string text;
  std::string mode;
};

struct EvaluateOptions {
  // Score BLEU against all sibling references of a multi-reference story.
  bool multi_reference_bleu = false;
};

// Scores predictions aligned 1:1 with records by id. Records without an
// original ending (ablated / ART) get predictive scores only. Samples are
// scored in parallel; results are independent of the thread count.
MetricReport corpus_evaluate(const std::vector<Prediction>& predictions,
                             const std::vector<AnyRecord>& records,
                             const std::set<MetricId>& metrics, const ScorerModel* scorer,
                             const EvaluateOptions& options = {});

// Table-shaped CSV: method,metric,predictive,delta,adjusted. ROUGE-L is
// reported as a percentage.
std::string report_csv(const std::string& method, const MetricReport& report, bool with_header = true);
double report_scale(MetricId m);

struct BootstrapResult {
  double p_value = 1.0;
  std::size_t n_resamples = 0;
  std::uint64_t seed = 0;
  std::size_t hits = 0;   // resamples counted towards p
  std::size_t draws = 0;  // resamples evaluated (n^n when exhaustive)
  bool exhaustive = false;

  nlohmann::json to_json() const;
};

// One-tailed paired bootstrap for H1: mean(a) > mean(b). p is the fraction of
// resamples whose mean difference is <= 0. When n^n <= n_resamples the full
// bootstrap distribution is enumerated instead of sampled.
BootstrapResult bootstrap_compare(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t n_resamples = 10000, std::uint64_t seed = 0);
// Strict tie rule: counts resamples whose difference is < 0. With the same
// seed, bootstrap_compare(a, b) + bootstrap_compare_strict(b, a) == 1.
BootstrapResult bootstrap_compare_strict(const std::vector<double>& a,
                                         const std::vector<double>& b,
                                         std::size_t n_resamples = 10000,
                                         std::uint64_t seed = 0);

}  // namespace dto
