#include "dto/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <random>
#include <map>
#include <regex>
#include <sstream>
#include <unordered_map>

#include "dto/errors.hpp"

namespace dto {

MetricId parse_metric(std::string_view s) {
  if (s == "scorer_ll" || s == "bartscore") return MetricId::kScorerLl;
  if (s == "rouge_l" || s == "rouge") return MetricId::kRougeL;
  if (s == "bleu" || s == "sacrebleu") return MetricId::kBleu;
  throw ConfigError("unknown metric '" + std::string(s) + "' (valid: scorer_ll, rouge_l, bleu)");
}

std::string to_string(MetricId m) {
  switch (m) {
    case MetricId::kScorerLl: return "scorer_ll";
    case MetricId::kRougeL: return "rouge_l";
    case MetricId::kBleu: return "bleu";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Scorer likelihood

double scorer_ll(const ScorerModel& scorer, const ScorerSource& source,
                 const std::vector<int>& hypothesis) {
  if (hypothesis.empty()) throw EmptyHypothesis("scorer_ll: empty hypothesis");
  const std::size_t source_len = std::holds_alternative<std::vector<int>>(source)
                                     ? std::get<std::vector<int>>(source).size()
                                     : std::get<SoftSequence>(source).length();
  if (source_len > scorer.context_limit()) {
    throw SourceTooLong("source of " + std::to_string(source_len) +
                        " tokens exceeds scorer context " +
                        std::to_string(scorer.context_limit()));
  }
  return ad::mean(scorer_forward(scorer, source, hypothesis)).item();
}

double scorer_ll(const ScorerModel& scorer, std::string_view source, std::string_view hypothesis) {
  const auto& tok = scorer.tokenizer();
  std::vector<int> src = tok.encode(source);
  // An empty prediction still needs one encoder row to condition on.
  if (src.empty()) src.push_back(Tokenizer::kEos);
  return scorer_ll(scorer, ScorerSource{std::move(src)}, tok.encode(hypothesis));
}

// ---------------------------------------------------------------------------
// ROUGE-L

std::vector<std::string> rouge_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 128 && std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::string_view hypothesis, std::string_view reference) {
  const auto h = rouge_tokens(hypothesis);
  const auto r = rouge_tokens(reference);
  if (h.empty() || r.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(h, r));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(h.size());
  const double rec = lcs / static_cast<double>(r.size());
  return 2.0 * p * rec / (p + rec);
}

// ---------------------------------------------------------------------------
// BLEU

namespace {

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

bool is_13a_symbol(char c) {
  // { | } ~  [ \ ] ^ _ `  space ! " # $ % &  ( ) * +  : ; < = > ? @  /
  return (c >= '{' && c <= '~') || (c >= '[' && c <= '`') || (c >= ' ' && c <= '&') ||
         (c >= '(' && c <= '+') || (c >= ':' && c <= '@') || c == '/';
}

}  // namespace

std::vector<std::string> bleu_tokens(std::string_view text) {
  std::string line(text);
  while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
  line = replace_all(line, "<skipped>", "");
  line = replace_all(line, "-\n", "");
  line = replace_all(line, "\n", " ");
  if (line.find('&') != std::string::npos) {
    line = replace_all(line, "&quot;", "\"");
    line = replace_all(line, "&amp;", "&");
    line = replace_all(line, "&lt;", "<");
    line = replace_all(line, "&gt;", ">");
  }

  std::string padded;
  padded.reserve(line.size() * 2 + 2);
  padded.push_back(' ');
  for (char c : line) {
    if (is_13a_symbol(c)) {
      padded.push_back(' ');
      padded.push_back(c);
      padded.push_back(' ');
    } else {
      padded.push_back(c);
    }
  }
  padded.push_back(' ');

  static const std::regex period_after(R"(([^0-9])([\.,]))");
  static const std::regex period_before(R"(([\.,])([^0-9]))");
  static const std::regex dash(R"(([0-9])(-))");
  padded = std::regex_replace(padded, period_after, "$1 $2 ");
  padded = std::regex_replace(padded, period_before, " $1 $2");
  padded = std::regex_replace(padded, dash, "$1 $2 ");

  std::vector<std::string> out;
  std::istringstream in(padded);
  for (std::string w; in >> w;) out.push_back(std::move(w));
  return out;
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngram_counts(const std::vector<std::string>& toks) {
  NgramCounts counts;
  for (std::size_t n = 1; n <= 4; ++n) {
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
      ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                        toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
  }
  return counts;
}

double floored_log(double x) { return x == 0.0 ? -9999999999.0 : std::log(x); }

}  // namespace

BleuStats bleu_stats(std::string_view hypothesis, const std::vector<std::string>& references) {
  if (references.empty()) throw PreconditionViolation("bleu: at least one reference required");
  const auto hyp = bleu_tokens(hypothesis);
  BleuStats s;
  s.hyp_len = hyp.size();

  NgramCounts ref_max;
  bool have_len = false;
  std::size_t best_diff = 0;
  for (const auto& ref_text : references) {
    const auto ref = bleu_tokens(ref_text);
    const std::size_t len = ref.size();
    const std::size_t diff = len > s.hyp_len ? len - s.hyp_len : s.hyp_len - len;
    if (!have_len || diff < best_diff || (diff == best_diff && len < s.ref_len)) {
      have_len = true;
      best_diff = diff;
      s.ref_len = len;
    }
    for (const auto& [gram, c] : ngram_counts(ref)) {
      auto& slot = ref_max[gram];
      slot = std::max(slot, c);
    }
  }

  for (const auto& [gram, c] : ngram_counts(hyp)) {
    const auto it = ref_max.find(gram);
    if (it != ref_max.end()) s.correct[gram.size() - 1] += std::min(c, it->second);
  }
  for (std::size_t n = 1; n <= 4; ++n) {
    s.total[n - 1] = s.hyp_len >= n ? s.hyp_len - n + 1 : 0;
  }
  return s;
}

double bleu_from_stats(const BleuStats& s, bool smooth_exp, bool effective_order) {
  double bp = 1.0;
  if (s.hyp_len < s.ref_len) {
    bp = s.hyp_len > 0 ? std::exp(1.0 - static_cast<double>(s.ref_len) /
                                            static_cast<double>(s.hyp_len))
                       : 0.0;
  }
  if (s.correct[0] == 0) return 0.0;

  std::array<double, 4> precisions{};
  double smooth = 1.0;
  std::size_t order = 4;
  for (std::size_t n = 1; n <= 4; ++n) {
    if (s.total[n - 1] == 0) break;
    if (effective_order) order = n;
    if (s.correct[n - 1] == 0) {
      if (smooth_exp) {
        smooth *= 2.0;
        precisions[n - 1] = 100.0 / (smooth * static_cast<double>(s.total[n - 1]));
      }
    } else {
      precisions[n - 1] = 100.0 * static_cast<double>(s.correct[n - 1]) /
                          static_cast<double>(s.total[n - 1]);
    }
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < order; ++i) acc += floored_log(precisions[i]);
  return bp * std::exp(acc / static_cast<double>(order));
}

double bleu(std::string_view hypothesis, const std::vector<std::string>& references) {
  return bleu_from_stats(bleu_stats(hypothesis, references), true, true);
}

double corpus_bleu(const std::vector<std::string>& hypotheses,
                   const std::vector<std::vector<std::string>>& references) {
  if (hypotheses.size() != references.size()) {
    throw LengthMismatch("corpus_bleu: " + std::to_string(hypotheses.size()) +
                         " hypotheses vs " + std::to_string(references.size()) + " references");
  }
  BleuStats total;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const BleuStats s = bleu_stats(hypotheses[i], references[i]);
    total.hyp_len += s.hyp_len;
    total.ref_len += s.ref_len;
    for (std::size_t n = 0; n < 4; ++n) {
      total.correct[n] += s.correct[n];
      total.total[n] += s.total[n];
    }
  }
  return bleu_from_stats(total, true, false);
}

// ---------------------------------------------------------------------------
// Counterfactual scores

double metric_value(MetricId metric, std::string_view first, std::string_view second,
                    const ScorerModel* scorer) {
  switch (metric) {
    case MetricId::kScorerLl:
      if (!scorer) throw PreconditionViolation("scorer_ll requires a scorer model");
      return scorer_ll(*scorer, first, second);
    case MetricId::kRougeL:
      return rouge_l(first, second);
    case MetricId::kBleu:
      return bleu(first, {std::string(second)});
  }
  return 0.0;
}

double delta_score(MetricId metric, std::string_view prediction, std::string_view edited,
                   std::string_view original, const ScorerModel* scorer) {
  return delta_from(metric_value(metric, prediction, edited, scorer),
                    metric_value(metric, prediction, original, scorer));
}

double adjusted_score(MetricId metric, std::string_view prediction, std::string_view edited,
                      std::string_view original, const ScorerModel* scorer) {
  return adjusted_from(metric_value(metric, prediction, edited, scorer),
                       metric_value(metric, prediction, original, scorer));
}

// ---------------------------------------------------------------------------
// Corpus evaluation

nlohmann::json SampleScores::to_json() const {
  nlohmann::json j = {{"story_id", story_id}, {"metric", to_string(metric)}, {"predictive", predictive}};
  if (against_original) j["against_original"] = *against_original;
  if (delta) j["delta"] = *delta;
  if (adjusted) j["adjusted"] = *adjusted;
  return j;
}

std::vector<const SampleScores*> MetricReport::samples_for(MetricId m) const {
  std::vector<const SampleScores*> out;
  for (const auto& s : per_sample) {
    if (s.metric == m) out.push_back(&s);
  }
  return out;
}

namespace {

std::string base_id(const std::string& id) {
  const auto pos = id.rfind('#');
  return pos == std::string::npos ? id : id.substr(0, pos);
}

}  // namespace

MetricReport corpus_evaluate(const std::vector<Prediction>& predictions,
                             const std::vector<AnyRecord>& records,
                             const std::set<MetricId>& metrics, const ScorerModel* scorer,
                             const EvaluateOptions& options) {
  std::unordered_map<std::string, std::size_t> by_id;
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!by_id.emplace(predictions[i].story_id, i).second) {
      problems.push_back("duplicate prediction " + predictions[i].story_id);
    }
  }
  std::vector<std::size_t> order(records.size());
  std::size_t matched = 0;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto it = by_id.find(record_id(records[r]));
    if (it == by_id.end()) {
      problems.push_back("no prediction for " + record_id(records[r]));
    } else {
      order[r] = it->second;
      ++matched;
    }
  }
  if (matched != predictions.size()) {
    std::set<std::string> known;
    for (const auto& rec : records) known.insert(record_id(rec));
    for (const auto& p : predictions) {
      if (!known.count(p.story_id)) problems.push_back("no record for prediction " + p.story_id);
    }
  }
  if (predictions.empty() && records.empty()) problems.push_back("no predictions and no records");
  if (!problems.empty()) {
    std::string msg = "predictions do not align with records:";
    const std::size_t shown = std::min<std::size_t>(problems.size(), 20);
    for (std::size_t i = 0; i < shown; ++i) msg += "\n  " + problems[i];
    if (shown < problems.size()) msg += "\n  ... " + std::to_string(problems.size() - shown) + " more";
    throw AlignmentError(msg);
  }
  if (metrics.count(MetricId::kScorerLl) && !scorer) {
    throw PreconditionViolation("scorer_ll requested without a scorer model");
  }

  std::unordered_map<std::string, std::vector<std::string>> siblings;
  if (options.multi_reference_bleu) {
    for (const auto& rec : records) siblings[base_id(record_id(rec))].push_back(record_target(rec));
  }

  const std::vector<MetricId> metric_list(metrics.begin(), metrics.end());
  const std::size_t n = records.size();
  std::vector<std::vector<SampleScores>> rows(metric_list.size(), std::vector<SampleScores>(n));
  std::vector<std::exception_ptr> errors(n);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t r = 0; r < n; ++r) {
    try {
      const auto& rec = records[r];
      const std::string& pred = predictions[order[r]].text;
      const std::string& target = record_target(rec);
      const std::string* original = nullptr;
      if (const auto* s = std::get_if<StoryRecord>(&rec); s && s->original_ending) {
        original = &*s->original_ending;
      }
      for (std::size_t m = 0; m < metric_list.size(); ++m) {
        SampleScores& out = rows[m][r];
        out.story_id = record_id(rec);
        out.metric = metric_list[m];
        if (metric_list[m] == MetricId::kBleu && options.multi_reference_bleu) {
          out.predictive = bleu(pred, siblings.at(base_id(out.story_id)));
        } else {
          out.predictive = metric_value(metric_list[m], pred, target, scorer);
        }
        if (original) {
          const double against = metric_value(metric_list[m], pred, *original, scorer);
          out.against_original = against;
          out.delta = delta_from(out.predictive, against);
          out.adjusted = adjusted_from(out.predictive, against);
        }
      }
    } catch (...) {
      errors[r] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  MetricReport report;
  report.records = n;
  for (std::size_t m = 0; m < metric_list.size(); ++m) {
    CorpusMeans means;
    means.metric = metric_list[m];
    double pred_sum = 0.0, delta_sum = 0.0, adj_sum = 0.0;
    bool all_delta = n > 0;
    for (const auto& s : rows[m]) {
      pred_sum += s.predictive;
      if (s.delta) {
        delta_sum += *s.delta;
        adj_sum += *s.adjusted;
      } else {
        all_delta = false;
      }
    }
    const double denom = static_cast<double>(std::max<std::size_t>(n, 1));
    means.predictive = pred_sum / denom;
    if (all_delta) {
      means.delta = delta_sum / denom;
      means.adjusted = adj_sum / denom;
    }
    report.corpus_means.push_back(means);
    for (auto& s : rows[m]) report.per_sample.push_back(std::move(s));
  }
  return report;
}

double report_scale(MetricId m) { return m == MetricId::kRougeL ? 100.0 : 1.0; }

std::string report_csv(const std::string& method, const MetricReport& report, bool with_header) {
  auto fmt = [](std::optional<double> v) -> std::string {
    if (!v) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
  };
  std::string out;
  if (with_header) out += "method,metric,predictive,delta,adjusted\n";
  for (const auto& m : report.corpus_means) {
    const double k = report_scale(m.metric);
    auto scaled = [k](std::optional<double> v) -> std::optional<double> {
      if (!v) return std::nullopt;
      return *v * k;
    };
    out += method + "," + to_string(m.metric) + "," + fmt(m.predictive * k) + "," +
           fmt(scaled(m.delta)) + "," + fmt(scaled(m.adjusted)) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Paired bootstrap

nlohmann::json BootstrapResult::to_json() const {
  return {{"p_value", p_value},
          {"n_resamples", n_resamples},
          {"seed", seed},
          {"exhaustive", exhaustive},
          {"draws", draws}};
}

namespace {

// Unbiased draw from [0, n).
std::size_t bounded(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t range = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % range);
}

// Number of index tuples n^n if it does not exceed `cap`, else 0.
std::size_t tuple_count(std::size_t n, std::size_t cap) {
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (total > cap / n) return 0;
    total *= n;
  }
  return total;
}

enum class Tail { kAtMostZero, kBelowZero };

BootstrapResult paired_bootstrap(const std::vector<double>& a, const std::vector<double>& b,
                                 std::size_t n_resamples, std::uint64_t seed, Tail tail) {
  if (a.size() != b.size()) {
    throw LengthMismatch("bootstrap: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + " paired scores");
  }
  if (a.size() < 2) throw PreconditionViolation("bootstrap: need at least 2 paired samples");
  if (n_resamples == 0) throw PreconditionViolation("bootstrap: n_resamples must be >= 1");

  const std::size_t n = a.size();
  BootstrapResult res;
  res.n_resamples = n_resamples;
  res.seed = seed;

  // sum_a - sum_b changes sign exactly when a and b swap, which keeps the
  // <= 0 and < 0 tails complementary across argument order.
  auto counts = [&](const std::vector<std::size_t>& idx) {
    double sa = 0.0, sb = 0.0;
    for (std::size_t i : idx) {
      sa += a[i];
      sb += b[i];
    }
    const double diff = sa - sb;
    return tail == Tail::kAtMostZero ? diff <= 0.0 : diff < 0.0;
  };

  std::vector<std::size_t> idx(n, 0);
  if (const std::size_t tuples = tuple_count(n, n_resamples); tuples > 0) {
    res.exhaustive = true;
    res.draws = tuples;
    for (std::size_t t = 0; t < tuples; ++t) {
      std::size_t rest = t;
      for (std::size_t i = 0; i < n; ++i) {
        idx[i] = rest % n;
        rest /= n;
      }
      if (counts(idx)) ++res.hits;
    }
  } else {
    std::mt19937_64 rng(seed);
    res.draws = n_resamples;
    for (std::size_t t = 0; t < n_resamples; ++t) {
      for (auto& i : idx) i = bounded(rng, n);
      if (counts(idx)) ++res.hits;
    }
  }
  res.p_value = static_cast<double>(res.hits) / static_cast<double>(res.draws);
  return res;
}

}  // namespace

BootstrapResult bootstrap_compare(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t n_resamples, std::uint64_t seed) {
  return paired_bootstrap(a, b, n_resamples, seed, Tail::kAtMostZero);
}

BootstrapResult bootstrap_compare_strict(const std::vector<double>& a,
                                         const std::vector<double>& b, std::size_t n_resamples,
                                         std::uint64_t seed) {
  return paired_bootstrap(a, b, n_resamples, seed, Tail::kBelowZero);
}

}  // namespace dto
