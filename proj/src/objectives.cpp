#include "dto/objectives.hpp"

#include <cmath>

#include "dto/errors.hpp"

namespace dto {

using ad::Var;

const std::vector<std::string>& objective_names() {
  static const std::vector<std::string> names = {"NLL", "DTO-Score", "DTO-Delta",
                                                 "DTO-Score+Delta", "CPO", "DPO"};
  return names;
}

ObjectiveVariant parse_objective(std::string_view name) {
  const auto& names = objective_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (name == names[i]) return static_cast<ObjectiveVariant>(i);
  }
  std::string valid;
  for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown objective '" + std::string(name) + "' (valid: " + valid + ")");
}

std::string to_string(ObjectiveVariant v) {
  return objective_names().at(static_cast<std::size_t>(v));
}

bool needs_scorer(ObjectiveVariant v) {
  return v == ObjectiveVariant::kDtoScore || v == ObjectiveVariant::kDtoDelta ||
         v == ObjectiveVariant::kDtoScoreDelta;
}

bool needs_reference_policy(ObjectiveVariant v) { return v == ObjectiveVariant::kDpo; }

bool needs_original_ending(ObjectiveVariant v) {
  return v == ObjectiveVariant::kDtoDelta || v == ObjectiveVariant::kDtoScoreDelta ||
         v == ObjectiveVariant::kCpo || v == ObjectiveVariant::kDpo;
}

void LossConfig::validate() const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be a finite value >= 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("lambda must be a finite value >= 0");
  }
  if (gumbel && !(gumbel->temperature > 0.0)) {
    throw NonPositiveTemperature("Gumbel temperature must be > 0");
  }
}

nlohmann::json LossConfig::to_json() const {
  nlohmann::json j = {{"variant", to_string(variant)},
                      {"beta", beta},
                      {"lambda", lambda},
                      {"per_sentence_cpo", per_sentence_cpo},
                      {"teacher_forced_soft", teacher_forced_soft}};
  if (gumbel) {
    j["gumbel"] = {{"temperature", gumbel->temperature},
                   {"hard", gumbel->hard},
                   {"seed", gumbel->seed},
                   {"annealing", gumbel->annealing}};
  } else {
    j["gumbel"] = nullptr;
  }
  j["delta_floor"] = delta_floor ? nlohmann::json(*delta_floor) : nlohmann::json(nullptr);
  return j;
}

LossConfig LossConfig::from_json(const nlohmann::json& j) {
  LossConfig c;
  if (!j.is_object()) throw ConfigError("objective config must be an object");
  if (j.contains("variant")) c.variant = parse_objective(j.at("variant").get<std::string>());
  c.beta = j.value("beta", c.beta);
  c.lambda = j.value("lambda", c.lambda);
  c.per_sentence_cpo = j.value("per_sentence_cpo", c.per_sentence_cpo);
  c.teacher_forced_soft = j.value("teacher_forced_soft", c.teacher_forced_soft);
  if (j.contains("gumbel") && !j.at("gumbel").is_null() && j.at("gumbel") != false) {
    const auto& g = j.at("gumbel");
    GumbelConfig gc;
    if (g.is_object()) {
      gc.temperature = g.value("temperature", gc.temperature);
      gc.hard = g.value("hard", gc.hard);
      gc.seed = g.value("seed", gc.seed);
      gc.annealing = g.value("annealing", gc.annealing);
    }
    c.gumbel = gc;
  }
  if (j.contains("delta_floor") && !j.at("delta_floor").is_null()) {
    c.delta_floor = j.at("delta_floor").get<double>();
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

Var nll_loss(const Var& logits, const std::vector<int>& reference) {
  if (reference.empty()) throw EmptyTarget("nll_loss: empty reference");
  if (logits.rows() < reference.size()) {
    throw LengthMismatch("nll_loss: " + std::to_string(logits.rows()) + " logit rows for " +
                         std::to_string(reference.size()) + " reference tokens");
  }
  Var rows = logits.rows() == reference.size() ? logits
                                                : ad::slice_rows(logits, 0, reference.size());
  return ad::neg(ad::mean(ad::pick(ad::log_softmax_rows(rows), reference)));
}

Var dto_score_from(const Var& ll_edited) { return ad::neg(ll_edited); }

Var dto_delta_from(const Var& ll_edited, const Var& ll_original, std::optional<double> floor) {
  const Var repelled = floor ? ad::clamp_min(ll_original, *floor) : ll_original;
  return ad::neg(ad::sub(ll_edited, repelled));
}

Var dto_score_delta_from(const Var& ll_edited, const Var& ll_original) {
  return ad::add(dto_score_from(ll_edited), dto_delta_from(ll_edited, ll_original));
}

namespace {

Var soft_ll(const SoftSequence& soft, const std::vector<int>& target, const ScorerModel& scorer) {
  return ad::mean(scorer_forward(scorer, soft, target));
}

}  // namespace

Var dto_score_loss(const SoftSequence& soft, const std::vector<int>& y_edited,
                   const ScorerModel& scorer) {
  return dto_score_from(soft_ll(soft, y_edited, scorer));
}

Var dto_delta_loss(const SoftSequence& soft, const std::vector<int>& y_edited,
                   const std::vector<int>& x_original, const ScorerModel& scorer,
                   std::optional<double> floor) {
  return dto_delta_from(soft_ll(soft, y_edited, scorer), soft_ll(soft, x_original, scorer), floor);
}

Var dto_score_delta_loss(const SoftSequence& soft, const std::vector<int>& y_edited,
                         const std::vector<int>& x_original, const ScorerModel& scorer) {
  return dto_score_delta_from(soft_ll(soft, y_edited, scorer), soft_ll(soft, x_original, scorer));
}

Var cpo_loss(const Var& logprob_w, const Var& logprob_l, double beta, double lambda) {
  const Var margin = ad::sub(ad::scale(logprob_w, beta), ad::scale(logprob_l, beta));
  return ad::neg(ad::add(ad::log_sigmoid(margin), ad::scale(logprob_w, lambda)));
}

double cpo_loss(double logprob_w, double logprob_l, double beta, double lambda) {
  return cpo_loss(ad::constant(Matrix::scalar(logprob_w)), ad::constant(Matrix::scalar(logprob_l)),
                  beta, lambda)
      .item();
}

Var dpo_loss(const Var& w, const Var& l, const Var& w_ref, const Var& l_ref, double beta) {
  const Var margin = ad::sub(ad::sub(w, w_ref), ad::sub(l, l_ref));
  return ad::neg(ad::log_sigmoid(ad::scale(margin, beta)));
}

double dpo_loss(double w, double l, double w_ref, double l_ref, double beta) {
  auto c = [](double x) { return ad::constant(Matrix::scalar(x)); };
  return dpo_loss(c(w), c(l), c(w_ref), c(l_ref), beta).item();
}

Var batch_cpo_loss(const std::vector<Var>& logprob_w, const std::vector<Var>& logprob_l,
                   double beta, double lambda, bool per_sentence) {
  if (logprob_w.empty() || logprob_w.size() != logprob_l.size()) {
    throw LengthMismatch("batch_cpo_loss: need equally many, and at least one, (w, l) pairs");
  }
  if (!per_sentence) {
    return cpo_loss(ad::mean_of(logprob_w), ad::mean_of(logprob_l), beta, lambda);
  }
  std::vector<Var> losses;
  losses.reserve(logprob_w.size());
  for (std::size_t i = 0; i < logprob_w.size(); ++i) {
    losses.push_back(cpo_loss(logprob_w[i], logprob_l[i], beta, lambda));
  }
  return ad::mean_of(losses);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<int> encode_target(const Tokenizer& tok, const std::string& text, const char* what) {
  std::vector<int> ids = tok.encode(text);
  if (ids.empty()) throw EmptyTarget(std::string(what) + " encodes to no tokens");
  return ids;
}

const std::string& original_of(const Example& ex) {
  if (!ex.original) {
    throw PreconditionViolation("example " + ex.id +
                                " has no original ending; the objective needs one");
  }
  return *ex.original;
}

SoftSequence scorer_soft(const GeneratorModel& gen, const Example& ex, const LossConfig& cfg,
                         const ObjectiveContext& ctx, std::mt19937_64* rng) {
  DecodeOptions opts;
  opts.gumbel = cfg.gumbel;
  opts.max_len = ctx.max_output_len;
  std::vector<int> teacher;
  if (cfg.teacher_forced_soft) {
    teacher = encode_target(gen.tokenizer, ex.target, "edited ending");
    opts.teacher_tokens = &teacher;
  }
  const DecodeResult decoded = soft_decode(gen, ex.input, opts, rng);
  const ScorerModel& scorer = *ctx.scorer;
  ProbSequence probs = decoded.probs;
  if (!(gen.tokenizer == scorer.tokenizer())) {
    const auto alignment = align_vocabulary(gen.tokenizer.tokens(), scorer.tokenizer().tokens());
    probs = apply_alignment(probs, alignment, scorer.tokenizer().size());
  }
  SoftSequence soft = expected_embeddings(probs, scorer.embedding());
  if (ctx.detach_soft) soft.embeddings = ad::detach(soft.embeddings);
  return soft;
}

Var example_dto_loss(const GeneratorModel& gen, const Example& ex, const LossConfig& cfg,
                     const ObjectiveContext& ctx, std::mt19937_64* rng) {
  const ScorerModel& scorer = *ctx.scorer;
  const SoftSequence soft = scorer_soft(gen, ex, cfg, ctx, rng);
  const Var ll_edited =
      soft_ll(soft, encode_target(scorer.tokenizer(), ex.target, "edited ending"), scorer);
  if (cfg.variant == ObjectiveVariant::kDtoScore) return dto_score_from(ll_edited);

  // Both terms condition on the same soft prediction.
  const Var ll_original =
      soft_ll(soft, encode_target(scorer.tokenizer(), original_of(ex), "original ending"), scorer);
  if (cfg.variant == ObjectiveVariant::kDtoDelta) {
    return dto_delta_from(ll_edited, ll_original, cfg.delta_floor);
  }
  return dto_score_delta_from(ll_edited, ll_original);
}

}  // namespace

Var objective_loss(const GeneratorModel& gen, const std::vector<const Example*>& batch,
                   const LossConfig& cfg, const ObjectiveContext& ctx, std::mt19937_64* rng) {
  if (batch.empty()) throw PreconditionViolation("objective_loss: empty batch");
  if (needs_scorer(cfg.variant) && !ctx.scorer) {
    throw PreconditionViolation(to_string(cfg.variant) + " requires a scorer model");
  }
  if (needs_reference_policy(cfg.variant) && !ctx.reference) {
    throw PreconditionViolation("DPO requires a reference policy");
  }

  const Tokenizer& tok = gen.tokenizer;
  std::vector<Var> losses;
  std::vector<Var> w_logps, l_logps;
  for (const Example* ex : batch) {
    switch (cfg.variant) {
      case ObjectiveVariant::kNll: {
        std::vector<int> target = encode_target(tok, ex->target, "edited ending");
        const Var logits = teacher_forced_logits(gen.net, ex->input.token_ids, target);
        target.push_back(Tokenizer::kEos);
        losses.push_back(nll_loss(logits, target));
        break;
      }
      case ObjectiveVariant::kDtoScore:
      case ObjectiveVariant::kDtoDelta:
      case ObjectiveVariant::kDtoScoreDelta:
        losses.push_back(example_dto_loss(gen, *ex, cfg, ctx, rng));
        break;
      case ObjectiveVariant::kCpo: {
        w_logps.push_back(sequence_mean_logprob(gen.net, ex->input.token_ids,
                                                encode_target(tok, ex->target, "edited ending")));
        l_logps.push_back(sequence_mean_logprob(gen.net, ex->input.token_ids,
                                                encode_target(tok, original_of(*ex), "original ending")));
        break;
      }
      case ObjectiveVariant::kDpo: {
        const auto w_ids = encode_target(tok, ex->target, "edited ending");
        const auto l_ids = encode_target(tok, original_of(*ex), "original ending");
        const auto& ref = ctx.reference->net;
        losses.push_back(dpo_loss(sequence_mean_logprob(gen.net, ex->input.token_ids, w_ids),
                                  sequence_mean_logprob(gen.net, ex->input.token_ids, l_ids),
                                  ad::detach(sequence_mean_logprob(ref, ex->input.token_ids, w_ids)),
                                  ad::detach(sequence_mean_logprob(ref, ex->input.token_ids, l_ids)),
                                  cfg.beta));
        break;
      }
    }
  }
  if (cfg.variant == ObjectiveVariant::kCpo) {
    return batch_cpo_loss(w_logps, l_logps, cfg.beta, cfg.lambda, cfg.per_sentence_cpo);
  }
  return losses.size() == 1 ? losses.front() : ad::mean_of(losses);
}

}  // namespace dto
