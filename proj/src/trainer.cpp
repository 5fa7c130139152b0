#include "dto/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <random>

#include "dto/errors.hpp"
#include "dto/optimizer.hpp"

namespace dto {

TrainConfig TrainConfig::paper_profile() {
  TrainConfig c;
  c.learning_rate = 5e-9;
  c.batch_size = 2;
  c.epochs = 10;
  c.objective.gumbel = GumbelConfig{};
  return c;
}

void TrainConfig::validate() const {
  objective.validate();
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning_rate must be > 0");
  }
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (max_output_len < 1) throw ConfigError("train: max_output_len must be >= 1");
  if (max_input_len < 8) throw ConfigError("train: max_input_len must be >= 8");
  if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError("train: clip_norm must be > 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"objective", objective.to_json()},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"seed", seed},
          {"max_input_len", max_input_len},
          {"max_output_len", max_output_len},
          {"validation_every", validation_every},
          {"clip_norm", clip_norm ? nlohmann::json(*clip_norm) : nlohmann::json(nullptr)},
          {"shuffle", shuffle}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train config must be an object");
  TrainConfig c;
  if (j.value("profile", std::string()) == "paper") c = paper_profile();
  if (j.contains("objective")) c.objective = LossConfig::from_json(j.at("objective"));
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.max_input_len = j.value("max_input_len", c.max_input_len);
  c.max_output_len = j.value("max_output_len", c.max_output_len);
  c.validation_every = j.value("validation_every", c.validation_every);
  if (j.contains("clip_norm")) {
    c.clip_norm = j.at("clip_norm").is_null() ? std::nullopt
                                                : std::optional<double>(j.at("clip_norm").get<double>());
  }
  c.shuffle = j.value("shuffle", c.shuffle);
  c.validate();
  return c;
}

std::size_t TrainHistory::steps() const {
  std::size_t n = 0;
  for (const auto& r : rows) n = std::max(n, r.step);
  return n;
}

std::string TrainHistory::to_csv() const {
  auto fmt = [](const std::optional<double>& v) -> std::string {
    if (!v) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
  };
  std::string out = "step,epoch,train_loss,val_loss\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + fmt(r.train_loss) + "," +
           fmt(r.val_loss) + "\n";
  }
  return out;
}

namespace {

std::size_t bounded(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

void shuffle_in_place(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[bounded(rng, i)]);
}

bool all_finite(const std::vector<NamedParam>& params, bool grads) {
  for (const auto& p : params) {
    if (grads && !p.var.has_grad()) continue;
    const Matrix& m = grads ? p.var.grad() : p.var.value();
    for (double x : m.values()) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

std::vector<Matrix> snapshot(const std::vector<NamedParam>& params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.var.value());
  return out;
}

void restore(std::vector<NamedParam>& params, const std::vector<Matrix>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].var.mutable_value() = values[i];
}

ObjectiveContext context_for(const ScorerModel* scorer, const GeneratorModel* reference,
                             std::size_t max_output_len) {
  ObjectiveContext ctx;
  ctx.scorer = scorer;
  ctx.reference = reference;
  ctx.max_output_len = max_output_len;
  return ctx;
}

}  // namespace

TrainResult train(GeneratorModel& gen, const ScorerModel* scorer,
                  const std::vector<Example>& train_set, const TrainConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  if (train_set.empty()) throw PreconditionViolation("train: empty training set");
  if (needs_scorer(cfg.objective.variant) && !scorer) {
    throw PreconditionViolation(to_string(cfg.objective.variant) + " requires a scorer model");
  }

  std::optional<GeneratorModel> own_reference;
  const GeneratorModel* reference = options.reference;
  if (needs_reference_policy(cfg.objective.variant) && !reference) {
    own_reference.emplace(gen.frozen_copy());
    reference = &*own_reference;
  }

  TrainResult result;
  TrainHistory& history = result.history;
  if (scorer) result.scorer_checksum_before = scorer->checksum();

  const ObjectiveContext ctx = context_for(scorer, reference, cfg.max_output_len);
  AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  adam_cfg.clip_norm = cfg.clip_norm;
  auto& params = gen.net.parameters();
  Adam adam(params, adam_cfg);
  adam.zero_grad();

  std::mt19937_64 order_rng(cfg.seed);
  std::mt19937_64 noise_rng(cfg.seed ^ (cfg.objective.gumbel ? cfg.objective.gumbel->seed : 0) ^
                            0x9e3779b97f4a7c15ULL);

  const auto* val = options.validation;
  if (val && !val->empty()) {
    history.initial_val_loss = validation_loss(gen, scorer, *val, cfg, reference);
    history.rows.push_back({0, 0, std::nullopt, history.initial_val_loss});
  }

  auto diverge = [&](const std::string& what, std::size_t step) {
    if (options.checkpoint_path) save_generator(gen, *options.checkpoint_path);
    throw DivergenceDetected(what + " at step " + std::to_string(step) +
                             "; parameters restored to the last good state");
  };

  std::vector<std::size_t> order(train_set.size());
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle) shuffle_in_place(order, order_rng);

    double weighted = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      std::vector<const Example*> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&train_set[order[i]]);
      ++step;

      const ad::Var loss = objective_loss(gen, batch, cfg.objective, ctx, &noise_rng);
      const double value = loss.item();
      if (!std::isfinite(value)) diverge("non-finite loss", step);
      ad::backward(loss);
      if (!all_finite(params, true)) {
        adam.zero_grad();
        diverge("non-finite gradient", step);
      }
      const auto before = snapshot(params);
      adam.step();
      if (!all_finite(params, false)) {
        restore(params, before);
        diverge("non-finite parameters", step);
      }

      weighted += value * static_cast<double>(batch.size());
      StepRecord rec{step, epoch, value, std::nullopt};
      if (val && !val->empty() && cfg.validation_every > 0 && step % cfg.validation_every == 0) {
        rec.val_loss = validation_loss(gen, scorer, *val, cfg, reference);
      }
      history.rows.push_back(rec);
    }

    const double epoch_loss = weighted / static_cast<double>(train_set.size());
    history.epoch_train_loss.push_back(epoch_loss);
    std::optional<double> epoch_val;
    if (val && !val->empty()) {
      epoch_val = history.rows.back().val_loss;
      if (!epoch_val) {
        epoch_val = validation_loss(gen, scorer, *val, cfg, reference);
        history.rows.back().val_loss = epoch_val;
      }
    }
    history.epoch_val_loss.push_back(epoch_val);
    history.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (options.on_epoch) options.on_epoch(epoch, epoch_loss);
  }

  if (scorer) result.scorer_checksum_after = scorer->checksum();
  if (options.checkpoint_path) save_generator(gen, *options.checkpoint_path);
  return result;
}

double validation_loss(const GeneratorModel& gen, const ScorerModel* scorer,
                       const std::vector<Example>& val_set, const TrainConfig& cfg,
                       const GeneratorModel* reference) {
  if (val_set.empty()) throw PreconditionViolation("validation: empty validation set");
  LossConfig objective = cfg.objective;
  objective.gumbel.reset();
  const ObjectiveContext ctx = context_for(scorer, reference, cfg.max_output_len);
  if (needs_reference_policy(objective.variant) && !reference) {
    throw PreconditionViolation("validation: DPO needs a reference policy");
  }

  std::vector<double> losses(val_set.size());
  std::vector<std::exception_ptr> errors(val_set.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < val_set.size(); ++i) {
    try {
      losses[i] = objective_loss(gen, {&val_set[i]}, objective, ctx).item();
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(losses.size());
}

std::vector<Prediction> predict(const GeneratorModel& gen, const std::vector<Example>& examples,
                                std::size_t max_len, const std::string& mode) {
  std::vector<Prediction> out(examples.size());
  std::vector<std::exception_ptr> errors(examples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < examples.size(); ++i) {
    try {
      const auto ids = hard_decode(gen, examples[i].input, max_len);
      out[i] = {examples[i].id, gen.tokenizer.decode(ids), mode};
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

ValidationResult validate(const GeneratorModel& gen, const ScorerModel* scorer,
                          const std::vector<Example>& val_set, const TrainConfig& cfg,
                          const std::set<MetricId>& metrics, const GeneratorModel* reference) {
  ValidationResult res;
  res.mean_loss = validation_loss(gen, scorer, val_set, cfg, reference);
  res.predictions = predict(gen, val_set, cfg.max_output_len);
  std::vector<AnyRecord> records;
  records.reserve(val_set.size());
  for (const auto& ex : val_set) {
    StoryRecord r;
    r.story_id = ex.id;
    r.original_ending = ex.original;
    r.edited_ending = ex.target;
    records.emplace_back(std::move(r));
  }
  std::set<MetricId> wanted = metrics;
  if (wanted.empty()) {
    wanted = {MetricId::kRougeL, MetricId::kBleu};
    if (scorer) wanted.insert(MetricId::kScorerLl);
  }
  res.report = corpus_evaluate(res.predictions, records, wanted, scorer);
  return res;
}

// ---------------------------------------------------------------------------

AuditResult finite_difference_audit(GeneratorModel& gen, const ScorerModel* scorer,
                                    const std::vector<const Example*>& batch,
                                    const LossConfig& objective, const AuditOptions& options,
                                    std::size_t max_output_len, const GeneratorModel* reference) {
  std::optional<GeneratorModel> own_reference;
  if (needs_reference_policy(objective.variant) && !reference) {
    own_reference.emplace(gen.frozen_copy());
    reference = &*own_reference;
  }
  ObjectiveContext ctx = context_for(scorer, reference, max_output_len);
  ctx.detach_soft = options.detach_soft;
  const std::uint64_t noise_seed = options.seed ^ 0x5851f42d4c957f2dULL;
  auto loss_at = [&]() {
    std::mt19937_64 rng(noise_seed);
    return objective_loss(gen, batch, objective, ctx, &rng);
  };

  auto& params = gen.net.parameters();
  for (auto& p : params) p.var.zero_grad();
  ad::backward(loss_at());

  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : params) {
    offsets.push_back(total);
    total += p.var.value().size();
  }

  std::mt19937_64 pick_rng(options.seed);
  std::vector<std::size_t> chosen;
  const std::size_t want = std::min(options.n_params, total);
  while (chosen.size() < want) {
    const std::size_t k = bounded(pick_rng, total);
    if (std::find(chosen.begin(), chosen.end(), k) == chosen.end()) chosen.push_back(k);
  }

  AuditResult res;
  for (std::size_t k : chosen) {
    const std::size_t pi =
        static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), k) - offsets.begin()) - 1;
    const std::size_t idx = k - offsets[pi];
    ad::Var& var = params[pi].var;
    GradientProbe probe;
    probe.param = params[pi].name;
    probe.index = idx;
    probe.analytic = var.has_grad() ? var.grad()[idx] : 0.0;

    const double original = var.value()[idx];
    var.mutable_value()[idx] = original + options.eps;
    const double plus = loss_at().item();
    var.mutable_value()[idx] = original - options.eps;
    const double minus = loss_at().item();
    var.mutable_value()[idx] = original;
    probe.numeric = (plus - minus) / (2.0 * options.eps);

    const double scale =
        std::max({std::abs(probe.analytic), std::abs(probe.numeric), 1e-6});
    probe.rel_error = std::abs(probe.analytic - probe.numeric) / scale;
    res.max_rel_error = std::max(res.max_rel_error, probe.rel_error);
    res.probes.push_back(probe);
  }
  for (auto& p : params) p.var.zero_grad();
  return res;
}

// ---------------------------------------------------------------------------

ScorerModel pretrain_scorer(const Tokenizer& tokenizer, const std::vector<std::string>& texts,
                            const ScorerPretrainConfig& cfg) {
  if (texts.empty()) throw PreconditionViolation("pretrain_scorer: no texts");
  ModelConfig model = cfg.model;
  model.vocab_size = static_cast<int>(tokenizer.size());
  GeneratorModel copier(tokenizer, model, cfg.seed);

  std::mt19937_64 rng(cfg.seed ^ 0x2545f4914f6cdd1dULL);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const std::size_t first_word = Tokenizer::kSep + 1;
  std::vector<Example> examples;
  for (const auto& text : texts) {
    const std::vector<int> ids = tokenizer.encode(text);
    if (ids.empty()) continue;
    for (int variant = 0; variant < 3; ++variant) {
      std::vector<int> noisy;
      for (int id : ids) {
        const double u = variant == 0 ? 1.0 : coin(rng);
        if (u < cfg.noise / 2) continue;
        if (u < cfg.noise && tokenizer.size() > first_word) {
          noisy.push_back(static_cast<int>(first_word + bounded(rng, tokenizer.size() - first_word)));
        } else {
          noisy.push_back(id);
        }
      }
      if (noisy.empty()) noisy = ids;
      Example ex;
      ex.id = "copy-" + std::to_string(examples.size());
      ex.input.token_ids = std::move(noisy);
      ex.input.text = tokenizer.decode(ex.input.token_ids);
      ex.target = text;
      examples.push_back(std::move(ex));
    }
  }

  TrainConfig tc;
  tc.learning_rate = cfg.learning_rate;
  tc.batch_size = cfg.batch_size;
  tc.epochs = cfg.epochs;
  tc.seed = cfg.seed;
  train(copier, nullptr, examples, tc);
  return ScorerModel(tokenizer, copier.net);
}

}  // namespace dto
