#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "dto/errors.hpp"
#include "dto/metrics.hpp"
#include "dto/objectives.hpp"
#include "dto/optimizer.hpp"
#include "dto/trainer.hpp"
#include "support.hpp"

using namespace dto;

namespace {

ad::Var scalar(double x) { return ad::constant(Matrix::scalar(x)); }

double log_sigmoid(double x) { return -std::log1p(std::exp(-x)); }

SoftSequence one_hot_soft(const std::vector<int>& ids, const ScorerModel& scorer) {
  Matrix p(ids.size(), scorer.tokenizer().size());
  for (std::size_t t = 0; t < ids.size(); ++t) p(t, static_cast<std::size_t>(ids[t])) = 1.0;
  return expected_embeddings(ProbSequence{ad::constant(p)}, scorer.embedding());
}

SoftSequence random_soft(std::size_t rows, const ScorerModel& scorer, std::mt19937_64& rng) {
  return expected_embeddings(ProbSequence{ad::constant(test::random_stochastic(rows, scorer.tokenizer().size(), rng))},
                             scorer.embedding());
}

// Generator whose every output distribution is uniform: zero embedding and
// zero output bias leave only constant logits.
GeneratorModel uniform_generator() {
  GeneratorModel gen = test::micro_generator(3);
  for (auto& p : gen.net.parameters()) {
    if (p.name == "embedding" || p.name == "out.bias") {
      auto& m = p.var.mutable_value();
      std::fill(m.data(), m.data() + m.size(), 0.0);
    }
  }
  return gen.frozen_copy();
}

std::vector<Example> micro_examples(const Tokenizer& tok) {
  return {test::micro_example(tok, "e1", {5, 6, 7, 4, 8}, "a c e", "b d"),
          test::micro_example(tok, "e2", {9, 10, 4, 11}, "f g", "h i j")};
}

}  // namespace

TEST_CASE("objective names round-trip and unknown names list the valid ones") {
  for (const auto& n : objective_names()) CHECK(to_string(parse_objective(n)) == n);
  try {
    parse_objective("dto_score");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("DTO-Score+Delta") != std::string::npos);
  }
  CHECK(needs_scorer(ObjectiveVariant::kDtoDelta));
  CHECK_FALSE(needs_scorer(ObjectiveVariant::kCpo));
  CHECK(needs_reference_policy(ObjectiveVariant::kDpo));
  CHECK_FALSE(needs_reference_policy(ObjectiveVariant::kCpo));
}

TEST_CASE("LossConfig JSON round trip and validation") {
  LossConfig c;
  c.variant = ObjectiveVariant::kCpo;
  c.beta = 0.5;
  c.lambda = 0.25;
  c.gumbel = GumbelConfig{2.0, true, 7, false};
  c.delta_floor = -4.0;
  const LossConfig back = LossConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK_THROWS_AS(LossConfig::from_json({{"variant", "CPO"}, {"lambda", -1.0}}), ConfigError);
  CHECK_THROWS_AS(LossConfig::from_json({{"gumbel", {{"temperature", 0.0}}}}), NonPositiveTemperature);
  CHECK_THROWS_AS(LossConfig::from_json({{"variant", "nll"}}), ConfigError);
}

TEST_CASE("nll_loss") {
  SUBCASE("certain logits give zero") {
    Matrix l(3, 4, -1e3);
    const std::vector<int> ref = {1, 3, 0};
    for (std::size_t t = 0; t < 3; ++t) l(t, static_cast<std::size_t>(ref[t])) = 1e3;
    CHECK(nll_loss(ad::constant(l), ref).item() == doctest::Approx(0.0));
  }
  SUBCASE("uniform logits give ln |V|") {
    CHECK(nll_loss(ad::constant(Matrix(2, 4, 0.3)), {0, 2}).item() == doctest::Approx(std::log(4.0)));
  }
  SUBCASE("random logits against a hand recomputation") {
    std::mt19937_64 rng(4);
    const Matrix l = test::random_matrix(4, 6, rng);
    const std::vector<int> ref = {2, 5, 0};
    double s = 0.0;
    for (std::size_t t = 0; t < 3; ++t) {
      double z = 0.0;
      for (std::size_t v = 0; v < 6; ++v) z += std::exp(l(t, v));
      s += l(t, static_cast<std::size_t>(ref[t])) - std::log(z);
    }
    CHECK(nll_loss(ad::constant(l), ref).item() == doctest::Approx(-s / 3).epsilon(1e-12));
  }
  CHECK_THROWS_AS(nll_loss(ad::constant(Matrix(2, 4)), {0, 1, 2}), LengthMismatch);
}

TEST_CASE("DTO-Score is the negated scorer likelihood") {
  const ScorerModel uniform = test::uniform_scorer(4);
  std::mt19937_64 rng(5);
  CHECK(dto_score_loss(random_soft(3, uniform, rng), {1, 2}, uniform).item() == doctest::Approx(std::log(4.0)));

  const ScorerModel scorer = test::micro_scorer(13);
  for (int trial = 0; trial < 5; ++trial) {
    const std::vector<int> decoded = {5 + trial, 7, 9};
    const std::vector<int> y = {6, 8 + trial};
    const double soft = dto_score_loss(one_hot_soft(decoded, scorer), y, scorer).item();
    CHECK(std::abs(soft + scorer_ll(scorer, decoded, y)) <= 1e-6);
    CHECK(soft > 0.0);
  }
}

TEST_CASE("DTO-Delta and DTO-Score+Delta on rigged likelihoods") {
  const ad::Var e = scalar(-1.0), o = scalar(-2.5);
  CHECK(dto_delta_from(e, o).item() == doctest::Approx(-1.5));
  CHECK(dto_score_delta_from(e, o).item() == doctest::Approx(-0.5));
  CHECK(dto_delta_from(e, o, -2.0).item() == doctest::Approx(-1.0));
  CHECK(dto_score_from(e).item() == 1.0);
}

TEST_CASE("DTO variant identities on a live scorer") {
  const ScorerModel scorer = test::micro_scorer(17);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const SoftSequence soft = random_soft(3, scorer, rng);
    const std::vector<int> y = {5, 6 + trial}, x = {9, 10, 11 + trial};
    CHECK(dto_delta_loss(soft, y, y, scorer).item() == 0.0);
    CHECK(dto_score_delta_loss(soft, y, y, scorer).item() == dto_score_loss(soft, y, scorer).item());
    CHECK(dto_delta_loss(soft, y, x, scorer).item() == -dto_delta_loss(soft, x, y, scorer).item());
    const double sum = dto_score_loss(soft, y, scorer).item() + dto_delta_loss(soft, y, x, scorer).item();
    CHECK(std::abs(dto_score_delta_loss(soft, y, x, scorer).item() - sum) <= 1e-9);
    const double ll_y = scorer_ll(scorer, soft, y), ll_x = scorer_ll(scorer, soft, x);
    CHECK(dto_score_delta_loss(soft, y, x, scorer).item() == doctest::Approx(-(2 * ll_y - ll_x)).epsilon(1e-12));
  }
}

TEST_CASE("CPO and DPO scalar values") {
  CHECK(cpo_loss(-1.0, -2.0, 1.0, 1.0) == doctest::Approx(1.31326).epsilon(1e-5));
  for (double a : {-0.3, -1.7, -4.0}) {
    CHECK(cpo_loss(a, a, 1.0, 0.5) == doctest::Approx(std::log(2.0) - 0.5 * a).epsilon(1e-12));
    CHECK(cpo_loss(a, a - 3.0, 0.0, 0.5) == doctest::Approx(std::log(2.0) - 0.5 * a).epsilon(1e-12));
  }
  CHECK(dpo_loss(-1.2, -3.4, -1.2, -3.4, 1.0) == doctest::Approx(std::log(2.0)));
  CHECK(dpo_loss(0.0, 0.0, -1.0, 0.0, 1.0) == doctest::Approx(0.31326).epsilon(1e-5));
  double prev = dpo_loss(0.0, 0.0, -1.0, 0.0, 1.0);
  for (double beta : {10.0, 100.0, 1000.0}) {
    const double cur = dpo_loss(0.0, 0.0, -1.0, 0.0, beta);
    CHECK(cur < prev);
    prev = cur;
  }
  CHECK(prev < 1e-12);
}

TEST_CASE("batch CPO contrasts the batch means once") {
  const std::vector<ad::Var> w = {scalar(-1.0), scalar(-3.0)}, l = {scalar(-2.0), scalar(-2.0)};
  CHECK(batch_cpo_loss(w, l, 1.0, 0.0).item() == doctest::Approx(std::log(2.0)));
  CHECK(batch_cpo_loss({w[1], w[0]}, {l[1], l[0]}, 1.0, 0.0).item() == batch_cpo_loss(w, l, 1.0, 0.0).item());
  CHECK(batch_cpo_loss({w[0]}, {l[0]}, 1.0, 1.0).item() == doctest::Approx(cpo_loss(-1.0, -2.0, 1.0, 1.0)));
  const double per = 0.5 * (cpo_loss(-1.0, -2.0, 1.0, 0.0) + cpo_loss(-3.0, -2.0, 1.0, 0.0));
  CHECK(batch_cpo_loss(w, l, 1.0, 0.0, true).item() == doctest::Approx(per));
  CHECK_THROWS_AS(batch_cpo_loss(w, {l[0]}, 1.0, 0.0), LengthMismatch);
}

TEST_CASE("DPO against a uniform reference reduces to the CPO contrast") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(-2.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const double w = n(rng), l = n(rng), c = -std::log(16.0);
    CHECK(dpo_loss(w, l, c, c, 0.7) == doctest::Approx(cpo_loss(w, l, 0.7, 0.0)).epsilon(1e-12));
  }

  const GeneratorModel gen = test::micro_generator(9);
  const GeneratorModel uniform = uniform_generator();
  const auto examples = micro_examples(gen.tokenizer);
  for (const auto& ex : examples) {
    LossConfig dpo;
    dpo.variant = ObjectiveVariant::kDpo;
    dpo.beta = 0.7;
    LossConfig cpo = dpo;
    cpo.variant = ObjectiveVariant::kCpo;
    cpo.lambda = 0.0;
    ObjectiveContext ctx;
    ctx.reference = &uniform;
    const double a = objective_loss(gen, {&ex}, dpo, ctx).item();
    const double b = objective_loss(gen, {&ex}, cpo, {}).item();
    CHECK(a == doctest::Approx(b).epsilon(1e-10));
  }
}

TEST_CASE("CPO and DPO scalars follow the closed forms") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(-2.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const double a = n(rng), b = n(rng), wr = n(rng), lr = n(rng);
    CHECK(cpo_loss(a, b, 1.3, 0.4) == doctest::Approx(-(log_sigmoid(1.3 * (a - b)) + 0.4 * a)).epsilon(1e-12));
    CHECK(dpo_loss(a, b, wr, lr, 0.6) == doctest::Approx(-log_sigmoid(0.6 * ((a - wr) - (b - lr)))).epsilon(1e-12));
  }
}

TEST_CASE("objective_loss preconditions") {
  const GeneratorModel gen = test::micro_generator();
  auto examples = micro_examples(gen.tokenizer);
  LossConfig cfg;
  cfg.variant = ObjectiveVariant::kDtoScore;
  CHECK_THROWS_AS(objective_loss(gen, {&examples[0]}, cfg, {}), PreconditionViolation);
  cfg.variant = ObjectiveVariant::kDpo;
  CHECK_THROWS_AS(objective_loss(gen, {&examples[0]}, cfg, {}), PreconditionViolation);
  cfg.variant = ObjectiveVariant::kCpo;
  examples[0].original.reset();
  CHECK_THROWS_AS(objective_loss(gen, {&examples[0]}, cfg, {}), PreconditionViolation);
  CHECK_THROWS_AS(objective_loss(gen, {}, cfg, {}), PreconditionViolation);
}

TEST_CASE("every variant passes the finite-difference gradient check") {
  const ScorerModel scorer = test::micro_scorer(11);
  const auto examples = micro_examples(scorer.tokenizer());
  const std::vector<const Example*> batch = {&examples[0], &examples[1]};
  for (const auto& name : objective_names()) {
    INFO(name);
    GeneratorModel gen = test::micro_generator(3);
    const GeneratorModel reference = test::micro_generator(4).frozen_copy();
    LossConfig cfg;
    cfg.variant = parse_objective(name);
    AuditOptions opts;
    opts.n_params = 24;
    opts.seed = 5;
    const auto audit = finite_difference_audit(gen, &scorer, batch, cfg, opts, 5, &reference);
    CHECK(audit.max_rel_error <= 1e-3);
  }
}

TEST_CASE("DTO updates never touch the scorer") {
  const ScorerModel scorer = test::micro_scorer(11);
  const auto before = scorer.checksum();
  GeneratorModel gen = test::micro_generator(3);
  const auto examples = micro_examples(gen.tokenizer);
  Adam adam(gen.net.parameters(), AdamConfig{1e-2});
  LossConfig cfg;
  cfg.variant = ObjectiveVariant::kDtoScoreDelta;
  ObjectiveContext ctx;
  ctx.scorer = &scorer;
  ctx.max_output_len = 5;
  const auto gen_before = gen.net.checksum();
  for (int step = 0; step < 5; ++step) {
    ad::backward(objective_loss(gen, {&examples[0], &examples[1]}, cfg, ctx));
    adam.step();
  }
  CHECK(scorer.checksum() == before);
  CHECK(gen.net.checksum() != gen_before);
}

TEST_CASE("descent on DTO-Score drives a one-slot distribution to the preferred token") {
  // Three candidate tokens; the scorer's preference among them is read off
  // its own likelihoods at the one-hot vertices and relabelled as token 2.
  for (std::uint64_t seed : {11, 23, 37}) {
    const ScorerModel scorer = test::micro_scorer(seed);
    const std::vector<int> candidates = {5, 6, 7};
    const std::vector<int> y = {8};
    std::vector<int> order = candidates;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return scorer_ll(scorer, std::vector<int>{a}, y) < scorer_ll(scorer, std::vector<int>{b}, y); });
    const int preferred = order[2];

    ad::Var logits = ad::parameter(Matrix(1, 3, 0.0));
    for (int step = 0; step < 500; ++step) {
      logits.zero_grad();
      const ad::Var p3 = ad::softmax_rows(logits);
      Matrix place(3, scorer.tokenizer().size());
      for (std::size_t k = 0; k < 3; ++k) place(k, static_cast<std::size_t>(order[k])) = 1.0;
      const ProbSequence p{ad::matmul(p3, ad::constant(place))};
      ad::backward(dto_score_loss(expected_embeddings(p, scorer.embedding()), y, scorer));
      for (std::size_t k = 0; k < 3; ++k) logits.mutable_value()(0, k) -= 0.1 * logits.grad()(0, k);
    }
    const double p2 = ad::softmax_rows(logits).value()(0, 2);
    INFO("seed " << seed << " preferred " << preferred);
    CHECK(p2 > 0.9);
  }
}
