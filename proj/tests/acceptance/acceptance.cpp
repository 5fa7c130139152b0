// Acceptance suite: runs every criterion and prints one PASS/FAIL line each.
// Exits nonzero if any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dto/errors.hpp"
#include "dto/llm_baselines.hpp"
#include "dto/metrics.hpp"
#include "dto/objectives.hpp"
#include "dto/synthetic.hpp"
#include "dto/trainer.hpp"
#include "support.hpp"

using namespace dto;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Example> micro_examples(const Tokenizer& tok) {
  return {test::micro_example(tok, "e1", {5, 6, 7, 4, 8}, "a c e", "b d"),
          test::micro_example(tok, "e2", {9, 10, 4, 11}, "f g", "h i j")};
}

// --- 1 ----------------------------------------------------------------------

void gradient_fidelity(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const ScorerModel scorer = test::micro_scorer(11);
  const auto ex = micro_examples(scorer.tokenizer());
  const std::vector<const Example*> batch = {&ex[0], &ex[1]};
  for (const auto& name : objective_names()) {
    GeneratorModel gen = test::micro_generator(3);
    const GeneratorModel reference = test::micro_generator(4).frozen_copy();
    LossConfig obj;
    obj.variant = parse_objective(name);
    AuditOptions opts;
    opts.eps = 1e-4;
    opts.n_params = 32;
    opts.seed = 5;
    const auto audit = finite_difference_audit(gen, &scorer, batch, obj, opts, 5, &reference);
    o.detail << name << "=" << audit.max_rel_error << " ";
    o.require(audit.probes.size() >= 32, name + " probed fewer than 32 parameters");
    o.require(audit.max_rel_error <= 1e-3, name + " relative error above 1e-3");
  }
  const double secs = seconds_since(t0);
  o.detail << "(" << secs << " s)";
  o.require(secs < 60.0, "runtime over 60 s");
}

// --- 2 ----------------------------------------------------------------------

void soft_bridge_faithfulness(Outcome& o) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> tok(5, 15);
  double worst_score = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const ScorerModel scorer = test::micro_scorer(1000 + trial);
    std::vector<int> src(1 + rng() % 5), tgt(1 + rng() % 4);
    for (auto& x : src) x = tok(rng);
    for (auto& x : tgt) x = tok(rng);
    Matrix p(src.size(), 16);
    for (std::size_t t = 0; t < src.size(); ++t) p(t, static_cast<std::size_t>(src[t])) = 1.0;
    const auto soft = expected_embeddings(ProbSequence{ad::constant(p)}, scorer.embedding());
    const Matrix a = scorer_forward(scorer, src, tgt).value();
    const Matrix b = scorer_forward(scorer, soft, tgt).value();
    for (std::size_t t = 0; t < a.rows(); ++t) worst_score = std::max(worst_score, std::abs(a(t, 0) - b(t, 0)));
  }
  double worst_embed = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 1 + rng() % 6, V = 2 + rng() % 15, D = 1 + rng() % 8;
    const Matrix p = test::random_stochastic(T, V, rng);
    const Matrix e = test::random_matrix(V, D, rng);
    const Matrix got = expected_embeddings(ProbSequence{ad::constant(p)}, ad::constant(e)).embeddings.value();
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t d = 0; d < D; ++d) {
        double s = 0.0;
        for (std::size_t v = 0; v < V; ++v) s += p(t, v) * e(v, d);
        worst_embed = std::max(worst_embed, std::abs(s - got(t, d)));
      }
    }
  }
  o.detail << "one-hot vs discrete " << worst_score << ", embeddings vs loop " << worst_embed;
  o.require(worst_score <= 1e-6, "one-hot scoring differs by more than 1e-6");
  o.require(worst_embed <= 1e-12, "expected embeddings differ from the loop by more than 1e-12");
}

// --- 3 ----------------------------------------------------------------------

void loss_oracles(Outcome& o) {
  const double cpo = cpo_loss(-1.0, -2.0, 1.0, 1.0);
  o.require(std::abs(cpo - 1.31326) <= 1e-4, "cpo_loss(-1, -2, 1, 1)");
  double worst_dpo = 0.0;
  for (double w : {-0.5, -1.7, -3.0}) {
    for (double l : {-0.2, -2.4}) worst_dpo = std::max(worst_dpo, std::abs(dpo_loss(w, l, w, l, 1.3) - std::log(2.0)));
  }
  o.require(worst_dpo <= 1e-9, "dpo identity cases");

  const ScorerModel scorer = test::micro_scorer(17);
  std::mt19937_64 rng(3);
  double worst_decomp = 0.0;
  bool antisymmetric = true;
  for (int trial = 0; trial < 20; ++trial) {
    const auto soft = expected_embeddings(ProbSequence{ad::constant(test::random_stochastic(3, 16, rng))}, scorer.embedding());
    const std::vector<int> y = {5 + trial % 10, 6}, x = {9, 10, 11 + trial % 5};
    const double sd = dto_score_delta_loss(soft, y, x, scorer).item();
    const double s = dto_score_loss(soft, y, scorer).item();
    const double d = dto_delta_loss(soft, y, x, scorer).item();
    worst_decomp = std::max(worst_decomp, std::abs(sd - (s + d)));
    antisymmetric &= d == -dto_delta_loss(soft, x, y, scorer).item();
  }
  o.require(worst_decomp <= 1e-9, "Score+Delta decomposition");
  o.require(antisymmetric, "Delta antisymmetry");
  o.detail << "cpo " << cpo << ", dpo identity err " << worst_dpo << ", decomposition err " << worst_decomp;
}

// --- 4 ----------------------------------------------------------------------

void table_identities(Outcome& o) {
  struct Row {
    const char* name;
    double predictive, adjusted, against;
  };
  for (const Row& r : {Row{"DTO-Score", -1.683, -2.879, -0.487}, Row{"NLL", -1.710, -2.885, -0.535}}) {
    const double adjusted = adjusted_from(r.predictive, r.against);
    const double delta = delta_from(r.predictive, r.against);
    o.detail << r.name << " adjusted " << adjusted << " delta " << delta << "; ";
    o.require(std::abs(adjusted - r.adjusted) <= 1e-3, std::string(r.name) + " adjusted");
    o.require(std::abs(delta - (r.adjusted - r.predictive)) <= 1e-3, std::string(r.name) + " delta");
  }
  o.require(std::abs(delta_from(-1.683, -0.487) - (-1.196)) <= 1e-3, "DTO-Score delta -1.196");
}

// --- 5 ----------------------------------------------------------------------

void gumbel_correctness(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const Matrix logits(1, 3, std::vector<double>{1.0, 0.2, -0.7});
  double z = 0.0;
  for (std::size_t v = 0; v < 3; ++v) z += std::exp(logits(0, v));
  GumbelConfig hard;
  hard.hard = true;
  std::mt19937_64 rng(5);
  const int n = 100000;
  std::array<int, 3> counts{};
  for (int i = 0; i < n; ++i) {
    const Matrix p = gumbel_softmax_sample(ad::constant(logits), hard, rng).probs.value();
    for (std::size_t v = 0; v < 3; ++v) counts[v] += p(0, v) == 1.0;
  }
  for (std::size_t v = 0; v < 3; ++v) {
    const double pv = std::exp(logits(0, v)) / z;
    const double sigma = std::sqrt(pv * (1 - pv) / n);
    const double f = static_cast<double>(counts[v]) / n;
    o.detail << "p" << v << " " << pv << "/" << f << " ";
    o.require(std::abs(f - pv) <= 3 * sigma, "hard frequency outside 3 sigma");
  }

  // tau = 1e-4. A soft row is softmax((logits + g) / tau), so its peak is set
  // by the gap between the two largest perturbed logits; rows whose raw gap
  // is at least 1 are also checked without noise.
  GumbelConfig cold;
  cold.temperature = 1e-4;
  std::normal_distribution<double> nd(0.0, 2.0);
  int wide = 0, wide_ok = 0, raw_rows = 0, raw_ok = 0, plain_ok = 0;
  for (int i = 0; i < 20000; ++i) {
    const std::size_t V = 3 + static_cast<std::size_t>(rng() % 6);
    Matrix l(1, V);
    for (std::size_t v = 0; v < V; ++v) l(0, v) = nd(rng);
    std::vector<double> sorted(l.data(), l.data() + V);
    std::sort(sorted.begin(), sorted.end());
    const bool raw_wide = sorted[V - 1] - sorted[V - 2] >= 1.0;

    std::mt19937_64 replay = rng;
    const Matrix g = gumbel_noise(1, V, replay);
    const Matrix p = gumbel_softmax_sample(ad::constant(l), cold, rng).probs.value();
    std::vector<double> perturbed(V);
    for (std::size_t v = 0; v < V; ++v) perturbed[v] = l(0, v) + g(0, v);
    std::sort(perturbed.begin(), perturbed.end());
    const double peak = *std::max_element(p.data(), p.data() + V);
    if (perturbed[V - 1] - perturbed[V - 2] >= 1.0) {
      ++wide;
      wide_ok += peak >= 0.999;
    }
    if (raw_wide) {
      ++raw_rows;
      raw_ok += peak >= 0.999;
      const Matrix q = ad::softmax_rows(ad::scale(ad::constant(l), 1e4)).value();
      plain_ok += *std::max_element(q.data(), q.data() + V) >= 0.999;
    }
  }
  o.detail << "| perturbed gap>=1: " << wide_ok << "/" << wide << ", raw gap>=1 without noise: " << plain_ok << "/"
           << raw_rows << ", raw gap>=1 with noise: " << raw_ok << "/" << raw_rows << " (informational)";
  o.require(wide > 1000 && wide_ok == wide, "cold rows with perturbed gap >= 1 not one-hot");
  o.require(raw_rows > 1000 && plain_ok == raw_rows, "cold rows with raw gap >= 1 not one-hot");
  const double secs = seconds_since(t0);
  o.detail << " (" << secs << " s)";
  o.require(secs < 30.0, "runtime over 30 s");
}

// --- 6 ----------------------------------------------------------------------

void micro_convergence(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const Tokenizer tok = Tokenizer::build(synthetic_lexicon());
  const auto stories = synthetic_corpus(16, 1);
  std::vector<std::string> endings;
  std::vector<Example> examples;
  for (const auto& s : stories) {
    endings.push_back(*s.original_ending);
    endings.push_back(s.edited_ending);
    examples.push_back(make_example(s, TaskMode::kFull, tok));
  }
  ScorerPretrainConfig sc;
  sc.epochs = 20;
  const ScorerModel scorer = pretrain_scorer(tok, endings, sc);
  ModelConfig mc;
  mc.vocab_size = static_cast<int>(tok.size());
  GeneratorModel gen(tok, mc, 7);
  TrainConfig cfg;
  cfg.objective.variant = ObjectiveVariant::kDtoScore;
  cfg.epochs = 10;
  cfg.max_output_len = 20;
  TrainOptions opts;
  opts.validation = &examples;
  const auto result = train(gen, &scorer, examples, cfg, opts);
  const auto& h = result.history;
  const double first = h.epoch_train_loss.front(), last = h.epoch_train_loss.back();
  const double tol = 0.02 * std::abs(first);
  double worst_rise = 0.0;
  for (std::size_t e = 1; e < h.epoch_train_loss.size(); ++e)
    worst_rise = std::max(worst_rise, h.epoch_train_loss[e] - h.epoch_train_loss[e - 1]);
  const double val_start = *h.initial_val_loss, val_end = *h.epoch_val_loss.back();
  o.detail << "train " << first << " -> " << last << ", worst rise " << worst_rise << " (tol " << tol << "), val "
           << val_start << " -> " << val_end;
  o.require(h.epoch_train_loss.size() == 10 && last < first, "epoch 10 not below epoch 1");
  o.require(worst_rise <= tol, "an epoch rose by more than 2% of epoch 1");
  o.require(val_end <= val_start, "validation loss rose");
  o.require(result.scorer_checksum_before == result.scorer_checksum_after, "scorer changed");
  const double secs = seconds_since(t0);
  o.detail << " (" << secs << " s)";
  o.require(secs < 300.0, "runtime over 5 min");
}

// --- 7 ----------------------------------------------------------------------

double mean_scorer_delta(const GeneratorModel& gen, const ScorerModel& scorer, const std::vector<Example>& ex,
                         const std::vector<StoryRecord>& records) {
  const auto preds = predict(gen, ex, 20);
  const std::vector<AnyRecord> recs(records.begin(), records.end());
  return *corpus_evaluate(preds, recs, {MetricId::kScorerLl}, &scorer).corpus_means.at(0).delta;
}

// Five seeds; each pretrains a scorer on the training endings, warm-starts a
// generator with NLL, then continues the same start with NLL and with
// DTO-Score and compares mean scorer-likelihood delta on held-out stories.
void comparative_sanity(Outcome& o) {
  const Tokenizer tok = Tokenizer::build(synthetic_lexicon());
  double sum_nll = 0.0, sum_dto = 0.0;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    const auto train_r = synthetic_corpus(32, 1 + 10 * s, "tr");
    const auto test_r = synthetic_corpus(16, 2 + 10 * s, "te");
    std::vector<std::string> endings;
    std::vector<Example> tr, te;
    for (const auto& r : train_r) {
      endings.push_back(*r.original_ending);
      endings.push_back(r.edited_ending);
      tr.push_back(make_example(r, TaskMode::kFull, tok));
    }
    for (const auto& r : test_r) te.push_back(make_example(r, TaskMode::kFull, tok));
    ScorerPretrainConfig sc;
    sc.epochs = 20;
    const ScorerModel scorer = pretrain_scorer(tok, endings, sc);

    ModelConfig mc;
    mc.vocab_size = static_cast<int>(tok.size());
    GeneratorModel warm(tok, mc, 7 + static_cast<std::uint64_t>(s));
    TrainConfig tc;
    tc.max_output_len = 20;
    tc.learning_rate = 1e-3;
    tc.epochs = 10;
    train(warm, nullptr, tr, tc);

    double d[2] = {0.0, 0.0};
    const ObjectiveVariant variants[2] = {ObjectiveVariant::kNll, ObjectiveVariant::kDtoScore};
    for (int k = 0; k < 2; ++k) {
      GeneratorModel g(tok, warm.net.clone(true));
      TrainConfig t2 = tc;
      t2.objective.variant = variants[k];
      t2.epochs = 5;
      t2.learning_rate = 1e-5;
      train(g, &scorer, tr, t2);
      d[k] = mean_scorer_delta(g, scorer, te, test_r);
    }
    o.detail << "seed " << s << ": NLL " << d[0] << " DTO " << d[1] << "; ";
    sum_nll += d[0];
    sum_dto += d[1];
  }
  const double nll = sum_nll / seeds, dto = sum_dto / seeds;
  o.detail << "pooled NLL " << nll << " DTO " << dto << (dto > nll ? " (DTO strictly higher)" : " (DTO not higher)");
  o.require(dto >= nll - 1e-3, "DTO-Score mean delta below NLL minus 1e-3");
}

// --- 8 ----------------------------------------------------------------------

// Exhaustive paired-bootstrap oracle over all n^n index tuples.
double tuple_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  std::vector<std::size_t> idx(n, 0);
  std::size_t hits = 0, total = 0;
  while (true) {
    double diff = 0.0;
    for (std::size_t i : idx) diff += a[i] - b[i];
    hits += diff <= 0.0;
    ++total;
    std::size_t k = 0;
    while (k < n && ++idx[k] == n) idx[k++] = 0;
    if (k == n) break;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

void bootstrap_test(Outcome& o) {
  const std::vector<double> a = {0.9, 0.1, 0.5}, b = {0.2, 0.6, 0.4};
  const auto r = bootstrap_compare(a, b);
  const double oracle = tuple_oracle(a, b);
  o.require(r.exhaustive && std::abs(r.p_value - oracle) <= 1e-12, "n=3 exhaustive enumeration");
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> base(200), better(200);
  for (std::size_t i = 0; i < base.size(); ++i) {
    base[i] = u(rng);
    better[i] = base[i] + 0.05 + 0.1 * u(rng);
  }
  const double dominating = bootstrap_compare(better, base).p_value;
  const double identical = bootstrap_compare(base, base).p_value;
  o.require(dominating == 0.0, "dominating system p != 0");
  o.require(identical == 1.0, "identical systems p != 1");
  o.detail << "n=3 p " << r.p_value << " (oracle " << oracle << "), dominating p " << dominating << ", identical p " << identical;
}

// --- 9 ----------------------------------------------------------------------

std::size_t hand_lcs(const std::vector<std::string>& x, const std::vector<std::string>& y) {
  std::vector<std::vector<std::size_t>> t(x.size() + 1, std::vector<std::size_t>(y.size() + 1, 0));
  for (std::size_t i = 1; i <= x.size(); ++i)
    for (std::size_t j = 1; j <= y.size(); ++j)
      t[i][j] = x[i - 1] == y[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
  return t[x.size()][y.size()];
}

void metrics_ground_truth(Outcome& o) {
  double worst_rouge = 0.0, worst_bleu = 0.0;
  for (const auto& c : json::parse(test::slurp(test::fixture("rouge_reference.json"))).at("cases")) {
    const auto h = c.at("hypothesis").get<std::string>(), r = c.at("reference").get<std::string>();
    const double got = rouge_l(h, r);
    worst_rouge = std::max(worst_rouge, std::abs(got - c.at("f1").get<double>()));
    const auto ht = rouge_tokens(h), rt = rouge_tokens(r);
    const double lcs = static_cast<double>(hand_lcs(ht, rt));
    const double hand = lcs == 0 ? 0.0 : 2 * lcs / static_cast<double>(ht.size() + rt.size());
    worst_rouge = std::max(worst_rouge, std::abs(got - hand));
  }
  const auto bl = json::parse(test::slurp(test::fixture("bleu_reference.json")));
  for (const auto& c : bl.at("sentence")) {
    const double got = bleu(c.at("hypothesis").get<std::string>(), c.at("references").get<std::vector<std::string>>());
    worst_bleu = std::max(worst_bleu, std::abs(got - c.at("score").get<double>()));
  }
  std::vector<std::vector<std::string>> refs;
  for (const auto& r : bl.at("corpus").at("references").get<std::vector<std::string>>()) refs.push_back({r});
  worst_bleu = std::max(worst_bleu, std::abs(corpus_bleu(bl.at("corpus").at("hypotheses").get<std::vector<std::string>>(), refs) -
                                             bl.at("corpus").at("score").get<double>()));
  o.require(worst_rouge <= 1e-2, "ROUGE-L fixture");
  o.require(worst_bleu <= 1e-2, "BLEU fixture");
  const std::string s = "the weather was too rainy for a walk";
  o.require(rouge_l(s, s) == 1.0 && std::abs(bleu(s, {s}) - 100.0) <= 1e-9, "identity not maximal");
  o.require(rouge_l(s, "dogs bark loudly") == 0.0 && bleu(s, {"dogs bark loudly"}) == 0.0, "disjoint not zero");
  o.detail << "ROUGE-L max err " << worst_rouge << ", BLEU max err " << worst_bleu;
}

// --- 10 ---------------------------------------------------------------------

void llm_harness(Outcome& o) {
  const auto rec = parse_story_record(read_jsonl(test::fixture("table2.jsonl")).at(0)).at(0);
  o.require(build_prompt(rec, PromptConfig{}) == test::slurp(test::fixture("prompt_zero_shot_table2.txt")),
            "zero-shot prompt differs from the fixture");
  const int limit = derive_token_limit(140.93, 29.94);
  o.require(limit == 50, "token limit");

  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0.0, 1.0);
  RetrievalStore store(32);
  for (int i = 0; i < 1000; ++i) {
    RetrievalEntry e;
    e.id = "v" + std::to_string(i);
    e.vector.resize(32);
    for (auto& x : e.vector) x = n(rng);
    e.record = rec;
    e.record.story_id = e.id;
    store.add(std::move(e));
  }
  int mismatches = 0;
  for (int q = 0; q < 20; ++q) {
    std::vector<double> query(32);
    for (auto& x : query) x = n(rng);
    std::vector<std::pair<double, std::string>> all;
    double qn = 0.0;
    for (double x : query) qn += x * x;
    for (const auto& e : store.entries()) {
      double dot = 0.0, en = 0.0;
      for (std::size_t i = 0; i < 32; ++i) {
        dot += query[i] * e.vector[i];
        en += e.vector[i] * e.vector[i];
      }
      all.emplace_back(dot / std::sqrt(qn * en), e.id);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    const auto hits = rag_retrieve(store, query, 10);
    for (std::size_t k = 0; k < hits.size(); ++k)
      mismatches += hits[k].id != all[k].second || std::abs(hits[k].similarity - all[k].first) > 1e-12;
  }
  o.require(mismatches == 0, "retrieval differs from brute force");
  o.detail << "prompt byte-exact, token limit " << limit << ", retrieval mismatches " << mismatches << " over 20 queries x top-10";
}

// --- 11 ---------------------------------------------------------------------

int run_cli(const std::string& args, const fs::path& dir) {
  const std::string cmd = std::string("\"") + DTO_CLI_PATH + "\" " + args + " >> \"" + (dir / "cli.log").string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void determinism(Outcome& o) {
  const auto dir = test::scratch_dir("acceptance_determinism");
  run_cli("data synth --count 8 --seed 1 --id-prefix tr -o " + (dir / "train.jsonl").string(), dir);
  run_cli("data synth --count 4 --seed 2 --id-prefix te -o " + (dir / "test.jsonl").string(), dir);
  const json small = {{"d_model", 16}, {"heads", 2}, {"encoder_layers", 1}, {"decoder_layers", 1}, {"ffn_dim", 32}};
  const json cfg = {
      {"seed", 5},
      {"data", {{"train", (dir / "train.jsonl").string()}, {"test", (dir / "test.jsonl").string()}}},
      {"model", small},
      {"train", {{"objective", {{"variant", "DTO-Score"}, {"gumbel", {{"temperature", 1.0}}}}}, {"epochs", 2}, {"batch_size", 4}, {"max_output_len", 8}}},
      {"scorer", {{"pretrain", {{"epochs", 2}, {"model", small}}}}},
      {"llm", {{"modes", {"zero_shot", "one_shot_random", "one_shot_fixed", "one_shot_rag"}},
               {"prompt", {{"fixed_exemplar_id", "tr-1"}}},
               {"store", (dir / "store.jsonl").string()}}}};
  std::ofstream(dir / "run.json") << cfg.dump(2);
  const std::string c = " -c " + (dir / "run.json").string();

  bool ok = true;
  for (const char* run : {"a", "b"}) {
    const fs::path out = dir / run;
    ok &= run_cli("train" + c + " -o " + out.string(), dir) == 0;
    ok &= run_cli("predict --checkpoint " + (out / "generator.ckpt").string() + " --input " + (dir / "test.jsonl").string() +
                      " -o " + (out / "pred.jsonl").string(),
                  dir) == 0;
    ok &= run_cli("llm" + c + " index --store " + (dir / "store.jsonl").string(), dir) == 0;
    ok &= run_cli("llm" + c + " -o " + (out / "llm").string(), dir) == 0;
  }
  o.require(ok, "a command failed (see cli.log)");
  auto same = [&](const fs::path& rel) {
    const auto a = test::slurp((dir / "a" / rel).string()), b = test::slurp((dir / "b" / rel).string());
    return !a.empty() && a == b;
  };
  o.require(same("history.csv"), "history CSV differs");
  o.require(same("pred.jsonl"), "prediction JSONL differs");
  o.require(same(fs::path("llm") / "llm_predictions.jsonl"), "LLM predictions differ");
  o.detail << "history.csv, pred.jsonl and llm_predictions.jsonl identical across reruns";
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria = {
      {"gradient fidelity", gradient_fidelity},
      {"soft-bridge faithfulness", soft_bridge_faithfulness},
      {"loss-value oracles", loss_oracles},
      {"reported-table arithmetic identities", table_identities},
      {"Gumbel correctness", gumbel_correctness},
      {"micro training convergence", micro_convergence},
      {"comparative sanity", comparative_sanity},
      {"bootstrap test", bootstrap_test},
      {"metrics ground truth", metrics_ground_truth},
      {"LLM harness", llm_harness},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "[exception: " << e.what() << "]";
    }
    failed += !o.pass;
    std::printf("criterion %zu %s: %s  %s\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL", o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%zu criteria, %d failed\n", criteria.size(), failed);
  return failed == 0 ? 0 : 1;
}
