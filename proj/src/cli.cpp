#include "dto/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <unordered_map>

#include "dto/errors.hpp"

namespace dto {

namespace fs = std::filesystem;

std::unique_ptr<Provider> make_openai_provider(const LlmSetup& setup);  // openai_provider.cpp

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::optional<std::string> opt_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

nlohmann::json opt_json(const std::optional<std::string>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename F>
auto config_section(const char* name, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config section '") + name + "': " + e.what());
  }
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  if (!j.contains("seed")) throw ConfigError("run config needs an explicit 'seed'");
  RunConfig c;
  return config_section("root", [&] {
    c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("task_mode")) c.mode = parse_task_mode(j.at("task_mode").get<std::string>());
    c.output_dir = j.value("output_dir", c.output_dir);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.init_checkpoint = opt_string(j, "init_checkpoint");
    c.multi_reference_bleu = j.value("multi_reference_bleu", c.multi_reference_bleu);

    if (j.contains("data")) {
      const auto& d = j.at("data");
      c.data.train = opt_string(d, "train");
      c.data.validation = opt_string(d, "validation");
      c.data.test = opt_string(d, "test");
      if (d.contains("fields")) c.data.fields = FieldMap::from_json(d.at("fields"));
    }
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));

    nlohmann::json train = j.value("train", nlohmann::json::object());
    if (!train.contains("seed")) train["seed"] = c.seed;
    c.train = TrainConfig::from_json(train);

    if (j.contains("scorer")) {
      const auto& s = j.at("scorer");
      c.scorer.checkpoint = opt_string(s, "checkpoint");
      if (s.contains("pretrain")) {
        const auto& p = s.at("pretrain");
        c.scorer.pretrain.epochs = p.value("epochs", c.scorer.pretrain.epochs);
        c.scorer.pretrain.learning_rate = p.value("learning_rate", c.scorer.pretrain.learning_rate);
        c.scorer.pretrain.batch_size = p.value("batch_size", c.scorer.pretrain.batch_size);
        c.scorer.pretrain.noise = p.value("noise", c.scorer.pretrain.noise);
        c.scorer.pretrain.seed = p.value("seed", c.seed);
        if (p.contains("model")) c.scorer.pretrain.model = ModelConfig::from_json(p.at("model"));
      } else {
        c.scorer.pretrain.seed = c.seed;
      }
    } else {
      c.scorer.pretrain.seed = c.seed;
    }
    if (!j.contains("scorer") || !j.at("scorer").contains("pretrain") ||
        !j.at("scorer").at("pretrain").contains("model")) {
      c.scorer.pretrain.model = c.model;
    }

    if (j.contains("metrics")) {
      c.metrics.clear();
      for (const auto& m : j.at("metrics")) c.metrics.insert(parse_metric(m.get<std::string>()));
    }

    if (j.contains("llm")) {
      const auto& l = j.at("llm");
      c.llm.provider = l.value("provider", c.llm.provider);
      if (c.llm.provider != "mock" && c.llm.provider != "openai") {
        throw ConfigError("llm.provider must be 'mock' or 'openai'");
      }
      if (l.contains("modes")) {
        c.llm.modes.clear();
        for (const auto& m : l.at("modes")) c.llm.modes.push_back(parse_prompt_mode(m.get<std::string>()));
      }
      nlohmann::json prompt = l.value("prompt", nlohmann::json::object());
      if (!prompt.contains("seed")) prompt["seed"] = c.seed;
      c.llm.prompt = PromptConfig::from_json(prompt);
      c.llm.store = opt_string(l, "store");
      c.llm.derive_token_limit = l.value("derive_token_limit", c.llm.derive_token_limit);
      c.llm.parallelism = l.value("parallelism", c.llm.parallelism);
      c.llm.retry.attempts = l.value("retry_attempts", c.llm.retry.attempts);
      c.llm.retry.base_delay_ms = l.value("retry_base_delay_ms", c.llm.retry.base_delay_ms);
      c.llm.chat_model = l.value("chat_model", c.llm.chat_model);
      c.llm.embedding_model = l.value("embedding_model", c.llm.embedding_model);
      if (l.contains("mock")) {
        const auto& m = l.at("mock");
        if (m.contains("behavior")) {
          c.llm.mock.behavior = MockProvider::parse_behavior(m.at("behavior").get<std::string>());
        }
        c.llm.mock.fixed_text = m.value("fixed_text", c.llm.mock.fixed_text);
        c.llm.mock.dimension = m.value("dimension", c.llm.mock.dimension);
        c.llm.mock.seed = m.value("seed", c.seed);
      } else {
        c.llm.mock.seed = c.seed;
      }
    } else {
      c.llm.prompt.seed = c.seed;
      c.llm.mock.seed = c.seed;
    }
    return c;
  });
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json metrics_j = nlohmann::json::array();
  for (MetricId m : metrics) metrics_j.push_back(to_string(m));
  nlohmann::json modes_j = nlohmann::json::array();
  for (PromptMode m : llm.modes) modes_j.push_back(to_string(m));
  const char* behavior = llm.mock.behavior == MockProvider::Behavior::kEchoOriginal ? "echo_original"
                         : llm.mock.behavior == MockProvider::Behavior::kEchoCounterfactual
                             ? "echo_counterfactual"
                             : "fixed";
  return {
      {"seed", seed},
      {"task_mode", dto::to_string(mode)},
      {"output_dir", output_dir},
      {"vocab_size", vocab_size},
      {"init_checkpoint", opt_json(init_checkpoint)},
      {"multi_reference_bleu", multi_reference_bleu},
      {"data",
       {{"train", opt_json(data.train)},
        {"validation", opt_json(data.validation)},
        {"test", opt_json(data.test)}}},
      {"model", model.to_json()},
      {"train", train.to_json()},
      {"scorer",
       {{"checkpoint", opt_json(scorer.checkpoint)},
        {"pretrain",
         {{"epochs", scorer.pretrain.epochs},
          {"learning_rate", scorer.pretrain.learning_rate},
          {"batch_size", scorer.pretrain.batch_size},
          {"noise", scorer.pretrain.noise},
          {"seed", scorer.pretrain.seed},
          {"model", scorer.pretrain.model.to_json()}}}}},
      {"metrics", metrics_j},
      {"llm",
       {{"provider", llm.provider},
        {"modes", modes_j},
        {"prompt", llm.prompt.to_json()},
        {"store", opt_json(llm.store)},
        {"derive_token_limit", llm.derive_token_limit},
        {"parallelism", llm.parallelism},
        {"retry_attempts", llm.retry.attempts},
        {"retry_base_delay_ms", llm.retry.base_delay_ms},
        {"chat_model", llm.chat_model},
        {"embedding_model", llm.embedding_model},
        {"mock",
         {{"behavior", behavior},
          {"fixed_text", llm.mock.fixed_text},
          {"dimension", llm.mock.dimension},
          {"seed", llm.mock.seed}}}}},
  };
}

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    switch (err->category()) {
      case Error::Category::kUsage: return 1;
      case Error::Category::kData: return 2;
      case Error::Category::kRuntime: return 3;
    }
  }
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return 2;
  return 3;
}

void write_text(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path);
  out << text;
}

// ---------------------------------------------------------------------------
// data

namespace {

std::vector<std::string> targets_of(const std::vector<AnyRecord>& records) {
  std::vector<std::string> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(record_target(r));
  return out;
}

std::vector<StoryRecord> stories_of(const std::vector<AnyRecord>& records, const std::string& what) {
  std::vector<StoryRecord> out;
  for (const auto& r : records) {
    const auto* s = std::get_if<StoryRecord>(&r);
    if (!s) throw ConfigError(what + " needs story records, not ART records");
    out.push_back(*s);
  }
  return out;
}

}  // namespace

nlohmann::json cmd_data_validate(const std::map<Split, std::string>& paths, TaskMode mode,
                                 const FieldMap& fields) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [split, path] : paths) {
    const auto records = load_records(path, split, mode, fields);
    std::set<std::string> ids;
    for (const auto& r : records) {
      if (!ids.insert(record_id(r)).second) {
        throw ParseError(path + ": duplicate record id " + record_id(r));
      }
    }
    out[to_string(split)] = {{"path", path}, {"records", records.size()}, {"valid", true}};
  }
  return out;
}

nlohmann::json cmd_data_stats(const std::map<Split, std::string>& paths, TaskMode mode,
                              const FieldMap& fields) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [split, path] : paths) {
    const auto records = load_records(path, split, mode, fields);
    const SplitStats st = ending_stats(targets_of(records));
    nlohmann::json row = {{"path", path},
                          {"count", st.count},
                          {"mean_chars", st.mean_chars},
                          {"sd_chars", st.sd_chars},
                          {"mean_tokens", st.mean_tokens}};
    if (st.count > 0) row["token_limit"] = derive_token_limit(st.mean_chars, st.sd_chars);
    out[to_string(split)] = row;
  }
  return out;
}

// ---------------------------------------------------------------------------
// train

namespace {

std::vector<std::string> vocabulary_texts(const std::vector<AnyRecord>& records) {
  std::vector<std::string> texts;
  for (const auto& rec : records) {
    if (const auto* s = std::get_if<StoryRecord>(&rec)) {
      texts.push_back(s->premise);
      texts.push_back(s->initial_event);
      texts.push_back(s->counterfactual_event);
      if (s->original_ending) texts.push_back(*s->original_ending);
      texts.push_back(s->edited_ending);
    } else {
      const auto& a = std::get<ArtRecord>(rec);
      texts.push_back(a.premise);
      texts.push_back(a.event_a);
      texts.push_back(a.event_b);
      texts.push_back(a.ending);
    }
  }
  return texts;
}

std::vector<std::string> scorer_texts(const std::vector<AnyRecord>& records) {
  std::vector<std::string> texts;
  for (const auto& rec : records) {
    if (const auto* s = std::get_if<StoryRecord>(&rec); s && s->original_ending) {
      texts.push_back(*s->original_ending);
    }
    texts.push_back(record_target(rec));
  }
  return texts;
}

std::vector<Example> examples_of(const std::vector<AnyRecord>& records, TaskMode mode,
                                 const Tokenizer& tok, std::size_t max_len) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(make_example(r, mode, tok, max_len));
  return out;
}

bool wants_scorer(const RunConfig& cfg) {
  return needs_scorer(cfg.train.objective.variant) || cfg.metrics.count(MetricId::kScorerLl) > 0;
}

}  // namespace

TrainArtifacts cmd_train(const RunConfig& cfg) {
  if (!cfg.data.train) throw ConfigError("train: data.train is required");
  const auto train_records = load_records(*cfg.data.train, Split::kTrain, cfg.mode, cfg.data.fields);
  if (train_records.empty()) throw PreconditionViolation("train: training split is empty");
  std::vector<AnyRecord> val_records;
  if (cfg.data.validation) {
    val_records = load_records(*cfg.data.validation, Split::kValidation, cfg.mode, cfg.data.fields);
  }

  fs::create_directories(cfg.output_dir);
  TrainArtifacts art;
  art.generator_checkpoint = (fs::path(cfg.output_dir) / "generator.ckpt").string();
  art.history_csv = (fs::path(cfg.output_dir) / "history.csv").string();
  art.config_json = (fs::path(cfg.output_dir) / "config.json").string();
  write_text(art.config_json, cfg.to_json().dump(2) + "\n");

  std::optional<GeneratorModel> gen;
  std::optional<ScorerModel> scorer;
  if (cfg.init_checkpoint) gen = load_generator(*cfg.init_checkpoint);
  if (cfg.scorer.checkpoint) scorer = load_scorer(*cfg.scorer.checkpoint);

  Tokenizer tok;
  if (gen) {
    tok = gen->tokenizer;
  } else if (scorer) {
    tok = scorer->tokenizer();
  } else {
    tok = Tokenizer::build(vocabulary_texts(train_records), cfg.vocab_size);
  }

  if (!scorer && wants_scorer(cfg)) {
    scorer = pretrain_scorer(tok, scorer_texts(train_records), cfg.scorer.pretrain);
  }
  if (scorer) {
    art.scorer_checkpoint = (fs::path(cfg.output_dir) / "scorer.ckpt").string();
    save_scorer(*scorer, art.scorer_checkpoint);
  }
  if (!gen) {
    ModelConfig mc = cfg.model;
    mc.vocab_size = static_cast<int>(tok.size());
    gen.emplace(tok, mc, cfg.seed, cfg.train.max_output_len);
  }
  gen->max_output_len = cfg.train.max_output_len;

  const auto train_set = examples_of(train_records, cfg.mode, gen->tokenizer, cfg.train.max_input_len);
  const auto val_set = examples_of(val_records, cfg.mode, gen->tokenizer, cfg.train.max_input_len);

  TrainOptions opts;
  if (!val_set.empty()) opts.validation = &val_set;
  opts.checkpoint_path = art.generator_checkpoint;
  opts.on_epoch = [](std::size_t epoch, double loss) {
    std::cerr << "epoch " << epoch << " train_loss " << loss << "\n";
  };
  art.result = train(*gen, scorer ? &*scorer : nullptr, train_set, cfg.train, opts);
  write_text(art.history_csv, art.result.history.to_csv());
  return art;
}

// ---------------------------------------------------------------------------
// predict / evaluate

std::vector<Prediction> cmd_predict(const std::string& checkpoint, const std::string& input,
                                    Split split, TaskMode mode, const std::string& output,
                                    std::optional<std::size_t> max_len, const FieldMap& fields) {
  const GeneratorModel gen = load_generator(checkpoint);
  const auto records = load_records(input, split, mode, fields);
  const auto examples = examples_of(records, mode, gen.tokenizer,
                                    static_cast<std::size_t>(gen.net.config().context_limit));
  const auto preds = predict(gen, examples, max_len.value_or(gen.max_output_len), to_string(mode));
  std::vector<json> rows;
  for (const auto& p : preds) {
    json row = {{"story_id", p.story_id}, {"mode", p.mode}, {"prediction", p.text}};
    if (p.text.empty()) row["empty"] = true;
    rows.push_back(std::move(row));
  }
  write_text(output, "");
  write_jsonl(output, rows);
  return preds;
}

std::vector<Prediction> read_predictions(const std::string& path) {
  std::vector<Prediction> out;
  for (const auto& row : read_jsonl(path)) {
    if (!row.contains("story_id")) throw MissingField("story_id (in " + path + ")");
    Prediction p;
    p.story_id = row.at("story_id").get<std::string>();
    p.text = row.value("prediction", std::string());
    p.mode = row.value("mode", std::string());
    out.push_back(std::move(p));
  }
  return out;
}

MetricReport cmd_evaluate(const EvaluateRequest& req) {
  const auto preds = read_predictions(req.predictions);
  if (preds.empty()) throw AlignmentError(req.predictions + ": no predictions to evaluate");
  const auto records = load_records(req.input, req.split, req.mode, req.fields);
  std::optional<ScorerModel> scorer;
  if (req.metrics.count(MetricId::kScorerLl)) {
    if (!req.scorer_checkpoint) throw ConfigError("scorer_ll needs --scorer <checkpoint>");
    scorer = load_scorer(*req.scorer_checkpoint);
  }
  EvaluateOptions opts;
  opts.multi_reference_bleu = req.multi_reference_bleu;
  MetricReport report = corpus_evaluate(preds, records, req.metrics, scorer ? &*scorer : nullptr, opts);

  fs::create_directories(req.output_dir);
  write_text((fs::path(req.output_dir) / "report.csv").string(), report_csv(req.method, report));
  std::vector<json> rows;
  for (const auto& s : report.per_sample) rows.push_back(s.to_json());
  write_jsonl((fs::path(req.output_dir) / "per_sample.jsonl").string(), rows);
  return report;
}

// ---------------------------------------------------------------------------
// compare

ScoreColumn parse_score_column(std::string_view s) {
  if (s == "predictive") return ScoreColumn::kPredictive;
  if (s == "delta") return ScoreColumn::kDelta;
  if (s == "adjusted") return ScoreColumn::kAdjusted;
  throw ConfigError("unknown score column '" + std::string(s) + "' (valid: predictive, delta, adjusted)");
}

namespace {

std::vector<std::pair<std::string, double>> column_scores(const std::string& path, MetricId metric,
                                                          ScoreColumn column) {
  const char* key = column == ScoreColumn::kPredictive ? "predictive"
                    : column == ScoreColumn::kDelta    ? "delta"
                                                       : "adjusted";
  std::vector<std::pair<std::string, double>> out;
  for (const auto& row : read_jsonl(path)) {
    if (row.value("metric", std::string()) != to_string(metric)) continue;
    if (!row.contains(key)) {
      throw MissingField(std::string(key) + " for " + row.value("story_id", std::string("?")) +
                         " in " + path);
    }
    out.emplace_back(row.at("story_id").get<std::string>(), row.at(key).get<double>());
  }
  return out;
}

}  // namespace

BootstrapResult cmd_compare(const std::string& scores_a, const std::string& scores_b,
                            MetricId metric, ScoreColumn column, std::size_t n_resamples,
                            std::uint64_t seed) {
  const auto a = column_scores(scores_a, metric, column);
  const auto b = column_scores(scores_b, metric, column);
  std::unordered_map<std::string, double> b_by_id(b.begin(), b.end());
  if (a.size() != b.size() || b_by_id.size() != b.size()) {
    throw AlignmentError("score files hold " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " distinct " + to_string(metric) + " samples");
  }
  std::vector<double> va, vb;
  for (const auto& [id, v] : a) {
    const auto it = b_by_id.find(id);
    if (it == b_by_id.end()) throw AlignmentError("sample " + id + " missing from " + scores_b);
    va.push_back(v);
    vb.push_back(it->second);
  }
  return bootstrap_compare(va, vb, n_resamples, seed);
}

// ---------------------------------------------------------------------------
// llm

std::unique_ptr<Provider> make_provider(const LlmSetup& setup) {
  if (setup.provider == "openai") {
    if (auto p = make_openai_provider(setup)) return p;
    std::cerr << "OPENAI_API_KEY is not set; using the mock provider\n";
  }
  return std::make_unique<MockProvider>(setup.mock);
}

std::vector<BaselineRow> cmd_llm(const RunConfig& cfg) {
  if (!cfg.data.test) throw ConfigError("llm: data.test is required");
  const auto test = stories_of(load_records(*cfg.data.test, Split::kTest, TaskMode::kFull,
                                            cfg.data.fields), "llm");
  std::vector<StoryRecord> pool;
  if (cfg.data.train) {
    pool = stories_of(load_records(*cfg.data.train, Split::kTrain, TaskMode::kFull, cfg.data.fields),
                      "llm");
  }

  PromptConfig prompt = cfg.llm.prompt;
  if (cfg.llm.derive_token_limit) {
    if (pool.empty()) throw ConfigError("llm: derive_token_limit needs data.train");
    std::vector<std::string> endings;
    for (const auto& r : pool) endings.push_back(r.edited_ending);
    prompt.max_new_tokens = derive_token_limit(endings);
  }

  bool any_rag = false;
  for (PromptMode m : cfg.llm.modes) any_rag |= m == PromptMode::kOneShotRag;
  std::optional<RetrievalStore> store;
  if (any_rag) {
    if (!cfg.llm.store) throw MissingExemplar("one_shot_rag needs llm.store (build one with `dto llm index`)");
    store = RetrievalStore::load(*cfg.llm.store);
  }

  auto provider = make_provider(cfg.llm);
  BaselineOptions opts;
  opts.parallelism = cfg.llm.parallelism;
  opts.retry = cfg.llm.retry;

  std::vector<BaselineRow> all;
  for (PromptMode m : cfg.llm.modes) {
    PromptConfig pc = prompt;
    pc.mode = m;
    auto rows = run_baseline(test, pool, pc, *provider, store ? &*store : nullptr, opts);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  std::vector<json> out;
  for (const auto& r : all) out.push_back(r.to_json());
  fs::create_directories(cfg.output_dir);
  write_jsonl((fs::path(cfg.output_dir) / "llm_predictions.jsonl").string(), out);
  write_text((fs::path(cfg.output_dir) / "config.json").string(), cfg.to_json().dump(2) + "\n");
  return all;
}

RetrievalStore cmd_build_store(const RunConfig& cfg, const std::string& output) {
  if (!cfg.data.train) throw ConfigError("llm index: data.train is required");
  const auto pool = stories_of(
      load_records(*cfg.data.train, Split::kTrain, TaskMode::kFull, cfg.data.fields), "llm index");
  auto provider = make_provider(cfg.llm);
  RetrievalStore store = build_store(pool, *provider);
  write_text(output, "");
  store.save(output);
  return store;
}

}  // namespace dto
