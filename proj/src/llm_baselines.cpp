#include "dto/llm_baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <random>
#include <set>
#include <thread>

#include "dto/errors.hpp"
#include "dto/kernels.hpp"
#include "dto/metrics.hpp"

namespace dto {

const std::vector<PromptMode>& all_prompt_modes() {
  static const std::vector<PromptMode> modes = {PromptMode::kZeroShot, PromptMode::kOneShotRandom,
                                                PromptMode::kOneShotFixed, PromptMode::kOneShotRag};
  return modes;
}

PromptMode parse_prompt_mode(std::string_view s) {
  for (PromptMode m : all_prompt_modes()) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown prompt mode '" + std::string(s) +
                    "' (valid: zero_shot, one_shot_random, one_shot_fixed, one_shot_rag)");
}

std::string to_string(PromptMode m) {
  switch (m) {
    case PromptMode::kZeroShot: return "zero_shot";
    case PromptMode::kOneShotRandom: return "one_shot_random";
    case PromptMode::kOneShotFixed: return "one_shot_fixed";
    case PromptMode::kOneShotRag: return "one_shot_rag";
  }
  return "?";
}

void PromptConfig::validate() const {
  if (mode == PromptMode::kOneShotFixed && !fixed_exemplar_id) {
    throw MissingExemplar("one_shot_fixed needs fixed_exemplar_id");
  }
  if (temperature < 0.0) throw ConfigError("temperature must be >= 0");
  if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
  if (rag_k < 1) throw ConfigError("rag_k must be >= 1");
}

nlohmann::json PromptConfig::to_json() const {
  nlohmann::json j = {{"mode", to_string(mode)},
                      {"seed", seed},
                      {"temperature", temperature},
                      {"max_new_tokens", max_new_tokens},
                      {"rag_k", rag_k}};
  j["fixed_exemplar_id"] =
      fixed_exemplar_id ? nlohmann::json(*fixed_exemplar_id) : nlohmann::json(nullptr);
  return j;
}

PromptConfig PromptConfig::from_json(const nlohmann::json& j) {
  PromptConfig c;
  if (j.contains("mode")) c.mode = parse_prompt_mode(j.at("mode").get<std::string>());
  if (j.contains("fixed_exemplar_id") && !j.at("fixed_exemplar_id").is_null()) {
    c.fixed_exemplar_id = j.at("fixed_exemplar_id").get<std::string>();
  }
  c.seed = j.value("seed", c.seed);
  c.temperature = j.value("temperature", c.temperature);
  c.max_new_tokens = j.value("max_new_tokens", c.max_new_tokens);
  c.rag_k = j.value("rag_k", c.rag_k);
  return c;
}

// ---------------------------------------------------------------------------
// Prompts

namespace {

constexpr std::string_view kInstructions =
    "Generate the adapted ending to fill these three aspects:\n"
    "1. Minimal Intervention: Adjust the story's original ending with minimal changes needed to "
    "align it with the counterfactual event. The edited ending should remain as close as "
    "possible to the original ending.\n"
    "2. Narrative Insight: Understand the story structure and make changes essential for "
    "maintaining the story's coherence and thematic consistency, avoiding unnecessary "
    "alterations.\n"
    "3. Counterfactual Adaptability: Adapt the story's course in response to the "
    "counterfactual event that diverges from the initial event.\n";

std::string story_fields(const std::string& premise, const std::string& initial,
                         const std::string& original, const std::string& counterfactual) {
  return "Premise: " + premise + "\nInitial event: " + initial + "\nOriginal ending: " + original +
         "\nCounterfactual event:\n" + counterfactual + "\n";
}

std::string story_fields(const StoryRecord& r) {
  if (!r.original_ending) throw MissingField("original_ending (story " + r.story_id + ")");
  return story_fields(r.premise, r.initial_event, *r.original_ending, r.counterfactual_event);
}

}  // namespace

std::string build_prompt(const StoryRecord& record, const PromptConfig& cfg,
                         const StoryRecord* exemplar) {
  if (is_one_shot(cfg.mode) && !exemplar) {
    throw MissingExemplar(to_string(cfg.mode) + " prompt needs an exemplar");
  }
  std::string out(kInstructions);
  if (is_one_shot(cfg.mode)) {
    out += "Example:\n" + story_fields(*exemplar) + "Adapted ending: " + exemplar->edited_ending +
           "\n\n";
  }
  out += story_fields(record);
  out += "\nNow, generate the adapted ending:";
  return out;
}

std::string prompt_skeleton() {
  return std::string(kInstructions) + story_fields("", "", "", "") +
         "\nNow, generate the adapted ending:";
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

int derive_token_limit(double mean_chars, double sd_chars) {
  return static_cast<int>(std::lround((mean_chars + 2.0 * sd_chars) / 4.0));
}

int derive_token_limit(const std::vector<std::string>& edited_endings) {
  if (edited_endings.empty()) throw PreconditionViolation("derive_token_limit: no endings");
  const SplitStats st = ending_stats(edited_endings);
  return derive_token_limit(st.mean_chars, st.sd_chars);
}

// ---------------------------------------------------------------------------
// Retrieval

void RetrievalStore::add(RetrievalEntry entry) {
  if (entries_.empty() && dimension_ == 0) dimension_ = entry.vector.size();
  if (entry.vector.size() != dimension_) {
    throw DimensionMismatch("store vector of dimension " + std::to_string(entry.vector.size()) +
                            ", store dimension " + std::to_string(dimension_));
  }
  if (find(entry.id)) throw ParseError("duplicate store id " + entry.id);
  Matrix grown(entries_.size() + 1, dimension_);
  std::copy(matrix_.data(), matrix_.data() + matrix_.size(), grown.data());
  std::copy(entry.vector.begin(), entry.vector.end(), grown.data() + entries_.size() * dimension_);
  matrix_ = std::move(grown);
  entries_.push_back(std::move(entry));
}

const RetrievalEntry* RetrievalStore::find(const std::string& id) const {
  for (const auto& e : entries_) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

void RetrievalStore::save(const std::string& path) const {
  std::vector<json> rows;
  rows.push_back({{"dimension", dimension_}, {"count", entries_.size()}});
  for (const auto& e : entries_) {
    rows.push_back({{"id", e.id}, {"vector", e.vector}, {"record", to_json(e.record)}});
  }
  write_jsonl(path, rows);
}

RetrievalStore RetrievalStore::load(const std::string& path) {
  const auto rows = read_jsonl(path);
  if (rows.empty() || !rows.front().contains("dimension")) {
    throw ParseError(path + ": missing store header line");
  }
  RetrievalStore store(rows.front().at("dimension").get<std::size_t>());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    RetrievalEntry e;
    e.id = r.at("id").get<std::string>();
    e.vector = r.at("vector").get<std::vector<double>>();
    auto parsed = parse_story_record(r.at("record"));
    if (parsed.size() != 1) throw ParseError(path + ": store record " + e.id + " is not one story");
    e.record = std::move(parsed.front());
    store.add(std::move(e));
  }
  return store;
}

namespace {

std::vector<Neighbor> rank(const RetrievalStore& store, const std::vector<double>& sims,
                           std::size_t k) {
  std::vector<std::size_t> idx(sims.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto& entries = store.entries();
  auto before = [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return entries[a].id < entries[b].id;
  };
  const std::size_t top = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(top), idx.end(), before);
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < top; ++i) out.push_back({entries[idx[i]].id, sims[idx[i]]});
  return out;
}

void check_query(const RetrievalStore& store, const std::vector<double>& query, std::size_t k) {
  if (k < 1) throw PreconditionViolation("rag_retrieve: k must be >= 1");
  if (store.empty()) throw PreconditionViolation("rag_retrieve: empty store");
  if (query.size() != store.dimension()) {
    throw DimensionMismatch("query of dimension " + std::to_string(query.size()) +
                            ", store dimension " + std::to_string(store.dimension()));
  }
}

}  // namespace

std::vector<Neighbor> rag_retrieve(const RetrievalStore& store, const std::vector<double>& query,
                                   std::size_t k) {
  check_query(store, query, k);
  return rank(store, kernels::cosine_similarities(store.matrix(), query), k);
}

namespace serial {
std::vector<Neighbor> rag_retrieve(const RetrievalStore& store, const std::vector<double>& query,
                                   std::size_t k) {
  check_query(store, query, k);
  return rank(store, kernels::serial::cosine_similarities(store.matrix(), query), k);
}
}  // namespace serial

std::string retrieval_text(const StoryRecord& r) {
  std::string out = r.premise + " <sep> " + r.initial_event + " <sep> ";
  if (r.original_ending) out += *r.original_ending + " <sep> ";
  return out + r.counterfactual_event;
}

// ---------------------------------------------------------------------------
// Providers

MockProvider::Behavior MockProvider::parse_behavior(std::string_view s) {
  if (s == "echo_original") return Behavior::kEchoOriginal;
  if (s == "echo_counterfactual") return Behavior::kEchoCounterfactual;
  if (s == "fixed") return Behavior::kFixed;
  throw ConfigError("unknown mock behavior '" + std::string(s) +
                    "' (valid: echo_original, echo_counterfactual, fixed)");
}

std::vector<double> MockProvider::embed(const std::string& text) {
  std::vector<double> v(options_.dimension, 0.0);
  for (const auto& word : rouge_tokens(text)) {
    const std::uint64_t h = fnv1a64(word) ^ options_.seed;
    const std::uint64_t mixed = h * 0x9e3779b97f4a7c15ULL;
    v[mixed % options_.dimension] += (mixed >> 63) ? -1.0 : 1.0;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

namespace {

// Text of the last line starting with `label` (or of the line after it when
// the label ends the line).
std::string last_field(const std::string& prompt, const std::string& label) {
  const auto pos = prompt.rfind(label);
  if (pos == std::string::npos) return "";
  std::size_t begin = pos + label.size();
  if (begin < prompt.size() && prompt[begin] == '\n') ++begin;
  const auto end = prompt.find('\n', begin);
  return prompt.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
}

std::string first_words(const std::string& text, int max_tokens) {
  std::string out;
  int n = 0;
  std::size_t i = 0;
  while (i < text.size() && n < max_tokens) {
    while (i < text.size() && text[i] == ' ') ++i;
    const auto j = std::min(text.find(' ', i), text.size());
    if (j > i) {
      if (!out.empty()) out += ' ';
      out += text.substr(i, j - i);
      ++n;
    }
    i = j;
  }
  return out;
}

}  // namespace

std::string MockProvider::complete(const std::string& prompt, double /*temperature*/,
                                   int max_tokens) {
  calls_.fetch_add(1);
  if (!options_.fail_on_substring.empty() &&
      prompt.find(options_.fail_on_substring) != std::string::npos) {
    throw ProviderError("mock provider refused the prompt");
  }
  if (remaining_failures_.fetch_sub(1) > 0) {
    throw TransientProviderError("mock provider transient failure");
  }
  std::string text;
  switch (options_.behavior) {
    case Behavior::kEchoOriginal: text = last_field(prompt, "Original ending: "); break;
    case Behavior::kEchoCounterfactual: text = last_field(prompt, "Counterfactual event:"); break;
    case Behavior::kFixed: text = options_.fixed_text; break;
  }
  return first_words(text, max_tokens);
}

std::string complete_with_retry(Provider& provider, const std::string& prompt, double temperature,
                                int max_tokens, const RetryPolicy& policy) {
  double delay = policy.base_delay_ms;
  const int attempts = std::max(1, policy.attempts);
  for (int attempt = 1;; ++attempt) {
    try {
      return provider.complete(prompt, temperature, max_tokens);
    } catch (const TransientProviderError& e) {
      if (attempt >= attempts) {
        throw ProviderError(std::string("gave up after ") + std::to_string(attempts) +
                            " attempts: " + e.what());
      }
    }
    if (delay > 0.0) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay));
    delay *= 2.0;
  }
}

RetrievalStore build_store(const std::vector<StoryRecord>& records, Provider& provider) {
  RetrievalStore store;
  for (const auto& r : records) store.add({r.story_id, provider.embed(retrieval_text(r)), r});
  return store;
}

// ---------------------------------------------------------------------------
// Baseline runs

nlohmann::json BaselineRow::to_json() const {
  nlohmann::json j = {{"story_id", story_id},
                      {"mode", mode},
                      {"prompt_hash", prompt_hash},
                      {"prediction", prediction}};
  if (exemplar_id) j["exemplar_id"] = *exemplar_id;
  if (error) j["error"] = *error;
  return j;
}

std::vector<BaselineRow> run_baseline(const std::vector<StoryRecord>& test,
                                      const std::vector<StoryRecord>& train_pool,
                                      const PromptConfig& cfg, Provider& provider,
                                      const RetrievalStore* store,
                                      const BaselineOptions& options) {
  cfg.validate();

  // Exemplars are chosen up front, in record order, so requests can run in
  // any order without changing the result.
  std::vector<const StoryRecord*> exemplars(test.size(), nullptr);
  switch (cfg.mode) {
    case PromptMode::kZeroShot: break;
    case PromptMode::kOneShotRandom: {
      if (train_pool.empty()) throw PreconditionViolation("one_shot_random: empty training pool");
      std::mt19937_64 rng(cfg.seed);
      for (auto& e : exemplars) e = &train_pool[static_cast<std::size_t>(rng() % train_pool.size())];
      break;
    }
    case PromptMode::kOneShotFixed: {
      const StoryRecord* fixed = nullptr;
      for (const auto& r : train_pool) {
        if (r.story_id == *cfg.fixed_exemplar_id) fixed = &r;
      }
      if (!fixed) throw MissingExemplar("fixed exemplar '" + *cfg.fixed_exemplar_id + "' not found");
      for (auto& e : exemplars) e = fixed;
      break;
    }
    case PromptMode::kOneShotRag: {
      if (!store || store->empty()) throw MissingExemplar("one_shot_rag needs a retrieval store");
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto hits = rag_retrieve(*store, provider.embed(retrieval_text(test[i])), cfg.rag_k);
        exemplars[i] = &store->find(hits.front().id)->record;
      }
      break;
    }
  }

  std::vector<BaselineRow> rows(test.size());
  const int threads = std::max(1, options.parallelism);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::size_t i = 0; i < test.size(); ++i) {
    BaselineRow& row = rows[i];
    row.story_id = test[i].story_id;
    row.mode = to_string(cfg.mode);
    if (exemplars[i]) row.exemplar_id = exemplars[i]->story_id;
    try {
      const std::string prompt = build_prompt(test[i], cfg, exemplars[i]);
      row.prompt_hash = hex64(fnv1a64(prompt));
      row.prediction = complete_with_retry(provider, prompt, cfg.temperature, cfg.max_new_tokens,
                                           options.retry);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  }
  return rows;
}

}  // namespace dto
