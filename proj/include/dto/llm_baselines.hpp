#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dto/story_data.hpp"
#include "dto/tensor.hpp"

namespace dto {

enum class PromptMode { kZeroShot, kOneShotRandom, kOneShotFixed, kOneShotRag };

PromptMode parse_prompt_mode(std::string_view s);
std::string to_string(PromptMode m);
const std::vector<PromptMode>& all_prompt_modes();
inline bool is_one_shot(PromptMode m) { return m != PromptMode::kZeroShot; }

struct PromptConfig {
  PromptMode mode = PromptMode::kZeroShot;
  std::optional<std::string> fixed_exemplar_id;
  std::uint64_t seed = 0;
  double temperature = 0.0;
  int max_new_tokens = 50;
  std::size_t rag_k = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static PromptConfig from_json(const nlohmann::json& j);
};

// Instruction prompt for one story. One-shot modes render the exemplar in the
// same field layout, followed by its edited ending, ahead of the query.
std::string build_prompt(const StoryRecord& record, const PromptConfig& cfg,
                         const StoryRecord* exemplar = nullptr);

// Zero-shot prompt with every field blank.
std::string prompt_skeleton();

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// round((mean + 2 sd) / 4): characters to tokens at ~4 characters per token,
// population standard deviation.
int derive_token_limit(const std::vector<std::string>& edited_endings);
int derive_token_limit(double mean_chars, double sd_chars);

struct RetrievalEntry {
  std::string id;
  std::vector<double> vector;
  StoryRecord record;
};

class RetrievalStore {
 public:
  RetrievalStore() = default;
  explicit RetrievalStore(std::size_t dimension) : dimension_(dimension) {}

  void add(RetrievalEntry entry);
  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<RetrievalEntry>& entries() const { return entries_; }
  const RetrievalEntry* find(const std::string& id) const;

  // JSONL: a {"dimension": d, "count": n} header line, then one
  // {id, vector, record} object per line.
  void save(const std::string& path) const;
  static RetrievalStore load(const std::string& path);

  // Vectors as rows, for the similarity kernels.
  const Matrix& matrix() const { return matrix_; }

 private:
  std::size_t dimension_ = 0;
  std::vector<RetrievalEntry> entries_;
  Matrix matrix_;
};

struct Neighbor {
  std::string id;
  double similarity = 0.0;
};

// Exact cosine k-NN: similarities descending, ties by ascending id.
std::vector<Neighbor> rag_retrieve(const RetrievalStore& store, const std::vector<double>& query,
                                   std::size_t k);
namespace serial {
std::vector<Neighbor> rag_retrieve(const RetrievalStore& store, const std::vector<double>& query,
                                   std::size_t k);
}

// Text embedded for retrieval: the full-mode story fields joined by <sep>.
std::string retrieval_text(const StoryRecord& record);

class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string name() const = 0;
  virtual std::vector<double> embed(const std::string& text) = 0;
  virtual std::string complete(const std::string& prompt, double temperature, int max_tokens) = 0;
};

// Deterministic offline provider. Embeddings are L2-normalized hashed
// bags of lowercase words; completions copy a field of the query back.
class MockProvider : public Provider {
 public:
  enum class Behavior { kEchoOriginal, kEchoCounterfactual, kFixed };

  struct Options {
    Behavior behavior = Behavior::kEchoOriginal;
    std::string fixed_text = "The end.";
    std::size_t dimension = 64;
    std::uint64_t seed = 0;
    int transient_failures = 0;     // first N completions fail transiently
    std::string fail_on_substring;  // completions whose prompt contains it always fail
  };

  MockProvider() : MockProvider(Options{}) {}
  explicit MockProvider(Options options) : options_(std::move(options)), remaining_failures_(options_.transient_failures) {}

  std::string name() const override { return "mock"; }
  std::vector<double> embed(const std::string& text) override;
  std::string complete(const std::string& prompt, double temperature, int max_tokens) override;
  int completion_calls() const { return calls_.load(); }

  static Behavior parse_behavior(std::string_view s);

 private:
  Options options_;
  std::atomic<int> remaining_failures_;
  std::atomic<int> calls_{0};
};

struct RetryPolicy {
  int attempts = 3;
  double base_delay_ms = 500.0;  // doubled after each failed attempt
};

// Retries TransientProviderError with exponential backoff; other errors and
// the final transient failure propagate as ProviderError.
std::string complete_with_retry(Provider& provider, const std::string& prompt, double temperature,
                                int max_tokens, const RetryPolicy& policy);

// Builds a store over `records` with the provider's embeddings of
// retrieval_text().
RetrievalStore build_store(const std::vector<StoryRecord>& records, Provider& provider);

struct BaselineRow {
  std::string story_id;
  std::string mode;
  std::string prompt_hash;
  std::string prediction;
  std::optional<std::string> exemplar_id;
  std::optional<std::string> error;

  nlohmann::json to_json() const;
};

struct BaselineOptions {
  RetryPolicy retry;
  int parallelism = 1;
};

// One row per test record, in input order. Provider failures are recorded on
// the row and do not stop the run.
std::vector<BaselineRow> run_baseline(const std::vector<StoryRecord>& test,
                                      const std::vector<StoryRecord>& train_pool,
                                      const PromptConfig& cfg, Provider& provider,
                                      const RetrievalStore* store = nullptr,
                                      const BaselineOptions& options = {});

}  // namespace dto
