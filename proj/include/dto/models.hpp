#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "dto/soft_bridge.hpp"
#include "dto/story_data.hpp"
#include "dto/tokenizer.hpp"
#include "dto/transformer.hpp"

namespace dto {

// Trainable sequence-to-sequence generator.
struct GeneratorModel {
  Tokenizer tokenizer;
  Seq2SeqTransformer net;
  std::size_t max_output_len = 250;

  GeneratorModel() = default;
  GeneratorModel(Tokenizer tok, const ModelConfig& config, std::uint64_t seed,
                 std::size_t max_output_len = 250);
  GeneratorModel(Tokenizer tok, Seq2SeqTransformer net, std::size_t max_output_len = 250)
      : tokenizer(std::move(tok)), net(std::move(net)), max_output_len(max_output_len) {}

  // Frozen deep copy, e.g. a DPO reference policy.
  GeneratorModel frozen_copy() const;
};

// Frozen scorer. Its parameters never require gradients, but gradients flow
// through it into a soft source.
class ScorerModel {
 public:
  ScorerModel() = default;
  ScorerModel(Tokenizer tok, const Seq2SeqTransformer& net);

  const Tokenizer& tokenizer() const { return tokenizer_; }
  const Seq2SeqTransformer& net() const { return net_; }
  const ad::Var& embedding() const { return net_.embedding(); }  // E, |V| x D
  std::size_t context_limit() const { return static_cast<std::size_t>(net_.config().context_limit); }
  std::uint64_t checksum() const { return net_.checksum(); }

 private:
  Tokenizer tokenizer_;
  Seq2SeqTransformer net_;
};

using ScorerSource = std::variant<std::vector<int>, SoftSequence>;

// Teacher-forced log p(y_t | source, y_<t) for t over target + EOS; a
// (|target| + 1) x 1 column.
ad::Var scorer_forward(const ScorerModel& scorer, const ScorerSource& source,
                       const std::vector<int>& target);

struct DecodeResult {
  ProbSequence probs;
  SoftSequence soft;  // against the generator's own embedding table
  std::vector<int> tokens;
  bool ended = false;
};

struct DecodeOptions {
  std::optional<GumbelConfig> gumbel;
  // Softmax temperature when Gumbel is off; small values push every slot
  // towards the one-hot argmax.
  double temperature = 1.0;
  std::size_t max_len = 250;
  // Ablation: feed the reference instead of the model's own soft predictions.
  const std::vector<int>* teacher_tokens = nullptr;
};

// Free-running soft decode: each slot's distribution (optionally Gumbel
// perturbed) becomes an expected embedding that is fed back as the next
// decoder input. Stops after the slot whose argmax is EOS, or at max_len.
DecodeResult soft_decode(const GeneratorModel& gen, const AssembledInput& input,
                         const DecodeOptions& options, std::mt19937_64* rng = nullptr);

// Greedy argmax decode; returns tokens without the terminating EOS.
std::vector<int> hard_decode(const GeneratorModel& gen, const AssembledInput& input,
                             std::size_t max_len);

// Teacher-forced logits for target + EOS given the input: (|target| + 1) x |V|.
ad::Var teacher_forced_logits(const Seq2SeqTransformer& net, const std::vector<int>& input_ids,
                              const std::vector<int>& target);

// Per-token mean log-probability of `target` (+ EOS) under teacher forcing.
ad::Var sequence_mean_logprob(const Seq2SeqTransformer& net, const std::vector<int>& input_ids,
                              const std::vector<int>& target);

// Checkpoints: one binary archive per model holding a JSON header
// (format version, kind, architecture, vocabulary, parameter shapes), the raw
// parameter values and a trailing checksum.
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const Seq2SeqTransformer& net, const Tokenizer& tokenizer,
                     const std::string& path, const std::string& kind,
                     const nlohmann::json& extra = nlohmann::json::object());

struct LoadedCheckpoint {
  Seq2SeqTransformer net;
  Tokenizer tokenizer;
  std::string kind;
  nlohmann::json extra;
};
LoadedCheckpoint load_checkpoint(const std::string& path, bool trainable = true);
// Loads parameters into an existing model; the architecture must match.
void load_checkpoint_into(Seq2SeqTransformer& net, const std::string& path);

void save_generator(const GeneratorModel& gen, const std::string& path);
GeneratorModel load_generator(const std::string& path);
void save_scorer(const ScorerModel& scorer, const std::string& path);
ScorerModel load_scorer(const std::string& path);

}  // namespace dto
