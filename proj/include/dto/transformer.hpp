#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "dto/autograd.hpp"

namespace dto {

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int heads = 2;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int ffn_dim = 128;
  int context_limit = 1024;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct NamedParam {
  std::string name;
  ad::Var var;
};

// Pre-LayerNorm encoder-decoder transformer with sinusoidal positions and an
// output projection tied to the input embedding table. Used both as the
// trainable generator and, with `trainable = false`, as the frozen scorer.
class Seq2SeqTransformer {
 public:
  Seq2SeqTransformer() = default;
  Seq2SeqTransformer(const ModelConfig& config, std::uint64_t seed, bool trainable = true);

  // Deep copy with fresh parameter nodes.
  Seq2SeqTransformer clone(bool trainable) const;

  const ModelConfig& config() const { return config_; }
  bool trainable() const { return trainable_; }
  std::vector<NamedParam>& parameters() { return params_; }
  const std::vector<NamedParam>& parameters() const { return params_; }
  ad::Var& parameter(const std::string& name);
  const ad::Var& embedding() const { return params_[0].var; }  // |V| x D

  // Encoder over raw embedding rows (T x D, before scaling and positions).
  ad::Var encode_rows(const ad::Var& rows) const;
  ad::Var encode_tokens(const std::vector<int>& ids) const;

  // Teacher-forced decoder over raw input rows; returns final hidden states.
  ad::Var decode_rows(const ad::Var& rows, const ad::Var& memory) const;
  ad::Var logits(const ad::Var& hidden) const;

  struct DecoderState {
    std::vector<std::vector<ad::Var>> self_keys, self_values;  // per layer, per position
    std::vector<ad::Var> cross_keys, cross_values;              // per layer
    std::size_t position = 0;
  };
  DecoderState start_decoding(const ad::Var& memory) const;
  // Feeds one raw input row (1 x D) and returns the final hidden row.
  ad::Var decode_step(DecoderState& state, const ad::Var& row) const;

  // FNV-1a over all parameter bytes; used to prove a model was not updated.
  std::uint64_t checksum() const;

 private:
  struct Attention {
    ad::Var wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct FeedForward {
    ad::Var w1, b1, w2, b2;
  };
  struct EncoderLayer {
    ad::Var ln1_g, ln1_b;
    Attention attn;
    ad::Var ln2_g, ln2_b;
    FeedForward ffn;
  };
  struct DecoderLayer {
    ad::Var ln1_g, ln1_b;
    Attention self_attn;
    ad::Var ln2_g, ln2_b;
    Attention cross_attn;
    ad::Var ln3_g, ln3_b;
    FeedForward ffn;
  };

  void bind();  // wires the layer structs to entries of params_
  ad::Var embed_rows(const ad::Var& rows, std::size_t first_position) const;
  ad::Var feed_forward(const FeedForward& f, const ad::Var& x) const;

  ModelConfig config_;
  bool trainable_ = true;
  std::vector<NamedParam> params_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  ad::Var enc_ln_g_, enc_ln_b_, dec_ln_g_, dec_ln_b_, out_bias_;
};

// Sinusoidal position table rows [first, first + count).
Matrix positional_encoding(std::size_t first, std::size_t count, std::size_t width);

}  // namespace dto
