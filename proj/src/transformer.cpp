#include "dto/transformer.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "dto/errors.hpp"
#include "dto/tokenizer.hpp"

namespace dto {

using ad::Var;

nlohmann::json ModelConfig::to_json() const {
  return {{"vocab_size", vocab_size},         {"d_model", d_model},
          {"heads", heads},                   {"encoder_layers", encoder_layers},
          {"decoder_layers", decoder_layers}, {"ffn_dim", ffn_dim},
          {"context_limit", context_limit}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.d_model = j.value("d_model", c.d_model);
  c.heads = j.value("heads", c.heads);
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.context_limit = j.value("context_limit", c.context_limit);
  return c;
}

void ModelConfig::validate() const {
  if (vocab_size <= Tokenizer::kEos) throw ConfigError("model: vocab_size must cover <bos> and <eos>");
  if (d_model <= 0 || heads <= 0 || d_model % heads != 0) {
    throw ConfigError("model: d_model must be a positive multiple of heads");
  }
  if (encoder_layers < 1 || decoder_layers < 1 || ffn_dim < 1 || context_limit < 1) {
    throw ConfigError("model: layer counts, ffn_dim and context_limit must be positive");
  }
}

Matrix positional_encoding(std::size_t first, std::size_t count, std::size_t width) {
  Matrix pe(count, width);
  for (std::size_t r = 0; r < count; ++r) {
    const double pos = static_cast<double>(first + r);
    for (std::size_t c = 0; c < width; ++c) {
      const double i2 = static_cast<double>(c - c % 2);
      const double angle = pos / std::pow(10000.0, i2 / static_cast<double>(width));
      pe(r, c) = c % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Seq2SeqTransformer::Seq2SeqTransformer(const ModelConfig& config, std::uint64_t seed,
                                       bool trainable)
    : config_(config), trainable_(trainable) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto d = static_cast<std::size_t>(config_.d_model);
  const auto f = static_cast<std::size_t>(config_.ffn_dim);
  const auto v = static_cast<std::size_t>(config_.vocab_size);

  auto normal = [&](std::size_t rows, std::size_t cols, double sd) {
    std::normal_distribution<double> dist(0.0, sd);
    Matrix m(rows, cols);
    for (auto& x : m.values()) x = dist(rng);
    return m;
  };
  auto add = [&](std::string name, Matrix m) {
    params_.push_back({std::move(name), Var(std::move(m), trainable_)});
  };
  auto add_attention = [&](const std::string& p) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    for (const char* w : {"q", "k", "v", "o"}) {
      add(p + ".w" + w, normal(d, d, sd));
      add(p + ".b" + w, Matrix(1, d));
    }
  };
  auto add_ffn = [&](const std::string& p) {
    add(p + ".w1", normal(d, f, 1.0 / std::sqrt(static_cast<double>(d))));
    add(p + ".b1", Matrix(1, f));
    add(p + ".w2", normal(f, d, 1.0 / std::sqrt(static_cast<double>(f))));
    add(p + ".b2", Matrix(1, d));
  };
  auto add_ln = [&](const std::string& p) {
    add(p + ".g", Matrix(1, d, 1.0));
    add(p + ".b", Matrix(1, d));
  };

  add("embedding", normal(v, d, 1.0 / std::sqrt(static_cast<double>(d))));
  for (int l = 0; l < config_.encoder_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    add_ln(p + ".ln1");
    add_attention(p + ".attn");
    add_ln(p + ".ln2");
    add_ffn(p + ".ffn");
  }
  add_ln("enc.ln");
  for (int l = 0; l < config_.decoder_layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    add_ln(p + ".ln1");
    add_attention(p + ".self");
    add_ln(p + ".ln2");
    add_attention(p + ".cross");
    add_ln(p + ".ln3");
    add_ffn(p + ".ffn");
  }
  add_ln("dec.ln");
  add("out.bias", Matrix(1, v));
  bind();
}

Var& Seq2SeqTransformer::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.var;
  }
  throw std::out_of_range("no parameter named " + name);
}

void Seq2SeqTransformer::bind() {
  auto get = [&](const std::string& n) { return parameter(n); };
  auto attention = [&](const std::string& p) {
    return Attention{get(p + ".wq"), get(p + ".bq"), get(p + ".wk"), get(p + ".bk"),
                     get(p + ".wv"), get(p + ".bv"), get(p + ".wo"), get(p + ".bo")};
  };
  auto ffn = [&](const std::string& p) {
    return FeedForward{get(p + ".w1"), get(p + ".b1"), get(p + ".w2"), get(p + ".b2")};
  };
  encoder_.clear();
  decoder_.clear();
  for (int l = 0; l < config_.encoder_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    encoder_.push_back({get(p + ".ln1.g"), get(p + ".ln1.b"), attention(p + ".attn"),
                        get(p + ".ln2.g"), get(p + ".ln2.b"), ffn(p + ".ffn")});
  }
  for (int l = 0; l < config_.decoder_layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    decoder_.push_back({get(p + ".ln1.g"), get(p + ".ln1.b"), attention(p + ".self"),
                        get(p + ".ln2.g"), get(p + ".ln2.b"), attention(p + ".cross"),
                        get(p + ".ln3.g"), get(p + ".ln3.b"), ffn(p + ".ffn")});
  }
  enc_ln_g_ = get("enc.ln.g");
  enc_ln_b_ = get("enc.ln.b");
  dec_ln_g_ = get("dec.ln.g");
  dec_ln_b_ = get("dec.ln.b");
  out_bias_ = get("out.bias");
}

Seq2SeqTransformer Seq2SeqTransformer::clone(bool trainable) const {
  Seq2SeqTransformer copy;
  copy.config_ = config_;
  copy.trainable_ = trainable;
  for (const auto& p : params_) copy.params_.push_back({p.name, Var(p.var.value(), trainable)});
  copy.bind();
  return copy;
}

Var Seq2SeqTransformer::embed_rows(const Var& rows, std::size_t first_position) const {
  if (rows.cols() != static_cast<std::size_t>(config_.d_model)) {
    throw DimensionMismatch("input rows have width " + std::to_string(rows.cols()) +
                            ", model expects " + std::to_string(config_.d_model));
  }
  if (first_position + rows.rows() > static_cast<std::size_t>(config_.context_limit)) {
    throw ContextOverflow("sequence of " + std::to_string(first_position + rows.rows()) +
                          " positions exceeds context limit " +
                          std::to_string(config_.context_limit));
  }
  const double sc = std::sqrt(static_cast<double>(config_.d_model));
  return ad::add(ad::scale(rows, sc),
                 ad::constant(positional_encoding(first_position, rows.rows(), rows.cols())));
}

Var Seq2SeqTransformer::feed_forward(const FeedForward& f, const Var& x) const {
  return ad::linear(ad::gelu(ad::linear(x, f.w1, f.b1)), f.w2, f.b2);
}

Var Seq2SeqTransformer::encode_rows(const Var& rows) const {
  if (rows.rows() == 0) throw ContextOverflow("empty encoder input");
  Var x = embed_rows(rows, 0);
  for (const auto& layer : encoder_) {
    const Var h = ad::layer_norm(x, layer.ln1_g, layer.ln1_b);
    const auto& a = layer.attn;
    const Var att = ad::multi_head_attention(ad::linear(h, a.wq, a.bq), ad::linear(h, a.wk, a.bk),
                                             ad::linear(h, a.wv, a.bv), config_.heads, false);
    x = ad::add(x, ad::linear(att, a.wo, a.bo));
    x = ad::add(x, feed_forward(layer.ffn, ad::layer_norm(x, layer.ln2_g, layer.ln2_b)));
  }
  return ad::layer_norm(x, enc_ln_g_, enc_ln_b_);
}

Var Seq2SeqTransformer::encode_tokens(const std::vector<int>& ids) const {
  if (ids.size() > static_cast<std::size_t>(config_.context_limit)) {
    throw ContextOverflow("input of " + std::to_string(ids.size()) +
                          " tokens exceeds context limit " +
                          std::to_string(config_.context_limit));
  }
  return encode_rows(ad::embedding(embedding(), ids));
}

Var Seq2SeqTransformer::decode_rows(const Var& rows, const Var& memory) const {
  Var x = embed_rows(rows, 0);
  for (const auto& layer : decoder_) {
    const auto& s = layer.self_attn;
    Var h = ad::layer_norm(x, layer.ln1_g, layer.ln1_b);
    Var att = ad::multi_head_attention(ad::linear(h, s.wq, s.bq), ad::linear(h, s.wk, s.bk),
                                       ad::linear(h, s.wv, s.bv), config_.heads, true);
    x = ad::add(x, ad::linear(att, s.wo, s.bo));
    const auto& c = layer.cross_attn;
    h = ad::layer_norm(x, layer.ln2_g, layer.ln2_b);
    att = ad::multi_head_attention(ad::linear(h, c.wq, c.bq), ad::linear(memory, c.wk, c.bk),
                                   ad::linear(memory, c.wv, c.bv), config_.heads, false);
    x = ad::add(x, ad::linear(att, c.wo, c.bo));
    x = ad::add(x, feed_forward(layer.ffn, ad::layer_norm(x, layer.ln3_g, layer.ln3_b)));
  }
  return ad::layer_norm(x, dec_ln_g_, dec_ln_b_);
}

Var Seq2SeqTransformer::logits(const Var& hidden) const {
  return ad::add_row(ad::matmul_nt(hidden, embedding()), out_bias_);
}

Seq2SeqTransformer::DecoderState Seq2SeqTransformer::start_decoding(const Var& memory) const {
  DecoderState st;
  st.self_keys.resize(decoder_.size());
  st.self_values.resize(decoder_.size());
  for (const auto& layer : decoder_) {
    const auto& c = layer.cross_attn;
    st.cross_keys.push_back(ad::linear(memory, c.wk, c.bk));
    st.cross_values.push_back(ad::linear(memory, c.wv, c.bv));
  }
  return st;
}

Var Seq2SeqTransformer::decode_step(DecoderState& st, const Var& row) const {
  Var x = embed_rows(row, st.position);
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    const auto& layer = decoder_[l];
    const auto& s = layer.self_attn;
    Var h = ad::layer_norm(x, layer.ln1_g, layer.ln1_b);
    st.self_keys[l].push_back(ad::linear(h, s.wk, s.bk));
    st.self_values[l].push_back(ad::linear(h, s.wv, s.bv));
    Var att = ad::attention_over_rows(ad::linear(h, s.wq, s.bq), st.self_keys[l],
                                      st.self_values[l], config_.heads);
    x = ad::add(x, ad::linear(att, s.wo, s.bo));
    const auto& c = layer.cross_attn;
    h = ad::layer_norm(x, layer.ln2_g, layer.ln2_b);
    att = ad::multi_head_attention(ad::linear(h, c.wq, c.bq), st.cross_keys[l],
                                   st.cross_values[l], config_.heads, false);
    x = ad::add(x, ad::linear(att, c.wo, c.bo));
    x = ad::add(x, feed_forward(layer.ffn, ad::layer_norm(x, layer.ln3_g, layer.ln3_b)));
  }
  ++st.position;
  return ad::layer_norm(x, dec_ln_g_, dec_ln_b_);
}

std::uint64_t Seq2SeqTransformer::checksum() const {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& p : params_) {
    const auto& vals = p.var.value().values();
    const auto* bytes = reinterpret_cast<const unsigned char*>(vals.data());
    for (std::size_t i = 0; i < vals.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace dto
