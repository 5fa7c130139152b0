#pragma once

// Shared helpers for the unit and acceptance tests: micro models, rigged
// scorers, fixture paths and scratch directories.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dto/models.hpp"
#include "dto/story_data.hpp"
#include "dto/tokenizer.hpp"

namespace dto::test {

inline std::string fixture(const std::string& name) {
  return std::string(DTO_FIXTURE_DIR) + "/" + name;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dto_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Specials plus single letters: |V| = size (at most 16 for the micro cases).
inline Tokenizer micro_tokenizer(std::size_t size = 16) {
  std::vector<std::string> words = {"<pad>", "<unk>", "<bos>", "<eos>", "<sep>"};
  words.resize(std::min(words.size(), size));
  for (char c = 'a'; words.size() < size; ++c) words.emplace_back(1, c);
  return Tokenizer(words, std::string("<unk>"));
}

inline ModelConfig micro_config(int vocab = 16) {
  ModelConfig mc;
  mc.vocab_size = vocab;
  mc.d_model = 8;
  mc.heads = 2;
  mc.encoder_layers = 1;
  mc.decoder_layers = 1;
  mc.ffn_dim = 16;
  return mc;
}

inline GeneratorModel micro_generator(std::uint64_t seed = 3, std::size_t vocab = 16) {
  return GeneratorModel(micro_tokenizer(vocab), micro_config(static_cast<int>(vocab)), seed, 5);
}

inline ScorerModel micro_scorer(std::uint64_t seed = 11, std::size_t vocab = 16) {
  return ScorerModel(micro_tokenizer(vocab),
                     Seq2SeqTransformer(micro_config(static_cast<int>(vocab)), seed, false));
}

// Scorer whose next-token distribution is softmax(`log_weights`) at every
// position regardless of source or prefix: the embedding table is zeroed, so
// hidden states never reach the logits and only the output bias remains.
inline ScorerModel rigged_scorer(const std::vector<double>& log_weights) {
  const auto vocab = log_weights.size();
  Seq2SeqTransformer net(micro_config(static_cast<int>(vocab)), 1, false);
  for (auto& p : net.parameters()) {
    if (p.name == "embedding") {
      auto& m = p.var.mutable_value();
      for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = 0.0;
    } else if (p.name == "out.bias") {
      auto& m = p.var.mutable_value();
      for (std::size_t i = 0; i < vocab; ++i) m.data()[i] = log_weights[i];
    }
  }
  return ScorerModel(micro_tokenizer(vocab), net);
}

inline ScorerModel uniform_scorer(std::size_t vocab) {
  return rigged_scorer(std::vector<double>(vocab, 0.0));
}

// Generator that puts (almost) all mass on EOS at every slot.
inline GeneratorModel always_eos_generator(std::size_t vocab = 16) {
  GeneratorModel gen = micro_generator(3, vocab);
  for (auto& p : gen.net.parameters()) {
    if (p.name == "out.bias") {
      auto& m = p.var.mutable_value();
      for (std::size_t i = 0; i < vocab; ++i) m.data()[i] = i == Tokenizer::kEos ? 50.0 : -50.0;
    }
  }
  return gen;
}

inline Example micro_example(const Tokenizer& tok, const std::string& id, const std::vector<int>& input,
                             const std::string& target, const std::string& original) {
  Example ex;
  ex.id = id;
  ex.input.token_ids = input;
  ex.input.text = tok.decode(input);
  ex.target = target;
  ex.original = original;
  return ex;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Rows drawn from a Dirichlet(1) distribution.
inline Matrix random_stochastic(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (m(i, j) = e(rng));
    for (std::size_t j = 0; j < c; ++j) m(i, j) /= s;
  }
  return m;
}

}  // namespace dto::test
