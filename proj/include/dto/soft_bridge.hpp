#pragma once

// Soft tokens: differentiable stand-ins for discrete predictions.
//
// A generator's per-slot distribution p_t becomes the expected embedding
// e_t = p_t^T E, a probability-weighted mix of embedding rows that keeps the
// path from generator parameters to a downstream scorer differentiable.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dto/autograd.hpp"

namespace dto {

// T x |V| row-stochastic matrix, one row per output slot.
struct ProbSequence {
  ad::Var probs;
  std::size_t length() const { return probs.rows(); }
};

// T x D expected embeddings.
struct SoftSequence {
  ad::Var embeddings;
  std::size_t length() const { return embeddings.rows(); }
};

struct GumbelConfig {
  double temperature = 1.0;
  bool hard = false;
  std::uint64_t seed = 0;
  bool annealing = false;

  // Temperature used at a given optimization step. Annealing is not part of
  // the training recipe, so the schedule is constant either way.
  double temperature_at(std::size_t /*step*/) const { return temperature; }
};

// Throws DimensionMismatch / std::invalid_argument when rows are not
// distributions within `tol`.
void validate_prob_sequence(const ProbSequence& p, double tol = 1e-6);

SoftSequence expected_embeddings(const ProbSequence& p, const ad::Var& embedding_matrix);

// Standard Gumbel noise for a rows x cols block from the caller's generator.
Matrix gumbel_noise(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

// softmax((logits + g) / tau). In hard mode the value is the one-hot argmax of
// each row while gradients follow the soft sample.
ProbSequence gumbel_softmax_sample(const ad::Var& logits, const GumbelConfig& cfg,
                                   std::mt19937_64& rng);

struct VocabularyAlignment {
  std::vector<int> mapping;  // generator index -> scorer index
  double coverage = 1.0;     // fraction of generator tokens matched exactly
  bool identity = false;
};

VocabularyAlignment align_vocabulary(const std::vector<std::string>& gen_vocab,
                                     const std::vector<std::string>& scorer_vocab,
                                     const std::string& unk_token = "<unk>");

// Moves generator-vocabulary probability mass onto the scorer vocabulary.
ProbSequence apply_alignment(const ProbSequence& p, const VocabularyAlignment& alignment,
                             std::size_t scorer_vocab_size);

}  // namespace dto
