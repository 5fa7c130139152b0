#include "dto/soft_bridge.hpp"

#include <cmath>
#include <unordered_map>

#include "dto/errors.hpp"

namespace dto {

void validate_prob_sequence(const ProbSequence& p, double tol) {
  const Matrix& m = p.probs.value();
  if (m.rows() == 0) throw DimensionMismatch("probability sequence has no slots");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (!(m(r, c) >= 0.0)) {
        throw std::invalid_argument("probability row " + std::to_string(r) + " has a negative entry");
      }
      s += m(r, c);
    }
    if (std::abs(s - 1.0) > tol) {
      throw std::invalid_argument("probability row " + std::to_string(r) + " sums to " +
                                  std::to_string(s));
    }
  }
}

SoftSequence expected_embeddings(const ProbSequence& p, const ad::Var& embedding_matrix) {
  if (p.probs.cols() != embedding_matrix.rows()) {
    throw DimensionMismatch("distribution over " + std::to_string(p.probs.cols()) +
                            " tokens vs embedding table of " +
                            std::to_string(embedding_matrix.rows()) + " rows");
  }
  return {ad::matmul(p.probs, embedding_matrix)};
}

Matrix gumbel_noise(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  Matrix g(rows, cols);
  for (auto& x : g.values()) {
    // Uniform on the open interval (0, 1) from 53 random bits.
    const double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
    x = -std::log(-std::log(u));
  }
  return g;
}

ProbSequence gumbel_softmax_sample(const ad::Var& logits, const GumbelConfig& cfg,
                                   std::mt19937_64& rng) {
  if (!(cfg.temperature > 0.0)) {
    throw NonPositiveTemperature("Gumbel-softmax temperature must be > 0");
  }
  for (double v : logits.value().values()) {
    if (!std::isfinite(v)) throw std::invalid_argument("Gumbel-softmax: non-finite logit");
  }
  const Matrix noise = gumbel_noise(logits.rows(), logits.cols(), rng);
  ad::Var soft = ad::softmax_rows(
      ad::scale(ad::add(logits, ad::constant(noise)), 1.0 / cfg.temperature));
  if (!cfg.hard) return {soft};

  Matrix hard(soft.rows(), soft.cols());
  for (std::size_t r = 0; r < soft.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < soft.cols(); ++c) {
      if (soft.value()(r, c) > soft.value()(r, best)) best = c;
    }
    hard(r, best) = 1.0;
  }
  return {ad::straight_through(soft, hard)};
}

VocabularyAlignment align_vocabulary(const std::vector<std::string>& gen_vocab,
                                     const std::vector<std::string>& scorer_vocab,
                                     const std::string& unk_token) {
  VocabularyAlignment out;
  if (gen_vocab == scorer_vocab) {
    out.identity = true;
    out.coverage = 1.0;
    out.mapping.resize(gen_vocab.size());
    for (std::size_t i = 0; i < gen_vocab.size(); ++i) out.mapping[i] = static_cast<int>(i);
    return out;
  }
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < scorer_vocab.size(); ++i) {
    index.emplace(scorer_vocab[i], static_cast<int>(i));
  }
  const auto unk = index.find(unk_token);
  std::size_t matched = 0;
  out.mapping.resize(gen_vocab.size());
  for (std::size_t i = 0; i < gen_vocab.size(); ++i) {
    auto it = index.find(gen_vocab[i]);
    if (it != index.end()) {
      out.mapping[i] = it->second;
      ++matched;
    } else if (unk != index.end()) {
      out.mapping[i] = unk->second;
    } else {
      throw NoUnknownToken("generator token '" + gen_vocab[i] +
                           "' has no scorer match and the scorer has no unknown token");
    }
  }
  out.coverage = gen_vocab.empty() ? 1.0
                                   : static_cast<double>(matched) /
                                         static_cast<double>(gen_vocab.size());
  return out;
}

ProbSequence apply_alignment(const ProbSequence& p, const VocabularyAlignment& alignment,
                             std::size_t scorer_vocab_size) {
  if (alignment.identity) return p;
  if (alignment.mapping.size() != p.probs.cols()) {
    throw DimensionMismatch("alignment covers " + std::to_string(alignment.mapping.size()) +
                            " tokens, distribution has " + std::to_string(p.probs.cols()));
  }
  Matrix route(alignment.mapping.size(), scorer_vocab_size);
  for (std::size_t i = 0; i < alignment.mapping.size(); ++i) route(i, alignment.mapping[i]) = 1.0;
  return {ad::matmul(p.probs, ad::constant(std::move(route)))};
}

}  // namespace dto
