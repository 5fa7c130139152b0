#include "dto/optimizer.hpp"

#include <cmath>

namespace dto {

Adam::Adam(std::vector<NamedParam>& params, const AdamConfig& config) : config_(config) {
  for (auto& p : params) {
    if (!p.var.requires_grad()) continue;
    params_.push_back(p.var);
    m_.emplace_back(p.var.rows(), p.var.cols());
    v_.emplace_back(p.var.rows(), p.var.cols());
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double Adam::step() {
  double sq = 0.0;
  for (const auto& p : params_) {
    if (!p.has_grad()) continue;
    for (double g : p.grad().values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  double k = 1.0;
  if (config_.clip_norm && norm > *config_.clip_norm) k = *config_.clip_norm / norm;

  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    const Matrix& g = p.grad();
    Matrix& w = p.mutable_value();
    Matrix& m = m_[i];
    Matrix& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] * k;
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * gj;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * gj * gj;
      w[j] -= config_.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
    }
  }
  zero_grad();
  return norm;
}

}  // namespace dto
