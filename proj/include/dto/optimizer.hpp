#pragma once

#include <optional>
#include <vector>

#include "dto/transformer.hpp"

namespace dto {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::optional<double> clip_norm = 1.0;  // global L2 norm over all gradients
};

class Adam {
 public:
  Adam(std::vector<NamedParam>& params, const AdamConfig& config);

  // Applies one update from the accumulated gradients and clears them.
  // Returns the global gradient norm before clipping.
  double step();
  void zero_grad();
  std::size_t steps() const { return t_; }

 private:
  std::vector<ad::Var> params_;
  std::vector<Matrix> m_, v_;
  AdamConfig config_;
  std::size_t t_ = 0;
};

}  // namespace dto
