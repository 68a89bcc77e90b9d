#ifndef PETMAE_OPTIM_HPP
#define PETMAE_OPTIM_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "petmae/tensor.hpp"

namespace petmae {

/// lr_min + 0.5 * (lr0 - lr_min) * (1 + cos(pi * t / T)).
double cosine_lr(std::int64_t t, std::int64_t total_steps, double lr0,
                 double lr_min = 0.0);

/// Bias-corrected adaptive-moment state, beta1 = 0.9, beta2 = 0.999,
/// eps = 1e-8. Moment buffers are keyed by parameter name.
struct AdamState {
  std::int64_t t = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
};

/// One update over params using their .grad fields. Buffers for new names
/// are created zeroed.
void adam_step(const std::vector<TensorPtr>& params, AdamState& state,
               double lr);

} // namespace petmae

#endif
