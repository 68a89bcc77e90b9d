#include "petmae/optim.hpp"

#include <cmath>

#include "petmae/error.hpp"

namespace petmae {

double cosine_lr(std::int64_t t, std::int64_t total_steps, double lr0,
                 double lr_min) {
  const double phase = 3.14159265358979323846 * static_cast<double>(t) /
                       static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(phase));
}

void adam_step(const std::vector<TensorPtr>& params, AdamState& state,
               double lr) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(state.t));

  for (const TensorPtr& p : params) {
    if (p->grad.size() != p->values.size())
      throw Error(ErrorCode::ShapeMismatch,
                  "parameter " + p->name + " has no gradient");
    auto& m = state.m[p->name];
    auto& v = state.v[p->name];
    if (m.size() != p->values.size()) m.assign(p->values.size(), 0.0);
    if (v.size() != p->values.size()) v.assign(p->values.size(), 0.0);

    for (std::size_t i = 0; i < p->values.size(); ++i) {
      const double g = p->grad[i];
      m[i] = AdamState::kBeta1 * m[i] + (1.0 - AdamState::kBeta1) * g;
      v[i] = AdamState::kBeta2 * v[i] + (1.0 - AdamState::kBeta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p->values[i] -= lr * m_hat / (std::sqrt(v_hat) + AdamState::kEps);
    }
  }
}

} // namespace petmae
