#ifndef PETMAE_GRADCHECK_HPP
#define PETMAE_GRADCHECK_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "petmae/tensor.hpp"

namespace petmae {

struct GradCheckEntry {
  std::string param;
  std::int64_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  bool pass = false;
};

/// Compare analytic gradients against central finite differences on
/// `samples` randomly drawn parameter entries. loss_fn must rebuild the
/// graph from the current parameter values on every call.
GradCheckReport grad_check(const std::vector<TensorPtr>& params,
                           const std::function<TensorPtr()>& loss_fn,
                           std::int64_t samples = 20, double h = 1e-5,
                           double tol = 1e-4, std::uint64_t seed = 17);

} // namespace petmae

#endif
