#include "petmae/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "petmae/error.hpp"
#include "petmae/rng.hpp"

namespace petmae {

GradCheckReport grad_check(const std::vector<TensorPtr>& params,
                           const std::function<TensorPtr()>& loss_fn,
                           std::int64_t samples, double h, double tol,
                           std::uint64_t seed) {
  GradCheckReport report;
  if (params.empty()) {
    report.pass = true;
    return report;
  }

  for (const TensorPtr& p : params) p->zero_grad();
  TensorPtr loss = loss_fn();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const TensorPtr& p : params) analytic.push_back(p->grad);

  std::int64_t total = 0;
  for (const TensorPtr& p : params) total += p->size();

  Rng rng(seed);
  report.entries.reserve(static_cast<std::size_t>(samples));
  for (std::int64_t s = 0; s < samples; ++s) {
    std::int64_t flat = static_cast<std::int64_t>(
        rng.next_below(static_cast<std::uint64_t>(total)));
    std::size_t pi = 0;
    while (flat >= params[pi]->size()) flat -= params[pi++]->size();
    TensorPtr p = params[pi];

    const double saved = p->values[static_cast<std::size_t>(flat)];
    p->values[static_cast<std::size_t>(flat)] = saved + h;
    const double f_plus = loss_fn()->values[0];
    p->values[static_cast<std::size_t>(flat)] = saved - h;
    const double f_minus = loss_fn()->values[0];
    p->values[static_cast<std::size_t>(flat)] = saved;

    GradCheckEntry e;
    e.param = p->name;
    e.index = flat;
    e.analytic = analytic[pi][static_cast<std::size_t>(flat)];
    e.numeric = (f_plus - f_minus) / (2.0 * h);
    e.rel_err = std::abs(e.analytic - e.numeric) /
                std::max({std::abs(e.analytic), std::abs(e.numeric), 1e-6});
    report.max_rel_err = std::max(report.max_rel_err, e.rel_err);
    report.entries.push_back(std::move(e));
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

} // namespace petmae
