#include "petmae/losses.hpp"

#include <cmath>

#include "petmae/error.hpp"

namespace petmae {

LossBreakdown recon_loss(const TensorPtr& x_rec, const std::vector<double>& x,
                         const std::vector<std::uint8_t>& voxel_mask,
                         double lambda, double epsilon) {
  const std::size_t n = x_rec->values.size();
  if (x.size() != n || voxel_mask.size() != n)
    throw Error(ErrorCode::ShapeMismatch, "x, x_rec and mask sizes differ");
  if (lambda < 0.0 || epsilon < 0.0)
    throw Error(ErrorCode::BadConfig, "lambda and epsilon must be >= 0");

  std::vector<double> masked_sq(n), visible_sq(n);
  std::int64_t n_masked = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x_rec->values[i] - x[i];
    const double sq = d * d;
    masked_sq[i] = voxel_mask[i] ? sq : 0.0;
    visible_sq[i] = voxel_mask[i] ? 0.0 : sq;
    n_masked += voxel_mask[i] ? 1 : 0;
  }
  const double sum_m = static_cast<double>(n_masked);
  const double sum_v = static_cast<double>(static_cast<std::int64_t>(n) - n_masked);
  const double denom_m = sum_m + epsilon;
  const double denom_v = sum_v + epsilon;

  LossBreakdown out;
  out.lambda = lambda;
  out.epsilon = epsilon;
  out.masked_term = denom_m > 0.0 ? pairwise_sum(masked_sq) / denom_m : 0.0;
  out.visible_term = denom_v > 0.0 ? pairwise_sum(visible_sq) / denom_v : 0.0;
  out.total = out.masked_term + lambda * out.visible_term;

  auto node = make_tensor({1});
  node->values[0] = out.total;
  node->parents = {x_rec};
  node->needs_grad = x_rec->requires_grad || x_rec->needs_grad;
  TensorPtr xr = x_rec;
  auto xc = std::make_shared<std::vector<double>>(x);
  auto mc = std::make_shared<std::vector<std::uint8_t>>(voxel_mask);
  node->backward_fn = [xr, xc, mc, lambda, denom_m, denom_v](Tensor& outn) {
    if (!(xr->requires_grad || xr->needs_grad)) return;
    xr->ensure_grad();
    const double g = outn.grad[0];
    const double cm = denom_m > 0.0 ? 2.0 * g / denom_m : 0.0;
    const double cv = denom_v > 0.0 ? 2.0 * g * lambda / denom_v : 0.0;
    for (std::size_t i = 0; i < xr->values.size(); ++i) {
      const double d = xr->values[i] - (*xc)[i];
      xr->grad[i] += ((*mc)[i] ? cm : cv) * d;
    }
  };
  out.node = node;
  return out;
}

TensorPtr dice_ce_loss(const TensorPtr& logits,
                       const std::vector<std::uint8_t>& labels) {
  if (logits->shape.size() != 5 || logits->shape[1] != 2)
    throw Error(ErrorCode::ShapeMismatch, "logits must be [B, 2, Z, Y, X]");
  const std::int64_t B = logits->shape[0];
  const std::int64_t vox = logits->shape[2] * logits->shape[3] * logits->shape[4];
  if (static_cast<std::int64_t>(labels.size()) != B * vox)
    throw Error(ErrorCode::ShapeMismatch, "label count must be B*Z*Y*X");

  constexpr double kSmooth = 1e-5;
  const double* lv = logits->values.data();

  // foreground probability per voxel via the two-class softmax
  std::vector<double> p(static_cast<std::size_t>(B * vox));
  for (std::int64_t b = 0; b < B; ++b) {
    const double* l0 = lv + (b * 2 + 0) * vox;
    const double* l1 = lv + (b * 2 + 1) * vox;
    for (std::int64_t i = 0; i < vox; ++i) {
      const double m = std::max(l0[i], l1[i]);
      const double e0 = std::exp(l0[i] - m), e1 = std::exp(l1[i] - m);
      p[static_cast<std::size_t>(b * vox + i)] = e1 / (e0 + e1);
    }
  }

  // per-sample soft Dice on the foreground channel
  std::vector<double> inter(B), psum(B), gsum(B);
  for (std::int64_t b = 0; b < B; ++b) {
    std::vector<double> pi(static_cast<std::size_t>(vox)),
        pg(static_cast<std::size_t>(vox));
    double gs = 0.0;
    for (std::int64_t i = 0; i < vox; ++i) {
      const double pv = p[static_cast<std::size_t>(b * vox + i)];
      const double gv = labels[static_cast<std::size_t>(b * vox + i)] ? 1.0 : 0.0;
      pi[static_cast<std::size_t>(i)] = pv;
      pg[static_cast<std::size_t>(i)] = pv * gv;
      gs += gv;
    }
    psum[b] = pairwise_sum(pi);
    inter[b] = pairwise_sum(pg);
    gsum[b] = gs;
  }

  double dice_loss = 0.0;
  for (std::int64_t b = 0; b < B; ++b)
    dice_loss += 1.0 - (2.0 * inter[b] + kSmooth) /
                           (psum[b] + gsum[b] + kSmooth);
  dice_loss /= static_cast<double>(B);

  // voxel-mean cross-entropy, computed from the stable log-sum-exp
  std::vector<double> ce_terms(static_cast<std::size_t>(B * vox));
  for (std::int64_t b = 0; b < B; ++b) {
    const double* l0 = lv + (b * 2 + 0) * vox;
    const double* l1 = lv + (b * 2 + 1) * vox;
    for (std::int64_t i = 0; i < vox; ++i) {
      const double m = std::max(l0[i], l1[i]);
      const double lse = m + std::log(std::exp(l0[i] - m) + std::exp(l1[i] - m));
      const double lg = labels[static_cast<std::size_t>(b * vox + i)] ? l1[i] : l0[i];
      ce_terms[static_cast<std::size_t>(b * vox + i)] = lse - lg;
    }
  }
  const double ce = pairwise_sum(ce_terms) / static_cast<double>(B * vox);

  auto node = make_tensor({1});
  node->values[0] = dice_loss + ce;
  node->parents = {logits};
  node->needs_grad = logits->requires_grad || logits->needs_grad;
  TensorPtr lp = logits;
  auto pk = std::make_shared<std::vector<double>>(std::move(p));
  auto lk = std::make_shared<std::vector<std::uint8_t>>(labels);
  auto interk = std::make_shared<std::vector<double>>(std::move(inter));
  auto denomk = std::make_shared<std::vector<double>>(B);
  for (std::int64_t b = 0; b < B; ++b)
    (*denomk)[static_cast<std::size_t>(b)] = psum[b] + gsum[b] + kSmooth;
  node->backward_fn = [lp, pk, lk, interk, denomk, B, vox](Tensor& outn) {
    if (!(lp->requires_grad || lp->needs_grad)) return;
    lp->ensure_grad();
    const double g = outn.grad[0];
    const double inv_n = 1.0 / static_cast<double>(B * vox);
    const double inv_b = 1.0 / static_cast<double>(B);
    for (std::int64_t b = 0; b < B; ++b) {
      double* d0 = lp->grad.data() + (b * 2 + 0) * vox;
      double* d1 = lp->grad.data() + (b * 2 + 1) * vox;
      const double denom = (*denomk)[static_cast<std::size_t>(b)];
      const double num = 2.0 * (*interk)[static_cast<std::size_t>(b)] + 1e-5;
      for (std::int64_t i = 0; i < vox; ++i) {
        const double pv = (*pk)[static_cast<std::size_t>(b * vox + i)];
        const double gv =
            (*lk)[static_cast<std::size_t>(b * vox + i)] ? 1.0 : 0.0;
        // dDice_b/dp = -(2 g / denom - num / denom^2); then dp/dl1 = p(1-p)
        const double ddice_dp =
            -(2.0 * gv / denom - num / (denom * denom)) * inv_b;
        const double dp_dl1 = pv * (1.0 - pv);
        // CE in softmax form: dCE/dl_k = (softmax_k - [k == g]) / N
        const double dce_dl1 = (pv - gv) * inv_n;
        const double dce_dl0 = ((1.0 - pv) - (1.0 - gv)) * inv_n;
        d1[i] += g * (ddice_dp * dp_dl1 + dce_dl1);
        d0[i] += g * (-ddice_dp * dp_dl1 + dce_dl0);
      }
    }
  };
  return node;
}

} // namespace petmae
