#include "petmae/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "petmae/error.hpp"

namespace petmae {

namespace {

bool any_needs_grad(const std::vector<TensorPtr>& parents) {
  for (const TensorPtr& p : parents)
    if (p->requires_grad || p->needs_grad) return true;
  return false;
}

void check_same_shape(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape != b->shape)
    throw Error(ErrorCode::ShapeMismatch, "operand shapes differ");
}

struct ConvDims {
  std::int64_t B, Ci, Z, Y, X;
  std::int64_t Co, K;
  std::int64_t Zo, Yo, Xo;
  std::int64_t stride, pad;
};

ConvDims conv_dims(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b,
                   std::int64_t stride, std::int64_t pad) {
  if (x->shape.size() != 5 || w->shape.size() != 5 || b->shape.size() != 1)
    throw Error(ErrorCode::ShapeMismatch, "conv3d expects x[5d], w[5d], b[1d]");
  ConvDims d;
  d.B = x->shape[0]; d.Ci = x->shape[1];
  d.Z = x->shape[2]; d.Y = x->shape[3]; d.X = x->shape[4];
  d.Co = w->shape[0]; d.K = w->shape[2];
  d.stride = stride; d.pad = pad;
  if (w->shape[1] != d.Ci || w->shape[3] != d.K || w->shape[4] != d.K)
    throw Error(ErrorCode::ShapeMismatch, "kernel shape mismatch");
  if (b->shape[0] != d.Co)
    throw Error(ErrorCode::ShapeMismatch, "bias length mismatch");
  if (d.K != 1 && d.K != 3)
    throw Error(ErrorCode::ShapeMismatch, "kernel must be 1^3 or 3^3");
  if (stride != 1 && stride != 2)
    throw Error(ErrorCode::ShapeMismatch, "stride must be 1 or 2");
  d.Zo = (d.Z + 2 * pad - d.K) / stride + 1;
  d.Yo = (d.Y + 2 * pad - d.K) / stride + 1;
  d.Xo = (d.X + 2 * pad - d.K) / stride + 1;
  if (d.Zo < 1 || d.Yo < 1 || d.Xo < 1)
    throw Error(ErrorCode::ShapeMismatch, "conv output would be empty");
  return d;
}

} // namespace

TensorPtr make_tensor(std::vector<std::int64_t> shape, double fill,
                      bool requires_grad, std::string name) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->values.assign(static_cast<std::size_t>(t->size()), fill);
  t->requires_grad = requires_grad;
  t->needs_grad = requires_grad;
  t->name = std::move(name);
  if (requires_grad) t->ensure_grad();
  return t;
}

TensorPtr make_tensor(std::vector<std::int64_t> shape,
                      std::vector<double> values, bool requires_grad,
                      std::string name) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->values = std::move(values);
  if (static_cast<std::int64_t>(t->values.size()) != t->size())
    throw Error(ErrorCode::ShapeMismatch, "value count does not match shape");
  t->requires_grad = requires_grad;
  t->needs_grad = requires_grad;
  t->name = std::move(name);
  if (requires_grad) t->ensure_grad();
  return t;
}

TensorPtr conv3d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b,
                 std::int64_t stride, std::int64_t pad) {
  const ConvDims d = conv_dims(x, w, b, stride, pad);
  auto y = make_tensor({d.B, d.Co, d.Zo, d.Yo, d.Xo});

  const double* xv = x->values.data();
  const double* wv = w->values.data();
  const double* bv = b->values.data();
  double* yv = y->values.data();

  const std::int64_t xcs = d.Z * d.Y * d.X;    // channel stride in x
  const std::int64_t ycs = d.Zo * d.Yo * d.Xo; // channel stride in y
  const std::int64_t kvol = d.K * d.K * d.K;

#pragma omp parallel for collapse(3) schedule(static)
  for (std::int64_t bb = 0; bb < d.B; ++bb)
    for (std::int64_t co = 0; co < d.Co; ++co)
      for (std::int64_t zo = 0; zo < d.Zo; ++zo) {
        for (std::int64_t yo = 0; yo < d.Yo; ++yo)
          for (std::int64_t xo = 0; xo < d.Xo; ++xo) {
            double acc = bv[co];
            for (std::int64_t ci = 0; ci < d.Ci; ++ci) {
              const double* xc = xv + (bb * d.Ci + ci) * xcs;
              const double* wc = wv + (co * d.Ci + ci) * kvol;
              for (std::int64_t kz = 0; kz < d.K; ++kz) {
                const std::int64_t zi = zo * d.stride + kz - d.pad;
                if (zi < 0 || zi >= d.Z) continue;
                for (std::int64_t ky = 0; ky < d.K; ++ky) {
                  const std::int64_t yi = yo * d.stride + ky - d.pad;
                  if (yi < 0 || yi >= d.Y) continue;
                  for (std::int64_t kx = 0; kx < d.K; ++kx) {
                    const std::int64_t xi = xo * d.stride + kx - d.pad;
                    if (xi < 0 || xi >= d.X) continue;
                    acc += xc[(zi * d.Y + yi) * d.X + xi] *
                           wc[(kz * d.K + ky) * d.K + kx];
                  }
                }
              }
            }
            yv[(bb * d.Co + co) * ycs + (zo * d.Yo + yo) * d.Xo + xo] = acc;
          }
      }

  y->parents = {x, w, b};
  y->needs_grad = any_needs_grad(y->parents);
  TensorPtr xp = x, wp = w, bp = b;
  y->backward_fn = [xp, wp, bp, d](Tensor& out) {
    const double* gy = out.grad.data();
    const double* xv = xp->values.data();
    const double* wv = wp->values.data();
    const std::int64_t xcs = d.Z * d.Y * d.X;
    const std::int64_t ycs = d.Zo * d.Yo * d.Xo;
    const std::int64_t kvol = d.K * d.K * d.K;

    if (bp->requires_grad || bp->needs_grad) {
      bp->ensure_grad();
      double* db = bp->grad.data();
#pragma omp parallel for schedule(static)
      for (std::int64_t co = 0; co < d.Co; ++co) {
        double acc = 0.0;
        for (std::int64_t bb = 0; bb < d.B; ++bb) {
          const double* g = gy + (bb * d.Co + co) * ycs;
          for (std::int64_t i = 0; i < ycs; ++i) acc += g[i];
        }
        db[co] += acc;
      }
    }

    if (wp->requires_grad || wp->needs_grad) {
      wp->ensure_grad();
      double* dw = wp->grad.data();
#pragma omp parallel for collapse(2) schedule(static)
      for (std::int64_t co = 0; co < d.Co; ++co)
        for (std::int64_t ci = 0; ci < d.Ci; ++ci)
          for (std::int64_t kz = 0; kz < d.K; ++kz)
            for (std::int64_t ky = 0; ky < d.K; ++ky)
              for (std::int64_t kx = 0; kx < d.K; ++kx) {
                double acc = 0.0;
                for (std::int64_t bb = 0; bb < d.B; ++bb) {
                  const double* g = gy + (bb * d.Co + co) * ycs;
                  const double* xc = xv + (bb * d.Ci + ci) * xcs;
                  for (std::int64_t zo = 0; zo < d.Zo; ++zo) {
                    const std::int64_t zi = zo * d.stride + kz - d.pad;
                    if (zi < 0 || zi >= d.Z) continue;
                    for (std::int64_t yo = 0; yo < d.Yo; ++yo) {
                      const std::int64_t yi = yo * d.stride + ky - d.pad;
                      if (yi < 0 || yi >= d.Y) continue;
                      for (std::int64_t xo = 0; xo < d.Xo; ++xo) {
                        const std::int64_t xi = xo * d.stride + kx - d.pad;
                        if (xi < 0 || xi >= d.X) continue;
                        acc += g[(zo * d.Yo + yo) * d.Xo + xo] *
                               xc[(zi * d.Y + yi) * d.X + xi];
                      }
                    }
                  }
                }
                dw[((co * d.Ci + ci) * kvol) + (kz * d.K + ky) * d.K + kx] += acc;
              }
    }

    if (xp->requires_grad || xp->needs_grad) {
      xp->ensure_grad();
      double* dx = xp->grad.data();
      // gather form: each input voxel collects from the outputs it fed
#pragma omp parallel for collapse(2) schedule(static)
      for (std::int64_t bb = 0; bb < d.B; ++bb)
        for (std::int64_t ci = 0; ci < d.Ci; ++ci)
          for (std::int64_t zi = 0; zi < d.Z; ++zi)
            for (std::int64_t yi = 0; yi < d.Y; ++yi)
              for (std::int64_t xi = 0; xi < d.X; ++xi) {
                double acc = 0.0;
                for (std::int64_t kz = 0; kz < d.K; ++kz) {
                  const std::int64_t zn = zi + d.pad - kz;
                  if (zn < 0 || zn % d.stride) continue;
                  const std::int64_t zo = zn / d.stride;
                  if (zo >= d.Zo) continue;
                  for (std::int64_t ky = 0; ky < d.K; ++ky) {
                    const std::int64_t yn = yi + d.pad - ky;
                    if (yn < 0 || yn % d.stride) continue;
                    const std::int64_t yo = yn / d.stride;
                    if (yo >= d.Yo) continue;
                    for (std::int64_t kx = 0; kx < d.K; ++kx) {
                      const std::int64_t xn = xi + d.pad - kx;
                      if (xn < 0 || xn % d.stride) continue;
                      const std::int64_t xo = xn / d.stride;
                      if (xo >= d.Xo) continue;
                      for (std::int64_t co = 0; co < d.Co; ++co)
                        acc += gy[(bb * d.Co + co) * ycs +
                                  (zo * d.Yo + yo) * d.Xo + xo] *
                               wv[(co * d.Ci + ci) * kvol +
                                  (kz * d.K + ky) * d.K + kx];
                    }
                  }
                }
                dx[(bb * d.Ci + ci) * xcs + (zi * d.Y + yi) * d.X + xi] += acc;
              }
    }
  };
  return y;
}

TensorPtr relu(const TensorPtr& x) {
  auto y = make_tensor(x->shape);
  const std::size_t n = x->values.size();
  for (std::size_t i = 0; i < n; ++i)
    y->values[i] = x->values[i] > 0.0 ? x->values[i] : 0.0;
  y->parents = {x};
  y->needs_grad = any_needs_grad(y->parents);
  TensorPtr xp = x;
  y->backward_fn = [xp](Tensor& out) {
    if (!(xp->requires_grad || xp->needs_grad)) return;
    xp->ensure_grad();
    for (std::size_t i = 0; i < out.grad.size(); ++i)
      if (xp->values[i] > 0.0) xp->grad[i] += out.grad[i];
  };
  return y;
}

TensorPtr nearest_upsample2x(const TensorPtr& x) {
  if (x->shape.size() != 5)
    throw Error(ErrorCode::ShapeMismatch, "upsample expects a 5d tensor");
  const std::int64_t B = x->shape[0], C = x->shape[1];
  const std::int64_t Z = x->shape[2], Y = x->shape[3], X = x->shape[4];
  auto y = make_tensor({B, C, 2 * Z, 2 * Y, 2 * X});
  for (std::int64_t bc = 0; bc < B * C; ++bc)
    for (std::int64_t z = 0; z < Z; ++z)
      for (std::int64_t yy = 0; yy < Y; ++yy)
        for (std::int64_t xx = 0; xx < X; ++xx) {
          const double v = x->values[((bc * Z + z) * Y + yy) * X + xx];
          for (std::int64_t dz = 0; dz < 2; ++dz)
            for (std::int64_t dy = 0; dy < 2; ++dy) {
              double* row = &y->values[(((bc * 2 * Z + 2 * z + dz) * 2 * Y +
                                         2 * yy + dy) * 2 * X) + 2 * xx];
              row[0] = v;
              row[1] = v;
            }
        }
  y->parents = {x};
  y->needs_grad = any_needs_grad(y->parents);
  TensorPtr xp = x;
  y->backward_fn = [xp, B, C, Z, Y, X](Tensor& out) {
    if (!(xp->requires_grad || xp->needs_grad)) return;
    xp->ensure_grad();
    for (std::int64_t bc = 0; bc < B * C; ++bc)
      for (std::int64_t z = 0; z < Z; ++z)
        for (std::int64_t yy = 0; yy < Y; ++yy)
          for (std::int64_t xx = 0; xx < X; ++xx) {
            double acc = 0.0;
            for (std::int64_t dz = 0; dz < 2; ++dz)
              for (std::int64_t dy = 0; dy < 2; ++dy) {
                const double* row =
                    &out.grad[(((bc * 2 * Z + 2 * z + dz) * 2 * Y + 2 * yy +
                                dy) * 2 * X) + 2 * xx];
                acc += row[0] + row[1];
              }
            xp->grad[((bc * Z + z) * Y + yy) * X + xx] += acc;
          }
  };
  return y;
}

TensorPtr concat_c(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() != 5 || b->shape.size() != 5)
    throw Error(ErrorCode::ShapeMismatch, "concat expects 5d tensors");
  for (int i : {0, 2, 3, 4})
    if (a->shape[i] != b->shape[i])
      throw Error(ErrorCode::ShapeMismatch, "concat extents differ");
  const std::int64_t B = a->shape[0];
  const std::int64_t Ca = a->shape[1], Cb = b->shape[1];
  const std::int64_t vox = a->shape[2] * a->shape[3] * a->shape[4];
  auto y = make_tensor({B, Ca + Cb, a->shape[2], a->shape[3], a->shape[4]});
  for (std::int64_t bb = 0; bb < B; ++bb) {
    std::copy_n(a->values.data() + bb * Ca * vox, Ca * vox,
                y->values.data() + bb * (Ca + Cb) * vox);
    std::copy_n(b->values.data() + bb * Cb * vox, Cb * vox,
                y->values.data() + bb * (Ca + Cb) * vox + Ca * vox);
  }
  y->parents = {a, b};
  y->needs_grad = any_needs_grad(y->parents);
  TensorPtr ap = a, bp = b;
  y->backward_fn = [ap, bp, B, Ca, Cb, vox](Tensor& out) {
    for (std::int64_t bb = 0; bb < B; ++bb) {
      const double* g = out.grad.data() + bb * (Ca + Cb) * vox;
      if (ap->requires_grad || ap->needs_grad) {
        ap->ensure_grad();
        double* da = ap->grad.data() + bb * Ca * vox;
        for (std::int64_t i = 0; i < Ca * vox; ++i) da[i] += g[i];
      }
      if (bp->requires_grad || bp->needs_grad) {
        bp->ensure_grad();
        double* db = bp->grad.data() + bb * Cb * vox;
        for (std::int64_t i = 0; i < Cb * vox; ++i) db[i] += g[Ca * vox + i];
      }
    }
  };
  return y;
}

TensorPtr slice_c(const TensorPtr& x, std::int64_t c0, std::int64_t len) {
  if (x->shape.size() != 5)
    throw Error(ErrorCode::ShapeMismatch, "slice expects a 5d tensor");
  const std::int64_t B = x->shape[0], C = x->shape[1];
  if (c0 < 0 || len < 1 || c0 + len > C)
    throw Error(ErrorCode::ShapeMismatch, "channel slice out of range");
  const std::int64_t vox = x->shape[2] * x->shape[3] * x->shape[4];
  auto y = make_tensor({B, len, x->shape[2], x->shape[3], x->shape[4]});
  for (std::int64_t bb = 0; bb < B; ++bb)
    std::copy_n(x->values.data() + (bb * C + c0) * vox, len * vox,
                y->values.data() + bb * len * vox);
  y->parents = {x};
  y->needs_grad = any_needs_grad(y->parents);
  TensorPtr xp = x;
  y->backward_fn = [xp, B, C, c0, len, vox](Tensor& out) {
    if (!(xp->requires_grad || xp->needs_grad)) return;
    xp->ensure_grad();
    for (std::int64_t bb = 0; bb < B; ++bb) {
      const double* g = out.grad.data() + bb * len * vox;
      double* dx = xp->grad.data() + (bb * C + c0) * vox;
      for (std::int64_t i = 0; i < len * vox; ++i) dx[i] += g[i];
    }
  };
  return y;
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(a, b);
  auto y = make_tensor(a->shape);
  for (std::size_t i = 0; i < y->values.size(); ++i)
    y->values[i] = a->values[i] + b->values[i];
  y->parents = {a, b};
  y->needs_grad = any_needs_grad(y->parents);
  TensorPtr ap = a, bp = b;
  y->backward_fn = [ap, bp](Tensor& out) {
    if (ap->requires_grad || ap->needs_grad) {
      ap->ensure_grad();
      for (std::size_t i = 0; i < out.grad.size(); ++i)
        ap->grad[i] += out.grad[i];
    }
    if (bp->requires_grad || bp->needs_grad) {
      bp->ensure_grad();
      for (std::size_t i = 0; i < out.grad.size(); ++i)
        bp->grad[i] += out.grad[i];
    }
  };
  return y;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(a, b);
  auto y = make_tensor(a->shape);
  for (std::size_t i = 0; i < y->values.size(); ++i)
    y->values[i] = a->values[i] - b->values[i];
  y->parents = {a, b};
  y->needs_grad = any_needs_grad(y->parents);
  TensorPtr ap = a, bp = b;
  y->backward_fn = [ap, bp](Tensor& out) {
    if (ap->requires_grad || ap->needs_grad) {
      ap->ensure_grad();
      for (std::size_t i = 0; i < out.grad.size(); ++i)
        ap->grad[i] += out.grad[i];
    }
    if (bp->requires_grad || bp->needs_grad) {
      bp->ensure_grad();
      for (std::size_t i = 0; i < out.grad.size(); ++i)
        bp->grad[i] -= out.grad[i];
    }
  };
  return y;
}

TensorPtr mul_const(const TensorPtr& x, std::vector<double> k) {
  if (k.size() != x->values.size())
    throw Error(ErrorCode::ShapeMismatch, "constant factor size differs");
  auto y = make_tensor(x->shape);
  for (std::size_t i = 0; i < y->values.size(); ++i)
    y->values[i] = x->values[i] * k[i];
  y->parents = {x};
  y->needs_grad = any_needs_grad(y->parents);
  TensorPtr xp = x;
  auto kk = std::make_shared<std::vector<double>>(std::move(k));
  y->backward_fn = [xp, kk](Tensor& out) {
    if (!(xp->requires_grad || xp->needs_grad)) return;
    xp->ensure_grad();
    for (std::size_t i = 0; i < out.grad.size(); ++i)
      xp->grad[i] += out.grad[i] * (*kk)[i];
  };
  return y;
}

TensorPtr scale(const TensorPtr& x, double s) {
  auto y = make_tensor(x->shape);
  for (std::size_t i = 0; i < y->values.size(); ++i)
    y->values[i] = x->values[i] * s;
  y->parents = {x};
  y->needs_grad = any_needs_grad(y->parents);
  TensorPtr xp = x;
  y->backward_fn = [xp, s](Tensor& out) {
    if (!(xp->requires_grad || xp->needs_grad)) return;
    xp->ensure_grad();
    for (std::size_t i = 0; i < out.grad.size(); ++i)
      xp->grad[i] += out.grad[i] * s;
  };
  return y;
}

TensorPtr sum_all(const TensorPtr& x) {
  auto y = make_tensor({1});
  y->values[0] = pairwise_sum(x->values);
  y->parents = {x};
  y->needs_grad = any_needs_grad(y->parents);
  TensorPtr xp = x;
  y->backward_fn = [xp](Tensor& out) {
    if (!(xp->requires_grad || xp->needs_grad)) return;
    xp->ensure_grad();
    const double g = out.grad[0];
    for (double& d : xp->grad) d += g;
  };
  return y;
}

void backward(const TensorPtr& loss) {
  if (loss->size() != 1)
    throw Error(ErrorCode::NonScalarLoss, "backward needs a scalar loss");

  // iterative post-order DFS; parent order fixes the topological order
  std::vector<TensorPtr> order;
  std::unordered_set<Tensor*> seen;
  std::vector<std::pair<TensorPtr, std::size_t>> stack;
  stack.emplace_back(loss, 0);
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorPtr child = node->parents[next++];
      if (seen.insert(child.get()).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (const TensorPtr& t : order)
    if (t.get() != loss.get() && !t->parents.empty())
      t->grad.assign(t->values.size(), 0.0);
  loss->grad.assign(1, 1.0);

  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

double pairwise_sum(const double* x, std::int64_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::int64_t half = n / 2;
  return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

double pairwise_sum(const std::vector<double>& x) {
  return pairwise_sum(x.data(), static_cast<std::int64_t>(x.size()));
}

} // namespace petmae
