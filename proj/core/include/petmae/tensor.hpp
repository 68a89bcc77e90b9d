#ifndef PETMAE_TENSOR_HPP
#define PETMAE_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace petmae {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// N-dimensional value node in a reverse-mode graph, rank up to 5 with the
/// convention [batch, channel, z, y, x]. Interior nodes keep their parents
/// alive and carry a closure that routes the output gradient to them.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  bool needs_grad = false; // this node or something beneath it wants a grad
  std::string name;

  std::vector<TensorPtr> parents;
  std::function<void(Tensor&)> backward_fn;

  std::int64_t size() const {
    std::int64_t n = 1;
    for (std::int64_t e : shape) n *= e;
    return n;
  }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
  void zero_grad() { grad.assign(values.size(), 0.0); }
};

TensorPtr make_tensor(std::vector<std::int64_t> shape, double fill = 0.0,
                      bool requires_grad = false, std::string name = "");
TensorPtr make_tensor(std::vector<std::int64_t> shape,
                      std::vector<double> values, bool requires_grad = false,
                      std::string name = "");

/// 3D cross-correlation plus bias. Kernels are cubic (1 or 3), stride 1 or
/// 2; pad 1 preserves spatial size for k=3, s=1.
TensorPtr conv3d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b,
                 std::int64_t stride, std::int64_t pad);

TensorPtr relu(const TensorPtr& x);

/// 2x nearest-neighbour replication per spatial axis; backward sums the
/// eight children of each source voxel.
TensorPtr nearest_upsample2x(const TensorPtr& x);

TensorPtr concat_c(const TensorPtr& a, const TensorPtr& b);

/// Channels [c0, c0 + len) of x.
TensorPtr slice_c(const TensorPtr& x, std::int64_t c0, std::int64_t len);

TensorPtr add(const TensorPtr& a, const TensorPtr& b);

TensorPtr sub(const TensorPtr& a, const TensorPtr& b);

/// Elementwise product with a constant array (no gradient into the mask).
TensorPtr mul_const(const TensorPtr& x, std::vector<double> k);

TensorPtr scale(const TensorPtr& x, double s);

/// Sum of all elements, as a rank-1 scalar node.
TensorPtr sum_all(const TensorPtr& x);

/// Reverse topological sweep from a scalar loss. Every requires_grad tensor
/// reachable from the loss receives its gradient; grads accumulate, so call
/// zero_grad on parameters between steps.
void backward(const TensorPtr& loss);

/// Fixed-order pairwise-tree summation, deterministic across runs and
/// thread counts.
double pairwise_sum(const double* x, std::int64_t n);
double pairwise_sum(const std::vector<double>& x);

} // namespace petmae

#endif
