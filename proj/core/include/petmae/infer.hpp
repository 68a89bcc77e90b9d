#ifndef PETMAE_INFER_HPP
#define PETMAE_INFER_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "petmae/tensor.hpp"
#include "petmae/volume.hpp"

namespace petmae {

/// Window corners covering a volume, stride floor(window * (1 - overlap))
/// per axis with the final corner clamped so the last window ends at the
/// boundary. Every voxel is covered at least once.
struct WindowPlan {
  std::array<std::int64_t, 3> window{};
  std::array<std::int64_t, 3> stride{};
  std::vector<std::array<std::int64_t, 3>> corners; // lexicographic
};

WindowPlan plan_windows(const std::array<std::int64_t, 3>& vol_shape,
                        const std::array<std::int64_t, 3>& window,
                        double overlap = 0.5);

/// Runs infer_fn on every window crop and blends with uniform weights:
/// per-voxel output = sum of window outputs / coverage count. Accumulation
/// is extended-precision and in fixed window order, so the blend of equal
/// contributions reproduces them bit-exactly.
using InferFn = std::function<TensorPtr(const TensorPtr&)>;

Volume sliding_infer(const InferFn& infer_fn, const Volume& volume,
                     const WindowPlan& plan);

} // namespace petmae

#endif
