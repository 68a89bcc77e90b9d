#include "petmae/infer.hpp"

#include <algorithm>
#include <cmath>

#include "petmae/error.hpp"

namespace petmae {

WindowPlan plan_windows(const std::array<std::int64_t, 3>& vol_shape,
                        const std::array<std::int64_t, 3>& window,
                        double overlap) {
  if (!(overlap >= 0.0 && overlap < 1.0))
    throw Error(ErrorCode::BadOverlap, "overlap must lie in [0, 1)");
  for (int a = 0; a < 3; ++a)
    if (window[a] < 1 || window[a] > vol_shape[a])
      throw Error(ErrorCode::ShapeMismatch,
                  "window exceeds the (padded) volume shape");

  WindowPlan plan;
  plan.window = window;
  std::array<std::vector<std::int64_t>, 3> axis_corners;
  for (int a = 0; a < 3; ++a) {
    plan.stride[a] = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(
               std::floor(static_cast<double>(window[a]) * (1.0 - overlap))));
    std::int64_t c = 0;
    while (c + window[a] < vol_shape[a]) {
      axis_corners[a].push_back(c);
      c += plan.stride[a];
    }
    const std::int64_t last = vol_shape[a] - window[a];
    if (axis_corners[a].empty() || axis_corners[a].back() != last)
      axis_corners[a].push_back(last);
  }
  for (std::int64_t z : axis_corners[0])
    for (std::int64_t y : axis_corners[1])
      for (std::int64_t x : axis_corners[2])
        plan.corners.push_back({z, y, x});
  return plan;
}

Volume sliding_infer(const InferFn& infer_fn, const Volume& volume,
                     const WindowPlan& plan) {
  const auto [wz, wy, wx] = plan.window;

  std::int64_t out_channels = -1;
  std::vector<long double> sum;
  std::vector<std::int64_t> count(
      static_cast<std::size_t>(volume.voxels_per_channel()), 0);

  for (const auto& corner : plan.corners) {
    Volume crop = crop_at(volume, corner, plan.window);
    auto x = make_tensor({1, volume.channels, wz, wy, wx}, crop.data);
    TensorPtr y = infer_fn(x);
    if (y->shape.size() != 5 || y->shape[2] != wz || y->shape[3] != wy ||
        y->shape[4] != wx)
      throw Error(ErrorCode::ShapeMismatch,
                  "model output window shape differs from the input window");
    if (out_channels < 0) {
      out_channels = y->shape[1];
      sum.assign(static_cast<std::size_t>(out_channels *
                                          volume.voxels_per_channel()),
                 0.0L);
    } else if (y->shape[1] != out_channels) {
      throw Error(ErrorCode::ShapeMismatch, "model output channels changed");
    }

    for (std::int64_t c = 0; c < out_channels; ++c)
      for (std::int64_t z = 0; z < wz; ++z)
        for (std::int64_t yy = 0; yy < wy; ++yy) {
          const double* src = y->values.data() + ((c * wz + z) * wy + yy) * wx;
          long double* dst =
              &sum[static_cast<std::size_t>(
                  ((c * volume.nz + corner[0] + z) * volume.ny + corner[1] +
                   yy) * volume.nx + corner[2])];
          for (std::int64_t xx = 0; xx < wx; ++xx) dst[xx] += src[xx];
        }
    for (std::int64_t z = 0; z < wz; ++z)
      for (std::int64_t yy = 0; yy < wy; ++yy) {
        std::int64_t* dst =
            &count[static_cast<std::size_t>(
                ((corner[0] + z) * volume.ny + corner[1] + yy) * volume.nx +
                corner[2])];
        for (std::int64_t xx = 0; xx < wx; ++xx) dst[xx] += 1;
      }
  }

  Volume out(out_channels, volume.nz, volume.ny, volume.nx, volume.spacing,
             volume.origin);
  const std::int64_t vox = volume.voxels_per_channel();
  for (std::int64_t c = 0; c < out_channels; ++c)
    for (std::int64_t i = 0; i < vox; ++i) {
      const std::int64_t k = count[static_cast<std::size_t>(i)];
      out.data[static_cast<std::size_t>(c * vox + i)] = static_cast<double>(
          sum[static_cast<std::size_t>(c * vox + i)] /
          static_cast<long double>(k));
    }
  return out;
}

} // namespace petmae
