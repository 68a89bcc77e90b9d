#include "petmae/masking.hpp"

#include <cmath>
#include <numeric>

#include "petmae/error.hpp"

namespace petmae {

PatchGrid make_grid(const std::array<std::int64_t, 3>& crop_shape,
                    const std::array<std::int64_t, 3>& patch_shape) {
  for (int a = 0; a < 3; ++a) {
    if (crop_shape[a] < 1 || patch_shape[a] < 1)
      throw Error(ErrorCode::BadConfig, "shapes must be positive");
    if (crop_shape[a] % patch_shape[a] != 0)
      throw Error(ErrorCode::NonDivisible,
                  "patch shape does not tile the crop on axis " +
                      std::to_string(a));
  }
  PatchGrid grid;
  grid.crop_shape = crop_shape;
  grid.patch_shape = patch_shape;
  for (int a = 0; a < 3; ++a) grid.counts[a] = crop_shape[a] / patch_shape[a];
  grid.total = grid.counts[0] * grid.counts[1] * grid.counts[2];
  return grid;
}

PatchMask sample_mask(const PatchGrid& grid, double ratio, std::uint64_t seed) {
  if (ratio < 0.0 || ratio > 1.0)
    throw Error(ErrorCode::BadConfig, "mask ratio must lie in [0, 1]");

  const std::int64_t p = grid.total;
  const std::int64_t k =
      std::llround(ratio * static_cast<double>(p));

  PatchMask mask;
  mask.ratio = ratio;
  mask.seed = seed;
  for (int c = 0; c < 2; ++c) {
    mask.channel[c].assign(static_cast<std::size_t>(p), 0);
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(c)));
    // partial Fisher-Yates: the first k entries of the shuffle are the draw
    std::vector<std::int64_t> idx(static_cast<std::size_t>(p));
    std::iota(idx.begin(), idx.end(), 0);
    for (std::int64_t i = 0; i < k; ++i) {
      std::int64_t j = i + static_cast<std::int64_t>(
                               rng.next_below(static_cast<std::uint64_t>(p - i)));
      std::swap(idx[i], idx[j]);
      mask.channel[c][static_cast<std::size_t>(idx[i])] = 1;
    }
  }
  return mask;
}

std::vector<std::uint8_t> expand_mask(const PatchMask& mask,
                                      const PatchGrid& grid) {
  const auto [gz, gy, gx] = grid.counts;
  const auto [pz, py, px] = grid.patch_shape;
  const auto [cz, cy, cx] = grid.crop_shape;
  const std::int64_t vox = cz * cy * cx;

  std::vector<std::uint8_t> out(static_cast<std::size_t>(2 * vox), 0);
  for (int c = 0; c < 2; ++c) {
    for (std::int64_t iz = 0; iz < gz; ++iz)
      for (std::int64_t iy = 0; iy < gy; ++iy)
        for (std::int64_t ix = 0; ix < gx; ++ix) {
          if (!mask.channel[c][static_cast<std::size_t>((iz * gy + iy) * gx + ix)])
            continue;
          for (std::int64_t z = iz * pz; z < (iz + 1) * pz; ++z)
            for (std::int64_t y = iy * py; y < (iy + 1) * py; ++y) {
              std::uint8_t* row =
                  &out[static_cast<std::size_t>(c * vox + (z * cy + y) * cx +
                                                ix * px)];
              for (std::int64_t x = 0; x < px; ++x) row[x] = 1;
            }
        }
  }
  return out;
}

std::vector<double> impute_zero(const std::vector<double>& x,
                                const std::vector<std::uint8_t>& voxel_mask) {
  if (x.size() != voxel_mask.size())
    throw Error(ErrorCode::ShapeMismatch, "mask and data sizes differ");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = voxel_mask[i] ? 0.0 : x[i];
  return out;
}

std::vector<double> impute_token(const std::vector<double>& x,
                                 const std::vector<std::uint8_t>& voxel_mask,
                                 const std::array<double, 2>& tokens) {
  if (x.size() != voxel_mask.size() || x.size() % 2 != 0)
    throw Error(ErrorCode::ShapeMismatch, "mask and data sizes differ");
  const std::size_t half = x.size() / 2;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = voxel_mask[i] ? tokens[i < half ? 0 : 1] : x[i];
  return out;
}

TensorPtr impute_token_node(const std::vector<double>& x,
                            const std::vector<std::uint8_t>& voxel_mask,
                            const std::vector<std::int64_t>& shape,
                            const TensorPtr& tokens) {
  if (x.size() != voxel_mask.size())
    throw Error(ErrorCode::ShapeMismatch, "mask and data sizes differ");
  if (shape.size() != 5 || shape[1] != 2)
    throw Error(ErrorCode::ShapeMismatch, "shape must be [B, 2, Z, Y, X]");
  auto y = make_tensor(shape);
  if (y->size() != static_cast<std::int64_t>(x.size()))
    throw Error(ErrorCode::ShapeMismatch, "shape does not match the data");
  const std::int64_t vox = shape[2] * shape[3] * shape[4];
  const std::int64_t per_item = 2 * vox;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::int64_t ch = (static_cast<std::int64_t>(i) % per_item) / vox;
    y->values[i] =
        voxel_mask[i] ? tokens->values[static_cast<std::size_t>(ch)] : x[i];
  }
  y->parents = {tokens};
  y->needs_grad = tokens->requires_grad || tokens->needs_grad;
  TensorPtr tp = tokens;
  auto mk = std::make_shared<std::vector<std::uint8_t>>(voxel_mask);
  y->backward_fn = [tp, mk, vox, per_item](Tensor& out) {
    if (!(tp->requires_grad || tp->needs_grad)) return;
    tp->ensure_grad();
    for (std::size_t i = 0; i < out.grad.size(); ++i)
      if ((*mk)[i]) {
        const std::int64_t ch = (static_cast<std::int64_t>(i) % per_item) / vox;
        tp->grad[static_cast<std::size_t>(ch)] += out.grad[i];
      }
  };
  return y;
}

} // namespace petmae
