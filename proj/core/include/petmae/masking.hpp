#ifndef PETMAE_MASKING_HPP
#define PETMAE_MASKING_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "petmae/rng.hpp"
#include "petmae/tensor.hpp"

namespace petmae {

/// Non-overlapping 3D patch partition of a crop. The patch shape must tile
/// the crop exactly on every axis.
struct PatchGrid {
  std::array<std::int64_t, 3> crop_shape{};  // (Z, Y, X) voxels
  std::array<std::int64_t, 3> patch_shape{}; // (pz, py, px) voxels
  std::array<std::int64_t, 3> counts{};      // patches per axis
  std::int64_t total = 0;

  std::int64_t patch_voxels() const {
    return patch_shape[0] * patch_shape[1] * patch_shape[2];
  }
};

/// Per-channel patch mask for the fixed channel pair {CT, PET}; exactly
/// round(ratio * P) patches are set in each channel, sampled independently.
struct PatchMask {
  std::array<std::vector<std::uint8_t>, 2> channel; // bit per patch
  double ratio = 0.0;
  std::uint64_t seed = 0;
};

PatchGrid make_grid(const std::array<std::int64_t, 3>& crop_shape,
                    const std::array<std::int64_t, 3>& patch_shape);

/// CT and PET draws use independent sub-streams derived from the seed
/// (stream 0 for CT, stream 1 for PET).
PatchMask sample_mask(const PatchGrid& grid, double ratio, std::uint64_t seed);

/// Expand a patch mask to a voxel mask over [2][Z][Y][X] (x fastest,
/// channel outermost); 1 marks a masked voxel.
std::vector<std::uint8_t> expand_mask(const PatchMask& mask,
                                      const PatchGrid& grid);

/// Zero-mean imputation: visible voxels are copied bit-exactly, masked
/// voxels become exactly 0.
std::vector<double> impute_zero(const std::vector<double>& x,
                                const std::vector<std::uint8_t>& voxel_mask);

/// Learnable-token baseline: masked voxels of channel c become tokens[c].
/// x is laid out [2][Z][Y][X] with equal channel halves.
std::vector<double> impute_token(const std::vector<double>& x,
                                 const std::vector<std::uint8_t>& voxel_mask,
                                 const std::array<double, 2>& tokens);

/// Graph-node variant for training the tokens: shape is [B, 2, Z, Y, X]
/// and each token's gradient is the upstream gradient summed over the
/// masked voxels of its channel.
TensorPtr impute_token_node(const std::vector<double>& x,
                            const std::vector<std::uint8_t>& voxel_mask,
                            const std::vector<std::int64_t>& shape,
                            const TensorPtr& tokens);

} // namespace petmae

#endif
