#ifndef PETMAE_VOLUME_HPP
#define PETMAE_VOLUME_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "petmae/rng.hpp"

namespace petmae {

enum class ChannelLabel { CT, PET, GENERIC };

const char* channel_label_name(ChannelLabel label);

/// Per-channel z-score statistics. sigma is the population standard
/// deviation (divide by N); epsilon guards the division for flat channels.
struct NormStats {
  double mu = 0.0;
  double sigma = 0.0;
  double epsilon = 1e-8;
};

/// Multi-channel 3D scalar grid in physical space. Data is stored
/// [channel][z][y][x] with x fastest; spacing and origin are in mm and
/// refer to voxel centres, axis order (z, y, x). origin is the physical
/// position of the centre of voxel (0,0,0).
struct Volume {
  std::vector<double> data;
  std::int64_t channels = 0;
  std::int64_t nz = 0, ny = 0, nx = 0;
  std::array<double, 3> spacing{1.0, 1.0, 1.0}; // (sz, sy, sx) mm
  std::array<double, 3> origin{0.0, 0.0, 0.0};  // (oz, oy, ox) mm
  std::vector<ChannelLabel> labels;

  Volume() = default;
  Volume(std::int64_t c, std::int64_t z, std::int64_t y, std::int64_t x,
         std::array<double, 3> sp = {1.0, 1.0, 1.0},
         std::array<double, 3> org = {0.0, 0.0, 0.0},
         ChannelLabel label = ChannelLabel::GENERIC);

  std::int64_t voxels_per_channel() const { return nz * ny * nx; }
  std::int64_t size() const { return channels * voxels_per_channel(); }

  double& at(std::int64_t c, std::int64_t z, std::int64_t y, std::int64_t x) {
    return data[((c * nz + z) * ny + y) * nx + x];
  }
  const double& at(std::int64_t c, std::int64_t z, std::int64_t y,
                   std::int64_t x) const {
    return data[((c * nz + z) * ny + y) * nx + x];
  }

  bool same_grid(const Volume& other) const {
    return nz == other.nz && ny == other.ny && nx == other.nx &&
           spacing == other.spacing;
  }

  /// Trilinear sample at a continuous voxel index (z, y, x) of one channel,
  /// clamp-to-edge outside the grid.
  double sample_trilinear(std::int64_t c, double z, double y, double x) const;
};

/// Tight bounding box of CT voxels above threshold_hu, dilated by
/// margin_voxels and clamped, applied identically to ct and all companions.
std::vector<Volume> crop_blank_boundary(const Volume& ct,
                                        const std::vector<Volume>& companions,
                                        double threshold_hu,
                                        std::int64_t margin_voxels);

/// Resample onto a grid with the given voxel spacing. Output extents are
/// max(1, round(extent * in_spacing / out_spacing)) per axis; the physical
/// field of view is preserved (volume edges stay aligned) and samples are
/// trilinear with clamp-to-edge borders.
Volume resample_trilinear(const Volume& v,
                          const std::array<double, 3>& target_spacing);

NormStats compute_norm_stats(const Volume& v, std::int64_t channel);

/// Per-channel z-score: (x - mu) / max(sigma, epsilon), each channel with
/// its own statistics.
Volume zscore_normalize(const Volume& v, double epsilon = 1e-8);

/// Stack CT and PET into one 2-channel volume, channel 0 = CT, 1 = PET.
Volume concat_channels(const Volume& ct, const Volume& pet);

/// Inverse of concat_channels: one single-channel volume per input channel.
std::vector<Volume> split_channels(const Volume& v);

/// Extract a crop at a fixed corner (all channels). Origin is advanced by
/// corner * spacing.
Volume crop_at(const Volume& v, const std::array<std::int64_t, 3>& corner,
               const std::array<std::int64_t, 3>& shape);

/// Symmetric zero-pad up to at least min_shape per axis (no-op on axes that
/// already fit). Origin moves back by the leading pad.
Volume pad_to_min(const Volume& v, const std::array<std::int64_t, 3>& min_shape);

/// Uniformly random corner crop; volumes smaller than the crop are
/// symmetrically zero-padded first.
Volume random_crop(const Volume& v, const std::array<std::int64_t, 3>& crop_shape,
                   Rng& rng);

/// Same random corner applied to a voxel-aligned pair (image + label).
std::array<std::int64_t, 3> random_crop_corner(
    const std::array<std::int64_t, 3>& extents,
    const std::array<std::int64_t, 3>& crop_shape, Rng& rng);

} // namespace petmae

#endif
