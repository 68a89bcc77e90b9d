#ifndef PETMAE_METRICS_HPP
#define PETMAE_METRICS_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "petmae/volume.hpp"

namespace petmae {

struct SegScore {
  double dice = 0.0;
  double hd95_mm = 0.0;
  std::int64_t n_pred = 0;
  std::int64_t n_ref = 0;
};

/// 2|P∩R| / (|P|+|R|); both masks empty gives 1, exactly one empty gives 0.
/// Masks are single-channel volumes, any value > 0.5 counts as foreground.
double dice(const Volume& pred, const Volume& ref);

/// Flat indices of foreground voxels with at least one 6-connected
/// background neighbour; foreground on the volume border is surface.
std::vector<std::int64_t> surface_voxels(const Volume& mask);

/// Symmetric 95th-percentile surface distance in mm (nearest-rank
/// percentile, anisotropic voxel-centre distances). Both empty -> 0;
/// exactly one empty -> the physical volume diagonal.
double hd95(const Volume& pred, const Volume& ref,
            const std::array<double, 3>& spacing);

SegScore score_pair(const Volume& pred, const Volume& ref);

} // namespace petmae

#endif
