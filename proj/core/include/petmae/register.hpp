#ifndef PETMAE_REGISTER_HPP
#define PETMAE_REGISTER_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "petmae/volume.hpp"

namespace petmae {

/// Rigid map from reference physical space into moving sample space:
/// q = R(p - c) + c + t, with R the intrinsic Z-Y-X Euler rotation and c
/// the physical centre of the reference volume. apply_rigid pulls moving
/// values through this map onto the reference grid.
struct RigidTransform {
  std::array<double, 3> rotation{0.0, 0.0, 0.0};    // (rx, ry, rz) radians
  std::array<double, 3> translation{0.0, 0.0, 0.0}; // (tz, ty, tx) mm
};

struct MiConfig {
  std::int64_t bins = 32;
  std::int64_t max_iters = 50; // sweeps per schedule level
  // (translation step mm, rotation step rad), coarse to fine
  std::vector<std::array<double, 2>> step_schedule{
      {4.0, 0.04}, {1.0, 0.01}, {0.25, 0.0025}};
};

/// Shannon mutual information in nats over a bins x bins joint histogram of
/// min-max-scaled intensities. Either image constant -> 0.
double mutual_information(const Volume& fixed, const Volume& moving,
                          std::int64_t bins = 32);

Volume apply_rigid(const Volume& moving, const RigidTransform& t,
                   const Volume& reference);

/// Accept-improving coordinate descent over the 6 rigid parameters,
/// coarse-to-fine per the step schedule. The result never has lower MI
/// than the identity resample.
RigidTransform rigid_register(const Volume& fixed, const Volume& moving,
                              const MiConfig& cfg = {});

} // namespace petmae

#endif
