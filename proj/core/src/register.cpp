#include "petmae/register.hpp"

#include <algorithm>
#include <cmath>

#include "petmae/error.hpp"

namespace petmae {

namespace {

struct Range {
  double lo, span;
  bool constant;
};

Range intensity_range(const Volume& v) {
  auto [mn, mx] = std::minmax_element(v.data.begin(), v.data.end());
  Range r;
  r.lo = *mn;
  r.span = *mx - *mn;
  r.constant = r.span <= 0.0;
  return r;
}

// row-major 3x3 acting on physical (px, py, pz)
using Mat3 = std::array<double, 9>;

Mat3 euler_zyx(const std::array<double, 3>& rot) {
  const double cx = std::cos(rot[0]), sx = std::sin(rot[0]);
  const double cy = std::cos(rot[1]), sy = std::sin(rot[1]);
  const double cz = std::cos(rot[2]), sz = std::sin(rot[2]);
  // intrinsic Z-Y-X: R = Rz * Ry * Rx
  return {cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx,
          sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx,
          -sy,     cy * sx,                cy * cx};
}

} // namespace

double mutual_information(const Volume& fixed, const Volume& moving,
                          std::int64_t bins) {
  if (fixed.channels != 1 || moving.channels != 1 || !fixed.same_grid(moving))
    throw Error(ErrorCode::ShapeMismatch,
                "MI requires two voxel-aligned single-channel volumes");
  if (bins < 2) throw Error(ErrorCode::BadConfig, "bins must be >= 2");

  const Range rf = intensity_range(fixed);
  const Range rm = intensity_range(moving);
  if (rf.constant || rm.constant) return 0.0;

  const std::int64_t n = fixed.voxels_per_channel();
  std::vector<std::int64_t> joint(static_cast<std::size_t>(bins * bins), 0);
  for (std::int64_t i = 0; i < n; ++i) {
    auto bin = [bins](double v, const Range& r) {
      auto b = static_cast<std::int64_t>((v - r.lo) / r.span *
                                         static_cast<double>(bins));
      return std::min(b, bins - 1);
    };
    joint[static_cast<std::size_t>(
        bin(fixed.data[static_cast<std::size_t>(i)], rf) * bins +
        bin(moving.data[static_cast<std::size_t>(i)], rm))] += 1;
  }

  std::vector<std::int64_t> pa(static_cast<std::size_t>(bins), 0);
  std::vector<std::int64_t> pb(static_cast<std::size_t>(bins), 0);
  for (std::int64_t a = 0; a < bins; ++a)
    for (std::int64_t b = 0; b < bins; ++b) {
      pa[static_cast<std::size_t>(a)] += joint[static_cast<std::size_t>(a * bins + b)];
      pb[static_cast<std::size_t>(b)] += joint[static_cast<std::size_t>(a * bins + b)];
    }

  const double inv_n = 1.0 / static_cast<double>(n);
  double mi = 0.0;
  for (std::int64_t a = 0; a < bins; ++a)
    for (std::int64_t b = 0; b < bins; ++b) {
      const std::int64_t c = joint[static_cast<std::size_t>(a * bins + b)];
      if (c == 0) continue; // 0 * ln 0 := 0
      const double pab = static_cast<double>(c) * inv_n;
      const double marg = static_cast<double>(pa[static_cast<std::size_t>(a)]) *
                          static_cast<double>(pb[static_cast<std::size_t>(b)]) *
                          inv_n * inv_n;
      mi += pab * std::log(pab / marg);
    }
  return mi;
}

Volume apply_rigid(const Volume& moving, const RigidTransform& t,
                   const Volume& reference) {
  const Mat3 r = euler_zyx(t.rotation);
  // physical centre of the reference volume
  const std::array<double, 3> c{
      reference.origin[0] +
          0.5 * static_cast<double>(reference.nz - 1) * reference.spacing[0],
      reference.origin[1] +
          0.5 * static_cast<double>(reference.ny - 1) * reference.spacing[1],
      reference.origin[2] +
          0.5 * static_cast<double>(reference.nx - 1) * reference.spacing[2]};

  Volume out(moving.channels, reference.nz, reference.ny, reference.nx,
             reference.spacing, reference.origin);
  out.labels = moving.labels;

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t ch = 0; ch < moving.channels; ++ch)
    for (std::int64_t z = 0; z < reference.nz; ++z)
      for (std::int64_t y = 0; y < reference.ny; ++y)
        for (std::int64_t x = 0; x < reference.nx; ++x) {
          const double pz = reference.origin[0] +
                            static_cast<double>(z) * reference.spacing[0] - c[0];
          const double py = reference.origin[1] +
                            static_cast<double>(y) * reference.spacing[1] - c[1];
          const double px = reference.origin[2] +
                            static_cast<double>(x) * reference.spacing[2] - c[2];
          const double qx = r[0] * px + r[1] * py + r[2] * pz + c[2] +
                            t.translation[2];
          const double qy = r[3] * px + r[4] * py + r[5] * pz + c[1] +
                            t.translation[1];
          const double qz = r[6] * px + r[7] * py + r[8] * pz + c[0] +
                            t.translation[0];
          out.at(ch, z, y, x) = moving.sample_trilinear(
              ch, (qz - moving.origin[0]) / moving.spacing[0],
              (qy - moving.origin[1]) / moving.spacing[1],
              (qx - moving.origin[2]) / moving.spacing[2]);
        }
  return out;
}

RigidTransform rigid_register(const Volume& fixed, const Volume& moving,
                              const MiConfig& cfg) {
  if (intensity_range(fixed).constant || intensity_range(moving).constant)
    throw Error(ErrorCode::ConstantImage,
                "registration needs intensity contrast in both images");

  RigidTransform best;
  double best_mi =
      mutual_information(fixed, apply_rigid(moving, best, fixed), cfg.bins);

  auto param = [](RigidTransform& t, int i) -> double& {
    return i < 3 ? t.rotation[static_cast<std::size_t>(i)]
                 : t.translation[static_cast<std::size_t>(i - 3)];
  };

  for (const auto& [t_step, r_step] : cfg.step_schedule) {
    for (std::int64_t sweep = 0; sweep < cfg.max_iters; ++sweep) {
      bool improved = false;
      for (int i = 0; i < 6; ++i) {
        const double step = i < 3 ? r_step : t_step;
        for (double sign : {+1.0, -1.0}) {
          RigidTransform cand = best;
          param(cand, i) += sign * step;
          const double mi = mutual_information(
              fixed, apply_rigid(moving, cand, fixed), cfg.bins);
          if (mi > best_mi) {
            best_mi = mi;
            best = cand;
            improved = true;
          }
        }
      }
      if (!improved) break;
    }
  }
  return best;
}

} // namespace petmae
