#include "petmae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "petmae/error.hpp"

namespace petmae {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool fg(double v) { return v > 0.5; }

std::int64_t count_fg(const Volume& m) {
  std::int64_t n = 0;
  for (double v : m.data) n += fg(v) ? 1 : 0;
  return n;
}

void check_pair(const Volume& a, const Volume& b) {
  if (a.channels != 1 || b.channels != 1 || a.nz != b.nz || a.ny != b.ny ||
      a.nx != b.nx)
    throw Error(ErrorCode::ShapeMismatch, "masks must be aligned single-channel");
}

// 1D squared distance transform (lower envelope of parabolas) with squared
// sample weight w2: d[i] = min_j ((i-j)^2 * w2 + f[j]).
void edt_1d(const double* f, double* d, std::int64_t n, double w2,
            std::int64_t* v, double* z) {
  auto intersect = [&](std::int64_t p, std::int64_t q) {
    return ((f[q] + static_cast<double>(q * q) * w2) -
            (f[p] + static_cast<double>(p * p) * w2)) /
           (2.0 * w2 * static_cast<double>(q - p));
  };

  std::int64_t k = -1; // envelope holds finite parabolas only
  for (std::int64_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s = intersect(v[k], q);
    while (k > 0 && s <= z[k]) {
      --k;
      s = intersect(v[k], q);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    for (std::int64_t q = 0; q < n; ++q) d[q] = kInf;
    return;
  }
  k = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const std::int64_t j = v[k];
    d[q] = static_cast<double>((q - j) * (q - j)) * w2 + f[j];
  }
}

// squared physical distance from every voxel centre to the nearest seed
std::vector<double> edt_3d(const std::vector<std::int64_t>& seeds,
                           std::int64_t nz, std::int64_t ny, std::int64_t nx,
                           const std::array<double, 3>& spacing) {
  std::vector<double> dist(static_cast<std::size_t>(nz * ny * nx), kInf);
  for (std::int64_t s : seeds) dist[static_cast<std::size_t>(s)] = 0.0;

  const std::int64_t nmax = std::max({nz, ny, nx});
  std::vector<double> f(static_cast<std::size_t>(nmax));
  std::vector<double> d(static_cast<std::size_t>(nmax));
  std::vector<std::int64_t> v(static_cast<std::size_t>(nmax));
  std::vector<double> z(static_cast<std::size_t>(nmax + 1));

  // pass order z, y, x matches the summation order of the brute-force
  // distance (dz2 + dy2) + dx2
  const double wz = spacing[0] * spacing[0];
  for (std::int64_t y = 0; y < ny; ++y)
    for (std::int64_t x = 0; x < nx; ++x) {
      for (std::int64_t zz = 0; zz < nz; ++zz)
        f[static_cast<std::size_t>(zz)] =
            dist[static_cast<std::size_t>((zz * ny + y) * nx + x)];
      edt_1d(f.data(), d.data(), nz, wz, v.data(), z.data());
      for (std::int64_t zz = 0; zz < nz; ++zz)
        dist[static_cast<std::size_t>((zz * ny + y) * nx + x)] =
            d[static_cast<std::size_t>(zz)];
    }

  const double wy = spacing[1] * spacing[1];
  for (std::int64_t zz = 0; zz < nz; ++zz)
    for (std::int64_t x = 0; x < nx; ++x) {
      for (std::int64_t y = 0; y < ny; ++y)
        f[static_cast<std::size_t>(y)] =
            dist[static_cast<std::size_t>((zz * ny + y) * nx + x)];
      edt_1d(f.data(), d.data(), ny, wy, v.data(), z.data());
      for (std::int64_t y = 0; y < ny; ++y)
        dist[static_cast<std::size_t>((zz * ny + y) * nx + x)] =
            d[static_cast<std::size_t>(y)];
    }

  const double wx = spacing[2] * spacing[2];
  for (std::int64_t zz = 0; zz < nz; ++zz)
    for (std::int64_t y = 0; y < ny; ++y) {
      double* row = &dist[static_cast<std::size_t>((zz * ny + y) * nx)];
      edt_1d(row, d.data(), nx, wx, v.data(), z.data());
      std::copy_n(d.data(), nx, row);
    }
  return dist;
}

double percentile95(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  const std::int64_t n = static_cast<std::int64_t>(values.size());
  // nearest-rank: ceil(0.95 n) computed exactly in integers
  const std::int64_t rank = (19 * n + 19) / 20;
  return values[static_cast<std::size_t>(rank - 1)];
}

} // namespace

double dice(const Volume& pred, const Volume& ref) {
  check_pair(pred, ref);
  std::int64_t np = 0, nr = 0, ni = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = fg(pred.data[i]), r = fg(ref.data[i]);
    np += p;
    nr += r;
    ni += p && r;
  }
  if (np == 0 && nr == 0) return 1.0;
  if (np == 0 || nr == 0) return 0.0;
  return 2.0 * static_cast<double>(ni) / static_cast<double>(np + nr);
}

std::vector<std::int64_t> surface_voxels(const Volume& mask) {
  if (mask.channels != 1)
    throw Error(ErrorCode::ShapeMismatch, "mask must be single-channel");
  std::vector<std::int64_t> out;
  const std::int64_t nz = mask.nz, ny = mask.ny, nx = mask.nx;
  for (std::int64_t z = 0; z < nz; ++z)
    for (std::int64_t y = 0; y < ny; ++y)
      for (std::int64_t x = 0; x < nx; ++x) {
        if (!fg(mask.at(0, z, y, x))) continue;
        const bool surface =
            z == 0 || z == nz - 1 || y == 0 || y == ny - 1 || x == 0 ||
            x == nx - 1 || !fg(mask.at(0, z - 1, y, x)) ||
            !fg(mask.at(0, z + 1, y, x)) || !fg(mask.at(0, z, y - 1, x)) ||
            !fg(mask.at(0, z, y + 1, x)) || !fg(mask.at(0, z, y, x - 1)) ||
            !fg(mask.at(0, z, y, x + 1));
        if (surface) out.push_back((z * ny + y) * nx + x);
      }
  return out;
}

double hd95(const Volume& pred, const Volume& ref,
            const std::array<double, 3>& spacing) {
  check_pair(pred, ref);
  const std::int64_t np = count_fg(pred), nr = count_fg(ref);
  if (np == 0 && nr == 0) return 0.0;
  if (np == 0 || nr == 0) {
    const double dz = static_cast<double>(pred.nz) * spacing[0];
    const double dy = static_cast<double>(pred.ny) * spacing[1];
    const double dx = static_cast<double>(pred.nx) * spacing[2];
    return std::sqrt(dz * dz + dy * dy + dx * dx);
  }

  const auto sp = surface_voxels(pred);
  const auto sr = surface_voxels(ref);
  const auto dist_to_ref = edt_3d(sr, pred.nz, pred.ny, pred.nx, spacing);
  const auto dist_to_pred = edt_3d(sp, pred.nz, pred.ny, pred.nx, spacing);

  std::vector<double> d_pr, d_rp;
  d_pr.reserve(sp.size());
  d_rp.reserve(sr.size());
  for (std::int64_t i : sp)
    d_pr.push_back(std::sqrt(dist_to_ref[static_cast<std::size_t>(i)]));
  for (std::int64_t i : sr)
    d_rp.push_back(std::sqrt(dist_to_pred[static_cast<std::size_t>(i)]));

  return std::max(percentile95(d_pr), percentile95(d_rp));
}

SegScore score_pair(const Volume& pred, const Volume& ref) {
  SegScore s;
  s.dice = dice(pred, ref);
  s.hd95_mm = hd95(pred, ref, ref.spacing);
  s.n_pred = count_fg(pred);
  s.n_ref = count_fg(ref);
  return s;
}

} // namespace petmae
