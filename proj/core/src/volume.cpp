#include "petmae/volume.hpp"

#include <algorithm>
#include <cmath>

#include "petmae/error.hpp"

namespace petmae {

const char* channel_label_name(ChannelLabel label) {
  switch (label) {
    case ChannelLabel::CT: return "CT";
    case ChannelLabel::PET: return "PET";
    case ChannelLabel::GENERIC: return "GENERIC";
  }
  return "GENERIC";
}

Volume::Volume(std::int64_t c, std::int64_t z, std::int64_t y, std::int64_t x,
               std::array<double, 3> sp, std::array<double, 3> org,
               ChannelLabel label)
    : data(static_cast<std::size_t>(c * z * y * x), 0.0),
      channels(c), nz(z), ny(y), nx(x), spacing(sp), origin(org),
      labels(static_cast<std::size_t>(c), label) {}

double Volume::sample_trilinear(std::int64_t c, double z, double y,
                                double x) const {
  // clamp-to-edge: continuous coordinates are clamped to [0, n-1]
  auto clampf = [](double v, double hi) {
    return v < 0.0 ? 0.0 : (v > hi ? hi : v);
  };
  z = clampf(z, static_cast<double>(nz - 1));
  y = clampf(y, static_cast<double>(ny - 1));
  x = clampf(x, static_cast<double>(nx - 1));

  std::int64_t z0 = static_cast<std::int64_t>(std::floor(z));
  std::int64_t y0 = static_cast<std::int64_t>(std::floor(y));
  std::int64_t x0 = static_cast<std::int64_t>(std::floor(x));
  std::int64_t z1 = std::min(z0 + 1, nz - 1);
  std::int64_t y1 = std::min(y0 + 1, ny - 1);
  std::int64_t x1 = std::min(x0 + 1, nx - 1);
  double fz = z - static_cast<double>(z0);
  double fy = y - static_cast<double>(y0);
  double fx = x - static_cast<double>(x0);

  double c000 = at(c, z0, y0, x0), c001 = at(c, z0, y0, x1);
  double c010 = at(c, z0, y1, x0), c011 = at(c, z0, y1, x1);
  double c100 = at(c, z1, y0, x0), c101 = at(c, z1, y0, x1);
  double c110 = at(c, z1, y1, x0), c111 = at(c, z1, y1, x1);

  double c00 = c000 + (c001 - c000) * fx;
  double c01 = c010 + (c011 - c010) * fx;
  double c10 = c100 + (c101 - c100) * fx;
  double c11 = c110 + (c111 - c110) * fx;
  double c0 = c00 + (c01 - c00) * fy;
  double c1 = c10 + (c11 - c10) * fy;
  return c0 + (c1 - c0) * fz;
}

std::vector<Volume> crop_blank_boundary(const Volume& ct,
                                        const std::vector<Volume>& companions,
                                        double threshold_hu,
                                        std::int64_t margin_voxels) {
  for (const Volume& v : companions) {
    if (!v.same_grid(ct))
      throw Error(ErrorCode::ShapeMismatch,
                  "companion volume is not voxel-aligned with the CT");
  }

  std::int64_t z0 = ct.nz, z1 = -1, y0 = ct.ny, y1 = -1, x0 = ct.nx, x1 = -1;
  for (std::int64_t z = 0; z < ct.nz; ++z)
    for (std::int64_t y = 0; y < ct.ny; ++y)
      for (std::int64_t x = 0; x < ct.nx; ++x)
        if (ct.at(0, z, y, x) > threshold_hu) {
          z0 = std::min(z0, z); z1 = std::max(z1, z);
          y0 = std::min(y0, y); y1 = std::max(y1, y);
          x0 = std::min(x0, x); x1 = std::max(x1, x);
        }
  if (z1 < 0)
    throw Error(ErrorCode::AllBlank, "no CT voxel exceeds the threshold");

  z0 = std::max<std::int64_t>(0, z0 - margin_voxels);
  y0 = std::max<std::int64_t>(0, y0 - margin_voxels);
  x0 = std::max<std::int64_t>(0, x0 - margin_voxels);
  z1 = std::min(ct.nz - 1, z1 + margin_voxels);
  y1 = std::min(ct.ny - 1, y1 + margin_voxels);
  x1 = std::min(ct.nx - 1, x1 + margin_voxels);

  std::array<std::int64_t, 3> corner{z0, y0, x0};
  std::array<std::int64_t, 3> shape{z1 - z0 + 1, y1 - y0 + 1, x1 - x0 + 1};

  std::vector<Volume> out;
  out.reserve(companions.size() + 1);
  out.push_back(crop_at(ct, corner, shape));
  for (const Volume& v : companions) out.push_back(crop_at(v, corner, shape));
  return out;
}

Volume resample_trilinear(const Volume& v,
                          const std::array<double, 3>& target_spacing) {
  for (double s : target_spacing)
    if (!(s > 0.0) || !std::isfinite(s))
      throw Error(ErrorCode::InvalidSpacing, "target spacing must be finite and > 0");

  const std::array<std::int64_t, 3> in_ext{v.nz, v.ny, v.nx};
  std::array<std::int64_t, 3> out_ext;
  for (int a = 0; a < 3; ++a) {
    double n = static_cast<double>(in_ext[a]) * v.spacing[a] / target_spacing[a];
    out_ext[a] = std::max<std::int64_t>(1, std::llround(n));
  }

  Volume out(v.channels, out_ext[0], out_ext[1], out_ext[2], target_spacing,
             v.origin);
  out.labels = v.labels;
  // Volume edges stay aligned: output centre k sits at physical
  // (k + 0.5) * out_spacing - 0.5 * in_spacing relative to the input's
  // first voxel centre.
  for (int a = 0; a < 3; ++a)
    out.origin[a] = v.origin[a] + 0.5 * (target_spacing[a] - v.spacing[a]);

  const bool identity = (out_ext == in_ext && target_spacing == v.spacing);
  if (identity) {
    out.data = v.data;
    return out;
  }

  std::array<double, 3> scale;
  std::array<double, 3> shift;
  for (int a = 0; a < 3; ++a) {
    scale[a] = target_spacing[a] / v.spacing[a];
    shift[a] = 0.5 * scale[a] - 0.5;
  }

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t c = 0; c < out.channels; ++c)
    for (std::int64_t z = 0; z < out.nz; ++z) {
      double zc = static_cast<double>(z) * scale[0] + shift[0];
      for (std::int64_t y = 0; y < out.ny; ++y) {
        double yc = static_cast<double>(y) * scale[1] + shift[1];
        for (std::int64_t x = 0; x < out.nx; ++x) {
          double xc = static_cast<double>(x) * scale[2] + shift[2];
          out.at(c, z, y, x) = v.sample_trilinear(c, zc, yc, xc);
        }
      }
    }
  return out;
}

NormStats compute_norm_stats(const Volume& v, std::int64_t channel) {
  if (channel < 0 || channel >= v.channels)
    throw Error(ErrorCode::ShapeMismatch, "channel index out of range");
  const std::int64_t n = v.voxels_per_channel();
  const double* p = v.data.data() + channel * n;
  double sum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) sum += p[i];
  double mu = sum / static_cast<double>(n);
  double sq = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    double d = p[i] - mu;
    sq += d * d;
  }
  NormStats stats;
  stats.mu = mu;
  stats.sigma = std::sqrt(sq / static_cast<double>(n));
  return stats;
}

Volume zscore_normalize(const Volume& v, double epsilon) {
  Volume out = v;
  const std::int64_t n = v.voxels_per_channel();
  for (std::int64_t c = 0; c < v.channels; ++c) {
    NormStats stats = compute_norm_stats(v, c);
    double denom = std::max(stats.sigma, epsilon);
    double* p = out.data.data() + c * n;
    for (std::int64_t i = 0; i < n; ++i) p[i] = (p[i] - stats.mu) / denom;
  }
  return out;
}

Volume concat_channels(const Volume& ct, const Volume& pet) {
  if (ct.channels != 1 || pet.channels != 1 || !ct.same_grid(pet))
    throw Error(ErrorCode::ShapeMismatch,
                "concat requires two aligned single-channel volumes");
  if (ct.labels[0] != ChannelLabel::CT || pet.labels[0] != ChannelLabel::PET)
    throw Error(ErrorCode::LabelMismatch, "expected CT then PET");

  Volume out(2, ct.nz, ct.ny, ct.nx, ct.spacing, ct.origin);
  std::copy(ct.data.begin(), ct.data.end(), out.data.begin());
  std::copy(pet.data.begin(), pet.data.end(),
            out.data.begin() + ct.voxels_per_channel());
  out.labels = {ChannelLabel::CT, ChannelLabel::PET};
  return out;
}

std::vector<Volume> split_channels(const Volume& v) {
  std::vector<Volume> out;
  out.reserve(v.channels);
  const std::int64_t n = v.voxels_per_channel();
  for (std::int64_t c = 0; c < v.channels; ++c) {
    Volume single(1, v.nz, v.ny, v.nx, v.spacing, v.origin, v.labels[c]);
    std::copy(v.data.begin() + c * n, v.data.begin() + (c + 1) * n,
              single.data.begin());
    out.push_back(std::move(single));
  }
  return out;
}

Volume crop_at(const Volume& v, const std::array<std::int64_t, 3>& corner,
               const std::array<std::int64_t, 3>& shape) {
  const std::array<std::int64_t, 3> ext{v.nz, v.ny, v.nx};
  for (int a = 0; a < 3; ++a)
    if (corner[a] < 0 || shape[a] < 1 || corner[a] + shape[a] > ext[a])
      throw Error(ErrorCode::ShapeMismatch, "crop box outside volume");

  Volume out(v.channels, shape[0], shape[1], shape[2], v.spacing, v.origin);
  out.labels = v.labels;
  for (int a = 0; a < 3; ++a)
    out.origin[a] = v.origin[a] + static_cast<double>(corner[a]) * v.spacing[a];
  for (std::int64_t c = 0; c < v.channels; ++c)
    for (std::int64_t z = 0; z < shape[0]; ++z)
      for (std::int64_t y = 0; y < shape[1]; ++y) {
        const double* src =
            &v.data[(((c * v.nz + corner[0] + z) * v.ny + corner[1] + y) *
                     v.nx) + corner[2]];
        double* dst = &out.at(c, z, y, 0);
        std::copy(src, src + shape[2], dst);
      }
  return out;
}

Volume pad_to_min(const Volume& v, const std::array<std::int64_t, 3>& min_shape) {
  const std::array<std::int64_t, 3> ext{v.nz, v.ny, v.nx};
  std::array<std::int64_t, 3> before{0, 0, 0}, total{0, 0, 0};
  bool any = false;
  for (int a = 0; a < 3; ++a) {
    std::int64_t deficit = std::max<std::int64_t>(0, min_shape[a] - ext[a]);
    before[a] = deficit / 2;
    total[a] = deficit;
    any = any || deficit > 0;
  }
  if (!any) return v;

  Volume out(v.channels, ext[0] + total[0], ext[1] + total[1], ext[2] + total[2],
             v.spacing, v.origin);
  out.labels = v.labels;
  for (int a = 0; a < 3; ++a)
    out.origin[a] = v.origin[a] - static_cast<double>(before[a]) * v.spacing[a];
  for (std::int64_t c = 0; c < v.channels; ++c)
    for (std::int64_t z = 0; z < v.nz; ++z)
      for (std::int64_t y = 0; y < v.ny; ++y) {
        const double* src = &v.at(c, z, y, 0);
        double* dst = &out.at(c, z + before[0], y + before[1], before[2]);
        std::copy(src, src + v.nx, dst);
      }
  return out;
}

std::array<std::int64_t, 3> random_crop_corner(
    const std::array<std::int64_t, 3>& extents,
    const std::array<std::int64_t, 3>& crop_shape, Rng& rng) {
  std::array<std::int64_t, 3> corner;
  for (int a = 0; a < 3; ++a) {
    std::int64_t slack = extents[a] - crop_shape[a];
    corner[a] = slack > 0
                    ? static_cast<std::int64_t>(
                          rng.next_below(static_cast<std::uint64_t>(slack + 1)))
                    : 0;
  }
  return corner;
}

Volume random_crop(const Volume& v, const std::array<std::int64_t, 3>& crop_shape,
                   Rng& rng) {
  Volume padded = pad_to_min(v, crop_shape);
  auto corner = random_crop_corner({padded.nz, padded.ny, padded.nx},
                                   crop_shape, rng);
  return crop_at(padded, corner, crop_shape);
}

} // namespace petmae
