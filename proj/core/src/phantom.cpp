#include "petmae/phantom.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "petmae/error.hpp"
#include "petmae/nifti_io.hpp"

namespace petmae {

namespace {

// separable 3-tap [0.25, 0.5, 0.25] blur, clamp-to-edge, `passes` rounds
void blur3(std::vector<double>& f, std::int64_t nz, std::int64_t ny,
           std::int64_t nx, int passes) {
  std::vector<double> tmp(f.size());
  auto idx = [ny, nx](std::int64_t z, std::int64_t y, std::int64_t x) {
    return static_cast<std::size_t>((z * ny + y) * nx + x);
  };
  for (int pass = 0; pass < passes; ++pass) {
    for (std::int64_t z = 0; z < nz; ++z)
      for (std::int64_t y = 0; y < ny; ++y)
        for (std::int64_t x = 0; x < nx; ++x) {
          const std::int64_t zm = std::max<std::int64_t>(0, z - 1);
          const std::int64_t zp = std::min(nz - 1, z + 1);
          tmp[idx(z, y, x)] = 0.25 * f[idx(zm, y, x)] + 0.5 * f[idx(z, y, x)] +
                              0.25 * f[idx(zp, y, x)];
        }
    for (std::int64_t z = 0; z < nz; ++z)
      for (std::int64_t y = 0; y < ny; ++y)
        for (std::int64_t x = 0; x < nx; ++x) {
          const std::int64_t ym = std::max<std::int64_t>(0, y - 1);
          const std::int64_t yp = std::min(ny - 1, y + 1);
          f[idx(z, y, x)] = 0.25 * tmp[idx(z, ym, x)] + 0.5 * tmp[idx(z, y, x)] +
                            0.25 * tmp[idx(z, yp, x)];
        }
    for (std::int64_t z = 0; z < nz; ++z)
      for (std::int64_t y = 0; y < ny; ++y)
        for (std::int64_t x = 0; x < nx; ++x) {
          const std::int64_t xm = std::max<std::int64_t>(0, x - 1);
          const std::int64_t xp = std::min(nx - 1, x + 1);
          tmp[idx(z, y, x)] = 0.25 * f[idx(z, y, xm)] + 0.5 * f[idx(z, y, x)] +
                              0.25 * f[idx(z, y, xp)];
        }
    std::swap(f, tmp);
  }
}

// z-score a field over the voxels where mask is set; others untouched
void standardize_inside(std::vector<double>& f,
                        const std::vector<std::uint8_t>& mask) {
  double sum = 0.0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (mask[i]) {
      sum += f[i];
      ++n;
    }
  if (n == 0) return;
  const double mu = sum / static_cast<double>(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (mask[i]) {
      const double d = f[i] - mu;
      sq += d * d;
    }
  const double sigma = std::sqrt(sq / static_cast<double>(n));
  const double denom = std::max(sigma, 1e-12);
  for (std::size_t i = 0; i < f.size(); ++i)
    if (mask[i]) f[i] = (f[i] - mu) / denom;
}

} // namespace

Phantom generate_phantom(const PhantomConfig& cfg, std::uint64_t seed) {
  const auto [nz, ny, nx] = cfg.shape;
  if (nz < 8 || ny < 8 || nx < 8)
    throw Error(ErrorCode::BadConfig, "phantom shape too small");
  if (cfg.rho < 0.0 || cfg.rho > 1.0)
    throw Error(ErrorCode::BadConfig, "rho must lie in [0, 1]");
  if (cfg.lesion_radius_min_mm <= 0.0 ||
      cfg.lesion_radius_max_mm < cfg.lesion_radius_min_mm)
    throw Error(ErrorCode::BadConfig, "bad lesion radius range");

  const std::int64_t nvox = nz * ny * nx;
  Rng shape_rng(Rng::derive(seed, 0));
  Rng ct_noise_rng(Rng::derive(seed, 1));
  Rng pet_noise_rng(Rng::derive(seed, 2));
  Rng lesion_rng(Rng::derive(seed, 3));

  // body ellipsoid, centred, semi-axes jittered a few percent per seed
  const std::array<double, 3> center{0.5 * static_cast<double>(nz - 1),
                                     0.5 * static_cast<double>(ny - 1),
                                     0.5 * static_cast<double>(nx - 1)};
  const std::array<double, 3> semi{
      (0.38 + 0.04 * shape_rng.next_uniform()) * static_cast<double>(nz),
      (0.38 + 0.04 * shape_rng.next_uniform()) * static_cast<double>(ny),
      (0.38 + 0.04 * shape_rng.next_uniform()) * static_cast<double>(nx)};

  std::vector<double> u(static_cast<std::size_t>(nvox)); // normalized radius
  std::vector<std::uint8_t> body(static_cast<std::size_t>(nvox), 0);
  for (std::int64_t z = 0; z < nz; ++z)
    for (std::int64_t y = 0; y < ny; ++y)
      for (std::int64_t x = 0; x < nx; ++x) {
        const double dz = (static_cast<double>(z) - center[0]) / semi[0];
        const double dy = (static_cast<double>(y) - center[1]) / semi[1];
        const double dx = (static_cast<double>(x) - center[2]) / semi[2];
        const double r = std::sqrt(dz * dz + dy * dy + dx * dx);
        const std::size_t i = static_cast<std::size_t>((z * ny + y) * nx + x);
        u[i] = r;
        body[i] = r < 1.0 ? 1 : 0;
      }

  Volume ct(1, nz, ny, nx, cfg.spacing, {0, 0, 0}, ChannelLabel::CT);
  std::vector<double> ct_noise(static_cast<std::size_t>(nvox));
  for (double& v : ct_noise) v = ct_noise_rng.next_normal();
  blur3(ct_noise, nz, ny, nx, 1);
  for (std::int64_t i = 0; i < nvox; ++i) {
    const std::size_t s = static_cast<std::size_t>(i);
    if (!body[s]) {
      ct.data[s] = cfg.air_hu;
    } else if (u[s] >= 0.92) {
      ct.data[s] = cfg.bone_hu;
    } else {
      ct.data[s] = cfg.body_hu + cfg.body_hu_noise * ct_noise[s];
    }
  }

  // PET background: rho-weighted blend of a CT-morphology field and an
  // independent smooth field, both standardized inside the body
  std::vector<double> morph(body.begin(), body.end());
  blur3(morph, nz, ny, nx, 6);
  standardize_inside(morph, body);

  std::vector<double> indep(static_cast<std::size_t>(nvox));
  for (double& v : indep) v = pet_noise_rng.next_normal();
  blur3(indep, nz, ny, nx, 3);
  standardize_inside(indep, body);

  Volume pet(1, nz, ny, nx, cfg.spacing, {0, 0, 0}, ChannelLabel::PET);
  for (std::int64_t i = 0; i < nvox; ++i) {
    const std::size_t s = static_cast<std::size_t>(i);
    pet.data[s] = body[s]
                      ? cfg.pet_background +
                            cfg.pet_background_noise *
                                (cfg.rho * morph[s] + (1.0 - cfg.rho) * indep[s])
                      : 0.0;
  }

  // hot lesions, wholly inside the body
  Volume labels(1, nz, ny, nx, cfg.spacing, {0, 0, 0}, ChannelLabel::GENERIC);
  Phantom out;
  if (cfg.lesions_enabled) {
    const std::int64_t count =
        cfg.lesion_count_min +
        static_cast<std::int64_t>(lesion_rng.next_below(static_cast<std::uint64_t>(
            cfg.lesion_count_max - cfg.lesion_count_min + 1)));
    for (std::int64_t l = 0; l < count; ++l) {
      const double radius_mm = lesion_rng.next_uniform(
          cfg.lesion_radius_min_mm, cfg.lesion_radius_max_mm);
      const double uptake =
          lesion_rng.next_uniform(cfg.lesion_uptake_min, cfg.lesion_uptake_max);

      // rejection-sample a centre whose sphere stays inside u < 0.9
      std::array<double, 3> c{};
      bool placed = false;
      for (int attempt = 0; attempt < 256 && !placed; ++attempt) {
        const std::array<double, 3> cand{
            lesion_rng.next_uniform(0.0, static_cast<double>(nz - 1)),
            lesion_rng.next_uniform(0.0, static_cast<double>(ny - 1)),
            lesion_rng.next_uniform(0.0, static_cast<double>(nx - 1))};
        // conservative check: normalized radius of the centre plus the
        // lesion radius expressed in normalized units per axis
        const double dz = (cand[0] - center[0]) / semi[0];
        const double dy = (cand[1] - center[1]) / semi[1];
        const double dx = (cand[2] - center[2]) / semi[2];
        const double rc = std::sqrt(dz * dz + dy * dy + dx * dx);
        const double worst_axis = std::min(
            {semi[0] * cfg.spacing[0], semi[1] * cfg.spacing[1],
             semi[2] * cfg.spacing[2]});
        if (rc + radius_mm / worst_axis < 0.9) {
          c = cand;
          placed = true;
        }
      }
      if (!placed) continue;

      LesionStat stat;
      stat.radius_mm = radius_mm;
      stat.uptake = uptake;
      stat.center_mm = {c[0] * cfg.spacing[0], c[1] * cfg.spacing[1],
                        c[2] * cfg.spacing[2]};
      for (std::int64_t z = 0; z < nz; ++z)
        for (std::int64_t y = 0; y < ny; ++y)
          for (std::int64_t x = 0; x < nx; ++x) {
            const double dz = (static_cast<double>(z) - c[0]) * cfg.spacing[0];
            const double dy = (static_cast<double>(y) - c[1]) * cfg.spacing[1];
            const double dx = (static_cast<double>(x) - c[2]) * cfg.spacing[2];
            if (dz * dz + dy * dy + dx * dx > radius_mm * radius_mm) continue;
            const std::size_t s = static_cast<std::size_t>((z * ny + y) * nx + x);
            if (!body[s]) continue;
            labels.data[s] = 1.0;
            pet.data[s] = uptake;
            ct.data[s] = cfg.body_hu + cfg.lesion_hu_bump +
                         cfg.body_hu_noise * ct_noise[s];
            ++stat.voxels;
          }
      if (stat.voxels > 0) out.lesions.push_back(stat);
    }
  }

  out.ct = std::move(ct);
  out.pet = std::move(pet);
  out.labels = std::move(labels);
  return out;
}

nlohmann::json phantom_config_to_json(const PhantomConfig& cfg) {
  return {{"shape", cfg.shape},
          {"spacing", cfg.spacing},
          {"body_hu", cfg.body_hu},
          {"body_hu_noise", cfg.body_hu_noise},
          {"air_hu", cfg.air_hu},
          {"bone_hu", cfg.bone_hu},
          {"lesion_hu_bump", cfg.lesion_hu_bump},
          {"pet_background", cfg.pet_background},
          {"pet_background_noise", cfg.pet_background_noise},
          {"lesion_count_min", cfg.lesion_count_min},
          {"lesion_count_max", cfg.lesion_count_max},
          {"lesion_radius_min_mm", cfg.lesion_radius_min_mm},
          {"lesion_radius_max_mm", cfg.lesion_radius_max_mm},
          {"lesion_uptake_min", cfg.lesion_uptake_min},
          {"lesion_uptake_max", cfg.lesion_uptake_max},
          {"rho", cfg.rho},
          {"lesions_enabled", cfg.lesions_enabled}};
}

PhantomConfig phantom_config_from_json(const nlohmann::json& j) {
  PhantomConfig cfg;
  cfg.shape = j.value("shape", cfg.shape);
  cfg.spacing = j.value("spacing", cfg.spacing);
  cfg.body_hu = j.value("body_hu", cfg.body_hu);
  cfg.body_hu_noise = j.value("body_hu_noise", cfg.body_hu_noise);
  cfg.air_hu = j.value("air_hu", cfg.air_hu);
  cfg.bone_hu = j.value("bone_hu", cfg.bone_hu);
  cfg.lesion_hu_bump = j.value("lesion_hu_bump", cfg.lesion_hu_bump);
  cfg.pet_background = j.value("pet_background", cfg.pet_background);
  cfg.pet_background_noise =
      j.value("pet_background_noise", cfg.pet_background_noise);
  cfg.lesion_count_min = j.value("lesion_count_min", cfg.lesion_count_min);
  cfg.lesion_count_max = j.value("lesion_count_max", cfg.lesion_count_max);
  cfg.lesion_radius_min_mm =
      j.value("lesion_radius_min_mm", cfg.lesion_radius_min_mm);
  cfg.lesion_radius_max_mm =
      j.value("lesion_radius_max_mm", cfg.lesion_radius_max_mm);
  cfg.lesion_uptake_min = j.value("lesion_uptake_min", cfg.lesion_uptake_min);
  cfg.lesion_uptake_max = j.value("lesion_uptake_max", cfg.lesion_uptake_max);
  cfg.rho = j.value("rho", cfg.rho);
  cfg.lesions_enabled = j.value("lesions_enabled", cfg.lesions_enabled);
  return cfg;
}

nlohmann::json generate_corpus(std::int64_t n, std::uint64_t seed,
                               const std::string& out_dir,
                               const PhantomConfig& cfg) {
  if (n < 1) throw Error(ErrorCode::BadConfig, "corpus size must be >= 1");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  nlohmann::json manifest;
  manifest["seed"] = seed;
  manifest["config"] = phantom_config_to_json(cfg);
  nlohmann::json cases = nlohmann::json::array();

  for (std::int64_t i = 0; i < n; ++i) {
    const std::uint64_t case_seed = Rng::derive(seed, 0x1000 + static_cast<std::uint64_t>(i));
    Phantom ph = generate_phantom(cfg, case_seed);

    const std::string ct_name = "ct_" + std::to_string(i) + ".nii";
    const std::string pet_name = "pet_" + std::to_string(i) + ".nii";
    const std::string label_name = "label_" + std::to_string(i) + ".nii";
    write_nifti(ph.ct, (fs::path(out_dir) / ct_name).string());
    write_nifti(ph.pet, (fs::path(out_dir) / pet_name).string());
    write_nifti(ph.labels, (fs::path(out_dir) / label_name).string());

    nlohmann::json lesions = nlohmann::json::array();
    for (const LesionStat& l : ph.lesions)
      lesions.push_back({{"center_mm", l.center_mm},
                         {"radius_mm", l.radius_mm},
                         {"uptake", l.uptake},
                         {"voxels", l.voxels}});
    cases.push_back({{"id", i},
                     {"seed", case_seed},
                     {"ct", ct_name},
                     {"pet", pet_name},
                     {"label", label_name},
                     {"lesions", lesions}});
  }
  manifest["cases"] = cases;

  const fs::path tmp = fs::path(out_dir) / "corpus.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + tmp.string());
    out << manifest.dump(2) << "\n";
  }
  std::error_code ec;
  fs::rename(tmp, fs::path(out_dir) / "corpus.json", ec);
  if (ec) throw Error(ErrorCode::IoFailure, "rename failed: " + ec.message());
  return manifest;
}

} // namespace petmae
