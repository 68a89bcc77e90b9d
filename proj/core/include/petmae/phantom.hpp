#ifndef PETMAE_PHANTOM_HPP
#define PETMAE_PHANTOM_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "petmae/volume.hpp"

namespace petmae {

/// Synthetic cross-modally correlated PET/CT pair generator. rho controls
/// how much of the PET structure is a deterministic function of the CT
/// body morphology versus an independent smooth noise field.
struct PhantomConfig {
  std::array<std::int64_t, 3> shape{48, 64, 64};
  std::array<double, 3> spacing{2.0, 2.0, 3.0};
  double body_hu = 40.0;
  double body_hu_noise = 10.0;
  double air_hu = -1000.0;
  double bone_hu = 300.0;
  double lesion_hu_bump = 20.0;
  double pet_background = 1.0;
  double pet_background_noise = 0.2;
  std::int64_t lesion_count_min = 1;
  std::int64_t lesion_count_max = 4;
  double lesion_radius_min_mm = 3.0;
  double lesion_radius_max_mm = 8.0;
  double lesion_uptake_min = 4.0;
  double lesion_uptake_max = 8.0;
  double rho = 0.8;
  bool lesions_enabled = true;
};

struct LesionStat {
  std::array<double, 3> center_mm{};
  double radius_mm = 0.0;
  double uptake = 0.0;
  std::int64_t voxels = 0;
};

struct Phantom {
  Volume ct;
  Volume pet;
  Volume labels; // binary lesion mask
  std::vector<LesionStat> lesions;
};

Phantom generate_phantom(const PhantomConfig& cfg, std::uint64_t seed);

/// Writes n phantoms as NIfTI triples (ct_i.nii, pet_i.nii, label_i.nii)
/// plus corpus.json and returns the manifest.
nlohmann::json generate_corpus(std::int64_t n, std::uint64_t seed,
                               const std::string& out_dir,
                               const PhantomConfig& cfg = {});

nlohmann::json phantom_config_to_json(const PhantomConfig& cfg);
PhantomConfig phantom_config_from_json(const nlohmann::json& j);

} // namespace petmae

#endif
