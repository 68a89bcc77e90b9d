#ifndef PETMAE_TRAINER_HPP
#define PETMAE_TRAINER_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "petmae/checkpoint.hpp"
#include "petmae/optim.hpp"
#include "petmae/unet.hpp"
#include "petmae/volume.hpp"

namespace petmae {

enum class Objective { MAE, DICE_CE };
enum class FreezeSpec { NONE, ALL_BUT_LAST_DECODER_LAYER, ALL };
enum class ImputeMode { ZERO, TOKEN };

inline constexpr std::uint64_t kDefaultSeed = 1729;

struct TrainConfig {
  std::int64_t epochs = 0;
  std::int64_t batch_size = 4;
  double lr0 = 1e-4;
  double lr_min = 0.0;
  double mask_ratio = 0.5;
  double lambda = 0.2;
  std::array<std::int64_t, 3> crop_shape{24, 32, 32};
  std::array<std::int64_t, 3> patch_shape{6, 8, 8};
  std::uint64_t seed = kDefaultSeed;
  FreezeSpec freeze = FreezeSpec::NONE;
  Objective objective = Objective::MAE;
  ImputeMode impute = ImputeMode::ZERO;
  UNetConfig net;
  std::int64_t save_every = 0;  // epochs; 0 = final checkpoint only
  std::string out_dir;          // periodic checkpoints land here when set
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);

struct CurveRow {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  Model model;
  Checkpoint checkpoint;
  std::vector<CurveRow> curve;
  std::vector<std::int64_t> train_subset; // corpus indices used for updates
  std::vector<std::int64_t> val_subset;   // held-out indices (fixed 80/20)
};

/// Masked-autoencoding pretraining over 2-channel volumes: per step,
/// random crop -> independent channel masks -> imputation -> forward ->
/// weighted reconstruction loss -> adaptive-moment update under a per-step
/// cosine schedule. Fully determined by (seed, config, corpus order).
TrainResult pretrain(const std::vector<Volume>& corpus, const TrainConfig& cfg);

/// DiceCE fine-tuning on a labelled corpus. When init is given, every
/// tensor except the head is loaded from it; the head is a fresh seeded
/// 1x1x1 projection. The training subset is the first round(fraction * N)
/// of a seed-shuffled order.
TrainResult finetune(const std::vector<Volume>& corpus,
                     const std::vector<Volume>& labels, const TrainConfig& cfg,
                     const Checkpoint* init, double fraction);

/// K-shot probing: freeze everything but the final decoder layer and train
/// on the first K volumes of the seed-shuffled order.
TrainResult linear_probe(const std::vector<Volume>& corpus,
                         const std::vector<Volume>& labels,
                         const TrainConfig& cfg, std::int64_t k,
                         const Checkpoint* init);

/// Snapshot of model parameters + optimizer state as a checkpoint.
Checkpoint snapshot(const Model& model, const AdamState& adam,
                    const nlohmann::json& config, std::int64_t epoch,
                    const std::vector<CurveRow>& curve);

/// Restore parameter values by name; names in `skip` keep their current
/// (fresh) values.
void load_params(Model& model, const Checkpoint& ckpt,
                 const std::vector<std::string>& skip = {});

/// Argmax foreground mask from sliding-window logits.
Volume predict_mask(const Model& model, const Volume& input2ch,
                    const std::array<std::int64_t, 3>& window,
                    double overlap = 0.5);

/// Mean Dice of predict_mask over the given corpus indices.
double mean_dice(const Model& model, const std::vector<Volume>& corpus,
                 const std::vector<Volume>& labels,
                 const std::vector<std::int64_t>& indices,
                 const std::array<std::int64_t, 3>& window,
                 double overlap = 0.5);

void write_curve_csv(const std::vector<CurveRow>& curve,
                     const std::string& path);

} // namespace petmae

#endif
