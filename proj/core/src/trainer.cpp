#include "petmae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "petmae/error.hpp"
#include "petmae/infer.hpp"
#include "petmae/losses.hpp"
#include "petmae/masking.hpp"
#include "petmae/metrics.hpp"
#include "petmae/rng.hpp"

namespace petmae {

namespace {

// sub-stream tags off cfg.seed
constexpr std::uint64_t kStreamModel = 11;
constexpr std::uint64_t kStreamHead = 12;
constexpr std::uint64_t kStreamSplit = 13;
constexpr std::uint64_t kStreamEpoch = 1000;
constexpr std::uint64_t kStreamCrop = 1u << 20;
constexpr std::uint64_t kStreamMask = 1u << 24;

std::vector<std::int64_t> shuffled_indices(std::int64_t n, Rng& rng) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (std::int64_t i = n - 1; i > 0; --i) {
    const std::int64_t j = static_cast<std::int64_t>(
        rng.next_below(static_cast<std::uint64_t>(i + 1)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

void validate_common(const std::vector<Volume>& corpus, const TrainConfig& cfg) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "corpus is empty");
  if (cfg.epochs < 0 || cfg.batch_size < 1 || !(cfg.lr0 > 0.0))
    throw Error(ErrorCode::BadConfig, "epochs >= 0, batch >= 1, lr0 > 0 required");
  for (int a = 0; a < 3; ++a)
    if (cfg.crop_shape[a] % cfg.patch_shape[a] != 0)
      throw Error(ErrorCode::BadConfig, "crop must be divisible by patch");
  const std::int64_t div = std::int64_t{1} << (cfg.net.levels - 1);
  for (int a = 0; a < 3; ++a)
    if (cfg.crop_shape[a] % div != 0)
      throw Error(ErrorCode::BadConfig,
                  "crop extents must be divisible by 2^(levels-1)");
}

std::vector<TensorPtr> trainable_params(const Model& model, FreezeSpec freeze,
                                        const TensorPtr& tokens) {
  std::vector<TensorPtr> out;
  const auto& head = Model::head_param_names();
  for (const TensorPtr& p : model.params) {
    const bool is_head =
        std::find(head.begin(), head.end(), p->name) != head.end();
    switch (freeze) {
      case FreezeSpec::NONE: out.push_back(p); break;
      case FreezeSpec::ALL_BUT_LAST_DECODER_LAYER:
        if (is_head) out.push_back(p);
        break;
      case FreezeSpec::ALL: break;
    }
  }
  if (tokens && freeze == FreezeSpec::NONE) out.push_back(tokens);
  return out;
}

void apply_freeze_flags(Model& model, const std::vector<TensorPtr>& trainable) {
  for (const TensorPtr& p : model.params) {
    p->requires_grad =
        std::find(trainable.begin(), trainable.end(), p) != trainable.end();
    p->needs_grad = p->requires_grad;
    p->ensure_grad();
  }
}

std::vector<std::int64_t> val_split(const std::vector<std::int64_t>& order) {
  const std::int64_t n = static_cast<std::int64_t>(order.size());
  const std::int64_t n_val = (n + 4) / 5; // ceil(0.2 n)
  return std::vector<std::int64_t>(order.end() - n_val, order.end());
}

} // namespace

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["lr0"] = cfg.lr0;
  j["lr_min"] = cfg.lr_min;
  j["mask_ratio"] = cfg.mask_ratio;
  j["lambda"] = cfg.lambda;
  j["crop_shape"] = cfg.crop_shape;
  j["patch_shape"] = cfg.patch_shape;
  j["seed"] = cfg.seed;
  switch (cfg.freeze) {
    case FreezeSpec::NONE: j["freeze"] = "none"; break;
    case FreezeSpec::ALL_BUT_LAST_DECODER_LAYER: j["freeze"] = "all_but_last_decoder_layer"; break;
    case FreezeSpec::ALL: j["freeze"] = "all"; break;
  }
  j["objective"] = cfg.objective == Objective::MAE ? "mae" : "dice_ce";
  j["impute"] = cfg.impute == ImputeMode::ZERO ? "zero" : "token";
  j["net"] = {{"levels", cfg.net.levels},
              {"base_features", cfg.net.base_features},
              {"in_channels", cfg.net.in_channels},
              {"out_channels", cfg.net.out_channels},
              {"fusion", cfg.net.fusion == FusionMode::EARLY_CONCAT
                             ? "early_concat"
                             : "separate_encoders"}};
  j["save_every"] = cfg.save_every;
  return j;
}

Checkpoint snapshot(const Model& model, const AdamState& adam,
                    const nlohmann::json& config, std::int64_t epoch,
                    const std::vector<CurveRow>& curve) {
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.config["adam_t"] = adam.t;
  ckpt.epoch = epoch;
  for (const CurveRow& row : curve)
    ckpt.loss_history.push_back({static_cast<double>(row.step),
                                 static_cast<double>(row.epoch), row.loss,
                                 row.lr});
  for (const TensorPtr& p : model.params)
    ckpt.put(p->name, p->shape, p->values);
  for (const TensorPtr& p : model.params) {
    auto mi = adam.m.find(p->name);
    auto vi = adam.v.find(p->name);
    if (mi != adam.m.end()) ckpt.put("adam.m/" + p->name, p->shape, mi->second);
    if (vi != adam.v.end()) ckpt.put("adam.v/" + p->name, p->shape, vi->second);
  }
  return ckpt;
}

void load_params(Model& model, const Checkpoint& ckpt,
                 const std::vector<std::string>& skip) {
  for (const TensorPtr& p : model.params) {
    if (std::find(skip.begin(), skip.end(), p->name) != skip.end()) continue;
    auto it = ckpt.tensors.find(p->name);
    if (it == ckpt.tensors.end())
      throw Error(ErrorCode::CorruptManifest,
                  "checkpoint lacks tensor " + p->name);
    if (ckpt.shapes.at(p->name) != p->shape)
      throw Error(ErrorCode::ShapeMismatch,
                  "checkpoint tensor " + p->name + " has a different shape");
    p->values = it->second;
  }
}

TrainResult pretrain(const std::vector<Volume>& corpus, const TrainConfig& cfg) {
  validate_common(corpus, cfg);
  if (cfg.objective != Objective::MAE)
    throw Error(ErrorCode::BadConfig, "pretrain runs the MAE objective");
  for (const Volume& v : corpus)
    if (v.channels != 2)
      throw Error(ErrorCode::BadConfig, "pretraining corpus must be 2-channel");

  TrainResult res;
  UNetConfig net = cfg.net;
  if (net.seed == 0) net.seed = Rng::derive(cfg.seed, kStreamModel);
  net.in_channels = 2;
  net.out_channels = 2;
  res.model = build_unet(net);

  TensorPtr tokens;
  if (cfg.impute == ImputeMode::TOKEN)
    tokens = make_tensor({2}, 0.0, true, "mask_tokens");

  const auto trainable = trainable_params(res.model, cfg.freeze, tokens);
  apply_freeze_flags(res.model, trainable);
  if (tokens) {
    tokens->requires_grad = true;
    tokens->needs_grad = true;
  }

  AdamState adam;
  const std::int64_t n = static_cast<std::int64_t>(corpus.size());
  const std::int64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total_steps = std::max<std::int64_t>(1, cfg.epochs * steps_per_epoch);
  const PatchGrid grid = make_grid(cfg.crop_shape, cfg.patch_shape);
  const std::int64_t crop_vox =
      cfg.crop_shape[0] * cfg.crop_shape[1] * cfg.crop_shape[2];

  std::int64_t step = 0;
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng order_rng(Rng::derive(cfg.seed, kStreamEpoch + static_cast<std::uint64_t>(epoch)));
    const auto order = shuffled_indices(n, order_rng);

    for (std::int64_t start = 0; start < n; start += cfg.batch_size) {
      const std::int64_t bsz = std::min(cfg.batch_size, n - start);
      const std::vector<std::int64_t> shape{bsz, 2, cfg.crop_shape[0],
                                            cfg.crop_shape[1], cfg.crop_shape[2]};
      std::vector<double> x(static_cast<std::size_t>(bsz * 2 * crop_vox));
      std::vector<std::uint8_t> m(x.size());

      for (std::int64_t b = 0; b < bsz; ++b) {
        const std::int64_t pos = start + b;
        const std::uint64_t item_tag =
            static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(n) +
            static_cast<std::uint64_t>(pos);
        Rng crop_rng(Rng::derive(cfg.seed, kStreamCrop + item_tag));
        Volume crop = random_crop(corpus[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])],
                                  cfg.crop_shape, crop_rng);
        PatchMask pm = sample_mask(grid, cfg.mask_ratio,
                                   Rng::derive(cfg.seed, kStreamMask + item_tag));
        auto mv = expand_mask(pm, grid);
        std::copy(crop.data.begin(), crop.data.end(),
                  x.begin() + b * 2 * crop_vox);
        std::copy(mv.begin(), mv.end(), m.begin() + b * 2 * crop_vox);
      }

      TensorPtr x_in;
      if (cfg.impute == ImputeMode::TOKEN) {
        x_in = impute_token_node(x, m, shape, tokens);
      } else {
        x_in = make_tensor(shape, impute_zero(x, m));
      }

      for (const TensorPtr& p : trainable) p->zero_grad();
      TensorPtr x_rec = res.model.forward(x_in);
      LossBreakdown loss = recon_loss(x_rec, x, m, cfg.lambda);
      backward(loss.node);

      const double lr = cosine_lr(step, total_steps, cfg.lr0, cfg.lr_min);
      adam_step(trainable, adam, lr);
      res.curve.push_back({step, epoch, loss.total, lr});
      ++step;
    }

    if (!cfg.out_dir.empty() && cfg.save_every > 0 &&
        (epoch + 1) % cfg.save_every == 0 && epoch + 1 < cfg.epochs) {
      Checkpoint ck = snapshot(res.model, adam, train_config_to_json(cfg),
                               epoch + 1, res.curve);
      if (tokens) ck.put("mask_tokens", tokens->shape, tokens->values);
      save_checkpoint(ck, cfg.out_dir + "/checkpoint_epoch_" +
                              std::to_string(epoch + 1));
    }
  }

  Rng split_rng(Rng::derive(cfg.seed, kStreamSplit));
  const auto split_order = shuffled_indices(n, split_rng);
  res.train_subset = split_order;
  res.val_subset = val_split(split_order);

  res.checkpoint = snapshot(res.model, adam, train_config_to_json(cfg),
                            cfg.epochs, res.curve);
  if (tokens)
    res.checkpoint.put("mask_tokens", tokens->shape, tokens->values);
  res.checkpoint.config["val_subset"] = res.val_subset;
  return res;
}

namespace {

TrainResult supervised_train(const std::vector<Volume>& corpus,
                             const std::vector<Volume>& labels,
                             const TrainConfig& cfg, const Checkpoint* init,
                             std::int64_t n_train, FreezeSpec freeze) {
  validate_common(corpus, cfg);
  if (labels.size() != corpus.size())
    throw Error(ErrorCode::LabelMismatch, "one label volume per corpus volume");
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].channels != 2)
      throw Error(ErrorCode::BadConfig, "supervised corpus must be 2-channel");
    if (labels[i].channels != 1 || labels[i].nz != corpus[i].nz ||
        labels[i].ny != corpus[i].ny || labels[i].nx != corpus[i].nx)
      throw Error(ErrorCode::LabelMismatch, "label not voxel-aligned");
  }

  TrainResult res;
  UNetConfig net = cfg.net;
  if (net.seed == 0) net.seed = Rng::derive(cfg.seed, kStreamModel);
  net.in_channels = 2;
  net.out_channels = 2;
  res.model = build_unet(net);

  // fresh seeded head; remaining tensors come from the checkpoint when given
  if (init) load_params(res.model, *init, Model::head_param_names());

  const auto trainable = trainable_params(res.model, freeze, nullptr);
  apply_freeze_flags(res.model, trainable);

  const std::int64_t n = static_cast<std::int64_t>(corpus.size());
  Rng split_rng(Rng::derive(cfg.seed, kStreamSplit));
  const auto order = shuffled_indices(n, split_rng);
  if (n_train < 1 || n_train > n)
    throw Error(ErrorCode::BadConfig, "training subset size out of range");
  res.train_subset.assign(order.begin(), order.begin() + n_train);
  res.val_subset = val_split(order);

  AdamState adam;
  const std::int64_t steps_per_epoch =
      (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total_steps =
      std::max<std::int64_t>(1, cfg.epochs * steps_per_epoch);
  const std::int64_t crop_vox =
      cfg.crop_shape[0] * cfg.crop_shape[1] * cfg.crop_shape[2];

  std::int64_t step = 0;
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng order_rng(Rng::derive(cfg.seed, kStreamEpoch + static_cast<std::uint64_t>(epoch)));
    auto epoch_order = res.train_subset;
    {
      // shuffle the subset in place with the epoch stream
      for (std::int64_t i = n_train - 1; i > 0; --i) {
        const std::int64_t j = static_cast<std::int64_t>(
            order_rng.next_below(static_cast<std::uint64_t>(i + 1)));
        std::swap(epoch_order[static_cast<std::size_t>(i)],
                  epoch_order[static_cast<std::size_t>(j)]);
      }
    }

    for (std::int64_t start = 0; start < n_train; start += cfg.batch_size) {
      const std::int64_t bsz = std::min(cfg.batch_size, n_train - start);
      const std::vector<std::int64_t> shape{bsz, 2, cfg.crop_shape[0],
                                            cfg.crop_shape[1], cfg.crop_shape[2]};
      std::vector<double> x(static_cast<std::size_t>(bsz * 2 * crop_vox));
      std::vector<std::uint8_t> g(static_cast<std::size_t>(bsz * crop_vox));

      for (std::int64_t b = 0; b < bsz; ++b) {
        const std::int64_t pos = start + b;
        const std::int64_t vi = epoch_order[static_cast<std::size_t>(pos)];
        const std::uint64_t item_tag =
            static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(n) +
            static_cast<std::uint64_t>(pos);
        Rng crop_rng(Rng::derive(cfg.seed, kStreamCrop + item_tag));

        Volume img = pad_to_min(corpus[static_cast<std::size_t>(vi)], cfg.crop_shape);
        Volume lab = pad_to_min(labels[static_cast<std::size_t>(vi)], cfg.crop_shape);
        const auto corner =
            random_crop_corner({img.nz, img.ny, img.nx}, cfg.crop_shape, crop_rng);
        Volume img_c = crop_at(img, corner, cfg.crop_shape);
        Volume lab_c = crop_at(lab, corner, cfg.crop_shape);

        std::copy(img_c.data.begin(), img_c.data.end(),
                  x.begin() + b * 2 * crop_vox);
        for (std::int64_t i = 0; i < crop_vox; ++i)
          g[static_cast<std::size_t>(b * crop_vox + i)] =
              lab_c.data[static_cast<std::size_t>(i)] > 0.5 ? 1 : 0;
      }

      for (const TensorPtr& p : trainable) p->zero_grad();
      TensorPtr logits = res.model.forward(make_tensor(shape, x));
      TensorPtr loss = dice_ce_loss(logits, g);
      backward(loss);

      const double lr = cosine_lr(step, total_steps, cfg.lr0, cfg.lr_min);
      if (!trainable.empty()) adam_step(trainable, adam, lr);
      res.curve.push_back({step, epoch, loss->values[0], lr});
      ++step;
    }
  }

  nlohmann::json echo = train_config_to_json(cfg);
  echo["train_subset"] = res.train_subset;
  echo["val_subset"] = res.val_subset;
  echo["n_train"] = n_train;
  res.checkpoint = snapshot(res.model, adam, echo, cfg.epochs, res.curve);
  return res;
}

} // namespace

TrainResult finetune(const std::vector<Volume>& corpus,
                     const std::vector<Volume>& labels, const TrainConfig& cfg,
                     const Checkpoint* init, double fraction) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw Error(ErrorCode::BadConfig, "fraction must lie in (0, 1]");
  if (cfg.objective != Objective::DICE_CE)
    throw Error(ErrorCode::BadConfig, "finetune runs the DiceCE objective");
  const std::int64_t n_train = std::llround(
      fraction * static_cast<double>(corpus.size()));
  return supervised_train(corpus, labels, cfg, init,
                          std::max<std::int64_t>(1, n_train), cfg.freeze);
}

TrainResult linear_probe(const std::vector<Volume>& corpus,
                         const std::vector<Volume>& labels,
                         const TrainConfig& cfg, std::int64_t k,
                         const Checkpoint* init) {
  if (k < 1 || k > static_cast<std::int64_t>(corpus.size()))
    throw Error(ErrorCode::BadConfig, "K must lie in [1, corpus size]");
  return supervised_train(corpus, labels, cfg, init, k,
                          FreezeSpec::ALL_BUT_LAST_DECODER_LAYER);
}

Volume predict_mask(const Model& model, const Volume& input2ch,
                    const std::array<std::int64_t, 3>& window,
                    double overlap) {
  Volume padded = pad_to_min(input2ch, window);
  WindowPlan plan = plan_windows({padded.nz, padded.ny, padded.nx}, window, overlap);
  Volume logits = sliding_infer(
      [&model](const TensorPtr& x) { return model.forward(x); }, padded, plan);

  Volume mask(1, logits.nz, logits.ny, logits.nx, logits.spacing, logits.origin);
  const std::int64_t vox = logits.voxels_per_channel();
  for (std::int64_t i = 0; i < vox; ++i)
    mask.data[static_cast<std::size_t>(i)] =
        logits.data[static_cast<std::size_t>(vox + i)] >
                logits.data[static_cast<std::size_t>(i)]
            ? 1.0
            : 0.0;

  // undo the symmetric padding so the mask aligns with the input grid
  if (padded.nz != input2ch.nz || padded.ny != input2ch.ny ||
      padded.nx != input2ch.nx) {
    const std::array<std::int64_t, 3> before{(padded.nz - input2ch.nz) / 2,
                                             (padded.ny - input2ch.ny) / 2,
                                             (padded.nx - input2ch.nx) / 2};
    mask = crop_at(mask, before, {input2ch.nz, input2ch.ny, input2ch.nx});
    mask.origin = input2ch.origin;
  }
  return mask;
}

double mean_dice(const Model& model, const std::vector<Volume>& corpus,
                 const std::vector<Volume>& labels,
                 const std::vector<std::int64_t>& indices,
                 const std::array<std::int64_t, 3>& window, double overlap) {
  if (indices.empty()) throw Error(ErrorCode::EmptyCorpus, "no evaluation cases");
  double sum = 0.0;
  for (std::int64_t i : indices) {
    Volume pred = predict_mask(model, corpus[static_cast<std::size_t>(i)],
                               window, overlap);
    sum += dice(pred, labels[static_cast<std::size_t>(i)]);
  }
  return sum / static_cast<double>(indices.size());
}

void write_curve_csv(const std::vector<CurveRow>& curve,
                     const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + tmp);
    out << "step,epoch,loss,lr\n";
    for (const CurveRow& row : curve) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%lld,%lld,%.17g,%.17g\n",
                    static_cast<long long>(row.step),
                    static_cast<long long>(row.epoch), row.loss, row.lr);
      out << buf;
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "rename failed: " + ec.message());
}

} // namespace petmae
