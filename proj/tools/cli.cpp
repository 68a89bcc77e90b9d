#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "petmae/checkpoint.hpp"
#include "petmae/error.hpp"
#include "petmae/infer.hpp"
#include "petmae/losses.hpp"
#include "petmae/masking.hpp"
#include "petmae/metrics.hpp"
#include "petmae/nifti_io.hpp"
#include "petmae/phantom.hpp"
#include "petmae/register.hpp"
#include "petmae/trainer.hpp"
#include "petmae/volume.hpp"

namespace petmae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void set_threads(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + tmp);
    out << text;
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "rename failed: " + ec.message());
}

void echo_config(const std::string& out_dir, const json& cfg) {
  fs::create_directories(out_dir);
  write_text_atomic((fs::path(out_dir) / "config.json").string(),
                    cfg.dump(2) + "\n");
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptManifest, e.what());
  }
  return j;
}

std::string corpus_manifest_path(const std::string& corpus) {
  if (fs::is_directory(corpus)) return (fs::path(corpus) / "corpus.json").string();
  return corpus;
}

struct Case {
  std::int64_t id;
  std::string ct, pet, label;
};

std::vector<Case> load_cases(const std::string& corpus, std::string* dir_out) {
  const std::string manifest_path = corpus_manifest_path(corpus);
  const std::string dir = fs::path(manifest_path).parent_path().string();
  if (dir_out) *dir_out = dir;
  json manifest = load_json(manifest_path);
  std::vector<Case> cases;
  for (const auto& c : manifest.at("cases"))
    cases.push_back({c.at("id").get<std::int64_t>(),
                     (fs::path(dir) / c.at("ct").get<std::string>()).string(),
                     (fs::path(dir) / c.at("pet").get<std::string>()).string(),
                     (fs::path(dir) / c.at("label").get<std::string>()).string()});
  if (cases.empty()) throw Error(ErrorCode::EmptyCorpus, "manifest has no cases");
  return cases;
}

std::vector<Volume> load_pairs(const std::vector<Case>& cases,
                               std::vector<Volume>* labels) {
  std::vector<Volume> out;
  for (const Case& c : cases) {
    Volume ct = read_nifti(c.ct, ChannelLabel::CT);
    Volume pet = read_nifti(c.pet, ChannelLabel::PET);
    out.push_back(concat_channels(ct, pet));
    if (labels) labels->push_back(read_nifti(c.label));
  }
  return out;
}

std::array<std::int64_t, 3> to_shape(const std::vector<std::int64_t>& v) {
  return {v[0], v[1], v[2]};
}

// 8-bit PGM, one panel per column: original | masked | reconstructed
void write_triptych_pgm(const std::string& path, const Volume& crop,
                        std::int64_t channel, const std::vector<double>& masked,
                        const std::vector<double>& recon) {
  const std::int64_t z = crop.nz / 2;
  const std::int64_t h = crop.ny, w = crop.nx;
  const std::int64_t vox = crop.voxels_per_channel();

  auto panel_value = [&](int panel, std::int64_t y, std::int64_t x) {
    const std::size_t i =
        std::size_t(channel * vox + (z * crop.ny + y) * crop.nx + x);
    if (panel == 0) return crop.data[i];
    if (panel == 1) return masked[i];
    return recon[i];
  };
  double lo = 1e300, hi = -1e300;
  for (int p = 0; p < 3; ++p)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        lo = std::min(lo, panel_value(p, y, x));
        hi = std::max(hi, panel_value(p, y, x));
      }
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;

  std::string bytes;
  bytes.reserve(std::size_t(h * (3 * w + 2)));
  for (std::int64_t y = 0; y < h; ++y)
    for (int p = 0; p < 3; ++p)
      for (std::int64_t x = 0; x < w; ++x)
        bytes.push_back(static_cast<char>(static_cast<unsigned char>(
            std::lround((panel_value(p, y, x) - lo) * scale))));

  std::string header = "P5\n" + std::to_string(3 * w) + " " + std::to_string(h) +
                       "\n255\n";
  write_text_atomic(path, header + bytes);
}

TrainConfig parse_train_config(std::int64_t epochs, std::int64_t batch,
                               double lr, double mask_ratio, double lambda,
                               const std::vector<std::int64_t>& crop,
                               const std::vector<std::int64_t>& patch,
                               std::uint64_t seed, const std::string& fusion,
                               const std::string& impute, std::int64_t levels,
                               std::int64_t features, std::int64_t save_every,
                               const std::string& out_dir) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.lr0 = lr;
  cfg.mask_ratio = mask_ratio;
  cfg.lambda = lambda;
  cfg.crop_shape = to_shape(crop);
  cfg.patch_shape = to_shape(patch);
  cfg.seed = seed;
  cfg.net.levels = levels;
  cfg.net.base_features = features;
  cfg.net.fusion = fusion == "separate" ? FusionMode::SEPARATE_ENCODERS
                                        : FusionMode::EARLY_CONCAT;
  cfg.impute = impute == "token" ? ImputeMode::TOKEN : ImputeMode::ZERO;
  cfg.save_every = save_every;
  cfg.out_dir = out_dir;
  return cfg;
}

int cmd_phantom(const std::string& out_dir, std::int64_t n, std::uint64_t seed,
                const std::vector<std::int64_t>& shape,
                const std::vector<double>& spacing, double rho) {
  PhantomConfig cfg;
  cfg.shape = to_shape(shape);
  cfg.spacing = {spacing[0], spacing[1], spacing[2]};
  cfg.rho = rho;
  json manifest = generate_corpus(n, seed, out_dir, cfg);
  json echo = {{"command", "phantom"},
               {"n", n},
               {"seed", seed},
               {"out", out_dir},
               {"phantom", phantom_config_to_json(cfg)}};
  echo_config(out_dir, echo);
  std::cout << "wrote " << n << " phantoms to " << out_dir << "\n";
  return 0;
}

int cmd_harmonize(const std::string& corpus, const std::string& out_dir,
                  const std::vector<double>& spacing, bool do_register,
                  double threshold_hu, std::int64_t margin) {
  std::string in_dir;
  auto cases = load_cases(corpus, &in_dir);
  fs::create_directories(out_dir);
  const std::array<double, 3> target{spacing[0], spacing[1], spacing[2]};

  json out_cases = json::array();
  for (const Case& c : cases) {
    Volume ct = read_nifti(c.ct, ChannelLabel::CT);
    Volume pet = read_nifti(c.pet, ChannelLabel::PET);
    Volume label = read_nifti(c.label);

    auto cropped = crop_blank_boundary(ct, {pet, label}, threshold_hu, margin);
    ct = std::move(cropped[0]);
    pet = std::move(cropped[1]);
    label = std::move(cropped[2]);

    json reg_echo = nullptr;
    if (do_register) {
      RigidTransform t = rigid_register(ct, pet);
      pet = apply_rigid(pet, t, ct);
      reg_echo = {{"rotation", t.rotation}, {"translation", t.translation}};
    }

    ct = resample_trilinear(ct, target);
    pet = resample_trilinear(pet, target);
    label = resample_trilinear(label, target);
    for (double& v : label.data) v = v > 0.5 ? 1.0 : 0.0;

    ct = zscore_normalize(ct);
    pet = zscore_normalize(pet);

    const std::string ct_name = "ct_" + std::to_string(c.id) + ".nii";
    const std::string pet_name = "pet_" + std::to_string(c.id) + ".nii";
    const std::string label_name = "label_" + std::to_string(c.id) + ".nii";
    write_nifti(ct, (fs::path(out_dir) / ct_name).string());
    write_nifti(pet, (fs::path(out_dir) / pet_name).string());
    write_nifti(label, (fs::path(out_dir) / label_name).string());
    out_cases.push_back({{"id", c.id},
                         {"ct", ct_name},
                         {"pet", pet_name},
                         {"label", label_name},
                         {"registration", reg_echo}});
  }

  json manifest = {{"cases", out_cases},
                   {"spacing", spacing},
                   {"registered", do_register},
                   {"threshold_hu", threshold_hu},
                   {"margin_voxels", margin}};
  write_text_atomic((fs::path(out_dir) / "corpus.json").string(),
                    manifest.dump(2) + "\n");
  json echo = {{"command", "harmonize"}, {"in", corpus},     {"out", out_dir},
               {"spacing", spacing},     {"register", do_register},
               {"threshold_hu", threshold_hu}, {"margin_voxels", margin}};
  echo_config(out_dir, echo);
  std::cout << "harmonized " << cases.size() << " cases into " << out_dir << "\n";
  return 0;
}

void write_train_outputs(const std::string& out_dir, const TrainResult& res,
                         const json& echo) {
  save_checkpoint(res.checkpoint, (fs::path(out_dir) / "checkpoint").string());
  write_curve_csv(res.curve, (fs::path(out_dir) / "curve.csv").string());
  echo_config(out_dir, echo);
}

int cmd_pretrain(const std::string& corpus, const std::string& out_dir,
                 TrainConfig cfg) {
  auto cases = load_cases(corpus, nullptr);
  auto volumes = load_pairs(cases, nullptr);
  cfg.out_dir = out_dir;
  TrainResult res = pretrain(volumes, cfg);
  json echo = train_config_to_json(cfg);
  echo["command"] = "pretrain";
  echo["corpus"] = corpus;
  echo["out"] = out_dir;
  write_train_outputs(out_dir, res, echo);
  std::cout << "pretrained for " << res.curve.size() << " steps; final loss "
            << (res.curve.empty() ? 0.0 : res.curve.back().loss) << "\n";
  return 0;
}

int cmd_supervised(const std::string& corpus, const std::string& out_dir,
                   TrainConfig cfg, const std::string& init_path,
                   double fraction, std::int64_t k, bool probe) {
  std::vector<Volume> labels;
  auto cases = load_cases(corpus, nullptr);
  auto volumes = load_pairs(cases, &labels);

  std::optional<Checkpoint> init;
  if (!init_path.empty()) init = load_checkpoint(init_path);

  cfg.objective = Objective::DICE_CE;
  TrainResult res = probe
                        ? linear_probe(volumes, labels, cfg, k,
                                       init ? &*init : nullptr)
                        : finetune(volumes, labels, cfg, init ? &*init : nullptr,
                                   fraction);

  json echo = train_config_to_json(cfg);
  echo["command"] = probe ? "probe" : "finetune";
  echo["corpus"] = corpus;
  echo["out"] = out_dir;
  echo["init"] = init_path;
  if (probe)
    echo["k"] = k;
  else
    echo["fraction"] = fraction;
  echo["train_subset"] = res.train_subset;
  echo["val_subset"] = res.val_subset;
  write_train_outputs(out_dir, res, echo);

  const double val_dice = mean_dice(res.model, volumes, labels, res.val_subset,
                                    cfg.crop_shape);
  write_text_atomic((fs::path(out_dir) / "metrics.json").string(),
                    json{{"val_dice", val_dice}}.dump(2) + "\n");
  std::cout << (probe ? "probe" : "finetune") << " done; val dice " << val_dice
            << "\n";
  return 0;
}

int cmd_infer(const std::string& ckpt_path, const std::string& ct_path,
              const std::string& pet_path, const std::string& out_path,
              std::vector<std::int64_t> window, double overlap) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  TrainConfig cfg;
  cfg.net.levels = ckpt.config.at("net").at("levels").get<std::int64_t>();
  cfg.net.base_features =
      ckpt.config.at("net").at("base_features").get<std::int64_t>();
  cfg.net.fusion =
      ckpt.config.at("net").at("fusion").get<std::string>() == "separate_encoders"
          ? FusionMode::SEPARATE_ENCODERS
          : FusionMode::EARLY_CONCAT;
  Model model = build_unet(cfg.net);
  load_params(model, ckpt);

  if (window.empty())
    window = ckpt.config.at("crop_shape").get<std::vector<std::int64_t>>();

  Volume ct = read_nifti(ct_path, ChannelLabel::CT);
  Volume pet = read_nifti(pet_path, ChannelLabel::PET);
  Volume mask = predict_mask(model, concat_channels(ct, pet), to_shape(window),
                             overlap);
  write_nifti(mask, out_path);

  json echo = {{"command", "infer"},   {"ckpt", ckpt_path}, {"ct", ct_path},
               {"pet", pet_path},      {"out", out_path},   {"window", window},
               {"overlap", overlap}};
  write_text_atomic(out_path + ".config.json", echo.dump(2) + "\n");
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& corpus, const std::string& pred_dir,
             const std::string& out_csv) {
  std::string dir;
  auto cases = load_cases(corpus, &dir);
  std::string csv = "case_id,dice,hd95_mm,n_pred,n_ref\n";
  for (const Case& c : cases) {
    const std::string pred_path =
        (fs::path(pred_dir) / ("pred_" + std::to_string(c.id) + ".nii")).string();
    Volume pred = read_nifti(pred_path);
    Volume ref = read_nifti(c.label);
    SegScore s = score_pair(pred, ref);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%lld,%lld\n",
                  static_cast<long long>(c.id), s.dice, s.hd95_mm,
                  static_cast<long long>(s.n_pred),
                  static_cast<long long>(s.n_ref));
    csv += buf;
  }
  write_text_atomic(out_csv, csv);
  json echo = {{"command", "eval"},
               {"corpus", corpus},
               {"pred_dir", pred_dir},
               {"out", out_csv}};
  write_text_atomic(out_csv + ".config.json", echo.dump(2) + "\n");
  std::cout << "wrote " << out_csv << "\n";
  return 0;
}

int cmd_recon_demo(const std::string& ckpt_path, const std::string& ct_path,
                   const std::string& pet_path, const std::string& out_dir,
                   std::uint64_t seed, double ratio) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  UNetConfig net;
  net.levels = ckpt.config.at("net").at("levels").get<std::int64_t>();
  net.base_features =
      ckpt.config.at("net").at("base_features").get<std::int64_t>();
  net.fusion =
      ckpt.config.at("net").at("fusion").get<std::string>() == "separate_encoders"
          ? FusionMode::SEPARATE_ENCODERS
          : FusionMode::EARLY_CONCAT;
  Model model = build_unet(net);
  load_params(model, ckpt);

  const auto crop_shape =
      to_shape(ckpt.config.at("crop_shape").get<std::vector<std::int64_t>>());
  const auto patch_shape =
      to_shape(ckpt.config.at("patch_shape").get<std::vector<std::int64_t>>());

  Volume ct = read_nifti(ct_path, ChannelLabel::CT);
  Volume pet = read_nifti(pet_path, ChannelLabel::PET);
  Volume both = pad_to_min(concat_channels(ct, pet), crop_shape);

  // central crop for a repeatable figure
  const std::array<std::int64_t, 3> corner{(both.nz - crop_shape[0]) / 2,
                                           (both.ny - crop_shape[1]) / 2,
                                           (both.nx - crop_shape[2]) / 2};
  Volume crop = crop_at(both, corner, crop_shape);

  PatchGrid grid = make_grid(crop_shape, patch_shape);
  auto mask = expand_mask(sample_mask(grid, ratio, seed), grid);
  auto masked = impute_zero(crop.data, mask);

  auto x = make_tensor({1, 2, crop_shape[0], crop_shape[1], crop_shape[2]},
                       masked);
  TensorPtr rec = model.forward(x);

  fs::create_directories(out_dir);
  write_triptych_pgm((fs::path(out_dir) / "recon_ct.pgm").string(), crop, 0,
                     masked, rec->values);
  write_triptych_pgm((fs::path(out_dir) / "recon_pet.pgm").string(), crop, 1,
                     masked, rec->values);

  LossBreakdown lb = recon_loss(rec, crop.data, mask);
  json echo = {{"command", "recon-demo"}, {"ckpt", ckpt_path},
               {"ct", ct_path},           {"pet", pet_path},
               {"seed", seed},            {"ratio", ratio},
               {"out", out_dir},          {"masked_term", lb.masked_term},
               {"visible_term", lb.visible_term}, {"total", lb.total}};
  echo_config(out_dir, echo);
  std::cout << "wrote triptychs to " << out_dir << " (masked-term "
            << lb.masked_term << ")\n";
  return 0;
}

} // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"PET/CT masked-autoencoder pretraining pipeline"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "cap worker threads (0 = default)");

  std::uint64_t seed = kDefaultSeed;

  // phantom
  auto* sp = app.add_subcommand("phantom", "generate a synthetic PET/CT corpus");
  std::string p_out = "phantoms";
  std::int64_t p_n = 8;
  std::vector<std::int64_t> p_shape{48, 64, 64};
  std::vector<double> p_spacing{2.0, 2.0, 3.0};
  double p_rho = 0.8;
  sp->add_option("--out", p_out, "output directory");
  sp->add_option("--n", p_n, "number of phantoms");
  sp->add_option("--seed", seed, "corpus seed")->envname("PETMAE_SEED");
  sp->add_option("--shape", p_shape, "volume extents Z Y X")->expected(3);
  sp->add_option("--spacing", p_spacing, "voxel spacing mm (z y x)")->expected(3);
  sp->add_option("--rho", p_rho, "CT-derived fraction of PET structure");

  // harmonize
  auto* sh = app.add_subcommand("harmonize",
                                "crop, optionally register, resample, normalize");
  std::string h_in, h_out = "harmonized";
  std::vector<double> h_spacing{2.0, 2.0, 3.0};
  bool h_register = false;
  double h_threshold = -900.0;
  std::int64_t h_margin = 2;
  sh->add_option("--in", h_in, "corpus dir or corpus.json")->required();
  sh->add_option("--out", h_out, "output directory");
  sh->add_option("--spacing", h_spacing, "target voxel spacing mm (z y x)")
      ->expected(3);
  sh->add_flag("--register", h_register, "rigid PET-to-CT registration");
  sh->add_option("--threshold-hu", h_threshold, "blank-boundary threshold");
  sh->add_option("--margin", h_margin, "crop margin in voxels");

  // shared training options
  auto add_train_opts = [&seed](CLI::App* cmd, std::string& corpus,
                                std::string& out, std::int64_t& epochs,
                                std::int64_t& batch, double& lr,
                                std::vector<std::int64_t>& crop,
                                std::vector<std::int64_t>& patch,
                                std::int64_t& levels, std::int64_t& features,
                                std::string& fusion) {
    cmd->add_option("--corpus", corpus, "harmonized corpus dir or manifest")
        ->required();
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--batch", batch, "batch size");
    cmd->add_option("--lr", lr, "initial learning rate (cosine annealed)");
    cmd->add_option("--crop", crop, "crop extents Z Y X")->expected(3);
    cmd->add_option("--patch", patch, "patch extents Z Y X")->expected(3);
    cmd->add_option("--levels", levels, "UNet resolution levels");
    cmd->add_option("--features", features, "UNet base feature width");
    cmd->add_option("--fusion", fusion, "early|separate")
        ->check(CLI::IsMember({"early", "separate"}));
    cmd->add_option("--seed", seed, "run seed")->envname("PETMAE_SEED");
  };

  auto* spre = app.add_subcommand("pretrain", "masked-autoencoder pretraining");
  std::string pre_corpus, pre_out = "pretrain_out", pre_fusion = "early",
              pre_impute = "zero";
  std::int64_t pre_epochs = 50, pre_batch = 4, pre_levels = 2, pre_features = 8,
               pre_save_every = 0;
  double pre_lr = 1e-4, pre_ratio = 0.5, pre_lambda = 0.2;
  std::vector<std::int64_t> pre_crop{24, 32, 32}, pre_patch{6, 8, 8};
  add_train_opts(spre, pre_corpus, pre_out, pre_epochs, pre_batch, pre_lr,
                 pre_crop, pre_patch, pre_levels, pre_features, pre_fusion);
  spre->add_option("--mask-ratio", pre_ratio, "masked patch fraction");
  spre->add_option("--lambda", pre_lambda, "visible-term weight");
  spre->add_option("--impute", pre_impute, "zero|token")
      ->check(CLI::IsMember({"zero", "token"}));
  spre->add_option("--save-every", pre_save_every, "checkpoint every N epochs");

  auto* sft = app.add_subcommand("finetune", "full DiceCE fine-tuning");
  std::string ft_corpus, ft_out = "finetune_out", ft_fusion = "early",
              ft_init, ft_freeze = "none";
  std::int64_t ft_epochs = 100, ft_batch = 4, ft_levels = 2, ft_features = 8;
  double ft_lr = 1e-4, ft_fraction = 1.0;
  std::vector<std::int64_t> ft_crop{24, 32, 32}, ft_patch{6, 8, 8};
  add_train_opts(sft, ft_corpus, ft_out, ft_epochs, ft_batch, ft_lr, ft_crop,
                 ft_patch, ft_levels, ft_features, ft_fusion);
  sft->add_option("--init", ft_init, "pretrain checkpoint directory");
  sft->add_option("--fraction", ft_fraction, "labeled-data fraction (0, 1]");
  sft->add_option("--freeze", ft_freeze, "none|probe|all")
      ->check(CLI::IsMember({"none", "probe", "all"}));

  auto* spr = app.add_subcommand("probe", "few-shot linear probing");
  std::string probe_corpus, probe_out = "probe_out", probe_fusion = "early",
              probe_init;
  std::int64_t probe_epochs = 100, probe_batch = 4, probe_levels = 2,
               probe_features = 8, probe_k = 5;
  double probe_lr = 1e-3;
  std::vector<std::int64_t> probe_crop{24, 32, 32}, probe_patch{6, 8, 8};
  add_train_opts(spr, probe_corpus, probe_out, probe_epochs, probe_batch,
                 probe_lr, probe_crop, probe_patch, probe_levels,
                 probe_features, probe_fusion);
  spr->add_option("--init", probe_init, "pretrain checkpoint directory");
  spr->add_option("--k", probe_k, "labeled scans for probing");

  auto* si = app.add_subcommand("infer", "sliding-window segmentation");
  std::string i_ckpt, i_ct, i_pet, i_out = "pred.nii";
  std::vector<std::int64_t> i_window;
  double i_overlap = 0.5;
  si->add_option("--ckpt", i_ckpt, "checkpoint directory")->required();
  si->add_option("--ct", i_ct, "CT NIfTI")->required();
  si->add_option("--pet", i_pet, "PET NIfTI")->required();
  si->add_option("--out", i_out, "output mask NIfTI");
  si->add_option("--window", i_window, "window extents Z Y X")->expected(3);
  si->add_option("--overlap", i_overlap, "window overlap in [0, 1)");

  auto* se = app.add_subcommand("eval", "Dice/HD95 CSV over a corpus");
  std::string e_corpus, e_pred, e_out = "scores.csv";
  se->add_option("--corpus", e_corpus, "corpus with reference labels")
      ->required();
  se->add_option("--pred", e_pred, "directory of pred_<id>.nii masks")
      ->required();
  se->add_option("--out", e_out, "output CSV path");

  auto* sr = app.add_subcommand("recon-demo",
                                "masked/reconstructed/original slice triptychs");
  std::string r_ckpt, r_ct, r_pet, r_out = "recon_demo";
  double r_ratio = 0.5;
  sr->add_option("--ckpt", r_ckpt, "checkpoint directory")->required();
  sr->add_option("--ct", r_ct, "harmonized CT NIfTI")->required();
  sr->add_option("--pet", r_pet, "harmonized PET NIfTI")->required();
  sr->add_option("--out", r_out, "output directory");
  sr->add_option("--ratio", r_ratio, "masked patch fraction");
  sr->add_option("--seed", seed, "mask seed")->envname("PETMAE_SEED");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e); // prints help or the parse error
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  set_threads(threads);

  try {
    if (sp->parsed())
      return cmd_phantom(p_out, p_n, seed, p_shape, p_spacing, p_rho);
    if (sh->parsed())
      return cmd_harmonize(h_in, h_out, h_spacing, h_register, h_threshold,
                           h_margin);
    if (spre->parsed()) {
      TrainConfig cfg = parse_train_config(
          pre_epochs, pre_batch, pre_lr, pre_ratio, pre_lambda, pre_crop,
          pre_patch, seed, pre_fusion, pre_impute, pre_levels, pre_features,
          pre_save_every, pre_out);
      return cmd_pretrain(pre_corpus, pre_out, cfg);
    }
    if (sft->parsed()) {
      TrainConfig cfg = parse_train_config(
          ft_epochs, ft_batch, ft_lr, 0.5, 0.2, ft_crop, ft_patch, seed,
          ft_fusion, "zero", ft_levels, ft_features, 0, ft_out);
      cfg.freeze = ft_freeze == "all"
                       ? FreezeSpec::ALL
                       : (ft_freeze == "probe"
                              ? FreezeSpec::ALL_BUT_LAST_DECODER_LAYER
                              : FreezeSpec::NONE);
      return cmd_supervised(ft_corpus, ft_out, cfg, ft_init, ft_fraction, 0,
                            false);
    }
    if (spr->parsed()) {
      TrainConfig cfg = parse_train_config(
          probe_epochs, probe_batch, probe_lr, 0.5, 0.2, probe_crop,
          probe_patch, seed, probe_fusion, "zero", probe_levels,
          probe_features, 0, probe_out);
      return cmd_supervised(probe_corpus, probe_out, cfg, probe_init, 1.0,
                            probe_k, true);
    }
    if (si->parsed())
      return cmd_infer(i_ckpt, i_ct, i_pet, i_out, i_window, i_overlap);
    if (se->parsed()) return cmd_eval(e_corpus, e_pred, e_out);
    if (sr->parsed())
      return cmd_recon_demo(r_ckpt, r_ct, r_pet, r_out, seed, r_ratio);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

} // namespace petmae::cli
