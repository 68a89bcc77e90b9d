#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "petmae/checkpoint.hpp"
#include "petmae/error.hpp"
#include "petmae/losses.hpp"
#include "petmae/masking.hpp"
#include "petmae/optim.hpp"
#include "petmae/phantom.hpp"
#include "petmae/trainer.hpp"
#include "test_support.hpp"

using namespace petmae;

namespace {

std::vector<Volume> tiny_corpus(int n, std::uint64_t seed,
                                std::vector<Volume>* labels = nullptr,
                                double rho = 0.8) {
  PhantomConfig cfg;
  cfg.shape = {16, 16, 16};
  cfg.spacing = {2.0, 2.0, 3.0};
  cfg.rho = rho;
  std::vector<Volume> corpus;
  for (int i = 0; i < n; ++i) {
    Phantom ph = generate_phantom(cfg, Rng::derive(seed, std::uint64_t(i)));
    Volume ct = zscore_normalize(ph.ct);
    Volume pet = zscore_normalize(ph.pet);
    ct.labels[0] = ChannelLabel::CT;
    pet.labels[0] = ChannelLabel::PET;
    corpus.push_back(concat_channels(ct, pet));
    if (labels) labels->push_back(ph.labels);
  }
  return corpus;
}

TrainConfig tiny_cfg() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.crop_shape = {8, 8, 8};
  cfg.patch_shape = {4, 4, 4};
  cfg.net.base_features = 4;
  cfg.seed = 555;
  return cfg;
}

} // namespace

TEST_CASE("cosine schedule closed form") {
  CHECK(cosine_lr(0, 100, 1e-4) == 1e-4);
  CHECK(cosine_lr(100, 100, 1e-4) == doctest::Approx(0.0).epsilon(1e-20));
  CHECK(cosine_lr(50, 100, 1e-4, 0.0) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(cosine_lr(0, 10, 1e-3, 1e-5) == 1e-3);
  CHECK(cosine_lr(10, 10, 1e-3, 1e-5) == doctest::Approx(1e-5).epsilon(1e-12));
}

TEST_CASE("adam: zero gradients leave params unchanged, moments decay") {
  auto p = make_tensor({2}, std::vector<double>{1.0, -2.0}, true, "p");
  p->grad = {0.0, 0.0};
  AdamState state;
  state.m["p"] = {0.5, 0.5};
  state.v["p"] = {0.25, 0.25};
  adam_step({p}, state, 1e-2);
  CHECK(p->values[0] == 1.0);
  CHECK(p->values[1] == -2.0);
  CHECK(state.m["p"][0] == doctest::Approx(0.45));
  CHECK(state.v["p"][0] == doctest::Approx(0.25 * 0.999));
}

TEST_CASE("adam first step with unit gradient moves by lr/(1+1e-8)") {
  auto p = make_tensor({1}, std::vector<double>{0.0}, true, "p");
  p->grad = {1.0};
  AdamState state;
  const double lr = 3e-3;
  adam_step({p}, state, lr);
  CHECK(p->values[0] == doctest::Approx(-lr / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam is deterministic over repeated runs") {
  auto run = []() {
    auto p = make_tensor({3}, std::vector<double>{0.1, 0.2, 0.3}, true, "p");
    AdamState st;
    Rng rng(99);
    for (int step = 0; step < 10; ++step) {
      for (std::size_t i = 0; i < 3; ++i) p->grad[i] = rng.next_normal();
      adam_step({p}, st, 1e-2);
    }
    return p->values;
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint round-trip is bit-identical") {
  Checkpoint ck;
  ck.config = {{"alpha", 1}, {"note", "round-trip"}};
  ck.epoch = 3;
  ck.loss_history = {{0, 0, 1.5, 1e-4}, {1, 0, 1.25, 9e-5}};
  Rng rng(7);
  std::vector<double> a(17), b(5);
  for (double& v : a) v = rng.next_normal() * 1e3;
  for (double& v : b) v = rng.next_normal() * 1e-7;
  ck.put("w", {17}, a);
  ck.put("adam.m/w", {5}, b);

  const std::string dir =
      (std::filesystem::temp_directory_path() / "petmae_ckpt_rt").string();
  save_checkpoint(ck, dir);
  Checkpoint back = load_checkpoint(dir);
  CHECK(back.format_version == kCheckpointVersion);
  CHECK(back.epoch == 3);
  CHECK(back.loss_history.size() == 2);
  CHECK(back.tensors.at("w") == a);
  CHECK(back.tensors.at("adam.m/w") == b);
  CHECK(back.shapes.at("w") == std::vector<std::int64_t>{17});
  CHECK(back.config["alpha"] == 1);
}

TEST_CASE("manifest offset beyond the blob raises BlobOutOfBounds") {
  Checkpoint ck;
  ck.put("w", {4}, {1, 2, 3, 4});
  const std::string dir =
      (std::filesystem::temp_directory_path() / "petmae_ckpt_oob").string();
  save_checkpoint(ck, dir);

  // rewrite the manifest with a bogus offset
  std::ifstream in(dir + "/manifest.json");
  nlohmann::json manifest;
  in >> manifest;
  manifest["tensors"]["w"]["offset"] = 1 << 20;
  std::ofstream out(dir + "/manifest.json", std::ios::trunc);
  out << manifest.dump();
  out.close();
  CHECK_THROWS_WITH_AS((void)load_checkpoint(dir),
                       doctest::Contains("BlobOutOfBounds"), Error);
}

TEST_CASE("version mismatch is refused") {
  Checkpoint ck;
  ck.put("w", {1}, {1.0});
  const std::string dir =
      (std::filesystem::temp_directory_path() / "petmae_ckpt_ver").string();
  save_checkpoint(ck, dir);
  std::ifstream in(dir + "/manifest.json");
  nlohmann::json manifest;
  in >> manifest;
  manifest["format_version"] = 999;
  std::ofstream out(dir + "/manifest.json", std::ios::trunc);
  out << manifest.dump();
  out.close();
  CHECK_THROWS_WITH_AS((void)load_checkpoint(dir),
                       doctest::Contains("VersionMismatch"), Error);
}

TEST_CASE("corrupt manifest raises CorruptManifest") {
  const std::string dir =
      (std::filesystem::temp_directory_path() / "petmae_ckpt_bad").string();
  std::filesystem::create_directories(dir);
  std::ofstream(dir + "/manifest.json") << "{not json";
  std::ofstream(dir + "/params.bin") << "";
  CHECK_THROWS_WITH_AS((void)load_checkpoint(dir),
                       doctest::Contains("CorruptManifest"), Error);
}

TEST_CASE("pretrain: epochs 0 leaves the seeded init untouched") {
  auto corpus = tiny_corpus(3, 100);
  TrainConfig cfg = tiny_cfg();
  cfg.epochs = 0;

  TrainResult res = pretrain(corpus, cfg);
  UNetConfig net = cfg.net;
  net.seed = res.model.cfg.seed;
  Model fresh = build_unet(net);
  for (std::size_t i = 0; i < fresh.params.size(); ++i)
    CHECK(res.model.params[i]->values == fresh.params[i]->values);
  CHECK(res.curve.empty());
}

TEST_CASE("pretrain is bit-deterministic in curve and checkpoint") {
  auto corpus = tiny_corpus(4, 200);
  TrainConfig cfg = tiny_cfg();
  TrainResult a = pretrain(corpus, cfg);
  TrainResult b = pretrain(corpus, cfg);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].loss == b.curve[i].loss);
    CHECK(a.curve[i].lr == b.curve[i].lr);
  }
  for (const auto& [name, vals] : a.checkpoint.tensors)
    CHECK(b.checkpoint.tensors.at(name) == vals);
}

TEST_CASE("pretrain logs the closed-form learning rate at every step") {
  auto corpus = tiny_corpus(4, 300);
  TrainConfig cfg = tiny_cfg();
  cfg.epochs = 3;
  TrainResult res = pretrain(corpus, cfg);
  const std::int64_t total = std::int64_t(res.curve.size());
  for (const CurveRow& row : res.curve) {
    const double want = cosine_lr(row.step, total, cfg.lr0, cfg.lr_min);
    CHECK(std::abs(row.lr - want) <= 1e-12 * want);
  }
}

TEST_CASE("pretrain rejects bad inputs") {
  TrainConfig cfg = tiny_cfg();
  CHECK_THROWS_WITH_AS((void)pretrain({}, cfg), doctest::Contains("EmptyCorpus"),
                       Error);
  auto corpus = tiny_corpus(2, 400);
  cfg.patch_shape = {3, 4, 4}; // does not divide 8
  CHECK_THROWS_WITH_AS((void)pretrain(corpus, cfg),
                       doctest::Contains("BadConfig"), Error);
}

TEST_CASE("held-out crop loss does not increase over short pretraining") {
  auto corpus = tiny_corpus(6, 500);
  TrainConfig cfg = tiny_cfg();
  cfg.epochs = 6;
  cfg.net.base_features = 8;

  // held-out phantom crop with a fixed mask seed
  auto held = tiny_corpus(1, 999)[0];
  Rng crop_rng(4321);
  Volume crop = random_crop(held, cfg.crop_shape, crop_rng);
  PatchGrid grid = make_grid(cfg.crop_shape, cfg.patch_shape);
  auto mask = expand_mask(sample_mask(grid, 0.5, 8888), grid);
  auto x_in = make_tensor({1, 2, 8, 8, 8}, impute_zero(crop.data, mask));

  UNetConfig net = cfg.net;
  net.seed = Rng::derive(cfg.seed, 11); // the trainer's model stream
  Model fresh = build_unet(net);
  const double before =
      recon_loss(fresh.forward(x_in), crop.data, mask, cfg.lambda).total;

  TrainResult res = pretrain(corpus, cfg);
  const double after =
      recon_loss(res.model.forward(x_in), crop.data, mask, cfg.lambda).total;
  CHECK(after <= before);
}

TEST_CASE("finetune: freeze-all leaves every tensor bit-identical") {
  std::vector<Volume> labels;
  auto corpus = tiny_corpus(4, 600, &labels);
  TrainConfig cfg = tiny_cfg();
  cfg.objective = Objective::DICE_CE;
  cfg.freeze = FreezeSpec::ALL;
  cfg.epochs = 2;

  TrainResult res = finetune(corpus, labels, cfg, nullptr, 1.0);
  UNetConfig net = cfg.net;
  net.seed = res.model.cfg.seed;
  Model fresh = build_unet(net);
  for (std::size_t i = 0; i < fresh.params.size(); ++i)
    CHECK(res.model.params[i]->values == fresh.params[i]->values);
}

TEST_CASE("finetune: fraction 0.1 of 70 volumes trains on exactly 7") {
  std::vector<Volume> labels;
  auto corpus = tiny_corpus(70, 700, &labels);
  TrainConfig cfg = tiny_cfg();
  cfg.objective = Objective::DICE_CE;
  cfg.epochs = 0;
  TrainResult res = finetune(corpus, labels, cfg, nullptr, 0.1);
  CHECK(res.train_subset.size() == 7);
  CHECK(res.checkpoint.config["n_train"] == 7);
  CHECK(res.val_subset.size() == 14); // fixed 80/20 split
}

TEST_CASE("loading a pretrain checkpoint replaces only the head") {
  auto corpus = tiny_corpus(3, 800);
  TrainConfig pre_cfg = tiny_cfg();
  pre_cfg.epochs = 1;
  TrainResult pre = pretrain(corpus, pre_cfg);

  std::vector<Volume> labels;
  auto sup_corpus = tiny_corpus(3, 801, &labels);
  TrainConfig ft_cfg = tiny_cfg();
  ft_cfg.objective = Objective::DICE_CE;
  ft_cfg.epochs = 0;
  ft_cfg.seed = 777; // different head seed than the pretrain run

  TrainResult ft = finetune(sup_corpus, labels, ft_cfg, &pre.checkpoint, 1.0);
  const auto& head_names = Model::head_param_names();
  for (const TensorPtr& p : ft.model.params) {
    const bool is_head = std::find(head_names.begin(), head_names.end(),
                                   p->name) != head_names.end();
    if (is_head)
      CHECK(p->values != pre.checkpoint.tensors.at(p->name));
    else
      CHECK(p->values == pre.checkpoint.tensors.at(p->name));
  }
}

TEST_CASE("linear probe trains the head only and keeps the rest frozen") {
  auto corpus = tiny_corpus(6, 900);
  TrainConfig pre_cfg = tiny_cfg();
  pre_cfg.epochs = 1;
  TrainResult pre = pretrain(corpus, pre_cfg);

  std::vector<Volume> labels;
  auto sup_corpus = tiny_corpus(6, 901, &labels);
  TrainConfig probe_cfg = tiny_cfg();
  probe_cfg.objective = Objective::DICE_CE;
  probe_cfg.epochs = 2;
  probe_cfg.lr0 = 1e-3;

  TrainResult probe = linear_probe(sup_corpus, labels, probe_cfg, 5,
                                   &pre.checkpoint);
  CHECK(probe.train_subset.size() == 5);

  const auto& head_names = Model::head_param_names();
  bool head_changed = false;
  for (const TensorPtr& p : probe.model.params) {
    const bool is_head = std::find(head_names.begin(), head_names.end(),
                                   p->name) != head_names.end();
    if (is_head) {
      head_changed = true;
    } else {
      CHECK(p->values == pre.checkpoint.tensors.at(p->name));
    }
  }
  CHECK(head_changed);
  CHECK_THROWS_AS(
      (void)linear_probe(sup_corpus, labels, probe_cfg, 7, &pre.checkpoint),
      Error);
}

TEST_CASE("label mismatch is detected") {
  std::vector<Volume> labels;
  auto corpus = tiny_corpus(2, 950, &labels);
  labels[1] = Volume(1, 4, 4, 4);
  TrainConfig cfg = tiny_cfg();
  cfg.objective = Objective::DICE_CE;
  CHECK_THROWS_WITH_AS((void)finetune(corpus, labels, cfg, nullptr, 1.0),
                       doctest::Contains("LabelMismatch"), Error);
}

TEST_CASE("token imputation mode trains the mask tokens") {
  auto corpus = tiny_corpus(3, 960);
  TrainConfig cfg = tiny_cfg();
  cfg.impute = ImputeMode::TOKEN;
  cfg.epochs = 2;
  TrainResult res = pretrain(corpus, cfg);
  REQUIRE(res.checkpoint.tensors.count("mask_tokens") == 1);
  const auto& tokens = res.checkpoint.tensors.at("mask_tokens");
  CHECK(tokens.size() == 2);
  // gradients flow into the tokens, so training moves them off the init
  CHECK((tokens[0] != 0.0 || tokens[1] != 0.0));
}
