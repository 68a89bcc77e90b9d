#include "petmae/unet.hpp"

#include <cmath>

#include "petmae/error.hpp"
#include "petmae/rng.hpp"

namespace petmae {

namespace {

TensorPtr init_conv_weight(Rng& rng, const std::string& name, std::int64_t co,
                           std::int64_t ci, std::int64_t k) {
  const std::int64_t fan_in = ci * k * k * k;
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> w(static_cast<std::size_t>(co * fan_in));
  for (double& v : w) v = std_dev * rng.next_normal();
  return make_tensor({co, ci, k, k, k}, std::move(w), true, name);
}

struct Conv {
  TensorPtr w, b;
  std::int64_t stride, pad;
};

} // namespace

TensorPtr Model::param(const std::string& name) const {
  auto it = param_by_name.find(name);
  if (it == param_by_name.end())
    throw Error(ErrorCode::BadConfig, "no parameter named " + name);
  return it->second;
}

std::int64_t Model::parameter_count() const {
  std::int64_t n = 0;
  for (const TensorPtr& p : params) n += p->size();
  return n;
}

std::vector<std::pair<std::string, std::vector<std::int64_t>>>
Model::manifest() const {
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> out;
  out.reserve(params.size());
  for (const TensorPtr& p : params) out.emplace_back(p->name, p->shape);
  return out;
}

const std::vector<std::string>& Model::head_param_names() {
  static const std::vector<std::string> names = {"head.w", "head.b"};
  return names;
}

Model build_unet(const UNetConfig& cfg) {
  if (cfg.levels < 1 || cfg.base_features < 1 || cfg.in_channels < 1 ||
      cfg.out_channels < 1)
    throw Error(ErrorCode::BadConfig, "levels, features and channels must be >= 1");
  if (cfg.fusion == FusionMode::SEPARATE_ENCODERS && cfg.in_channels != 2)
    throw Error(ErrorCode::BadConfig, "separate encoders expect 2 input channels");

  Model m;
  m.cfg = cfg;
  Rng rng(cfg.seed);

  const std::int64_t F = cfg.base_features;
  const std::int64_t L = cfg.levels;
  auto width = [F](std::int64_t level) { return F << level; }; // F * 2^level

  auto add_conv = [&](const std::string& name, std::int64_t co, std::int64_t ci,
                      std::int64_t k) {
    TensorPtr w = init_conv_weight(rng, name + ".w", co, ci, k);
    TensorPtr b = make_tensor({co}, 0.0, true, name + ".b");
    m.params.push_back(w);
    m.params.push_back(b);
    m.param_by_name[w->name] = w;
    m.param_by_name[b->name] = b;
  };

  if (cfg.fusion == FusionMode::EARLY_CONCAT) {
    add_conv("stem", F, cfg.in_channels, 3);
    for (std::int64_t l = 1; l < L; ++l)
      add_conv("enc" + std::to_string(l), width(l), width(l - 1), 3);
  } else {
    const std::int64_t Fh = (F + 1) / 2;
    for (const char* side : {"ct", "pet"}) {
      add_conv(std::string("stem_") + side, Fh, 1, 3);
      for (std::int64_t l = 1; l < L; ++l)
        add_conv("enc" + std::to_string(l) + "_" + side, Fh << l,
                 Fh << (l - 1), 3);
    }
  }
  // two-conv bottleneck keeps the decoder the dominant share of parameters
  std::int64_t bott_in = width(L - 1);
  if (cfg.fusion == FusionMode::SEPARATE_ENCODERS)
    bott_in = 2 * (((F + 1) / 2) << (L - 1));
  add_conv("bott1", width(L - 1), bott_in, 3);
  add_conv("bott2", width(L - 1), width(L - 1), 3);
  for (std::int64_t l = L - 1; l >= 1; --l) {
    add_conv("dec" + std::to_string(l) + ".up", width(l - 1), width(l), 3);
    std::int64_t skip_ch = width(l - 1);
    if (cfg.fusion == FusionMode::SEPARATE_ENCODERS)
      skip_ch = 2 * (((F + 1) / 2) << (l - 1));
    add_conv("dec" + std::to_string(l) + ".fuse", width(l - 1),
             width(l - 1) + skip_ch, 3);
  }
  add_conv("head", cfg.out_channels, F, 1);
  return m;
}

TensorPtr Model::forward(const TensorPtr& x) const {
  if (x->shape.size() != 5 || x->shape[1] != cfg.in_channels)
    throw Error(ErrorCode::BadShape, "input must be [B, C_in, Z, Y, X]");
  const std::int64_t div = std::int64_t{1} << (cfg.levels - 1);
  for (int a = 2; a < 5; ++a)
    if (x->shape[a] % div != 0)
      throw Error(ErrorCode::BadShape,
                  "spatial extents must be divisible by 2^(levels-1)");

  auto conv = [&](const std::string& name, const TensorPtr& in,
                  std::int64_t stride, std::int64_t pad) {
    return conv3d(in, param(name + ".w"), param(name + ".b"), stride, pad);
  };

  const std::int64_t L = cfg.levels;
  std::vector<TensorPtr> skips; // full resolution first

  TensorPtr h;
  if (cfg.fusion == FusionMode::EARLY_CONCAT) {
    h = relu(conv("stem", x, 1, 1));
    skips.push_back(h);
    for (std::int64_t l = 1; l < L; ++l) {
      h = relu(conv("enc" + std::to_string(l), h, 2, 1));
      skips.push_back(h);
    }
  } else {
    TensorPtr hc = relu(conv("stem_ct", slice_c(x, 0, 1), 1, 1));
    TensorPtr hp = relu(conv("stem_pet", slice_c(x, 1, 1), 1, 1));
    skips.push_back(concat_c(hc, hp));
    for (std::int64_t l = 1; l < L; ++l) {
      hc = relu(conv("enc" + std::to_string(l) + "_ct", hc, 2, 1));
      hp = relu(conv("enc" + std::to_string(l) + "_pet", hp, 2, 1));
      skips.push_back(concat_c(hc, hp));
    }
    h = skips.back();
  }

  h = relu(conv("bott1", h, 1, 1));
  h = relu(conv("bott2", h, 1, 1));

  for (std::int64_t l = L - 1; l >= 1; --l) {
    h = nearest_upsample2x(h);
    h = relu(conv("dec" + std::to_string(l) + ".up", h, 1, 1));
    h = concat_c(h, skips[static_cast<std::size_t>(l - 1)]);
    h = relu(conv("dec" + std::to_string(l) + ".fuse", h, 1, 1));
  }
  return conv("head", h, 1, 0);
}

} // namespace petmae
