#ifndef PETMAE_UNET_HPP
#define PETMAE_UNET_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "petmae/tensor.hpp"

namespace petmae {

enum class FusionMode { EARLY_CONCAT, SEPARATE_ENCODERS };

struct UNetConfig {
  std::int64_t levels = 2;       // resolutions; levels-1 downsamples
  std::int64_t base_features = 8;
  std::int64_t in_channels = 2;
  std::int64_t out_channels = 2;
  FusionMode fusion = FusionMode::EARLY_CONCAT;
  std::uint64_t seed = 0;
};

/// UNet-shaped convolutional encoder-decoder. EARLY_CONCAT runs one
/// encoder over the stacked CT+PET channels; SEPARATE_ENCODERS runs one
/// half-width encoder per modality and concatenates features level-wise
/// into the same shared decoder. Weights are He-normal (sqrt(2/fan_in)),
/// biases zero, fully determined by the config seed.
struct Model {
  UNetConfig cfg;
  std::vector<TensorPtr> params;                 // fixed declaration order
  std::map<std::string, TensorPtr> param_by_name;

  TensorPtr param(const std::string& name) const;
  std::int64_t parameter_count() const;
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> manifest() const;

  /// Names of the final projection layer ("head.w", "head.b").
  static const std::vector<std::string>& head_param_names();

  TensorPtr forward(const TensorPtr& x) const;
};

Model build_unet(const UNetConfig& cfg);

} // namespace petmae

#endif
