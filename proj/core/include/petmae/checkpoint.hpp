#ifndef PETMAE_CHECKPOINT_HPP
#define PETMAE_CHECKPOINT_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace petmae {

inline constexpr int kCheckpointVersion = 1;

/// Named float64 tensors plus training metadata. On disk a checkpoint is a
/// directory holding manifest.json (format version, config echo, epoch,
/// loss history, tensor table) and params.bin (raw little-endian doubles).
struct Checkpoint {
  int format_version = kCheckpointVersion;
  nlohmann::json config;
  std::int64_t epoch = 0;
  // rows of (step, epoch, loss, lr)
  std::vector<std::array<double, 4>> loss_history;
  std::vector<std::string> tensor_order;
  std::map<std::string, std::vector<std::int64_t>> shapes;
  std::map<std::string, std::vector<double>> tensors;

  void put(const std::string& name, std::vector<std::int64_t> shape,
           std::vector<double> values);
};

/// Atomic write: both files land under temp names and are renamed.
void save_checkpoint(const Checkpoint& ckpt, const std::string& dir);

Checkpoint load_checkpoint(const std::string& dir);

} // namespace petmae

#endif
