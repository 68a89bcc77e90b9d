#include "petmae/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "petmae/error.hpp"

namespace petmae {

namespace fs = std::filesystem;

void Checkpoint::put(const std::string& name, std::vector<std::int64_t> shape,
                     std::vector<double> values) {
  std::int64_t n = 1;
  for (std::int64_t e : shape) n *= e;
  if (n != static_cast<std::int64_t>(values.size()))
    throw Error(ErrorCode::ShapeMismatch, "tensor " + name + " shape/value mismatch");
  if (tensors.count(name))
    throw Error(ErrorCode::CorruptManifest, "duplicate tensor name " + name);
  tensor_order.push_back(name);
  shapes[name] = std::move(shape);
  tensors[name] = std::move(values);
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir) {
  fs::create_directories(dir);

  nlohmann::json manifest;
  manifest["format_version"] = ckpt.format_version;
  manifest["config"] = ckpt.config;
  manifest["epoch"] = ckpt.epoch;
  nlohmann::json history = nlohmann::json::array();
  for (const auto& row : ckpt.loss_history)
    history.push_back({row[0], row[1], row[2], row[3]});
  manifest["loss_history"] = history;

  std::int64_t offset = 0;
  nlohmann::json table = nlohmann::json::object();
  for (const std::string& name : ckpt.tensor_order) {
    const auto& vals = ckpt.tensors.at(name);
    const std::int64_t bytes = static_cast<std::int64_t>(vals.size() * sizeof(double));
    table[name] = {{"shape", ckpt.shapes.at(name)},
                   {"dtype", "f64"},
                   {"offset", offset},
                   {"length", bytes}};
    offset += bytes;
  }
  manifest["tensors"] = table;

  const fs::path blob_tmp = fs::path(dir) / "params.bin.tmp";
  const fs::path blob = fs::path(dir) / "params.bin";
  {
    std::ofstream out(blob_tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + blob_tmp.string());
    for (const std::string& name : ckpt.tensor_order) {
      const auto& vals = ckpt.tensors.at(name);
      out.write(reinterpret_cast<const char*>(vals.data()),
                static_cast<std::streamsize>(vals.size() * sizeof(double)));
    }
    if (!out) throw Error(ErrorCode::IoFailure, "short write to " + blob_tmp.string());
  }

  const fs::path man_tmp = fs::path(dir) / "manifest.json.tmp";
  const fs::path man = fs::path(dir) / "manifest.json";
  {
    std::ofstream out(man_tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + man_tmp.string());
    out << manifest.dump(2) << "\n";
  }

  std::error_code ec;
  fs::rename(blob_tmp, blob, ec);
  if (!ec) fs::rename(man_tmp, man, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "rename failed: " + ec.message());
}

Checkpoint load_checkpoint(const std::string& dir) {
  const fs::path man = fs::path(dir) / "manifest.json";
  const fs::path blob = fs::path(dir) / "params.bin";

  std::ifstream min(man);
  if (!min) throw Error(ErrorCode::IoFailure, "cannot open " + man.string());
  nlohmann::json manifest;
  try {
    min >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptManifest, e.what());
  }

  if (!manifest.contains("format_version") || !manifest.contains("tensors"))
    throw Error(ErrorCode::CorruptManifest, "missing required manifest fields");
  Checkpoint ckpt;
  ckpt.format_version = manifest["format_version"].get<int>();
  if (ckpt.format_version != kCheckpointVersion)
    throw Error(ErrorCode::VersionMismatch,
                "checkpoint format " + std::to_string(ckpt.format_version) +
                    ", expected " + std::to_string(kCheckpointVersion));
  ckpt.config = manifest.value("config", nlohmann::json::object());
  ckpt.epoch = manifest.value("epoch", std::int64_t{0});
  for (const auto& row : manifest.value("loss_history", nlohmann::json::array()))
    ckpt.loss_history.push_back(
        {row[0].get<double>(), row[1].get<double>(), row[2].get<double>(),
         row[3].get<double>()});

  std::ifstream bin(blob, std::ios::binary);
  if (!bin) throw Error(ErrorCode::IoFailure, "cannot open " + blob.string());
  bin.seekg(0, std::ios::end);
  const std::int64_t blob_size = static_cast<std::int64_t>(bin.tellg());

  // the table is serialized as an object; recover write order by offset
  std::vector<std::pair<std::int64_t, std::string>> by_offset;
  for (const auto& [name, entry] : manifest["tensors"].items()) {
    if (!entry.contains("shape") || !entry.contains("offset") ||
        !entry.contains("length"))
      throw Error(ErrorCode::CorruptManifest, "incomplete tensor entry " + name);
    by_offset.emplace_back(entry["offset"].get<std::int64_t>(), name);
  }
  std::sort(by_offset.begin(), by_offset.end());

  for (const auto& [offset, name] : by_offset) {
    const auto& entry = manifest["tensors"][name];
    const std::int64_t length = entry["length"].get<std::int64_t>();
    if (offset < 0 || length < 0 || offset + length > blob_size)
      throw Error(ErrorCode::BlobOutOfBounds,
                  "tensor " + name + " lies outside params.bin");
    if (length % static_cast<std::int64_t>(sizeof(double)) != 0)
      throw Error(ErrorCode::CorruptManifest, "length not a multiple of 8");
    std::vector<std::int64_t> shape =
        entry["shape"].get<std::vector<std::int64_t>>();
    std::int64_t n = 1;
    for (std::int64_t e : shape) n *= e;
    if (n * static_cast<std::int64_t>(sizeof(double)) != length)
      throw Error(ErrorCode::CorruptManifest, "shape does not match length");

    std::vector<double> vals(static_cast<std::size_t>(n));
    bin.seekg(offset, std::ios::beg);
    bin.read(reinterpret_cast<char*>(vals.data()),
             static_cast<std::streamsize>(length));
    if (bin.gcount() != static_cast<std::streamsize>(length))
      throw Error(ErrorCode::TruncatedData, "short read from params.bin");
    ckpt.put(name, std::move(shape), std::move(vals));
  }
  return ckpt;
}

} // namespace petmae
