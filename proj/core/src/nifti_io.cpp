#include "petmae/nifti_io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "petmae/error.hpp"

namespace petmae {
namespace {

// NIfTI-1 field offsets within the 348-byte header.
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffSformCode = 254;
constexpr std::size_t kOffSrowX = 280;
constexpr std::size_t kOffSrowY = 296;
constexpr std::size_t kOffSrowZ = 312;
constexpr std::size_t kOffMagic = 344;

template <typename T>
T load_le(const std::byte* p, bool swap) {
  static_assert(std::endian::native == std::endian::little,
                "byte-order helpers assume a little-endian host");
  T v;
  std::memcpy(&v, p, sizeof(T));
  if (swap) {
    auto bytes = std::bit_cast<std::array<std::byte, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    v = std::bit_cast<T>(bytes);
  }
  return v;
}

template <typename T>
void store_le(std::byte* p, T v) {
  std::memcpy(p, &v, sizeof(T));
}

} // namespace

NiftiHeader parse_header(std::span<const std::byte> bytes) {
  if (bytes.size() != kNiftiHeaderSize)
    throw Error(ErrorCode::BadDims, "header must be exactly 348 bytes");

  NiftiHeader h;
  std::memcpy(h.magic.data(), bytes.data() + kOffMagic, 4);
  const bool n_plus_1 = std::memcmp(h.magic.data(), "n+1\0", 4) == 0;
  const bool ni1 = std::memcmp(h.magic.data(), "ni1\0", 4) == 0;
  if (!n_plus_1 && !ni1)
    throw Error(ErrorCode::BadMagic, "magic is not n+1 or ni1");

  std::int32_t native = load_le<std::int32_t>(bytes.data(), false);
  if (native == 348) {
    h.swapped = false;
  } else if (load_le<std::int32_t>(bytes.data(), true) == 348) {
    h.swapped = true;
  } else {
    throw Error(ErrorCode::BadDims, "sizeof_hdr is not 348 in either byte order");
  }
  const bool sw = h.swapped;
  h.sizeof_hdr = 348;

  for (int i = 0; i < 8; ++i)
    h.dim[i] = load_le<std::int16_t>(bytes.data() + kOffDim + 2 * i, sw);
  h.datatype_code = load_le<std::int16_t>(bytes.data() + kOffDatatype, sw);
  h.bitpix = load_le<std::int16_t>(bytes.data() + kOffBitpix, sw);
  for (int i = 0; i < 8; ++i)
    h.pixdim[i] = load_le<float>(bytes.data() + kOffPixdim + 4 * i, sw);
  h.vox_offset = load_le<float>(bytes.data() + kOffVoxOffset, sw);
  h.scl_slope = load_le<float>(bytes.data() + kOffSclSlope, sw);
  h.scl_inter = load_le<float>(bytes.data() + kOffSclInter, sw);
  h.sform_code = load_le<std::int16_t>(bytes.data() + kOffSformCode, sw);
  for (int i = 0; i < 4; ++i) {
    h.srow_x[i] = load_le<float>(bytes.data() + kOffSrowX + 4 * i, sw);
    h.srow_y[i] = load_le<float>(bytes.data() + kOffSrowY + 4 * i, sw);
    h.srow_z[i] = load_le<float>(bytes.data() + kOffSrowZ + 4 * i, sw);
  }

  if (h.datatype_code != 4 && h.datatype_code != 16)
    throw Error(ErrorCode::UnsupportedDatatype,
                "datatype code " + std::to_string(h.datatype_code) +
                    " (only 4 = int16 and 16 = float32 are supported)");
  if (h.dim[0] < 3 || h.dim[0] > 4)
    throw Error(ErrorCode::BadDims,
                "dim[0] = " + std::to_string(h.dim[0]) + ", expected 3 or 4");
  for (int i = 1; i <= h.dim[0]; ++i)
    if (h.dim[i] < 1)
      throw Error(ErrorCode::BadDims, "extent " + std::to_string(i) + " < 1");
  if (n_plus_1 && h.vox_offset < 352.0f)
    throw Error(ErrorCode::BadDims, "vox_offset < 352 for a single-file image");
  return h;
}

std::array<std::byte, kNiftiHeaderSize> encode_header(const NiftiHeader& h) {
  std::array<std::byte, kNiftiHeaderSize> bytes{};
  store_le<std::int32_t>(bytes.data(), 348);
  for (int i = 0; i < 8; ++i)
    store_le<std::int16_t>(bytes.data() + kOffDim + 2 * i, h.dim[i]);
  store_le<std::int16_t>(bytes.data() + kOffDatatype, h.datatype_code);
  store_le<std::int16_t>(bytes.data() + kOffBitpix, h.bitpix);
  for (int i = 0; i < 8; ++i)
    store_le<float>(bytes.data() + kOffPixdim + 4 * i, h.pixdim[i]);
  store_le<float>(bytes.data() + kOffVoxOffset, h.vox_offset);
  store_le<float>(bytes.data() + kOffSclSlope, h.scl_slope);
  store_le<float>(bytes.data() + kOffSclInter, h.scl_inter);
  store_le<std::int16_t>(bytes.data() + kOffSformCode, h.sform_code);
  for (int i = 0; i < 4; ++i) {
    store_le<float>(bytes.data() + kOffSrowX + 4 * i, h.srow_x[i]);
    store_le<float>(bytes.data() + kOffSrowY + 4 * i, h.srow_y[i]);
    store_le<float>(bytes.data() + kOffSrowZ + 4 * i, h.srow_z[i]);
  }
  std::memcpy(bytes.data() + kOffMagic, h.magic.data(), 4);
  return bytes;
}

Volume read_nifti(const std::string& path, ChannelLabel label) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);

  std::array<std::byte, kNiftiHeaderSize> raw;
  in.read(reinterpret_cast<char*>(raw.data()), kNiftiHeaderSize);
  if (in.gcount() != static_cast<std::streamsize>(kNiftiHeaderSize))
    throw Error(ErrorCode::TruncatedData, "file shorter than the 348-byte header");
  NiftiHeader h = parse_header(raw);

  const std::int64_t x = h.dim[1], y = h.dim[2], z = h.dim[3];
  const std::int64_t t = h.dim[0] == 4 ? h.dim[4] : 1;
  if (t != 1)
    throw Error(ErrorCode::BadDims, "4D files with more than one volume are unsupported");
  const std::int64_t n = x * y * z;
  const std::size_t elem = h.datatype_code == 4 ? 2 : 4;

  in.seekg(static_cast<std::streamoff>(h.vox_offset), std::ios::beg);
  std::vector<std::byte> payload(static_cast<std::size_t>(n) * elem);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size()));
  if (in.gcount() != static_cast<std::streamsize>(payload.size()))
    throw Error(ErrorCode::TruncatedData,
                "payload shorter than dim product times element size");

  const double slope = h.scl_slope == 0.0f ? 1.0 : static_cast<double>(h.scl_slope);
  const double inter = static_cast<double>(h.scl_inter);

  Volume v(1, z, y, x,
           {static_cast<double>(h.pixdim[3]), static_cast<double>(h.pixdim[2]),
            static_cast<double>(h.pixdim[1])},
           {0.0, 0.0, 0.0}, label);
  if (h.sform_code >= 1)
    v.origin = {static_cast<double>(h.srow_z[3]), static_cast<double>(h.srow_y[3]),
                static_cast<double>(h.srow_x[3])};

  // NIfTI stores x fastest, matching the volume layout.
  for (std::int64_t i = 0; i < n; ++i) {
    double stored;
    if (h.datatype_code == 4)
      stored = static_cast<double>(
          load_le<std::int16_t>(payload.data() + 2 * i, h.swapped));
    else
      stored = static_cast<double>(
          load_le<float>(payload.data() + 4 * i, h.swapped));
    v.data[i] = stored * slope + inter;
  }
  return v;
}

void write_nifti(const Volume& volume, const std::string& path) {
  if (volume.channels != 1)
    throw Error(ErrorCode::MultiChannel,
                "NIfTI export is single-channel; write CT and PET separately");

  NiftiHeader h;
  h.dim = {3, static_cast<std::int16_t>(volume.nx),
           static_cast<std::int16_t>(volume.ny),
           static_cast<std::int16_t>(volume.nz), 1, 1, 1, 1};
  h.datatype_code = 16;
  h.bitpix = 32;
  h.pixdim = {1.0f, static_cast<float>(volume.spacing[2]),
              static_cast<float>(volume.spacing[1]),
              static_cast<float>(volume.spacing[0]), 0, 0, 0, 0};
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.sform_code = 1;
  h.srow_x = {static_cast<float>(volume.spacing[2]), 0, 0,
              static_cast<float>(volume.origin[2])};
  h.srow_y = {0, static_cast<float>(volume.spacing[1]), 0,
              static_cast<float>(volume.origin[1])};
  h.srow_z = {0, 0, static_cast<float>(volume.spacing[0]),
              static_cast<float>(volume.origin[0])};

  auto raw = encode_header(h);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + tmp);
    out.write(reinterpret_cast<const char*>(raw.data()), raw.size());
    const char extender[4] = {0, 0, 0, 0};
    out.write(extender, 4);
    for (double d : volume.data) {
      float f = static_cast<float>(d);
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
    if (!out) throw Error(ErrorCode::IoFailure, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "rename failed: " + ec.message());
}

} // namespace petmae
