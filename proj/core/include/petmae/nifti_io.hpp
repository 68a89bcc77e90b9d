#ifndef PETMAE_NIFTI_IO_HPP
#define PETMAE_NIFTI_IO_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "petmae/volume.hpp"

namespace petmae {

inline constexpr std::size_t kNiftiHeaderSize = 348;

/// The NIfTI-1 header subset this reader understands. Only scalar int16
/// (code 4) and float32 (code 16) payloads are accepted; everything is
/// resolved to native byte order at parse time.
struct NiftiHeader {
  std::int32_t sizeof_hdr = 348;
  std::array<std::int16_t, 8> dim{};
  std::int16_t datatype_code = 0;
  std::int16_t bitpix = 0;
  std::array<float, 8> pixdim{};
  float vox_offset = 352.0f;
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  std::int16_t sform_code = 0;
  std::array<float, 4> srow_x{};
  std::array<float, 4> srow_y{};
  std::array<float, 4> srow_z{};
  std::array<char, 4> magic{'n', '+', '1', '\0'};
  bool swapped = false; // input was byte-swapped relative to host
};

/// Parse exactly 348 header bytes, auto-detecting byte order via sizeof_hdr.
NiftiHeader parse_header(std::span<const std::byte> bytes);

/// Serialize a header to the canonical little-endian 348-byte layout.
std::array<std::byte, kNiftiHeaderSize> encode_header(const NiftiHeader& h);

/// Read a single-file .nii volume. Stored values are mapped through
/// value * scl_slope + scl_inter (slope 0 acts as 1) and promoted to double.
Volume read_nifti(const std::string& path,
                  ChannelLabel label = ChannelLabel::GENERIC);

/// Write a single-channel volume as little-endian float32, vox_offset 352,
/// sform_code 1 with a diagonal affine built from spacing and origin.
void write_nifti(const Volume& volume, const std::string& path);

} // namespace petmae

#endif
