#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "petmae/error.hpp"
#include "petmae/nifti_io.hpp"
#include "test_support.hpp"

using namespace petmae;
using petmae::test::fixture_path;
using petmae::test::make_volume;

namespace {

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<std::byte> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::vector<char> raw((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

} // namespace

TEST_CASE("nifti round-trip preserves header fields, data and spacing") {
  Volume v = make_volume(2, 3, 4, std::vector<double>(24, 0.0), {2.0, 2.0, 3.0},
                         ChannelLabel::CT);
  for (std::size_t i = 0; i < v.data.size(); ++i)
    v.data[i] = 0.5 * static_cast<double>(i) - 3.0;
  v.origin = {1.0, -2.0, 3.5};

  const std::string path = temp_file("petmae_roundtrip.nii");
  write_nifti(v, path);

  auto bytes = read_bytes(path);
  NiftiHeader h = parse_header(
      std::span<const std::byte>(bytes.data(), kNiftiHeaderSize));
  CHECK(h.sizeof_hdr == 348);
  CHECK(h.dim[0] == 3);
  CHECK(h.dim[1] == 4);
  CHECK(h.dim[2] == 3);
  CHECK(h.dim[3] == 2);
  CHECK(h.datatype_code == 16);
  CHECK(h.vox_offset == 352.0f);
  CHECK(h.sform_code == 1);

  // encode(parse(bytes)) reproduces the original header bytes
  auto re = encode_header(h);
  CHECK(std::memcmp(re.data(), bytes.data(), kNiftiHeaderSize) == 0);

  Volume back = read_nifti(path, ChannelLabel::CT);
  CHECK(back.nz == v.nz);
  CHECK(back.ny == v.ny);
  CHECK(back.nx == v.nx);
  CHECK(back.spacing[0] == 2.0);
  CHECK(back.spacing[1] == 2.0);
  CHECK(back.spacing[2] == 3.0);
  for (std::size_t i = 0; i < v.data.size(); ++i)
    CHECK(back.data[i] == static_cast<double>(static_cast<float>(v.data[i])));
}

TEST_CASE("float data with exact float32 values round-trips bit-identically") {
  Volume v = make_volume(2, 2, 2, {1.5, -2.25, 0.0, 1024.0, -0.5, 3.0, 7.0, -8.0});
  const std::string path = temp_file("petmae_bits.nii");
  write_nifti(v, path);
  Volume back = read_nifti(path);
  for (std::size_t i = 0; i < v.data.size(); ++i) CHECK(back.data[i] == v.data[i]);
}

TEST_CASE("2x2x2 zero volume with spacing (2,2,3) is exactly 352+32 bytes") {
  Volume v = make_volume(2, 2, 2, std::vector<double>(8, 0.0), {2.0, 2.0, 3.0});
  const std::string path = temp_file("petmae_size.nii");
  write_nifti(v, path);
  CHECK(std::filesystem::file_size(path) == 352 + 32);
}

TEST_CASE("bad magic is rejected") {
  Volume v = make_volume(2, 2, 2, std::vector<double>(8, 0.0));
  const std::string path = temp_file("petmae_magic.nii");
  write_nifti(v, path);
  auto bytes = read_bytes(path);
  std::memcpy(bytes.data() + 344, "XXXX", 4);
  CHECK_THROWS_WITH_AS(
      (void)parse_header(std::span<const std::byte>(bytes.data(), 348)),
      doctest::Contains("BadMagic"), Error);
}

TEST_CASE("unsupported datatype and bad dims are rejected") {
  Volume v = make_volume(2, 2, 2, std::vector<double>(8, 0.0));
  const std::string path = temp_file("petmae_dtype.nii");
  write_nifti(v, path);
  auto bytes = read_bytes(path);

  SUBCASE("datatype code 8 (int32)") {
    const std::int16_t dt = 8;
    std::memcpy(bytes.data() + 70, &dt, 2);
    CHECK_THROWS_AS((void)parse_header({bytes.data(), 348}), Error);
  }
  SUBCASE("dim[0] = 2") {
    const std::int16_t d0 = 2;
    std::memcpy(bytes.data() + 40, &d0, 2);
    CHECK_THROWS_AS((void)parse_header({bytes.data(), 348}), Error);
  }
  SUBCASE("zero extent") {
    const std::int16_t e = 0;
    std::memcpy(bytes.data() + 42, &e, 2);
    CHECK_THROWS_AS((void)parse_header({bytes.data(), 348}), Error);
  }
  SUBCASE("vox_offset below 352") {
    const float off = 200.0f;
    std::memcpy(bytes.data() + 108, &off, 4);
    CHECK_THROWS_AS((void)parse_header({bytes.data(), 348}), Error);
  }
}

TEST_CASE("int16 scaling: stored 3 with slope 2 and inter -1 reads as 5") {
  // hand-built int16 file
  NiftiHeader h;
  h.dim = {3, 2, 1, 1, 1, 1, 1, 1};
  h.datatype_code = 4;
  h.bitpix = 16;
  h.pixdim = {1, 1, 1, 1, 0, 0, 0, 0};
  h.vox_offset = 352.0f;
  h.scl_slope = 2.0f;
  h.scl_inter = -1.0f;
  auto bytes = encode_header(h);

  const std::string path = temp_file("petmae_scale.nii");
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    const char pad[4] = {0, 0, 0, 0};
    out.write(pad, 4);
    const std::int16_t vals[2] = {3, -4};
    out.write(reinterpret_cast<const char*>(vals), 4);
  }
  Volume v = read_nifti(path);
  CHECK(v.data[0] == 5.0);
  CHECK(v.data[1] == -9.0);
}

TEST_CASE("scl_slope 0 acts as 1") {
  NiftiHeader h;
  h.dim = {3, 1, 1, 1, 1, 1, 1, 1};
  h.datatype_code = 4;
  h.bitpix = 16;
  h.pixdim = {1, 1, 1, 1, 0, 0, 0, 0};
  h.vox_offset = 352.0f;
  h.scl_slope = 0.0f;
  h.scl_inter = 0.0f;
  auto bytes = encode_header(h);
  const std::string path = temp_file("petmae_slope0.nii");
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    const char pad[4] = {0, 0, 0, 0};
    out.write(pad, 4);
    const std::int16_t val = 12;
    out.write(reinterpret_cast<const char*>(&val), 2);
  }
  CHECK(read_nifti(path).data[0] == 12.0);
}

TEST_CASE("truncated payload is detected") {
  Volume v = make_volume(4, 4, 4, std::vector<double>(64, 1.0));
  const std::string path = temp_file("petmae_trunc.nii");
  write_nifti(v, path);
  std::filesystem::resize_file(path, 352 + 128); // half the payload
  CHECK_THROWS_WITH_AS((void)read_nifti(path), doctest::Contains("TruncatedData"),
                       Error);
}

TEST_CASE("multichannel volumes are refused by the writer") {
  Volume two(2, 2, 2, 2);
  CHECK_THROWS_WITH_AS(write_nifti(two, temp_file("petmae_2ch.nii")),
                       doctest::Contains("MultiChannel"), Error);
}

TEST_CASE("independently generated fixture parses to the documented values") {
  auto expect_file = std::ifstream(fixture_path("ref_4x4x4_expected.json"));
  nlohmann::json expected;
  expect_file >> expected;

  for (const char* name : {"ref_4x4x4_le.nii", "ref_4x4x4_be.nii"}) {
    CAPTURE(name);
    Volume v = read_nifti(fixture_path(name));
    CHECK(v.nx == expected["dim_xyz"][0].get<std::int64_t>());
    CHECK(v.ny == expected["dim_xyz"][1].get<std::int64_t>());
    CHECK(v.nz == expected["dim_xyz"][2].get<std::int64_t>());
    CHECK(v.spacing[2] == doctest::Approx(expected["pixdim_xyz"][0].get<double>()));
    CHECK(v.spacing[1] == doctest::Approx(expected["pixdim_xyz"][1].get<double>()));
    CHECK(v.spacing[0] == doctest::Approx(expected["pixdim_xyz"][2].get<double>()));
    CHECK(v.origin[2] == doctest::Approx(expected["origin_xyz"][0].get<double>()));
    const auto& vals = expected["values"];
    REQUIRE(v.data.size() == vals.size());
    for (std::size_t i = 0; i < v.data.size(); ++i)
      CHECK(v.data[i] == vals[i].get<double>());
  }
}

TEST_CASE("byte-swapped twin parses to the same header as the LE original") {
  auto le = read_bytes(fixture_path("ref_4x4x4_le.nii"));
  auto be = read_bytes(fixture_path("ref_4x4x4_be.nii"));
  NiftiHeader hl = parse_header({le.data(), kNiftiHeaderSize});
  NiftiHeader hb = parse_header({be.data(), kNiftiHeaderSize});
  CHECK(hl.swapped == false);
  CHECK(hb.swapped == true);
  CHECK(hl.dim == hb.dim);
  CHECK(hl.datatype_code == hb.datatype_code);
  CHECK(hl.pixdim == hb.pixdim);
  CHECK(hl.vox_offset == hb.vox_offset);
  CHECK(hl.srow_x == hb.srow_x);
  CHECK(hl.srow_y == hb.srow_y);
  CHECK(hl.srow_z == hb.srow_z);
}

TEST_CASE("header parsing demands exactly 348 bytes") {
  std::vector<std::byte> small(100);
  CHECK_THROWS_AS((void)parse_header({small.data(), small.size()}), Error);
}
