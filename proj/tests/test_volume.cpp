#include <doctest.h>

#include <cmath>

#include "petmae/error.hpp"
#include "petmae/rng.hpp"
#include "petmae/volume.hpp"
#include "test_support.hpp"

using namespace petmae;
using petmae::test::make_volume;
using petmae::test::oracle_trilinear;

TEST_CASE("crop_blank_boundary finds a corner block") {
  Volume ct = make_volume(6, 6, 6, std::vector<double>(216, -1000.0));
  for (std::int64_t z = 0; z < 2; ++z)
    for (std::int64_t y = 0; y < 2; ++y)
      for (std::int64_t x = 0; x < 2; ++x) ct.at(0, z, y, x) = 0.0;
  ct.labels[0] = ChannelLabel::CT;

  auto out = crop_blank_boundary(ct, {}, -900.0, 0);
  CHECK(out[0].nz == 2);
  CHECK(out[0].ny == 2);
  CHECK(out[0].nx == 2);
  for (double v : out[0].data) CHECK(v == 0.0);
}

TEST_CASE("crop_blank_boundary is idempotent and updates origin") {
  Volume ct = make_volume(8, 8, 8, std::vector<double>(512, -1000.0),
                          {2.0, 2.0, 3.0});
  for (std::int64_t z = 2; z < 6; ++z)
    for (std::int64_t y = 3; y < 7; ++y)
      for (std::int64_t x = 1; x < 5; ++x) ct.at(0, z, y, x) = 50.0;

  auto once = crop_blank_boundary(ct, {}, -900.0, 0);
  CHECK(once[0].nz == 4);
  CHECK(once[0].origin[0] == doctest::Approx(2 * 2.0));
  CHECK(once[0].origin[1] == doctest::Approx(3 * 2.0));
  CHECK(once[0].origin[2] == doctest::Approx(1 * 3.0));

  auto twice = crop_blank_boundary(once[0], {}, -900.0, 0);
  CHECK(twice[0].nz == once[0].nz);
  CHECK(twice[0].data == once[0].data);
  CHECK(twice[0].origin == once[0].origin);
}

TEST_CASE("crop_blank_boundary margin dilates and clamps") {
  Volume ct = make_volume(6, 6, 6, std::vector<double>(216, -1000.0));
  ct.at(0, 0, 3, 3) = 100.0;
  auto out = crop_blank_boundary(ct, {}, -900.0, 2);
  CHECK(out[0].nz == 3);  // clamped at the z=0 face
  CHECK(out[0].ny == 5);
  CHECK(out[0].nx == 5);
}

TEST_CASE("crop_blank_boundary applies one box to companions") {
  Volume ct = make_volume(4, 4, 4, std::vector<double>(64, -1000.0));
  ct.at(0, 1, 1, 1) = 0.0;
  ct.at(0, 2, 2, 2) = 0.0;
  Volume pet = make_volume(4, 4, 4, std::vector<double>(64, 0.0));
  for (std::size_t i = 0; i < 64; ++i) pet.data[i] = double(i);

  auto out = crop_blank_boundary(ct, {pet}, -900.0, 0);
  REQUIRE(out.size() == 2);
  CHECK(out[1].nz == 2);
  CHECK(out[1].at(0, 0, 0, 0) == pet.at(0, 1, 1, 1));
}

TEST_CASE("all-air CT raises AllBlank") {
  Volume ct = make_volume(4, 4, 4, std::vector<double>(64, -1000.0));
  CHECK_THROWS_WITH_AS((void)crop_blank_boundary(ct, {}, -900.0, 0),
                       doctest::Contains("AllBlank"), Error);
}

TEST_CASE("misaligned companion raises ShapeMismatch") {
  Volume ct = make_volume(4, 4, 4, std::vector<double>(64, 0.0));
  Volume pet = make_volume(4, 4, 5, std::vector<double>(80, 0.0));
  CHECK_THROWS_WITH_AS((void)crop_blank_boundary(ct, {pet}, -900.0, 0),
                       doctest::Contains("ShapeMismatch"), Error);
}

TEST_CASE("identity resample returns identical data and extents") {
  Rng rng(7);
  Volume v = make_volume(5, 6, 7, std::vector<double>(210), {2.0, 2.0, 3.0});
  for (double& d : v.data) d = rng.next_normal();
  Volume out = resample_trilinear(v, {2.0, 2.0, 3.0});
  CHECK(out.nz == v.nz);
  CHECK(out.ny == v.ny);
  CHECK(out.nx == v.nx);
  CHECK(out.data == v.data);
  CHECK(out.origin == v.origin);
}

TEST_CASE("1D ramp downsample matches the brute-force oracle") {
  Volume v = make_volume(1, 1, 8, {0, 1, 2, 3, 4, 5, 6, 7}, {1.0, 1.0, 1.0});
  Volume out = resample_trilinear(v, {1.0, 1.0, 2.0});
  CHECK(out.nx == 4);
  for (std::int64_t x = 0; x < out.nx; ++x) {
    const double xc = (double(x) + 0.5) * 2.0 / 1.0 - 0.5;
    CHECK(out.at(0, 0, 0, x) ==
          doctest::Approx(oracle_trilinear(v, 0, 0, 0, xc)).epsilon(1e-15));
  }
  // the mapped centres of an edge-aligned downsample sample at 0.5 + 2k
  CHECK(out.at(0, 0, 0, 0) == doctest::Approx(0.5));
  CHECK(out.at(0, 0, 0, 3) == doctest::Approx(6.5));
}

TEST_CASE("random-grid resample equals the brute-force oracle on <=8^3 grids") {
  Rng rng(123);
  for (int trial = 0; trial < 25; ++trial) {
    const std::int64_t nz = 1 + std::int64_t(rng.next_below(8));
    const std::int64_t ny = 1 + std::int64_t(rng.next_below(8));
    const std::int64_t nx = 1 + std::int64_t(rng.next_below(8));
    Volume v(1, nz, ny, nx,
             {rng.next_uniform(0.5, 3.0), rng.next_uniform(0.5, 3.0),
              rng.next_uniform(0.5, 3.0)});
    for (double& d : v.data) d = rng.next_normal();

    const std::array<double, 3> target{rng.next_uniform(0.5, 3.0),
                                       rng.next_uniform(0.5, 3.0),
                                       rng.next_uniform(0.5, 3.0)};
    Volume out = resample_trilinear(v, target);
    for (std::int64_t z = 0; z < out.nz; ++z)
      for (std::int64_t y = 0; y < out.ny; ++y)
        for (std::int64_t x = 0; x < out.nx; ++x) {
          const double zc = (double(z) + 0.5) * target[0] / v.spacing[0] - 0.5;
          const double yc = (double(y) + 0.5) * target[1] / v.spacing[1] - 0.5;
          const double xc = (double(x) + 0.5) * target[2] / v.spacing[2] - 0.5;
          CHECK(out.at(0, z, y, x) ==
                doctest::Approx(oracle_trilinear(v, 0, zc, yc, xc))
                    .epsilon(1e-12));
        }
  }
}

TEST_CASE("resample preserves physical extent within one output voxel") {
  Volume v = make_volume(10, 12, 14, std::vector<double>(10 * 12 * 14, 1.0),
                         {1.7, 0.9, 2.3});
  const std::array<double, 3> target{2.0, 2.0, 3.0};
  Volume out = resample_trilinear(v, target);
  const std::array<std::int64_t, 3> in_ext{v.nz, v.ny, v.nx};
  const std::array<std::int64_t, 3> out_ext{out.nz, out.ny, out.nx};
  for (int a = 0; a < 3; ++a) {
    const double in_mm = double(in_ext[a]) * v.spacing[a];
    const double out_mm = double(out_ext[a]) * target[a];
    CHECK(std::abs(in_mm - out_mm) <= target[a]);
  }
}

TEST_CASE("invalid spacing is rejected") {
  Volume v = make_volume(2, 2, 2, std::vector<double>(8, 0.0));
  CHECK_THROWS_WITH_AS((void)resample_trilinear(v, {0.0, 1.0, 1.0}),
                       doctest::Contains("InvalidSpacing"), Error);
  CHECK_THROWS_AS((void)resample_trilinear(v, {1.0, -2.0, 1.0}), Error);
}

TEST_CASE("norm stats: constant, {0,2} and alternating cases") {
  CHECK(compute_norm_stats(make_volume(1, 1, 4, {7, 7, 7, 7}), 0).mu == 7.0);
  CHECK(compute_norm_stats(make_volume(1, 1, 4, {7, 7, 7, 7}), 0).sigma == 0.0);

  NormStats s = compute_norm_stats(make_volume(1, 1, 2, {0, 2}), 0);
  CHECK(s.mu == 1.0);
  CHECK(s.sigma == 1.0);

  NormStats a = compute_norm_stats(make_volume(1, 1, 4, {-1, 1, -1, 1}), 0);
  CHECK(a.mu == 0.0);
  CHECK(a.sigma == 1.0);
}

TEST_CASE("zscore_normalize maps {0,2} to {-1,+1} and constants to zero") {
  Volume v = make_volume(1, 1, 2, {0, 2});
  Volume n = zscore_normalize(v);
  CHECK(n.data[0] == -1.0);
  CHECK(n.data[1] == 1.0);

  Volume c = zscore_normalize(make_volume(1, 1, 3, {5, 5, 5}));
  for (double d : c.data) CHECK(d == 0.0);
}

TEST_CASE("zscore_normalize handles channels independently") {
  Volume two(2, 1, 1, 2);
  two.data = {0, 2, 10, 30};
  two.labels = {ChannelLabel::CT, ChannelLabel::PET};
  Volume n = zscore_normalize(two);
  CHECK(n.data[0] == -1.0);
  CHECK(n.data[1] == 1.0);
  CHECK(n.data[2] == -1.0);
  CHECK(n.data[3] == 1.0);
}

TEST_CASE("zscore_normalize is idempotent within 1e-6") {
  Rng rng(99);
  Volume v = make_volume(4, 5, 6, std::vector<double>(120));
  for (double& d : v.data) d = 100.0 + 25.0 * rng.next_normal();
  Volume once = zscore_normalize(v);
  Volume twice = zscore_normalize(once);
  for (std::size_t i = 0; i < once.data.size(); ++i)
    CHECK(std::abs(twice.data[i] - once.data[i]) <= 1e-6);
}

TEST_CASE("normalized output has near-zero mean and unit sigma") {
  Rng rng(5);
  Volume v = make_volume(6, 6, 6, std::vector<double>(216));
  double max_abs = 0.0;
  for (double& d : v.data) {
    d = -950.0 + 40.0 * rng.next_normal();
    max_abs = std::max(max_abs, std::abs(d));
  }
  Volume n = zscore_normalize(v);
  NormStats s = compute_norm_stats(n, 0);
  CHECK(std::abs(s.mu) <= 1e-6 * max_abs);
  CHECK(s.sigma == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("concat then split returns bit-identical originals") {
  Rng rng(3);
  Volume ct = make_volume(4, 4, 4, std::vector<double>(64), {2, 2, 3},
                          ChannelLabel::CT);
  Volume pet = make_volume(4, 4, 4, std::vector<double>(64), {2, 2, 3},
                           ChannelLabel::PET);
  for (double& d : ct.data) d = rng.next_normal();
  for (double& d : pet.data) d = rng.next_normal();

  Volume x = concat_channels(ct, pet);
  CHECK(x.channels == 2);
  CHECK(x.labels[0] == ChannelLabel::CT);
  CHECK(x.labels[1] == ChannelLabel::PET);

  auto parts = split_channels(x);
  CHECK(parts[0].data == ct.data);
  CHECK(parts[1].data == pet.data);
  CHECK(parts[0].labels[0] == ChannelLabel::CT);
}

TEST_CASE("concat validates shape and labels") {
  Volume ct = make_volume(4, 4, 4, std::vector<double>(64, 0.0), {1, 1, 1},
                          ChannelLabel::CT);
  Volume pet_small = make_volume(4, 4, 2, std::vector<double>(32, 0.0), {1, 1, 1},
                                 ChannelLabel::PET);
  CHECK_THROWS_WITH_AS((void)concat_channels(ct, pet_small),
                       doctest::Contains("ShapeMismatch"), Error);

  Volume not_pet = make_volume(4, 4, 4, std::vector<double>(64, 0.0), {1, 1, 1},
                               ChannelLabel::GENERIC);
  CHECK_THROWS_WITH_AS((void)concat_channels(ct, not_pet),
                       doctest::Contains("LabelMismatch"), Error);
}

TEST_CASE("random_crop: determinism, identity and padding") {
  Rng fill(11);
  Volume v = make_volume(8, 10, 12, std::vector<double>(960), {2, 2, 3});
  for (double& d : v.data) d = fill.next_normal();

  SUBCASE("same seed gives the same corner") {
    Rng a(42), b(42);
    Volume ca = random_crop(v, {4, 4, 4}, a);
    Volume cb = random_crop(v, {4, 4, 4}, b);
    CHECK(ca.data == cb.data);
    CHECK(ca.origin == cb.origin);
  }
  SUBCASE("crop equal to extents is the identity") {
    Rng r(1);
    Volume c = random_crop(v, {8, 10, 12}, r);
    CHECK(c.data == v.data);
    CHECK(c.origin == v.origin);
  }
  SUBCASE("smaller volumes are symmetrically zero-padded") {
    Rng r(1);
    Volume small = make_volume(2, 2, 2, {1, 2, 3, 4, 5, 6, 7, 8});
    Volume c = random_crop(small, {4, 4, 4}, r);
    CHECK(c.nz == 4);
    CHECK(c.ny == 4);
    CHECK(c.nx == 4);
    double sum = 0.0;
    for (double d : c.data) sum += d;
    CHECK(sum == doctest::Approx(36.0)); // padding contributes zeros
    CHECK(c.at(0, 1, 1, 1) == 1.0);      // original block sits centred
  }
}

TEST_CASE("origin bookkeeping: crop offset times spacing") {
  Volume v = make_volume(6, 6, 6, std::vector<double>(216, 1.0), {2.0, 2.0, 3.0});
  v.origin = {10.0, 20.0, 30.0};
  Volume c = crop_at(v, {1, 2, 3}, {2, 2, 2});
  CHECK(c.origin[0] == doctest::Approx(10.0 + 1 * 2.0));
  CHECK(c.origin[1] == doctest::Approx(20.0 + 2 * 2.0));
  CHECK(c.origin[2] == doctest::Approx(30.0 + 3 * 3.0));
}

TEST_CASE("ops preserve channel count and labels") {
  Volume two(2, 4, 4, 4, {1, 1, 1}, {0, 0, 0});
  two.labels = {ChannelLabel::CT, ChannelLabel::PET};
  for (std::size_t i = 0; i < two.data.size(); ++i) two.data[i] = double(i % 17);

  Volume r = resample_trilinear(two, {2, 2, 2});
  CHECK(r.channels == 2);
  CHECK(r.labels == two.labels);

  Rng rng(0);
  Volume c = random_crop(two, {2, 2, 2}, rng);
  CHECK(c.channels == 2);
  CHECK(c.labels == two.labels);

  Volume n = zscore_normalize(two);
  CHECK(n.labels == two.labels);
}
