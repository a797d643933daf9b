#include <catch2/catch_amalgamated.hpp>

#include "support/oracles.hpp"
#include "wlst/box_codec.hpp"
#include "wlst/rng.hpp"

using namespace wlst;

TEST_CASE("zero yaw lands in the zero bin with zero residual", "[codec]") {
  const BoxCodec codec;
  const Box3D box = make_box3d({1, 2, 3}, 4.0, 1.8, 1.5, 0.0);
  const EncodedBox enc = encode_box(box, codec);
  CHECK(enc.bin_id == 0);
  CHECK(enc.bin_residual == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("the first template encodes with zero size residuals", "[codec]") {
  const BoxCodec codec;
  const Box3D box = make_box3d({0, 0, 0}, 3.9, 1.6, 1.56, 0.4);
  const EncodedBox enc = encode_box(box, codec);
  CHECK(enc.template_id == 0);
  CHECK(enc.size_residuals.x == Catch::Approx(0.0).margin(1e-12));
  CHECK(enc.size_residuals.y == Catch::Approx(0.0).margin(1e-12));
  CHECK(enc.size_residuals.z == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("decoding template 1 with zero residuals gives its dimensions", "[codec]") {
  const BoxCodec codec;
  EncodedBox enc;
  enc.bin_id = 0;
  enc.template_id = 1;
  const Box3D box = decode_box(enc, codec);
  CHECK(box.length == Catch::Approx(4.7));
  CHECK(box.width == Catch::Approx(2.1));
  CHECK(box.height == Catch::Approx(1.7));
  CHECK(box.yaw == Catch::Approx(0.0));
}

TEST_CASE("roundtrip identity over random boxes", "[codec][prop]") {
  const BoxCodec codec;
  Rng rng(211);
  for (int i = 0; i < 5000; ++i) {
    const Box3D box = oracles::random_box(rng);
    const Box3D back = decode_box(encode_box(box, codec), codec);
    CHECK(std::abs(back.center.x - box.center.x) < 1e-9);
    CHECK(std::abs(back.center.y - box.center.y) < 1e-9);
    CHECK(std::abs(back.center.z - box.center.z) < 1e-9);
    CHECK(std::abs(back.length - box.length) < 1e-9);
    CHECK(std::abs(back.width - box.width) < 1e-9);
    CHECK(std::abs(back.height - box.height) < 1e-9);
    CHECK(std::abs(normalize_angle(back.yaw - box.yaw)) < 1e-9);
  }
}

TEST_CASE("residuals stay inside the half-open bin interval", "[codec][prop]") {
  const BoxCodec codec;
  const double half = 0.5 * BoxCodec::bin_width();
  Rng rng(223);
  for (int i = 0; i < 2000; ++i) {
    const Box3D box = oracles::random_box(rng);
    const EncodedBox enc = encode_box(box, codec);
    CHECK(enc.bin_id >= 0);
    CHECK(enc.bin_id < BoxCodec::kNumHeadingBins);
    CHECK(enc.bin_residual > -half - 1e-12);
    CHECK(enc.bin_residual <= half + 1e-12);
  }
}

TEST_CASE("bin boundary maps consistently", "[codec]") {
  const BoxCodec codec;
  const double half = 0.5 * BoxCodec::bin_width();
  // Exactly on the boundary between bins 0 and 1: the half-open residual
  // interval assigns it to the lower bin with residual +pi/12.
  const Box3D box = make_box3d({0, 0, 0}, 4, 2, 1.5, half);
  const EncodedBox enc = encode_box(box, codec);
  CHECK(enc.bin_residual == Catch::Approx(half));
  CHECK(enc.bin_id == 0);
  const Box3D back = decode_box(enc, codec);
  CHECK(std::abs(normalize_angle(back.yaw - half)) < 1e-12);
}

TEST_CASE("decode rejects out-of-range indices", "[codec]") {
  const BoxCodec codec;
  EncodedBox enc;
  enc.bin_id = 12;
  CHECK_THROWS_AS(decode_box(enc, codec), std::out_of_range);
  enc.bin_id = 0;
  enc.template_id = 3;
  CHECK_THROWS_AS(decode_box(enc, codec), std::out_of_range);
  enc.template_id = -1;
  CHECK_THROWS_AS(decode_box(enc, codec), std::out_of_range);
}
