#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "inv/errors.hpp"
#include "inv/image.hpp"
#include "inv/linalg.hpp"

using namespace inv;

TEST_CASE("psnr trivial values") {
  Image a = Image::filled(8, 8, 0.2f, 0.5f, 0.8f);
  CHECK(psnr(a, a) == 99.0);

  // uniform offset of 0.1 -> MSE 0.01 -> 20 dB
  Image b = Image::filled(8, 8, 0.3f, 0.6f, 0.9f);
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-6));

  Image c(4, 8);
  CHECK_THROWS_AS(psnr(a, c), std::invalid_argument);
}

TEST_CASE("psnr matches an independent implementation on random pairs") {
  Rng rng(404);
  for (int trial = 0; trial < 10; ++trial) {
    Image a(17, 9), b(17, 9);
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
      a.pixels[i] = rng.uniform();
      b.pixels[i] = rng.uniform();
    }
    // independent oracle
    double acc = 0.0;
    int count = 0;
    for (int y = 0; y < 9; ++y) {
      for (int x = 0; x < 17; ++x) {
        for (int ch = 0; ch < 3; ++ch) {
          const double d = double(a.at(x, y, ch)) - double(b.at(x, y, ch));
          acc += d * d;
          ++count;
        }
      }
    }
    const double expected = -10.0 * std::log10(acc / count);
    CHECK(std::abs(psnr(a, b) - expected) <= 1e-6);
  }
}

TEST_CASE("ppm encoding rounds half up and round-trips quantized images") {
  Image img(2, 1);
  img.at(0, 0, 0) = 1.0f / 510.0f;  // 255 * v = 0.5 -> rounds to 1
  img.at(1, 0, 2) = 1.0f;
  const auto bytes = encode_ppm(img);
  const std::size_t header = bytes.size() - 6;
  CHECK(bytes[header + 0] == 1);
  CHECK(bytes[header + 5] == 255);

  const Image back = decode_ppm(bytes);
  CHECK(back.width == 2);
  CHECK(back.height == 1);
  // a decoded image is already on the 8-bit grid: the next roundtrip is exact
  CHECK(encode_ppm(back) == bytes);
}

TEST_CASE("ppm file io") {
  const auto dir = std::filesystem::temp_directory_path() / "inv_test_ppm";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "img.ppm").string();

  Rng rng(7);
  Image img(16, 11);
  for (auto& p : img.pixels) p = rng.uniform();
  write_ppm(path, img);
  const Image back = read_ppm(path);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    CHECK(std::abs(back.pixels[i] - img.pixels[i]) <= 0.5f / 255.0f + 1e-6f);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("ppm decode rejects malformed data") {
  CHECK_THROWS_AS(decode_ppm(std::vector<std::uint8_t>{'P', '5', '\n'}), CorruptDataError);
  auto bytes = encode_ppm(Image::filled(4, 4, 0.5f, 0.5f, 0.5f));
  bytes.resize(bytes.size() - 10);  // truncate pixel data
  CHECK_THROWS_AS(decode_ppm(bytes), CorruptDataError);
}

TEST_CASE("histogram and edge metrics behave on identical images") {
  Rng rng(909);
  Image img(24, 24);
  for (auto& p : img.pixels) p = rng.uniform();
  CHECK(histogram_l1(img, img) == 0.0);
  CHECK(edge_correlation(img, img) == doctest::Approx(1.0));

  Image shifted = img;
  for (auto& p : shifted.pixels) p = std::min(1.0f, p + 0.4f);
  CHECK(histogram_l1(img, shifted) > 0.5);
}
