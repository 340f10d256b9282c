#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace inv {

// RGB image, 32-bit float channels in [0,1], row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // 3 * width * height

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(3) * w * h, 0.0f) {}

  float& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  float at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  static Image filled(int w, int h, float r, float g, float b);
};

// -10 log10(MSE) on the [0,1] scale, capped at 99.0 dB (MSE = 0 reports the cap).
double psnr(const Image& a, const Image& b);

double mean_abs_diff(const Image& a, const Image& b);

// Binary PPM (P6, maxval 255). Channel values are rounded half-up from [0,1].
std::vector<std::uint8_t> encode_ppm(const Image& img);
Image decode_ppm(std::span<const std::uint8_t> bytes);
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

// 16-bin-per-channel color histograms, each channel normalized to sum 1.
std::array<std::array<float, 16>, 3> rgb_histogram(const Image& img);
// L1 distance between histograms, summed over channels. 0 = identical, max 6.
double histogram_l1(const Image& a, const Image& b);

// 3x3 Sobel gradient magnitude of the luminance channel (edge map).
std::vector<float> sobel_magnitude(const Image& img);
// Pearson correlation between the two images' edge maps.
double edge_correlation(const Image& a, const Image& b);

}  // namespace inv
