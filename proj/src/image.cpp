#include "inv/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "inv/errors.hpp"

namespace inv {

Image Image::filled(int w, int h, float r, float g, float b) {
  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = r;
      img.at(x, y, 1) = g;
      img.at(x, y, 2) = b;
    }
  }
  return img;
}

double psnr(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument("psnr: image dimensions differ");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.pixels.size());
  if (mse <= 0.0) return 99.0;
  return std::min(-10.0 * std::log10(mse), 99.0);
}

double mean_abs_diff(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument("mean_abs_diff: image dimensions differ");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    sum += std::abs(static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]));
  }
  return sum / static_cast<double>(a.pixels.size());
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  char header[64];
  const int n = std::snprintf(header, sizeof(header), "P6\n%d %d\n255\n", img.width, img.height);
  std::vector<std::uint8_t> out(header, header + n);
  out.reserve(out.size() + img.pixels.size());
  for (float v : img.pixels) {
    const float clamped = std::clamp(v, 0.0f, 1.0f);
    out.push_back(static_cast<std::uint8_t>(std::floor(clamped * 255.0f + 0.5f)));
  }
  return out;
}

namespace {

int ppm_next_int(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  // skip whitespace and '#' comment lines
  while (pos < bytes.size()) {
    const char c = static_cast<char>(bytes[pos]);
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
    throw CorruptDataError("ppm: malformed header");
  }
  int value = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    value = value * 10 + (bytes[pos] - '0');
    ++pos;
  }
  return value;
}

}  // namespace

Image decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw CorruptDataError("ppm: not a P6 file");
  }
  std::size_t pos = 2;
  const int w = ppm_next_int(bytes, pos);
  const int h = ppm_next_int(bytes, pos);
  const int maxval = ppm_next_int(bytes, pos);
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw CorruptDataError("ppm: unsupported dimensions or maxval");
  }
  ++pos;  // single whitespace after maxval
  const std::size_t need = static_cast<std::size_t>(3) * w * h;
  if (bytes.size() - pos < need) {
    throw CorruptDataError("ppm: pixel data truncated");
  }
  Image img(w, h);
  for (std::size_t i = 0; i < need; ++i) {
    img.pixels[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
  }
  return img;
}

void write_ppm(const std::string& path, const Image& img) {
  const auto bytes = encode_ppm(img);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write_ppm: write failed for " + path);
}

Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_ppm: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_ppm(bytes);
}

std::array<std::array<float, 16>, 3> rgb_histogram(const Image& img) {
  std::array<std::array<float, 16>, 3> hist{};
  const std::size_t count = img.pixels.size() / 3;
  for (std::size_t i = 0; i < count; ++i) {
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(img.pixels[i * 3 + c], 0.0f, 1.0f);
      const int bin = std::min(static_cast<int>(v * 16.0f), 15);
      hist[c][bin] += 1.0f;
    }
  }
  for (auto& channel : hist) {
    for (auto& b : channel) b /= static_cast<float>(count);
  }
  return hist;
}

double histogram_l1(const Image& a, const Image& b) {
  const auto ha = rgb_histogram(a);
  const auto hb = rgb_histogram(b);
  double d = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 16; ++i) {
      d += std::abs(static_cast<double>(ha[c][i]) - static_cast<double>(hb[c][i]));
    }
  }
  return d;
}

std::vector<float> sobel_magnitude(const Image& img) {
  std::vector<float> luma(static_cast<std::size_t>(img.width) * img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      luma[static_cast<std::size_t>(y) * img.width + x] =
          0.299f * img.at(x, y, 0) + 0.587f * img.at(x, y, 1) + 0.114f * img.at(x, y, 2);
    }
  }
  std::vector<float> mag(luma.size(), 0.0f);
  auto L = [&](int x, int y) {
    x = std::clamp(x, 0, img.width - 1);
    y = std::clamp(y, 0, img.height - 1);
    return luma[static_cast<std::size_t>(y) * img.width + x];
  };
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const float gx = (L(x + 1, y - 1) + 2.0f * L(x + 1, y) + L(x + 1, y + 1)) -
                       (L(x - 1, y - 1) + 2.0f * L(x - 1, y) + L(x - 1, y + 1));
      const float gy = (L(x - 1, y + 1) + 2.0f * L(x, y + 1) + L(x + 1, y + 1)) -
                       (L(x - 1, y - 1) + 2.0f * L(x, y - 1) + L(x + 1, y - 1));
      mag[static_cast<std::size_t>(y) * img.width + x] = std::sqrt(gx * gx + gy * gy);
    }
  }
  return mag;
}

double edge_correlation(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument("edge_correlation: image dimensions differ");
  }
  const auto ea = sobel_magnitude(a);
  const auto eb = sobel_magnitude(b);
  const double n = static_cast<double>(ea.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < ea.size(); ++i) {
    ma += ea[i];
    mb += eb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ea.size(); ++i) {
    const double da = ea[i] - ma;
    const double db = eb[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace inv
