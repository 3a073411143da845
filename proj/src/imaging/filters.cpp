#include "rflow/imaging/filters.hpp"

#include <cmath>
#include <numeric>

#include "rflow/core/errors.hpp"

namespace rflow::imaging {
namespace {

// scipy-style "reflect": d c b a | a b c d | d c b a
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

int kernel_radius(double sigma) { return static_cast<int>(std::ceil(4.0 * sigma)); }

using Plane = std::vector<double>;

Plane to_plane(const Image& img) {
  return Plane(img.data().begin(), img.data().end());
}

// Convolve every row with a symmetric kernel (length 2r+1).
Plane convolve_rows(const Plane& src, int width, int height, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size() / 2);
  Plane out(src.size());
  std::vector<double> padded(static_cast<std::size_t>(width + 2 * r));
  for (int y = 0; y < height; ++y) {
    const double* row = src.data() + static_cast<std::size_t>(y) * width;
    for (int x = -r; x < width + r; ++x) padded[x + r] = row[reflect_index(x, width)];
    double* dst = out.data() + static_cast<std::size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      const double* p = padded.data() + x;
      double acc = 0.0;
      for (std::size_t j = 0; j < k.size(); ++j) acc += k[j] * p[j];
      dst[x] = acc;
    }
  }
  return out;
}

// Convolve every column; processes whole rows at a time.
Plane convolve_cols(const Plane& src, int width, int height, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size() / 2);
  Plane out(src.size(), 0.0);
  for (int y = 0; y < height; ++y) {
    double* dst = out.data() + static_cast<std::size_t>(y) * width;
    for (int j = -r; j <= r; ++j) {
      const double w = k[j + r];
      const double* s = src.data() + static_cast<std::size_t>(reflect_index(y + j, height)) * width;
      for (int x = 0; x < width; ++x) dst[x] += w * s[x];
    }
  }
  return out;
}

Image to_image(const Plane& p, int width, int height) {
  std::vector<float> data(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) data[i] = static_cast<float>(p[i]);
  return Image(width, height, std::move(data));
}

}  // namespace

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) return {1.0};
  const int r = kernel_radius(sigma);
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  for (int i = -r; i <= r; ++i) k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double sum = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& v : k) v /= sum;
  return k;
}

std::vector<double> gaussian_second_derivative_kernel(double sigma) {
  if (!(sigma > 0.0)) throw DomainError("second derivative kernel needs sigma > 0");
  const std::vector<double> g = gaussian_kernel(sigma);
  const int r = static_cast<int>(g.size() / 2);
  const double s2 = sigma * sigma;
  std::vector<double> d2(g.size());
  double s0 = 0.0, m2_d2 = 0.0, m2_g = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double x2 = static_cast<double>(i) * i;
    d2[i + r] = (x2 / (s2 * s2) - 1.0 / s2) * g[i + r];
    s0 += d2[i + r];
    m2_d2 += x2 * d2[i + r];
    m2_g += x2 * g[i + r];
  }
  // k = a*d2 + b*g with sum(k) = 0 and sum(x^2 k) = 2.
  const double a = 2.0 / (m2_d2 - s0 * m2_g);
  const double b = -a * s0;
  for (int i = 0; i < static_cast<int>(d2.size()); ++i) d2[i] = a * d2[i] + b * g[i];
  return d2;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma < 0.0) throw DomainError("gaussian_blur: sigma must be >= 0");
  if (sigma == 0.0 || img.empty()) return img;
  const auto k = gaussian_kernel(sigma);
  const Plane rows = convolve_rows(to_plane(img), img.width(), img.height(), k);
  return to_image(convolve_cols(rows, img.width(), img.height(), k), img.width(), img.height());
}

Image log_response(const Image& img, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("log_response: sigma must be > 0");
  if (img.empty()) return img;
  const int w = img.width(), h = img.height();
  const auto g = gaussian_kernel(sigma);
  const auto d2 = gaussian_second_derivative_kernel(sigma);
  const Plane src = to_plane(img);
  const Plane gx = convolve_rows(src, w, h, g);
  const Plane dxx = convolve_rows(src, w, h, d2);
  const Plane lyy = convolve_cols(gx, w, h, d2);
  const Plane lxx = convolve_cols(dxx, w, h, g);
  Plane out(src.size());
  const double scale = -sigma * sigma;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * (lxx[i] + lyy[i]);
  return to_image(out, w, h);
}

std::vector<double> log_scales(double lo, double hi, int n) {
  if (n < 1) throw DomainError("log_scales: n must be >= 1");
  if (n == 1) return {lo};
  std::vector<double> s(static_cast<std::size_t>(n));
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < n; ++i) s[i] = std::exp(a + (b - a) * i / (n - 1));
  s.back() = hi;
  return s;
}

}  // namespace rflow::imaging
