#include "rflow/features/descriptors.hpp"

#include <bit>
#include <cmath>
#include <complex>
#include <numbers>

#include <json.hpp>

#include "rflow/core/errors.hpp"
#include "rflow/imaging/io.hpp"

namespace rflow::features {

void DescriptorSpec::validate() const {
  if (shape == WindowShape::rectangular) {
    if (height < 3 || width < 3) throw DomainError("descriptor window must be at least 3x3");
    if (height % 2 == 0 || width % 2 == 0) throw DomainError("descriptor window sides must be odd");
  } else if (radius < 1) {
    throw DomainError("circular descriptor radius must be >= 1");
  }
}

DescriptorMatrix extract_patches(const imaging::Image& img, const imaging::Keypoints& k,
                                 const DescriptorSpec& spec) {
  spec.validate();
  const int wh = spec.window_height(), ww = spec.window_width();
  const int hh = wh / 2, hw = ww / 2;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const long r = std::lround(k.coords[i].row), c = std::lround(k.coords[i].col);
    if (r - hh >= 0 && c - hw >= 0 && r + hh < img.height() && c + hw < img.width())
      kept.push_back(i);
  }
  DescriptorMatrix out;
  out.rows.setZero(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(spec.row_length()));
  const double r2 = static_cast<double>(spec.radius) * spec.radius;
  for (std::size_t n = 0; n < kept.size(); ++n) {
    const int r = static_cast<int>(std::lround(k.coords[kept[n]].row));
    const int c = static_cast<int>(std::lround(k.coords[kept[n]].col));
    Eigen::Index j = 0;
    for (int dy = -hh; dy <= hh; ++dy) {
      for (int dx = -hw; dx <= hw; ++dx, ++j) {
        if (spec.shape == WindowShape::circular && dy * dy + dx * dx > r2) continue;
        out.rows(static_cast<Eigen::Index>(n), j) = img(r + dy, c + dx);
      }
    }
  }
  out.kept = std::move(kept);
  return out;
}

namespace {

// Naive 1D DFT of length n applied along a strided view.
void dft_inplace(std::vector<std::complex<double>>& buf, int n, int stride, int offset,
                 const std::vector<std::complex<double>>& twiddle) {
  std::vector<std::complex<double>> tmp(n);
  for (int f = 0; f < n; ++f) {
    std::complex<double> acc = 0.0;
    for (int t = 0; t < n; ++t) acc += buf[offset + t * stride] * twiddle[(f * t) % n];
    tmp[f] = acc;
  }
  for (int f = 0; f < n; ++f) buf[offset + f * stride] = tmp[f];
}

std::vector<std::complex<double>> twiddles(int n) {
  std::vector<std::complex<double>> w(n);
  for (int i = 0; i < n; ++i) w[i] = std::polar(1.0, -2.0 * std::numbers::pi * i / n);
  return w;
}

}  // namespace

DescriptorMatrix fft_magnitude(const DescriptorMatrix& d, const DescriptorSpec& spec) {
  if (spec.shape != WindowShape::rectangular)
    throw DomainError("fft_magnitude requires a rectangular descriptor");
  spec.validate();
  const int h = spec.height, w = spec.width;
  if (d.rows.cols() != static_cast<Eigen::Index>(h) * w)
    throw DomainError("descriptor length does not match the spec window");
  const auto tw_h = twiddles(h), tw_w = twiddles(w);
  DescriptorMatrix out;
  out.kept = d.kept;
  out.rows.resize(d.rows.rows(), d.rows.cols());
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(h) * w);
  for (Eigen::Index n = 0; n < d.rows.rows(); ++n) {
    for (int i = 0; i < h * w; ++i) buf[i] = d.rows(n, i);
    for (int y = 0; y < h; ++y) dft_inplace(buf, w, 1, y * w, tw_w);
    for (int x = 0; x < w; ++x) dft_inplace(buf, h, w, x, tw_h);
    // fftshift: frequency (fy, fx) moves to ((fy + h/2) % h, (fx + w/2) % w).
    for (int fy = 0; fy < h; ++fy)
      for (int fx = 0; fx < w; ++fx)
        out.rows(n, ((fy + h / 2) % h) * w + (fx + w / 2) % w) = std::abs(buf[fy * w + fx]);
  }
  return out;
}

void write_descriptors(const std::filesystem::path& path, const DescriptorMatrix& d) {
  imaging::Bytes bytes;
  bytes.reserve(static_cast<std::size_t>(d.rows.size()) * 4);
  for (Eigen::Index r = 0; r < d.rows.rows(); ++r)
    for (Eigen::Index c = 0; c < d.rows.cols(); ++c) {
      const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(d.rows(r, c)));
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>(u >> (8 * b)));
    }
  imaging::write_file(path, bytes);
  const nlohmann::json header{{"n_rows", d.rows.rows()}, {"row_len", d.rows.cols()}, {"kept", d.kept}};
  const std::string text = header.dump() + "\n";
  imaging::write_file(imaging::raw_header_path(path),
                      std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

DescriptorMatrix read_descriptors(const std::filesystem::path& path) {
  const auto hb = imaging::read_file(imaging::raw_header_path(path));
  DescriptorMatrix d;
  Eigen::Index n = 0, len = 0;
  try {
    const auto header = nlohmann::json::parse(hb.begin(), hb.end());
    n = header.at("n_rows").get<Eigen::Index>();
    len = header.at("row_len").get<Eigen::Index>();
    d.kept = header.at("kept").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("bad descriptor header: ") + e.what());
  }
  const auto bytes = imaging::read_file(path);
  if (static_cast<Eigen::Index>(d.kept.size()) != n || static_cast<Eigen::Index>(bytes.size()) != n * len * 4)
    throw DomainError("descriptor file does not match its header");
  d.rows.resize(n, len);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < len; ++c, ++i) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
      d.rows(r, c) = std::bit_cast<float>(u);
    }
  return d;
}

}  // namespace rflow::features
