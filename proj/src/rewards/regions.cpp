#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "rflow/core/errors.hpp"
#include "rflow/rewards/rewards.hpp"

namespace rflow::rewards {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D squared distance transform (lower envelope of parabolas).
void edt_1d(const double* f, double* d, int n, std::vector<int>& v, std::vector<double>& z) {
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s;
    while (true) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s <= z[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    if (s <= z[k]) {
      // k == 0 and the new parabola dominates everywhere
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d, d + n, kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double dq = q - v[j];
    d[q] = dq * dq + f[v[j]];
  }
}

void stamp_disk(Mask& m, double row, double col, double radius) {
  const double r2 = radius * radius;
  const int r0 = std::max(0, static_cast<int>(std::floor(row - radius)));
  const int r1 = std::min(m.height() - 1, static_cast<int>(std::ceil(row + radius)));
  const int c0 = std::max(0, static_cast<int>(std::floor(col - radius)));
  const int c1 = std::min(m.width() - 1, static_cast<int>(std::ceil(col + radius)));
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c)
      if ((r - row) * (r - row) + (c - col) * (c - col) <= r2) m(r, c) = 1;
}

}  // namespace

imaging::Grid<double> squared_distance_transform(const Mask& feature) {
  const int h = feature.height(), w = feature.width();
  imaging::Grid<double> out(w, h, kInf);
  std::vector<int> v;
  std::vector<double> z;
  std::vector<double> f(std::max(h, w)), d(std::max(h, w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = feature(y, x) ? 0.0 : kInf;
    edt_1d(f.data(), d.data(), w, v, z);
    for (int x = 0; x < w; ++x) out(y, x) = d[x];
  }
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = out(y, x);
    edt_1d(f.data(), d.data(), h, v, z);
    for (int y = 0; y < h; ++y) out(y, x) = d[y];
  }
  return out;
}

Mask close_mask(const Mask& m, double radius) {
  if (radius <= 0.0) return m;
  const int pad = static_cast<int>(std::ceil(2.0 * radius)) + 2;
  const int h = m.height() + 2 * pad, w = m.width() + 2 * pad;
  Mask canvas(w, h, 0);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) canvas(y + pad, x + pad) = m(y, x);
  const double r2 = radius * radius;
  const auto to_fg = squared_distance_transform(canvas);
  Mask background(w, h, 0);
  for (std::size_t i = 0; i < canvas.size(); ++i) background.data()[i] = to_fg.data()[i] > r2 ? 1 : 0;
  const auto to_bg = squared_distance_transform(background);
  Mask out(m.width(), m.height(), 0);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) out(y, x) = (m(y, x) || to_bg(y + pad, x + pad) > r2) ? 1 : 0;
  return out;
}

Mask mask_from_clusters(const std::vector<Point>& pts, const learn::ClusterLabels& labels, int target_label,
                        int width, int height, double spacing) {
  if (labels.size() != pts.size()) throw DomainError("label count does not match keypoint count");
  if (!(spacing > 0.0)) throw DomainError("spacing must be positive");
  Mask m(width, height, 0);
  const double radius = 0.75 * spacing;
  bool any = false;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (labels.labels[i] != target_label) continue;
    stamp_disk(m, pts[i].row, pts[i].col, radius);
    any = true;
  }
  if (!any) return m;
  return close_mask(m, radius);
}

double perimeter(const Mask& m) {
  const int h = m.height(), w = m.width();
  std::size_t edges = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!m(y, x)) continue;
      edges += (y == 0 || !m(y - 1, x)) + (y == h - 1 || !m(y + 1, x)) + (x == 0 || !m(y, x - 1)) +
               (x == w - 1 || !m(y, x + 1));
    }
  return static_cast<double>(edges);
}

double compactness(const Mask& m) {
  const double area = static_cast<double>(imaging::count_nonzero(m));
  if (area == 0.0) throw DomainError("compactness of an empty mask");
  const double p = perimeter(m);
  return -4.0 * std::numbers::pi * area / (p * p);
}

imaging::Bytes mask_png(const Mask& m) {
  Mask idx(m.width(), m.height(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) idx.data()[i] = m.data()[i] ? 1 : 0;
  return imaging::encode_palette_png(idx, imaging::label_palette());
}

imaging::Bytes label_map_png(const LabelMap& labels) {
  const auto palette = imaging::label_palette();
  const int n = static_cast<int>(palette.size());
  Mask idx(labels.width(), labels.height(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels.data()[i];
    idx.data()[i] = static_cast<std::uint8_t>(l < 0 ? 0 : 1 + l % (n - 1));
  }
  return imaging::encode_palette_png(idx, palette);
}

}  // namespace rflow::rewards
