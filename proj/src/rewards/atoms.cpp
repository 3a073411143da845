#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "rflow/core/errors.hpp"
#include "rflow/imaging/filters.hpp"
#include "rflow/rewards/rewards.hpp"

namespace rflow::rewards {

void RewardVector::validate() const {
  if (names.size() != values.size()) throw DomainError("reward names and values differ in length");
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i])) throw DomainError("non-finite reward '" + names[i] + "'");
}

double RewardVector::at(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return values[i];
  throw DomainError("no reward named '" + name + "'");
}

double count_discrepancy(double n_detected, double oracle_count) {
  if (!(oracle_count > 0.0)) throw DomainError("oracle count must be positive");
  return std::abs(n_detected - oracle_count) / oracle_count;
}

namespace {

// Bucketed 4-nearest-neighbor search.
class PointGrid {
 public:
  explicit PointGrid(const std::vector<Point>& pts) : pts_(pts) {
    double r0 = pts[0].row, r1 = r0, c0 = pts[0].col, c1 = c0;
    for (const Point& p : pts) {
      r0 = std::min(r0, p.row), r1 = std::max(r1, p.row);
      c0 = std::min(c0, p.col), c1 = std::max(c1, p.col);
    }
    origin_ = {r0, c0};
    const double area = std::max((r1 - r0) * (c1 - c0), 1.0);
    cell_ = std::max(std::sqrt(2.0 * area / static_cast<double>(pts.size())), 1e-9);
    rows_ = static_cast<int>((r1 - r0) / cell_) + 1;
    cols_ = static_cast<int>((c1 - c0) / cell_) + 1;
    buckets_.resize(static_cast<std::size_t>(rows_) * cols_);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto [r, c] = cell_of(pts[i]);
      buckets_[static_cast<std::size_t>(r) * cols_ + c].push_back(i);
    }
  }

  // Sum of distances to the 4 nearest other points.
  double four_nn_sum(std::size_t q) const {
    std::array<double, 4> best;
    best.fill(std::numeric_limits<double>::infinity());
    const auto [qr, qc] = cell_of(pts_[q]);
    const int max_ring = std::max(rows_, cols_);
    for (int ring = 0; ring <= max_ring; ++ring) {
      for (int r = qr - ring; r <= qr + ring; ++r) {
        if (r < 0 || r >= rows_) continue;
        for (int c = qc - ring; c <= qc + ring; ++c) {
          if (c < 0 || c >= cols_) continue;
          if (std::max(std::abs(r - qr), std::abs(c - qc)) != ring) continue;
          for (std::size_t j : buckets_[static_cast<std::size_t>(r) * cols_ + c]) {
            if (j == q) continue;
            const double d = std::hypot(pts_[j].row - pts_[q].row, pts_[j].col - pts_[q].col);
            if (d < best[3]) {
              best[3] = d;
              std::sort(best.begin(), best.end());
            }
          }
        }
      }
      if (best[3] <= ring * cell_) break;
    }
    return best[0] + best[1] + best[2] + best[3];
  }

 private:
  std::pair<int, int> cell_of(const Point& p) const {
    const int r = std::clamp(static_cast<int>((p.row - origin_.row) / cell_), 0, rows_ - 1);
    const int c = std::clamp(static_cast<int>((p.col - origin_.col) / cell_), 0, cols_ - 1);
    return {r, c};
  }

  const std::vector<Point>& pts_;
  Point origin_;
  double cell_ = 1.0;
  int rows_ = 1, cols_ = 1;
  std::vector<std::vector<std::size_t>> buckets_;
};

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

LatticeFlags lattice_flags(const std::vector<Point>& pts, double lattice_length, double beta) {
  if (pts.size() < 5) throw DomainError("lattice_error needs at least 5 keypoints");
  if (!(lattice_length > 0.0)) throw DomainError("lattice length must be positive");
  const PointGrid grid(pts);
  LatticeFlags out;
  out.neighbor_sums.resize(pts.size());
  out.flagged.resize(pts.size());
  const double limit = beta * 4.0 * lattice_length;
  std::size_t n_flagged = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out.neighbor_sums[i] = grid.four_nn_sum(i);
    out.flagged[i] = out.neighbor_sums[i] < limit;
    n_flagged += out.flagged[i] ? 1 : 0;
  }
  out.fraction = static_cast<double>(n_flagged) / static_cast<double>(pts.size());
  return out;
}

double lattice_error(const std::vector<Point>& pts, double lattice_length, double beta) {
  return lattice_flags(pts, lattice_length, beta).fraction;
}

double estimate_lattice_spacing(const Image& img) {
  const int h = img.height(), w = img.width();
  if (h < 8 || w < 8) throw NoLatticeError();
  const int wc = w / 2 + 1;
  double* in = fftw_alloc_real(static_cast<std::size_t>(h) * w);
  fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(h) * wc);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_2d(h, w, in, out, FFTW_ESTIMATE);
  }
  double mean = 0.0;
  for (float v : img.data()) mean += v;
  mean /= static_cast<double>(img.size());
  // Hann window keeps frame-edge leakage away from the lattice peak.
  std::vector<double> hy(h), hx(w);
  for (int y = 0; y < h; ++y) hy[y] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * y / (h - 1));
  for (int x = 0; x < w; ++x) hx[x] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * x / (w - 1));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) in[static_cast<std::size_t>(y) * w + x] = (img(y, x) - mean) * hy[y] * hx[x];
  fftw_execute(plan);

  const int n = std::max(h, w);
  const int n_bins = n / 2 + 1;
  std::vector<double> power(n_bins, 0.0), count(n_bins, 0.0);
  for (int y = 0; y < h; ++y) {
    const double fy = (y <= h / 2 ? y : y - h) * static_cast<double>(n) / h;
    for (int x = 0; x < wc; ++x) {
      const double fx = x * static_cast<double>(n) / w;
      const int bin = static_cast<int>(std::lround(std::hypot(fy, fx)));
      if (bin >= n_bins) continue;
      const fftw_complex& c = out[static_cast<std::size_t>(y) * wc + x];
      power[bin] += c[0] * c[0] + c[1] * c[1];
      count[bin] += 1.0;
    }
  }
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);

  for (int b = 0; b < n_bins; ++b)
    if (count[b] > 0.0) power[b] /= count[b];
  std::vector<double> sorted(power.begin() + 1, power.end());
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];

  int peak = -1;
  for (int b = 2; b + 1 < n_bins; ++b) {
    if (power[b] > power[b - 1] && power[b] >= power[b + 1] && (peak < 0 || power[b] > power[peak])) peak = b;
  }
  if (peak < 0 || !(power[peak] > 3.0 * median)) throw NoLatticeError();
  const double a = power[peak - 1], b = power[peak], c = power[peak + 1];
  const double denom = a - 2.0 * b + c;
  const double offset = denom < 0.0 ? std::clamp(0.5 * (a - c) / denom, -0.5, 0.5) : 0.0;
  return static_cast<double>(n) / (peak + offset);
}

LatticeRegion lattice_region(const Image& img, double spacing) {
  LatticeRegion out;
  const int h = img.height(), w = img.width();
  out.mask = Mask(w, h, 1);
  out.area = static_cast<double>(img.size());
  const Image blurred = imaging::gaussian_blur(img, spacing / 2.0);
  std::vector<float> v(blurred.data().begin(), blurred.data().end());
  std::sort(v.begin(), v.end());
  if (v.front() == v.back()) return out;

  // Otsu on a 256-bin histogram.
  const double lo = v.front(), hi = v.back();
  std::array<double, 256> hist{};
  for (float x : v) hist[std::min(255, static_cast<int>((x - lo) / (hi - lo) * 256.0))] += 1.0;
  const double total = static_cast<double>(v.size());
  double sum_all = 0.0;
  for (int i = 0; i < 256; ++i) sum_all += i * hist[i];
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int split = 0;
  for (int t = 0; t < 255; ++t) {
    w0 += hist[t];
    sum0 += t * hist[t];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      split = t;
    }
  }
  const double cut = lo + (split + 1) * (hi - lo) / 256.0;
  const auto mid = std::lower_bound(v.begin(), v.end(), static_cast<float>(cut));
  if (mid == v.begin() || mid == v.end()) return out;
  auto median_mad = [](std::vector<float> part) {
    const std::size_t m = part.size() / 2;
    std::nth_element(part.begin(), part.begin() + m, part.end());
    const double med = part[m];
    for (float& x : part) x = std::abs(x - static_cast<float>(med));
    std::nth_element(part.begin(), part.begin() + m, part.end());
    return std::pair<double, double>{med, part[m]};
  };
  const auto [med0, mad0] = median_mad(std::vector<float>(v.begin(), mid));
  const auto [med1, mad1] = median_mad(std::vector<float>(mid, v.end()));
  if (med1 - med0 <= 10.0 * std::max(mad0, mad1)) return out;

  const double threshold = 0.5 * (med0 + med1);
  std::size_t area = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool in = blurred(y, x) >= threshold;
      out.mask(y, x) = in ? 1 : 0;
      area += in ? 1 : 0;
    }
  out.area = static_cast<double>(area);
  out.whole_image = false;
  return out;
}

CountOracle physics_count_oracle(const Image& img) {
  CountOracle o;
  o.spacing = estimate_lattice_spacing(img);
  o.area = lattice_region(img, o.spacing).area;
  o.count = o.area / (o.spacing * o.spacing);
  if (!(o.count >= 1.0)) throw DomainError("oracle count below 1");
  return o;
}

}  // namespace rflow::rewards
