#include "rflow/imaging/blobs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "rflow/core/errors.hpp"
#include "rflow/imaging/filters.hpp"

namespace rflow::imaging {

void LoGParams::validate() const {
  if (!(sigma_min > 0.0)) throw DomainError("sigma_min must be > 0");
  if (!(sigma_min < sigma_max)) throw DomainError("sigma_min must be < sigma_max");
  if (!(threshold >= 0.0)) throw DomainError("threshold must be >= 0");
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw DomainError("overlap must lie in [0, 1]");
  if (n_scales < 1) throw DomainError("n_scales must be >= 1");
}

Keypoints Keypoints::subset(const std::vector<std::size_t>& indices) const {
  Keypoints out;
  out.coords.reserve(indices.size());
  for (std::size_t i : indices) {
    out.coords.push_back(coords.at(i));
    out.scales.push_back(scales.at(i));
    out.responses.push_back(responses.at(i));
  }
  return out;
}

double blob_radius(double sigma) { return sigma * std::numbers::sqrt2; }

double disk_overlap_fraction(double r1, double r2, double d) {
  const double small = std::min(r1, r2), large = std::max(r1, r2);
  if (small <= 0.0) return 0.0;
  if (d >= r1 + r2) return 0.0;
  if (d <= large - small) return 1.0;
  const double a1 = std::acos(std::clamp((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1), -1.0, 1.0));
  const double a2 = std::acos(std::clamp((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2), -1.0, 1.0));
  const double k = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2);
  const double area = r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * std::sqrt(std::max(0.0, k));
  return std::clamp(area / (std::numbers::pi * small * small), 0.0, 1.0);
}

namespace {

struct Candidate {
  double response;
  int scale;
  int row;
  int col;
};

// Offset of the vertex of the parabola through (-1, a), (0, b), (1, c).
double parabola_offset(double a, double b, double c) {
  const double denom = a - 2.0 * b + c;
  if (!(denom < 0.0)) return 0.0;
  return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

bool is_local_max(const std::vector<Image>& stack, int s, int r, int c) {
  const float v = stack[s](r, c);
  const int ns = static_cast<int>(stack.size());
  const int h = stack[s].height(), w = stack[s].width();
  for (int ds = -1; ds <= 1; ++ds) {
    const int ss = s + ds;
    if (ss < 0 || ss >= ns) continue;
    for (int dr = -1; dr <= 1; ++dr) {
      const int rr = r + dr;
      if (rr < 0 || rr >= h) continue;
      for (int dc = -1; dc <= 1; ++dc) {
        const int cc = c + dc;
        if (cc < 0 || cc >= w || (ds == 0 && dr == 0 && dc == 0)) continue;
        const float u = stack[ss](rr, cc);
        // Plateaus: only the first cell in (scale, row, col) order survives.
        const bool before = ds < 0 || (ds == 0 && (dr < 0 || (dr == 0 && dc < 0)));
        if (before ? u >= v : u > v) return false;
      }
    }
  }
  return true;
}

// Greedy overlap suppression with a uniform hash grid over kept blobs.
std::vector<std::size_t> suppress(const std::vector<Point>& pts, const std::vector<double>& radii,
                                  double overlap) {
  std::vector<std::size_t> kept;
  if (pts.empty()) return kept;
  const double cell = 2.0 * *std::max_element(radii.begin(), radii.end()) + 1e-9;
  std::unordered_map<long long, std::vector<std::size_t>> grid;
  auto key = [](long long gr, long long gc) { return (gr << 32) ^ (gc & 0xffffffffLL); };
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const long long gr = static_cast<long long>(std::floor(pts[i].row / cell));
    const long long gc = static_cast<long long>(std::floor(pts[i].col / cell));
    bool keep = true;
    for (long long dr = -1; dr <= 1 && keep; ++dr) {
      for (long long dc = -1; dc <= 1 && keep; ++dc) {
        auto it = grid.find(key(gr + dr, gc + dc));
        if (it == grid.end()) continue;
        for (std::size_t j : it->second) {
          const double d = std::hypot(pts[i].row - pts[j].row, pts[i].col - pts[j].col);
          if (disk_overlap_fraction(radii[i], radii[j], d) > overlap) {
            keep = false;
            break;
          }
        }
      }
    }
    if (keep) {
      kept.push_back(i);
      grid[key(gr, gc)].push_back(i);
    }
  }
  return kept;
}

}  // namespace

Keypoints detect_blobs(const Image& img, const LoGParams& p) {
  p.validate();
  Keypoints out;
  if (img.empty()) return out;
  const Image norm = normalize(img);
  const std::vector<double> scales = log_scales(p.sigma_min, p.sigma_max, p.n_scales);
  std::vector<Image> stack;
  stack.reserve(scales.size());
  for (double s : scales) stack.push_back(log_response(norm, s));

  const int h = img.height(), w = img.width();
  std::vector<Candidate> cands;
  for (int s = 0; s < static_cast<int>(stack.size()); ++s) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double v = stack[s](r, c);
        if (v > p.threshold && is_local_max(stack, s, r, c)) cands.push_back({v, s, r, c});
      }
    }
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& a, const Candidate& b) { return a.response > b.response; });

  std::vector<Point> pts;
  std::vector<double> sig, radii, resp;
  pts.reserve(cands.size());
  for (const Candidate& cd : cands) {
    const Image& R = stack[cd.scale];
    double dr = 0.0, dc = 0.0;
    if (cd.row > 0 && cd.row < h - 1)
      dr = parabola_offset(R(cd.row - 1, cd.col), R(cd.row, cd.col), R(cd.row + 1, cd.col));
    if (cd.col > 0 && cd.col < w - 1)
      dc = parabola_offset(R(cd.row, cd.col - 1), R(cd.row, cd.col), R(cd.row, cd.col + 1));
    double sigma = scales[cd.scale];
    if (cd.scale > 0 && cd.scale + 1 < static_cast<int>(scales.size())) {
      const double ds = parabola_offset(stack[cd.scale - 1](cd.row, cd.col), R(cd.row, cd.col),
                                        stack[cd.scale + 1](cd.row, cd.col));
      const double step = std::log(scales[cd.scale + 1]) - std::log(scales[cd.scale]);
      sigma = std::exp(std::log(sigma) + ds * step);
    }
    pts.push_back({std::clamp(cd.row + dr, 0.0, h - 1.0), std::clamp(cd.col + dc, 0.0, w - 1.0)});
    sig.push_back(sigma);
    radii.push_back(blob_radius(sigma));
    resp.push_back(cd.response);
  }

  for (std::size_t i : suppress(pts, radii, p.overlap)) {
    out.coords.push_back(pts[i]);
    out.scales.push_back(sig[i]);
    out.responses.push_back(resp[i]);
  }
  return out;
}

}  // namespace rflow::imaging
