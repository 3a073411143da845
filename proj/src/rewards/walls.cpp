#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <sstream>

#include "rflow/core/errors.hpp"
#include "rflow/rewards/rewards.hpp"

namespace rflow::rewards {
namespace {

// Clockwise from north.
constexpr std::array<int, 8> kDr{-1, -1, 0, 1, 1, 1, 0, -1};
constexpr std::array<int, 8> kDc{0, 1, 1, 1, 0, -1, -1, -1};

bool on(const Mask& m, int r, int c) { return m.contains(r, c) && m(r, c) != 0; }

int degree(const Mask& m, int r, int c) {
  int n = 0;
  for (int k = 0; k < 8; ++k) n += on(m, r + kDr[k], c + kDc[k]);
  return n;
}

double step(const Pixel& a, const Pixel& b) { return std::hypot(a.row - b.row, a.col - b.col); }

// Neighbors of (r,c) that are set form one 8-connected group.
bool neighbors_connected(const Mask& m, int r, int c) {
  std::array<int, 8> parent;
  for (int k = 0; k < 8; ++k) parent[k] = k;
  auto find = [&](int k) {
    while (parent[k] != k) k = parent[k] = parent[parent[k]];
    return k;
  };
  int count = 0;
  for (int a = 0; a < 8; ++a) {
    if (!on(m, r + kDr[a], c + kDc[a])) continue;
    ++count;
    for (int b = a + 1; b < 8; ++b) {
      if (!on(m, r + kDr[b], c + kDc[b])) continue;
      if (std::max(std::abs(kDr[a] - kDr[b]), std::abs(kDc[a] - kDc[b])) == 1) parent[find(a)] = find(b);
    }
  }
  std::set<int> roots;
  for (int a = 0; a < 8; ++a)
    if (on(m, r + kDr[a], c + kDc[a])) roots.insert(find(a));
  return count >= 2 && roots.size() == 1;
}

}  // namespace

double Chain::arc_length() const {
  double s = 0.0;
  for (std::size_t i = 1; i < pixels.size(); ++i) s += step(pixels[i - 1], pixels[i]);
  if (closed && pixels.size() > 2) s += step(pixels.back(), pixels.front());
  return s;
}

double Chain::chord_length() const {
  if (closed || pixels.size() < 2) return 0.0;
  return step(pixels.front(), pixels.back());
}

LabelMap rasterize_labels(const std::vector<Point>& pts, const learn::ClusterLabels& labels, int width,
                          int height, double spacing) {
  if (labels.size() != pts.size()) throw DomainError("label count does not match keypoint count");
  if (!(spacing > 0.0)) throw DomainError("spacing must be positive");
  LabelMap out(width, height, -1);
  if (pts.empty()) return out;
  const double radius = 1.5 * spacing;
  const int gw = static_cast<int>(width / radius) + 1, gh = static_cast<int>(height / radius) + 1;
  std::vector<std::vector<std::size_t>> buckets(static_cast<std::size_t>(gw) * gh);
  auto cell = [&](double v, int n) { return std::clamp(static_cast<int>(v / radius), 0, n - 1); };
  for (std::size_t i = 0; i < pts.size(); ++i)
    buckets[static_cast<std::size_t>(cell(pts[i].row, gh)) * gw + cell(pts[i].col, gw)].push_back(i);
  for (auto& b : buckets) std::sort(b.begin(), b.end());
  const double r2 = radius * radius;
  for (int y = 0; y < height; ++y) {
    const int cy = cell(y, gh);
    for (int x = 0; x < width; ++x) {
      const int cx = cell(x, gw);
      double best = r2;
      std::size_t arg = pts.size();
      for (int by = std::max(0, cy - 1); by <= std::min(gh - 1, cy + 1); ++by)
        for (int bx = std::max(0, cx - 1); bx <= std::min(gw - 1, cx + 1); ++bx)
          for (std::size_t i : buckets[static_cast<std::size_t>(by) * gw + bx]) {
            const double d = (pts[i].row - y) * (pts[i].row - y) + (pts[i].col - x) * (pts[i].col - x);
            if (d < best || (d == best && (arg == pts.size() || i < arg))) {
              best = d;
              arg = i;
            }
          }
      if (arg < pts.size()) out(y, x) = labels.labels[arg];
    }
  }
  return out;
}

Mask wall_pixels(const LabelMap& labels) {
  const int h = labels.height(), w = labels.width();
  Mask out(w, h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int l = labels(y, x);
      if (l < 0) continue;
      auto differs = [&](int r, int c) { return labels.contains(r, c) && labels(r, c) >= 0 && labels(r, c) != l; };
      if (differs(y - 1, x) || differs(y + 1, x) || differs(y, x - 1) || differs(y, x + 1)) out(y, x) = 1;
    }
  return out;
}

Mask skeletonize(const Mask& input) {
  Mask m(input.width(), input.height(), 0);
  for (std::size_t i = 0; i < input.size(); ++i) m.data()[i] = input.data()[i] ? 1 : 0;
  const int h = m.height(), w = m.width();
  std::vector<std::pair<int, int>> remove;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      remove.clear();
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (!m(y, x)) continue;
          std::array<int, 8> p;
          for (int k = 0; k < 8; ++k) p[k] = on(m, y + kDr[k], x + kDc[k]);
          const int b = p[0] + p[1] + p[2] + p[3] + p[4] + p[5] + p[6] + p[7];
          if (b < 2 || b > 6) continue;
          int a = 0;
          for (int k = 0; k < 8; ++k) a += (!p[k] && p[(k + 1) % 8]);
          if (a != 1) continue;
          // p[0]=N p[2]=E p[4]=S p[6]=W
          if (pass == 0 && (p[0] && p[2] && p[4])) continue;
          if (pass == 0 && (p[2] && p[4] && p[6])) continue;
          if (pass == 1 && (p[0] && p[2] && p[6])) continue;
          if (pass == 1 && (p[0] && p[4] && p[6])) continue;
          remove.emplace_back(y, x);
        }
      for (auto [y, x] : remove) m(y, x) = 0;
      changed = changed || !remove.empty();
    }
  }
  // Staircase corners: drop pixels whose neighbors stay connected without them.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (m(y, x) && neighbors_connected(m, y, x)) m(y, x) = 0;
  return m;
}

WallSet trace_chains(const Mask& skel) {
  const int h = skel.height(), w = skel.width();
  WallSet out;
  Mask visited(w, h, 0);
  auto is_node = [&](int r, int c) {
    const int d = degree(skel, r, c);
    return d == 1 || d >= 3;
  };
  auto index = [&](int r, int c) { return static_cast<long>(r) * w + c; };
  std::set<std::pair<long, long>> node_links;

  auto follow = [&](Pixel start, Pixel first) {
    Chain ch;
    ch.pixels = {start, first};
    Pixel prev = start, cur = first;
    visited(cur.row, cur.col) = 1;
    while (!is_node(cur.row, cur.col)) {
      bool moved = false;
      for (int k = 0; k < 8 && !moved; ++k) {
        const Pixel nx{cur.row + kDr[k], cur.col + kDc[k]};
        if (!on(skel, nx.row, nx.col) || nx == prev) continue;
        if (is_node(nx.row, nx.col)) {
          if (nx == start && ch.pixels.size() < 3) continue;
          ch.pixels.push_back(nx);
          prev = cur;
          cur = nx;
          moved = true;
          break;
        }
        if (visited(nx.row, nx.col)) continue;
        visited(nx.row, nx.col) = 1;
        ch.pixels.push_back(nx);
        prev = cur;
        cur = nx;
        moved = true;
      }
      if (!moved) break;
      if (is_node(cur.row, cur.col)) break;
    }
    if (ch.pixels.size() > 2 && ch.pixels.front() == ch.pixels.back()) {
      ch.pixels.pop_back();
      ch.closed = true;
    }
    return ch;
  };

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!skel(y, x) || !is_node(y, x)) continue;
      visited(y, x) = 1;
      for (int k = 0; k < 8; ++k) {
        const int r = y + kDr[k], c = x + kDc[k];
        if (!on(skel, r, c)) continue;
        if (is_node(r, c)) {
          const auto key = std::minmax(index(y, x), index(r, c));
          if (node_links.insert(key).second) out.chains.push_back(Chain{{Pixel{y, x}, Pixel{r, c}}, false});
          continue;
        }
        if (visited(r, c)) continue;
        Chain ch = follow(Pixel{y, x}, Pixel{r, c});
        if (ch.pixels.size() >= 2) out.chains.push_back(std::move(ch));
      }
    }
  // What is left are loops without endpoints or junctions.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!skel(y, x) || visited(y, x)) continue;
      Chain ch;
      ch.closed = true;
      Pixel cur{y, x};
      visited(y, x) = 1;
      ch.pixels.push_back(cur);
      while (true) {
        bool moved = false;
        for (int k = 0; k < 8; ++k) {
          const Pixel nx{cur.row + kDr[k], cur.col + kDc[k]};
          if (!on(skel, nx.row, nx.col) || visited(nx.row, nx.col)) continue;
          visited(nx.row, nx.col) = 1;
          ch.pixels.push_back(nx);
          cur = nx;
          moved = true;
          break;
        }
        if (!moved) break;
      }
      if (ch.pixels.size() >= 3) out.chains.push_back(std::move(ch));
    }
  return out;
}

WallSet walls_from_label_map(const LabelMap& labels) { return trace_chains(skeletonize(wall_pixels(labels))); }

WallSet extract_walls(const std::vector<Point>& pts, const learn::ClusterLabels& labels, int width, int height,
                      double spacing) {
  std::set<int> distinct;
  for (int l : labels.labels)
    if (l >= 0) distinct.insert(l);
  if (distinct.size() < 2) {
    if (labels.size() != pts.size()) throw DomainError("label count does not match keypoint count");
    return {};
  }
  return walls_from_label_map(rasterize_labels(pts, labels, width, height, spacing));
}

int longest_chain(const WallSet& w) {
  int best = -1;
  double len = -1.0;
  for (std::size_t i = 0; i < w.chains.size(); ++i) {
    const double l = w.chains[i].arc_length();
    if (l > len) {
      len = l;
      best = static_cast<int>(i);
    }
  }
  return best;
}

double straightness(const WallSet& w) {
  double num = 0.0, den = 0.0;
  for (const Chain& ch : w.chains) {
    const double arc = ch.arc_length();
    if (arc <= 0.0) continue;
    const double s = ch.closed ? 0.0 : ch.chord_length() / arc;
    num += s * arc;
    den += arc;
  }
  return den > 0.0 ? -num / den : 0.0;
}

double wall_length(const WallSet& w, int width, int height) {
  const int i = longest_chain(w);
  if (i < 0) return 0.0;
  return -w.chains[i].arc_length() / std::hypot(static_cast<double>(width), static_cast<double>(height));
}

std::string walls_to_text(const WallSet& w) {
  std::ostringstream os;
  os << "chains " << w.chains.size() << "\n";
  for (std::size_t i = 0; i < w.chains.size(); ++i) {
    const Chain& ch = w.chains[i];
    os << "chain " << i << ' ' << (ch.closed ? "closed" : "open") << ' ' << ch.pixels.size() << "\n";
    for (const Pixel& p : ch.pixels) os << p.row << ' ' << p.col << "\n";
  }
  return os.str();
}

}  // namespace rflow::rewards
