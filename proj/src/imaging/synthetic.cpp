#include "rflow/imaging/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rflow/core/errors.hpp"
#include "rflow/core/rng.hpp"

namespace rflow::imaging {

std::string to_string(DomainSplit d) {
  switch (d) {
    case DomainSplit::none: return "none";
    case DomainSplit::straight: return "straight";
    case DomainSplit::sinusoidal: return "sinusoidal";
  }
  return "none";
}

DomainSplit parse_domain_split(const std::string& s) {
  if (s == "none") return DomainSplit::none;
  if (s == "straight") return DomainSplit::straight;
  if (s == "sinusoidal") return DomainSplit::sinusoidal;
  throw DomainError("unknown domain split '" + s + "' (expected none, straight, sinusoidal)");
}

void LatticeSpec::validate() const {
  if (rows < 1 || cols < 1) throw DomainError("lattice needs rows >= 1 and cols >= 1");
  if (!(atom_sigma >= 1.0)) throw DomainError("atom_sigma must be >= 1 px");
  if (!(spacing > 4.0 * atom_sigma))
    throw DomainError("spacing must exceed 4 * atom_sigma");
  if (!(amplitude > 0.0)) throw DomainError("amplitude must be > 0");
  if (height < 0 || width < 0) throw DomainError("image dimensions must be >= 0");
  if (image_height() < 1 || image_width() < 1) throw DomainError("empty image");
  if (amorphous_radius < 0.0) throw DomainError("amorphous radius must be >= 0");
  if (amorphous_radius > 0.0 && amorphous_jitter < 0.4)
    throw DomainError("amorphous jitter must be >= 0.4 spacing");
  if (domain_split == DomainSplit::sinusoidal && !(wall_period > 0.0))
    throw DomainError("wall period must be > 0");
  if (domain_split != DomainSplit::none && cols < 2)
    throw DomainError("domain split needs at least 2 columns");
}

int LatticeSpec::image_height() const {
  return height > 0 ? height : static_cast<int>(std::lround(rows * spacing));
}
int LatticeSpec::image_width() const {
  return width > 0 ? width : static_cast<int>(std::lround(cols * spacing));
}

namespace {

struct Frame {
  double center_row, center_col;
  double cos_t, sin_t;

  Point site(const LatticeSpec& s, double i, double j) const {
    const double u = (i - (s.rows - 1) / 2.0) * s.spacing;
    const double v = (j - (s.cols - 1) / 2.0) * s.spacing;
    return {center_row + cos_t * u - sin_t * v, center_col + sin_t * u + cos_t * v};
  }
};

Frame make_frame(const LatticeSpec& s) {
  const double row0 = std::floor((s.image_height() - (s.rows - 1) * s.spacing) / 2.0);
  const double col0 = std::floor((s.image_width() - (s.cols - 1) * s.spacing) / 2.0);
  return {row0 + (s.rows - 1) * s.spacing / 2.0, col0 + (s.cols - 1) * s.spacing / 2.0,
          std::cos(s.orientation), std::sin(s.orientation)};
}

void stamp(std::vector<double>& acc, int w, int h, Point p, double amp, double sigma) {
  const int r = static_cast<int>(std::ceil(5.0 * sigma));
  const int pr = static_cast<int>(std::lround(p.row)), pc = static_cast<int>(std::lround(p.col));
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int y = std::max(0, pr - r); y <= std::min(h - 1, pr + r); ++y) {
    const double dy = y - p.row;
    for (int x = std::max(0, pc - r); x <= std::min(w - 1, pc + r); ++x) {
      const double dx = x - p.col;
      acc[static_cast<std::size_t>(y) * w + x] += amp * std::exp(-(dx * dx + dy * dy) * inv);
    }
  }
}

bool inside(Point p, int w, int h) {
  return p.row >= 0.0 && p.col >= 0.0 && p.row <= h - 1.0 && p.col <= w - 1.0;
}

}  // namespace

double wall_position(const LatticeSpec& spec, double row) {
  const Frame f = make_frame(spec);
  const double mid = std::floor((spec.cols - 1) / 2.0) + 0.5;
  // The straight wall runs between the two middle atom columns. The
  // sinusoidal wall oscillates about the next atom column so the swing
  // actually moves atoms between domains.
  if (spec.domain_split == DomainSplit::sinusoidal) {
    const double x0 = f.site(spec, (spec.rows - 1) / 2.0, mid + 0.5).col;
    return x0 + spec.wall_amplitude * std::sin(2.0 * std::numbers::pi * row / spec.wall_period);
  }
  return f.site(spec, (spec.rows - 1) / 2.0, mid).col;
}

SyntheticScene generate_lattice(const LatticeSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int h = spec.image_height(), w = spec.image_width();
  const Frame frame = make_frame(spec);
  Rng rng = make_rng(seed, 0);

  SyntheticScene scene;
  scene.spacing = spec.spacing;
  scene.seed = seed;
  scene.spec = spec;

  const Point disk_center{(h - 1) / 2.0, (w - 1) / 2.0};
  const double jitter = spec.amorphous_jitter * spec.spacing;
  for (int i = 0; i < spec.rows; ++i) {
    for (int j = 0; j < spec.cols; ++j) {
      Point p = frame.site(spec, i, j);
      if (!inside(p, w, h)) continue;
      if (spec.amorphous_radius > 0.0 &&
          std::hypot(p.row - disk_center.row, p.col - disk_center.col) <= spec.amorphous_radius) {
        p.row += (2.0 * uniform01(rng) - 1.0) * jitter;
        p.col += (2.0 * uniform01(rng) - 1.0) * jitter;
        p.row = std::clamp(p.row, 0.0, h - 1.0);
        p.col = std::clamp(p.col, 0.0, w - 1.0);
      }
      scene.atoms.push_back(p);
    }
  }

  if (spec.domain_split != DomainSplit::none) {
    const double disp = spec.polarization * spec.spacing;
    for (int i = 0; i < spec.rows; ++i) {
      for (int j = 0; j < spec.cols; ++j) {
        const Point base = frame.site(spec, i, j);
        const double sign = base.col > wall_position(spec, base.row) ? -1.0 : 1.0;
        const Point p{base.row + sign * disp * frame.cos_t, base.col + sign * disp * frame.sin_t};
        if (inside(p, w, h)) scene.secondary_atoms.push_back(p);
      }
    }
    LabelMap domains(w, h, 0);
    for (int y = 0; y < h; ++y) {
      const double wall = wall_position(spec, y);
      for (int x = 0; x < w; ++x) domains(y, x) = x > wall ? 1 : 0;
    }
    scene.domain_map = std::move(domains);
    LatticeSpec mean_line = spec;
    mean_line.wall_amplitude = 0.0;
    scene.wall_col = wall_position(mean_line, 0.0);
  }

  if (spec.amorphous_radius > 0.0) {
    Mask mask(w, h, 0);
    const double r2 = spec.amorphous_radius * spec.amorphous_radius;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dy = y - disk_center.row, dx = x - disk_center.col;
        if (dx * dx + dy * dy <= r2) mask(y, x) = 1;
      }
    scene.amorphous_mask = std::move(mask);
  }

  std::vector<double> acc(static_cast<std::size_t>(w) * h, 0.0);
  for (const Point& p : scene.atoms) stamp(acc, w, h, p, spec.amplitude, spec.atom_sigma);
  for (const Point& p : scene.secondary_atoms)
    stamp(acc, w, h, p, spec.amplitude * spec.secondary_amplitude,
          spec.atom_sigma * spec.secondary_sigma_ratio);
  std::vector<float> data(acc.begin(), acc.end());
  scene.image = normalize(Image(w, h, std::move(data)));
  return scene;
}

Image gaussian_noise_field(int width, int height, double sigma, std::uint64_t seed) {
  Image out(width, height, 0.0f);
  if (sigma == 0.0) return out;
  Rng rng = make_rng(seed, 1);
  for (float& v : out.data()) v = static_cast<float>(sigma * normal01(rng));
  return out;
}

Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw DomainError("noise sigma must be >= 0");
  if (sigma == 0.0) return normalize(img);
  const Range r = intensity_range(img);
  const double peak = r.max - r.min > 0.0 ? r.max - r.min : 1.0;
  const Image noise = gaussian_noise_field(img.width(), img.height(), sigma * peak, seed);
  std::vector<float> data(img.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = img.data()[i] + noise.data()[i];
  return normalize(Image(img.width(), img.height(), std::move(data)));
}

}  // namespace rflow::imaging
