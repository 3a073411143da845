#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rflow/imaging/image.hpp"

namespace rflow::imaging {

enum class DomainSplit { none, straight, sinusoidal };

std::string to_string(DomainSplit d);
DomainSplit parse_domain_split(const std::string& s);

/// Description of a synthetic atomic-lattice scene.
///
/// Atoms are isotropic Gaussian bumps on a square lattice centered in the
/// frame. An optional amorphous disk replaces the sites inside it with
/// uniformly jittered positions. An optional domain split attaches a weaker
/// secondary atom to every site, offset along the row axis by +polarization
/// in domain 0 and -polarization in domain 1, so the two domains differ in
/// their local motif.
struct LatticeSpec {
  int rows = 0;
  int cols = 0;
  double spacing = 16.0;
  double atom_sigma = 2.5;
  double amplitude = 1.0;
  double orientation = 0.0;  // radians
  int height = 0;            // 0: rows * spacing
  int width = 0;             // 0: cols * spacing

  double amorphous_radius = 0.0;  // 0: no amorphous region
  double amorphous_jitter = 0.45; // per-axis jitter amplitude, fraction of spacing

  DomainSplit domain_split = DomainSplit::none;
  double wall_amplitude = 8.0;  // sinusoidal wall, pixels
  double wall_period = 64.0;    // sinusoidal wall, pixels
  double polarization = 0.2;    // secondary-atom displacement, fraction of spacing
  double secondary_amplitude = 0.4;
  double secondary_sigma_ratio = 0.8;

  /// Throws DomainError on invalid dimensions (needs spacing > 4 atom_sigma >= 1).
  void validate() const;
  int image_height() const;
  int image_width() const;
};

struct SyntheticScene {
  Image image;
  std::vector<Point> atoms;            // primary lattice sites (ground truth)
  std::vector<Point> secondary_atoms;  // domain-split scenes only
  double spacing = 0.0;
  std::optional<Mask> amorphous_mask;
  std::optional<LabelMap> domain_map;
  std::optional<double> wall_col;  // column of the straight/mean wall line
  std::uint64_t seed = 0;
  LatticeSpec spec;
};

SyntheticScene generate_lattice(const LatticeSpec& spec, std::uint64_t seed);

/// Column of the domain wall at a given row for a domain-split spec.
double wall_position(const LatticeSpec& spec, double row);

/// I.i.d. N(0, sigma^2) field, deterministic per seed.
Image gaussian_noise_field(int width, int height, double sigma, std::uint64_t seed);

/// Adds Gaussian noise with std = sigma * (peak-to-peak range of img), then
/// renormalizes to [0, 1]. sigma = 0 returns the normalized input.
Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed);

}  // namespace rflow::imaging
