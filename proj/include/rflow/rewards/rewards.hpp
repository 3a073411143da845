#pragma once

#include <string>
#include <vector>

#include "rflow/imaging/blobs.hpp"
#include "rflow/imaging/image.hpp"
#include "rflow/imaging/io.hpp"
#include "rflow/learn/learn.hpp"

namespace rflow::rewards {

using imaging::Image;
using imaging::LabelMap;
using imaging::Mask;
using imaging::Point;

/// Objective values, all minimized.
struct RewardVector {
  std::vector<std::string> names;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  /// Throws DomainError on NaN/inf or a names/values length mismatch.
  void validate() const;
  double at(const std::string& name) const;
  bool operator==(const RewardVector&) const = default;
};

// ---------------------------------------------------------------------------
// Atom finding

double count_discrepancy(double n_detected, double oracle_count);

struct LatticeFlags {
  std::vector<double> neighbor_sums;  // sum of the 4 nearest-neighbor distances
  std::vector<bool> flagged;
  double fraction = 0.0;
};

/// Needs at least 5 points.
LatticeFlags lattice_flags(const std::vector<Point>& pts, double lattice_length, double beta = 0.95);
double lattice_error(const std::vector<Point>& pts, double lattice_length, double beta = 0.95);

/// Spacing from the strongest radial peak of the power spectrum. Throws
/// NoLatticeError when no peak exceeds 3x the median radial power.
double estimate_lattice_spacing(const Image& img);

struct LatticeRegion {
  Mask mask;
  double area = 0.0;
  bool whole_image = true;  // no clear occupied/empty split was found
};

/// Part of the frame occupied by the lattice: blur at spacing/2, split by
/// Otsu, threshold midway between the class medians. Falls back to the whole
/// frame when the two classes are not well separated.
LatticeRegion lattice_region(const Image& img, double spacing);

struct CountOracle {
  double spacing = 0.0;
  double area = 0.0;
  double count = 0.0;  // area / spacing^2
};

CountOracle physics_count_oracle(const Image& img);

// ---------------------------------------------------------------------------
// Regions

/// Squared Euclidean distance to the nearest nonzero pixel (inf if none).
imaging::Grid<double> squared_distance_transform(const Mask& feature);

/// Morphological closing with a disk of the given radius. The frame border
/// does not act as background.
Mask close_mask(const Mask& m, double radius);

Mask mask_from_clusters(const std::vector<Point>& pts, const learn::ClusterLabels& labels, int target_label,
                        int width, int height, double spacing);

double perimeter(const Mask& m);
/// -4 pi A / P^2. Throws DomainError for an empty mask.
double compactness(const Mask& m);

// ---------------------------------------------------------------------------
// Walls

struct Pixel {
  int row = 0;
  int col = 0;
  bool operator==(const Pixel&) const = default;
};

struct Chain {
  std::vector<Pixel> pixels;
  bool closed = false;

  double arc_length() const;
  double chord_length() const;
  bool operator==(const Chain&) const = default;
};

struct WallSet {
  std::vector<Chain> chains;
  bool empty() const noexcept { return chains.empty(); }
  bool operator==(const WallSet&) const = default;
};

/// Nearest-keypoint label per pixel within 1.5 spacing; -1 elsewhere.
LabelMap rasterize_labels(const std::vector<Point>& pts, const learn::ClusterLabels& labels, int width,
                          int height, double spacing);

/// Labeled pixels with a 4-neighbor carrying a different non-negative label.
Mask wall_pixels(const LabelMap& labels);

/// Zhang-Suen thinning followed by removal of redundant staircase pixels.
Mask skeletonize(const Mask& m);

/// Traces a 1-px skeleton into chains split at junctions (>= 3 neighbors).
WallSet trace_chains(const Mask& skeleton);

WallSet walls_from_label_map(const LabelMap& labels);
WallSet extract_walls(const std::vector<Point>& pts, const learn::ClusterLabels& labels, int width, int height,
                      double spacing);

/// Index of the chain with the largest arc length, -1 when empty.
int longest_chain(const WallSet& w);

double straightness(const WallSet& w);
double wall_length(const WallSet& w, int width, int height);

// ---------------------------------------------------------------------------
// Exports

imaging::Bytes mask_png(const Mask& m);
/// Palette index = label + 1 (0 = unlabeled).
imaging::Bytes label_map_png(const LabelMap& labels);
std::string walls_to_text(const WallSet& w);

}  // namespace rflow::rewards
