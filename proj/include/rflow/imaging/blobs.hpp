#pragma once

#include <cstddef>
#include <vector>

#include "rflow/imaging/image.hpp"

namespace rflow::imaging {

/// LoG detector hyperparameters. threshold applies to the scale-normalized
/// response of the min-max normalized image.
struct LoGParams {
  double sigma_min = 1.0;
  double sigma_max = 4.0;
  double threshold = 0.05;
  double overlap = 0.5;
  int n_scales = 10;

  /// Throws DomainError unless 0 < sigma_min < sigma_max, threshold >= 0,
  /// 0 <= overlap <= 1 and n_scales >= 1.
  void validate() const;
};

/// Detected blob centers (row, col) with their scale sigma* and response.
struct Keypoints {
  std::vector<Point> coords;
  std::vector<double> scales;
  std::vector<double> responses;

  std::size_t size() const noexcept { return coords.size(); }
  bool empty() const noexcept { return coords.empty(); }

  Keypoints subset(const std::vector<std::size_t>& indices) const;
  bool operator==(const Keypoints&) const = default;
};

/// Blob disk radius for a detection at scale sigma.
double blob_radius(double sigma);

/// Intersection area of two disks divided by the area of the smaller one.
double disk_overlap_fraction(double r1, double r2, double distance);

/// Scale-space LoG blob detection: local maxima of the (row, col, scale)
/// response stack above the threshold, quadratic sub-pixel refinement, then
/// greedy suppression of lower-response blobs whose disks overlap by more than
/// `overlap`.
Keypoints detect_blobs(const Image& img, const LoGParams& p);

}  // namespace rflow::imaging
