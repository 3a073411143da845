#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rflow/imaging/blobs.hpp"
#include "rflow/imaging/image.hpp"

namespace rflow::features {

enum class WindowShape { rectangular, circular };
enum class Transform { identity, fft_magnitude };

/// Geometry of the local window around each keypoint.
struct DescriptorSpec {
  WindowShape shape = WindowShape::rectangular;
  int height = 11;  // w_h, odd, >= 3 (rectangular)
  int width = 11;   // w_w, odd, >= 3 (rectangular)
  int radius = 5;   // R >= 1 (circular; the window is the (2R+1)^2 bounding square)
  Transform transform = Transform::identity;

  static DescriptorSpec rectangle(int h, int w) { return {WindowShape::rectangular, h, w, 0}; }
  static DescriptorSpec circle(int r) { return {WindowShape::circular, 2 * r + 1, 2 * r + 1, r}; }

  void validate() const;
  int window_height() const { return shape == WindowShape::circular ? 2 * radius + 1 : height; }
  int window_width() const { return shape == WindowShape::circular ? 2 * radius + 1 : width; }
  std::size_t row_length() const {
    return static_cast<std::size_t>(window_height()) * static_cast<std::size_t>(window_width());
  }
  bool operator==(const DescriptorSpec&) const = default;
};

/// One flattened descriptor per retained keypoint. kept[i] is the index in
/// the source Keypoints of row i.
struct DescriptorMatrix {
  Eigen::MatrixXd rows;
  std::vector<std::size_t> kept;

  std::size_t size() const noexcept { return kept.size(); }
  bool operator==(const DescriptorMatrix& o) const {
    return kept == o.kept && rows.rows() == o.rows.rows() && rows.cols() == o.rows.cols() &&
           rows == o.rows;
  }
};

/// Windows centered on the rounded keypoint positions; keypoints whose window
/// does not fit inside the image are dropped.
DescriptorMatrix extract_patches(const imaging::Image& img, const imaging::Keypoints& k,
                                 const DescriptorSpec& spec);

/// Centered 2D DFT magnitude of every row (rectangular specs only).
DescriptorMatrix fft_magnitude(const DescriptorMatrix& d, const DescriptorSpec& spec);

/// Export: raw float32 rows + `<path>.json` with {n_rows, row_len, kept}.
void write_descriptors(const std::filesystem::path& path, const DescriptorMatrix& d);
DescriptorMatrix read_descriptors(const std::filesystem::path& path);

}  // namespace rflow::features
