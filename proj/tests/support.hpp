#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "rflow/imaging/image.hpp"
#include "rflow/imaging/synthetic.hpp"

namespace testing_support {

namespace fs = std::filesystem;

/// Fresh empty directory under the system temp dir.
inline fs::path temp_dir(const std::string& name) {
  static std::random_device rd;
  const fs::path p = fs::temp_directory_path() / ("rflow_test_" + name + "_" + std::to_string(rd()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline double mask_iou(const rflow::imaging::Mask& a, const rflow::imaging::Mask& b) {
  double inter = 0.0, uni = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.data()[i] != 0, y = b.data()[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni > 0.0 ? inter / uni : 1.0;
}

/// Isotropic Gaussian bump of the given std on a zero background.
inline rflow::imaging::Image gaussian_bump(int w, int h, double row, double col, double s) {
  rflow::imaging::Image img(w, h, 0.0f);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      img(r, c) = static_cast<float>(std::exp(-((r - row) * (r - row) + (c - col) * (c - col)) / (2.0 * s * s)));
  return img;
}

inline rflow::imaging::LatticeSpec lattice(int rows, int cols, double spacing = 16.0) {
  rflow::imaging::LatticeSpec s;
  s.rows = rows;
  s.cols = cols;
  s.spacing = spacing;
  return s;
}

}  // namespace testing_support
