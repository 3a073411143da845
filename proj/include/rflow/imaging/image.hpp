#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rflow/core/errors.hpp"

namespace rflow::imaging {

/// Row-major 2D grid. Used for intensity images, binary masks and label maps.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(checked_size(width, height), fill) {}
  Grid(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != checked_size(width, height))
      throw DomainError("grid data length does not match width x height");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool contains(int row, int col) const noexcept {
    return row >= 0 && col >= 0 && row < height_ && col < width_;
  }

  const T& operator()(int row, int col) const {
    return data_[static_cast<std::size_t>(row) * width_ + col];
  }
  T& operator()(int row, int col) { return data_[static_cast<std::size_t>(row) * width_ + col]; }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  bool same_shape(int width, int height) const noexcept {
    return width_ == width && height_ == height;
  }
  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return same_shape(other.width(), other.height());
  }

  bool operator==(const Grid&) const = default;

 private:
  static std::size_t checked_size(int width, int height) {
    if (width < 0 || height < 0) throw DomainError("grid dimensions must be non-negative");
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Image = Grid<float>;
using Mask = Grid<std::uint8_t>;
using LabelMap = Grid<std::int32_t>;

/// Sub-pixel image position.
struct Point {
  double row = 0.0;
  double col = 0.0;
  bool operator==(const Point&) const = default;
};

struct Range {
  double min = 0.0;
  double max = 0.0;
};

Range intensity_range(const Image& img);

/// Min-max normalization to [0, 1]. A constant image maps to all zeros.
Image normalize(const Image& img);

std::size_t count_nonzero(const Mask& mask);

}  // namespace rflow::imaging
