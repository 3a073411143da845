#include "rflow/imaging/image.hpp"

#include <algorithm>

namespace rflow::imaging {

Range intensity_range(const Image& img) {
  if (img.empty()) return {};
  const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
  return {*lo, *hi};
}

Image normalize(const Image& img) {
  Image out(img.width(), img.height(), 0.0f);
  const Range r = intensity_range(img);
  const double span = r.max - r.min;
  if (!(span > 0.0)) return out;
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i)
    dst[i] = static_cast<float>((static_cast<double>(src[i]) - r.min) / span);
  return out;
}

std::size_t count_nonzero(const Mask& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.data().begin(), mask.data().end(), [](auto v) { return v != 0; }));
}

}  // namespace rflow::imaging
