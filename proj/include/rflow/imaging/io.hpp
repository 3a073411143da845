#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rflow/imaging/image.hpp"
#include "rflow/imaging/synthetic.hpp"

namespace rflow::imaging {

using Bytes = std::vector<std::uint8_t>;

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};
using RgbImage = Grid<Rgb>;

/// PNG encoders. Output bytes are deterministic for equal inputs.
Bytes encode_png16(const Image& img);  // [0,1] mapped linearly to 0..65535
Bytes encode_palette_png(const Grid<std::uint8_t>& indices, std::span<const Rgb> palette);
Bytes encode_rgb_png(const RgbImage& img);

/// Decodes 8- or 16-bit grayscale (or RGB, converted to luma) to [0,1].
Image decode_png(std::span<const std::uint8_t> bytes);
/// Decodes an 8-bit palette / grayscale PNG to its raw index values.
Grid<std::uint8_t> decode_png_indices(std::span<const std::uint8_t> bytes);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Raw format: little-endian float32, row-major, plus a sidecar
/// `<path>.json` holding {"width": W, "height": H}.
void write_raw(const std::filesystem::path& path, const Image& img);
Image read_raw(const std::filesystem::path& path);
std::filesystem::path raw_header_path(const std::filesystem::path& raw);

/// Dispatches on extension: .png or .raw.
Image read_image(const std::filesystem::path& path);

/// Fixed palette used for label maps and masks (index 0 = background).
std::span<const Rgb> label_palette();

/// Ground-truth record for a synthetic scene. Masks are written as PNG files
/// next to the record and referenced by file name.
struct SceneFiles {
  std::filesystem::path image_png;
  std::filesystem::path image_raw;
  std::filesystem::path raw_header;
  std::filesystem::path truth;
  std::vector<std::filesystem::path> extras;
};

SceneFiles write_scene(const std::filesystem::path& dir, const std::string& name,
                       const SyntheticScene& scene);

struct SceneTruth {
  int width = 0;
  int height = 0;
  double spacing = 0.0;
  std::uint64_t seed = 0;
  std::vector<Point> atoms;
  std::vector<Point> secondary_atoms;
  std::optional<Mask> amorphous_mask;
  std::optional<LabelMap> domain_map;
  std::optional<double> wall_col;
};

SceneTruth read_scene_truth(const std::filesystem::path& truth_path);

}  // namespace rflow::imaging
