#include "rflow/imaging/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "rflow/core/errors.hpp"

namespace rflow::imaging {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  Bytes out;

  PngWriter() {
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    info = png_create_info_struct(png);
    if (!info) {
      png_destroy_write_struct(&png, nullptr);
      throw std::runtime_error("png_create_info_struct failed");
    }
  }
  ~PngWriter() { png_destroy_write_struct(&png, &info); }
  PngWriter(const PngWriter&) = delete;
  PngWriter& operator=(const PngWriter&) = delete;

  static void write_fn(png_structp p, png_bytep data, png_size_t n) {
    auto* self = static_cast<PngWriter*>(png_get_io_ptr(p));
    self->out.insert(self->out.end(), data, data + n);
  }
  static void flush_fn(png_structp) {}

  // rows: one pointer per row, already in PNG byte order.
  Bytes write(int width, int height, int bit_depth, int color_type,
              const std::vector<png_bytep>& rows, std::span<const Rgb> palette = {}) {
    if (setjmp(png_jmpbuf(png))) throw std::runtime_error("PNG encoding failed");
    png_set_write_fn(png, this, &write_fn, &flush_fn);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    std::vector<png_color> pal;
    if (color_type == PNG_COLOR_TYPE_PALETTE) {
      for (const Rgb& c : palette) pal.push_back({c.r, c.g, c.b});
      png_set_PLTE(png, info, pal.data(), static_cast<int>(pal.size()));
    }
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
    return std::move(out);
  }
};

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::span<const std::uint8_t> src;
  std::size_t pos = 0;

  explicit PngReader(std::span<const std::uint8_t> bytes) : src(bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
      throw DomainError("not a PNG image");
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    info = png_create_info_struct(png);
    if (!info) {
      png_destroy_read_struct(&png, nullptr, nullptr);
      throw std::runtime_error("png_create_info_struct failed");
    }
  }
  ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;

  static void read_fn(png_structp p, png_bytep data, png_size_t n) {
    auto* self = static_cast<PngReader*>(png_get_io_ptr(p));
    if (self->pos + n > self->src.size()) png_error(p, "truncated PNG");
    std::memcpy(data, self->src.data() + self->pos, n);
    self->pos += n;
  }
};

}  // namespace

Bytes encode_png16(const Image& img) {
  const int w = img.width(), h = img.height();
  if (w < 1 || h < 1) throw DomainError("cannot encode an empty image");
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h * 2);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(static_cast<double>(img.data()[i]), 0.0, 1.0);
    const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    buf[2 * i] = static_cast<std::uint8_t>(q >> 8);
    buf[2 * i + 1] = static_cast<std::uint8_t>(q & 0xff);
  }
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = buf.data() + static_cast<std::size_t>(y) * w * 2;
  PngWriter wr;
  return wr.write(w, h, 16, PNG_COLOR_TYPE_GRAY, rows);
}

Bytes encode_palette_png(const Grid<std::uint8_t>& indices, std::span<const Rgb> palette) {
  const int w = indices.width(), h = indices.height();
  if (w < 1 || h < 1) throw DomainError("cannot encode an empty image");
  if (palette.empty() || palette.size() > 256) throw DomainError("palette needs 1..256 colors");
  std::vector<std::uint8_t> buf(indices.data().begin(), indices.data().end());
  for (auto& v : buf) v = std::min<std::uint8_t>(v, static_cast<std::uint8_t>(palette.size() - 1));
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = buf.data() + static_cast<std::size_t>(y) * w;
  PngWriter wr;
  return wr.write(w, h, 8, PNG_COLOR_TYPE_PALETTE, rows, palette);
}

Bytes encode_rgb_png(const RgbImage& img) {
  const int w = img.width(), h = img.height();
  if (w < 1 || h < 1) throw DomainError("cannot encode an empty image");
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < img.size(); ++i) {
    buf[3 * i] = img.data()[i].r;
    buf[3 * i + 1] = img.data()[i].g;
    buf[3 * i + 2] = img.data()[i].b;
  }
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = buf.data() + static_cast<std::size_t>(y) * w * 3;
  PngWriter wr;
  return wr.write(w, h, 8, PNG_COLOR_TYPE_RGB, rows);
}

namespace {

// Reads the image into 16-bit-or-8-bit samples with `channels` per pixel.
struct Decoded {
  int width = 0, height = 0, channels = 0, bit_depth = 0;
  std::vector<std::uint8_t> pixels;
};

Decoded decode(std::span<const std::uint8_t> bytes, bool expand_palette) {
  PngReader rd(bytes);
  Decoded d;
  if (setjmp(png_jmpbuf(rd.png))) throw DomainError("corrupt PNG image");
  png_set_read_fn(rd.png, &rd, &PngReader::read_fn);
  png_read_info(rd.png, rd.info);
  const int color = png_get_color_type(rd.png, rd.info);
  int depth = png_get_bit_depth(rd.png, rd.info);
  if (color == PNG_COLOR_TYPE_PALETTE && expand_palette) png_set_palette_to_rgb(rd.png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(rd.png);
  if (color == PNG_COLOR_TYPE_PALETTE && !expand_palette && depth < 8) png_set_packing(rd.png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(rd.png);
  if (depth == 16 && std::endian::native == std::endian::little) png_set_swap(rd.png);
  png_read_update_info(rd.png, rd.info);
  d.width = static_cast<int>(png_get_image_width(rd.png, rd.info));
  d.height = static_cast<int>(png_get_image_height(rd.png, rd.info));
  d.channels = png_get_channels(rd.png, rd.info);
  d.bit_depth = png_get_bit_depth(rd.png, rd.info);
  const std::size_t rowbytes = png_get_rowbytes(rd.png, rd.info);
  d.pixels.resize(rowbytes * d.height);
  std::vector<png_bytep> rows(d.height);
  for (int y = 0; y < d.height; ++y) rows[y] = d.pixels.data() + rowbytes * y;
  png_read_image(rd.png, rows.data());
  png_read_end(rd.png, nullptr);
  return d;
}

}  // namespace

Image decode_png(std::span<const std::uint8_t> bytes) {
  const Decoded d = decode(bytes, true);
  Image img(d.width, d.height, 0.0f);
  const std::size_t n = img.size();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    const int ch_used = d.channels >= 3 ? 3 : 1;
    static constexpr double luma[3] = {0.299, 0.587, 0.114};
    for (int c = 0; c < ch_used; ++c) {
      const std::size_t k = i * d.channels + c;
      double v;
      if (d.bit_depth == 16) {
        std::uint16_t s;
        std::memcpy(&s, d.pixels.data() + 2 * k, 2);
        v = s / 65535.0;
      } else {
        v = d.pixels[k] / 255.0;
      }
      acc += ch_used == 1 ? v : luma[c] * v;
    }
    img.data()[i] = static_cast<float>(acc);
  }
  return img;
}

Grid<std::uint8_t> decode_png_indices(std::span<const std::uint8_t> bytes) {
  const Decoded d = decode(bytes, false);
  if (d.bit_depth != 8 || d.channels != 1) throw DomainError("expected an 8-bit single-channel PNG");
  return Grid<std::uint8_t>(d.width, d.height, d.pixels);
}

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("cannot write " + path.string());
}

fs::path raw_header_path(const fs::path& raw) { return fs::path(raw.string() + ".json"); }

void write_raw(const fs::path& path, const Image& img) {
  Bytes bytes(img.size() * 4);
  for (std::size_t i = 0; i < img.size(); ++i) {
    auto u = std::bit_cast<std::uint32_t>(img.data()[i]);
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<std::uint8_t>(u >> (8 * b));
  }
  write_file(path, bytes);
  const std::string header = json{{"width", img.width()}, {"height", img.height()}}.dump() + "\n";
  write_file(raw_header_path(path),
             std::span(reinterpret_cast<const std::uint8_t*>(header.data()), header.size()));
}

Image read_raw(const fs::path& path) {
  const Bytes hb = read_file(raw_header_path(path));
  int w = 0, h = 0;
  try {
    const json header = json::parse(hb.begin(), hb.end());
    w = header.at("width").get<int>();
    h = header.at("height").get<int>();
  } catch (const json::exception& e) {
    throw DomainError(std::string("bad raw header: ") + e.what());
  }
  const Bytes bytes = read_file(path);
  if (w < 1 || h < 1 || bytes.size() != static_cast<std::size_t>(w) * h * 4)
    throw DomainError("raw image size does not match its header");
  std::vector<float> data(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    data[i] = std::bit_cast<float>(u);
  }
  return Image(w, h, std::move(data));
}

Image read_image(const fs::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".raw") return read_raw(path);
  if (ext == ".png") return decode_png(read_file(path));
  throw ConfigError("unsupported image format: " + path.string());
}

std::span<const Rgb> label_palette() {
  static const std::array<Rgb, 16> palette{{{0, 0, 0},
                                            {230, 25, 75},
                                            {60, 180, 75},
                                            {255, 225, 25},
                                            {0, 130, 200},
                                            {245, 130, 48},
                                            {145, 30, 180},
                                            {70, 240, 240},
                                            {240, 50, 230},
                                            {210, 245, 60},
                                            {250, 190, 212},
                                            {0, 128, 128},
                                            {220, 190, 255},
                                            {170, 110, 40},
                                            {255, 250, 200},
                                            {128, 0, 0}}};
  return palette;
}

namespace {

json points_json(const std::vector<Point>& pts) {
  json arr = json::array();
  for (const Point& p : pts) arr.push_back({p.row, p.col});
  return arr;
}

std::vector<Point> points_from_json(const json& arr) {
  std::vector<Point> pts;
  for (const auto& p : arr) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return pts;
}

}  // namespace

SceneFiles write_scene(const fs::path& dir, const std::string& name, const SyntheticScene& scene) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  SceneFiles files;
  files.image_png = dir / (name + ".png");
  files.image_raw = dir / (name + ".raw");
  files.raw_header = raw_header_path(files.image_raw);
  files.truth = dir / (name + ".truth.json");
  write_file(files.image_png, encode_png16(scene.image));
  write_raw(files.image_raw, scene.image);

  json rec{{"width", scene.image.width()},
           {"height", scene.image.height()},
           {"spacing", scene.spacing},
           {"seed", scene.seed},
           {"atom_count", scene.atoms.size()},
           {"atoms", points_json(scene.atoms)}};
  if (!scene.secondary_atoms.empty()) rec["secondary_atoms"] = points_json(scene.secondary_atoms);
  if (scene.amorphous_mask) {
    const fs::path p = dir / (name + ".mask.png");
    write_file(p, encode_palette_png(*scene.amorphous_mask, label_palette()));
    rec["amorphous_mask"] = p.filename().string();
    files.extras.push_back(p);
  }
  if (scene.domain_map) {
    Grid<std::uint8_t> idx(scene.domain_map->width(), scene.domain_map->height(), 0);
    for (std::size_t i = 0; i < idx.size(); ++i)
      idx.data()[i] = static_cast<std::uint8_t>(scene.domain_map->data()[i] + 1);
    const fs::path p = dir / (name + ".domains.png");
    write_file(p, encode_palette_png(idx, label_palette()));
    rec["domain_map"] = p.filename().string();
    files.extras.push_back(p);
  }
  if (scene.wall_col) rec["wall_col"] = *scene.wall_col;
  const std::string text = rec.dump(1) + "\n";
  write_file(files.truth, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  return files;
}

SceneTruth read_scene_truth(const fs::path& truth_path) {
  const Bytes b = read_file(truth_path);
  SceneTruth t;
  try {
    const json rec = json::parse(b.begin(), b.end());
    t.width = rec.at("width").get<int>();
    t.height = rec.at("height").get<int>();
    t.spacing = rec.at("spacing").get<double>();
    t.seed = rec.at("seed").get<std::uint64_t>();
    t.atoms = points_from_json(rec.at("atoms"));
    if (rec.contains("secondary_atoms")) t.secondary_atoms = points_from_json(rec["secondary_atoms"]);
    const fs::path dir = truth_path.parent_path();
    if (rec.contains("amorphous_mask"))
      t.amorphous_mask = decode_png_indices(read_file(dir / rec["amorphous_mask"].get<std::string>()));
    if (rec.contains("domain_map")) {
      const auto idx = decode_png_indices(read_file(dir / rec["domain_map"].get<std::string>()));
      LabelMap m(idx.width(), idx.height(), 0);
      for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = static_cast<int>(idx.data()[i]) - 1;
      t.domain_map = std::move(m);
    }
    if (rec.contains("wall_col")) t.wall_col = rec["wall_col"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("bad ground-truth record: ") + e.what());
  }
  return t;
}

}  // namespace rflow::imaging
