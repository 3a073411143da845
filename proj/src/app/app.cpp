#include "rflow/app/app.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "rflow/core/errors.hpp"
#include "rflow/imaging/blobs.hpp"

#ifndef RFLOW_GIT_DESCRIBE
#define RFLOW_GIT_DESCRIBE "unknown"
#endif

namespace rflow::app {

namespace fs = std::filesystem;
using nlohmann::json;

const char* git_describe() { return RFLOW_GIT_DESCRIBE; }

const std::vector<std::string>& optimizer_names() {
  static const std::vector<std::string> names{"grid", "random", "mobo", "ga", "mcts"};
  return names;
}

void RunConfig::validate() const {
  const auto& names = optimizer_names();
  if (std::find(names.begin(), names.end(), optimizer) == names.end())
    throw ConfigError("unknown optimizer '" + optimizer + "' (expected grid, random, mobo, ga, mcts)");
  workflow::builtin_pipeline(pipeline);
  if (budget < 1) throw ConfigError("budget must be at least 1");
  if (optimizer == "mobo" && std::min(n_init, budget) < 4) throw ConfigError("mobo needs at least 4 initial points");
  if (optimizer == "ga" && (pop < 4 || pop % 2 != 0)) throw ConfigError("ga population must be even and at least 4");
  if (optimizer == "grid" && levels < 1) throw ConfigError("grid needs at least one level");
  if (optimizer == "mcts" && !(c_ucb >= 0.0)) throw ConfigError("c_ucb must be non-negative");
}

optimize::ParetoArchive run_optimizer(const RunConfig& cfg, const optimize::Problem& problem,
                                      const optimize::RunControl& ctl) {
  cfg.validate();
  if (cfg.optimizer == "grid") return optimize::grid_search(problem, cfg.levels, cfg.budget, cfg.seed, ctl);
  if (cfg.optimizer == "random") return optimize::random_search(problem, cfg.budget, cfg.seed, ctl);
  if (cfg.optimizer == "mobo") {
    optimize::MoboOptions o;
    o.budget = cfg.budget;
    o.n_init = std::min(cfg.n_init, cfg.budget);
    return optimize::mobo(problem, o, cfg.seed, ctl);
  }
  if (cfg.optimizer == "ga") {
    optimize::GaOptions o;
    o.pop = cfg.pop;
    o.budget = cfg.budget;
    o.generations = optimize::ga_generations_for_budget(cfg.budget, o);
    return optimize::ga_optimize(problem, o, cfg.seed, ctl).archive;
  }
  optimize::MctsOptions o;
  o.budget = cfg.budget;
  o.c_ucb = cfg.c_ucb;
  return optimize::mcts_optimize(problem, o, cfg.seed, ctl);
}

std::shared_ptr<workflow::ImageContext> make_context(imaging::Image img) {
  auto ctx = std::make_shared<workflow::ImageContext>(std::move(img));
  try {
    ctx->oracle();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("image does not suit the pipeline: ") + e.what());
  }
  return ctx;
}

std::shared_ptr<workflow::ImageContext> load_context(const fs::path& image) {
  imaging::Image img;
  try {
    img = imaging::read_image(image);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read image '" + image.string() + "': " + e.what());
  }
  return make_context(std::move(img));
}

namespace {

void write_text(const fs::path& p, const std::string& text) {
  imaging::write_file(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

RunFiles write_run(const fs::path& dir, const RunConfig& cfg, const optimize::ParetoArchive& archive,
                   double wall_seconds, const std::string& status) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  RunFiles f{dir / "archive.tsv", dir / "front.tsv", dir / "manifest.json"};
  write_text(f.archive, optimize::archive_to_tsv(archive, false));
  write_text(f.front, optimize::archive_to_tsv(archive, true));
  json m{{"config",
          {{"pipeline", cfg.pipeline},
           {"image", cfg.image.string()},
           {"optimizer", cfg.optimizer},
           {"budget", cfg.budget},
           {"seed", cfg.seed},
           {"threads", cfg.threads},
           {"n_init", cfg.n_init},
           {"pop", cfg.pop},
           {"levels", cfg.levels},
           {"c_ucb", cfg.c_ucb}}},
         {"seed", cfg.seed},
         {"status", status},
         {"wall_time_s", wall_seconds},
         {"git_describe", git_describe()},
         {"objectives", archive.objective_names()},
         {"evaluations", archive.size()},
         {"feasible", archive.feasible_count()},
         {"front_size", archive.front().size()},
         {"files", {{"archive", "archive.tsv"}, {"front", "front.tsv"}}}};
  write_text(f.manifest, m.dump(2) + "\n");
  return f;
}

imaging::RgbImage render_overlay(const workflow::WorkflowState& s, const workflow::ImageContext& ctx) {
  const imaging::Image g = imaging::normalize(ctx.image());
  imaging::RgbImage out(g.width(), g.height());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto v = static_cast<std::uint8_t>(std::lround(std::clamp(g.data()[i], 0.0f, 1.0f) * 255.0f));
    out.data()[i] = {v, v, v};
  }
  if (s.region && s.region->same_shape(out)) {
    for (std::size_t i = 0; i < out.size(); ++i)
      if (s.region->data()[i]) {
        auto& p = out.data()[i];
        p.r = static_cast<std::uint8_t>(std::lround(0.6 * p.r));
        p.g = static_cast<std::uint8_t>(std::lround(0.6 * p.g + 0.4 * 255));
        p.b = static_cast<std::uint8_t>(std::lround(0.6 * p.b + 0.4 * 255));
      }
  }
  if (s.walls)
    for (const auto& c : s.walls->chains)
      for (const auto& px : c.pixels)
        if (out.contains(px.row, px.col)) out(px.row, px.col) = {0, 255, 0};
  if (s.keypoints) {
    std::vector<bool> flagged(s.keypoints->size(), false);
    if (s.keypoints->size() >= 5) {
      try {
        flagged = rewards::lattice_flags(s.keypoints->coords, ctx.spacing()).flagged;
      } catch (const DomainError&) {
      }
    }
    constexpr double radius = 3.0;
    for (std::size_t k = 0; k < s.keypoints->size(); ++k) {
      const imaging::Rgb color = flagged[k] ? imaging::Rgb{255, 255, 0} : imaging::Rgb{255, 0, 0};
      const auto& p = s.keypoints->coords[k];
      for (int a = 0; a < 32; ++a) {
        const double t = a * 2.0 * 3.141592653589793 / 32;
        const int r = static_cast<int>(std::lround(p.row + radius * std::sin(t)));
        const int c = static_cast<int>(std::lround(p.col + radius * std::cos(t)));
        if (out.contains(r, c)) out(r, c) = color;
      }
    }
  }
  return out;
}

imaging::LabelMap evaluation_label_map(const workflow::WorkflowState& s, const workflow::ImageContext& ctx) {
  const auto& img = ctx.image();
  if (s.label_map) return *s.label_map;
  const auto pts = s.labeled_points();
  learn::ClusterLabels labels;
  if (s.labels && s.labels->size() == pts.size())
    labels = *s.labels;
  else
    labels.labels.assign(pts.size(), 0);
  double spacing = 0.0;
  try {
    spacing = ctx.spacing();
  } catch (const DomainError&) {
    return imaging::LabelMap(img.width(), img.height(), -1);
  }
  return rewards::rasterize_labels(pts, labels, img.width(), img.height(), spacing);
}

EvaluationArtifacts evaluate_with_artifacts(const workflow::Pipeline& p, const workflow::ImageContext& ctx,
                                            const workflow::ParamVector& v, std::uint64_t seed) {
  auto ev = workflow::execute(p, ctx, v, seed);
  EvaluationArtifacts out;
  out.rewards = ev.rewards;
  out.overlay_png = imaging::encode_rgb_png(render_overlay(ev.state, ctx));
  out.label_map_png = rewards::label_map_png(evaluation_label_map(ev.state, ctx));
  out.state = std::move(ev.state);
  return out;
}

std::string rewards_to_text(const rewards::RewardVector& r) {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < r.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", r.values[i]);
    out += r.names[i] + "\t" + buf + "\n";
  }
  return out;
}

imaging::SyntheticScene make_scene(const SceneOptions& o) {
  if (!(o.noise >= 0.0)) throw DomainError("noise must be non-negative");
  imaging::SyntheticScene scene = imaging::generate_lattice(o.spec, o.seed);
  scene.image = imaging::add_gaussian_noise(scene.image, o.noise, derive_seed(o.seed, 1));
  return scene;
}

namespace {

constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    for (int k = 3; k >= 0; --k) out += kB64[(v >> (6 * k)) & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = bytes[i] << 16;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

imaging::Bytes base64_decode(const std::string& text) {
  int table[256];
  std::fill(std::begin(table), std::end(table), -1);
  for (int i = 0; i < 64; ++i) table[static_cast<unsigned char>(kB64[i])] = i;
  imaging::Bytes out;
  std::uint32_t acc = 0;
  int bits = 0;
  std::size_t pad = 0;
  for (char ch : text) {
    if (ch == '\n' || ch == '\r' || ch == ' ') continue;
    if (ch == '=') {
      ++pad;
      continue;
    }
    if (pad > 0) throw ConfigError("malformed base64");
    const int v = table[static_cast<unsigned char>(ch)];
    if (v < 0) throw ConfigError("malformed base64");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  if (pad > 2 || bits >= 6) throw ConfigError("malformed base64");
  return out;
}

}  // namespace rflow::app
