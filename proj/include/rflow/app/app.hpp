#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "rflow/imaging/io.hpp"
#include "rflow/optimize/optimizers.hpp"
#include "rflow/workflow/workflow.hpp"

namespace rflow::app {

/// Build identifier baked in at configure time.
const char* git_describe();

const std::vector<std::string>& optimizer_names();

struct RunConfig {
  std::string pipeline = "log_star";
  std::filesystem::path image;
  std::string optimizer = "mobo";
  std::size_t budget = 60;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  unsigned threads = 1;
  std::size_t n_init = 10;  // mobo
  std::size_t pop = 10;     // ga
  int levels = 5;           // grid
  double c_ucb = 1.4142135623730951;  // mcts

  /// Throws ConfigError on an unknown optimizer or pipeline, budget < 1, or
  /// option combinations the optimizer rejects.
  void validate() const;
};

/// Runs the configured optimizer on a prepared problem.
optimize::ParetoArchive run_optimizer(const RunConfig& cfg, const optimize::Problem& problem,
                                      const optimize::RunControl& ctl = {});

/// Loads an image and checks that the pipeline can run on it (the count
/// oracle needs a lattice). Throws ConfigError otherwise.
std::shared_ptr<workflow::ImageContext> load_context(const std::filesystem::path& image);
std::shared_ptr<workflow::ImageContext> make_context(imaging::Image img);

struct RunFiles {
  std::filesystem::path archive;
  std::filesystem::path front;
  std::filesystem::path manifest;
};

/// Writes archive.tsv, front.tsv and manifest.json into `dir`.
RunFiles write_run(const std::filesystem::path& dir, const RunConfig& cfg, const optimize::ParetoArchive& archive,
                   double wall_seconds, const std::string& status = "done");

/// Overlay: grayscale image, region mask cyan at 40%, walls green, keypoints
/// as red circles (yellow when flagged by the lattice-error rule).
imaging::RgbImage render_overlay(const workflow::WorkflowState& s, const workflow::ImageContext& ctx);

/// Per-pixel label artifact of an evaluation: the wall label map when
/// present, else labels rasterized at the keypoints (all 0 without labels).
imaging::LabelMap evaluation_label_map(const workflow::WorkflowState& s, const workflow::ImageContext& ctx);

struct EvaluationArtifacts {
  rewards::RewardVector rewards;
  imaging::Bytes overlay_png;
  imaging::Bytes label_map_png;
  workflow::WorkflowState state;
};

/// One execution plus rendered artifacts. DomainError for infeasible params.
EvaluationArtifacts evaluate_with_artifacts(const workflow::Pipeline& p, const workflow::ImageContext& ctx,
                                            const workflow::ParamVector& v, std::uint64_t seed);

std::string rewards_to_text(const rewards::RewardVector& r);

struct SceneOptions {
  imaging::LatticeSpec spec;
  double noise = 0.0;  // relative to the clean image's range
  std::uint64_t seed = 0;
};

/// Synthetic scene with noise applied to its image.
imaging::SyntheticScene make_scene(const SceneOptions& o);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ConfigError on malformed input.
imaging::Bytes base64_decode(const std::string& text);

}  // namespace rflow::app
