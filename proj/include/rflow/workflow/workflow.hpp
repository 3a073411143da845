#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "rflow/features/descriptors.hpp"
#include "rflow/imaging/blobs.hpp"
#include "rflow/learn/learn.hpp"
#include "rflow/rewards/rewards.hpp"
#include "rflow/workflow/params.hpp"

namespace rflow::workflow {

enum class Kind { image, keypoints, descriptors, labels };

std::string to_string(Kind k);
Kind parse_kind(const std::string& s);

struct ProvenanceEntry {
  std::string op_id;
  std::string prefix;
  ParamVector params;  // local names
  bool operator==(const ProvenanceEntry&) const = default;
};

struct WorkflowState {
  std::optional<imaging::Keypoints> keypoints;
  std::optional<features::DescriptorSpec> descriptor_spec;
  std::optional<features::DescriptorMatrix> descriptors;
  std::optional<learn::ClusterLabels> labels;
  std::optional<imaging::Mask> region;
  std::optional<imaging::LabelMap> label_map;
  std::optional<rewards::WallSet> walls;
  std::vector<ProvenanceEntry> provenance;

  Kind kind() const;
  /// Keypoints matching the descriptor rows (all keypoints without descriptors).
  std::vector<imaging::Point> labeled_points() const;
  bool operator==(const WorkflowState&) const;
};

/// An image plus quantities derived from it once and shared by every
/// evaluation (lattice spacing and the physics count oracle). Thread-safe.
class ImageContext {
 public:
  explicit ImageContext(imaging::Image img);

  const imaging::Image& image() const noexcept { return image_; }
  /// Throws NoLatticeError (a DomainError) when the image has no lattice.
  const rewards::CountOracle& oracle() const;
  double spacing() const { return oracle().spacing; }

  /// Pins the spacing instead of estimating it (area still measured).
  void set_spacing(double spacing);

 private:
  imaging::Image image_;
  mutable std::mutex mutex_;
  mutable std::optional<rewards::CountOracle> oracle_;
  mutable std::optional<std::string> oracle_error_;
  std::optional<double> spacing_override_;
};

using StepFn = std::function<void(WorkflowState&, const ParamVector& local, std::uint64_t seed,
                                  const ImageContext& ctx)>;

struct OperationSpec {
  std::string id;
  std::string prefix;  // joint-space name prefix
  Kind input = Kind::image;
  Kind output = Kind::keypoints;
  ParamSpace params;
  /// Local parameters that are fixed rather than searched.
  ParamVector fixed;
  bool operator==(const OperationSpec&) const = default;
};

/// Implementation registered for an operation id.
const StepFn& step_function(const std::string& op_id);
std::vector<std::string> registered_operations();

struct RewardSpec {
  std::string name;
  Kind kind;  // terminal kind the reward reads
  std::function<double(const WorkflowState&, const ImageContext&)> fn;
};

const RewardSpec& reward_spec(const std::string& name);
std::vector<std::string> registered_rewards();

struct Pipeline {
  std::string name;
  std::vector<OperationSpec> steps;
  std::vector<std::string> rewards;

  ParamSpace joint_space() const;
  /// Throws DomainError on kind mismatches, duplicate prefixes or empty steps.
  void validate() const;
  bool operator==(const Pipeline&) const = default;
};

struct Evaluation {
  WorkflowState state;
  rewards::RewardVector rewards;
};

/// Runs the steps in order, then scores the terminal state. A failing step
/// throws StepError naming it; an invalid v throws DomainError up front.
Evaluation execute(const Pipeline& p, const ImageContext& ctx, const ParamVector& v, std::uint64_t seed);

/// Runs only the steps and returns the terminal state.
WorkflowState run_steps(const Pipeline& p, const ImageContext& ctx, const ParamVector& v, std::uint64_t seed);

/// Scores an already computed state.
rewards::RewardVector score(const std::vector<std::string>& reward_names, const WorkflowState& s,
                            const ImageContext& ctx);

/// Re-executes a provenance log. Step i uses derive_seed(seed, i).
WorkflowState replay(const std::vector<ProvenanceEntry>& log, const ImageContext& ctx, std::uint64_t seed);

std::string provenance_to_text(const std::vector<ProvenanceEntry>& log, std::uint64_t seed);
std::vector<ProvenanceEntry> provenance_from_text(const std::string& text, std::uint64_t& seed);

std::string pipeline_to_text(const Pipeline& p);
Pipeline pipeline_from_text(const std::string& text);

// ---------------------------------------------------------------------------
// Built-in pipelines and the operation catalog

OperationSpec op_detect_blobs();
/// Fails the workflow when the keypoint count is off the count oracle by more
/// than max_discrepancy (relative).
OperationSpec op_lattice_gate(double max_discrepancy = 0.25);
OperationSpec op_extract_patches();
OperationSpec op_fft_magnitude();
OperationSpec op_pca();
OperationSpec op_gmm(bool search_k);
OperationSpec op_kmeans();
OperationSpec op_mask_from_clusters();
OperationSpec op_extract_walls();

Pipeline log_star_pipeline();
Pipeline amorphous_pipeline();
Pipeline walls_pipeline();
std::vector<Pipeline> builtin_pipelines();
Pipeline builtin_pipeline(const std::string& name);  // ConfigError if unknown

std::vector<OperationSpec> default_catalog();

/// Kind -> reward names computable on a terminal state of that kind.
using RewardRegistry = std::map<Kind, std::vector<std::string>>;
RewardRegistry default_reward_registry();

/// All kind-compatible sequences of length <= max_len starting from the image
/// kind whose terminal kind has a registered reward. Ordered lexicographically
/// by operation ids.
std::vector<Pipeline> enumerate_workflows(const std::vector<OperationSpec>& catalog, int max_len,
                                          const RewardRegistry& registry);

}  // namespace rflow::workflow
