#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "rflow/rewards/rewards.hpp"
#include "rflow/workflow/params.hpp"

namespace rflow::optimize {

using Objectives = std::vector<double>;

/// a dominates b: a <= b everywhere and a < b somewhere (minimization).
bool dominates(const Objectives& a, const Objectives& b);

/// Non-dominated indices in ascending order. Of several identical points
/// only the first is kept. Throws DomainError on mixed lengths.
std::vector<std::size_t> pareto_front(const std::vector<Objectives>& points);

/// Area dominated by `front` and bounded by `ref` (2 objectives). Dominated
/// points in `front` are allowed and contribute nothing. Throws DomainError if
/// a point is not strictly below ref.
double hypervolume_2d(const std::vector<Objectives>& front, const Objectives& ref);

/// Augmented Chebyshev: max_i w_i x_i + rho * sum_i w_i x_i.
double chebyshev(const Objectives& normalized, const std::vector<double>& weights, double rho = 0.05);

struct ArchiveEntry {
  std::size_t index = 0;  // evaluation index
  workflow::ParamVector params;
  std::optional<rewards::RewardVector> rewards;  // empty when infeasible
  std::string error;                             // failure message when infeasible

  bool feasible() const noexcept { return rewards.has_value(); }
};

/// Every evaluation in order plus the incrementally maintained front.
class ParetoArchive {
 public:
  ParetoArchive() = default;
  explicit ParetoArchive(std::vector<std::string> objective_names);

  const std::vector<std::string>& objective_names() const noexcept { return names_; }
  const std::vector<ArchiveEntry>& entries() const noexcept { return entries_; }
  /// Positions into entries(), ascending.
  const std::vector<std::size_t>& front() const noexcept { return front_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t feasible_count() const noexcept { return feasible_; }

  const ArchiveEntry& add(workflow::ParamVector params, rewards::RewardVector r);
  const ArchiveEntry& add_infeasible(workflow::ParamVector params, std::string error);

  /// Objective vectors of feasible entries, with their positions.
  std::vector<Objectives> feasible_objectives(std::vector<std::size_t>* positions = nullptr) const;

  /// Per-objective min and max over feasible entries.
  void objective_bounds(Objectives& lo, Objectives& hi) const;
  /// (x - lo) / (hi - lo) per objective; zero range maps to 0.
  Objectives normalize(const Objectives& x) const;

  /// First n entries (front recomputed).
  ParetoArchive prefix(std::size_t n) const;

 private:
  void insert_front(std::size_t pos);

  std::vector<std::string> names_;
  std::vector<ArchiveEntry> entries_;
  std::vector<std::size_t> front_;
  std::size_t feasible_ = 0;
};

/// Front position (into entries()) minimizing the augmented Chebyshev
/// scalarization of archive-normalized objectives; ties go to the lowest
/// evaluation index. Throws DomainError for an empty front or bad weights.
std::size_t select_front_point(const ParetoArchive& a, const std::vector<double>& weights);

/// Hypervolume of the archive front for two objectives.
double archive_hypervolume(const ParetoArchive& a, const Objectives& ref);

/// Tab-separated export: index, params, objectives, feasible ("NA" when infeasible).
std::string archive_to_tsv(const ParetoArchive& a, bool front_only = false);

}  // namespace rflow::optimize
