#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rflow/core/rng.hpp"
#include "rflow/optimize/gp.hpp"
#include "rflow/optimize/pareto.hpp"
#include "rflow/rewards/rewards.hpp"
#include "rflow/workflow/params.hpp"
#include "rflow/workflow/workflow.hpp"

namespace rflow::optimize {

using workflow::ParamSpace;
using workflow::ParamVector;

/// A black-box multi-objective problem. `evaluate` throws DomainError for an
/// infeasible candidate; any other exception aborts the run.
struct Problem {
  ParamSpace space;
  std::vector<std::string> objectives;
  std::function<rewards::RewardVector(const ParamVector&, std::uint64_t seed)> evaluate;
};

Problem pipeline_problem(workflow::Pipeline p, std::shared_ptr<const workflow::ImageContext> ctx);

/// Seed handed to evaluation `index` of a run seeded with `seed`.
std::uint64_t evaluation_seed(std::uint64_t seed, std::size_t index);

/// Raised when an evaluation fails with something other than DomainError.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(ParamVector params, const std::string& what)
      : std::runtime_error(what), params_(std::move(params)) {}
  const ParamVector& params() const noexcept { return params_; }

 private:
  ParamVector params_;
};

struct RunControl {
  unsigned threads = 1;
  /// Called before each batch of evaluations; may block (pause).
  std::function<void()> before_eval;
  /// Called after each batch is merged into the archive.
  std::function<void(const ParetoArchive&)> on_update;
  /// Returning true stops the run; the archive so far is returned.
  std::function<bool()> stop;
};

/// Maps the unit cube onto a space. A sigma_min/sigma_max pair is
/// reparameterized so every point decodes to sigma_min < sigma_max.
class UnitCodec {
 public:
  explicit UnitCodec(ParamSpace space);

  const ParamSpace& space() const noexcept { return space_; }
  std::size_t size() const noexcept { return space_.size(); }
  ParamVector decode(const std::vector<double>& u) const;
  /// GP input: unit coordinates, categoricals one-hot.
  Eigen::RowVectorXd features(const std::vector<double>& u) const;
  std::size_t feature_size() const noexcept { return feature_size_; }

 private:
  ParamSpace space_;
  int sigma_min_ = -1;
  int sigma_max_ = -1;
  std::size_t feature_size_ = 0;
};

/// n points in [0,1]^d, one per stratum in every dim; dims listed in
/// `uniform_dims` are drawn independently instead.
std::vector<std::vector<double>> latin_hypercube(std::size_t n, std::size_t d, Rng& rng,
                                                 const std::vector<bool>& uniform_dims = {});

/// Full factorial grid: `levels` values per continuous dim (endpoints
/// included), integer dims all values when they have at most `levels`
/// values (else `levels` snapped values), categoricals all values. The last
/// dim varies fastest. Points with sigma_min >= sigma_max are skipped.
std::vector<ParamVector> grid_points(const ParamSpace& space, int levels);

ParetoArchive grid_search(const Problem& p, int levels, std::size_t budget, std::uint64_t seed,
                          const RunControl& ctl = {});

ParetoArchive random_search(const Problem& p, std::size_t budget, std::uint64_t seed, const RunControl& ctl = {});

struct MoboOptions {
  std::size_t budget = 60;
  std::size_t n_init = 10;
  std::size_t candidates = 2048;
  std::size_t refine_starts = 8;
  double rho = 0.05;
  GpOptions gp = [] {
    GpOptions g;
    g.min_noise = 1e-6;
    return g;
  }();
};

ParetoArchive mobo(const Problem& p, const MoboOptions& opts, std::uint64_t seed, const RunControl& ctl = {});

struct GaOptions {
  std::size_t pop = 10;
  std::size_t generations = 10;
  std::size_t budget = static_cast<std::size_t>(-1);  // evaluation cap
  double crossover_rate = 0.5;                         // per-gene swap probability
  std::optional<double> mutation_rate;                 // default 1 / n_genes
  std::size_t tournament = 3;
  std::size_t elites = 2;
};

struct GaResult {
  ParetoArchive archive;
  std::vector<double> best_fitness;                  // per generation
  std::vector<std::vector<ParamVector>> populations;  // per generation
};

/// Dims in chromosome order: sigma_min, sigma_max, T, w_h, w_w, PC, K,
/// cov_type (matched on the local name), then the rest in space order.
std::vector<std::size_t> chromosome_order(const ParamSpace& space);

/// Generations needed to spend `budget` evaluations.
std::size_t ga_generations_for_budget(std::size_t budget, const GaOptions& opts);

GaResult ga_optimize(const Problem& p, const GaOptions& opts, std::uint64_t seed, const RunControl& ctl = {});

struct MctsOptions {
  std::size_t budget = 60;  // distinct evaluations
  double c_ucb = 1.4142135623730951;
  int bins = 5;
};

/// Tree search over binned parameter values, one dim per level. Each
/// simulation completes its path with uniformly random bins and evaluates
/// the result (repeats reuse the cached value). Leaf value is the negated
/// equal-weight Chebyshev value of archive-normalized rewards, -1.1 when
/// infeasible.
ParetoArchive mcts_optimize(const Problem& p, const MctsOptions& opts, std::uint64_t seed,
                            const RunControl& ctl = {});

}  // namespace rflow::optimize
