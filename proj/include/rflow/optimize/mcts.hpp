#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "rflow/core/rng.hpp"
#include "rflow/rewards/rewards.hpp"
#include "rflow/workflow/workflow.hpp"

namespace rflow::optimize {

struct MctsNode {
  int parent = -1;
  int action = -1;  // index among the parent's actions
  std::vector<int> children;  // node id per action, -1 until expanded
  bool terminal = false;
  double n = 0.0;  // visits
  double w = 0.0;  // value sum
};

struct SearchTree {
  std::vector<MctsNode> nodes;  // nodes[0] is the root

  /// Actions from the root following the most visited child (ties: lowest
  /// action) until an unexpanded or terminal node.
  std::vector<int> best_path() const;
  std::vector<int> path_to(int node) const;
};

struct MctsCallbacks {
  /// Number of actions available after `path`; 0 marks a terminal state.
  std::function<std::size_t(const std::vector<int>& path)> num_actions;
  /// Value of a newly reached node: the true value if terminal, otherwise a
  /// rollout estimate. Larger is better.
  std::function<double(const std::vector<int>& path, bool terminal, Rng& rng)> value;
  /// Sees every selection step: the parent node and the chosen action.
  std::function<void(const SearchTree& tree, int node, int action)> observer;
  /// Checked before each simulation.
  std::function<bool()> stop;
};

/// UCB1 tree search. Children of a node are expanded left to right, one per
/// simulation, before any of them is selected by UCB; ties go to the lowest
/// action.
SearchTree mcts_run(const MctsCallbacks& cb, std::size_t simulations, double c_ucb, std::uint64_t seed);

/// UCB1 score of a visited child.
double ucb_score(double child_w, double child_n, double parent_n, double c_ucb);

// ---------------------------------------------------------------------------
// Workflow-structure search

using RolloutFn = std::function<double(const workflow::WorkflowState&, const workflow::ImageContext&)>;

/// Explained-variance ratio of the first of 3 principal components of the
/// state's descriptors; 0 without descriptors or variance.
double pca_rollout(const workflow::WorkflowState& s, const workflow::ImageContext& ctx);

/// sum_k gamma^k r_k. Throws DomainError unless 0 <= gamma <= 1.
double discounted_return(const std::vector<double>& rewards, double gamma);

/// Continuous dims: `bins` bin centers; integer dims: every value when at
/// most `bins`, else `bins` snapped centers; categoricals: every value.
std::vector<workflow::ParamValue> dim_bins(const workflow::Dim& d, int bins = 5);

struct MctsSearchOptions {
  std::size_t simulations = 200;
  double c_ucb = 1.4142135623730951;
  int max_len = 5;
  int bins = 5;
  workflow::RewardRegistry registry = workflow::default_reward_registry();
};

struct MctsSearchResult {
  SearchTree tree;
  std::vector<int> best_path;
  bool best_path_terminal = false;
  /// Highest-valued terminal workflow evaluated during the search.
  std::optional<workflow::Pipeline> best_pipeline;
  workflow::ParamVector best_params;
  std::optional<rewards::RewardVector> best_rewards;
  double best_value = 0.0;
  std::size_t terminal_evaluations = 0;
};

/// Searches operation sequences and their binned parameters. Terminal value
/// is the negated equal-weight mean of rewards normalized by the ranges seen
/// so far; failed workflows score -1.1. A non-terminal leaf has its open op
/// completed with middle bins; if that output is rewarded it gets the terminal
/// value, otherwise -1.05 * (1 - rollout(state)).
MctsSearchResult mcts_search(const std::vector<workflow::OperationSpec>& catalog,
                             std::shared_ptr<const workflow::ImageContext> ctx, const RolloutFn& rollout,
                             const MctsSearchOptions& opts, std::uint64_t seed);

}  // namespace rflow::optimize
