#include "rflow/optimize/mcts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "rflow/core/errors.hpp"
#include "rflow/learn/learn.hpp"

namespace rflow::optimize {

using workflow::Dim;
using workflow::DimKind;
using workflow::Kind;
using workflow::OperationSpec;
using workflow::ParamValue;
using workflow::ParamVector;

std::vector<int> SearchTree::path_to(int node) const {
  std::vector<int> path;
  for (int k = node; k > 0; k = nodes[k].parent) path.push_back(nodes[k].action);
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<int> SearchTree::best_path() const {
  std::vector<int> path;
  int k = 0;
  while (!nodes.empty() && !nodes[k].terminal) {
    int best = -1;
    for (std::size_t a = 0; a < nodes[k].children.size(); ++a) {
      const int c = nodes[k].children[a];
      if (c >= 0 && (best < 0 || nodes[c].n > nodes[nodes[k].children[best]].n)) best = static_cast<int>(a);
    }
    if (best < 0) break;
    path.push_back(best);
    k = nodes[k].children[best];
  }
  return path;
}

double ucb_score(double child_w, double child_n, double parent_n, double c_ucb) {
  return child_w / child_n + c_ucb * std::sqrt(std::log(parent_n) / child_n);
}

SearchTree mcts_run(const MctsCallbacks& cb, std::size_t simulations, double c_ucb, std::uint64_t seed) {
  if (simulations < 1) throw DomainError("mcts needs at least one simulation");
  if (!(c_ucb >= 0.0)) throw DomainError("c_ucb must be non-negative");
  SearchTree tree;
  auto make_node = [&](int parent, int action, const std::vector<int>& path) {
    MctsNode n;
    n.parent = parent;
    n.action = action;
    const std::size_t k = cb.num_actions(path);
    n.terminal = k == 0;
    n.children.assign(k, -1);
    tree.nodes.push_back(std::move(n));
    return static_cast<int>(tree.nodes.size()) - 1;
  };
  make_node(-1, -1, {});
  Rng rng = make_rng(seed, 0);

  for (std::size_t sim = 0; sim < simulations; ++sim) {
    if (cb.stop && cb.stop()) break;
    int node = 0;
    std::vector<int> path;
    bool fresh = false;
    while (!fresh && !tree.nodes[node].terminal) {
      const auto& kids = tree.nodes[node].children;
      int action = -1;
      for (std::size_t a = 0; a < kids.size(); ++a)
        if (kids[a] < 0) {
          action = static_cast<int>(a);
          break;
        }
      if (action < 0) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < kids.size(); ++a) {
          const MctsNode& c = tree.nodes[kids[a]];
          const double s = ucb_score(c.w, c.n, tree.nodes[node].n, c_ucb);
          if (s > best) {
            best = s;
            action = static_cast<int>(a);
          }
        }
      }
      if (cb.observer) cb.observer(tree, node, action);
      path.push_back(action);
      int child = tree.nodes[node].children[action];
      if (child < 0) {
        child = make_node(node, action, path);
        tree.nodes[node].children[action] = child;
        fresh = true;
      }
      node = child;
    }
    const double v = cb.value(path, tree.nodes[node].terminal, rng);
    if (!std::isfinite(v)) throw DomainError("mcts value must be finite");
    for (int k = node; k >= 0; k = tree.nodes[k].parent) {
      tree.nodes[k].n += 1.0;
      tree.nodes[k].w += v;
    }
  }
  return tree;
}

// ---------------------------------------------------------------------------

double pca_rollout(const workflow::WorkflowState& s, const workflow::ImageContext&) {
  if (!s.descriptors || s.descriptors->rows.rows() < 2 || s.descriptors->rows.cols() < 1) return 0.0;
  const auto& x = s.descriptors->rows;
  const auto nc = std::min<Eigen::Index>({3, x.rows(), x.cols()});
  const learn::PcaModel m = learn::pca_fit(x, static_cast<int>(nc));
  if (!(m.total_variance > 1e-12 * std::max(1.0, x.cwiseAbs().maxCoeff() * x.cwiseAbs().maxCoeff()))) return 0.0;
  return std::clamp(m.explained_variance[0] / m.total_variance, 0.0, 1.0);
}

double discounted_return(const std::vector<double>& rewards, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("gamma must lie in [0, 1]");
  // Neumaier-compensated sum
  double sum = 0.0, comp = 0.0, g = 1.0;
  for (double r : rewards) {
    const double term = g * r;
    const double t = sum + term;
    comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
    sum = t;
    g *= gamma;
  }
  return sum + comp;
}

std::vector<ParamValue> dim_bins(const Dim& d, int bins) {
  std::vector<ParamValue> out;
  switch (d.kind) {
    case DimKind::continuous:
      for (int k = 0; k < bins; ++k) out.emplace_back(d.lo + (k + 0.5) * (d.hi - d.lo) / bins);
      break;
    case DimKind::integer:
      if (d.cardinality() <= static_cast<std::size_t>(bins)) {
        for (std::size_t i = 0; i < d.cardinality(); ++i)
          out.emplace_back(static_cast<std::int64_t>(d.lo) + static_cast<std::int64_t>(i) * d.step);
      } else {
        for (int k = 0; k < bins; ++k) {
          const ParamValue v = workflow::snap_integer(d, d.lo + (k + 0.5) * (d.hi - d.lo) / bins);
          if (out.empty() || out.back() != v) out.push_back(v);
        }
      }
      break;
    case DimKind::categorical:
      for (const auto& s : d.values) out.emplace_back(s);
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Workflow-structure search

namespace {

std::string local_name(const std::string& name) {
  const auto dot = name.rfind('.');
  return dot == std::string::npos ? name : name.substr(dot + 1);
}

struct Decoded {
  std::vector<const OperationSpec*> ops;
  std::vector<std::vector<ParamValue>> values;  // per op, chosen so far
  bool stopped = false;
};

class StructureSearch {
 public:
  StructureSearch(const std::vector<OperationSpec>& catalog, std::shared_ptr<const workflow::ImageContext> ctx,
                  const RolloutFn& rollout, const MctsSearchOptions& opts, std::uint64_t seed)
      : ctx_(std::move(ctx)), rollout_(rollout), opts_(opts), seed_(seed) {
    for (const auto& op : catalog) ops_.push_back(&op);
    std::sort(ops_.begin(), ops_.end(), [](auto* a, auto* b) { return a->id < b->id; });
  }

  Kind kind_after(const Decoded& d) const { return d.ops.empty() ? Kind::image : d.ops.back()->output; }

  bool has_reward(Kind k) const {
    const auto it = opts_.registry.find(k);
    return it != opts_.registry.end() && !it->second.empty();
  }

  std::vector<const OperationSpec*> compatible(Kind k) const {
    std::vector<const OperationSpec*> out;
    for (auto* op : ops_)
      if (op->input == k) out.push_back(op);
    return out;
  }

  // Bins for the next parameter of the last op, with sigma_max filtered above sigma_min.
  std::vector<ParamValue> bins_for(const Decoded& d) const {
    const OperationSpec& op = *d.ops.back();
    const std::size_t j = d.values.back().size();
    const Dim& dim = op.params.dims[j];
    std::vector<ParamValue> bins = dim_bins(dim, opts_.bins);
    if (local_name(dim.name) == "sigma_max") {
      for (std::size_t i = 0; i < j; ++i)
        if (local_name(op.params.dims[i].name) == "sigma_min") {
          const double smin = std::get<double>(d.values.back()[i]);
          std::erase_if(bins, [&](const ParamValue& v) { return !(std::get<double>(v) > smin); });
        }
    }
    return bins;
  }

  bool op_open(const Decoded& d) const {
    return !d.ops.empty() && d.values.back().size() < d.ops.back()->params.dims.size();
  }

  Decoded decode(const std::vector<int>& path) const {
    Decoded d;
    for (int a : path) {
      if (op_open(d)) {
        d.values.back().push_back(bins_for(d)[a]);
        continue;
      }
      const auto ops = compatible(kind_after(d));
      if (a == static_cast<int>(ops.size())) {
        d.stopped = true;
        break;
      }
      d.ops.push_back(ops[a]);
      d.values.emplace_back();
    }
    return d;
  }

  // Actions: parameter bins while an op is open; otherwise compatible ops plus
  // a trailing stop action when the current kind is rewarded.
  std::size_t num_actions(const std::vector<int>& path) const {
    const Decoded d = decode(path);
    if (d.stopped) return 0;
    if (op_open(d)) return bins_for(d).size();
    const Kind k = kind_after(d);
    if (static_cast<int>(d.ops.size()) >= opts_.max_len) return 0;
    const bool can_stop = !d.ops.empty() && has_reward(k);
    return compatible(k).size() + (can_stop ? 1 : 0);
  }

  workflow::Pipeline pipeline_of(const Decoded& d, ParamVector& v) const {
    workflow::Pipeline p;
    for (std::size_t i = 0; i < d.ops.size(); ++i) {
      p.name += (i ? "+" : "") + d.ops[i]->id;
      OperationSpec op = *d.ops[i];
      op.prefix = std::to_string(i) + "_" + op.prefix;
      for (std::size_t j = 0; j < d.values[i].size(); ++j) v.set(op.prefix + "." + op.params.dims[j].name, d.values[i][j]);
      p.steps.push_back(std::move(op));
    }
    const auto it = opts_.registry.find(kind_after(d));
    if (it != opts_.registry.end()) p.rewards = it->second;
    return p;
  }

  // Fills the open op's remaining parameters with middle bins.
  Decoded completed(Decoded d) const {
    while (op_open(d)) {
      const auto bins = bins_for(d);
      if (bins.empty()) return Decoded{};
      d.values.back().push_back(bins[bins.size() / 2]);
    }
    return d;
  }

  double value(const std::vector<int>& path, bool terminal) {
    const Decoded d = decode(path);
    ParamVector v;
    if (!terminal) {
      const Decoded done = completed(d);
      if (done.ops.empty()) return -1.05;
      workflow::Pipeline p = pipeline_of(done, v);
      // A completed prefix that already carries rewards is scored by them.
      if (has_reward(kind_after(done))) return score(p, v);
      try {
        const auto state = state_of(p, v);
        return -1.05 * (1.0 - std::clamp(rollout_(*state, *ctx_), 0.0, 1.0));
      } catch (const DomainError&) {
        return -1.1;
      }
    }
    if (d.ops.empty() || op_open(d) || !has_reward(kind_after(d))) return -1.1;
    return score(pipeline_of(d, v), v);
  }

  double score(const workflow::Pipeline& p, const ParamVector& v) {
    const std::string key = p.name + "|" + workflow::format_params(v);
    auto it = terminal_cache_.find(key);
    if (it == terminal_cache_.end()) {
      Terminal t;
      try {
        const auto state = state_of(p, v);
        for (const auto& name : p.rewards) {
          try {
            const double r = workflow::reward_spec(name).fn(*state, *ctx_);
            if (std::isfinite(r)) t.rewards[name] = r;
          } catch (const DomainError&) {
          }
        }
        t.feasible = true;
      } catch (const DomainError&) {
        t.feasible = false;
      }
      ++result.terminal_evaluations;
      for (const auto& [name, r] : t.rewards) {
        auto& [lo, hi] = ranges_[name];
        if (!seen_[name]) {
          lo = hi = r;
          seen_[name] = true;
        }
        lo = std::min(lo, r);
        hi = std::max(hi, r);
      }
      it = terminal_cache_.emplace(key, std::move(t)).first;
    }
    const Terminal& t = it->second;
    if (!t.feasible) return -1.1;
    double sum = 0.0;
    for (const auto& name : p.rewards) {
      const auto r = t.rewards.find(name);
      if (r == t.rewards.end()) {
        sum += 1.0;
        continue;
      }
      const auto [lo, hi] = ranges_.at(name);
      sum += hi > lo ? (r->second - lo) / (hi - lo) : 0.0;
    }
    const double value = -sum / static_cast<double>(p.rewards.size());
    if (!result.best_pipeline || value > result.best_value) {
      result.best_pipeline = p;
      result.best_params = v;
      result.best_value = value;
      rewards::RewardVector rv;
      for (const auto& [name, r] : t.rewards) {
        rv.names.push_back(name);
        rv.values.push_back(r);
      }
      result.best_rewards = rv;
    }
    return value;
  }

  MctsSearchResult result;

 private:
  struct Terminal {
    bool feasible = false;
    std::map<std::string, double> rewards;
  };

  std::shared_ptr<const workflow::WorkflowState> state_of(const workflow::Pipeline& p, const ParamVector& v) {
    const std::string key = p.name + "|" + workflow::format_params(v);
    if (auto it = states_.find(key); it != states_.end()) {
      if (!it->second) throw DomainError("cached failure");
      return it->second;
    }
    try {
      auto s = std::make_shared<const workflow::WorkflowState>(workflow::run_steps(p, *ctx_, v, derive_seed(seed_, 1)));
      states_[key] = s;
      return s;
    } catch (const DomainError&) {
      states_[key] = nullptr;
      throw;
    }
  }

  std::vector<const OperationSpec*> ops_;
  std::shared_ptr<const workflow::ImageContext> ctx_;
  RolloutFn rollout_;
  MctsSearchOptions opts_;
  std::uint64_t seed_;
  std::map<std::string, std::shared_ptr<const workflow::WorkflowState>> states_;
  std::map<std::string, Terminal> terminal_cache_;
  std::map<std::string, std::pair<double, double>> ranges_;
  std::map<std::string, bool> seen_;
};

}  // namespace

MctsSearchResult mcts_search(const std::vector<OperationSpec>& catalog,
                             std::shared_ptr<const workflow::ImageContext> ctx, const RolloutFn& rollout,
                             const MctsSearchOptions& opts, std::uint64_t seed) {
  if (catalog.empty()) throw DomainError("mcts_search needs a non-empty catalog");
  if (opts.max_len < 1) throw DomainError("max_len must be >= 1");
  StructureSearch search(catalog, std::move(ctx), rollout, opts, seed);
  MctsCallbacks cb;
  cb.num_actions = [&](const std::vector<int>& path) { return search.num_actions(path); };
  cb.value = [&](const std::vector<int>& path, bool terminal, Rng&) { return search.value(path, terminal); };
  SearchTree tree = mcts_run(cb, opts.simulations, opts.c_ucb, seed);
  MctsSearchResult out = std::move(search.result);
  out.tree = std::move(tree);
  out.best_path = out.tree.best_path();
  out.best_path_terminal = search.num_actions(out.best_path) == 0;
  return out;
}

}  // namespace rflow::optimize
