// Acceptance checks. Prints one "criterion N: PASS|FAIL" line per criterion;
// exits nonzero when any fails. Arguments select a subset by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "rflow/app/app.hpp"
#include "rflow/core/errors.hpp"
#include "rflow/core/rng.hpp"
#include "rflow/imaging/synthetic.hpp"
#include "rflow/learn/learn.hpp"
#include "rflow/optimize/mcts.hpp"
#include "rflow/optimize/optimizers.hpp"
#include "rflow/optimize/pareto.hpp"
#include "rflow/rewards/rewards.hpp"
#include "rflow/workflow/workflow.hpp"

using namespace rflow;
using optimize::Objectives;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

constexpr std::uint64_t kSceneSeed = 7;
constexpr std::uint64_t kNoiseSeed = 11;
constexpr std::uint64_t kOptSeed = 42;

// 400 atoms, spacing 16, atom sigma 2.5 on a 512 x 512 frame.
imaging::LatticeSpec atom_scene_spec() {
  imaging::LatticeSpec s;
  s.rows = 20;
  s.cols = 20;
  s.spacing = 16.0;
  s.atom_sigma = 2.5;
  s.width = 512;
  s.height = 512;
  return s;
}

std::shared_ptr<workflow::ImageContext> atom_context(double noise) {
  static std::map<double, std::shared_ptr<workflow::ImageContext>> cache;
  auto& ctx = cache[noise];
  if (!ctx) {
    const auto scene = imaging::generate_lattice(atom_scene_spec(), kSceneSeed);
    ctx = std::make_shared<workflow::ImageContext>(imaging::add_gaussian_noise(scene.image, noise, kNoiseSeed));
  }
  return ctx;
}

std::size_t detected_count(const workflow::Pipeline& p, const workflow::ImageContext& ctx,
                           const workflow::ParamVector& v, std::uint64_t seed) {
  return workflow::execute(p, ctx, v, seed).state.keypoints->size();
}

double iou(const imaging::Mask& a, const imaging::Mask& b) {
  double inter = 0.0, uni = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.data()[i] != 0, y = b.data()[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni > 0.0 ? inter / uni : 0.0;
}

rewards::RewardVector two(double a, double b) { return {{"f1", "f2"}, {a, b}}; }

// --- 1 ----------------------------------------------------------------------

Outcome noise_robustness() {
  const auto p = workflow::log_star_pipeline();
  Outcome o{true, ""};
  for (const double noise : {0.0, 0.05, 0.10, 0.20}) {
    const auto ctx = atom_context(noise);
    const auto t0 = std::chrono::steady_clock::now();
    optimize::MoboOptions mo;
    mo.budget = 60;
    const auto a = optimize::mobo(optimize::pipeline_problem(p, ctx), mo, kOptSeed);
    const double secs = seconds_since(t0);
    double best = 1e9;
    std::size_t best_n = 0;
    for (const auto pos : a.front()) {
      const auto& e = a.entries()[pos];
      const auto n = detected_count(p, *ctx, e.params, optimize::evaluation_seed(kOptSeed, e.index));
      const double rel = std::abs(static_cast<double>(n) - 400.0) / 400.0;
      if (rel < best) {
        best = rel;
        best_n = n;
      }
    }
    const double tol = noise < 0.15 ? 0.02 : 0.05;
    const bool ok = best <= tol && secs <= 300.0;
    o.pass = o.pass && ok;
    o.detail += fmt("%snoise %.2f: n=%zu (%.2f%%, tol %.0f%%) %.1fs", o.detail.empty() ? "" : "; ", noise,
                    best_n, 100.0 * best, 100.0 * tol, secs);
  }
  return o;
}

// --- 2 ----------------------------------------------------------------------

// Lowest threshold on a 0.005 grid minimizing |n - 400|, other params hand-tuned.
double count_optimal_threshold(double noise, std::size_t& n_at) {
  const auto p = workflow::log_star_pipeline();
  const auto ctx = atom_context(noise);
  const auto space = p.joint_space();
  double best_t = -1.0, best_err = 1e18;
  for (int k = 1; k <= 100; ++k) {
    const double t = 0.005 * k;
    auto v = space.parse("blobs.sigma_min=1.5,blobs.sigma_max=4,blobs.T=0,blobs.theta=0.5");
    v.set("blobs.T", t);
    std::size_t n = 0;
    try {
      n = detected_count(p, *ctx, v, 0);
    } catch (const DomainError&) {
      continue;
    }
    const double err = std::abs(static_cast<double>(n) - 400.0);
    if (err < best_err) {
      best_err = err;
      best_t = t;
      n_at = n;
    }
  }
  return best_t;
}

Outcome threshold_shift() {
  std::size_t n0 = 0, n2 = 0;
  const double t0 = count_optimal_threshold(0.0, n0);
  const double t2 = count_optimal_threshold(0.20, n2);
  return {t2 > t0, fmt("T*(0)=%.3f (n=%zu), T*(0.20)=%.3f (n=%zu)", t0, n0, t2, n2)};
}

// --- 3 ----------------------------------------------------------------------

std::vector<std::size_t> brute_front(const std::vector<Objectives>& pts) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool keep = true;
    for (std::size_t j = 0; j < pts.size() && keep; ++j) {
      if (j == i) continue;
      bool le = true, lt = false;
      for (std::size_t d = 0; d < pts[i].size(); ++d) {
        le = le && pts[j][d] <= pts[i][d];
        lt = lt || pts[j][d] < pts[i][d];
      }
      if (le && lt) keep = false;
      if (j < i && pts[j] == pts[i]) keep = false;
    }
    if (keep) out.push_back(i);
  }
  return out;
}

Outcome pareto_oracle() {
  Rng rng = make_rng(3, 0);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 200);
    const std::size_t d = 2 + uniform_index(rng, 2);
    // Every third set draws from a coarse lattice so ties and duplicates occur.
    const bool coarse = trial % 3 == 0;
    std::vector<Objectives> pts(n, Objectives(d));
    for (auto& p : pts)
      for (auto& x : p) x = coarse ? static_cast<double>(uniform_index(rng, 6)) : uniform01(rng);
    if (optimize::pareto_front(pts) != brute_front(pts)) ++mismatches;
  }
  return {mismatches == 0, fmt("%d/1000 mismatches", mismatches)};
}

// --- 4 ----------------------------------------------------------------------

// Cells of a g x g grid over [0, ref] whose centers some point dominates.
double grid_hypervolume(const std::vector<Objectives>& pts, const Objectives& ref, int g) {
  const double hx = ref[0] / g, hy = ref[1] / g;
  std::size_t count = 0;
  for (int i = 0; i < g; ++i) {
    const double x = (i + 0.5) * hx;
    double ymin = std::numeric_limits<double>::infinity();
    for (const auto& p : pts)
      if (p[0] <= x) ymin = std::min(ymin, p[1]);
    if (!std::isfinite(ymin)) continue;
    const double first = std::ceil(ymin / hy - 0.5);
    count += static_cast<std::size_t>(std::max(0.0, g - std::max(0.0, first)));
  }
  return static_cast<double>(count) * hx * hy;
}

Outcome hypervolume_oracle() {
  Rng rng = make_rng(4, 0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 40);
    std::vector<Objectives> pts(n, Objectives(2));
    for (auto& p : pts) {
      p[0] = 0.9 * uniform01(rng);
      p[1] = 0.9 * uniform01(rng);
    }
    std::vector<Objectives> front;
    for (const auto i : optimize::pareto_front(pts)) front.push_back(pts[i]);
    const Objectives ref{1.0, 1.0};
    const double hv = optimize::hypervolume_2d(front, ref);
    const double grid = grid_hypervolume(front, ref, 2000);
    worst = std::max(worst, std::abs(hv - grid) / grid);
  }
  return {worst <= 1e-3, fmt("worst relative error %.2e", worst)};
}

// --- 5 ----------------------------------------------------------------------

Outcome em_monotonicity() {
  Rng rng = make_rng(5, 0);
  int traces = 0, violations = 0, errors = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<Eigen::Index>(50 + uniform_index(rng, 451));
    const auto dim = static_cast<Eigen::Index>(2 + uniform_index(rng, 19));
    const int k = 1 + static_cast<int>(uniform_index(rng, 5));
    const int true_k = 1 + static_cast<int>(uniform_index(rng, 5));
    learn::Matrix centers(true_k, dim);
    for (Eigen::Index c = 0; c < true_k; ++c)
      for (Eigen::Index j = 0; j < dim; ++j) centers(c, j) = 4.0 * normal01(rng);
    learn::Matrix x(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto c = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(true_k)));
      const double s = 0.5 + uniform01(rng);
      for (Eigen::Index j = 0; j < dim; ++j) x(i, j) = centers(c, j) + s * normal01(rng);
    }
    for (const auto& name : learn::covariance_type_names()) {
      try {
        const auto m = learn::gmm_fit(x, k, learn::parse_covariance_type(name), derive_seed(5, trial));
        ++traces;
        const auto& t = m.log_likelihood_trace;
        bool ok = true;
        for (std::size_t i = 1; i < t.size(); ++i) {
          worst = std::max(worst, t[i - 1] - t[i]);
          if (t[i] < t[i - 1] - 1e-9) ok = false;
        }
        if (!ok) ++violations;
      } catch (const DomainError&) {
        ++errors;
      }
    }
  }
  return {violations == 0 && errors == 0,
          fmt("%d traces, %d decreasing, %d failed fits, largest drop %.2e", traces, violations, errors, worst)};
}

// --- 6 ----------------------------------------------------------------------

Outcome mobo_vs_random() {
  const auto ctx = atom_context(0.10);
  const auto problem = optimize::pipeline_problem(workflow::log_star_pipeline(), ctx);
  const Objectives ref{1.0, 1.0};
  int wins = 0;
  std::string hv;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    optimize::MoboOptions mo;
    mo.budget = 40;
    const double m = optimize::archive_hypervolume(optimize::mobo(problem, mo, seed), ref);
    const double r = optimize::archive_hypervolume(optimize::random_search(problem, 40, seed), ref);
    wins += m >= r;
    hv += fmt("%s%.4f/%.4f", hv.empty() ? "" : " ", m, r);
  }
  return {wins >= 7, fmt("mobo >= random in %d/10 seeds (HV mobo/random: %s)", wins, hv.c_str())};
}

// --- 7 ----------------------------------------------------------------------

Outcome amorphous_region() {
  imaging::LatticeSpec s;
  s.rows = 20;
  s.cols = 20;
  s.amorphous_radius = 60.0;
  const auto scene = imaging::generate_lattice(s, kSceneSeed);
  const auto ctx =
      std::make_shared<workflow::ImageContext>(imaging::add_gaussian_noise(scene.image, 0.05, kNoiseSeed));
  const auto p = workflow::amorphous_pipeline();
  const auto t0 = std::chrono::steady_clock::now();
  optimize::MoboOptions mo;
  mo.budget = 80;
  const auto a = optimize::mobo(optimize::pipeline_problem(p, ctx), mo, kOptSeed);
  const double secs = seconds_since(t0);
  const auto& e = a.entries()[optimize::select_front_point(a, {0.5, 0.5})];
  const auto ev = workflow::execute(p, *ctx, e.params, optimize::evaluation_seed(kOptSeed, e.index));
  const double score = iou(*ev.state.region, *scene.amorphous_mask);
  return {score >= 0.5 && secs <= 600.0, fmt("IoU %.3f (need >= 0.5), %.1fs, selected #%zu", score, secs, e.index)};
}

// --- 8 ----------------------------------------------------------------------

Outcome domain_walls() {
  imaging::LatticeSpec s;
  s.rows = 20;
  s.cols = 20;
  s.domain_split = imaging::DomainSplit::straight;
  const auto straight = imaging::generate_lattice(s, kSceneSeed);
  s.domain_split = imaging::DomainSplit::sinusoidal;
  s.wall_amplitude = 8.0;
  s.wall_period = 64.0;
  const auto wavy = imaging::generate_lattice(s, kSceneSeed);
  const auto ctx =
      std::make_shared<workflow::ImageContext>(imaging::add_gaussian_noise(straight.image, 0.05, kNoiseSeed));
  const auto ctx_wavy =
      std::make_shared<workflow::ImageContext>(imaging::add_gaussian_noise(wavy.image, 0.05, kNoiseSeed));
  const auto p = workflow::walls_pipeline();
  optimize::MoboOptions mo;
  mo.budget = 60;
  const auto a = optimize::mobo(optimize::pipeline_problem(p, ctx), mo, kOptSeed);
  const auto& e = a.entries()[optimize::select_front_point(a, {0.5, 0.5})];
  const auto seed = optimize::evaluation_seed(kOptSeed, e.index);
  const auto ev = workflow::execute(p, *ctx, e.params, seed);
  const auto& walls = *ev.state.walls;
  const int li = rewards::longest_chain(walls);
  if (li < 0) return {false, "selected point has no wall"};
  double md = 0.0;
  for (const auto& px : walls.chains[li].pixels) md += std::abs(px.col - *straight.wall_col);
  md /= static_cast<double>(walls.chains[li].pixels.size());
  double wavy_straightness = std::numeric_limits<double>::quiet_NaN();
  try {
    wavy_straightness = workflow::execute(p, *ctx_wavy, e.params, seed).rewards.at("straightness");
  } catch (const DomainError& err) {
    return {false, std::string("sinusoidal scene failed: ") + err.what()};
  }
  const double st = ev.rewards.at("straightness");
  return {md <= 3.0 && st < wavy_straightness,
          fmt("mean distance %.2f px (need <= 3), straightness %.4f vs sinusoidal %.4f", md, st, wavy_straightness)};
}

// --- 9 ----------------------------------------------------------------------

Outcome discounted_closed_form() {
  double worst = 0.0;
  for (const double r : {1.0, -0.37, 2.5})
    for (const double g : {0.0, 0.5, 0.9, 0.99})
      for (const int n : {1, 10, 1000}) {
        const double closed = r * (1.0 - std::pow(g, n)) / (1.0 - g);
        worst = std::max(worst, std::abs(optimize::discounted_return(std::vector<double>(n, r), g) - closed));
      }
  return {worst <= 1e-12, fmt("largest deviation %.2e", worst)};
}

// --- 10 ---------------------------------------------------------------------

Outcome toy_tree_search() {
  // Depth 3, branching 2. Subtree 0 has the better mean, subtree 1 the best leaf.
  const double leaf[8] = {0.6, 0.6, 0.6, 0.6, 0.1, 0.2, 0.3, 1.0};
  auto leaf_index = [](const std::vector<int>& path) { return path[0] * 4 + path[1] * 2 + path[2]; };
  int correct = 0;
  std::size_t violations = 0, selections = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    optimize::MctsCallbacks cb;
    cb.num_actions = [](const std::vector<int>& path) -> std::size_t { return path.size() < 3 ? 2 : 0; };
    cb.value = [&](const std::vector<int>& path, bool, Rng& rng) {
      std::vector<int> full = path;
      while (full.size() < 3) full.push_back(static_cast<int>(uniform_index(rng, 2)));
      return leaf[leaf_index(full)] + 0.1 * normal01(rng);
    };
    cb.observer = [&](const optimize::SearchTree& t, int node, int action) {
      ++selections;
      const auto& kids = t.nodes[node].children;
      const bool unvisited_sibling = std::any_of(kids.begin(), kids.end(), [](int c) { return c < 0; });
      if (unvisited_sibling && kids[action] >= 0) ++violations;
    };
    const auto tree = optimize::mcts_run(cb, 1000, 1.4142135623730951, seed);
    const auto best = tree.best_path();
    correct += !best.empty() && best[0] == 1;
  }
  return {correct >= 95 && violations == 0,
          fmt("optimal root action in %d/100 runs; %zu of %zu selections broke unvisited-first", correct, violations,
              selections)};
}

// --- 11 ---------------------------------------------------------------------

Outcome determinism_and_prefix() {
  imaging::LatticeSpec s;
  s.rows = 12;
  s.cols = 12;
  const auto scene = imaging::generate_lattice(s, kSceneSeed);
  const auto ctx =
      std::make_shared<workflow::ImageContext>(imaging::add_gaussian_noise(scene.image, 0.10, kNoiseSeed));
  const auto problem = optimize::pipeline_problem(workflow::log_star_pipeline(), ctx);
  std::vector<std::string> bad;
  for (const auto& name : app::optimizer_names()) {
    app::RunConfig c;
    c.optimizer = name;
    c.seed = 9;
    c.budget = 80;
    const auto a = app::run_optimizer(c, problem);
    const auto b = app::run_optimizer(c, problem);
    c.budget = 40;
    const auto short_run = app::run_optimizer(c, problem);
    const bool same = optimize::archive_to_tsv(a) == optimize::archive_to_tsv(b);
    const bool prefix = a.size() >= 40 && optimize::archive_to_tsv(a.prefix(40)) == optimize::archive_to_tsv(short_run);
    if (!same) bad.push_back(name + " not reproducible");
    if (!prefix) bad.push_back(name + " budget-40 run is not a prefix");
  }
  std::string detail = fmt("%zu optimizers", app::optimizer_names().size());
  for (const auto& b : bad) detail += "; " + b;
  return {bad.empty(), detail};
}

// --- 12 ---------------------------------------------------------------------

Outcome front_selection() {
  Rng rng = make_rng(12, 0);
  int failures = 0, archives = 0;
  auto check = [&](const optimize::ParetoArchive& a) {
    ++archives;
    std::size_t min0 = a.front()[0], min1 = a.front()[0];
    for (const auto pos : a.front()) {
      if (a.entries()[pos].rewards->values[0] < a.entries()[min0].rewards->values[0]) min0 = pos;
      if (a.entries()[pos].rewards->values[1] < a.entries()[min1].rewards->values[1]) min1 = pos;
    }
    bool ok = optimize::select_front_point(a, {1.0, 0.0}) == min0 &&
              optimize::select_front_point(a, {0.0, 1.0}) == min1;
    const double s0 = 0.1 + 10.0 * uniform01(rng), s1 = 0.1 + 10.0 * uniform01(rng);
    const double b0 = 5.0 * normal01(rng), b1 = 5.0 * normal01(rng);
    optimize::ParetoArchive scaled(a.objective_names());
    for (const auto& e : a.entries()) {
      if (!e.feasible()) {
        scaled.add_infeasible(e.params, e.error);
        continue;
      }
      auto r = *e.rewards;
      r.values[0] = s0 * r.values[0] + b0;
      r.values[1] = s1 * r.values[1] + b1;
      scaled.add(e.params, r);
    }
    for (const auto& w : std::vector<std::vector<double>>{{1, 0}, {0, 1}, {0.5, 0.5}, {0.3, 0.7}, {0.8, 0.2}})
      ok = ok && optimize::select_front_point(a, w) == optimize::select_front_point(scaled, w);
    failures += !ok;
  };

  optimize::MoboOptions mo;
  mo.budget = 40;
  check(optimize::mobo(optimize::pipeline_problem(workflow::log_star_pipeline(), atom_context(0.10)), mo,
                       kOptSeed));
  for (int trial = 0; trial < 200; ++trial) {
    optimize::ParetoArchive a({"f1", "f2"});
    const std::size_t n = 1 + uniform_index(rng, 60);
    for (std::size_t i = 0; i < n; ++i) a.add({}, two(uniform01(rng), uniform01(rng)));
    check(a);
  }
  return {failures == 0, fmt("%d/%d archives failed", failures, archives)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, noise_robustness},    {2, threshold_shift},     {3, pareto_oracle},
      {4, hypervolume_oracle},  {5, em_monotonicity},     {6, mobo_vs_random},
      {7, amorphous_region},    {8, domain_walls},        {9, discounted_closed_form},
      {10, toy_tree_search},    {11, determinism_and_prefix}, {12, front_selection},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d: %s  %s  [%.1fs]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
