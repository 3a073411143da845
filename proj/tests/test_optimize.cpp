#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>

#include "rflow/core/rng.hpp"
#include "rflow/imaging/synthetic.hpp"
#include "rflow/optimize/gp.hpp"
#include "rflow/optimize/mcts.hpp"
#include "rflow/optimize/optimizers.hpp"
#include "rflow/optimize/pareto.hpp"
#include "support.hpp"

using namespace rflow;
using namespace rflow::optimize;
using workflow::Dim;
using workflow::ParamSpace;
using workflow::ParamVector;

namespace {

// Inclusion-exclusion over all subsets: area of the union of boxes [p, ref].
double hv_oracle(const std::vector<Objectives>& pts, const Objectives& ref) {
  const std::size_t n = pts.size();
  double total = 0.0;
  for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
    double x = -1e300, y = -1e300;
    int bits = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) {
        x = std::max(x, pts[i][0]);
        y = std::max(y, pts[i][1]);
        ++bits;
      }
    const double area = std::max(0.0, ref[0] - x) * std::max(0.0, ref[1] - y);
    total += (bits % 2 ? 1.0 : -1.0) * area;
  }
  return total;
}

std::vector<Objectives> random_points(Rng& rng, std::size_t n, std::size_t m = 2) {
  std::vector<Objectives> pts(n, Objectives(m));
  for (auto& p : pts)
    for (double& v : p) v = std::floor(uniform01(rng) * 8.0) / 8.0;  // coarse grid forces ties
  return pts;
}

rewards::RewardVector two(double a, double b) { return {{"f1", "f2"}, {a, b}}; }

Problem analytic_problem() {
  Problem p;
  p.space.dims = {Dim::continuous("x", 0.0, 1.0)};
  p.objectives = {"f1", "f2"};
  p.evaluate = [](const ParamVector& v, std::uint64_t) {
    const double x = v.get_double("x");
    return two((x - 0.3) * (x - 0.3), (x - 0.7) * (x - 0.7));
  };
  return p;
}

Problem sphere_problem() {
  Problem p;
  p.space.dims = {Dim::continuous("a", -5, 5), Dim::continuous("b", -5, 5), Dim::continuous("c", -5, 5)};
  p.objectives = {"f1", "f2"};
  p.evaluate = [](const ParamVector& v, std::uint64_t) {
    double s = 0.0;
    for (const auto& n : v.names) s += v.get_double(n) * v.get_double(n);
    return two(s, s);
  };
  return p;
}

ParetoArchive archive_of(const std::vector<Objectives>& pts) {
  ParetoArchive a({"f1", "f2"});
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ParamVector v;
    v.set("i", std::int64_t(i));
    a.add(v, two(pts[i][0], pts[i][1]));
  }
  return a;
}

// Distance in objective space from y to the analytic front of analytic_problem.
double distance_to_front(const Objectives& y) {
  double best = 1e300;
  for (int i = 0; i <= 10000; ++i) {
    const double x = 0.3 + 0.4 * i / 10000.0;
    best = std::min(best, std::hypot(y[0] - (x - 0.3) * (x - 0.3), y[1] - (x - 0.7) * (x - 0.7)));
  }
  return best;
}

}  // namespace

TEST_SUITE("optimize") {
  TEST_CASE("dominance and front examples") {
    CHECK(dominates({1, 2}, {2, 2}));
    CHECK_FALSE(dominates({1, 2}, {1, 2}));
    CHECK_FALSE(dominates({1, 3}, {2, 2}));
    CHECK(pareto_front({{1, 3}, {2, 2}, {3, 1}, {3, 3}}) == std::vector<std::size_t>{0, 1, 2});
    CHECK(pareto_front({{1, 1}, {1, 1}, {0, 2}}) == std::vector<std::size_t>{0, 2});
    CHECK(pareto_front({}).empty());
    CHECK_THROWS_AS(pareto_front({{1, 2}, {1}}), DomainError);
  }

  TEST_CASE("front matches a quadratic oracle on random points") {
    Rng rng = make_rng(1, 0);
    for (int trial = 0; trial < 100; ++trial) {
      const auto pts = random_points(rng, 30, 2 + trial % 2);
      std::vector<std::size_t> expect;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        bool keep = true;
        for (std::size_t j = 0; j < pts.size(); ++j) {
          bool le = true, lt = false;
          for (std::size_t k = 0; k < pts[i].size(); ++k) {
            le = le && pts[j][k] <= pts[i][k];
            lt = lt || pts[j][k] < pts[i][k];
          }
          if ((le && lt) || (j < i && pts[j] == pts[i])) keep = false;
        }
        if (keep) expect.push_back(i);
      }
      CHECK(pareto_front(pts) == expect);
    }
  }

  TEST_CASE("incremental archive front equals recomputation") {
    Rng rng = make_rng(2, 0);
    const auto pts = random_points(rng, 60);
    ParetoArchive a({"f1", "f2"});
    for (std::size_t i = 0; i < pts.size(); ++i) {
      ParamVector v;
      v.set("i", std::int64_t(i));
      if (i % 7 == 3)
        a.add_infeasible(v, "bad");
      else
        a.add(v, two(pts[i][0], pts[i][1]));
      std::vector<std::size_t> pos;
      const auto obj = a.feasible_objectives(&pos);
      std::vector<std::size_t> expect;
      for (std::size_t k : pareto_front(obj)) expect.push_back(pos[k]);
      CHECK(a.front() == expect);
    }
    CHECK(a.feasible_count() + 9 == a.size());
    CHECK(a.prefix(20).size() == 20);
    CHECK_THROWS_AS(a.add(ParamVector{}, rewards::RewardVector{{"g1", "g2"}, {0, 0}}), DomainError);
  }

  TEST_CASE("hypervolume examples") {
    CHECK(hypervolume_2d({{0, 0}}, {1, 1}) == doctest::Approx(1.0));
    CHECK(hypervolume_2d({{0.5, 0}, {0, 0.5}}, {1, 1}) == doctest::Approx(0.75));
    CHECK(hypervolume_2d({}, {1, 1}) == 0.0);
    CHECK(hypervolume_2d({{0.5, 0.5}, {0.6, 0.6}}, {1, 1}) == doctest::Approx(0.25));
    CHECK_THROWS_AS(hypervolume_2d({{1, 0}}, {1, 1}), DomainError);
  }

  TEST_CASE("hypervolume matches inclusion-exclusion and is monotone") {
    Rng rng = make_rng(3, 0);
    for (int trial = 0; trial < 100; ++trial) {
      auto pts = random_points(rng, 9);
      const Objectives ref{1.0, 1.0};
      double prev = 0.0;
      std::vector<Objectives> grown;
      for (const auto& p : pts) {
        grown.push_back(p);
        const double hv = hypervolume_2d(grown, ref);
        CHECK(hv == doctest::Approx(hv_oracle(grown, ref)).epsilon(1e-12));
        CHECK(hv >= prev - 1e-15);
        prev = hv;
      }
    }
  }

  TEST_CASE("chebyshev scalarization") {
    CHECK(chebyshev({0.2, 0.6}, {0.5, 0.5}) == doctest::Approx(0.3 + 0.05 * 0.4));
    CHECK(chebyshev({1, 0}, {1, 0}, 0.0) == 1.0);
  }

  TEST_CASE("front point selection") {
    const auto a = archive_of({{0, 1}, {0.5, 0.5}, {1, 0}, {0.9, 0.9}});
    CHECK(select_front_point(a, {1, 0}) == 0);
    CHECK(select_front_point(a, {0, 1}) == 2);
    CHECK(select_front_point(a, {0.5, 0.5}) == 1);
    CHECK_THROWS_AS(select_front_point(a, {0.5, 0.6}), DomainError);
    CHECK_THROWS_AS(select_front_point(a, {1.5, -0.5}), DomainError);
    CHECK_THROWS_AS(select_front_point(ParetoArchive({"f1", "f2"}), {0.5, 0.5}), DomainError);
    CHECK(select_front_point(archive_of({{3, 4}}), {0.2, 0.8}) == 0);
    // Symmetric front: ties go to the lowest index.
    CHECK(select_front_point(archive_of({{1, 0}, {0, 1}}), {0.5, 0.5}) == 0);
  }

  TEST_CASE("front point selection is invariant to positive affine objective maps") {
    Rng rng = make_rng(4, 0);
    for (int trial = 0; trial < 50; ++trial) {
      auto pts = random_points(rng, 12);
      for (auto& p : pts) p[0] += 1e-3 * uniform01(rng), p[1] += 1e-3 * uniform01(rng);
      auto mapped = pts;
      for (auto& p : mapped) p = {3.0 * p[0] - 2.0, 0.5 * p[1] + 7.0};
      const double w = uniform01(rng);
      CHECK(select_front_point(archive_of(pts), {w, 1 - w}) == select_front_point(archive_of(mapped), {w, 1 - w}));
    }
  }

  TEST_CASE("TSV export lists every entry") {
    const auto a = archive_of({{0, 1}, {2, 2}});
    const auto tsv = archive_to_tsv(a);
    CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 3);
    CHECK(tsv.rfind("index\ti\tf1\tf2\tfeasible\n", 0) == 0);
    const auto front = archive_to_tsv(a, true);
    CHECK(std::count(front.begin(), front.end(), '\n') == 2);
  }

  TEST_CASE("GP interpolates noise-free data") {
    Eigen::MatrixXd x(8, 1);
    Eigen::VectorXd y(8);
    for (int i = 0; i < 8; ++i) {
      x(i, 0) = i / 7.0;
      y[i] = std::sin(6.0 * x(i, 0));
    }
    GpOptions o;
    o.fixed_noise = 1e-10;
    GaussianProcess gp;
    gp.fit(x, y, 1, o);
    for (int i = 0; i < 8; ++i) {
      double m, v;
      gp.predict(x.row(i), m, v);
      CHECK(m == doctest::Approx(y[i]).epsilon(1e-4));
      CHECK(v < 1e-4);
    }
    double m, v_mid, v_far;
    Eigen::RowVectorXd q(1);
    q << 0.5 / 7.0;
    gp.predict(q, m, v_mid);
    CHECK(std::abs(m - std::sin(6.0 * q[0])) < 0.05);
    q << 3.0;
    gp.predict(q, m, v_far);
    CHECK(v_far > v_mid);
    CHECK_THROWS_AS(gp.fit(Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), 1), DomainError);
  }

  TEST_CASE("expected improvement") {
    CHECK(expected_improvement(0.0, 0.0, 1.0) == doctest::Approx(1.0));
    CHECK(expected_improvement(2.0, 0.0, 1.0) == 0.0);
    // Closed form at mean == best: sd * pdf(0).
    CHECK(expected_improvement(1.0, 2.0, 1.0) == doctest::Approx(2.0 * normal_pdf(0.0)));
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  }

  TEST_CASE("MOBO approximates an analytic front") {
    MoboOptions o;
    o.budget = 30;
    o.n_init = 10;
    const auto a = mobo(analytic_problem(), o, 42);
    CHECK(a.size() == 30);
    std::vector<Objectives> truth;
    for (int i = 0; i <= 10000; ++i) {
      const double x = i / 10000.0;
      truth.push_back({(x - 0.3) * (x - 0.3), (x - 0.7) * (x - 0.7)});
    }
    std::vector<Objectives> true_front;
    for (std::size_t k : pareto_front(truth)) true_front.push_back(truth[k]);
    const Objectives ref{1.0, 1.0};
    const double hv_true = hypervolume_2d(true_front, ref);
    CHECK(std::abs(archive_hypervolume(a, ref) - hv_true) < 1e-2);
    for (std::size_t pos : a.front()) CHECK(distance_to_front(a.entries()[pos].rewards->values) < 1e-2);
  }

  TEST_CASE("MOBO with budget equal to the design size only samples the design") {
    MoboOptions o;
    o.budget = 8;
    o.n_init = 8;
    const auto a = mobo(analytic_problem(), o, 5);
    CHECK(a.size() == 8);
    // Latin hypercube: one point per stratum.
    std::vector<int> strata(8, 0);
    for (const auto& e : a.entries()) ++strata[std::min(7, static_cast<int>(e.params.get_double("x") * 8))];
    CHECK(strata == std::vector<int>(8, 1));
  }

  TEST_CASE("MOBO is deterministic and counts infeasible draws") {
    MoboOptions o;
    o.budget = 16;
    o.n_init = 6;
    Problem p = analytic_problem();
    auto base = p.evaluate;
    p.evaluate = [base](const ParamVector& v, std::uint64_t s) {
      if (v.get_double("x") > 0.9) throw DomainError("infeasible");
      return base(v, s);
    };
    const auto a = mobo(p, o, 11);
    const auto b = mobo(p, o, 11);
    REQUIRE(a.size() == b.size());
    CHECK(a.size() == 16);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.entries()[i].params == b.entries()[i].params);
    CHECK_THROWS_AS(mobo(p, MoboOptions{.budget = 3, .n_init = 3}, 1), DomainError);
  }

  TEST_CASE("evaluation seeds are per index") {
    std::map<std::size_t, std::uint64_t> seen;
    Problem p = analytic_problem();
    std::mutex mu;
    auto base = p.evaluate;
    std::vector<std::uint64_t> seeds;
    p.evaluate = [&](const ParamVector& v, std::uint64_t s) {
      std::lock_guard lock(mu);
      seeds.push_back(s);
      return base(v, s);
    };
    random_search(p, 10, 3, RunControl{.threads = 1});
    REQUIRE(seeds.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(seeds[i] == evaluation_seed(3, i));
  }

  TEST_CASE("random search is identical across thread counts") {
    const auto a = random_search(sphere_problem(), 24, 9, RunControl{.threads = 1});
    const auto b = random_search(sphere_problem(), 24, 9, RunControl{.threads = 4});
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.entries()[i].params == b.entries()[i].params);
      CHECK(*a.entries()[i].rewards == *b.entries()[i].rewards);
    }
  }

  TEST_CASE("non-domain failures abort with the offending parameters") {
    Problem p = analytic_problem();
    p.evaluate = [](const ParamVector&, std::uint64_t) -> rewards::RewardVector { throw std::runtime_error("boom"); };
    try {
      random_search(p, 4, 1);
      FAIL("expected EvaluationError");
    } catch (const EvaluationError& e) {
      CHECK(e.params().has("x"));
    }
  }

  TEST_CASE("GA improves a sphere tenfold and keeps its elite") {
    GaOptions o;
    o.pop = 20;
    o.generations = 30;
    const auto r = ga_optimize(sphere_problem(), o, 7);
    REQUIRE(r.best_fitness.size() == 30);
    CHECK(r.best_fitness.back() * 10.0 <= r.best_fitness.front());
    for (std::size_t g = 1; g < r.best_fitness.size(); ++g) CHECK(r.best_fitness[g] <= r.best_fitness[g - 1]);
  }

  TEST_CASE("GA with zero rates only copies chromosomes") {
    GaOptions o;
    o.pop = 8;
    o.generations = 4;
    o.crossover_rate = 0.0;
    o.mutation_rate = 0.0;
    const auto r = ga_optimize(sphere_problem(), o, 3);
    const auto& first = r.populations.front();
    for (const auto& gen : r.populations)
      for (const auto& c : gen) CHECK(std::find(first.begin(), first.end(), c) != first.end());
  }

  TEST_CASE("GA options are validated") {
    GaOptions o;
    o.pop = 7;
    CHECK_THROWS_AS(ga_optimize(sphere_problem(), o, 1), DomainError);
    o.pop = 2;
    CHECK_THROWS_AS(ga_optimize(sphere_problem(), o, 1), DomainError);
    o.pop = 10;
    CHECK(ga_generations_for_budget(10, o) == 1);
    CHECK(ga_generations_for_budget(18, o) == 2);
    CHECK(ga_generations_for_budget(19, o) == 3);
  }

  TEST_CASE("chromosome order follows the gene list") {
    const auto sp = workflow::walls_pipeline().joint_space();
    std::vector<std::string> names;
    for (std::size_t i : chromosome_order(sp)) names.push_back(sp.dims[i].name);
    CHECK(names == std::vector<std::string>{"blobs.sigma_min", "blobs.sigma_max", "blobs.T", "patches.w_h",
                                            "patches.w_w", "pca.PC", "gmm.K", "gmm.cov_type", "blobs.theta"});
  }

  TEST_CASE("GA decodes sigma pairs in order") {
    Problem p;
    p.space = workflow::log_star_pipeline().joint_space();
    p.objectives = {"f1", "f2"};
    p.evaluate = [&](const ParamVector& v, std::uint64_t) {
      p.space.check(v);
      return two(v.get_double("blobs.T"), v.get_double("blobs.theta"));
    };
    GaOptions o;
    o.pop = 10;
    o.generations = 10;
    o.mutation_rate = 1.0;
    const auto r = ga_optimize(p, o, 2);
    CHECK(r.archive.feasible_count() == r.archive.size());
  }

  TEST_CASE("grid points") {
    ParamSpace one;
    one.dims = {Dim::continuous("x", 0, 1)};
    const auto g = grid_points(one, 5);
    REQUIRE(g.size() == 5);
    CHECK(g.front().get_double("x") == 0.0);
    CHECK(g.back().get_double("x") == 1.0);
    ParamSpace mixed;
    mixed.dims = {Dim::integer("k", 2, 6), Dim::categorical("c", {"a", "b"})};
    CHECK(grid_points(mixed, 3).size() == 3 * 2);
    CHECK(grid_points(mixed, 5).size() == 5 * 2);
    ParamSpace sig;
    sig.dims = {Dim::continuous("sigma_min", 2, 3), Dim::continuous("sigma_max", 0.5, 1)};
    CHECK(grid_points(sig, 3).empty());
    CHECK(grid_search(Problem{sig, {"f1", "f2"}, analytic_problem().evaluate}, 3, 10, 1).size() == 0);
  }

  TEST_CASE("grid search respects the budget") {
    ParamSpace one;
    one.dims = {Dim::continuous("x", 0, 1)};
    const auto p = analytic_problem();
    CHECK(grid_search(p, 5, 100, 1).size() == 5);
    CHECK(grid_search(p, 50, 7, 1).size() == 7);
  }

  TEST_CASE("MCTS on a toy tree finds the best leaf") {
    // Two levels of three actions; leaf value depends on the path.
    const std::map<std::vector<int>, double> leaf{{{0, 0}, 0.1}, {{0, 1}, 0.2}, {{0, 2}, 0.0},
                                                  {{1, 0}, 0.3}, {{1, 1}, 0.9}, {{1, 2}, 0.4},
                                                  {{2, 0}, 0.2}, {{2, 1}, 0.1}, {{2, 2}, 0.3}};
    MctsCallbacks cb;
    cb.num_actions = [](const std::vector<int>& path) -> std::size_t { return path.size() < 2 ? 3 : 0; };
    cb.value = [&](const std::vector<int>& path, bool terminal, Rng&) {
      if (terminal) return leaf.at(path);
      double best = 0.0;
      for (int a = 0; a < 3; ++a) best += leaf.at({path[0], a}) / 3.0;
      return best;
    };
    const auto tree = mcts_run(cb, 200, 0.5, 1);
    CHECK(tree.best_path() == std::vector<int>{1, 1});
    CHECK(tree.nodes[0].n == 200.0);
  }

  TEST_CASE("MCTS with one simulation visits the root once") {
    MctsCallbacks cb;
    cb.num_actions = [](const std::vector<int>& p) -> std::size_t { return p.empty() ? 2 : 0; };
    cb.value = [](const std::vector<int>&, bool, Rng&) { return 0.5; };
    const auto tree = mcts_run(cb, 1, 1.0, 1);
    CHECK(tree.nodes[0].n == 1.0);
    CHECK(tree.nodes.size() == 2);
    CHECK_THROWS_AS(mcts_run(cb, 0, 1.0, 1), DomainError);
    CHECK_THROWS_AS(mcts_run(cb, 1, -1.0, 1), DomainError);
  }

  TEST_CASE("MCTS with c = 0 is greedy after expansion") {
    MctsCallbacks cb;
    const std::vector<double> vals{0.2, 0.7, 0.5};
    cb.num_actions = [](const std::vector<int>& p) -> std::size_t { return p.empty() ? 3 : 0; };
    cb.value = [&](const std::vector<int>& p, bool, Rng&) { return vals[p[0]]; };
    std::vector<int> chosen;
    cb.observer = [&](const SearchTree&, int, int a) { chosen.push_back(a); };
    mcts_run(cb, 10, 0.0, 1);
    CHECK(chosen == std::vector<int>{0, 1, 2, 1, 1, 1, 1, 1, 1, 1});
  }

  TEST_CASE("MCTS tries unvisited children before any UCB choice") {
    MctsCallbacks cb;
    cb.num_actions = [](const std::vector<int>& p) -> std::size_t { return p.size() < 3 ? 3 : 0; };
    Rng vrng = make_rng(1, 0);
    cb.value = [&](const std::vector<int>&, bool, Rng&) { return uniform01(vrng); };
    int violations = 0;
    cb.observer = [&](const SearchTree& t, int node, int action) {
      const auto& kids = t.nodes[node].children;
      for (int a = 0; a < static_cast<int>(kids.size()); ++a)
        if (kids[a] < 0) {
          violations += a != action;
          return;
        }
    };
    mcts_run(cb, 100, 1.4, 3);
    CHECK(violations == 0);
  }

  TEST_CASE("UCB score") {
    CHECK(ucb_score(2.0, 4.0, 16.0, 1.0) == doctest::Approx(0.5 + std::sqrt(std::log(16.0) / 4.0)));
  }

  TEST_CASE("discounted return") {
    CHECK(discounted_return({1, 1, 1}, 0.5) == doctest::Approx(1.75));
    CHECK(discounted_return({2, 3}, 1.0) == doctest::Approx(5.0));
    CHECK(discounted_return({4, 9}, 0.0) == doctest::Approx(4.0));
    CHECK(discounted_return({}, 0.9) == 0.0);
    CHECK_THROWS_AS(discounted_return({1}, 1.5), DomainError);
    std::vector<double> many(100000, 0.1);
    CHECK(discounted_return(many, 1.0) == doctest::Approx(10000.0).epsilon(1e-12));
  }

  TEST_CASE("PCA rollout") {
    workflow::WorkflowState s;
    const workflow::ImageContext ctx(imaging::Image(8, 8, 0.0f));
    CHECK(pca_rollout(s, ctx) == 0.0);
    features::DescriptorMatrix d;
    d.kept = {0, 1, 2, 3};
    d.rows = Eigen::MatrixXd::Ones(4, 6);
    s.descriptors = d;
    CHECK(pca_rollout(s, ctx) == 0.0);
    for (int i = 0; i < 4; ++i) s.descriptors->rows.row(i) *= (i + 1.0);
    CHECK(pca_rollout(s, ctx) >= 0.99);
  }

  TEST_CASE("PCA rollout prefers lattice patches over noise") {
    const auto scene = imaging::generate_lattice(testing_support::lattice(10, 10), 1);
    imaging::LoGParams lp;
    lp.sigma_min = 1.5;
    lp.sigma_max = 4.0;
    const auto k = imaging::detect_blobs(scene.image, lp);
    const auto spec = features::DescriptorSpec::rectangle(17, 17);
    workflow::WorkflowState lat, noise;
    lat.descriptors = features::extract_patches(scene.image, k, spec);
    noise.descriptors = features::extract_patches(imaging::gaussian_noise_field(160, 160, 1.0, 2), k, spec);
    const workflow::ImageContext ctx(scene.image);
    CHECK(pca_rollout(lat, ctx) > pca_rollout(noise, ctx));
  }

  TEST_CASE("dim bins") {
    CHECK(dim_bins(Dim::continuous("x", 0, 1), 5).size() == 5);
    CHECK(std::get<double>(dim_bins(Dim::continuous("x", 0, 1), 5)[0]) == doctest::Approx(0.1));
    CHECK(dim_bins(Dim::integer("k", 2, 6), 5).size() == 5);
    CHECK(dim_bins(Dim::integer("w", 17, 31, 2), 5).size() == 5);
    CHECK(dim_bins(Dim::categorical("c", {"a", "b", "c", "d"}), 2).size() == 4);
  }

  TEST_CASE("MCTS optimizer spends its budget on distinct points") {
    MctsOptions o;
    o.budget = 20;
    const auto a = mcts_optimize(sphere_problem(), o, 5);
    CHECK(a.size() == 20);
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < i; ++j) CHECK_FALSE(a.entries()[i].params == a.entries()[j].params);
  }

  TEST_CASE("run control stops and reports progress") {
    std::atomic<int> updates{0};
    std::atomic<int> evals{0};
    RunControl ctl;
    ctl.on_update = [&](const ParetoArchive&) { ++updates; };
    ctl.before_eval = [&] { ++evals; };
    ctl.stop = [&] { return updates.load() >= 3; };
    const auto a = random_search(sphere_problem(), 50, 1, ctl);
    CHECK(a.size() < 50);
    CHECK(updates.load() >= 3);
  }

  TEST_CASE("structure search completes workflows within a small budget") {
    const auto ctx = std::make_shared<workflow::ImageContext>(
        imaging::generate_lattice(testing_support::lattice(10, 10), 2).image);
    MctsSearchOptions o;
    o.simulations = 30;
    o.max_len = 3;
    const auto a = mcts_search(workflow::default_catalog(), ctx, pca_rollout, o, 6);
    REQUIRE(a.best_pipeline);
    CHECK(a.terminal_evaluations > 0);
    CHECK(a.best_value <= 0.0);
    CHECK(a.best_value >= -1.0);
    CHECK(a.best_pipeline->steps.size() <= 3);
    const auto b = mcts_search(workflow::default_catalog(), ctx, pca_rollout, o, 6);
    CHECK(b.best_params == a.best_params);
    CHECK(b.best_path == a.best_path);
    CHECK(b.terminal_evaluations == a.terminal_evaluations);
  }
}
