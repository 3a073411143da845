#include <doctest.h>

#include <functional>
#include <set>

#include "rflow/imaging/synthetic.hpp"
#include "rflow/workflow/workflow.hpp"
#include "support.hpp"

using namespace rflow;
using namespace rflow::workflow;
using testing_support::lattice;

namespace {

const std::string kTuned = "blobs.sigma_min=1.5,blobs.sigma_max=4,blobs.T=0.05,blobs.theta=0.5";

std::shared_ptr<ImageContext> clean_context() {
  static auto ctx = std::make_shared<ImageContext>(imaging::generate_lattice(lattice(20, 20), 7).image);
  return ctx;
}

std::shared_ptr<ImageContext> wall_context() {
  static auto ctx = [] {
    auto s = lattice(16, 16);
    s.domain_split = imaging::DomainSplit::straight;
    return std::make_shared<ImageContext>(imaging::generate_lattice(s, 3).image);
  }();
  return ctx;
}

// Reference count of reward-bearing sequences: every sequence of catalog ops
// up to max_len, checked for kind compatibility one by one.
std::size_t brute_force_count(const std::vector<OperationSpec>& cat, int max_len, const RewardRegistry& reg) {
  std::size_t n = 0;
  std::vector<std::size_t> seq;
  std::function<void()> rec = [&] {
    if (!seq.empty()) {
      Kind k = Kind::image;
      bool ok = true;
      for (std::size_t i : seq) {
        if (cat[i].input != k) ok = false;
        k = cat[i].output;
      }
      const auto it = reg.find(k);
      if (ok && it != reg.end() && !it->second.empty()) ++n;
    }
    if (static_cast<int>(seq.size()) == max_len) return;
    for (std::size_t i = 0; i < cat.size(); ++i) {
      seq.push_back(i);
      rec();
      seq.pop_back();
    }
  };
  rec();
  return n;
}

}  // namespace

TEST_SUITE("workflow") {
  TEST_CASE("parameter vectors") {
    ParamVector v;
    v.set("a.x", 1.5);
    v.set("a.k", std::int64_t{3});
    v.set("b.c", std::string("full"));
    CHECK(v.get_double("a.k") == 3.0);
    CHECK(v.get_int("a.k") == 3);
    CHECK(v.get_string("b.c") == "full");
    const auto s = v.slice("a");
    CHECK(s.names == std::vector<std::string>{"x", "k"});
    CHECK_FALSE(v.has("x"));
    CHECK(format_params(v) == "a.x=1.5,a.k=3,b.c=full");
  }

  TEST_CASE("built-in joint spaces") {
    const auto ls = log_star_pipeline().joint_space();
    REQUIRE(ls.size() == 4);
    CHECK(ls.dims[0].name == "blobs.sigma_min");
    CHECK(ls.dims[3].name == "blobs.theta");
    const auto am = amorphous_pipeline().joint_space();
    CHECK(am.dim("gmm.cov_type").cardinality() == 4);
    CHECK(am.index_of("gmm.K") == -1);
    CHECK(am.dim("patches.w_h").cardinality() == 8);
    const auto wa = walls_pipeline().joint_space();
    CHECK(wa.dim("gmm.K").cardinality() == 5);
    CHECK(wa.dim("pca.PC").cardinality() == 9);
    for (const auto& p : builtin_pipelines()) CHECK_NOTHROW(p.validate());
    CHECK_THROWS_AS(builtin_pipeline("nope"), ConfigError);
  }

  TEST_CASE("space checks reject out-of-domain values") {
    const auto sp = log_star_pipeline().joint_space();
    CHECK_NOTHROW(sp.check(sp.parse(kTuned)));
    CHECK_THROWS_AS(sp.parse("blobs.sigma_min=1.5"), ConfigError);
    CHECK_THROWS_AS(sp.check(sp.parse("blobs.sigma_min=3,blobs.sigma_max=2,blobs.T=0.1,blobs.theta=0.5")),
                    DomainError);
    CHECK_THROWS_AS(sp.check(sp.parse("blobs.sigma_min=1,blobs.sigma_max=2,blobs.T=0.9,blobs.theta=0.5")),
                    DomainError);
  }

  TEST_CASE("unit coordinates round trip") {
    const auto sp = walls_pipeline().joint_space();
    const ParamVector v = sp.parse(
        "blobs.sigma_min=1.5,blobs.sigma_max=4,blobs.T=0.05,blobs.theta=0.5,patches.w_h=21,patches.w_w=27,"
        "pca.PC=3,gmm.K=4,gmm.cov_type=diag");
    CHECK(sp.from_unit(sp.to_unit(v)) == v);
    for (const auto& d : sp.dims)
      if (d.kind == DimKind::integer)
        for (double x = d.lo - 3; x <= d.hi + 3; x += 0.37) {
          const auto s = snap_integer(d, x);
          CHECK(s >= d.lo);
          CHECK(s <= d.hi);
          CHECK((s - static_cast<std::int64_t>(d.lo)) % d.step == 0);
        }
  }

  TEST_CASE("hand-tuned detection on a clean lattice scores zero") {
    const auto ctx = clean_context();
    const auto p = log_star_pipeline();
    const auto ev = execute(p, *ctx, p.joint_space().parse(kTuned), 0);
    REQUIRE(ev.state.keypoints);
    CHECK(ev.state.keypoints->size() == 400);
    const double oracle = ctx->oracle().count;
    CHECK(ev.rewards.at("count_discrepancy") == doctest::Approx(std::abs(400.0 - oracle) / oracle));
    CHECK(ev.rewards.at("count_discrepancy") < 0.01);
    CHECK(ev.rewards.at("lattice_error") == 0.0);
  }

  TEST_CASE("execution is deterministic") {
    const auto ctx = wall_context();
    const auto p = walls_pipeline();
    const auto v = p.joint_space().parse(kTuned +
                                        ",patches.w_h=17,patches.w_w=17,pca.PC=3,gmm.K=2,gmm.cov_type=full");
    const auto a = execute(p, *ctx, v, 5);
    const auto b = execute(p, *ctx, v, 5);
    CHECK(a.rewards == b.rewards);
    CHECK(a.state == b.state);
  }

  TEST_CASE("invalid parameters fail before any step runs") {
    const auto ctx = clean_context();
    const auto p = log_star_pipeline();
    ParamVector v = p.joint_space().parse(kTuned);
    v.set("blobs.sigma_min", 4.0);
    CHECK_THROWS_AS(execute(p, *ctx, v, 0), DomainError);
  }

  TEST_CASE("walls pipeline yields a wall set near the domain boundary") {
    const auto ctx = wall_context();
    const auto p = walls_pipeline();
    const auto v = p.joint_space().parse(kTuned +
                                        ",patches.w_h=17,patches.w_w=17,pca.PC=3,gmm.K=2,gmm.cov_type=full");
    const auto ev = execute(p, *ctx, v, 1);
    REQUIRE(ev.state.walls);
    CHECK_FALSE(ev.state.walls->empty());
    CHECK(ev.rewards.at("straightness") <= 0.0);
    CHECK(ev.rewards.at("straightness") >= -1.0);
    CHECK(ev.rewards.at("wall_length") <= 0.0);
  }

  TEST_CASE("failing steps are named") {
    const auto ctx = clean_context();
    const auto p = amorphous_pipeline();
    // A threshold this high leaves too few keypoints for the count gate.
    const auto v = p.joint_space().parse(
        "blobs.sigma_min=1.5,blobs.sigma_max=4,blobs.T=0.5,blobs.theta=0.5,patches.w_h=17,patches.w_w=17,"
        "gmm.cov_type=full");
    try {
      execute(p, *ctx, v, 0);
      FAIL("expected a step error");
    } catch (const StepError& e) {
      CHECK(!e.step().empty());
    }
  }

  TEST_CASE("enumeration matches brute force") {
    const auto cat = default_catalog();
    const auto reg = default_reward_registry();
    for (int len = 1; len <= 5; ++len) {
      const auto w = enumerate_workflows(cat, len, reg);
      CHECK(w.size() == brute_force_count(cat, len, reg));
      std::set<std::string> names;
      for (const auto& p : w) {
        CHECK_NOTHROW(p.validate());
        CHECK(static_cast<int>(p.steps.size()) <= len);
        names.insert(p.name);
      }
      CHECK(names.size() == w.size());
      for (std::size_t i = 1; i < w.size(); ++i) {
        std::vector<std::string> a, b;
        for (const auto& s : w[i - 1].steps) a.push_back(s.id);
        for (const auto& s : w[i].steps) b.push_back(s.id);
        CHECK(a < b);
      }
    }
    CHECK(enumerate_workflows(cat, 1, reg).size() == 1);
    CHECK_THROWS_AS(enumerate_workflows(cat, 0, reg), DomainError);
  }

  TEST_CASE("replaying provenance is bit-identical") {
    const auto ctx = wall_context();
    const auto p = walls_pipeline();
    const auto v = p.joint_space().parse(kTuned +
                                        ",patches.w_h=19,patches.w_w=17,pca.PC=4,gmm.K=3,gmm.cov_type=diag");
    const auto s = run_steps(p, *ctx, v, 9);
    CHECK(replay(s.provenance, *ctx, 9) == s);
    std::uint64_t seed = 0;
    const auto log = provenance_from_text(provenance_to_text(s.provenance, 9), seed);
    CHECK(seed == 9);
    CHECK(log == s.provenance);
    CHECK(replay(log, *ctx, seed) == s);
  }

  TEST_CASE("pipeline text round trip") {
    for (const auto& p : builtin_pipelines()) CHECK(pipeline_from_text(pipeline_to_text(p)) == p);
  }

  TEST_CASE("context rejects images without a lattice") {
    ImageContext ctx(imaging::gaussian_noise_field(64, 64, 1.0, 1));
    CHECK_THROWS_AS(ctx.oracle(), DomainError);
    ctx.set_spacing(16.0);
    CHECK(ctx.spacing() == 16.0);
  }
}
