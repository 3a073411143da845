#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rflow/core/rng.hpp"
#include "rflow/imaging/synthetic.hpp"
#include "rflow/rewards/rewards.hpp"
#include "support.hpp"

using namespace rflow;
using namespace rflow::rewards;
using testing_support::lattice;

namespace {

std::vector<Point> grid_points(int rows, int cols, double a) {
  std::vector<Point> pts;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) pts.push_back({10.0 + i * a, 10.0 + j * a});
  return pts;
}

// Brute-force 4-NN sum.
double four_nn(const std::vector<Point>& pts, std::size_t q) {
  std::vector<double> d;
  for (std::size_t j = 0; j < pts.size(); ++j)
    if (j != q) d.push_back(std::hypot(pts[j].row - pts[q].row, pts[j].col - pts[q].col));
  std::sort(d.begin(), d.end());
  return d[0] + d[1] + d[2] + d[3];
}

Mask square(int w, int h, int r0, int c0, int side) {
  Mask m(w, h, 0);
  for (int y = r0; y < r0 + side; ++y)
    for (int x = c0; x < c0 + side; ++x) m(y, x) = 1;
  return m;
}

LabelMap split_vertical(int w, int h, int col) {
  LabelMap l(w, h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = col; x < w; ++x) l(y, x) = 1;
  return l;
}

}  // namespace

TEST_SUITE("rewards") {
  TEST_CASE("count discrepancy") {
    CHECK(count_discrepancy(400, 400) == 0.0);
    CHECK(count_discrepancy(380, 400) == doctest::Approx(0.05));
    CHECK(count_discrepancy(440, 400) == doctest::Approx(0.1));
    CHECK_THROWS_AS(count_discrepancy(3, 0), DomainError);
  }

  TEST_CASE("perfect lattice has zero lattice error") {
    CHECK(lattice_error(grid_points(10, 10, 16), 16) == 0.0);
  }

  TEST_CASE("a duplicated point flags its neighbours") {
    auto pts = grid_points(10, 10, 16);
    pts.push_back({pts[55].row + 1.0, pts[55].col});
    const auto f = lattice_flags(pts, 16);
    std::size_t expect = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const bool flag = four_nn(pts, i) < 0.95 * 4 * 16;
      CHECK(f.flagged[i] == flag);
      CHECK(f.neighbor_sums[i] == doctest::Approx(four_nn(pts, i)));
      expect += flag;
    }
    CHECK(expect > 0);
    CHECK(f.fraction == doctest::Approx(static_cast<double>(expect) / pts.size()));
  }

  TEST_CASE("sparse points are never flagged") {
    CHECK(lattice_error(grid_points(5, 5, 40), 16) == 0.0);
    CHECK_THROWS_AS(lattice_error(grid_points(2, 2, 16), 16), DomainError);
  }

  TEST_CASE("lattice error matches a brute-force oracle on random points") {
    Rng rng = make_rng(5, 0);
    std::vector<Point> pts(200);
    for (auto& p : pts) p = {uniform01(rng) * 200.0, uniform01(rng) * 300.0};
    const auto f = lattice_flags(pts, 16);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(f.neighbor_sums[i] == doctest::Approx(four_nn(pts, i)));
  }

  TEST_CASE("spacing estimate recovers the lattice period") {
    for (double a : {16.0, 8.0}) {
      auto s = lattice(256 / static_cast<int>(a), 256 / static_cast<int>(a), a);
      s.atom_sigma = a / 6.0 < 1.0 ? 1.0 : a / 6.0;
      const auto scene = imaging::generate_lattice(s, 1);
      CHECK(std::abs(estimate_lattice_spacing(scene.image) - a) / a < 0.02);
    }
  }

  TEST_CASE("white noise has no lattice") {
    const auto noise = imaging::gaussian_noise_field(128, 128, 1.0, 3);
    CHECK_THROWS_AS(estimate_lattice_spacing(noise), NoLatticeError);
  }

  TEST_CASE("count oracle of a full lattice is the site count") {
    const auto scene = imaging::generate_lattice(lattice(20, 20), 1);
    const auto o = physics_count_oracle(scene.image);
    CHECK(std::abs(o.count - 400.0) / 400.0 < 0.03);
  }

  TEST_CASE("count oracle of a partial lattice uses the occupied region") {
    auto s = lattice(10, 10);
    s.width = 320;
    s.height = 320;
    const auto scene = imaging::generate_lattice(s, 1);
    const auto o = physics_count_oracle(scene.image);
    CHECK(std::abs(o.count - 100.0) / 100.0 < 0.15);
  }

  TEST_CASE("squared distance transform matches brute force") {
    Mask m(23, 17, 0);
    m(3, 4) = 1;
    m(12, 19) = 1;
    m(8, 8) = 1;
    const auto d = squared_distance_transform(m);
    for (int y = 0; y < 17; ++y)
      for (int x = 0; x < 23; ++x) {
        double best = 1e300;
        for (int yy = 0; yy < 17; ++yy)
          for (int xx = 0; xx < 23; ++xx)
            if (m(yy, xx)) best = std::min(best, double((y - yy) * (y - yy) + (x - xx) * (x - xx)));
        CHECK(d(y, x) == best);
      }
    CHECK(std::isinf(squared_distance_transform(Mask(4, 4, 0))(0, 0)));
  }

  TEST_CASE("closing fills a gap narrower than the disk") {
    Mask m = square(40, 40, 10, 5, 10);
    for (int y = 10; y < 20; ++y)
      for (int x = 17; x < 35; ++x) m(y, x) = 1;
    for (int y = 10; y < 20; ++y) m(y, 15) = 0, m(y, 16) = 0;
    const Mask c = close_mask(m, 3.0);
    for (int y = 11; y < 19; ++y) CHECK(c(y, 15) == 1);
    CHECK(c(0, 0) == 0);
    CHECK(close_mask(m, 0.0) == m);
  }

  TEST_CASE("mask from clusters covers only the target label") {
    std::vector<Point> pts{{20, 20}, {60, 60}};
    learn::ClusterLabels l{{0, 1}};
    const Mask m = mask_from_clusters(pts, l, 0, 80, 80, 8.0);
    CHECK(m(20, 20) == 1);
    CHECK(m(60, 60) == 0);
    const double area = static_cast<double>(imaging::count_nonzero(m));
    CHECK(std::abs(area - std::numbers::pi * 36.0) / (std::numbers::pi * 36.0) < 0.15);
    CHECK(imaging::count_nonzero(mask_from_clusters(pts, l, 3, 80, 80, 8.0)) == 0);
    CHECK_THROWS_AS(mask_from_clusters(pts, learn::ClusterLabels{{0}}, 0, 80, 80, 8.0), DomainError);
  }

  TEST_CASE("perimeter counts exposed pixel edges") {
    CHECK(perimeter(square(20, 20, 5, 5, 4)) == 16.0);
    CHECK(perimeter(square(4, 4, 0, 0, 4)) == 16.0);
    Mask one(5, 5, 0);
    one(2, 2) = 1;
    CHECK(perimeter(one) == 4.0);
  }

  TEST_CASE("perimeter is translation invariant and additive over separated parts") {
    Rng rng = make_rng(2, 0);
    Mask blob(30, 30, 0);
    for (int y = 5; y < 15; ++y)
      for (int x = 5; x < 15; ++x) blob(y, x) = uniform01(rng) < 0.6;
    Mask moved(30, 30, 0);
    for (int y = 5; y < 15; ++y)
      for (int x = 5; x < 15; ++x) moved(y + 10, x + 12) = blob(y, x);
    CHECK(perimeter(blob) == perimeter(moved));
    Mask both = blob;
    for (std::size_t i = 0; i < both.size(); ++i) both.data()[i] |= moved.data()[i];
    CHECK(perimeter(both) == perimeter(blob) + perimeter(moved));
  }

  TEST_CASE("compactness") {
    CHECK(compactness(square(20, 20, 2, 2, 6)) == doctest::Approx(-std::numbers::pi / 4.0));
    Mask bar = square(40, 40, 0, 0, 0);
    for (int x = 0; x < 30; ++x) bar(5, x) = 1;
    CHECK(compactness(bar) == doctest::Approx(-4.0 * std::numbers::pi * 30.0 / (62.0 * 62.0)));
    CHECK(compactness(square(20, 20, 2, 2, 6)) < compactness(bar));
    CHECK_THROWS_AS(compactness(Mask(5, 5, 0)), DomainError);
  }

  TEST_CASE("vertical label split gives one straight wall") {
    const auto w = walls_from_label_map(split_vertical(40, 50, 20));
    REQUIRE(w.chains.size() == 1);
    CHECK(straightness(w) == doctest::Approx(-1.0));
    const auto& c = w.chains[0];
    CHECK_FALSE(c.closed);
    for (const auto& p : c.pixels) CHECK(std::abs(p.col - 19.5) <= 0.5);
    // Thinning may shorten each open end by a pixel.
    CHECK(c.arc_length() >= 47.0);
    CHECK(c.arc_length() <= 49.0);
    CHECK(wall_length(w, 40, 50) == doctest::Approx(-c.arc_length() / std::hypot(40.0, 50.0)));
  }

  TEST_CASE("a single label has no walls") {
    const auto w = walls_from_label_map(LabelMap(30, 30, 2));
    CHECK(w.empty());
    CHECK(straightness(w) == 0.0);
    CHECK(wall_length(w, 30, 30) == 0.0);
    CHECK(longest_chain(w) == -1);
    std::vector<Point> pts{{5, 5}, {10, 10}};
    CHECK(extract_walls(pts, learn::ClusterLabels{{0, 0}}, 30, 30, 8.0).empty());
  }

  TEST_CASE("unlabeled pixels do not form walls") {
    LabelMap l(30, 30, -1);
    for (int y = 0; y < 30; ++y)
      for (int x = 0; x < 10; ++x) l(y, x) = 0;
    CHECK(imaging::count_nonzero(wall_pixels(l)) == 0);
  }

  TEST_CASE("an L-shaped wall is less straight") {
    LabelMap l(60, 60, 0);
    for (int y = 0; y < 30; ++y)
      for (int x = 0; x < 30; ++x) l(y, x) = 1;
    const auto w = walls_from_label_map(l);
    REQUIRE(w.chains.size() == 1);
    const double s = straightness(w);
    CHECK(s > -0.8);
    CHECK(s < -0.6);
  }

  TEST_CASE("a closed wall has zero straightness") {
    LabelMap l(60, 60, 0);
    for (int y = 0; y < 60; ++y)
      for (int x = 0; x < 60; ++x)
        if ((y - 30) * (y - 30) + (x - 30) * (x - 30) <= 225) l(y, x) = 1;
    const auto w = walls_from_label_map(l);
    REQUIRE(w.chains.size() == 1);
    CHECK(w.chains[0].closed);
    CHECK(straightness(w) == 0.0);
    CHECK(w.chains[0].arc_length() == doctest::Approx(2.0 * std::numbers::pi * 15.0).epsilon(0.12));
  }

  TEST_CASE("four quadrants split into several chains at the junction") {
    LabelMap l(60, 60, 0);
    for (int y = 0; y < 60; ++y)
      for (int x = 0; x < 60; ++x) l(y, x) = (y >= 30) * 2 + (x >= 30);
    const auto w = walls_from_label_map(l);
    CHECK(w.chains.size() >= 3);
    double total = 0.0;
    for (const auto& c : w.chains) total += c.arc_length();
    CHECK(total >= 118.0 - 8.0);
    CHECK(total <= 118.0);
    CHECK(straightness(w) < -0.9);
  }

  TEST_CASE("rasterized labels follow the nearest keypoint") {
    std::vector<Point> pts{{10, 10}, {10, 30}};
    const auto l = rasterize_labels(pts, learn::ClusterLabels{{0, 1}}, 40, 20, 10.0);
    CHECK(l(10, 12) == 0);
    CHECK(l(10, 28) == 1);
    const auto w = extract_walls(pts, learn::ClusterLabels{{0, 1}}, 40, 20, 10.0);
    REQUIRE(w.chains.size() == 1);
    for (const auto& p : w.chains[0].pixels) CHECK(std::abs(p.col - 19.5) <= 0.5);
  }

  TEST_CASE("reward vector validation") {
    RewardVector r{{"a", "b"}, {1.0, 2.0}};
    CHECK_NOTHROW(r.validate());
    CHECK(r.at("b") == 2.0);
    r.values[0] = std::nan("");
    CHECK_THROWS_AS(r.validate(), DomainError);
    CHECK_THROWS_AS((RewardVector{{"a"}, {1.0, 2.0}}).validate(), DomainError);
  }
}
