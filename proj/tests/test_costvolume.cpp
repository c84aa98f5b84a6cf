#include <doctest.h>

#include "lfn/costvolume.hpp"
#include "lfn/gradcheck.hpp"
#include "oracles.hpp"

using namespace lfn;

TEST_SUITE("costvolume") {

TEST_CASE("channel-count law") {
  CHECK(CostVolumeSpec{3, 1, 1}.channels() == 49);
  CHECK(CostVolumeSpec{6, 2, 2}.channels() == 49);
  CHECK(CostVolumeSpec{4, 1, 1}.channels() == 81);
  CHECK(CostVolumeSpec{6, 3, 1}.channels() == 25);
  Graph g;
  Var c = correlation(g.constant(random_uniform({1, 8, 6, 6}, 1)),
                      g.constant(random_uniform({1, 8, 6, 6}, 2)), 3, 1);
  CHECK(c.shape() == Shape{1, 49, 6, 6});
}

TEST_CASE("self match at zero displacement is the mean square") {
  const Tensor f = random_uniform({1, 4, 5, 5}, 3);
  const Tensor c = kernels::correlation_grid(f, f, {1, 1, 1});
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      double s = 0.0;
      for (int ch = 0; ch < 4; ++ch) s += f.at(0, ch, y, x) * f.at(0, ch, y, x);
      CHECK(c.at(0, 4, y, x) == doctest::Approx(s / 4).epsilon(1e-14));
    }
  const Tensor unit({1, 4, 3, 3}, 1.0);
  const Tensor cu = kernels::correlation_grid(unit, unit, {1, 1, 1});
  CHECK(cu.at(0, 4, 1, 1) == 1.0);
}

TEST_CASE("orthogonal features give zero cost") {
  Tensor f1({1, 2, 4, 4});
  Tensor f2({1, 2, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) {
    f1.plane(0, 0)[i] = 1.0 + i;
    f2.plane(0, 1)[i] = 2.0 - i;
  }
  CHECK(max_abs(kernels::correlation_grid(f1, f2, {2, 1, 1})) == 0.0);
}

TEST_CASE("dense correlation matches the triple-loop oracle") {
  const Tensor f1 = random_uniform({2, 4, 5, 5}, 4);
  const Tensor f2 = random_uniform({2, 4, 5, 5}, 5);
  Graph g;
  CHECK(max_abs_diff(correlation(g.constant(f1), g.constant(f2), 1, 1).value(),
                     oracle::correlation(f1, f2, 1, 1)) < 1e-12);
  const Tensor g1 = random_uniform({1, 3, 9, 8}, 6);
  const Tensor g2 = random_uniform({1, 3, 9, 8}, 7);
  CHECK(max_abs_diff(correlation(g.constant(g1), g.constant(g2), 4, 2).value(),
                     oracle::correlation(g1, g2, 4, 2)) < 1e-12);
}

TEST_CASE("sparse correlation equals dense at grid points bit for bit") {
  const Tensor f1 = random_uniform({1, 5, 9, 8}, 8);
  const Tensor f2 = random_uniform({1, 5, 9, 8}, 9);
  Graph g;
  const Tensor dense = correlation(g.constant(f1), g.constant(f2), 6, 2).value();
  const Tensor sparse = sparse_correlation(g.constant(f1), g.constant(f2), 6, 2, 2).value();
  const Tensor oracle_dense = oracle::correlation(f1, f2, 6, 2);
  CHECK(sparse.shape() == dense.shape());
  for (int c = 0; c < dense.c(); ++c)
    for (int y = 0; y < 9; y += 2)
      for (int x = 0; x < 8; x += 2) {
        CHECK(sparse.at(0, c, y, x) == dense.at(0, c, y, x));
        CHECK(std::abs(sparse.at(0, c, y, x) - oracle_dense.at(0, c, y, x)) < 1e-12);
      }
}

TEST_CASE("stride one sparse volume is the dense volume") {
  const Tensor f1 = random_uniform({1, 3, 6, 6}, 10);
  const Tensor f2 = random_uniform({1, 3, 6, 6}, 11);
  Graph g;
  CHECK(max_abs_diff(sparse_correlation(g.constant(f1), g.constant(f2), 2, 1, 1).value(),
                     correlation(g.constant(f1), g.constant(f2), 2, 1).value()) == 0.0);
}

TEST_CASE("grid interpolation reconstructs linear fields exactly") {
  for (int stride : {2, 3}) {
    for (auto [h, w] : {std::pair{8, 8}, {9, 7}, {6, 10}}) {
      const int gh = (h - 1) / stride + 1;
      const int gw = (w - 1) / stride + 1;
      auto field = [](int y, int x) { return 0.3 + 1.7 * x - 0.6 * y; };
      Tensor grid({1, 2, gh, gw});
      for (int c = 0; c < 2; ++c)
        for (int i = 0; i < gh; ++i)
          for (int j = 0; j < gw; ++j) grid.at(0, c, i, j) = (c + 1) * field(i * stride, j * stride);
      const Tensor dense = kernels::grid_interpolate(grid, stride, h, w);
      for (int c = 0; c < 2; ++c)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            CHECK(dense.at(0, c, y, x) == doctest::Approx((c + 1) * field(y, x)).epsilon(1e-12));
    }
  }
}

TEST_CASE("grid interpolation adjoint") {
  const Tensor grid = random_uniform({1, 3, 4, 5}, 12);
  const Tensor dense = random_uniform({1, 3, 8, 9}, 13);
  const double lhs = dot(kernels::grid_interpolate(grid, 2, 8, 9), dense);
  const double rhs = dot(grid, kernels::grid_interpolate_adjoint(dense, 2, 4, 5));
  CHECK(std::abs(lhs - rhs) < 1e-10);
}

TEST_CASE("swapping inputs mirrors the displacement") {
  const Tensor f1 = random_uniform({1, 3, 7, 7}, 14);
  const Tensor f2 = random_uniform({1, 3, 7, 7}, 15);
  const int r = 2;
  const int bins = 2 * r + 1;
  const Tensor a = oracle::correlation(f1, f2, r, 1);
  const Tensor b = kernels::correlation_grid(f2, f1, {r, 1, 1});
  for (int i = 0; i < bins; ++i)
    for (int j = 0; j < bins; ++j)
      for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 7; ++x) {
          const int y2 = y + i - r;
          const int x2 = x + j - r;
          if (y2 < 0 || y2 >= 7 || x2 < 0 || x2 >= 7) continue;
          const int mirrored = (bins - 1 - i) * bins + (bins - 1 - j);
          CHECK(std::abs(a.at(0, i * bins + j, y, x) - b.at(0, mirrored, y2, x2)) < 1e-14);
        }
}

TEST_CASE("scaling the second features scales every cost") {
  const Tensor f1 = random_uniform({1, 4, 5, 6}, 16);
  const Tensor f2 = random_uniform({1, 4, 5, 6}, 17);
  const CostVolumeSpec spec{2, 1, 1};
  const Tensor base = kernels::correlation_grid(f1, f2, spec);
  const Tensor scaled = kernels::correlation_grid(f1, -2.5 * f2, spec);
  CHECK(max_abs_diff(scaled, -2.5 * base) < 1e-14);
}

TEST_CASE("gradients wrt both features") {
  GradCheckOptions opt;
  opt.projection_seed = 3;
  auto dense = finite_diff_check(
      [](Graph&, const std::vector<Var>& v) { return correlation(v[0], v[1], 2, 1); },
      {random_uniform({1, 3, 5, 5}, 18), random_uniform({1, 3, 5, 5}, 19)}, opt);
  INFO(dense.worst);
  CHECK(dense.max_rel_error < 1e-4);
  auto sparse = finite_diff_check(
      [](Graph&, const std::vector<Var>& v) { return sparse_correlation(v[0], v[1], 2, 2, 2); },
      {random_uniform({1, 3, 6, 7}, 20), random_uniform({1, 3, 6, 7}, 21)}, opt);
  INFO(sparse.worst);
  CHECK(sparse.max_rel_error < 1e-4);
}

TEST_CASE("invalid settings are rejected") {
  Graph g;
  Var a = g.constant(Tensor({1, 2, 4, 4}));
  Var b = g.constant(Tensor({1, 2, 4, 5}));
  CHECK_THROWS_AS(correlation(a, b, 1, 1), DimensionError);
  CHECK_THROWS_AS(correlation(a, a, 0, 1), DimensionError);
  CHECK_THROWS_AS(correlation(a, a, 3, 2), DimensionError);
  CHECK_THROWS_AS(sparse_correlation(a, a, 2, 1, 0), DimensionError);
}

}  // TEST_SUITE
