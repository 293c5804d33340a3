#include <doctest.h>

#include <cmath>

#include "core/errors.hpp"
#include "core/regularizers.hpp"
#include "core/rng.hpp"
#include "support/oracles.hpp"
#include "unit/helpers.hpp"

using namespace monofbf;

namespace {

// Direct loop over pixels with wrap-around neighbours.
double tv_loop(const Image& x, double eps) {
  const std::size_t h = x.height(), w = x.width();
  double r = 0.0;
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double dh = x(i, (j + 1) % w) - x(i, j);
      const double dv = x((i + 1) % h, j) - x(i, j);
      r += std::sqrt(dh * dh + dv * dv + eps);
    }
  }
  return r;
}

}  // namespace

TEST_SUITE("regularizers") {
  TEST_CASE("constant images") {
    const TvConfig cfg{1e-3};
    const Image c(5, 7, 0.4);
    CHECK(tv_value(c, cfg) == doctest::Approx(35.0 * std::sqrt(1e-3)).epsilon(1e-14));
    CHECK(norm(tv_gradient(c, cfg).tensor()) == 0.0);
  }

  TEST_CASE("two by two by hand") {
    Image x(2, 2, 0.0);
    x(0, 0) = 1.0;
    // Pixel (0,0): dh = -1, dv = -1. (0,1): dh = 1. (1,0): dv = 1. (1,1): none.
    const double e = 1e-2;
    const double expected = std::sqrt(2.0 + e) + 2.0 * std::sqrt(1.0 + e) + std::sqrt(e);
    CHECK(tv_value(x, {e}) == doctest::Approx(expected).epsilon(1e-14));
  }

  TEST_CASE("matches a direct loop") {
    Rng rng(1);
    for (int t = 0; t < 5; ++t) {
      const Image x(rng.uniform_tensor({6 + t, 9 - t}, 0.0, 1.0));
      CHECK(tv_value(x, {1e-3}) == doctest::Approx(tv_loop(x, 1e-3)).epsilon(1e-13));
    }
  }

  TEST_CASE("circular shift invariance") {
    Rng rng(2);
    const Image x(rng.uniform_tensor({6, 8}, 0.0, 1.0));
    Image s(6, 8, 0.0);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 8; ++j) s((i + 2) % 6, (j + 5) % 8) = x(i, j);
    CHECK(tv_value(s) == doctest::Approx(tv_value(x)).epsilon(1e-13));
  }

  TEST_CASE("lower bound") {
    Rng rng(3);
    for (int t = 0; t < 10; ++t) {
      const Image x(rng.normal_tensor({5, 5}));
      CHECK(tv_value(x, {1e-3}) >= 25.0 * std::sqrt(1e-3));
    }
  }

  TEST_CASE("gradient sums to zero and matches finite differences") {
    Rng rng(4);
    const TvConfig cfg{1e-3};
    for (int t = 0; t < 5; ++t) {
      const Image x(rng.uniform_tensor({7, 7}, 0.0, 1.0));
      const Image g = tv_gradient(x, cfg);
      CHECK(std::abs(sum(g.tensor())) < 1e-12);
      const Tensor d = rng.normal_tensor({7, 7});
      const double fd = oracle::fd_scalar([&](double h) {
        Tensor p = x.tensor();
        p.axpy(h, d);
        return tv_value(Image(p), cfg);
      });
      CHECK(dot(g.tensor(), d) == doctest::Approx(fd).epsilon(1e-6));
    }
  }

  TEST_CASE("gradient map agrees with the gradient and is monotone") {
    Rng rng(5);
    const TvConfig cfg{1e-3};
    const TvGradientMap map(cfg);
    for (int t = 0; t < 5; ++t) {
      const Image x(rng.uniform_tensor({6, 6}, 0.0, 1.0));
      const Image z(rng.uniform_tensor({6, 6}, 0.0, 1.0));
      CHECK(testing::max_abs_diff(forward(map, x.tensor()), tv_gradient(x, cfg).tensor()) < 1e-14);
      const Eigen::MatrixXd J = oracle::dense_jacobian(map, x.tensor());
      CHECK((J - J.transpose()).norm() <= 1e-10 * J.norm());
      CHECK(oracle::sym_eigenvalues(J)(0) >= -1e-8);
      CHECK(dot(tv_gradient(x, cfg).tensor() - tv_gradient(z, cfg).tensor(), x.tensor() - z.tensor()) >= 0.0);
    }
    CHECK_THROWS_AS(forward(map, Tensor({3, 3, 3})), DimensionError);
    CHECK_THROWS_AS(tv_value(Image(3, 3, 0.0), {0.0}), ConfigError);
  }
}
