#include <doctest.h>

#include <cmath>
#include <fstream>

#include "core/errors.hpp"
#include "core/fbf.hpp"
#include "core/maps.hpp"
#include "core/rng.hpp"
#include "support/oracles.hpp"
#include "unit/helpers.hpp"

using namespace monofbf;

namespace {

const BoxConstraint kWide{-1e4, 1e4};

Operator linear_op(const Eigen::MatrixXd& M) {
  return [M](const Tensor& x) {
    const Eigen::VectorXd y = M * Eigen::Map<const Eigen::VectorXd>(x.raw(), static_cast<Eigen::Index>(x.size()));
    return Tensor(x.shape(), std::vector<double>(y.data(), y.data() + y.size()));
  };
}

Operator scaled(double s) {
  return [s](const Tensor& x) { return s * x; };
}

MonotoneInclusion affine_problem(Operator A, const Tensor& c, BoxConstraint box) {
  MonotoneInclusion p;
  p.A = std::move(A);
  p.grad_h = [neg = -1.0 * c](const Tensor&) { return neg; };
  p.box = box;
  return p;
}

}  // namespace

TEST_SUITE("fbf") {
  TEST_CASE("box projection") {
    const Tensor x({4}, std::vector<double>{-0.5, 0.3, 1.2, 1.0});
    const Tensor p = project_box(x, {});
    CHECK(p[0] == 0.0);
    CHECK(p[1] == 0.3);
    CHECK(p[2] == 1.0);
    CHECK(p[3] == 1.0);
    CHECK(testing::max_abs_diff(project_box(p, {}), p) == 0.0);
    CHECK(project_box(x, {-1.0, 0.0})[1] == 0.0);
    CHECK_THROWS_AS(validate(BoxConstraint{1.0, 1.0}), ConfigError);
  }

  TEST_CASE("step search on simple operators") {
    const Tensor x({3}, std::vector<double>{1.0, -2.0, 0.5});
    const ArmijoConfig cfg;
    const ArmijoStep zero = armijo_step(scaled(0.0), x, kWide, cfg);
    CHECK(zero.gamma == 1.0);
    CHECK(zero.trials == 0);

    ArmijoConfig half;
    half.sigma = 0.5;
    const ArmijoStep id = armijo_step(scaled(1.0), x, kWide, half);
    CHECK(id.gamma == 0.5);
    CHECK(id.trials == 0);

    // 10 gamma <= 0.9 first holds at gamma = 1/16.
    const ArmijoStep ten = armijo_step(scaled(10.0), x, kWide, cfg);
    CHECK(ten.gamma == 0.0625);
    CHECK(ten.trials == 4);
    CHECK(testing::max_abs_diff(ten.z, x - 0.625 * x) < 1e-15);
    CHECK(testing::max_abs_diff(ten.Bz, 10.0 * ten.z) < 1e-14);

    ArmijoConfig few;
    few.max_trials = 2;
    CHECK_THROWS_AS(armijo_step(scaled(10.0), x, kWide, few), StepSearchError);
    few.theta = 1.0;
    CHECK_THROWS_AS(validate(few), ConfigError);
  }

  TEST_CASE("identity inclusion converges to the target") {
    const Tensor c({5}, std::vector<double>{0.1, 0.9, 0.5, 0.3, 0.7});
    const FbfResult r = fbf_solve(affine_problem(scaled(1.0), c, {}), Tensor({5}, 0.0), {}, {200, 1e-10});
    CHECK(r.trace.converged);
    CHECK(r.trace.records.size() <= 200);
    CHECK(r.trace.records.back().residual <= 1e-10);
    CHECK(testing::max_abs_diff(r.x, c) < 1e-9);
  }

  TEST_CASE("solution outside the box lands on the corner") {
    const Tensor c({3}, std::vector<double>{1.5, 2.0, 3.0});
    const FbfResult r = fbf_solve(affine_problem(scaled(1.0), c, {}), Tensor({3}, 0.2), {}, {500, 1e-12});
    CHECK(testing::max_abs_diff(r.x, Tensor({3}, 1.0)) < 1e-12);
  }

  TEST_CASE("rotation-dominated monotone operator") {
    Eigen::MatrixXd M(2, 2);
    M << 1, 1, -1, 1;
    const Tensor c({2}, std::vector<double>{0.4, 0.2});
    const FbfResult r = fbf_solve(affine_problem(linear_op(M), c, kWide), Tensor({2}, 0.0), {}, {1000, 1e-13});
    const Eigen::Vector2d xs = M.colPivHouseholderQr().solve(Eigen::Vector2d(0.4, 0.2));
    CHECK(r.x[0] == doctest::Approx(xs(0)).epsilon(1e-9));
    CHECK(r.x[1] == doctest::Approx(xs(1)).epsilon(1e-9));
  }

  TEST_CASE("random monotone linear systems") {
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
      const int n = 12;
      std::vector<double> eig;
      for (int i = 0; i < n; ++i) eig.push_back(rng.uniform(0.2, 2.0));
      Eigen::MatrixXd G(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) G(i, j) = rng.normal();
      const Eigen::MatrixXd M = oracle::symmetric_with_spectrum(eig, rng) + 0.3 * (G - G.transpose());
      Eigen::VectorXd cv(n);
      for (int i = 0; i < n; ++i) cv(i) = rng.normal();
      const Eigen::VectorXd xs = M.fullPivLu().solve(cv);
      const Tensor c({static_cast<std::size_t>(n)}, std::vector<double>(cv.data(), cv.data() + n));
      const FbfResult r = fbf_solve(affine_problem(linear_op(M), c, kWide), Tensor({12}, 0.0), {}, {5000, 1e-13});
      double err = 0.0;
      for (int i = 0; i < n; ++i) err = std::max(err, std::abs(r.x[i] - xs(i)));
      CHECK(err <= 1e-6);
      for (const auto& rec : r.trace.records) {
        CHECK(rec.gamma > 0.0);
        CHECK(rec.trials >= 0);
      }
    }
  }

  TEST_CASE("iterates stay feasible") {
    Rng rng(4);
    const Tensor c = rng.normal_tensor({10});
    const FbfResult r = fbf_solve(affine_problem(scaled(2.0), c, {}), rng.normal_tensor({10}), {}, {50, 0.0});
    for (double v : r.x.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(r.trace.records.size() == 50);
  }

  TEST_CASE("a fixed point stops after one step") {
    const Tensor c({3}, 0.5);
    const FbfResult r = fbf_solve(affine_problem(scaled(1.0), c, {}), c, {}, {100, 1e-12});
    CHECK(r.trace.records.size() == 1);
    CHECK(r.trace.records[0].residual == 0.0);
    CHECK(r.trace.converged);
  }

  TEST_CASE("residual normalization") {
    const Tensor c({4}, 0.5);
    MonotoneInclusion p = affine_problem(scaled(1.0), c, {});
    CHECK(fbf_solve(p, Tensor({4}, 0.0), {}, {1, 0.0}).trace.normalization == 1.0);
    CHECK(fbf_solve(p, Tensor({4}, 1.0), {}, {1, 0.0}).trace.normalization == doctest::Approx(2.0));
    p.reference = Tensor({4}, 2.0);
    CHECK(fbf_solve(p, Tensor({4}, 0.0), {}, {1, 0.0}).trace.normalization == doctest::Approx(4.0));
  }

  TEST_CASE("operator inversion") {
    Rng rng(5);
    const Tensor xb = rng.uniform_tensor({6, 6}, 0.1, 0.9);
    const FbfResult id = invert_operator(AffineMap::identity({6, 6}), xb, {}, {}, {100, 1e-12});
    CHECK(testing::max_abs_diff(id.x, xb) < 1e-12);
    const FbfResult two = invert_operator(AffineMap::scaled_identity({6, 6}, 2.0), xb, {-1.0, 2.0}, {}, {500, 1e-12});
    CHECK(testing::max_abs_diff(two.x, xb) < 1e-10);
    CHECK(two.trace.normalization == doctest::Approx(2.0 * norm(xb)));
  }

  TEST_CASE("validation and failures") {
    const Tensor c({2}, 0.5);
    MonotoneInclusion p = affine_problem(scaled(1.0), c, {});
    CHECK_THROWS_AS(fbf_solve(p, c, {}, {0, 1e-6}), ConfigError);
    CHECK_THROWS_AS(fbf_solve(p, Tensor({2}, std::nan("")), {}, {10, 1e-6}), NumericalError);
    p.rho = 1.0;
    CHECK_THROWS_AS(fbf_solve(p, c, {}, {10, 1e-6}), ConfigError);
    p.rho = 0.0;
    p.A = nullptr;
    CHECK_THROWS_AS(fbf_solve(p, c, {}, {10, 1e-6}), ConfigError);
  }

  TEST_CASE("trace CSV layout") {
    const auto dir = testing::scratch("fbf_trace");
    const Tensor c({3}, 0.3);
    const FbfResult r = fbf_solve(affine_problem(scaled(3.0), c, {}), Tensor({3}, 0.0), {}, {20, 1e-10});
    write_trace_csv(dir / "t.csv", r.trace);
    std::ifstream in(dir / "t.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "k,gamma,trials,residual");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      if (rows == 0) CHECK(line.rfind("0,", 0) == 0);
      ++rows;
    }
    CHECK(rows == r.trace.records.size());
    CHECK_THROWS_AS(write_trace_csv(dir / "missing" / "t.csv", r.trace), IoError);
  }
}
