#include <doctest.h>

#include <cmath>

#include "core/errors.hpp"
#include "core/maps.hpp"
#include "core/rng.hpp"
#include "core/spectral.hpp"
#include "support/oracles.hpp"
#include "unit/helpers.hpp"

using namespace monofbf;

namespace {

std::shared_ptr<AffineMap> from_eigen(const Eigen::MatrixXd& m) { return AffineMap::linear(oracle::from_matrix(m)); }

ProbeConfig probe(std::size_t n_iter, std::uint64_t seed = 1) {
  ProbeConfig c;
  c.n_iter = n_iter;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_SUITE("spectral") {
  TEST_CASE("power iteration finds the dominant magnitude") {
    Eigen::MatrixXd D = Eigen::Vector2d(3.0, 1.0).asDiagonal();
    auto map = from_eigen(D);
    const PowerResult r = power_max_abs_eig([&](const Tensor& v) { return forward(*map, v); }, {2}, probe(100));
    CHECK(r.value == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(std::abs(r.vector[0]) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(norm(r.vector) == doctest::Approx(1.0));

    const Tensor neg({2, 2}, std::vector<double>{-4, 0, 0, 1});
    auto m2 = AffineMap::linear(neg);
    CHECK(power_max_abs_eig([&](const Tensor& v) { return forward(*m2, v); }, {2}, probe(100)).value ==
          doctest::Approx(-4.0).epsilon(1e-8));
  }

  TEST_CASE("multiples of the identity") {
    for (double c : {0.25, 1.0, 7.0, -3.0}) {
      const SpectralEstimate e = lambda_min_sym_jacobian(*AffineMap::scaled_identity({5}, c), Tensor({5}), probe(10));
      CHECK(e.lambda_min == doctest::Approx(c).epsilon(1e-10));
    }
  }

  TEST_CASE("diagonal operators") {
    const Tensor d25({2, 2}, std::vector<double>{2, 0, 0, 5});
    CHECK(lambda_min_sym_jacobian(*AffineMap::linear(d25), Tensor({2}), probe(200)).lambda_min ==
          doctest::Approx(2.0).epsilon(1e-8));
    const Tensor d31({2, 2}, std::vector<double>{3, 0, 0, 1});
    CHECK(lambda_min_sym_jacobian(*AffineMap::linear(d31), Tensor({2}), probe(200)).lambda_min ==
          doctest::Approx(1.0).epsilon(1e-8));
  }

  TEST_CASE("random symmetric matrices against the dense eigensolver") {
    Rng rng(2);
    for (int trial = 0; trial < 5; ++trial) {
      // Well separated spectrum so 300 steps converge tightly.
      const std::vector<double> eig{-2.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 6.0};
      auto map = from_eigen(oracle::symmetric_with_spectrum(eig, rng));
      const SpectralEstimate e = lambda_min_sym_jacobian(*map, Tensor({8}), probe(300, 10 + trial));
      CHECK(e.lambda_min == doctest::Approx(-2.0).epsilon(1e-6));
      CHECK(e.rho_hat >= std::abs(e.quotient));
      CHECK(e.lambda_min == doctest::Approx(e.rho_hat - e.chi_hat));
    }
  }

  TEST_CASE("antisymmetric part is ignored") {
    Rng rng(3);
    const Eigen::MatrixXd S = oracle::symmetric_with_spectrum({1.0, 2.0, 4.0, 8.0}, rng);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(4, 4);
    A(0, 1) = 5.0;
    A(1, 0) = -5.0;
    A(2, 3) = -2.0;
    A(3, 2) = 2.0;
    const SpectralEstimate e = lambda_min_sym_jacobian(*from_eigen(S + A), Tensor({4}), probe(400));
    CHECK(e.lambda_min == doctest::Approx(1.0).epsilon(1e-6));
  }

  TEST_CASE("shifting the map shifts the estimate") {
    Rng rng(4);
    const Eigen::MatrixXd S = oracle::symmetric_with_spectrum({-1.0, 0.3, 1.0, 2.0, 4.0}, rng);
    const double a = lambda_min_sym_jacobian(*from_eigen(S), Tensor({5}), probe(300)).lambda_min;
    const Eigen::MatrixXd shifted = S + 1.5 * Eigen::MatrixXd::Identity(5, 5);
    const double b = lambda_min_sym_jacobian(*from_eigen(shifted), Tensor({5}), probe(300)).lambda_min;
    CHECK(b - a == doctest::Approx(1.5).epsilon(1e-6));
  }

  TEST_CASE("nonlinear maps against the dense Jacobian") {
    Rng rng(5);
    for (int trial = 0; trial < 3; ++trial) {
      auto net = std::make_shared<ResidualConvNet>(ConvNetConfig{});
      net->initialize(50 + trial);
      const Tensor x = rng.uniform_tensor({6, 6}, 0.0, 1.0);
      const Eigen::VectorXd ev = oracle::sym_eigenvalues(oracle::dense_jacobian(*net, x));
      const double radius = std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
      const SpectralEstimate e = lambda_min_sym_jacobian(*net, x, probe(2000, trial));
      CHECK(e.lambda_min >= ev(0) - 1e-9 * radius);
      CHECK(std::abs(e.lambda_min - ev(0)) <= 2e-2 * radius);
      CHECK(e.witness.shape() == x.shape());
    }
  }

  TEST_CASE("constant map has a zero Jacobian") {
    auto c = AffineMap::scaled_identity({4}, 0.0, Tensor({4}, 0.3));
    const SpectralEstimate e = lambda_min_sym_jacobian(*c, Tensor({4}), probe(20));
    CHECK(e.lambda_min == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(e.quotient == 0.0);
    CHECK(e.rho_hat == doctest::Approx(1e-3));
    Rng rng(6);
    CHECK_THROWS_AS(power_max_abs_eig([](const Tensor& v) { return Tensor(v.shape(), 0.0); }, {4}, 10, rng),
                    ZeroIterateError);
  }

  TEST_CASE("same seed gives the same estimate") {
    auto net = std::make_shared<ResidualConvNet>(ConvNetConfig{});
    net->initialize(7);
    const Tensor x(Shape{6, 6}, 0.5);
    const SpectralEstimate a = lambda_min_sym_jacobian(*net, x, probe(30, 9));
    const SpectralEstimate b = lambda_min_sym_jacobian(*net, x, probe(30, 9));
    CHECK(a.lambda_min == b.lambda_min);
    CHECK(testing::max_abs_diff(a.witness, b.witness) == 0.0);
  }

  TEST_CASE("certificates for simple operators") {
    const std::vector<Tensor> probes{Tensor({3}, 0.1), Tensor({3}, 0.7)};
    const CertificateReport id = monotonicity_certificate(*AffineMap::identity({3}), probes, 0.0, probe(20));
    CHECK(id.passed);
    CHECK(id.min_lambda_T == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(id.samples.size() == 2);
    for (const auto& s : id.samples) CHECK(s.lambda_min_R == doctest::Approx(1.0).epsilon(1e-10));

    // x - c has the identity Jacobian.
    auto shift = AffineMap::scaled_identity({3}, 1.0, Tensor({3}, -0.4));
    CHECK(monotonicity_certificate(*shift, probes, 0.0, probe(20)).min_lambda_T == doctest::Approx(1.0).epsilon(1e-10));

    Rng rng(8);
    auto psd = from_eigen(oracle::symmetric_with_spectrum({0.0, 0.5, 1.0}, rng));
    const CertificateReport p = monotonicity_certificate(*psd, probes, 0.0, probe(300), 1e-8);
    CHECK(p.passed);
    CHECK(p.min_lambda_T == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
    CHECK_FALSE(monotonicity_certificate(*psd, probes, 0.1, probe(300), 1e-8).passed);

    auto indefinite = from_eigen(oracle::symmetric_with_spectrum({-0.5, 0.5, 1.0}, rng));
    const CertificateReport n = monotonicity_certificate(*indefinite, probes, 0.0, probe(300));
    CHECK_FALSE(n.passed);
    CHECK(n.min_lambda_T == doctest::Approx(-0.5).epsilon(1e-6));
  }

  TEST_CASE("configuration validation") {
    ProbeConfig bad = probe(0);
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = probe(10);
    bad.shift_margin = 0.9;
    CHECK_THROWS_AS(validate(bad), ConfigError);
  }
}
