#include <doctest.h>

#include <cmath>

#include "core/errors.hpp"
#include "core/maps.hpp"
#include "core/rng.hpp"
#include "support/oracles.hpp"
#include "unit/helpers.hpp"

using namespace monofbf;

namespace {

std::shared_ptr<ResidualConvNet> make_net(std::uint64_t seed, Activation act = Activation::Elu, bool residual = true) {
  ConvNetConfig c;
  c.activation = act;
  c.residual = residual;
  auto net = std::make_shared<ResidualConvNet>(c);
  net->initialize(seed);
  return net;
}

// Single 1x1 kernel, no residual: F(x) = w x + b.
std::shared_ptr<ResidualConvNet> scalar_net(double w, double b) {
  ConvNetConfig c;
  c.channels = {1, 1};
  c.kernel_size = 1;
  c.residual = false;
  auto net = std::make_shared<ResidualConvNet>(c);
  net->set_parameters(Tensor({2}, std::vector<double>{w, b}));
  return net;
}

// Central difference of a scalar function of a leaf tensor along d.
double fd_directional(const std::function<double(const Tensor&)>& f, const Tensor& x, const Tensor& d,
                      double t = 1e-6) {
  Tensor xp = x, xm = x;
  xp.axpy(t, d);
  xm.axpy(-t, d);
  return (f(xp) - f(xm)) / (2.0 * t);
}

void check_op_gradient(const std::function<ad::Var(const ad::Var&)>& build, const Tensor& x, Rng& rng) {
  ad::RecordingScope rec;
  auto leaf = ad::Var::leaf(x);
  const ad::Var out = build(leaf);
  const Tensor seed = rng.normal_tensor(out.shape());
  const Tensor g = ad::backward(out, seed, std::span<const ad::Var>(&leaf, 1))[0];
  const Tensor d = rng.normal_tensor(x.shape());
  auto f = [&](const Tensor& p) {
    ad::DetachedScope det;
    return dot(build(ad::Var::constant(p)).value(), seed);
  };
  const double fd = fd_directional(f, x, d);
  CHECK(dot(g, d) == doctest::Approx(fd).epsilon(1e-6));
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("forward of identity and scaled identity") {
    Rng rng(1);
    const Tensor x = rng.normal_tensor({5});
    CHECK(testing::max_abs_diff(forward(*AffineMap::identity({5}), x), x) == 0.0);
    CHECK(testing::max_abs_diff(forward(*AffineMap::scaled_identity({5}, 2.0), x), 2.0 * x) == 0.0);
  }

  TEST_CASE("zero network with residual is the identity") {
    auto net = make_net(3);
    net->set_parameters(Tensor(net->parameters().values().shape(), 0.0));
    Rng rng(2);
    const Tensor x = rng.uniform_tensor({6, 6}, 0.0, 1.0);
    CHECK(testing::max_abs_diff(forward(*net, x), x) == 0.0);
    auto leaky = make_net(3, Activation::LeakyRelu);
    leaky->set_parameters(Tensor(leaky->parameters().values().shape(), 0.0));
    CHECK(testing::max_abs_diff(forward(*leaky, x), x) == 0.0);
  }

  TEST_CASE("linear maps: jvp is M u, vjp is M^T v, zero directions give zero") {
    Rng rng(3);
    const Tensor M = rng.normal_tensor({4, 6});
    auto map = AffineMap::linear(M);
    const Tensor x = rng.normal_tensor({6}), u = rng.normal_tensor({6}), v = rng.normal_tensor({4});
    const Eigen::MatrixXd Me = oracle::to_matrix(M, 4, 6);
    const Eigen::VectorXd Mu = Me * Eigen::Map<const Eigen::VectorXd>(u.raw(), 6);
    const Eigen::VectorXd Mtv = Me.transpose() * Eigen::Map<const Eigen::VectorXd>(v.raw(), 4);
    const Tensor ju = jvp(*map, x, u), jv = vjp(*map, x, v);
    for (int i = 0; i < 4; ++i) CHECK(ju[i] == doctest::Approx(Mu(i)).epsilon(1e-14));
    for (int i = 0; i < 6; ++i) CHECK(jv[i] == doctest::Approx(Mtv(i)).epsilon(1e-14));
    CHECK(norm(jvp(*map, x, Tensor({6}, 0.0))) == 0.0);
    CHECK(norm(vjp(*map, x, Tensor({4}, 0.0))) == 0.0);
  }

  TEST_CASE("jvp matches central differences on random nets") {
    Rng rng(4);
    for (auto act : {Activation::Elu, Activation::LeakyRelu}) {
      for (int trial = 0; trial < 5; ++trial) {
        auto net = make_net(10 + trial, act);
        const Tensor x = rng.uniform_tensor({8, 8}, 0.0, 1.0), u = rng.normal_tensor({8, 8});
        const double t = 1e-5;
        Tensor xp = x, xm = x;
        xp.axpy(t, u);
        xm.axpy(-t, u);
        Tensor fd = forward(*net, xp) - forward(*net, xm);
        fd *= 1.0 / (2.0 * t);
        CHECK(oracle::rel_err(jvp(*net, x, u), fd) <= 1e-4);
      }
    }
  }

  TEST_CASE("adjoint identity <J u, v> = <u, J^T v>") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      auto net = make_net(20 + trial, trial % 2 ? Activation::LeakyRelu : Activation::Elu, trial % 3 != 0);
      const Tensor x = rng.uniform_tensor({16, 16}, 0.0, 1.0);
      const Tensor u = rng.normal_tensor({16, 16}), v = rng.normal_tensor({16, 16});
      const double lhs = dot(jvp(*net, x, u), v), rhs = dot(u, vjp(*net, x, v));
      CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(std::abs(lhs), 1.0));
    }
  }

  TEST_CASE("symmetric Jacobian action") {
    Rng rng(6);
    const Tensor anti({2, 2}, std::vector<double>{0, 1, -1, 0});
    const Tensor u = rng.normal_tensor({2}), x = rng.normal_tensor({2});
    CHECK(norm(sym_jacobian_apply(*AffineMap::linear(anti), x, u)) < 1e-15);

    const Tensor sym({2, 2}, std::vector<double>{2, 1, 1, 3});
    auto s = AffineMap::linear(sym);
    CHECK(testing::max_abs_diff(sym_jacobian_apply(*s, x, u), jvp(*s, x, u)) < 1e-15);

    auto net = make_net(7);
    const Tensor xi = rng.uniform_tensor({8, 8}, 0.0, 1.0), ui = rng.normal_tensor({8, 8});
    const Eigen::MatrixXd J = oracle::dense_jacobian(*net, xi);
    const Eigen::VectorXd expected = 0.5 * (J + J.transpose()) * Eigen::Map<const Eigen::VectorXd>(ui.raw(), 64);
    const Tensor got = sym_jacobian_apply(*net, xi, ui);
    for (int i = 0; i < 64; ++i) CHECK(got[i] == doctest::Approx(expected(i)).epsilon(1e-10));

    CHECK_THROWS_AS(sym_jacobian_apply(*AffineMap::linear(Tensor({3, 2}, 1.0)), x, u), DimensionError);
  }

  TEST_CASE("dense jvp Jacobian agrees with finite differences") {
    Rng rng(8);
    auto net = make_net(9);
    const Tensor x = rng.uniform_tensor({5, 5}, 0.0, 1.0);
    const Eigen::MatrixXd J = oracle::dense_jacobian(*net, x);
    const Eigen::MatrixXd F = oracle::fd_jacobian(*net, x);
    CHECK((J - F).norm() <= 1e-6 * J.norm());
  }

  TEST_CASE("parameter gradient of an l1 loss on a single-kernel map") {
    Rng rng(10);
    ConvNetConfig c;
    c.channels = {1, 1};
    c.kernel_size = 3;
    c.residual = false;
    ResidualConvNet net(c);
    net.initialize(11);
    const Tensor x = rng.uniform_tensor({8, 8}, 0.0, 1.0), y = rng.uniform_tensor({8, 8}, 0.0, 1.0);
    const ParameterVector g = param_gradient(net, [&](const BoundMap& b) {
      ad::Var r = ad::sub(b(ad::Var::constant(x)), ad::Var::constant(y));
      return ad::sum(ad::apply(r, {ad::Fn::Abs}));
    });
    auto loss = [&](const Tensor& theta) {
      ResidualConvNet copy = net;
      copy.set_parameters(theta);
      const Tensor r = forward(copy, x) - y;
      double s = 0.0;
      for (double v : r.data()) s += std::abs(v);
      return s;
    };
    const Tensor theta = net.parameters().values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      Tensor e(theta.shape(), 0.0);
      e[i] = 1.0;
      CHECK(g.values()[i] == doctest::Approx(fd_directional(loss, theta, e, 1e-7)).epsilon(1e-4));
    }
    // Weight gradient is the correlation of sign(F(x) - y) with x.
    const Tensor r = forward(net, x) - y;
    Tensor sign(r.shape());
    for (std::size_t i = 0; i < r.size(); ++i) sign[i] = r[i] > 0 ? 1.0 : -1.0;
    const Tensor corr = conv2d_multi_adjoint_weight(sign.reshaped({1, 8, 8}), x.reshaped({1, 8, 8}), 3);
    for (std::size_t i = 0; i < 9; ++i) CHECK(g.values()[i] == doctest::Approx(corr[i]).epsilon(1e-12));
  }

  TEST_CASE("parameter gradient trivia") {
    Rng rng(12);
    auto net = scalar_net(0.7, 0.0);
    const Tensor x = rng.normal_tensor({4, 4}), v = rng.normal_tensor({4, 4});
    const ParameterVector g = param_gradient(*net, [&](const BoundMap& b) {
      return ad::dot(b(ad::Var::constant(x)), ad::Var::constant(v));
    });
    CHECK(g.values()[0] == doctest::Approx(dot(x, v)).epsilon(1e-14));
    CHECK(g.values()[1] == doctest::Approx(sum(v)).epsilon(1e-14));

    const ParameterVector zero = param_gradient(*net, [&](const BoundMap&) {
      return ad::sum(ad::Var::constant(x));
    });
    CHECK(norm(zero.values()) == 0.0);

    CHECK_THROWS_AS(param_gradient(*net, [&](const BoundMap& b) { return b(ad::Var::constant(x)); }), DimensionError);
  }

  TEST_CASE("detached computations keep values and drop gradients") {
    Rng rng(13);
    auto net = make_net(14);
    const Tensor x = rng.uniform_tensor({6, 6}, 0.0, 1.0);
    double recorded = 0.0, detached = 0.0;
    const ParameterVector g1 = param_gradient(*net, [&](const BoundMap& b) {
      ad::Var s = ad::sum(b(ad::Var::constant(x)));
      recorded = s.value().item();
      return s;
    });
    const ParameterVector g2 = param_gradient(*net, [&](const BoundMap& b) {
      ad::DetachedScope off;
      ad::Var s = ad::sum(b(ad::Var::constant(x)));
      detached = s.value().item();
      return s;
    });
    CHECK(recorded == detached);
    CHECK(norm(g1.values()) > 0.0);
    CHECK(norm(g2.values()) == 0.0);
    {
      ad::DetachedScope off;
      CHECK_FALSE(ad::recording_enabled());
    }
    CHECK(ad::recording_enabled());
  }

  TEST_CASE("primitive gradients against finite differences") {
    Rng rng(15);
    const Tensor x = rng.uniform_tensor({3, 5, 5}, 0.5, 1.5);
    const Tensor other = rng.uniform_tensor({3, 5, 5}, 0.5, 1.5);
    const Tensor w = rng.normal_tensor({2, 3, 3, 3});
    const Tensor w2 = rng.normal_tensor({3, 2, 3, 3});
    const auto c = [](const Tensor& t) { return ad::Var::constant(t); };
    check_op_gradient([&](const ad::Var& v) { return ad::mul(v, c(other)); }, x, rng);
    check_op_gradient([&](const ad::Var& v) { return ad::div(c(other), v); }, x, rng);
    check_op_gradient([&](const ad::Var& v) { return ad::div_scalar(v, ad::sum(v)); }, x, rng);
    check_op_gradient([&](const ad::Var& v) { return ad::conv2d(v, c(w)); }, x, rng);
    check_op_gradient([&](const ad::Var& v) { return ad::conv2d(c(x), ad::reshape(ad::slice(v, 0, {2, 3, 3, 3}), {2, 3, 3, 3})); },
                      rng.normal_tensor({54}), rng);
    check_op_gradient([&](const ad::Var& v) { return ad::conv2d_transpose(ad::conv2d(v, c(w)), c(w)); }, x, rng);
    check_op_gradient([&](const ad::Var& v) { return ad::conv2d_transpose(c(x), ad::reshape(v, {3, 2, 3, 3})); },
                      rng.normal_tensor({54}), rng);
    (void)w2;
    check_op_gradient([&](const ad::Var& v) { return ad::bias_add(c(x), v); }, rng.normal_tensor({3}), rng);
    for (auto fn : {ad::Fn::Elu, ad::Fn::Saturation, ad::Fn::Sqrt, ad::Fn::Square}) {
      const double p = fn == ad::Fn::Saturation ? 0.6 : 1.0;
      check_op_gradient([&](const ad::Var& v) { return ad::apply(v, {fn, p}); }, x, rng);
      check_op_gradient([&](const ad::Var& v) { return ad::apply_derivative(v, {fn, p}); }, x, rng);
    }
    const Tensor img = rng.normal_tensor({6, 7});
    for (int axis : {0, 1}) {
      for (bool adj : {false, true}) {
        check_op_gradient([&](const ad::Var& v) { return ad::difference(v, axis, adj); }, img, rng);
      }
    }
    check_op_gradient([&](const ad::Var& v) { return ad::min_with(ad::mean(v), 10.0); }, x, rng);
  }

  TEST_CASE("circular difference and its adjoint") {
    Rng rng(16);
    const Tensor a = rng.normal_tensor({5, 6}), b = rng.normal_tensor({5, 6});
    ad::DetachedScope off;
    for (int axis : {0, 1}) {
      const Tensor da = ad::difference(ad::Var::constant(a), axis, false).value();
      const Tensor dtb = ad::difference(ad::Var::constant(b), axis, true).value();
      CHECK(dot(da, b) == doctest::Approx(dot(a, dtb)).epsilon(1e-13));
    }
    const Tensor dh = ad::difference(ad::Var::constant(a), 1, false).value();
    CHECK(dh[0] == doctest::Approx(a[1] - a[0]));
    CHECK(dh[5] == doctest::Approx(a[0] - a[5]));
  }

  TEST_CASE("parameter layout partitions the flat vector") {
    auto net = make_net(17);
    const ParameterVector p = net->parameters();
    std::size_t offset = 0;
    for (const auto& seg : p.layout()) {
      CHECK(seg.offset == offset);
      offset += shape_size(seg.shape);
    }
    CHECK(offset == p.size());
    CHECK(p.segment("conv0.weight").shape == Shape{8, 1, 3, 3});
    CHECK(p.segment("conv2.bias").shape == Shape{1});
    const ParameterVector both = ParameterVector::concat(p, p);
    CHECK(both.size() == 2 * p.size());
    CHECK(both.layout()[p.layout().size()].offset == p.size());
    CHECK_THROWS(ParameterVector(Tensor({3}), {{"a", {2}, 0}}));
    CHECK_THROWS_AS(net->set_parameters(Tensor({3})), DimensionError);
  }

  TEST_CASE("initialization and evaluation are deterministic") {
    auto a = make_net(18), b = make_net(18), c = make_net(19);
    CHECK(testing::max_abs_diff(a->parameters().values(), b->parameters().values()) == 0.0);
    CHECK(testing::max_abs_diff(a->parameters().values(), c->parameters().values()) > 0.0);
    const ParameterVector p = a->parameters();
    const double bound = 1.0 / std::sqrt(9.0);
    const auto& seg = p.segment("conv0.weight");
    for (std::size_t i = 0; i < shape_size(seg.shape); ++i) CHECK(std::abs(p.values()[seg.offset + i]) <= bound);
    Rng rng(20);
    const Tensor x = rng.uniform_tensor({8, 8}, 0.0, 1.0);
    CHECK(testing::max_abs_diff(forward(*a, x), forward(*b, x)) == 0.0);
  }

  TEST_CASE("shape errors") {
    auto net = make_net(21);
    CHECK_THROWS_AS(forward(*net, Tensor({2, 2})), DimensionError);
    CHECK_THROWS_AS(forward(*net, Tensor({4, 4, 4})), DimensionError);
    CHECK_THROWS_AS(jvp(*net, Tensor({4, 4}), Tensor({5, 5})), DimensionError);
    CHECK_THROWS_AS(vjp(*AffineMap::linear(Tensor({3, 2}, 1.0)), Tensor({2}), Tensor({2})), DimensionError);
  }

  TEST_CASE("reflected and composite maps") {
    Rng rng(22);
    auto net = make_net(23);
    const Tensor x = rng.uniform_tensor({6, 6}, 0.0, 1.0), u = rng.normal_tensor({6, 6});
    ReflectedMap r(net);
    CHECK(testing::max_abs_diff(forward(r, x), 2.0 * forward(*net, x) - x) < 1e-14);
    CHECK(testing::max_abs_diff(jvp(r, x, u), 2.0 * jvp(*net, x, u) - u) < 1e-13);

    auto inner = make_net(24);
    CompositeMap comp(net, inner);
    CHECK(testing::max_abs_diff(forward(comp, x), forward(*net, forward(*inner, x))) < 1e-14);
    CHECK(comp.parameters().size() == net->parameters().size() + inner->parameters().size());
    const Eigen::MatrixXd J = oracle::dense_jacobian(comp, x);
    const Eigen::MatrixXd F = oracle::fd_jacobian(comp, x);
    CHECK((J - F).norm() <= 1e-6 * J.norm());
    const double lhs = dot(jvp(comp, x, u), x), rhs = dot(u, vjp(comp, x, x));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}
