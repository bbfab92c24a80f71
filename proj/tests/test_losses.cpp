#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "ckd/errors.hpp"
#include "ckd/gradcheck_suite.hpp"
#include "ckd/losses.hpp"

using namespace ckd;

namespace {

double value_of(const std::function<Var(Graph&)>& build) {
  Graph g;
  return g.scalar(build(g));
}

}  // namespace

TEST(CrossEntropy, Examples) {
  const std::vector<std::size_t> zero{0}, two{2};
  EXPECT_NEAR(value_of([&](Graph& g) { return cross_entropy(g, g.constant(Tensor::row({0, 0})), zero); }),
              std::log(2.0), 1e-15);
  EXPECT_LE(value_of([&](Graph& g) { return cross_entropy(g, g.constant(Tensor::row({100, 0})), zero); }),
            1e-10);
  EXPECT_NEAR(value_of([&](Graph& g) { return cross_entropy(g, g.constant(Tensor::row({1, 2, 3})), two); }),
              0.407606, 5e-7);
}

TEST(CrossEntropy, LabelOutOfRange) {
  Graph g;
  const std::vector<std::size_t> bad{3};
  EXPECT_THROW(cross_entropy(g, g.constant(Tensor::row({1, 2, 3})), bad), DomainError);
}

TEST(Mse, Examples) {
  EXPECT_EQ(value_of([](Graph& g) { return mse_regression(g, g.constant(Tensor::column({1, 2})), g.constant(Tensor::column({1, 2}))); }), 0.0);
  EXPECT_EQ(value_of([](Graph& g) { return mse_regression(g, g.constant(Tensor::column({0})), g.constant(Tensor::column({2}))); }), 4.0);
  EXPECT_EQ(value_of([](Graph& g) { return mse_regression(g, g.constant(Tensor::column({1, 3})), g.constant(Tensor::column({0, 0}))); }), 5.0);
  Graph g;
  EXPECT_THROW(mse_regression(g, g.constant(Tensor::column({1, 3})), g.constant(Tensor::column({0}))), DimensionError);
}

TEST(VanillaKd, HandExample) {
  const std::vector<std::size_t> label{0};
  const double v = value_of([&](Graph& g) {
    return vanilla_kd_loss(g, g.constant(Tensor::row({0, 0})), Tensor::row({2, 0}), label, LossHyper{0.5, 2.0, 0.0});
  });
  // 0.5 ln 2 + 0.5 KL(softmax([1, 0]) || uniform), written out in closed form.
  const double e = std::exp(1.0);
  const double p0 = e / (e + 1.0), p1 = 1.0 / (e + 1.0);
  const double expected = 0.5 * std::log(2.0) + 0.5 * (p0 * std::log(2.0 * p0) + p1 * std::log(2.0 * p1));
  EXPECT_NEAR(v, expected, 1e-15);
  EXPECT_NEAR(v, 0.4020456261158363, 1e-15);
}

TEST(VanillaKd, LambdaOneIsCrossEntropy) {
  const std::vector<std::size_t> labels{1, 0};
  const Tensor zs = Tensor::from_rows({{0.3, -1.2, 0.8}, {2.0, 0.1, -0.4}});
  const Tensor zt = Tensor::from_rows({{1.0, 2.0, 3.0}, {-1.0, 0.0, 1.0}});
  const double ce = value_of([&](Graph& g) { return cross_entropy(g, g.constant(zs), labels); });
  const double kd = value_of([&](Graph& g) { return vanilla_kd_loss(g, g.constant(zs), zt, labels, {1.0, 3.0, 0.0}); });
  EXPECT_EQ(kd, ce);
}

TEST(VanillaKd, IdenticalLogitsAtLambdaZeroGiveZeroGradient) {
  const std::vector<std::size_t> labels{1, 0};
  Tensor zs = Tensor::from_rows({{0.3, -1.2, 0.8}, {2.0, 0.1, -0.4}});
  for (double tau : {1.0, 2.0, 5.0}) {
    Graph g;
    const Var l = vanilla_kd_loss(g, g.parameter(zs), zs, labels, {0.0, tau, 0.0});
    EXPECT_EQ(g.scalar(l), 0.0);
    g.backward(l);
    for (double v : zs.grad()) EXPECT_EQ(v, 0.0);
    zs.zero_grad();
  }
}

TEST(Annealing, Examples) {
  EXPECT_EQ(value_of([](Graph& g) { return annealing_loss(g, g.constant(Tensor::row({1, 2})), Tensor::row({1, 2}), 1.0); }), 0.0);
  EXPECT_EQ(value_of([](Graph& g) { return annealing_loss(g, g.constant(Tensor::row({1, 2})), Tensor::row({7, 7}), 0.0); }), 5.0);
  EXPECT_EQ(value_of([](Graph& g) { return annealing_loss(g, g.constant(Tensor::row({1, 0})), Tensor::row({2, 2}), 0.5); }), 1.0);
  Graph g;
  EXPECT_THROW(annealing_loss(g, g.constant(Tensor::row({1, 0})), Tensor::row({2, 2, 2}), 0.5), DimensionError);
}

TEST(Continuation, Examples) {
  EXPECT_EQ(value_of([](Graph& g) { return continuation_kd_loss(g, g.constant(Tensor::row({1, 2})), Tensor::row({1, 2}), 1.0, 0.0); }), 0.0);
  EXPECT_EQ(value_of([](Graph& g) { return continuation_kd_loss(g, g.constant(Tensor::row({0, 0})), Tensor::row({2, 0}), 0.5, 4.0); }), 0.0);
  EXPECT_EQ(value_of([](Graph& g) { return continuation_kd_loss(g, g.constant(Tensor::row({0, 0})), Tensor::row({2, 0}), 0.5, 1.0); }), 0.5);
}

TEST(Continuation, HingeIsPerSample) {
  // Sample 0 sits inside the dead zone, sample 1 outside.
  const Tensor zs = Tensor::from_rows({{0.0, 0.0}, {0.0, 0.0}});
  const Tensor zt = Tensor::from_rows({{1.0, 0.0}, {3.0, 0.0}});
  const double v = value_of([&](Graph& g) { return continuation_kd_loss(g, g.constant(zs), zt, 1.0, 2.0); });
  EXPECT_EQ(v, (0.0 + (9.0 - 2.0)) / 2.0);
}

TEST(Continuation, NonIncreasingInMargin) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 50; ++trial) {
    Tensor zs(4, 3), zt(4, 3);
    for (double& v : zs.data()) v = normal(rng);
    for (double& v : zt.data()) v = normal(rng);
    double prev = INFINITY;
    for (double m = 0.0; m <= 10.0; m += 0.25) {
      const double v = value_of([&](Graph& g) { return continuation_kd_loss(g, g.constant(zs), zt, 0.7, m); });
      EXPECT_LE(v, prev);
      EXPECT_GE(v, 0.0);
      prev = v;
    }
  }
}

TEST(Composite, Examples) {
  const double mid = value_of([](Graph& g) {
    return composite_loss(g, g.constant(Tensor::scalar(2.0)), g.constant(Tensor::scalar(4.0)), 0.5);
  });
  EXPECT_EQ(mid, 3.0);
  Graph g;
  EXPECT_THROW(composite_loss(g, g.constant(Tensor::scalar(2.0)), g.constant(Tensor::scalar(4.0)), 1.5),
               DomainError);
}

TEST(Composite, DegenerateWeightsRouteGradientToOneTerm) {
  Tensor a = Tensor::scalar(1.5), b = Tensor::scalar(-2.0);
  for (double psi_value : {0.0, 1.0}) {
    Graph g;
    const Var ce = sum_sq(g, g.parameter(a));
    const Var cnt = sum_sq(g, g.parameter(b));
    const Var l = composite_loss(g, ce, cnt, psi_value);
    EXPECT_EQ(g.scalar(l), psi_value == 0.0 ? g.scalar(cnt) : g.scalar(ce));
    g.backward(l);
    EXPECT_EQ(a.grad()[0], psi_value == 0.0 ? 0.0 : 3.0);
    EXPECT_EQ(b.grad()[0], psi_value == 0.0 ? -4.0 : 0.0);
    a.zero_grad();
    b.zero_grad();
  }
}

// Composite with m = 0 and a step psi reproduces the Annealing-KD losses bit for bit.
TEST(Composite, StepPsiWithZeroMarginEqualsAnnealingLosses) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  const std::vector<std::size_t> labels{0, 2, 1};
  for (int trial = 0; trial < 100; ++trial) {
    Tensor zs(3, 3), zt(3, 3);
    for (double& v : zs.data()) v = normal(rng);
    for (double& v : zt.data()) v = normal(rng);
    const double phi = 0.1 * static_cast<double>(1 + trial % 10);
    for (double psi_value : {0.0, 1.0}) {
      const double composite = value_of([&](Graph& g) {
        const Var z = g.constant(zs);
        return composite_loss(g, cross_entropy(g, z, labels), continuation_kd_loss(g, z, zt, phi, 0.0), psi_value);
      });
      const double expected = psi_value == 0.0
                                  ? value_of([&](Graph& g) { return annealing_loss(g, g.constant(zs), zt, phi); })
                                  : value_of([&](Graph& g) { return cross_entropy(g, g.constant(zs), labels); });
      EXPECT_EQ(composite, expected);
    }
  }
}

TEST(Losses, Validation) {
  EXPECT_THROW((LossHyper{1.5, 2.0, 0.0}.validate()), DomainError);
  EXPECT_THROW((LossHyper{0.5, 0.5, 0.0}.validate()), DomainError);
  EXPECT_THROW((LossHyper{0.5, 2.0, -1.0}.validate()), DomainError);
}

TEST(Losses, NonNegativeOnRandomInputs) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> normal;
  const std::vector<std::size_t> labels{0, 1, 2, 1};
  for (int trial = 0; trial < 200; ++trial) {
    Tensor zs(4, 3), zt(4, 3);
    for (double& v : zs.data()) v = 3.0 * normal(rng);
    for (double& v : zt.data()) v = 3.0 * normal(rng);
    EXPECT_GE(value_of([&](Graph& g) { return cross_entropy(g, g.constant(zs), labels); }), 0.0);
    EXPECT_GE(value_of([&](Graph& g) { return vanilla_kd_loss(g, g.constant(zs), zt, labels, {0.3, 2.0, 0.0}); }), 0.0);
    EXPECT_GE(value_of([&](Graph& g) { return annealing_loss(g, g.constant(zs), zt, 0.4); }), 0.0);
    EXPECT_GE(value_of([&](Graph& g) { return continuation_kd_loss(g, g.constant(zs), zt, 0.4, 1.0); }), 0.0);
  }
}

TEST(GradcheckSuite, EveryLossPasses) {
  const auto cases = standard_gradcheck_cases();
  ASSERT_EQ(cases.size(), 6u);
  for (const GradcheckResult& r : run_gradcheck(cases, 100)) {
    EXPECT_TRUE(r.passed) << r.name << " " << r.max_error;
    EXPECT_EQ(r.points, 100u);
  }
}

TEST(GradcheckSuite, CorruptedBackwardIsCaught) {
  for (const char* name : {"cross_entropy", "continuation_kd"}) {
    const auto cases = standard_gradcheck_cases(std::string(name));
    for (const GradcheckResult& r : run_gradcheck(cases, 5)) EXPECT_EQ(r.passed, r.name != name) << r.name;
  }
  EXPECT_THROW(standard_gradcheck_cases(std::string("nope")), DomainError);
}
