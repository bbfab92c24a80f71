#include "ckd/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ckd/errors.hpp"
#include "ckd/grad_check.hpp"
#include "ckd/losses.hpp"
#include "ckd/models.hpp"

namespace ckd {

namespace {

constexpr std::size_t kBatch = 6;
constexpr std::size_t kInputs = 3;
constexpr std::size_t kHidden = 5;
constexpr std::size_t kClasses = 4;
constexpr double kKinkGap = 1e-3;

// A random evaluation point: network, inputs, labels, teacher logits and the
// scalar factors every loss may need.
struct Point {
  Network net;
  Tensor inputs;
  std::vector<std::size_t> labels;
  Tensor teacher;
  Tensor targets;
  double lambda = 0.5;
  double tau = 2.0;
  double phi_teacher = 1.0;
  double phi_margin = 1.0;
  double psi = 0.5;
};

Point make_point(std::uint64_t seed, std::size_t out_dim) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::vector<std::size_t> hidden{kHidden};
  Point p;
  p.net = init_network(mlp_spec(kInputs, hidden, out_dim, Activation::tanh), rng());
  for (Tensor* t : p.net.parameters()) {
    for (double& v : t->data()) v += 0.3 * normal(rng);
  }
  p.inputs = Tensor(kBatch, kInputs);
  for (double& v : p.inputs.data()) v = normal(rng);
  p.teacher = Tensor(kBatch, out_dim);
  for (double& v : p.teacher.data()) v = 2.0 * normal(rng);
  p.targets = Tensor(kBatch, 1);
  for (double& v : p.targets.data()) v = normal(rng);
  std::uniform_int_distribution<std::size_t> label(0, out_dim - 1);
  for (std::size_t i = 0; i < kBatch; ++i) p.labels.push_back(label(rng));
  p.lambda = 0.05 + 0.9 * unit(rng);
  p.tau = 1.0 + 3.0 * unit(rng);
  p.phi_teacher = 0.1 + 0.9 * unit(rng);
  p.phi_margin = 0.1 + 0.9 * unit(rng);
  p.psi = 0.05 + 0.9 * unit(rng);
  return p;
}

// Places the margin threshold halfway between the two middle per-sample
// distances so both hinge branches are exercised. Returns nullopt when some
// distance lies within kKinkGap of the threshold.
std::optional<double> margin_away_from_kink(const Point& p) {
  const Tensor z = predict(p.net, p.inputs);
  std::vector<double> dist(kBatch, 0.0);
  for (std::size_t i = 0; i < kBatch; ++i) {
    for (std::size_t j = 0; j < z.cols(); ++j) {
      const double d = z(i, j) - p.phi_teacher * p.teacher(i, j);
      dist[i] += d * d;
    }
  }
  std::vector<double> sorted = dist;
  std::sort(sorted.begin(), sorted.end());
  const double threshold = 0.5 * (sorted[kBatch / 2 - 1] + sorted[kBatch / 2]);
  for (const double d : dist) {
    if (std::abs(d - threshold) < kKinkGap) return std::nullopt;
  }
  return threshold / p.phi_margin;
}

// Identity in the forward pass, deliberately wrong in the backward pass.
Var corrupted_identity(Graph& g, Var a) {
  return g.record(g.value(a), {a},
                  [](Graph& gr, Var self) {
                    const Var in = gr.inputs(self)[0];
                    auto up = gr.grad(self);
                    auto down = gr.grad(in);
                    for (std::size_t i = 0; i < up.size(); ++i) down[i] += 1.5 * up[i];
                  },
                  "corrupted_identity");
}

using LossFn = std::function<Var(Graph&, Var logits, const Point&, double margin)>;

GradcheckCase make_case(std::string name, std::size_t out_dim, bool hinge, LossFn loss, bool corrupt) {
  auto run = [out_dim, hinge, loss = std::move(loss), corrupt](std::uint64_t seed) {
    std::mt19937_64 reseed(seed);
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Point p = make_point(reseed(), out_dim);
      double margin = 0.0;
      if (hinge) {
        const auto m = margin_away_from_kink(p);
        if (!m) continue;
        margin = *m;
      }
      const LossBuilder build = [&](Graph& g) {
        const Var x = g.constant(p.inputs);
        const Var z = forward(g, p.net, x);
        const Var l = loss(g, z, p, margin);
        return corrupt ? corrupted_identity(g, l) : l;
      };
      const std::vector<Tensor*> params = p.net.parameters();
      return grad_check(build, params);
    }
    throw DomainError("gradcheck: no point away from the hinge kink");
  };
  return {std::move(name), run};
}

}  // namespace

std::vector<GradcheckCase> standard_gradcheck_cases(const std::optional<std::string>& corrupt) {
  struct Def {
    const char* name;
    std::size_t out_dim;
    bool hinge;
    LossFn loss;
  };
  const std::vector<Def> defs{
      {"cross_entropy", kClasses, false,
       [](Graph& g, Var z, const Point& p, double) { return cross_entropy(g, z, p.labels); }},
      {"mse_regression", 1, false,
       [](Graph& g, Var z, const Point& p, double) { return mse_regression(g, z, g.constant(p.targets)); }},
      {"vanilla_kd", kClasses, false,
       [](Graph& g, Var z, const Point& p, double) {
         return vanilla_kd_loss(g, z, p.teacher, p.labels, LossHyper{p.lambda, p.tau, 0.0});
       }},
      {"annealing", kClasses, false,
       [](Graph& g, Var z, const Point& p, double) { return annealing_loss(g, z, p.teacher, p.phi_teacher); }},
      {"continuation_kd", kClasses, true,
       [](Graph& g, Var z, const Point& p, double m) {
         return continuation_kd_loss(g, z, p.teacher, p.phi_teacher, p.phi_margin, m);
       }},
      {"composite", kClasses, true,
       [](Graph& g, Var z, const Point& p, double m) {
         const Var hard = cross_entropy(g, z, p.labels);
         const Var kd = continuation_kd_loss(g, z, p.teacher, p.phi_teacher, p.phi_margin, m);
         return composite_loss(g, hard, kd, p.psi);
       }},
  };
  if (corrupt) {
    const bool known = std::any_of(defs.begin(), defs.end(), [&](const Def& d) { return *corrupt == d.name; });
    if (!known) throw DomainError("gradcheck: unknown loss '" + *corrupt + "'");
  }
  std::vector<GradcheckCase> cases;
  for (const Def& d : defs) {
    cases.push_back(make_case(d.name, d.out_dim, d.hinge, d.loss, corrupt && *corrupt == d.name));
  }
  return cases;
}

std::vector<GradcheckResult> run_gradcheck(std::span<const GradcheckCase> cases, std::size_t points,
                                           std::uint64_t seed, double tolerance) {
  std::vector<GradcheckResult> results;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    GradcheckResult r;
    r.name = cases[c].name;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(c)};
    std::mt19937_64 rng(seq);
    for (std::size_t i = 0; i < points; ++i) {
      r.max_error = std::max(r.max_error, cases[c].max_error(rng()));
      ++r.points;
    }
    r.passed = r.max_error <= tolerance;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace ckd
