#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ckd/data.hpp"
#include "ckd/distill.hpp"
#include "ckd/errors.hpp"

using namespace ckd;

namespace {

struct Fixture {
  Splits splits;
  Network teacher;
};

Splits mixture_splits(std::size_t classes, std::uint64_t seed) {
  GaussianMixtureParams p;
  p.n_classes = classes;
  p.dim = 2;
  p.n_per_class = 60;
  p.separation = 4.0;
  p.seed = seed;
  return split(gen_gaussian_mixture(p), {0.8, 0.1, 0.1}, seed);
}

Network student_net(std::size_t classes, std::uint64_t seed) {
  const std::vector<std::size_t> hidden{8};
  return init_network(mlp_spec(2, hidden, classes, Activation::tanh), seed);
}

Network trained_teacher(const Splits& s, std::size_t classes) {
  DistillConfig c;
  c.method = Method::scratch;
  c.epochs = 10;
  const std::vector<std::size_t> hidden{32, 32};
  return train_scratch(init_network(mlp_spec(2, hidden, classes, Activation::relu), 99), s.train, s.val, c)
      .best_checkpoint;
}

DistillConfig base_config(Method m, int epochs) {
  DistillConfig c;
  c.method = m;
  c.epochs = epochs;
  c.batch_size = 16;
  c.t_max = 5;
  c.psi_spec = PsiSpec{PsiCappedRamp{0.75 * epochs, epochs * 3 / 4}, epochs};
  c.seed = 3;
  return c;
}

std::vector<double> column(const RunRecord& r, double EpochRow::*field) {
  std::vector<double> out;
  for (const EpochRow& row : r.rows) out.push_back(row.*field);
  return out;
}

void expect_same_record(const RunRecord& a, const RunRecord& b) {
  EXPECT_EQ(column(a, &EpochRow::train_loss), column(b, &EpochRow::train_loss));
  EXPECT_EQ(column(a, &EpochRow::val_metric), column(b, &EpochRow::val_metric));
  EXPECT_EQ(a.best_epoch, b.best_epoch);
  EXPECT_EQ(a.best_checkpoint.flat_params(), b.best_checkpoint.flat_params());
  EXPECT_EQ(a.final_network.flat_params(), b.final_network.flat_params());
}

}  // namespace

TEST(Sgd, PlainStep) {
  Tensor p = Tensor::scalar(1.0);
  p.grad()[0] = 2.0;
  OptimizerState s(OptimizerSettings{0.1, 0.0});
  std::vector<Tensor*> params{&p};
  sgd_step(params, s);
  EXPECT_DOUBLE_EQ(p.item(), 0.8);
}

TEST(Sgd, ZeroGradientLeavesParams) {
  Tensor p = Tensor::row({1.0, -2.0});
  OptimizerState s(OptimizerSettings{0.5, 0.9});
  std::vector<Tensor*> params{&p};
  sgd_step(params, s);
  sgd_step(params, s);
  EXPECT_EQ(p(0, 0), 1.0);
  EXPECT_EQ(p(0, 1), -2.0);
}

TEST(Sgd, MomentumRecurrence) {
  Tensor p = Tensor::scalar(0.0);
  OptimizerState s(OptimizerSettings{1.0, 0.9});
  std::vector<Tensor*> params{&p};
  p.grad()[0] = 1.0;
  sgd_step(params, s);
  EXPECT_EQ(p.item(), -1.0);
  sgd_step(params, s);
  EXPECT_DOUBLE_EQ(s.velocity[0][0], 1.9);
  EXPECT_DOUBLE_EQ(p.item(), -2.9);
}

TEST(Sgd, NonFiniteGradientAbortsBeforeUpdate) {
  Tensor a = Tensor::scalar(1.0), b = Tensor::scalar(2.0);
  a.grad()[0] = 1.0;
  b.grad()[0] = std::nan("");
  OptimizerState s(OptimizerSettings{0.1, 0.0});
  std::vector<Tensor*> params{&a, &b};
  try {
    sgd_step(params, s, 7);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_EQ(e.epoch(), 7);
  }
  EXPECT_EQ(a.item(), 1.0);
}

TEST(Evaluate, Examples) {
  Dataset d;
  d.task = TaskKind::classification;
  d.num_classes = 2;
  d.inputs = Tensor::from_rows({{1.0}, {-1.0}});
  d.labels = {0, 1};
  Network perfect({{1, 2, Activation::identity}});
  perfect.weight(0)(0, 0) = 1.0;
  perfect.weight(0)(0, 1) = -1.0;
  EXPECT_EQ(evaluate(perfect, d), 1.0);

  Dataset r;
  r.task = TaskKind::regression;
  r.inputs = Tensor(4, 1, 0.3);
  r.targets = Tensor(4, 1, 0.0);
  EXPECT_EQ(evaluate(Network({{1, 1, Activation::identity}}), r), 0.0);
  EXPECT_THROW(evaluate(perfect, Dataset{}), DomainError);
}

TEST(Evaluate, RandomLogitsNearChance) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Dataset d;
    d.task = TaskKind::classification;
    d.num_classes = 2;
    d.inputs = Tensor(1000, 2);
    for (std::size_t i = 0; i < 1000; ++i) {
      d.inputs(i, 0) = normal(rng);
      d.inputs(i, 1) = normal(rng);
      d.labels.push_back(i % 2);
    }
    Network id({{2, 2, Activation::identity}});
    id.weight(0)(0, 0) = 1.0;
    id.weight(0)(1, 1) = 1.0;
    const double acc = evaluate(id, d);
    EXPECT_GE(acc, 0.44);
    EXPECT_LE(acc, 0.56);
  }
}

TEST(EpochOrder, PermutationKeyedBySeedAndEpoch) {
  const auto a = epoch_order(100, 5, 1);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_EQ(a, epoch_order(100, 5, 1));
  EXPECT_NE(a, epoch_order(100, 5, 2));
  EXPECT_NE(a, epoch_order(100, 6, 1));
}

TEST(Config, Validation) {
  DistillConfig c = base_config(Method::continuation, 4);
  EXPECT_THROW(c.validate(), ConfigError);  // epochs < t_max
  c = base_config(Method::vanilla, 10);
  c.freeze.psi = 0.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = base_config(Method::annealing, 10);
  c.annealing = {6, 3, AnnealingProtocol::two_stage};
  EXPECT_THROW(c.validate(), ConfigError);
  c.annealing = {6, 4, AnnealingProtocol::two_stage};
  EXPECT_NO_THROW(c.validate());
  c.optimizer.momentum = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

class Training : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    splits_ = new Splits(mixture_splits(3, 1));
    teacher_ = new Network(trained_teacher(*splits_, 3));
  }
  static void TearDownTestSuite() {
    delete splits_;
    delete teacher_;
  }
  static Splits* splits_;
  static Network* teacher_;
};

Splits* Training::splits_ = nullptr;
Network* Training::teacher_ = nullptr;

TEST_F(Training, ScratchZeroEpochsReturnsInitialNetwork) {
  const Network init = student_net(3, 4);
  const RunRecord r = train_scratch(init, splits_->train, splits_->val, base_config(Method::scratch, 0));
  EXPECT_TRUE(r.rows.empty());
  EXPECT_EQ(r.best_epoch, 0);
  EXPECT_EQ(r.best_checkpoint.flat_params(), init.flat_params());
}

TEST_F(Training, ScratchIsDeterministicAndPopulatesRows) {
  const auto c = base_config(Method::scratch, 6);
  const RunRecord a = train_scratch(student_net(3, 4), splits_->train, splits_->val, c);
  const RunRecord b = train_scratch(student_net(3, 4), splits_->train, splits_->val, c);
  expect_same_record(a, b);
  ASSERT_EQ(a.rows.size(), 6u);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].epoch, static_cast<int>(i + 1));
    EXPECT_GE(a.rows[i].val_metric, 0.0);
    EXPECT_LE(a.rows[i].val_metric, 1.0);
  }
}

TEST_F(Training, BestCheckpointContract) {
  const RunRecord r = train_scratch(student_net(3, 8), splits_->train, splits_->val, base_config(Method::scratch, 8));
  double best = -1.0;
  for (const EpochRow& row : r.rows) {
    EXPECT_EQ(row.is_best, row.val_metric > best);
    best = std::max(best, row.val_metric);
  }
  EXPECT_EQ(r.best_metric, best);
  EXPECT_EQ(evaluate(r.best_checkpoint, splits_->val), best);
  EXPECT_EQ(r.rows[r.best_epoch - 1].val_metric, best);
}

TEST_F(Training, VanillaLambdaOneEqualsScratch) {
  auto c = base_config(Method::vanilla, 5);
  c.loss.lambda = 1.0;
  const RunRecord v = train_vanilla(student_net(3, 4), TeacherSource{*teacher_}, splits_->train, splits_->val, c);
  const RunRecord s = train_scratch(student_net(3, 4), splits_->train, splits_->val, base_config(Method::scratch, 5));
  expect_same_record(v, s);
}

TEST_F(Training, VanillaWithCloneTeacherAtLambdaZeroDoesNotMove) {
  auto c = base_config(Method::vanilla, 3);
  c.loss.lambda = 0.0;
  const Network student = student_net(3, 4);
  const RunRecord r = train_vanilla(student, TeacherSource{student}, splits_->train, splits_->val, c);
  EXPECT_EQ(r.rows.front().train_loss, 0.0);
  EXPECT_EQ(r.final_network.flat_params(), student.flat_params());
}

TEST_F(Training, ContinuationScheduleColumns) {
  DistillConfig c = base_config(Method::continuation, 30);
  c.t_max = 10;
  c.loss.margin = 0.5;
  c.psi_spec = PsiSpec{PsiCappedRamp{40.0, 20}, 30};
  const RunRecord r = train_continuation(student_net(3, 4), TeacherSource{*teacher_}, splits_->train, splits_->val, c);
  ASSERT_EQ(r.rows.size(), 30u);
  EXPECT_EQ(r.rows.front().temperature, 10);
  EXPECT_EQ(r.rows.back().temperature, 1);
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    EXPECT_LE(r.rows[i].temperature, r.rows[i - 1].temperature);
    EXPECT_GE(r.rows[i].phi_teacher, r.rows[i - 1].phi_teacher);
    EXPECT_GE(r.rows[i].psi, r.rows[i - 1].psi);
  }
  EXPECT_EQ(r.rows[19].psi, 0.5);
  EXPECT_EQ(r.rows[20].psi, 1.0);
}

TEST_F(Training, ContinuationAllFrozenReducesToScratch) {
  DistillConfig c = base_config(Method::continuation, 8);
  c.loss.margin = 0.0;
  c.freeze = {1.0, 1.0, 1.0};
  const RunRecord k = train_continuation(student_net(3, 4), TeacherSource{*teacher_}, splits_->train, splits_->val, c);
  const RunRecord s = train_scratch(student_net(3, 4), splits_->train, splits_->val, base_config(Method::scratch, 8));
  expect_same_record(k, s);
  for (const EpochRow& row : k.rows) {
    EXPECT_EQ(row.phi_teacher, 1.0);
    EXPECT_EQ(row.phi_margin, 1.0);
    EXPECT_EQ(row.psi, 1.0);
  }
}

TEST_F(Training, ContinuationFreezeFlagsAreIndependent) {
  DistillConfig c = base_config(Method::continuation, 10);
  c.loss.margin = 0.2;
  c.freeze.psi = 0.5;
  c.freeze.phi_margin = 1.0;
  const RunRecord r = train_continuation(student_net(3, 4), TeacherSource{*teacher_}, splits_->train, splits_->val, c);
  EXPECT_EQ(r.rows.front().phi_teacher, 0.2);
  EXPECT_EQ(r.rows.back().phi_teacher, 1.0);
  for (const EpochRow& row : r.rows) {
    EXPECT_EQ(row.psi, 0.5);
    EXPECT_EQ(row.phi_margin, 1.0);
  }
}

TEST_F(Training, ContinuousAnnealingMatchesContinuationWithStepPsi) {
  const int n = 12, k = 7;
  DistillConfig cont = base_config(Method::continuation, n);
  cont.loss.margin = 0.0;
  cont.psi_spec = PsiSpec{PsiStep{k}, n};
  DistillConfig ann = base_config(Method::annealing, n);
  ann.annealing = {k, n - k, AnnealingProtocol::continuous};
  const RunRecord a = train_continuation(student_net(3, 4), TeacherSource{*teacher_}, splits_->train, splits_->val, cont);
  const RunRecord b = train_annealing(student_net(3, 4), TeacherSource{*teacher_}, splits_->train, splits_->val, ann);
  expect_same_record(a, b);
  EXPECT_EQ(column(a, &EpochRow::phi_teacher), column(b, &EpochRow::phi_teacher));
  EXPECT_EQ(column(a, &EpochRow::psi), column(b, &EpochRow::psi));
}

TEST_F(Training, TwoStageAnnealingProtocol) {
  DistillConfig c = base_config(Method::annealing, 16);
  c.annealing = {10, 6, AnnealingProtocol::two_stage};
  const RunRecord r = train_annealing(student_net(3, 4), TeacherSource{*teacher_}, splits_->train, splits_->val, c);
  ASSERT_EQ(r.rows.size(), 16u);
  EXPECT_EQ(r.rows[0].phi_teacher, 1.0 / 5.0);
  EXPECT_EQ(r.rows[0].psi, 0.0);
  EXPECT_EQ(r.rows[9].phi_teacher, 1.0);
  EXPECT_EQ(r.rows[10].psi, 1.0);
  EXPECT_GT(r.best_epoch, 10);

  // With no stage 2 the result is the stage-1 best checkpoint, and stage 1
  // itself is unaffected by what follows.
  DistillConfig s1 = c;
  s1.annealing = {10, 0, AnnealingProtocol::two_stage};
  s1.epochs = 10;
  const RunRecord stage1 = train_annealing(student_net(3, 4), TeacherSource{*teacher_}, splits_->train, splits_->val, s1);
  EXPECT_EQ(stage1.final_network.flat_params(), stage1.best_checkpoint.flat_params());
  for (int e = 0; e < 10; ++e) EXPECT_EQ(stage1.rows[e].train_loss, r.rows[e].train_loss);
}

TEST_F(Training, AnnealingWithoutStageOneEqualsScratch) {
  DistillConfig c = base_config(Method::annealing, 6);
  c.annealing = {0, 6, AnnealingProtocol::two_stage};
  const RunRecord a = train_annealing(student_net(3, 4), TeacherSource{*teacher_}, splits_->train, splits_->val, c);
  const RunRecord s = train_scratch(student_net(3, 4), splits_->train, splits_->val, base_config(Method::scratch, 6));
  expect_same_record(a, s);
}

TEST_F(Training, TakdRecordsBothHops) {
  DistillConfig c = base_config(Method::takd, 4);
  const std::vector<std::size_t> ta_hidden{16};
  const Network ta = init_network(mlp_spec(2, ta_hidden, 3, Activation::tanh), 8);
  const TakdResult r = train_takd(TeacherSource{*teacher_}, ta, student_net(3, 4), splits_->train, splits_->val, c);
  EXPECT_EQ(r.ta.rows.size(), 4u);
  EXPECT_EQ(r.student.rows.size(), 4u);
  EXPECT_GE(r.ta.best_epoch, 1);
  EXPECT_GE(r.student.best_epoch, 1);
  EXPECT_THROW(train_takd(TeacherSource{*teacher_}, std::nullopt, student_net(3, 4), splits_->train, splits_->val, c),
               ConfigError);
  EXPECT_THROW(train_takd(TeacherSource{*teacher_}, student_net(3, 5), student_net(3, 4), splits_->train, splits_->val, c),
               ConfigError);
}

TEST_F(Training, TakdWithTeacherSizedTaTracksTeacher) {
  // TA with the teacher's own architecture, pure KD at tau = 1: the TA should
  // match or beat a TA trained by plain Vanilla-KD at the default mix.
  DistillConfig c = base_config(Method::takd, 6);
  c.loss.lambda = 0.0;
  c.loss.tau = 1.0;
  const std::vector<std::size_t> hidden{32, 31};
  const Network ta = init_network(mlp_spec(2, hidden, 3, Activation::relu), 8);
  const TakdResult r = train_takd(TeacherSource{*teacher_}, ta, student_net(3, 4), splits_->train, splits_->val, c);
  DistillConfig v = base_config(Method::vanilla, 6);
  const RunRecord baseline = train_vanilla(ta, TeacherSource{*teacher_}, splits_->train, splits_->val, v);
  EXPECT_GE(r.ta.best_metric, baseline.best_metric);
}

TEST_F(Training, NonFiniteLossAbortsWithEpoch) {
  DistillConfig c = base_config(Method::scratch, 3);
  c.optimizer.learning_rate = 1e6;
  try {
    train_scratch(student_net(3, 4), splits_->train, splits_->val, c);
    SUCCEED();
  } catch (const NumericError& e) {
    EXPECT_GE(e.epoch(), 1);
  }
}
