#include <gtest/gtest.h>

#include "ckd/config.hpp"
#include "ckd/errors.hpp"

using namespace ckd;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsNeedMarginForContinuation) {
  EXPECT_NE(error_of("").find("method.margin"), std::string::npos);
  const RunConfig c = parse_config("[method]\nmargin = 0.5\n");
  EXPECT_EQ(c.distill.method, Method::continuation);
  EXPECT_EQ(c.distill.epochs, 30);
  EXPECT_EQ(c.distill.t_max, 10);
  EXPECT_EQ(c.distill.loss.lambda, 0.5);
  EXPECT_EQ(c.distill.loss.tau, 2.0);
  EXPECT_EQ(c.distill.optimizer.momentum, 0.9);
  EXPECT_EQ(c.model.student_hidden, (std::vector<std::size_t>{16, 16}));
  EXPECT_EQ(c.model.teacher_hidden, (std::vector<std::size_t>{256, 256}));
  EXPECT_EQ(c.model.ta_hidden, (std::vector<std::size_t>{64, 64}));
  EXPECT_EQ(c.data_seed(), 0u);
  const auto* ramp = std::get_if<PsiCappedRamp>(&c.distill.psi_spec.kind);
  ASSERT_NE(ramp, nullptr);
  EXPECT_EQ(ramp->denominator, 22.5);
  EXPECT_EQ(ramp->cutover, 23);
}

TEST(Config, UnknownKeysAndSectionsRejected) {
  EXPECT_NE(error_of("[method]\nmargin = 1\nmargn = 2\n").find("method.margn"), std::string::npos);
  EXPECT_NE(error_of("[methods]\nname = scratch\n").find("methods"), std::string::npos);
  EXPECT_NE(error_of("stray = 1\n").find("stray"), std::string::npos);
}

TEST(Config, MalformedValuesNameTheKey) {
  EXPECT_NE(error_of("[method]\nname = scratch\nepochs = ten\n").find("method.epochs"), std::string::npos);
  EXPECT_NE(error_of("[method]\nname = scratch\n[optimizer]\nlearning_rate = -1\n").find("optimizer.learning_rate"),
            std::string::npos);
  EXPECT_NE(error_of("[method]\nname = magic\n").find("method.name"), std::string::npos);
  EXPECT_NE(error_of("[method]\nname = scratch\n[data]\nsplit = 0.5,0.5\n").find("data.split"), std::string::npos);
  EXPECT_NE(error_of("[method]\nname = scratch\n[model]\nstudent_hidden = 4,0\n").find("model.student_hidden"),
            std::string::npos);
  EXPECT_FALSE(error_of("[method\nname = scratch\n").empty());
}

TEST(Config, InvalidCombinations) {
  EXPECT_NE(error_of("[method]\nmargin = 1\nepochs = 5\n").find("schedule.t_max"), std::string::npos);
  EXPECT_NE(error_of("[method]\nname = vanilla\nfreeze_psi = 0.5\n").find("freeze"), std::string::npos);
  EXPECT_NE(error_of("[method]\nname = vanilla\n[model]\nteacher = tabulated\n").find("model.teacher"),
            std::string::npos);
  EXPECT_NE(error_of("[method]\nname = scratch\n[model]\nteacher = checkpoint\n").find("model.teacher_checkpoint"),
            std::string::npos);
  EXPECT_FALSE(error_of("[method]\nname = annealing\nepochs = 20\nannealing_stage1_epochs = 25\n").empty());
}

TEST(Config, CanonicalTextRoundTrips) {
  const std::string text =
      "[data]\ngenerator = noisy_sine\nnoise_freq = 7.5\nsplit = 0.7, 0.2, 0.1\n"
      "[model]\nactivation = tanh\nteacher = tabulated\nstudent_hidden = 128,128\n"
      "[method]\nname = continuation\nmargin = 0.1\nepochs = 40\nseed = 9\nfreeze_psi = 0.25\n"
      "[schedule]\npsi = step\npsi_step = 12\nt_max = 8\n"
      "[optimizer]\nlearning_rate = 0.03\n"
      "[output]\nroot = somewhere\n";
  const RunConfig c = parse_config(text);
  const std::string canonical = to_ini(c);
  EXPECT_EQ(to_ini(parse_config(canonical)), canonical);
  EXPECT_EQ(config_hash(parse_config(canonical)), config_hash(c));
  EXPECT_EQ(c.data_seed(), 9u);
  EXPECT_EQ(*c.distill.freeze.psi, 0.25);
  EXPECT_EQ(c.data.sine.noise_freq, 7.5);
}

TEST(Config, HashIgnoresOutputSectionButNotTraining) {
  const RunConfig a = parse_config("[method]\nmargin = 1\n[output]\nroot = x\n");
  const RunConfig b = parse_config("[method]\nmargin = 1\n[output]\nroot = y\n");
  const RunConfig c = parse_config("[method]\nmargin = 2\n");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(c));
  EXPECT_EQ(config_hash(a).size(), 8u);
}

TEST(Config, ReferenceListsEveryKey) {
  const std::string ref = config_reference();
  for (const char* key : {"[data]", "[model]", "[method]", "[schedule]", "[optimizer]", "[output]", "margin",
                          "freeze_phi_margin", "psi_cutover", "report_grid", "noise_amp", "ta_hidden"}) {
    EXPECT_NE(ref.find(key), std::string::npos) << key;
  }
}
