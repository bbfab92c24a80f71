#include "ckd/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ckd/binary_io.hpp"
#include "ckd/errors.hpp"
#include "ckd/format.hpp"

namespace ckd {

namespace {

namespace pt = boost::property_tree;

struct KeyDoc {
  const char* key;
  const char* fallback;
  const char* help;
};

struct SectionDoc {
  const char* name;
  std::vector<KeyDoc> keys;
};

// The single source of truth for accepted keys and their documentation.
const std::vector<SectionDoc>& schema() {
  static const std::vector<SectionDoc> s{
      {"data",
       {{"generator", "gaussian_mixture", "gaussian_mixture | noisy_sine"},
        {"seed", "method.seed", "generator and split seed"},
        {"split", "0.8,0.1,0.1", "train,val,test fractions (positive, sum 1)"},
        {"n_samples", "3000", "noisy_sine: number of samples"},
        {"x_lo", "-pi", "noisy_sine: lower end of the input range"},
        {"x_hi", "pi", "noisy_sine: upper end of the input range"},
        {"base_freq", "1", "noisy_sine: frequency of the clean sinusoid"},
        {"noise_freq", "20", "noisy_sine: frequency of the additive noise sinusoid"},
        {"noise_amp", "0.3", "noisy_sine: amplitude of the noise sinusoid"},
        {"n_classes", "10", "gaussian_mixture: number of classes"},
        {"dim", "2", "gaussian_mixture: feature dimension"},
        {"n_per_class", "100", "gaussian_mixture: samples per class"},
        {"spread", "1", "gaussian_mixture: per-class standard deviation"},
        {"separation", "3", "gaussian_mixture: radius of the sphere holding class means"}}},
      {"model",
       {{"student_hidden", "16,16", "student hidden layer widths"},
        {"activation", "relu", "hidden activation for every network: relu | tanh | identity"},
        {"teacher", "trained", "trained | checkpoint | tabulated (regression: the noisy function)"},
        {"teacher_hidden", "256,256", "teacher hidden widths when teacher = trained"},
        {"teacher_epochs", "30", "epochs of scratch training for teacher = trained"},
        {"teacher_checkpoint", "", "checkpoint path when teacher = checkpoint"},
        {"ta_hidden", "64,64", "teacher-assistant hidden widths (takd); empty = none"}}},
      {"method",
       {{"name", "continuation", "scratch | vanilla | takd | annealing | continuation"},
        {"epochs", "30", "training epochs n"},
        {"batch_size", "32", "mini-batch size"},
        {"seed", "0", "run seed: initialization and per-epoch shuffles"},
        {"lambda", "0.5", "Vanilla-KD weight of the hard-label term"},
        {"tau", "2", "Vanilla-KD softening temperature"},
        {"margin", "(required for continuation)", "hinge margin m"},
        {"annealing_stage1_epochs", "epochs/2", "Annealing-KD stage-1 length k"},
        {"annealing_protocol", "two_stage", "two_stage | continuous"},
        {"freeze_psi", "(dynamic)", "constant replacing psi"},
        {"freeze_phi_teacher", "(dynamic)", "constant replacing phi on the teacher logits"},
        {"freeze_phi_margin", "(dynamic)", "constant replacing phi on the margin"},
        {"ablate_psi", "0.5", "psi used by ablation arms that freeze psi"},
        {"ablate_coefficient", "1", "phi coefficient used by ablation arms that freeze phi"}}},
      {"schedule",
       {{"t_max", "10", "maximum temperature of the ladder"},
        {"psi", "capped_ramp", "step | capped_ramp | constant"},
        {"psi_step", "epochs/2", "step: last epoch with psi = 0"},
        {"psi_denominator", "0.75*epochs", "capped_ramp: psi = i / denominator"},
        {"psi_cutover", "round(0.75*epochs)", "capped_ramp: psi = 1 after this epoch"},
        {"psi_value", "0.5", "constant: psi value"}}},
      {"optimizer",
       {{"learning_rate", "0.05", "SGD learning rate"},
        {"momentum", "0.9", "SGD momentum"}}},
      {"output",
       {{"root", "", "output root (overridden by --out; empty: $CKD_OUTPUT_ROOT or runs)"},
        {"report_grid", "1000", "grid size of the smoothness report"}}},
  };
  return s;
}

using Values = std::map<std::string, std::string>;  // "section.key" -> raw text

Values read_values(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.message() + " (line " +
                      std::to_string(e.line()) + ")");
  }
  Values values;
  for (const auto& [section, body] : tree) {
    const SectionDoc* doc = nullptr;
    for (const auto& s : schema()) {
      if (section == s.name) doc = &s;
    }
    if (body.empty()) throw ConfigError("unknown top-level key '" + section + "'");
    if (!doc) throw ConfigError("unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      bool known = false;
      for (const auto& k : doc->keys) known = known || key == k.key;
      if (!known) throw ConfigError("unknown key '" + section + "." + key + "'");
      if (!value.empty()) throw ConfigError("nested value under '" + section + "." + key + "'");
      values[section + "." + key] = value.data();
    }
  }
  return values;
}

class Reader {
 public:
  explicit Reader(Values v) : values_(std::move(v)) {}

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string str(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double real(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    double v = 0.0;
    if (!parse_double(values_.at(key), v) || !std::isfinite(v)) fail(key, "a finite number");
    return v;
  }

  std::optional<double> opt_real(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return real(key, 0.0);
  }

  long long integer(const std::string& key, long long fallback) const {
    if (!has(key)) return fallback;
    const std::string& s = values_.at(key);
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail(key, "an integer");
    return v;
  }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string& s = values_.at(key);
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail(key, "an unsigned integer");
    return v;
  }

  std::size_t count(const std::string& key, std::size_t fallback, std::size_t min = 1) const {
    const long long v = integer(key, static_cast<long long>(fallback));
    if (v < static_cast<long long>(min)) fail(key, ">= " + std::to_string(min));
    return static_cast<std::size_t>(v);
  }

  std::vector<std::size_t> widths(const std::string& key, std::vector<std::size_t> fallback) const {
    if (!has(key)) return fallback;
    std::vector<std::size_t> out;
    for (const std::string& part : split_list(values_.at(key))) {
      std::size_t v = 0;
      const auto res = std::from_chars(part.data(), part.data() + part.size(), v);
      if (res.ec != std::errc() || res.ptr != part.data() + part.size() || v == 0) {
        fail(key, "a comma-separated list of positive integers");
      }
      out.push_back(v);
    }
    return out;
  }

  std::vector<double> reals(const std::string& key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    for (const std::string& part : split_list(values_.at(key))) {
      double v = 0.0;
      if (!parse_double(part, v)) fail(key, "a comma-separated list of numbers");
      out.push_back(v);
    }
    return out;
  }

  [[noreturn]] static void fail(const std::string& key, const std::string& expected) {
    throw ConfigError("config key '" + key + "' must be " + expected);
  }

 private:
  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    for (const char c : s) {
      if (c == ',') {
        parts.push_back(cur);
        cur.clear();
      } else if (c != ' ') {
        cur += c;
      }
    }
    if (!cur.empty() || !parts.empty()) parts.push_back(cur);
    return parts;
  }

  Values values_;
};

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string_view to_string(TeacherKind k) {
  switch (k) {
    case TeacherKind::trained:
      return "trained";
    case TeacherKind::checkpoint:
      return "checkpoint";
    case TeacherKind::tabulated:
      return "tabulated";
  }
  return "?";
}

TeacherKind parse_teacher_kind(const std::string& s) {
  if (s == "trained") return TeacherKind::trained;
  if (s == "checkpoint") return TeacherKind::checkpoint;
  if (s == "tabulated") return TeacherKind::tabulated;
  throw ConfigError("config key 'model.teacher' must be trained, checkpoint or tabulated");
}

template <typename F>
auto rethrow_as_config(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  if (data.generator != "gaussian_mixture" && data.generator != "noisy_sine") {
    throw ConfigError("config key 'data.generator' must be gaussian_mixture or noisy_sine");
  }
  double total = 0.0;
  for (const double f : data.split) {
    if (!(f > 0.0)) throw ConfigError("config key 'data.split' fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("config key 'data.split' must sum to 1");

  const bool regression = data.generator == "noisy_sine";
  if (regression) {
    if (!(data.sine.hi > data.sine.lo)) throw ConfigError("config key 'data.x_hi' must exceed data.x_lo");
    if (!(data.sine.noise_freq > data.sine.base_freq)) {
      throw ConfigError("config key 'data.noise_freq' must exceed data.base_freq");
    }
    if (!(data.sine.noise_amp >= 0.0)) throw ConfigError("config key 'data.noise_amp' must be >= 0");
  } else {
    if (data.mixture.n_classes < 2) throw ConfigError("config key 'data.n_classes' must be >= 2");
    if (!(data.mixture.spread > 0.0)) throw ConfigError("config key 'data.spread' must be > 0");
    if (!(data.mixture.separation > 0.0)) throw ConfigError("config key 'data.separation' must be > 0");
  }

  if (model.teacher == TeacherKind::tabulated && !regression) {
    throw ConfigError("config key 'model.teacher': tabulated teachers need data.generator = noisy_sine");
  }
  if (model.teacher == TeacherKind::checkpoint && model.teacher_checkpoint.empty()) {
    throw ConfigError("config key 'model.teacher_checkpoint' is required when model.teacher = checkpoint");
  }
  if (model.teacher == TeacherKind::trained && model.teacher_epochs < 1) {
    throw ConfigError("config key 'model.teacher_epochs' must be >= 1");
  }
  if (distill.method == Method::takd) {
    if (model.ta_hidden.empty()) throw ConfigError("config key 'model.ta_hidden' is required for takd");
    if (model.teacher == TeacherKind::tabulated) {
      throw ConfigError("config key 'model.teacher': takd needs a network teacher");
    }
  }
  if (!(ablation.psi >= 0.0 && ablation.psi <= 1.0)) {
    throw ConfigError("config key 'method.ablate_psi' must be in [0, 1]");
  }
  if (!(ablation.coefficient >= 0.0 && ablation.coefficient <= 1.0)) {
    throw ConfigError("config key 'method.ablate_coefficient' must be in [0, 1]");
  }
  if (output.report_grid < 8) throw ConfigError("config key 'output.report_grid' must be >= 8");
  distill.validate();
}

RunConfig parse_config(const std::string& text) {
  const Reader r(read_values(text));
  RunConfig c;

  // [method] first: several defaults depend on epochs.
  DistillConfig& d = c.distill;
  d.method = rethrow_as_config("method.name", [&] { return parse_method(r.str("method.name", "continuation")); });
  d.epochs = static_cast<int>(r.integer("method.epochs", 30));
  if (d.epochs < 0) Reader::fail("method.epochs", ">= 0");
  d.batch_size = r.count("method.batch_size", 32);
  d.seed = r.u64("method.seed", 0);
  d.loss.lambda = r.real("method.lambda", 0.5);
  d.loss.tau = r.real("method.tau", 2.0);
  if (d.method == Method::continuation && !r.has("method.margin")) {
    throw ConfigError("config key 'method.margin' is required for continuation");
  }
  d.loss.margin = r.real("method.margin", 0.0);
  d.annealing.stage1_epochs =
      static_cast<int>(r.integer("method.annealing_stage1_epochs", d.epochs / 2));
  d.annealing.stage2_epochs = d.epochs - d.annealing.stage1_epochs;
  d.annealing.protocol = rethrow_as_config("method.annealing_protocol", [&] {
    return parse_annealing_protocol(r.str("method.annealing_protocol", "two_stage"));
  });
  d.freeze.psi = r.opt_real("method.freeze_psi");
  d.freeze.phi_teacher = r.opt_real("method.freeze_phi_teacher");
  d.freeze.phi_margin = r.opt_real("method.freeze_phi_margin");
  c.ablation.psi = r.real("method.ablate_psi", 0.5);
  c.ablation.coefficient = r.real("method.ablate_coefficient", 1.0);

  d.t_max = static_cast<int>(r.integer("schedule.t_max", 10));
  const std::string psi_kind = r.str("schedule.psi", "capped_ramp");
  d.psi_spec.n = d.epochs;
  if (psi_kind == "step") {
    d.psi_spec.kind = PsiStep{static_cast<int>(r.integer("schedule.psi_step", d.epochs / 2))};
  } else if (psi_kind == "capped_ramp") {
    const double denom = r.real("schedule.psi_denominator", 0.75 * d.epochs);
    const auto cut = r.integer("schedule.psi_cutover", std::llround(0.75 * d.epochs));
    d.psi_spec.kind = PsiCappedRamp{denom, static_cast<int>(cut)};
  } else if (psi_kind == "constant") {
    d.psi_spec.kind = PsiConstant{r.real("schedule.psi_value", 0.5)};
  } else {
    throw ConfigError("config key 'schedule.psi' must be step, capped_ramp or constant");
  }
  if (d.epochs >= 1) {
    try {
      d.psi_spec.validate();
    } catch (const DomainError& e) {
      throw ConfigError(std::string("config key 'schedule.psi': ") + e.what());
    }
  }

  d.optimizer.learning_rate = r.real("optimizer.learning_rate", 0.05);
  d.optimizer.momentum = r.real("optimizer.momentum", 0.9);

  c.data.generator = r.str("data.generator", "gaussian_mixture");
  if (r.has("data.seed")) c.data.seed = r.u64("data.seed", 0);
  const auto fractions = r.reals("data.split", {0.8, 0.1, 0.1});
  if (fractions.size() != 3) Reader::fail("data.split", "three comma-separated fractions");
  c.data.split = {fractions[0], fractions[1], fractions[2]};
  c.data.sine.n_samples = r.count("data.n_samples", 3000);
  c.data.sine.lo = r.real("data.x_lo", -std::numbers::pi);
  c.data.sine.hi = r.real("data.x_hi", std::numbers::pi);
  c.data.sine.base_freq = r.real("data.base_freq", 1.0);
  c.data.sine.noise_freq = r.real("data.noise_freq", 20.0);
  c.data.sine.noise_amp = r.real("data.noise_amp", 0.3);
  c.data.mixture.n_classes = r.count("data.n_classes", 10);
  c.data.mixture.dim = r.count("data.dim", 2);
  c.data.mixture.n_per_class = r.count("data.n_per_class", 100);
  c.data.mixture.spread = r.real("data.spread", 1.0);
  c.data.mixture.separation = r.real("data.separation", 3.0);

  c.model.student_hidden = r.widths("model.student_hidden", {16, 16});
  c.model.activation =
      rethrow_as_config("model.activation", [&] { return parse_activation(r.str("model.activation", "relu")); });
  c.model.teacher = parse_teacher_kind(r.str("model.teacher", "trained"));
  c.model.teacher_hidden = r.widths("model.teacher_hidden", {256, 256});
  c.model.teacher_epochs = static_cast<int>(r.integer("model.teacher_epochs", 30));
  c.model.teacher_checkpoint = r.str("model.teacher_checkpoint", "");
  c.model.ta_hidden = r.widths("model.ta_hidden", {64, 64});

  c.output.root = r.str("output.root", "");
  c.output.report_grid = r.count("output.report_grid", 1000);

  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

namespace {

std::string canonical_body(const RunConfig& c, bool with_output) {
  const DistillConfig& d = c.distill;
  std::ostringstream o;
  auto kv = [&](const char* k, const std::string& v) { o << k << " = " << v << '\n'; };
  auto real = [&](const char* k, double v) { kv(k, format_double(v)); };

  o << "[data]\n";
  kv("generator", c.data.generator);
  kv("seed", std::to_string(c.data_seed()));
  kv("split", format_double(c.data.split[0]) + "," + format_double(c.data.split[1]) + "," +
                  format_double(c.data.split[2]));
  if (c.data.generator == "noisy_sine") {
    kv("n_samples", std::to_string(c.data.sine.n_samples));
    real("x_lo", c.data.sine.lo);
    real("x_hi", c.data.sine.hi);
    real("base_freq", c.data.sine.base_freq);
    real("noise_freq", c.data.sine.noise_freq);
    real("noise_amp", c.data.sine.noise_amp);
  } else {
    kv("n_classes", std::to_string(c.data.mixture.n_classes));
    kv("dim", std::to_string(c.data.mixture.dim));
    kv("n_per_class", std::to_string(c.data.mixture.n_per_class));
    real("spread", c.data.mixture.spread);
    real("separation", c.data.mixture.separation);
  }

  o << "\n[model]\n";
  kv("student_hidden", join(c.model.student_hidden));
  kv("activation", std::string(to_string(c.model.activation)));
  kv("teacher", std::string(to_string(c.model.teacher)));
  kv("teacher_hidden", join(c.model.teacher_hidden));
  kv("teacher_epochs", std::to_string(c.model.teacher_epochs));
  kv("teacher_checkpoint", c.model.teacher_checkpoint);
  kv("ta_hidden", join(c.model.ta_hidden));

  o << "\n[method]\n";
  kv("name", std::string(to_string(d.method)));
  kv("epochs", std::to_string(d.epochs));
  kv("batch_size", std::to_string(d.batch_size));
  kv("seed", std::to_string(d.seed));
  real("lambda", d.loss.lambda);
  real("tau", d.loss.tau);
  real("margin", d.loss.margin);
  kv("annealing_stage1_epochs", std::to_string(d.annealing.stage1_epochs));
  kv("annealing_protocol", std::string(to_string(d.annealing.protocol)));
  if (d.freeze.psi) real("freeze_psi", *d.freeze.psi);
  if (d.freeze.phi_teacher) real("freeze_phi_teacher", *d.freeze.phi_teacher);
  if (d.freeze.phi_margin) real("freeze_phi_margin", *d.freeze.phi_margin);
  real("ablate_psi", c.ablation.psi);
  real("ablate_coefficient", c.ablation.coefficient);

  o << "\n[schedule]\n";
  kv("t_max", std::to_string(d.t_max));
  if (const auto* s = std::get_if<PsiStep>(&d.psi_spec.kind)) {
    kv("psi", "step");
    kv("psi_step", std::to_string(s->k_switch));
  } else if (const auto* ramp = std::get_if<PsiCappedRamp>(&d.psi_spec.kind)) {
    kv("psi", "capped_ramp");
    real("psi_denominator", ramp->denominator);
    kv("psi_cutover", std::to_string(ramp->cutover));
  } else if (const auto* k = std::get_if<PsiConstant>(&d.psi_spec.kind)) {
    kv("psi", "constant");
    real("psi_value", k->value);
  }

  o << "\n[optimizer]\n";
  real("learning_rate", d.optimizer.learning_rate);
  real("momentum", d.optimizer.momentum);

  if (with_output) {
    o << "\n[output]\n";
    kv("root", c.output.root);
    kv("report_grid", std::to_string(c.output.report_grid));
  }
  return o.str();
}

}  // namespace

std::string to_ini(const RunConfig& config) { return canonical_body(config, true); }

std::string config_hash(const RunConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(io::fnv1a64(canonical_body(config, false))));
  return std::string(buf, 8);
}

std::string config_reference() {
  std::ostringstream o;
  o << "; Run configuration reference. Unknown sections or keys are rejected.\n";
  for (const auto& s : schema()) {
    o << "\n[" << s.name << "]\n";
    for (const auto& k : s.keys) {
      o << "; " << k.help << "\n";
      o << "; " << k.key << " = " << k.fallback << "\n";
    }
  }
  return o.str();
}

}  // namespace ckd
