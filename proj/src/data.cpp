#include "ckd/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ckd/binary_io.hpp"
#include "ckd/errors.hpp"
#include "ckd/format.hpp"

namespace ckd {

namespace {

constexpr io::Magic kDatasetMagic{'C', 'K', 'D', 'D', 'A', 'T', 'A', '\0'};

}  // namespace

std::string_view to_string(TaskKind kind) {
  return kind == TaskKind::classification ? "classification" : "regression";
}

std::optional<std::string> Dataset::meta(std::string_view key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return v;
  }
  return std::nullopt;
}

double Dataset::meta_double(std::string_view key) const {
  const auto text = meta(key);
  double v = 0.0;
  if (!text || !parse_double(*text, v)) {
    throw DomainError("dataset metadata lacks numeric '" + std::string(key) + "'");
  }
  return v;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.task = task;
  out.num_classes = num_classes;
  out.metadata = metadata;
  if (rows.empty()) return out;
  out.inputs = Tensor(rows.size(), dim());
  if (task == TaskKind::regression) out.targets = Tensor(rows.size(), 1);
  if (clean_targets) out.clean_targets = Tensor(rows.size(), 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    if (r >= size()) throw DomainError("subset: row " + std::to_string(r) + " out of range");
    std::copy_n(inputs.row_span(r).begin(), dim(), out.inputs.row_span(i).begin());
    if (task == TaskKind::regression) out.targets(i, 0) = targets(r, 0);
    if (task == TaskKind::classification) out.labels.push_back(labels[r]);
    if (clean_targets) (*out.clean_targets)(i, 0) = (*clean_targets)(r, 0);
  }
  return out;
}

void Dataset::validate() const {
  if (inputs.empty()) throw DomainError("dataset has no rows");
  if (!inputs.all_finite()) throw DomainError("dataset inputs contain non-finite values");
  if (task == TaskKind::classification) {
    if (labels.size() != size()) throw DomainError("dataset: label count differs from rows");
    if (num_classes < 2) throw DomainError("dataset: classification needs >= 2 classes");
    for (const std::size_t y : labels) {
      if (y >= num_classes) throw DomainError("dataset: label out of range");
    }
  } else {
    if (targets.rows() != size() || targets.cols() != 1) {
      throw DomainError("dataset: regression targets must be rows x 1");
    }
    if (!targets.all_finite()) throw DomainError("dataset targets contain non-finite values");
  }
  if (clean_targets && (clean_targets->rows() != size() || clean_targets->cols() != 1)) {
    throw DomainError("dataset: clean targets must be rows x 1");
  }
}

Dataset gen_noisy_sine(const NoisySineParams& p) {
  if (p.n_samples < 1) throw DomainError("noisy sine: n_samples must be >= 1");
  if (!(p.hi > p.lo)) throw DomainError("noisy sine: need hi > lo");
  if (!(p.noise_freq > p.base_freq)) throw DomainError("noisy sine: need noise_freq > base_freq");
  if (!(p.noise_amp >= 0.0)) throw DomainError("noisy sine: noise_amp must be >= 0");

  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> xdist(p.lo, p.hi);
  Dataset d;
  d.task = TaskKind::regression;
  d.inputs = Tensor(p.n_samples, 1);
  d.targets = Tensor(p.n_samples, 1);
  Tensor clean(p.n_samples, 1);
  for (std::size_t i = 0; i < p.n_samples; ++i) {
    const double x = xdist(rng);
    d.inputs(i, 0) = x;
    clean(i, 0) = std::sin(p.base_freq * x);
    d.targets(i, 0) = clean(i, 0) + p.noise_amp * std::sin(p.noise_freq * x);
  }
  d.clean_targets = std::move(clean);
  d.metadata = {{"generator", "noisy_sine"},
                {"n_samples", std::to_string(p.n_samples)},
                {"lo", format_double(p.lo)},
                {"hi", format_double(p.hi)},
                {"base_freq", format_double(p.base_freq)},
                {"noise_freq", format_double(p.noise_freq)},
                {"noise_amp", format_double(p.noise_amp)},
                {"seed", std::to_string(p.seed)}};
  return d;
}

Dataset gen_gaussian_mixture(const GaussianMixtureParams& p) {
  if (p.n_classes < 2) throw DomainError("gaussian mixture: n_classes must be >= 2");
  if (p.dim < 1 || p.n_per_class < 1) throw DomainError("gaussian mixture: dim, n_per_class >= 1");
  if (!(p.spread > 0.0) || !(p.separation > 0.0)) {
    throw DomainError("gaussian mixture: spread and separation must be > 0");
  }

  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> means(p.n_classes, std::vector<double>(p.dim));
  for (auto& m : means) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : m) {
        v = normal(rng);
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& v : m) v = v / norm * p.separation;
  }

  Dataset d;
  d.task = TaskKind::classification;
  d.num_classes = p.n_classes;
  const std::size_t rows = p.n_classes * p.n_per_class;
  d.inputs = Tensor(rows, p.dim);
  d.labels.resize(rows);
  std::size_t r = 0;
  for (std::size_t c = 0; c < p.n_classes; ++c) {
    for (std::size_t k = 0; k < p.n_per_class; ++k, ++r) {
      for (std::size_t j = 0; j < p.dim; ++j) d.inputs(r, j) = means[c][j] + p.spread * normal(rng);
      d.labels[r] = c;
    }
  }
  d.metadata = {{"generator", "gaussian_mixture"},
                {"n_classes", std::to_string(p.n_classes)},
                {"dim", std::to_string(p.dim)},
                {"n_per_class", std::to_string(p.n_per_class)},
                {"spread", format_double(p.spread)},
                {"separation", format_double(p.separation)},
                {"seed", std::to_string(p.seed)}};
  return d;
}

Splits split(const Dataset& data, std::array<double, 3> fractions, std::uint64_t seed) {
  double total = 0.0;
  for (const double f : fractions) {
    if (!(f > 0.0)) throw DomainError("split: fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("split: fractions must sum to 1");

  const std::size_t n = data.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw DomainError("split: " + std::to_string(n) + " rows leave an empty partition");
  }

  const std::array<std::pair<std::size_t, std::size_t>, 3> ranges{
      std::pair{std::size_t{0}, n_train}, std::pair{n_train, n_train + n_val},
      std::pair{n_train + n_val, n}};
  const std::array<const char*, 3> names{"train", "val", "test"};
  std::array<Dataset, 3> parts;
  for (std::size_t s = 0; s < 3; ++s) {
    const std::span<const std::size_t> rows(perm.data() + ranges[s].first,
                                            ranges[s].second - ranges[s].first);
    parts[s] = data.subset(rows);
    parts[s].parent_indices.assign(rows.begin(), rows.end());
    parts[s].metadata.emplace_back("split", names[s]);
    parts[s].metadata.emplace_back("split_seed", std::to_string(seed));
    parts[s].metadata.emplace_back("parent_rows", std::to_string(n));
  }
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  data.validate();
  io::Writer w(kDatasetMagic, kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(data.task));
  w.u64(data.size());
  w.u64(data.dim());
  w.u64(data.num_classes);
  w.u32(data.clean_targets ? 1 : 0);
  w.u64(data.metadata.size());
  for (const auto& [k, v] : data.metadata) {
    w.string(k);
    w.string(v);
  }
  w.u64(data.parent_indices.size());
  for (const std::size_t i : data.parent_indices) w.u64(i);
  w.f64s(data.inputs.data());
  if (data.task == TaskKind::regression) {
    w.f64s(data.targets.data());
  } else {
    for (const std::size_t y : data.labels) w.u64(y);
  }
  if (data.clean_targets) w.f64s(data.clean_targets->data());
  w.save(path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  io::Reader r(path, kDatasetMagic, kDatasetVersion, "dataset");
  Dataset d;
  const std::uint32_t task = r.u32();
  if (task > 1) throw FormatError("dataset: unknown task kind " + std::to_string(task));
  d.task = static_cast<TaskKind>(task);
  const std::uint64_t rows = r.u64();
  const std::uint64_t dim = r.u64();
  d.num_classes = r.u64();
  const bool has_clean = r.u32() != 0;
  if (rows == 0 || dim == 0) throw FormatError("dataset: empty shape");
  const std::uint64_t n_meta = r.u64();
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    std::string k = r.string();
    std::string v = r.string();
    d.metadata.emplace_back(std::move(k), std::move(v));
  }
  const std::uint64_t n_parent = r.u64();
  if (n_parent > rows) throw FormatError("dataset: parent index count exceeds rows");
  for (std::uint64_t i = 0; i < n_parent; ++i) d.parent_indices.push_back(r.u64());
  d.inputs = Tensor(rows, dim, r.f64s(rows * dim));
  if (d.task == TaskKind::regression) {
    d.targets = Tensor(rows, 1, r.f64s(rows));
  } else {
    for (std::uint64_t i = 0; i < rows; ++i) d.labels.push_back(r.u64());
  }
  if (has_clean) d.clean_targets = Tensor(rows, 1, r.f64s(rows));
  r.expect_end();
  try {
    d.validate();
  } catch (const DomainError& e) {
    throw FormatError(std::string("dataset: ") + e.what());
  }
  return d;
}

}  // namespace ckd
