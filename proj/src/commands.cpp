#include "ckd/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "ckd/binary_io.hpp"
#include "ckd/errors.hpp"
#include "ckd/format.hpp"
#include "ckd/gradcheck_suite.hpp"

namespace ckd {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot write " + tmp.string());
    f << text;
    if (!f.flush()) throw FormatError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Maps toolkit exceptions onto exit codes with a one-line diagnostic.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "filesystem error: " << e.what() << '\n';
    return kExitConfig;
  }
}

std::size_t output_width(const Dataset& data) {
  return data.task == TaskKind::classification ? data.num_classes : 1;
}

std::string teacher_key(const RunConfig& c, const Dataset& full) {
  std::ostringstream key;
  for (const auto& [k, v] : full.metadata) key << k << '=' << v << ';';
  for (const double f : c.data.split) key << format_double(f) << ',';
  const std::vector<std::size_t>& h = c.model.teacher_hidden;
  key << "|hidden=";
  for (const std::size_t w : h) key << w << ',';
  key << "|act=" << to_string(c.model.activation) << "|epochs=" << c.model.teacher_epochs
      << "|batch=" << c.distill.batch_size << "|lr=" << format_double(c.distill.optimizer.learning_rate)
      << "|mom=" << format_double(c.distill.optimizer.momentum) << "|seed=" << c.distill.seed;
  return key.str();
}

Network train_teacher(const RunConfig& c, const Splits& splits) {
  DistillConfig t = c.distill;
  t.method = Method::scratch;
  t.epochs = c.model.teacher_epochs;
  t.freeze = {};
  t.seed = derive_seed(c.distill.seed, "teacher");
  const auto spec = mlp_spec(splits.train.dim(), c.model.teacher_hidden, output_width(splits.train),
                             c.model.activation);
  return train_scratch(init_network(spec, t.seed), splits.train, splits.val, t).best_checkpoint;
}

std::string summary_line(const RunConfig& c, const RunOutput& r) {
  std::ostringstream s;
  s << "method=" << to_string(c.distill.method) << " seed=" << c.distill.seed
    << " best_epoch=" << r.record.best_epoch << " best_metric=" << format_double(r.record.best_metric)
    << " test_metric=" << format_double(r.test_metric);
  if (r.smoothness) {
    s << " mse_to_clean=" << format_double(r.smoothness->mse_to_clean)
      << " highfreq_energy=" << format_double(r.smoothness->highfreq_energy);
  }
  return s.str();
}

std::string csv_field(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

fs::path output_root(const std::optional<fs::path>& cli_out, const RunConfig& config) {
  if (cli_out && !cli_out->empty()) return *cli_out;
  if (!config.output.root.empty()) return config.output.root;
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) return env;
  return "runs";
}

std::string run_dir_name(const RunConfig& config) {
  return std::string(to_string(config.distill.method)) + "-seed" + std::to_string(config.distill.seed) +
         "-" + config_hash(config);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  return io::fnv1a64(std::to_string(seed) + "/" + std::string(tag));
}

Dataset make_dataset(const RunConfig& config) {
  if (config.data.generator == "noisy_sine") {
    NoisySineParams p = config.data.sine;
    p.seed = config.data_seed();
    return gen_noisy_sine(p);
  }
  GaussianMixtureParams p = config.data.mixture;
  p.seed = config.data_seed();
  return gen_gaussian_mixture(p);
}

std::string metrics_csv(std::span<const EpochRow> rows) {
  std::string out = "epoch,temperature,phi,psi,train_loss,val_metric,is_best\n";
  for (const EpochRow& r : rows) {
    out += std::to_string(r.epoch) + ',' + std::to_string(r.temperature) + ',' +
           format_double(r.phi_teacher) + ',' + format_double(r.psi) + ',' + format_double(r.train_loss) +
           ',' + format_double(r.val_metric) + ',' + (r.is_best ? "1" : "0") + '\n';
  }
  return out;
}

std::shared_ptr<const Network> TeacherCache::get(const std::string& key,
                                                 const std::function<Network()>& train) {
  std::shared_ptr<Slot> slot;
  {
    std::lock_guard lock(mutex_);
    auto& s = slots_[key];
    if (!s) s = std::make_shared<Slot>();
    slot = s;
  }
  std::call_once(slot->once, [&] { slot->net = std::make_shared<const Network>(train()); });
  return slot->net;
}

RunOutput execute_run(const RunConfig& config, const fs::path& root, TeacherCache* cache) {
  config.validate();
  const Dataset full = make_dataset(config);
  const Splits splits = split(full, config.data.split, config.data_seed());
  const std::size_t in = full.dim();
  const std::size_t width = output_width(full);

  std::optional<TeacherSource> teacher;
  if (config.distill.method != Method::scratch) {
    switch (config.model.teacher) {
      case TeacherKind::tabulated: {
        teacher = TeacherSource{TabulatedTeacher(full.inputs, full.targets)};
        break;
      }
      case TeacherKind::checkpoint: {
        Network net = load_network(config.model.teacher_checkpoint);
        if (net.in_dim() != in || net.out_dim() != width) {
          throw ConfigError("model.teacher_checkpoint maps " + std::to_string(net.in_dim()) + " -> " +
                            std::to_string(net.out_dim()) + ", data needs " + std::to_string(in) +
                            " -> " + std::to_string(width));
        }
        teacher = TeacherSource{std::move(net)};
        break;
      }
      case TeacherKind::trained: {
        auto train = [&] { return train_teacher(config, splits); };
        teacher = TeacherSource{cache ? *cache->get(teacher_key(config, full), train) : train()};
        break;
      }
    }
  }

  Network student =
      init_network(mlp_spec(in, config.model.student_hidden, width, config.model.activation), config.distill.seed);
  RunOutput result;
  std::optional<RunRecord> ta_record;
  switch (config.distill.method) {
    case Method::scratch:
      result.record = train_scratch(std::move(student), splits.train, splits.val, config.distill);
      break;
    case Method::vanilla:
      result.record = train_vanilla(std::move(student), *teacher, splits.train, splits.val, config.distill);
      break;
    case Method::annealing:
      result.record = train_annealing(std::move(student), *teacher, splits.train, splits.val, config.distill);
      break;
    case Method::continuation:
      result.record =
          train_continuation(std::move(student), *teacher, splits.train, splits.val, config.distill);
      break;
    case Method::takd: {
      Network ta = init_network(mlp_spec(in, config.model.ta_hidden, width, config.model.activation),
                                derive_seed(config.distill.seed, "ta"));
      TakdResult r = train_takd(*teacher, std::move(ta), std::move(student), splits.train, splits.val,
                                config.distill);
      result.record = std::move(r.student);
      ta_record = std::move(r.ta);
      break;
    }
  }
  result.test_metric = evaluate(result.record.best_checkpoint, splits.test);
  if (full.clean_targets) {
    result.smoothness = smoothness_report(result.record.best_checkpoint, full, config.output.report_grid);
  }

  result.dir = root / run_dir_name(config);
  fs::create_directories(result.dir);
  write_text(result.dir / "config.ini", to_ini(config));
  write_text(result.dir / "metrics.csv", metrics_csv(result.record.rows));
  save_network(result.record.best_checkpoint, result.dir / "best.ckpt");
  save_network(result.record.final_network, result.dir / "final.ckpt");
  save_dataset(full, result.dir / "dataset.bin");
  if (teacher) {
    if (const auto* net = std::get_if<Network>(&*teacher)) save_network(*net, result.dir / "teacher.ckpt");
  }
  if (ta_record) {
    save_network(ta_record->best_checkpoint, result.dir / "ta.ckpt");
    write_text(result.dir / "ta_metrics.csv", metrics_csv(ta_record->rows));
  }
  if (result.smoothness) write_plot_data(*result.smoothness, result.dir / "smoothness.csv");
  write_text(result.dir / "summary.txt", summary_line(config, result) + '\n');
  return result;
}

int cmd_train(const fs::path& config_path, const std::optional<fs::path>& out_root, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig config = load_config(config_path);
    const RunOutput r = execute_run(config, output_root(out_root, config));
    out << summary_line(config, r) << '\n' << "run directory: " << r.dir.string() << '\n';
    return int{kExitOk};
  });
}

int cmd_ablate(const fs::path& config_path, const std::optional<fs::path>& out_root, std::ostream& out,
               std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig base = load_config(config_path);
    if (base.distill.method != Method::continuation) {
      throw ConfigError("ablate needs method.name = continuation");
    }
    if (base.distill.freeze.any()) throw ConfigError("ablate needs a config without method.freeze_* keys");

    const double psi = base.ablation.psi;
    const double coeff = base.ablation.coefficient;
    struct Arm {
      const char* name;
      const char* dynamic;
      FreezeFlags freeze;
    };
    const std::vector<Arm> arms{
        {"A", "psi", {std::nullopt, coeff, coeff}},
        {"B", "phi_teacher", {psi, std::nullopt, coeff}},
        {"C", "phi_margin", {psi, coeff, std::nullopt}},
        {"D", "all", {}},
    };
    for (const Arm& arm : arms) {
      RunConfig c = base;
      c.distill.freeze = arm.freeze;
      c.validate();
    }

    const fs::path dir = output_root(out_root, base) /
                         ("ablation-seed" + std::to_string(base.distill.seed) + "-" + config_hash(base));
    TeacherCache cache;
    std::string table = "arm,dynamic,psi,phi_teacher,phi_margin,best_epoch,best_metric,run_dir\n";
    for (const Arm& arm : arms) {
      RunConfig c = base;
      c.distill.freeze = arm.freeze;
      const RunOutput r = execute_run(c, dir, &cache);
      auto frozen = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("dynamic"); };
      table += std::string(arm.name) + ',' + arm.dynamic + ',' + frozen(arm.freeze.psi) + ',' +
               frozen(arm.freeze.phi_teacher) + ',' + frozen(arm.freeze.phi_margin) + ',' +
               std::to_string(r.record.best_epoch) + ',' + format_double(r.record.best_metric) + ',' +
               r.dir.filename().string() + '\n';
      out << "arm " << arm.name << " (" << arm.dynamic << " dynamic): best_metric="
          << format_double(r.record.best_metric) << '\n';
    }
    write_text(dir / "ablation.csv", table);
    out << "ablation table: " << (dir / "ablation.csv").string() << '\n';
    return int{kExitOk};
  });
}

int cmd_gradcheck(std::ostream& out, std::ostream& err, const std::optional<std::string>& corrupt,
                  std::size_t points) {
  return guarded(err, [&] {
    const auto cases = standard_gradcheck_cases(corrupt);
    const auto results = run_gradcheck(cases, points);
    int code = kExitOk;
    for (const GradcheckResult& r : results) {
      out << r.name << " max_rel_error=" << format_double(r.max_error) << " points=" << r.points << ' '
          << (r.passed ? "ok" : "FAIL") << '\n';
      if (!r.passed) {
        err << "gradcheck: " << r.name << " exceeds tolerance " << format_double(kGradcheckTolerance) << '\n';
        code = kExitNumeric;
      }
    }
    return code;
  });
}

int cmd_sweep(const fs::path& config_path, const std::optional<fs::path>& out_root,
              const SweepOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig base = load_config(config_path);
    if (options.seeds.size() < 2) throw ConfigError("sweep needs at least 2 seeds (--seeds)");
    std::vector<Method> methods;
    if (options.methods.empty()) {
      methods = {Method::scratch, Method::vanilla, Method::takd, Method::annealing, Method::continuation};
    } else {
      for (const std::string& m : options.methods) methods.push_back(parse_method(m));
    }

    struct Job {
      RunConfig config;
      std::optional<RunOutput> output;
      std::string failure;
    };
    std::vector<Job> jobs;
    for (const Method m : methods) {
      for (const std::uint64_t seed : options.seeds) {
        RunConfig c = base;
        c.distill.method = m;
        c.distill.seed = seed;
        if (m != Method::continuation) c.distill.freeze = {};
        c.validate();
        jobs.push_back({std::move(c), std::nullopt, {}});
      }
    }

    const fs::path dir = output_root(out_root, base) / ("sweep-" + config_hash(base));
    TeacherCache cache;
    std::mutex log_mutex;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) {
        Job& job = jobs[i];
        try {
          job.output = execute_run(job.config, dir, &cache);
        } catch (const Error& e) {
          job.failure = e.what();
        } catch (const fs::filesystem_error& e) {
          job.failure = e.what();
        }
        std::lock_guard lock(log_mutex);
        out << to_string(job.config.distill.method) << " seed " << job.config.distill.seed << ": "
            << (job.output ? "best_metric=" + format_double(job.output->record.best_metric) : "FAILED") << '\n';
        if (!job.output) err << "sweep run failed: " << job.failure << '\n';
      }
    };
    const std::size_t workers = std::clamp<std::size_t>(options.jobs, 1, jobs.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::string csv =
        "kind,method,seed,status,best_metric,best_metric_std,mse_to_clean,mse_to_clean_std,"
        "highfreq_energy,highfreq_energy_std,run_dir\n";
    bool any_failed = false;
    for (const Job& job : jobs) {
      const auto& o = job.output;
      std::optional<double> mse, hf;
      if (o && o->smoothness) {
        mse = o->smoothness->mse_to_clean;
        hf = o->smoothness->highfreq_energy;
      }
      any_failed = any_failed || !o;
      csv += "run," + std::string(to_string(job.config.distill.method)) + ',' +
             std::to_string(job.config.distill.seed) + ',' + (o ? "ok" : "failed") + ',' +
             (o ? format_double(o->record.best_metric) : std::string()) + ",," + csv_field(mse) + ",," +
             csv_field(hf) + ",," + (o ? o->dir.filename().string() : std::string()) + '\n';
    }
    for (const Method m : methods) {
      std::vector<double> best, mse, hf;
      std::size_t total = 0;
      for (const Job& job : jobs) {
        if (job.config.distill.method != m) continue;
        ++total;
        if (!job.output) continue;
        best.push_back(job.output->record.best_metric);
        if (job.output->smoothness) {
          mse.push_back(job.output->smoothness->mse_to_clean);
          hf.push_back(job.output->smoothness->highfreq_energy);
        }
      }
      auto stats = [](const std::vector<double>& v) -> std::pair<std::optional<double>, std::optional<double>> {
        if (v.empty()) return {};
        double mean = 0.0;
        for (const double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        if (v.size() < 2) return {mean, std::nullopt};
        double ss = 0.0;
        for (const double x : v) ss += (x - mean) * (x - mean);
        return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
      };
      const auto [bm, bs] = stats(best);
      const auto [mm, ms] = stats(mse);
      const auto [hm, hs] = stats(hf);
      csv += "aggregate," + std::string(to_string(m)) + ",," + std::to_string(best.size()) + '/' +
             std::to_string(total) + ',' + csv_field(bm) + ',' + csv_field(bs) + ',' + csv_field(mm) + ',' +
             csv_field(ms) + ',' + csv_field(hm) + ',' + csv_field(hs) + ",\n";
    }
    fs::create_directories(dir);
    write_text(dir / "sweep.csv", csv);
    out << "sweep table: " << (dir / "sweep.csv").string() << '\n';
    return any_failed ? int{kExitPartial} : int{kExitOk};
  });
}

int cmd_report(const ReportOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Network net = load_network(options.checkpoint);
    Dataset data;
    std::size_t grid = options.grid.value_or(1000);
    if (options.dataset) {
      data = load_dataset(*options.dataset);
    } else if (options.config) {
      const RunConfig config = load_config(*options.config);
      data = make_dataset(config);
      grid = options.grid.value_or(config.output.report_grid);
    } else {
      throw ConfigError("report needs --dataset or --config");
    }
    const SmoothnessReport report = smoothness_report(net, data, grid);
    write_plot_data(report, options.plot_out);
    out << "mse_to_clean=" << format_double(report.mse_to_clean)
        << " highfreq_energy=" << format_double(report.highfreq_energy) << '\n'
        << "plot data: " << options.plot_out.string() << '\n';
    return int{kExitOk};
  });
}

}  // namespace ckd
