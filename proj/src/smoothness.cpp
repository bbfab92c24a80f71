#include "ckd/smoothness.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "ckd/errors.hpp"
#include "ckd/format.hpp"

namespace ckd {

double highfreq_energy(std::span<const double> samples, double span_length, double cutoff) {
  const std::size_t n = samples.size();
  if (n < 2) throw DomainError("highfreq_energy: need at least 2 samples");
  if (!(span_length > 0.0)) throw DomainError("highfreq_energy: span length must be > 0");
  const double nn = static_cast<double>(n);
  double energy = 0.0;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    const double omega = 2.0 * std::numbers::pi * static_cast<double>(k) / span_length;
    if (!(omega > cutoff)) continue;
    double re = 0.0;
    double im = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      // Reduce j*k mod n first so the angle stays small and exact.
      const double angle =
          2.0 * std::numbers::pi * static_cast<double>((j * k) % n) / nn;
      re += samples[j] * std::cos(angle);
      im -= samples[j] * std::sin(angle);
    }
    const double power = (re * re + im * im) / (nn * nn);
    energy += (2 * k == n) ? power : 2.0 * power;
  }
  return energy;
}

SmoothnessReport smoothness_report(const Network& net, const Dataset& data, std::size_t grid_size) {
  if (!data.clean_targets) throw DomainError("smoothness report: dataset has no clean targets");
  if (grid_size < 8) throw DomainError("smoothness report: grid_size must be >= 8");
  if (net.in_dim() != 1 || net.out_dim() != 1) {
    throw DomainError("smoothness report: needs a 1 -> 1 regression model");
  }
  const double lo = data.meta_double("lo");
  const double hi = data.meta_double("hi");
  const double base = data.meta_double("base_freq");
  const double noise_freq = data.meta_double("noise_freq");
  const double noise_amp = data.meta_double("noise_amp");

  Tensor grid(grid_size, 1);
  const double step = (hi - lo) / static_cast<double>(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i) {
    grid(i, 0) = lo + (static_cast<double>(i) + 0.5) * step;
  }
  const Tensor pred = predict(net, grid);

  SmoothnessReport report;
  std::vector<double> series(grid_size);
  double sq = 0.0;
  for (std::size_t i = 0; i < grid_size; ++i) {
    const double x = grid(i, 0);
    const double clean = std::sin(base * x);
    const double d = pred(i, 0) - clean;
    sq += d * d;
    series[i] = pred(i, 0);
    report.points.push_back({x, pred(i, 0), clean, clean + noise_amp * std::sin(noise_freq * x)});
  }
  report.mse_to_clean = sq / static_cast<double>(grid_size);
  report.highfreq_energy = highfreq_energy(series, hi - lo, 4.0 * base);
  return report;
}

void write_plot_data(const SmoothnessReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "x,prediction,clean,noisy\n";
  for (const auto& p : report.points) {
    out << format_double(p.x) << ',' << format_double(p.prediction) << ','
        << format_double(p.clean) << ',' << format_double(p.noisy) << '\n';
  }
}

}  // namespace ckd
