#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "ckd/data.hpp"
#include "ckd/models.hpp"

namespace ckd {

struct SmoothnessPoint {
  double x = 0.0;
  double prediction = 0.0;
  double clean = 0.0;
  double noisy = 0.0;
};

struct SmoothnessReport {
  double mse_to_clean = 0.0;
  double highfreq_energy = 0.0;
  std::vector<SmoothnessPoint> points;
};

/// One-sided spectral power of `samples` (uniformly spaced over an interval of
/// length `span_length`) at angular frequencies strictly above `cutoff`.
/// Normalized so a sinusoid of amplitude A contributes A^2 / 2.
double highfreq_energy(std::span<const double> samples, double span_length, double cutoff);

/// Evaluates a regression model on a midpoint grid of `grid_size` points over
/// the generator's [lo, hi]. mse_to_clean compares with sin(base_freq x);
/// highfreq_energy keeps frequencies above 4 * base_freq. Requires a dataset
/// produced by gen_noisy_sine (clean targets and generator metadata).
SmoothnessReport smoothness_report(const Network& net, const Dataset& data, std::size_t grid_size);

/// CSV with header x,prediction,clean,noisy.
void write_plot_data(const SmoothnessReport& report, const std::filesystem::path& path);

}  // namespace ckd
