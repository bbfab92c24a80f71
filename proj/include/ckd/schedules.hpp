#pragma once

#include <string>
#include <variant>

namespace ckd {

/// Integer temperature ladder: starts at t_max and drops by one every
/// k = floor(n / t_max) epochs, never below 1.
struct TemperatureLadder {
  int t_max = 1;
  int n = 1;

  /// Throws DomainError unless t_max >= 1 and n >= t_max.
  void validate() const;
  int epochs_per_step() const { return n / t_max; }
};

/// T_i = max(1, t_max - floor(i / k)) for 1 <= i <= n.
int temperature_at_epoch(const TemperatureLadder& ladder, int epoch);

/// phi(T) = 1 - (T - 1) / t_max, so phi(t_max) = 1/t_max and phi(1) = 1.
double phi_of_temperature(int temperature, int t_max);

/// psi = 0 for i <= k_switch, 1 afterwards.
struct PsiStep {
  int k_switch = 0;
};

/// psi = min(i / denominator, 1) for i <= cutover, 1 afterwards.
struct PsiCappedRamp {
  double denominator = 1.0;
  int cutover = 0;
};

struct PsiConstant {
  double value = 0.0;
};

struct PsiSpec {
  std::variant<PsiStep, PsiCappedRamp, PsiConstant> kind;
  int n = 1;

  void validate() const;
  std::string describe() const;
};

double psi(const PsiSpec& spec, int epoch);

}  // namespace ckd
