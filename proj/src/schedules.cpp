#include "ckd/schedules.hpp"

#include <algorithm>

#include "ckd/errors.hpp"

namespace ckd {

namespace {

void check_epoch(int epoch, int n, const char* what) {
  if (epoch < 1 || epoch > n) {
    throw DomainError(std::string(what) + ": epoch " + std::to_string(epoch) +
                      " outside [1, " + std::to_string(n) + "]");
  }
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

void TemperatureLadder::validate() const {
  if (t_max < 1) throw DomainError("temperature ladder: t_max must be >= 1");
  if (n < t_max) {
    throw DomainError("temperature ladder: needs n >= t_max (n=" + std::to_string(n) +
                      ", t_max=" + std::to_string(t_max) + ")");
  }
}

int temperature_at_epoch(const TemperatureLadder& ladder, int epoch) {
  ladder.validate();
  check_epoch(epoch, ladder.n, "temperature_at_epoch");
  // The unclamped ladder reaches 0 at i = t_max * k; T stays within [1, t_max].
  return std::max(1, ladder.t_max - epoch / ladder.epochs_per_step());
}

double phi_of_temperature(int temperature, int t_max) {
  if (t_max < 1 || temperature < 1 || temperature > t_max) {
    throw DomainError("phi_of_temperature: T=" + std::to_string(temperature) +
                      " outside [1, " + std::to_string(t_max) + "]");
  }
  // 1 - (T - 1) / T_max with an integer numerator, so the only rounding is the
  // final division and phi(T_max) is exactly 1 / T_max.
  return static_cast<double>(t_max - temperature + 1) / static_cast<double>(t_max);
}

void PsiSpec::validate() const {
  if (n < 1) throw DomainError("psi: n must be >= 1");
  std::visit(overloaded{
                 [](const PsiStep& s) {
                   if (s.k_switch < 0) throw DomainError("psi step: k_switch must be >= 0");
                 },
                 [](const PsiCappedRamp& r) {
                   if (!(r.denominator > 0.0)) {
                     throw DomainError("psi capped_ramp: denominator must be > 0");
                   }
                   if (r.cutover < 0) throw DomainError("psi capped_ramp: cutover must be >= 0");
                 },
                 [](const PsiConstant& c) {
                   if (!(c.value >= 0.0 && c.value <= 1.0)) {
                     throw DomainError("psi constant: value must be in [0, 1]");
                   }
                 },
             },
             kind);
}

std::string PsiSpec::describe() const {
  return std::visit(
      overloaded{
          [](const PsiStep& s) { return "step(k_switch=" + std::to_string(s.k_switch) + ")"; },
          [](const PsiCappedRamp& r) {
            return "capped_ramp(denominator=" + std::to_string(r.denominator) +
                   ", cutover=" + std::to_string(r.cutover) + ")";
          },
          [](const PsiConstant& c) { return "constant(" + std::to_string(c.value) + ")"; },
      },
      kind);
}

double psi(const PsiSpec& spec, int epoch) {
  spec.validate();
  check_epoch(epoch, spec.n, "psi");
  return std::visit(overloaded{
                        [epoch](const PsiStep& s) { return epoch <= s.k_switch ? 0.0 : 1.0; },
                        [epoch](const PsiCappedRamp& r) {
                          if (epoch > r.cutover) return 1.0;
                          return std::min(static_cast<double>(epoch) / r.denominator, 1.0);
                        },
                        [](const PsiConstant& c) { return c.value; },
                    },
                    spec.kind);
}

}  // namespace ckd
