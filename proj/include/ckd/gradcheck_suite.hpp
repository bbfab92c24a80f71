#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ckd {

/// One loss under test. `max_error` builds a random point from `seed` (small
/// tanh network, random inputs and teacher logits) and returns the
/// grad_check error at that point.
struct GradcheckCase {
  std::string name;
  std::function<double(std::uint64_t seed)> max_error;
};

struct GradcheckResult {
  std::string name;
  double max_error = 0.0;
  std::size_t points = 0;
  bool passed = false;
};

inline constexpr double kGradcheckTolerance = 1e-4;

/// cross_entropy, mse_regression, vanilla_kd, annealing, continuation_kd,
/// composite. When `corrupt` names one of them, that loss is routed through
/// an identity op whose backward rule scales the gradient by 1.5, which the
/// check must catch. Throws DomainError for an unknown name.
std::vector<GradcheckCase> standard_gradcheck_cases(const std::optional<std::string>& corrupt = {});

std::vector<GradcheckResult> run_gradcheck(std::span<const GradcheckCase> cases,
                                           std::size_t points = 100, std::uint64_t seed = 0,
                                           double tolerance = kGradcheckTolerance);

}  // namespace ckd
