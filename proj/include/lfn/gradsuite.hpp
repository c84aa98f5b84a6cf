#pragma once

#include <string>
#include <vector>

#include "lfn/gradcheck.hpp"

namespace lfn {

inline constexpr double kGradTolerance = 1e-4;

struct GradSuiteResult {
  std::string op;
  GradCheckReport report;
  bool passed() const { return report.max_rel_error < kGradTolerance; }
};

// conv2d, transposed_conv2d, leaky_relu, f_warp, correlation,
// sparse_correlation, build_filters, apply_flconv, charbonnier,
// multiscale_loss, toy_model.
const std::vector<std::string>& gradient_suite_ops();

// Finite-difference checks in double precision on inputs no larger than
// 8 x 8. `only` selects one op (UsageError if unknown); empty runs all.
std::vector<GradSuiteResult> run_gradient_suite(unsigned seed = 1, const std::string& only = "");

}  // namespace lfn
