#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lfn/autodiff.hpp"

namespace lfn {

struct GradCheckOptions {
  double eps = 1e-5;
  // Floor of the relative-error denominator.
  double floor = 1e-8;
  // When non-zero the output is reduced with fixed random weights drawn
  // from this seed instead of a plain sum, so structured cancellations in
  // the sum do not hide wrong gradients.
  unsigned projection_seed = 0;
  // Check at most this many coordinates per tensor (evenly strided); 0 = all.
  std::size_t max_coords_per_tensor = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // "<tensor>[index] analytic=.. numeric=.."
};

// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over the
// perturbed coordinates of every input tensor.
using InputFn = std::function<Var(Graph&, const std::vector<Var>&)>;
GradCheckReport finite_diff_check(const InputFn& fn,
                                  const std::vector<Tensor>& inputs,
                                  const GradCheckOptions& options = {});

// Same check over the values of a parameter set.
using ParamFn = std::function<Var(Graph&)>;
GradCheckReport finite_diff_check_params(const ParamFn& fn,
                                         const std::vector<Parameter*>& params,
                                         const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric, double floor = 1e-8);

}  // namespace lfn
