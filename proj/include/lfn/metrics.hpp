#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "lfn/tensor.hpp"

namespace lfn {

// Flows are N x 2 x H x W; masks are N x 1 x H x W with nonzero = counted.
// An empty mask counts every pixel. Metrics over zero pixels throw
// MetricError.

// Mean end-point error.
double aee(const Tensor& est, const Tensor& gt, const Tensor& mask = {});

// Percentage of pixels with EPE >= 3 px and EPE >= 5% of |gt|.
double fl_all(const Tensor& est, const Tensor& gt, const Tensor& mask = {});

// Percentage of non-occluded pixels with EPE > 3 px.
double out_noc(const Tensor& est, const Tensor& gt, const Tensor& noc_mask);

struct EvalReport {
  double aee = 0.0;
  double fl_all = 0.0;
  std::optional<double> out_noc;
  std::size_t pixels = 0;
  std::size_t noc_pixels = 0;
};

// valid restricts every metric; noc (when given) is intersected with valid
// for out_noc.
EvalReport evaluate_flow(const Tensor& est, const Tensor& gt, const Tensor& valid = {},
                         const Tensor& noc = {});

// Fields: aee, fl_all, out_noc (null when absent), pixels, noc_pixels.
nlohmann::json to_json(const EvalReport& r);
std::string format_report(const EvalReport& r);

}  // namespace lfn
