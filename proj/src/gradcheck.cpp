#include "lfn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lfn {
namespace {

Var reduce(Var out, unsigned seed) {
  if (seed == 0) return sum_all(out);
  return weighted_sum(out, random_uniform(out.shape(), seed, 0.5, 1.5));
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t limit) {
  std::vector<std::size_t> idx;
  if (limit == 0 || limit >= n) {
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  const double step = static_cast<double>(n) / static_cast<double>(limit);
  for (std::size_t k = 0; k < limit; ++k) {
    idx.push_back(static_cast<std::size_t>(k * step));
  }
  return idx;
}

// Perturbs `value` at each sampled coordinate and compares with `analytic`.
void compare(const std::string& name, Tensor& value, const Tensor& analytic,
             const std::function<double()>& evaluate,
             const GradCheckOptions& options, GradCheckReport& report) {
  for (std::size_t i : sample_indices(value.size(), options.max_coords_per_tensor)) {
    const double saved = value.data()[i];
    value.data()[i] = saved + options.eps;
    const double plus = evaluate();
    value.data()[i] = saved - options.eps;
    const double minus = evaluate();
    value.data()[i] = saved;
    const double numeric = (plus - minus) / (2.0 * options.eps);
    const double a = analytic.data()[i];
    const double err = relative_error(a, numeric, options.floor);
    ++report.coordinates;
    if (err > report.max_rel_error || report.worst.empty()) {
      report.max_rel_error = std::max(report.max_rel_error, err);
      std::ostringstream os;
      os << name << "[" << i << "] analytic=" << a << " numeric=" << numeric;
      report.worst = os.str();
    }
  }
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport finite_diff_check(const InputFn& fn,
                                  const std::vector<Tensor>& inputs,
                                  const GradCheckOptions& options) {
  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(g.input(t));
    Var out = reduce(fn(g, vars), options.projection_seed);
    g.backward(out);
    for (const Var& v : vars) analytic.push_back(g.grad(v));
  }
  std::vector<Tensor> work = inputs;
  auto evaluate = [&]() {
    Graph g;
    std::vector<Var> vars;
    for (const Tensor& t : work) vars.push_back(g.constant(t));
    return reduce(fn(g, vars), options.projection_seed).value().data()[0];
  };
  GradCheckReport report;
  for (std::size_t k = 0; k < work.size(); ++k) {
    compare("input" + std::to_string(k), work[k], analytic[k], evaluate,
            options, report);
  }
  return report;
}

GradCheckReport finite_diff_check_params(const ParamFn& fn,
                                         const std::vector<Parameter*>& params,
                                         const GradCheckOptions& options) {
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    Var out = reduce(fn(g), options.projection_seed);
    g.backward(out);
  }
  std::vector<Tensor> analytic;
  for (Parameter* p : params) analytic.push_back(p->grad);
  auto evaluate = [&]() {
    Graph g;
    return reduce(fn(g), options.projection_seed).value().data()[0];
  };
  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    compare(params[k]->name, params[k]->value, analytic[k], evaluate, options,
            report);
  }
  return report;
}

}  // namespace lfn
