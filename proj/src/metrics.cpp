#include "lfn/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace lfn {
namespace {

void check_inputs(const Tensor& est, const Tensor& gt, const Tensor& mask, const char* what) {
  if (est.c() != 2) throw DimensionError(std::string(what) + ": estimate must have 2 channels");
  require_same_shape(est.shape(), gt.shape(), what);
  if (!mask.empty()) {
    if (mask.c() != 1) throw DimensionError(std::string(what) + ": mask must have 1 channel");
    require_same_spatial(est.shape(), mask.shape(), what);
  }
}

// Visits (epe, |gt|) of every counted pixel; returns the count.
template <typename Fn>
std::size_t for_each_pixel(const Tensor& est, const Tensor& gt, const Tensor& mask, Fn fn) {
  std::size_t count = 0;
  for (int b = 0; b < est.n(); ++b)
    for (int y = 0; y < est.h(); ++y)
      for (int x = 0; x < est.w(); ++x) {
        if (!mask.empty() && mask.at(b, 0, y, x) == 0.0) continue;
        const double gu = gt.at(b, 0, y, x);
        const double gv = gt.at(b, 1, y, x);
        fn(std::hypot(est.at(b, 0, y, x) - gu, est.at(b, 1, y, x) - gv), std::hypot(gu, gv));
        ++count;
      }
  return count;
}

Tensor intersect(const Tensor& a, const Tensor& b) {
  if (a.empty()) return b;
  require_same_shape(a.shape(), b.shape(), "mask intersection");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.data()[i] = a.data()[i] != 0.0 && b.data()[i] != 0.0 ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace

double aee(const Tensor& est, const Tensor& gt, const Tensor& mask) {
  check_inputs(est, gt, mask, "aee");
  double sum = 0.0;
  const std::size_t n = for_each_pixel(est, gt, mask, [&](double e, double) { sum += e; });
  if (n == 0) throw MetricError("aee: no pixels in mask");
  return sum / static_cast<double>(n);
}

double fl_all(const Tensor& est, const Tensor& gt, const Tensor& mask) {
  check_inputs(est, gt, mask, "fl_all");
  std::size_t bad = 0;
  const std::size_t n = for_each_pixel(est, gt, mask, [&](double e, double mag) {
    if (e >= 3.0 && e >= 0.05 * mag) ++bad;
  });
  if (n == 0) throw MetricError("fl_all: no pixels in mask");
  return 100.0 * static_cast<double>(bad) / static_cast<double>(n);
}

double out_noc(const Tensor& est, const Tensor& gt, const Tensor& noc_mask) {
  if (noc_mask.empty()) throw DimensionError("out_noc: a non-occluded mask is required");
  check_inputs(est, gt, noc_mask, "out_noc");
  std::size_t bad = 0;
  const std::size_t n = for_each_pixel(est, gt, noc_mask, [&](double e, double) {
    if (e > 3.0) ++bad;
  });
  if (n == 0) throw MetricError("out_noc: no pixels in mask");
  return 100.0 * static_cast<double>(bad) / static_cast<double>(n);
}

EvalReport evaluate_flow(const Tensor& est, const Tensor& gt, const Tensor& valid,
                         const Tensor& noc) {
  check_inputs(est, gt, valid, "evaluate_flow");
  EvalReport r;
  r.aee = aee(est, gt, valid);
  r.fl_all = fl_all(est, gt, valid);
  r.pixels = for_each_pixel(est, gt, valid, [](double, double) {});
  if (!noc.empty()) {
    check_inputs(est, gt, noc, "evaluate_flow");
    const Tensor m = intersect(valid, noc);
    r.out_noc = out_noc(est, gt, m);
    r.noc_pixels = for_each_pixel(est, gt, m, [](double, double) {});
  }
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["aee"] = r.aee;
  j["fl_all"] = r.fl_all;
  j["out_noc"] = r.out_noc ? nlohmann::json(*r.out_noc) : nlohmann::json(nullptr);
  j["pixels"] = r.pixels;
  j["noc_pixels"] = r.noc_pixels;
  return j;
}

std::string format_report(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "AEE %.4f px  Fl-all %.2f%%", r.aee, r.fl_all);
  std::string s = buf;
  if (r.out_noc) {
    std::snprintf(buf, sizeof buf, "  Out-Noc %.2f%%", *r.out_noc);
    s += buf;
  }
  s += "  (" + std::to_string(r.pixels) + " px";
  if (r.out_noc) s += ", " + std::to_string(r.noc_pixels) + " noc";
  return s + ")";
}

}  // namespace lfn
