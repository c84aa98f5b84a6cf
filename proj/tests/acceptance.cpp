// End-to-end acceptance run: one PASS/FAIL line per criterion.
//   acceptance --cli <path to lfn> --configs <dir> [--only N]

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <unistd.h>

#include "lfn/costvolume.hpp"
#include "lfn/decoder.hpp"
#include "lfn/flowio.hpp"
#include "lfn/gradsuite.hpp"
#include "lfn/metrics.hpp"
#include "lfn/trainconfig.hpp"
#include "lfn/warp.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace lfn;

namespace {

struct Verdict {
  bool ok = true;
  std::string detail;

  void check(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ---------------------------------------------------------------------------

Verdict architecture(const fs::path& configs) {
  Verdict v;
  const Model m(load_model_config((configs / "liteflownet2.json").string()));
  const ParameterBreakdown b = count_parameters(m);
  const double rel = std::abs(static_cast<double>(b.total) - 6.42e6) / 6.42e6;
  v.check(rel < 0.05, "total " + std::to_string(b.total));
  v.check(b.learnable_layers >= 88 && b.learnable_layers <= 94, "layers " + std::to_string(b.learnable_layers));
  const LevelUnits& u = m.level(5);
  v.check(u.settings.cost.channels() == 49 && u.m.front().in_ch == 49, "cost volume width");
  v.check(u.s.front().in_ch == 258, "S concat width");
  v.check(u.r.input_channels() == 131, "R concat width");
  v.check(u.r.dist.out_ch == 9, "distance width");

  // Widths observed on a live forward pass at level 5.
  Graph g;
  Var f1 = g.constant(random_uniform({1, 128, 4, 4}, 1));
  Var f2 = g.constant(random_uniform({1, 128, 4, 4}, 2));
  Var flow = g.constant(random_uniform({1, 2, 4, 4}, 3));
  v.check(cost_volume(f1, f2, u.settings.cost).value().c() == 49, "live cost volume width");
  v.check(concat_channels({f1, f_warp(f2, flow), flow}).value().c() == 258, "live S concat");
  v.detail = std::to_string(b.total) + " params (" + fmt("%.2f%%", 100 * rel) + " off), " +
             std::to_string(b.learnable_layers) + " layers, level-5 widths 49/258/131/9" +
             (v.detail.empty() ? "" : " | " + v.detail);
  return v;
}

Verdict gradients() {
  Verdict v;
  double worst = 0.0;
  std::string worst_op;
  for (const GradSuiteResult& r : run_gradient_suite(1)) {
    v.check(r.passed(), r.op + " " + fmt("%.2e", r.report.max_rel_error));
    if (r.report.max_rel_error >= worst) {
      worst = r.report.max_rel_error;
      worst_op = r.op;
    }
  }
  const std::string prefix = std::to_string(gradient_suite_ops().size()) + " ops, worst " + worst_op + " " + fmt("%.2e", worst);
  v.detail = prefix + (v.detail.empty() ? "" : " | " + v.detail);
  return v;
}

Verdict oracles() {
  Verdict v;
  double worst = 0.0;
  auto track = [&](double d, const std::string& what) {
    worst = std::max(worst, d);
    v.check(d < 1e-12, what + " " + fmt("%.2e", d));
  };
  Graph g;
  for (unsigned s = 1; s <= 3; ++s) {
    const Tensor f1 = random_uniform({2, 6, 9, 10}, s);
    const Tensor f2 = random_uniform({2, 6, 9, 10}, s + 50);
    for (auto [radius, step] : {std::pair{3, 1}, std::pair{4, 2}, std::pair{6, 2}}) {
      const Tensor dense = correlation(g.constant(f1), g.constant(f2), radius, step).value();
      const Tensor ref = oracle::correlation(f1, f2, radius, step);
      track(max_abs_diff(dense, ref), "correlation");
      for (int stride : {2, 3}) {
        const Tensor sparse = sparse_correlation(g.constant(f1), g.constant(f2), radius, step, stride).value();
        bool exact = sparse.shape() == dense.shape();
        double d = 0.0;
        for (int b = 0; exact && b < 2; ++b)
          for (int c = 0; c < dense.c(); ++c)
            for (int y = 0; y < dense.h(); y += stride)
              for (int x = 0; x < dense.w(); x += stride) {
                exact = exact && sparse.at(b, c, y, x) == dense.at(b, c, y, x);
                d = std::max(d, std::abs(sparse.at(b, c, y, x) - ref.at(b, c, y, x)));
              }
        track(d, "sparse correlation");
        v.check(exact, "sparse != dense at grid points");
      }
    }
    for (int omega : {3, 5, 7}) {
      const Tensor flow = random_uniform({2, 2, 8, 9}, s + 10);
      const Tensor filt = oracle::filters(random_uniform({2, omega * omega, 8, 9}, s + 20, -1.5, 1.5));
      track(max_abs_diff(apply_flconv(g.constant(flow), g.constant(filt)).value(), oracle::local_conv(flow, filt)),
            "apply_flconv");
      track(max_abs_diff(build_filters(g.constant(random_uniform(filt.shape(), s + 21))).value(),
                         oracle::filters(random_uniform(filt.shape(), s + 21))),
            "build_filters");
    }
    const Tensor x = random_uniform({2, 5, 11, 12}, s + 30);
    for (int k : {1, 3, 5, 7}) {
      const Tensor w = random_uniform({4, 5, k, k}, s + 31);
      const Tensor bias = random_uniform({1, 1, 1, 4}, s + 32);
      for (int stride : {1, 2}) {
        const Tensor out = conv2d(g.constant(x), g.constant(w), g.constant(bias), stride, k / 2).value();
        track(max_abs_diff(out, oracle::conv2d(x, w, &bias, stride, k / 2)), "conv2d");
      }
    }
    const Tensor w = random_uniform({5, 3, 4, 4}, s + 33);
    for (bool rep : {false, true}) {
      const Tensor out = transposed_conv2d(g.constant(x), g.constant(w), 2, rep ? Border::kReplicate : Border::kZero).value();
      track(max_abs_diff(out, oracle::transposed_conv2d(x, w, rep)), "transposed_conv2d");
    }
    const Tensor flow = random_uniform({2, 2, 11, 12}, s + 40, -3, 3);
    track(max_abs_diff(f_warp(g.constant(x), g.constant(flow)).value(), oracle::warp(x, flow)), "f_warp");
  }
  v.detail = "max deviation " + fmt("%.2e", worst) + ", sparse grid bit-exact" + (v.detail.empty() ? "" : " | " + v.detail);
  return v;
}

Verdict invariants() {
  Verdict v;
  Graph g;
  const Tensor feat = random_uniform({2, 7, 9, 11}, 3);
  v.check(max_abs_diff(f_warp(g.constant(feat), g.constant(Tensor({2, 2, 9, 11}))).value(), feat) == 0.0,
          "f_warp identity");

  double worst_sum = 0.0;
  bool in_range = true;
  const Tensor filt = build_filters(g.constant(random_uniform({2, 25, 8, 8}, 4, -4, 4))).value();
  for (int b = 0; b < 2; ++b)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        double s = 0.0;
        for (int t = 0; t < 25; ++t) {
          const double w = filt.at(b, t, y, x);
          in_range = in_range && w >= 0.0 && w <= 1.0;
          s += w;
        }
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      }
  v.check(worst_sum < 1e-6, "filter sums off by " + fmt("%.2e", worst_sum));
  v.check(in_range, "filter weight outside [0, 1]");

  // Every regularized value lies within the range of its 5 x 5 neighbourhood.
  const Tensor flow = random_uniform({1, 2, 9, 9}, 5, -4, 4);
  bool bounded = true;
  const Tensor bank = build_filters(g.constant(random_uniform({1, 25, 9, 9}, 6, -3, 3))).value();
  const Tensor out = apply_flconv(g.constant(flow), g.constant(bank)).value();
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < 9; ++x) {
        double lo = 1e300, hi = -1e300;
        for (int m = -2; m <= 2; ++m)
          for (int n = -2; n <= 2; ++n) {
            const int yy = y + m, xx = x + n;
            if (yy < 0 || yy >= 9 || xx < 0 || xx >= 9) continue;
            lo = std::min(lo, flow.at(0, c, yy, xx));
            hi = std::max(hi, flow.at(0, c, yy, xx));
          }
        bounded = bounded && out.at(0, c, y, x) >= lo - 1e-12 && out.at(0, c, y, x) <= hi + 1e-12;
      }
  v.check(bounded, "convex-combination bound");

  ModelConfig c = ModelConfig::liteflownet2();
  c.encoder_channels = {4, 4, 6, 6, 8, 8};
  c.m_widths = {8, 6};
  c.s_widths = {8, 6};
  c.r_widths = {8, 6};
  c.pseudo_level2 = false;
  Model m(c);
  random_init(m, 1);
  for (Parameter* p : m.params().all())
    if (p->name.starts_with("m5.") || p->name.starts_with("s5.")) p->value.fill(0.0);
  const LevelUnits& u = m.level(5);
  Var f1 = g.constant(random_uniform({1, 8, 4, 4}, 7));
  Var f2 = g.constant(random_uniform({1, 8, 4, 4}, 8));
  const Tensor up = random_uniform({1, 2, 4, 4}, 9, -2, 2);
  Var um = descriptor_matching_unit(g, u, f1, f2, g.constant(up), c.leaky_slope);
  Var us = subpixel_refinement_unit(g, u, f1, f2, um, c.leaky_slope);
  v.check(max_abs_diff(um.value(), up) == 0.0 && max_abs_diff(us.value(), up) == 0.0, "residual pass-through");
  v.detail = "warp identity exact, filter sums within " + fmt("%.1e", worst_sum) +
             ", convex bound, zero-weight M/S pass-through" + (v.detail.empty() ? "" : " | " + v.detail);
  return v;
}

Verdict learning(const fs::path& configs) {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  const TrainConfig base = load_train_config((configs / "desk.json").string());
  v.check(base.iterations <= 20000, "iteration budget");
  v.check(base.model.finest_level == 4 && base.model.coarsest_level == 6, "levels 6->4");
  int staged_wins = 0;
  double aee_seed1 = 1e9;
  for (unsigned seed = 1; seed <= 5; ++seed) {
    double loss[2];
    for (int i = 0; i < 2; ++i) {
      TrainConfig cfg = base;
      cfg.schedule = i == 0 ? "stagewise" : "conventional";
      cfg.init_seed = seed;
      cfg.options.seed = seed;
      Model m(cfg.model);
      const TrainSummary s = run_training(m, cfg);
      loss[i] = s.final_loss;
      std::printf("      seed %u %-12s final loss %.5f  held-out AEE %.4f px  (%.0f s)\n", seed,
                  cfg.schedule.c_str(), s.final_loss, s.heldout_aee, s.seconds);
      std::fflush(stdout);
      if (seed == 1 && i == 1) aee_seed1 = s.heldout_aee;
    }
    if (loss[0] <= loss[1]) ++staged_wins;
  }
  const double elapsed = seconds_since(t0);
  v.check(aee_seed1 < 1.0, "held-out AEE " + fmt("%.4f", aee_seed1));
  v.check(staged_wins >= 3, "stage-wise lower on " + std::to_string(staged_wins) + "/5 seeds");
  v.check(elapsed <= 7200.0, "runtime " + fmt("%.0f s", elapsed));
  v.detail = std::to_string(base.iterations) + " iterations: held-out AEE " + fmt("%.3f px", aee_seed1) +
             ", stage-wise <= conventional on " + std::to_string(staged_wins) + "/5 seeds" +
             (v.detail.empty() ? "" : " | " + v.detail);
  return v;
}

Verdict metrics_io(const std::string& cli) {
  Verdict v;
  const fs::path dir = fs::temp_directory_path() / ("lfn_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);

  Tensor gt = random_uniform({1, 2, 6, 7}, 11, -5, 5);
  Tensor est = gt;
  for (std::size_t i = 0; i < 42; ++i) {
    est.plane(0, 0)[i] += 3.0;
    est.plane(0, 1)[i] += 4.0;
  }
  v.check(aee(est, gt) == 5.0, "3-4-5 AEE");
  const Tensor zero({1, 2, 6, 7});
  Tensor ten({1, 2, 6, 7});
  for (std::size_t i = 0; i < 42; ++i) ten.plane(0, 0)[i] = 10.0;
  v.check(fl_all(zero, ten) == 100.0, "uniform miss Fl-all");

  // Loop oracles on a random masked case.
  const Tensor e = random_uniform({1, 2, 6, 7}, 12, -6, 6);
  Tensor mask({1, 1, 6, 7});
  Tensor noc({1, 1, 6, 7});
  for (std::size_t i = 0; i < 42; ++i) {
    mask.plane(0, 0)[i] = i % 5 != 0 ? 1.0 : 0.0;
    noc.plane(0, 0)[i] = i % 3 != 0 ? 1.0 : 0.0;
  }
  double sum = 0.0;
  int n = 0, outl = 0, nn = 0, bad = 0;
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 7; ++x) {
      if (mask.at(0, 0, y, x) == 0.0) continue;
      const double du = e.at(0, 0, y, x) - gt.at(0, 0, y, x);
      const double dv = e.at(0, 1, y, x) - gt.at(0, 1, y, x);
      const double epe = std::sqrt(du * du + dv * dv);
      const double mag = std::sqrt(gt.at(0, 0, y, x) * gt.at(0, 0, y, x) + gt.at(0, 1, y, x) * gt.at(0, 1, y, x));
      sum += epe;
      ++n;
      if (epe >= 3.0 && epe >= 0.05 * mag) ++outl;
      if (noc.at(0, 0, y, x) != 0.0) {
        ++nn;
        if (epe > 3.0) ++bad;
      }
    }
  const EvalReport r = evaluate_flow(e, gt, mask, noc);
  v.check(std::abs(r.aee - sum / n) < 1e-10, "AEE oracle");
  v.check(std::abs(r.fl_all - 100.0 * outl / n) < 1e-10, "Fl-all oracle");
  v.check(r.out_noc && std::abs(*r.out_noc - 100.0 * bad / nn) < 1e-10, "Out-Noc oracle");

  // Byte-exact round trips.
  const fs::path flo1 = dir / "a.flo", flo2 = dir / "b.flo";
  write_flo(flo1.string(), random_uniform({1, 2, 5, 7}, 13, -20, 20));
  write_flo(flo2.string(), read_flo(flo1.string()));
  v.check(slurp(flo1) == slurp(flo2) && !slurp(flo1).empty(), ".flo round trip");
  Tensor q = random_uniform({1, 2, 5, 7}, 14, -100, 100);
  for (double& x : q.values()) x = kitti_decode(kitti_encode(x));
  Tensor valid({1, 1, 5, 7});
  for (std::size_t i = 0; i < 35; ++i) valid.plane(0, 0)[i] = i % 4 != 0 ? 1.0 : 0.0;
  const fs::path png1 = dir / "a.png", png2 = dir / "b.png";
  write_kitti_png(png1.string(), q, valid);
  const KittiFlow k = read_kitti_png(png1.string());
  v.check(max_abs_diff(k.flow, q) == 0.0 && max_abs_diff(k.valid, valid) == 0.0, "KITTI values");
  write_kitti_png(png2.string(), k.flow, k.valid);
  v.check(slurp(png1) == slurp(png2), "KITTI round trip");

  // infer twice through the command line.
  const auto sample = generate_synthetic(5, 1).front();
  write_png((dir / "i1.png").string(), sample.image1);
  write_png((dir / "i2.png").string(), sample.image2);
  Model m(ModelConfig::liteflownet2());
  random_init(m, 3);
  save_checkpoint(m, (dir / "model.ckpt").string());
  std::ofstream(dir / "config.json") << nlohmann::json(m.config()).dump();
  std::string outs[2];
  for (int i = 0; i < 2; ++i) {
    const fs::path out = dir / ("out" + std::to_string(i) + ".flo");
    const std::string cmd = "\"" + cli + "\" infer \"" + (dir / "i1.png").string() + "\" \"" +
                            (dir / "i2.png").string() + "\" --model \"" + (dir / "model.ckpt").string() +
                            "\" --out \"" + out.string() + "\" > /dev/null";
    v.check(std::system(cmd.c_str()) == 0, "infer exit status");
    outs[i] = slurp(out);
  }
  v.check(!outs[0].empty() && outs[0] == outs[1], "infer not byte-identical");
  fs::remove_all(dir);
  v.detail = "3-4-5 -> 5.0, uniform miss -> 100%, oracles, .flo/KITTI byte-exact, infer deterministic" +
             (v.detail.empty() ? "" : std::string(" | ") + v.detail);
  return v;
}

Verdict shape_laws() {
  Verdict v;
  std::size_t totals[2];
  std::size_t layers[2];
  for (bool pseudo : {false, true}) {
    ModelConfig c = ModelConfig::liteflownet2();
    c.pseudo_level2 = pseudo;
    Model m(c);
    random_init(m, 7);
    totals[pseudo] = count_parameters(m).total;
    layers[pseudo] = count_parameters(m).learnable_layers;
    Graph g;
    const MultiScaleFlows f = forward(g, m, random_uniform({1, 3, 64, 64}, 1), random_uniform({1, 3, 64, 64}, 2));
    std::vector<int> got;
    for (const LevelFlows& l : f.levels) {
      got.push_back(l.final().value().h());
      v.check(l.final().value().shape() == Shape{1, 2, l.final().value().h(), l.final().value().h()}, "square flow");
    }
    const std::vector<int> want = pseudo ? std::vector<int>{2, 4, 8, 16, 32} : std::vector<int>{2, 4, 8, 16};
    v.check(got == want, std::string("level extents") + (pseudo ? " with pseudo" : ""));
    v.check(f.full.value().shape() == Shape{1, 2, 64, 64}, "full-resolution shape");
  }
  // Pseudo level keeps a 7x7 32->2 flow layer and a 7x7 32->49 distance layer.
  const std::size_t expected = (32 * 2 * 7 * 7 + 2) + (32 * 49 * 7 * 7 + 49);
  v.check(totals[1] - totals[0] == expected, "pseudo delta " + std::to_string(totals[1] - totals[0]));
  v.check(layers[1] - layers[0] == 2, "pseudo layer delta");
  v.detail = "flows 2/4/8/16 (+32 pseudo) and 64x64 full, pseudo adds " + std::to_string(totals[1] - totals[0]) +
             " params" + (v.detail.empty() ? "" : " | " + v.detail);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string cli;
  std::string configs;
  int only = 0;
  app.add_option("--cli", cli, "lfn executable")->required();
  app.add_option("--configs", configs, "Directory with liteflownet2.json and desk.json")->required();
  app.add_option("--only", only, "Run a single criterion");
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    const char* name;
    double budget;  // seconds
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> all = {
      {1, "architecture fidelity", 1.0, [&] { return architecture(configs); }},
      {2, "gradient suite", 60.0, gradients},
      {3, "oracle equivalence", 30.0, oracles},
      {4, "operator invariants", 0.0, invariants},
      {5, "desk-scale learning", 7200.0, [&] { return learning(configs); }},
      {6, "metrics and I/O", 0.0, [&] { return metrics_io(cli); }},
      {7, "shape laws", 0.0, shape_laws},
  };

  int failed = 0;
  for (const Criterion& c : all) {
    if (only != 0 && c.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.ok = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double t = seconds_since(t0);
    if (c.budget > 0.0 && t >= c.budget) v.check(false, "over time budget");
    std::printf("%s %d %s: %s (%.2f s)\n", v.ok ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(), t);
    std::fflush(stdout);
    if (!v.ok) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
