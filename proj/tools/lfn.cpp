#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "lfn/decoder.hpp"
#include "lfn/flowio.hpp"
#include "lfn/gradsuite.hpp"
#include "lfn/metrics.hpp"
#include "lfn/trainconfig.hpp"
#include "lfn/visualize.hpp"

namespace fs = std::filesystem;
using namespace lfn;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kUsage = 2;

// Explicit --config, else config.json next to the checkpoint, else defaults.
ModelConfig resolve_config(const std::string& config, const std::string& ckpt) {
  if (!config.empty()) return load_model_config(config);
  if (!ckpt.empty()) {
    const fs::path side = fs::path(ckpt).parent_path() / "config.json";
    if (fs::exists(side)) return load_model_config(side.string());
  }
  return ModelConfig::liteflownet2();
}

Model load_model(const std::string& config, const std::string& ckpt, unsigned init_seed) {
  Model m(resolve_config(config, ckpt));
  if (ckpt.empty()) {
    random_init(m, init_seed);
  } else {
    load_checkpoint(m, ckpt);
  }
  return m;
}

struct Args {
  std::string img1, img2, model, config, out, viz, est, gt, noc, op, flo, png, unit = "s";
  unsigned seed = 1;
  int level = 5;
  int scale = 8;
  std::optional<double> max_mag;
  bool json_only = false;
};

int cmd_infer(const Args& a) {
  if (a.model.empty()) throw UsageError("infer needs --model");
  const Model m = load_model(a.config, a.model, 0);
  const Tensor i1 = read_image(a.img1);
  const Tensor i2 = read_image(a.img2);
  if (i1.shape() != i2.shape()) throw DimensionError("input images differ in size");
  const Tensor flow = infer_flow(m, i1, i2);
  write_flo(a.out, flow);
  if (!a.viz.empty()) write_png(a.viz, flow_to_color(flow));
  std::cout << "wrote " << a.out << " (" << flow.w() << "x" << flow.h() << ")\n";
  return kOk;
}

int cmd_train(const Args& a) {
  const TrainConfig cfg = load_train_config(a.config);
  Model m(cfg.model);
  const TrainSummary s = run_training(m, cfg, a.out, [](const std::string& line) { std::cout << line << std::endl; });
  std::printf("final loss %.6f  train AEE %.4f px  held-out AEE %.4f px  (%.1f s)\n", s.final_loss,
              s.train_aee, s.heldout_aee, s.seconds);
  return kOk;
}

int cmd_eval(const Args& a) {
  const KittiFlow est = read_flow_any(a.est);
  const KittiFlow gt = read_flow_any(a.gt);
  const Tensor noc = a.noc.empty() ? Tensor{} : read_mask(a.noc);
  const EvalReport r = evaluate_flow(est.flow, gt.flow, gt.valid, noc);
  if (!a.json_only) std::cout << format_report(r) << "\n";
  std::cout << to_json(r).dump() << "\n";
  return kOk;
}

int cmd_gradcheck(const Args& a) {
  bool ok = true;
  for (const GradSuiteResult& r : run_gradient_suite(a.seed, a.op)) {
    std::printf("%-20s rel err %.3e  %s\n", r.op.c_str(), r.report.max_rel_error, r.passed() ? "ok" : "FAIL");
    ok = ok && r.passed();
  }
  return ok ? kOk : kInvalid;
}

int cmd_params(const Args& a) {
  const ModelConfig c = a.config.empty() ? ModelConfig::liteflownet2() : load_model_config(a.config);
  const Model m(c);
  const ParameterBreakdown b = count_parameters(m);
  std::printf("total parameters %zu (%.2fM)\n", b.total, b.total / 1e6);
  std::printf("learnable layers %zu\n", b.learnable_layers);
  for (const auto& [name, n] : b.by_module) std::printf("  %-8s %zu\n", name.c_str(), n);
  for (const LevelUnits& u : m.levels()) {
    std::printf("level %d: cost volume %d, M in %d, S in %d, R in %d, distance %d\n", u.level,
                u.settings.cost.channels(), u.m.front().in_ch, u.s.front().in_ch, u.r.input_channels(),
                u.r.dist.out_ch);
  }
  return kOk;
}

int cmd_viz(const Args& a) {
  const KittiFlow f = read_flow_any(a.flo);
  if (a.max_mag && !(*a.max_mag > 0.0)) throw UsageError("--max-mag must be positive");
  write_png(a.png, flow_to_color(f.flow, a.max_mag));
  return kOk;
}

int cmd_export_bases(const Args& a) {
  if (a.unit.size() != 1) throw UsageError("--unit is m or s");
  const Model m = load_model(a.config, a.model, a.seed);
  for (const std::string& p : export_flow_bases(m, a.unit[0], a.level, a.out, a.scale)) std::cout << p << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiteFlowNet2 optical flow: inference, training, evaluation"};
  app.require_subcommand(1);
  Args a;

  auto* infer = app.add_subcommand("infer", "Estimate flow between two images");
  infer->add_option("img1", a.img1)->required()->check(CLI::ExistingFile);
  infer->add_option("img2", a.img2)->required()->check(CLI::ExistingFile);
  infer->add_option("--model", a.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--config", a.config, "Model config (default: config.json beside the checkpoint)");
  infer->add_option("--out", a.out, ".flo output")->required();
  infer->add_option("--viz", a.viz, "Color-coded PNG");

  auto* train = app.add_subcommand("train", "Train on synthetic data");
  train->add_option("--config", a.config, "Training config JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--out", a.out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "AEE / Fl-all / Out-Noc of an estimate");
  eval->add_option("--est", a.est, ".flo or KITTI .png")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", a.gt, ".flo or KITTI .png")->required()->check(CLI::ExistingFile);
  eval->add_option("--noc", a.noc, "Non-occluded mask image")->check(CLI::ExistingFile);
  eval->add_flag("--json", a.json_only, "JSON only");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  grad->add_option("--op", a.op, "Single op");
  grad->add_option("--seed", a.seed);

  auto* params = app.add_subcommand("params", "Parameter and layer counts");
  params->add_option("--config", a.config, "Model or training config")->check(CLI::ExistingFile);

  auto* viz = app.add_subcommand("viz", "Render flow with the color wheel");
  viz->add_option("flo", a.flo)->required()->check(CLI::ExistingFile);
  viz->add_option("png", a.png)->required();
  viz->add_option("--max-mag", a.max_mag, "Saturation magnitude (default: 99th percentile)");

  auto* bases = app.add_subcommand("export-bases", "Dump last-layer M/S filters as tiles");
  bases->add_option("--model", a.model, "Checkpoint (default: random init)")->check(CLI::ExistingFile);
  bases->add_option("--config", a.config, "Model config");
  bases->add_option("--unit", a.unit, "m or s");
  bases->add_option("--level", a.level);
  bases->add_option("--scale", a.scale, "Pixels per filter tap")->check(CLI::PositiveNumber);
  bases->add_option("--seed", a.seed, "Init seed without --model");
  bases->add_option("--out", a.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*infer) return cmd_infer(a);
    if (*train) return cmd_train(a);
    if (*eval) return cmd_eval(a);
    if (*grad) return cmd_gradcheck(a);
    if (*params) return cmd_params(a);
    if (*viz) return cmd_viz(a);
    if (*bases) return cmd_export_bases(a);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }
  return kUsage;
}
