#include "lfn/trainconfig.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

namespace lfn {
namespace {

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

nlohmann::json loss_json(const LossSpec& s) {
  nlohmann::json w = nlohmann::json::object();
  for (const auto& [k, v] : s.level_weights) w[std::to_string(k)] = v;
  return {{"kind", s.kind == LossKind::kL2 ? "l2" : "charbonnier"},
          {"level_weights", w},
          {"full_weight", s.full_weight},
          {"eps2", s.eps2},
          {"q", s.q},
          {"gt_scale", s.gt_scale},
          {"every_flow", s.every_flow}};
}

void loss_from_json(const nlohmann::json& j, LossSpec& s) {
  if (j.contains("kind")) {
    const std::string k = j.at("kind").get<std::string>();
    if (k == "l2") {
      s.kind = LossKind::kL2;
    } else if (k == "charbonnier") {
      s.kind = LossKind::kCharbonnier;
    } else {
      throw FormatError("unknown loss kind '" + k + "'");
    }
  }
  if (j.contains("level_weights")) {
    s.level_weights.clear();
    for (const auto& [k, v] : j.at("level_weights").items()) s.level_weights[std::stoi(k)] = v.get<double>();
  }
  get_if(j, "full_weight", s.full_weight);
  get_if(j, "eps2", s.eps2);
  get_if(j, "q", s.q);
  get_if(j, "gt_scale", s.gt_scale);
  get_if(j, "every_flow", s.every_flow);
}

std::vector<SyntheticSample> head(const std::vector<SyntheticSample>& v, int n) {
  return {v.begin(), v.begin() + std::min<std::size_t>(v.size(), static_cast<std::size_t>(n))};
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  options.loss.validate();
  if (schedule != "stagewise" && schedule != "conventional") {
    throw FormatError("schedule must be stagewise or conventional, got '" + schedule + "'");
  }
  if (iterations < 1) throw DimensionError("iterations must be >= 1");
  if (batch < 1) throw DimensionError("batch must be >= 1");
  if (data.train_samples < 1 || data.test_samples < 1) throw DimensionError("sample counts must be >= 1");
  if (data.crop < 32 || data.crop % 32 != 0 || data.crop > data.synthetic.extent) {
    throw DimensionError("crop must be a multiple of 32 no larger than the sample extent");
  }
  if (data.noise < 0.0) throw DimensionError("noise must be >= 0");
  if (!(options.lr > 0.0)) throw DimensionError("lr must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  const SyntheticConfig& s = c.data.synthetic;
  j = nlohmann::json{
      {"model", c.model},
      {"data",
       {{"seed", c.data.seed},
        {"train_samples", c.data.train_samples},
        {"test_seed", c.data.test_seed},
        {"test_samples", c.data.test_samples},
        {"extent", s.extent},
        {"max_displacement", s.max_displacement},
        {"min_objects", s.min_objects},
        {"max_objects", s.max_objects},
        {"translation_only", s.translation_only},
        {"integer_displacements", s.integer_displacements},
        {"crop", c.data.crop},
        {"flip", c.data.flip},
        {"noise", c.data.noise}}},
      {"schedule", c.schedule},
      {"iterations", c.iterations},
      {"batch", c.batch},
      {"init_seed", c.init_seed},
      {"seed", c.options.seed},
      {"lr", c.options.lr},
      {"lr_milestones", c.options.lr_milestones},
      {"lr_decay", c.options.lr_decay},
      {"log_every", c.options.log_every},
      {"final_window", c.options.final_window},
      {"loss", loss_json(c.options.loss)},
      {"adam",
       {{"beta1", c.options.adam.beta1},
        {"beta2", c.options.adam.beta2},
        {"eps", c.options.adam.eps},
        {"weight_decay", c.options.adam.weight_decay}}}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
  if (j.contains("data")) {
    const nlohmann::json& d = j.at("data");
    SyntheticConfig& s = c.data.synthetic;
    get_if(d, "seed", c.data.seed);
    get_if(d, "train_samples", c.data.train_samples);
    get_if(d, "test_seed", c.data.test_seed);
    get_if(d, "test_samples", c.data.test_samples);
    get_if(d, "extent", s.extent);
    get_if(d, "max_displacement", s.max_displacement);
    get_if(d, "min_objects", s.min_objects);
    get_if(d, "max_objects", s.max_objects);
    get_if(d, "translation_only", s.translation_only);
    get_if(d, "integer_displacements", s.integer_displacements);
    get_if(d, "crop", c.data.crop);
    get_if(d, "flip", c.data.flip);
    get_if(d, "noise", c.data.noise);
  }
  get_if(j, "schedule", c.schedule);
  get_if(j, "iterations", c.iterations);
  get_if(j, "batch", c.batch);
  get_if(j, "init_seed", c.init_seed);
  get_if(j, "seed", c.options.seed);
  get_if(j, "lr", c.options.lr);
  get_if(j, "lr_milestones", c.options.lr_milestones);
  get_if(j, "lr_decay", c.options.lr_decay);
  get_if(j, "log_every", c.options.log_every);
  get_if(j, "final_window", c.options.final_window);
  if (j.contains("loss")) loss_from_json(j.at("loss"), c.options.loss);
  if (j.contains("adam")) {
    const nlohmann::json& a = j.at("adam");
    get_if(a, "beta1", c.options.adam.beta1);
    get_if(a, "beta2", c.options.adam.beta2);
    get_if(a, "eps", c.options.adam.eps);
    get_if(a, "weight_decay", c.options.adam.weight_decay);
  }
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  TrainConfig c = j.get<TrainConfig>();
  c.validate();
  return c;
}

StageSchedule make_schedule(const TrainConfig& config) {
  return config.schedule == "conventional" ? conventional_schedule(config.model, config.iterations)
                                           : stagewise_schedule(config.model, config.iterations);
}

nlohmann::json to_json(const TrainSummary& s) {
  return {{"final_loss", s.final_loss},
          {"train_aee", s.train_aee},
          {"heldout_aee", s.heldout_aee},
          {"seconds", s.seconds}};
}

TrainSummary run_training(Model& model, const TrainConfig& config, const std::string& out_dir,
                          const LogFn& log) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto train = generate_synthetic(config.data.seed, config.data.train_samples, config.data.synthetic);
  const auto test = generate_synthetic(config.data.test_seed, config.data.test_samples, config.data.synthetic);
  random_init(model, config.init_seed);
  const BatchSource source = synthetic_batches(train, config.batch, config.data.crop, config.data.flip, config.data.noise);

  std::ofstream csv;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    csv.open(std::filesystem::path(out_dir) / "loss.csv");
    if (!csv) throw IOError("cannot write " + out_dir + "/loss.csv");
  }
  const TrainResult r = run_stagewise(model, make_schedule(config), source, config.options,
                                      out_dir.empty() ? nullptr : &csv, log);
  TrainSummary s;
  s.final_loss = r.final_loss;
  s.train_aee = mean_aee(model, head(train, config.data.test_samples));
  s.heldout_aee = mean_aee(model, test);
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (!out_dir.empty()) {
    const std::filesystem::path dir(out_dir);
    save_checkpoint(model, (dir / "model.ckpt").string());
    std::ofstream(dir / "config.json") << nlohmann::json(config).dump(2) << "\n";
    std::ofstream(dir / "summary.json") << to_json(s).dump(2) << "\n";
  }
  return s;
}

}  // namespace lfn
