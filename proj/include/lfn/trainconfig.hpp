#pragma once

#include <string>

#include <json.hpp>

#include "lfn/training.hpp"

namespace lfn {

struct DataConfig {
  unsigned seed = 1;
  int train_samples = 400;
  unsigned test_seed = 999;
  int test_samples = 20;
  SyntheticConfig synthetic{.translation_only = true};
  int crop = 64;
  bool flip = true;
  double noise = 0.0;  // Gaussian pixel noise std, off by default
};

struct TrainConfig {
  ModelConfig model = ModelConfig::liteflownet2();
  DataConfig data;
  std::string schedule = "stagewise";  // or "conventional"
  int iterations = 8000;
  int batch = 4;
  unsigned init_seed = 1;
  TrainOptions options;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, TrainConfig& c);
TrainConfig load_train_config(const std::string& path);

StageSchedule make_schedule(const TrainConfig& config);

struct TrainSummary {
  double final_loss = 0.0;
  double train_aee = 0.0;    // first test_samples training samples
  double heldout_aee = 0.0;
  double seconds = 0.0;
};

nlohmann::json to_json(const TrainSummary& s);

// Generates the data, re-initializes `model` (built from config.model) with
// random_init(init_seed), trains and evaluates. With a non-empty out_dir
// writes model.ckpt, config.json, loss.csv and summary.json there.
TrainSummary run_training(Model& model, const TrainConfig& config,
                          const std::string& out_dir = "", const LogFn& log = {});

}  // namespace lfn
