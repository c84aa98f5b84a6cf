#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "lfn/decoder.hpp"
#include "lfn/synthetic.hpp"

namespace lfn {

enum class LossKind { kL2, kCharbonnier };

struct LossSpec {
  std::map<int, double> level_weights{{6, 0.32}, {5, 0.08}, {4, 0.02}, {3, 0.01}, {2, 0.005}};
  double full_weight = 6.25e-4;  // extra term on the full-resolution output
  LossKind kind = LossKind::kCharbonnier;
  double eps2 = 0.01;
  double q = 0.2;
  double gt_scale = 0.05;  // multiplies estimate and ground truth alike
  bool every_flow = true;  // M, S and R of a level; false uses the level's final flow only

  void validate() const;
};

// Elementwise generalized Charbonnier (x^2 + eps2)^q.
Var charbonnier(Var x, double eps2 = 0.01, double q = 0.2);

// Mean over pixels of the penalty applied to the scaled endpoint error
// between `flow` and a fixed target of the same shape: 1 x 1 x 1 x 1.
Var endpoint_penalty(Var flow, const Tensor& target, const LossSpec& spec);

// Full-resolution flow brought to a level-local extent: bilinear resize with
// magnitudes scaled by the extent ratio of each axis.
Tensor flow_to_level(const Tensor& gt, int h, int w);

struct LossBreakdown {
  double total = 0.0;
  std::map<int, double> per_level;  // weighted contribution of each level
  double full = 0.0;
};

// Weighted sum over the computed levels plus the full-resolution term.
// gt is N x 2 x H x W in full-image pixels.
Var multiscale_loss(const MultiScaleFlows& flows, const Tensor& gt,
                    const LossSpec& spec, LossBreakdown* breakdown = nullptr);

struct AdamConfig {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 4e-4;  // decoupled
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Updates every trainable parameter from its grad. Throws StateError
  // naming the parameter when a gradient is not finite.
  void step(const std::vector<Parameter*>& params, double lr);
  long steps_taken(const std::string& name) const;

 private:
  struct Slot {
    Tensor m;
    Tensor v;
    long t = 0;
  };
  AdamConfig config_;
  std::map<std::string, Slot> slots_;
};

struct Stage {
  std::string name;
  std::vector<std::string> trainable;  // parameter-name prefixes
  ForwardLimit limit;
  std::vector<int> new_levels;  // decoder levels initialized from level k+1
  bool new_pseudo = false;
  int iterations = 0;
};

struct StageSchedule {
  std::vector<Stage> stages;
  int total_iterations() const;
  void validate() const;
};

// NetC+M6:S6, +R6, then one stage per finer level adding M:S and R, then
// the pseudo level when enabled. Iterations are split evenly.
StageSchedule stagewise_schedule(const ModelConfig& config, int total_iterations);
// One stage training everything.
StageSchedule conventional_schedule(const ModelConfig& config, int total_iterations);

using LogFn = std::function<void(const std::string&)>;

// Copies m/s/r weights of level k+1 into level k where names and shapes
// match; the rest keep their current values. Returns the number copied.
int init_level_from_coarser(Model& model, int level, const LogFn& warn = {});

// Sets trainable = true exactly for parameters under one of the prefixes.
void set_trainable(Model& model, const std::vector<std::string>& prefixes);

struct Batch {
  Tensor image1;  // normalized, N x 3 x H x W
  Tensor image2;
  Tensor flow;    // N x 2 x H x W, full-image pixels
};

using BatchSource = std::function<Batch(std::mt19937_64&)>;

// Draws `batch` samples with random crop and flip, normalized. noise > 0
// adds Gaussian pixel noise of that std to both frames. `data` must outlive
// the source.
BatchSource synthetic_batches(const std::vector<SyntheticSample>& data, int batch,
                              int crop, bool flip, double noise = 0.0);

struct TrainOptions {
  LossSpec loss;
  AdamConfig adam;
  double lr = 1e-4;
  // Fractions of the whole schedule after which lr is multiplied by lr_decay.
  std::vector<double> lr_milestones{0.4, 0.53, 0.67, 0.8};
  double lr_decay = 0.5;
  unsigned seed = 1;
  int log_every = 50;
  int final_window = 50;  // iterations averaged for TrainResult::final_loss
};

struct LogRow {
  int iteration = 0;
  int stage = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

struct TrainResult {
  std::vector<LogRow> log;  // every iteration
  double final_loss = 0.0;  // mean loss over the last window of the last stage
};

void write_loss_header(std::ostream& csv, const ModelConfig& config);
void write_loss_row(std::ostream& csv, const ModelConfig& config, const LogRow& row);

// Runs the stages in order: copy-initializes new levels, freezes everything
// outside the stage, trains with Adam on the truncated forward. Appends one
// CSV row per iteration when csv is given.
TrainResult run_stagewise(Model& model, const StageSchedule& schedule,
                          const BatchSource& source, const TrainOptions& options,
                          std::ostream* csv = nullptr, const LogFn& log = {});

// Mean multiscale loss of the full network over samples, without
// augmentation.
double evaluate_loss(const Model& model, const std::vector<SyntheticSample>& samples,
                     const LossSpec& spec);

// Mean end-point error of the model on full-resolution samples.
double mean_aee(const Model& model, const std::vector<SyntheticSample>& samples);

}  // namespace lfn
