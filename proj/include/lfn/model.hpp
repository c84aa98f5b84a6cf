#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfn/costvolume.hpp"
#include "lfn/layers.hpp"
#include "lfn/regularizer.hpp"

namespace lfn {

// Per-level decoder settings.
struct LevelSettings {
  CostVolumeSpec cost;
  int last_kernel = 3;  // kernel of the last M/S conv and of R's dist conv
};

struct ModelConfig {
  // Encoder output channels for pyramid levels 1..6.
  std::array<int, 6> encoder_channels{32, 32, 64, 96, 128, 192};
  int coarsest_level = 6;
  int finest_level = 3;
  // Truncated level-2 inference/regularization on upsampled level-3
  // activations. Requires finest_level == 3.
  bool pseudo_level2 = true;
  int pseudo_kernel = 7;
  // Hidden widths of the M, S and R stacks (before their last layer).
  std::vector<int> m_widths{128, 128, 96, 64, 32};
  std::vector<int> s_widths{128, 128, 96, 64, 32};
  std::vector<int> r_widths{128, 128, 64, 64, 32, 32};
  double leaky_slope = 0.1;
  std::map<int, LevelSettings> levels;

  static ModelConfig liteflownet2();
  const LevelSettings& level(int k) const;
  int encoder_channels_at(int k) const { return encoder_channels.at(k - 1); }
  // Finest pyramid level the decoder emits a flow for.
  int output_level() const { return pseudo_level2 ? 2 : finest_level; }
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
ModelConfig load_model_config(const std::string& path);

// Layers of one decoder level.
struct LevelUnits {
  int level = 0;
  LevelSettings settings;
  Parameter* upconv = nullptr;  // absent at the coarsest level
  std::vector<ConvLayer> m;     // cost volume -> residual flow
  std::vector<ConvLayer> s;     // concat(F1, warped F2, u_m) -> residual flow
  RegularizerUnit r;
};

// Retained last layers of the pseudo level 2.
struct PseudoUnits {
  ConvLayer m_last;  // 32 -> 2 on upsampled level-3 M features
  ConvLayer r_dist;  // 32 -> omega^2 on upsampled level-3 R features
  int omega = 7;
};

// Full network: encoder, per-level M/S/R units, optional pseudo level.
class Model {
 public:
  explicit Model(ModelConfig config);
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const std::vector<ConvLayer>& encoder() const { return encoder_; }
  // Ordered coarsest -> finest.
  const std::vector<LevelUnits>& levels() const { return levels_; }
  const LevelUnits& level(int k) const;
  const std::optional<PseudoUnits>& pseudo() const { return pseudo_; }

  std::size_t learnable_layers() const;

 private:
  ModelConfig config_;
  ParamStore params_;
  std::vector<ConvLayer> encoder_;
  std::vector<LevelUnits> levels_;
  std::optional<PseudoUnits> pseudo_;
};

// Fan-in scaled uniform init for convolutions, zero biases, 2x bilinear
// kernels for the flow upsamplers. Deterministic per seed.
void random_init(Model& model, unsigned seed);

// Bilinear 4x4 kernel scaled by `gain` on the channel diagonal.
Tensor bilinear_upsample_kernel(int channels, double gain);

struct ParameterBreakdown {
  std::size_t total = 0;
  std::size_t learnable_layers = 0;
  std::map<std::string, std::size_t> by_module;  // "netc", "m5", "r3", ...
};
ParameterBreakdown count_parameters(const Model& model);

// Binary checkpoint: "LFN2CKPT", uint32 version, uint32 record count, then
// per record (sorted by name): uint32 name length, name bytes, 4 x int32
// shape, float32 little-endian values.
void save_checkpoint(const Model& model, const std::string& path);
void load_checkpoint(Model& model, const std::string& path);
// One line per parameter: name, shape, element count.
std::string checkpoint_manifest(const Model& model);

}  // namespace lfn
