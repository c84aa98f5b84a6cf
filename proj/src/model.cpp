#include "lfn/model.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace lfn {

ModelConfig ModelConfig::liteflownet2() {
  ModelConfig c;
  // Short range with dense matching at the coarse levels; longer range on a
  // stride-2 displacement and spatial grid at levels 3 and below.
  for (int k = 4; k <= 6; ++k) c.levels[k] = {{3, 1, 1}, k >= 5 ? 3 : 5};
  c.levels[3] = {{6, 2, 2}, 5};
  c.levels[2] = {{6, 2, 2}, 7};
  return c;
}

const LevelSettings& ModelConfig::level(int k) const {
  auto it = levels.find(k);
  if (it == levels.end()) {
    throw DimensionError("model config: no settings for level " +
                         std::to_string(k));
  }
  return it->second;
}

void ModelConfig::validate() const {
  if (coarsest_level > 6 || finest_level < 2 || finest_level > coarsest_level) {
    throw DimensionError("model config: level range must satisfy 2 <= finest <= coarsest <= 6");
  }
  if (pseudo_level2 && finest_level != 3) {
    throw DimensionError("model config: pseudo level 2 requires finest_level 3");
  }
  if (m_widths.empty() || s_widths.empty() || r_widths.empty()) {
    throw DimensionError("model config: empty unit widths");
  }
  for (int k = finest_level; k <= coarsest_level; ++k) {
    const LevelSettings& s = level(k);
    s.cost.validate();
    if (s.last_kernel % 2 == 0) {
      throw DimensionError("model config: last_kernel must be odd");
    }
  }
  if (pseudo_kernel % 2 == 0) {
    throw DimensionError("model config: pseudo_kernel must be odd");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"encoder_channels", c.encoder_channels},
                     {"coarsest_level", c.coarsest_level},
                     {"finest_level", c.finest_level},
                     {"pseudo_level2", c.pseudo_level2},
                     {"pseudo_kernel", c.pseudo_kernel},
                     {"m_widths", c.m_widths},
                     {"s_widths", c.s_widths},
                     {"r_widths", c.r_widths},
                     {"leaky_slope", c.leaky_slope}};
  nlohmann::json levels = nlohmann::json::object();
  for (const auto& [k, s] : c.levels) {
    levels[std::to_string(k)] = {{"radius", s.cost.radius},
                                 {"disp_step", s.cost.disp_step},
                                 {"spatial_stride", s.cost.spatial_stride},
                                 {"last_kernel", s.last_kernel}};
  }
  j["levels"] = levels;
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c = ModelConfig::liteflownet2();
  if (j.contains("encoder_channels")) j.at("encoder_channels").get_to(c.encoder_channels);
  if (j.contains("coarsest_level")) j.at("coarsest_level").get_to(c.coarsest_level);
  if (j.contains("finest_level")) j.at("finest_level").get_to(c.finest_level);
  if (j.contains("pseudo_level2")) j.at("pseudo_level2").get_to(c.pseudo_level2);
  if (j.contains("pseudo_kernel")) j.at("pseudo_kernel").get_to(c.pseudo_kernel);
  if (j.contains("m_widths")) j.at("m_widths").get_to(c.m_widths);
  if (j.contains("s_widths")) j.at("s_widths").get_to(c.s_widths);
  if (j.contains("r_widths")) j.at("r_widths").get_to(c.r_widths);
  if (j.contains("leaky_slope")) j.at("leaky_slope").get_to(c.leaky_slope);
  if (j.contains("levels")) {
    for (const auto& [key, v] : j.at("levels").items()) {
      LevelSettings& s = c.levels[std::stoi(key)];
      s.cost.radius = v.value("radius", s.cost.radius);
      s.cost.disp_step = v.value("disp_step", s.cost.disp_step);
      s.cost.spatial_stride = v.value("spatial_stride", s.cost.spatial_stride);
      s.last_kernel = v.value("last_kernel", s.last_kernel);
    }
  }
}

ModelConfig load_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  // Training configs nest the architecture under "model".
  ModelConfig c = j.contains("model") ? j.at("model").get<ModelConfig>()
                                      : j.get<ModelConfig>();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<ConvLayer> make_unit(ParamStore& store, const std::string& prefix,
                                 int in_ch, const std::vector<int>& widths,
                                 int last_out, int last_kernel) {
  std::vector<ConvLayer> layers;
  int ch = in_ch;
  int idx = 1;
  for (int w : widths) {
    layers.push_back(make_conv(store, prefix + ".conv" + std::to_string(idx++),
                               ch, w, 3, 1, true));
    ch = w;
  }
  layers.push_back(make_conv(store, prefix + ".conv" + std::to_string(idx), ch,
                             last_out, last_kernel, 1, false));
  return layers;
}

}  // namespace

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& ch = config_.encoder_channels;
  auto enc = [&](const std::string& name, int in, int out, int k, int stride) {
    encoder_.push_back(make_conv(params_, "netc." + name, in, out, k, stride, true));
  };
  enc("conv1", 3, ch[0], 7, 1);
  enc("conv2_1", ch[0], ch[1], 3, 2);
  enc("conv2_2", ch[1], ch[1], 3, 1);
  enc("conv2_3", ch[1], ch[1], 3, 1);
  enc("conv3_1", ch[1], ch[2], 3, 2);
  enc("conv3_2", ch[2], ch[2], 3, 1);
  enc("conv4_1", ch[2], ch[3], 3, 2);
  enc("conv4_2", ch[3], ch[3], 3, 1);
  enc("conv5", ch[3], ch[4], 3, 2);
  enc("conv6", ch[4], ch[5], 3, 2);

  for (int k = config_.coarsest_level; k >= config_.finest_level; --k) {
    LevelUnits u;
    u.level = k;
    u.settings = config_.level(k);
    const int feat = config_.encoder_channels_at(k);
    const std::string lv = std::to_string(k);
    if (k != config_.coarsest_level) {
      u.upconv = &params_.add("m" + lv + ".upconv.weight", {2, 2, 4, 4});
    }
    u.m = make_unit(params_, "m" + lv, u.settings.cost.channels(),
                    config_.m_widths, 2, u.settings.last_kernel);
    u.s = make_unit(params_, "s" + lv, 2 * feat + 2, config_.s_widths, 2,
                    u.settings.last_kernel);
    const int omega = u.settings.last_kernel;
    std::vector<ConvLayer> r = make_unit(params_, "r" + lv, feat + 3,
                                         config_.r_widths, omega * omega, omega);
    u.r.omega = omega;
    u.r.dist = r.back();
    r.pop_back();
    u.r.stack = std::move(r);
    levels_.push_back(std::move(u));
  }
  if (config_.pseudo_level2) {
    PseudoUnits p;
    p.omega = config_.pseudo_kernel;
    p.m_last = make_conv(params_, "m2.conv" + std::to_string(config_.m_widths.size() + 1),
                         config_.m_widths.back(), 2, p.omega, 1, false);
    p.r_dist = make_conv(params_, "r2.conv" + std::to_string(config_.r_widths.size() + 1),
                         config_.r_widths.back(), p.omega * p.omega, p.omega, 1,
                         false);
    pseudo_ = std::move(p);
  }
}

const LevelUnits& Model::level(int k) const {
  for (const LevelUnits& u : levels_) {
    if (u.level == k) return u;
  }
  throw DimensionError("model has no decoder level " + std::to_string(k));
}

std::size_t Model::learnable_layers() const {
  std::size_t n = encoder_.size();
  for (const LevelUnits& u : levels_) {
    n += u.m.size() + u.s.size() + u.r.stack.size() + 1;
    if (u.upconv != nullptr) ++n;
  }
  if (pseudo_) n += 2;
  return n;
}

Tensor bilinear_upsample_kernel(int channels, double gain) {
  Tensor w({channels, channels, 4, 4});
  const double taps[4] = {0.25, 0.75, 0.75, 0.25};
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) w.at(c, c, y, x) = gain * taps[y] * taps[x];
    }
  }
  return w;
}

void random_init(Model& model, unsigned seed) {
  std::mt19937_64 rng(seed);
  const double slope = model.config().leaky_slope;
  for (Parameter* p : model.params().all()) {
    const std::string& name = p->name;
    if (name.ends_with(".bias")) {
      p->value.fill(0.0);
    } else if (name.ends_with(".upconv.weight")) {
      p->value = bilinear_upsample_kernel(2, 2.0);
    } else {
      const Shape s = p->value.shape();
      const double fan_in = static_cast<double>(s.c) * s.h * s.w;
      const double bound = std::sqrt(6.0 / ((1.0 + slope * slope) * fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : p->value.values()) v = dist(rng);
    }
    p->zero_grad();
  }
}

ParameterBreakdown count_parameters(const Model& model) {
  ParameterBreakdown b;
  for (const Parameter* p : model.params().all()) {
    b.total += p->count();
    b.by_module[p->name.substr(0, p->name.find('.'))] += p->count();
  }
  b.learnable_layers = model.learnable_layers();
  return b;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'L', 'F', 'N', '2', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint I/O assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("truncated checkpoint " + path);
  return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path);
  out.write(kMagic, sizeof(kMagic));
  const auto params = model.params().all();
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    const Shape s = p->value.shape();
    for (int d : {s.n, s.c, s.h, s.w}) write_le<std::int32_t>(out, d);
    for (double v : p->value.values()) write_le<float>(out, static_cast<float>(v));
  }
  if (!out) throw FormatError("failed writing checkpoint " + path);
}

void load_checkpoint(Model& model, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("bad checkpoint magic in " + path);
  }
  const auto version = read_le<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = read_le<std::uint32_t>(in, path);
  if (count != model.params().all().size()) {
    throw FormatError("checkpoint has " + std::to_string(count) +
                      " parameters, model expects " +
                      std::to_string(model.params().all().size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = read_le<std::uint32_t>(in, path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw FormatError("truncated checkpoint " + path);
    if (!model.params().contains(name)) {
      throw FormatError("checkpoint parameter " + name + " not in model");
    }
    Parameter& p = model.params().at(name);
    Shape s;
    s.n = read_le<std::int32_t>(in, path);
    s.c = read_le<std::int32_t>(in, path);
    s.h = read_le<std::int32_t>(in, path);
    s.w = read_le<std::int32_t>(in, path);
    if (!(s == p.value.shape())) {
      throw FormatError("checkpoint shape " + s.str() + " for " + name +
                        " does not match model " + p.value.shape().str());
    }
    for (double& v : p.value.values()) v = read_le<float>(in, path);
    p.zero_grad();
  }
}

std::string checkpoint_manifest(const Model& model) {
  std::ostringstream os;
  for (const Parameter* p : model.params().all()) {
    os << p->name << " " << p->value.shape().str() << " " << p->count() << "\n";
  }
  return os.str();
}

}  // namespace lfn
