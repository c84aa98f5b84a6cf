#include "lfn/training.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace lfn {

void LossSpec::validate() const {
  for (const auto& [level, w] : level_weights) {
    if (!(w > 0.0)) throw DimensionError("loss weight of level " + std::to_string(level) + " must be positive");
  }
  if (full_weight < 0.0) throw DimensionError("full-resolution loss weight must be >= 0");
  if (kind == LossKind::kCharbonnier && !(eps2 > 0.0 && q > 0.0)) {
    throw DimensionError("charbonnier needs eps2 > 0 and q > 0");
  }
  if (!(gt_scale > 0.0)) throw DimensionError("gt_scale must be positive");
}

Var charbonnier(Var x, double eps2, double q) {
  Tensor out = x.value();
  for (double& v : out.values()) v = std::pow(v * v + eps2, q);
  const int xi = x.id;
  return x.graph->record(std::move(out), {xi}, [xi, eps2, q](Graph& g, const Tensor& dy) {
    const Tensor& xv = g.value(xi);
    Tensor& gx = g.grad_slot(xi);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double v = xv.data()[i];
      gx.data()[i] += dy.data()[i] * 2.0 * q * v * std::pow(v * v + eps2, q - 1.0);
    }
  });
}

Var endpoint_penalty(Var flow, const Tensor& target, const LossSpec& spec) {
  require_same_shape(flow.shape(), target.shape(), "endpoint_penalty");
  const Tensor& f = flow.value();
  if (f.c() != 2) throw DimensionError("endpoint_penalty: flow must have 2 channels");
  const std::size_t plane = f.shape().plane();
  const double count = static_cast<double>(f.n()) * plane;
  const double s = spec.gt_scale;
  // d(penalty)/d(|e|^2) per pixel, cached for the backward pass.
  Tensor slope({f.n(), 1, f.h(), f.w()});
  double total = 0.0;
  for (int b = 0; b < f.n(); ++b) {
    const double* u = f.plane(b, 0);
    const double* v = f.plane(b, 1);
    const double* tu = target.plane(b, 0);
    const double* tv = target.plane(b, 1);
    double* sl = slope.plane(b, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      const double du = s * (u[i] - tu[i]);
      const double dv = s * (v[i] - tv[i]);
      const double e2 = du * du + dv * dv;
      if (spec.kind == LossKind::kL2) {
        const double e = std::sqrt(e2);
        total += e;
        sl[i] = e > 0.0 ? 0.5 / e : 0.0;
      } else {
        total += std::pow(e2 + spec.eps2, spec.q);
        sl[i] = spec.q * std::pow(e2 + spec.eps2, spec.q - 1.0);
      }
    }
  }
  const int fi = flow.id;
  return flow.graph->record(
      Tensor({1, 1, 1, 1}, total / count), {fi},
      [fi, target, slope, s, count, plane](Graph& g, const Tensor& dy) {
        const Tensor& fv = g.value(fi);
        Tensor& gf = g.grad_slot(fi);
        const double k = dy.data()[0] * 2.0 * s * s / count;
        for (int b = 0; b < fv.n(); ++b) {
          const double* sl = slope.plane(b, 0);
          for (int c = 0; c < 2; ++c) {
            const double* x = fv.plane(b, c);
            const double* t = target.plane(b, c);
            double* gx = gf.plane(b, c);
            for (std::size_t i = 0; i < plane; ++i) gx[i] += k * sl[i] * (x[i] - t[i]);
          }
        }
      });
}

Tensor flow_to_level(const Tensor& gt, int h, int w) {
  if (gt.h() == h && gt.w() == w) return gt;
  Tensor out = kernels::resize_bilinear(gt, h, w);
  const double sx = static_cast<double>(w) / gt.w();
  const double sy = static_cast<double>(h) / gt.h();
  const std::size_t plane = out.shape().plane();
  for (int b = 0; b < out.n(); ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      out.plane(b, 0)[i] *= sx;
      out.plane(b, 1)[i] *= sy;
    }
  }
  return out;
}

Var multiscale_loss(const MultiScaleFlows& flows, const Tensor& gt, const LossSpec& spec,
                    LossBreakdown* breakdown) {
  if (gt.c() != 2) throw DimensionError("multiscale_loss: ground truth must have 2 channels");
  require_same_shape(flows.full.shape(), gt.shape(), "multiscale_loss");
  Graph& g = *flows.full.graph;
  LossBreakdown bd;
  Var total = g.constant(Tensor({1, 1, 1, 1}));
  for (const LevelFlows& lf : flows.levels) {
    auto it = spec.level_weights.find(lf.level);
    if (it == spec.level_weights.end()) {
      throw DimensionError("multiscale_loss: no weight for level " + std::to_string(lf.level));
    }
    const Shape s = lf.final().shape();
    const Tensor target = flow_to_level(gt, s.h, s.w);
    std::vector<Var> terms;
    if (spec.every_flow) {
      for (Var f : {lf.m, lf.s, lf.r}) {
        if (f.valid()) terms.push_back(f);
      }
    } else {
      terms.push_back(lf.final());
    }
    for (Var f : terms) {
      Var term = scale(endpoint_penalty(f, target, spec), it->second);
      bd.per_level[lf.level] += term.value().data()[0];
      total = add(total, term);
    }
  }
  if (spec.full_weight > 0.0) {
    Var term = scale(endpoint_penalty(flows.full, gt, spec), spec.full_weight);
    bd.full = term.value().data()[0];
    total = add(total, term);
  }
  bd.total = total.value().data()[0];
  if (breakdown != nullptr) *breakdown = bd;
  return total;
}

void Adam::step(const std::vector<Parameter*>& params, double lr) {
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    if (!all_finite(p->grad)) {
      throw StateError("adam: non-finite gradient in " + p->name + " (max |g| " +
                       std::to_string(max_abs(p->grad)) + ")");
    }
    Slot& s = slots_[p->name];
    if (s.m.shape() != p->value.shape()) {
      s = Slot{Tensor(p->value.shape()), Tensor(p->value.shape()), 0};
    }
    ++s.t;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(s.t));
    double* x = p->value.data();
    const double* gr = p->grad.data();
    double* m = s.m.data();
    double* v = s.v.data();
    for (std::size_t i = 0; i < p->count(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gr[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gr[i] * gr[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      x[i] -= lr * (mhat / (std::sqrt(vhat) + config_.eps) + config_.weight_decay * x[i]);
    }
  }
}

long Adam::steps_taken(const std::string& name) const {
  auto it = slots_.find(name);
  return it == slots_.end() ? 0 : it->second.t;
}

int StageSchedule::total_iterations() const {
  int n = 0;
  for (const Stage& s : stages) n += s.iterations;
  return n;
}

void StageSchedule::validate() const {
  if (stages.empty()) throw DimensionError("stage schedule is empty");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].iterations < 0) throw DimensionError("stage " + stages[i].name + " has negative iterations");
    if (i == 0) continue;
    for (const std::string& p : stages[i - 1].trainable) {
      if (std::find(stages[i].trainable.begin(), stages[i].trainable.end(), p) ==
          stages[i].trainable.end()) {
        throw DimensionError("stage " + stages[i].name + " drops trainable group " + p);
      }
    }
  }
}

namespace {

void split_iterations(StageSchedule& s, int total) {
  const int n = static_cast<int>(s.stages.size());
  for (int i = 0; i < n; ++i) s.stages[i].iterations = total / n + (i < total % n ? 1 : 0);
}

}  // namespace

StageSchedule stagewise_schedule(const ModelConfig& config, int total_iterations) {
  StageSchedule s;
  const int top = config.coarsest_level;
  const std::string t = std::to_string(top);
  std::vector<std::string> groups{"netc", "m" + t, "s" + t};
  s.stages.push_back({"netc+m" + t + "s" + t, groups, {top, false}, {}, false, 0});
  groups.push_back("r" + t);
  s.stages.push_back({"+r" + t, groups, {top, true}, {}, false, 0});
  for (int k = top - 1; k >= config.finest_level; --k) {
    const std::string l = std::to_string(k);
    for (const char* unit : {"m", "s", "r"}) groups.push_back(unit + l);
    s.stages.push_back({"+m" + l + "s" + l + "r" + l, groups, {k, true}, {k}, false, 0});
  }
  if (config.pseudo_level2) {
    groups.push_back("m2");
    groups.push_back("r2");
    s.stages.push_back({"+pseudo2", groups, {0, true}, {}, true, 0});
  }
  split_iterations(s, total_iterations);
  return s;
}

StageSchedule conventional_schedule(const ModelConfig& config, int total_iterations) {
  (void)config;
  StageSchedule s;
  s.stages.push_back({"all", {""}, {0, true}, {}, false, total_iterations});
  return s;
}

int init_level_from_coarser(Model& model, int level, const LogFn& warn) {
  ParamStore& store = model.params();
  int copied = 0;
  const std::string from = std::to_string(level + 1);
  const std::string to = std::to_string(level);
  for (const char* unit : {"m", "s", "r"}) {
    for (Parameter* p : store.with_prefix(std::string(unit) + to + ".")) {
      const std::string source = std::string(unit) + from + p->name.substr(1 + to.size());
      if (store.contains(source) && store.at(source).value.shape() == p->value.shape()) {
        p->value = store.at(source).value;
        ++copied;
      } else if (warn) {
        warn("stage init: " + p->name + " has no shape-compatible source " + source +
             "; keeping fresh init");
      }
    }
  }
  return copied;
}

void set_trainable(Model& model, const std::vector<std::string>& prefixes) {
  for (Parameter* p : model.params().all()) {
    p->trainable = false;
    for (const std::string& pre : prefixes) {
      if (pre.empty() || p->name == pre || p->name.starts_with(pre + ".")) p->trainable = true;
    }
  }
}

BatchSource synthetic_batches(const std::vector<SyntheticSample>& data, int batch, int crop,
                              bool flip, double noise) {
  if (data.empty()) throw DimensionError("synthetic_batches: empty data set");
  if (batch < 1) throw DimensionError("synthetic_batches: batch must be >= 1");
  if (noise < 0.0) throw DimensionError("synthetic_batches: noise must be >= 0");
  return [&data, batch, crop, flip, noise](std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    Batch out{Tensor({batch, 3, crop, crop}), Tensor({batch, 3, crop, crop}),
              Tensor({batch, 2, crop, crop})};
    const std::size_t img = 3 * static_cast<std::size_t>(crop) * crop;
    const std::size_t flo = 2 * static_cast<std::size_t>(crop) * crop;
    for (int b = 0; b < batch; ++b) {
      SyntheticSample s = augment(data[pick(rng)], crop, flip, rng);
      if (noise > 0.0) {
        std::normal_distribution<double> n(0.0, noise);
        for (double& v : s.image1.values()) v += n(rng);
        for (double& v : s.image2.values()) v += n(rng);
      }
      const Tensor a = normalize_image(s.image1).image;
      const Tensor c = normalize_image(s.image2).image;
      std::copy(a.data(), a.data() + img, out.image1.data() + b * img);
      std::copy(c.data(), c.data() + img, out.image2.data() + b * img);
      std::copy(s.flow.data(), s.flow.data() + flo, out.flow.data() + b * flo);
    }
    return out;
  };
}

void write_loss_header(std::ostream& csv, const ModelConfig& config) {
  csv << "iteration,stage,lr,loss,full";
  for (int k = config.coarsest_level; k >= config.output_level(); --k) csv << ",level" << k;
  csv << '\n';
}

void write_loss_row(std::ostream& csv, const ModelConfig& config, const LogRow& row) {
  csv << row.iteration << ',' << row.stage << ',' << row.lr << ',' << row.loss.total << ','
      << row.loss.full;
  for (int k = config.coarsest_level; k >= config.output_level(); --k) {
    auto it = row.loss.per_level.find(k);
    csv << ',' << (it == row.loss.per_level.end() ? 0.0 : it->second);
  }
  csv << '\n';
}

TrainResult run_stagewise(Model& model, const StageSchedule& schedule, const BatchSource& source,
                          const TrainOptions& options, std::ostream* csv, const LogFn& log) {
  schedule.validate();
  options.loss.validate();
  std::mt19937_64 rng(options.seed);
  Adam adam(options.adam);
  TrainResult result;
  const std::vector<Parameter*> params = model.params().all();
  if (csv != nullptr) write_loss_header(*csv, model.config());
  const int total = schedule.total_iterations();
  int iteration = 0;
  for (std::size_t si = 0; si < schedule.stages.size(); ++si) {
    const Stage& stage = schedule.stages[si];
    for (int k : stage.new_levels) {
      const int n = init_level_from_coarser(model, k, log);
      if (log) log("stage " + stage.name + ": copied " + std::to_string(n) + " tensors into level " + std::to_string(k));
    }
    set_trainable(model, stage.trainable);
    for (int it = 0; it < stage.iterations; ++it, ++iteration) {
      double lr = options.lr;
      for (double m : options.lr_milestones) {
        if (iteration >= m * total) lr *= options.lr_decay;
      }
      const Batch batch = source(rng);
      Graph g;
      const MultiScaleFlows flows = forward(g, model, batch.image1, batch.image2, stage.limit);
      LogRow row{iteration, static_cast<int>(si), lr, {}};
      Var loss = multiscale_loss(flows, batch.flow, options.loss, &row.loss);
      model.params().zero_grad();
      g.backward(loss);
      adam.step(params, lr);
      if (csv != nullptr) write_loss_row(*csv, model.config(), row);
      if (log && options.log_every > 0 && (iteration + 1) % options.log_every == 0) {
        std::ostringstream msg;
        msg << "iter " << iteration + 1 << " stage " << stage.name << " lr " << lr << " loss "
            << row.loss.total;
        log(msg.str());
      }
      result.log.push_back(std::move(row));
    }
  }
  set_trainable(model, {""});
  const int last = schedule.stages.back().iterations;
  const int window = std::min(options.final_window, last);
  if (window > 0) {
    double s = 0.0;
    for (int i = 0; i < window; ++i) s += result.log[result.log.size() - 1 - i].loss.total;
    result.final_loss = s / window;
  }
  return result;
}

double evaluate_loss(const Model& model, const std::vector<SyntheticSample>& samples,
                     const LossSpec& spec) {
  if (samples.empty()) throw DimensionError("evaluate_loss: no samples");
  double total = 0.0;
  for (const SyntheticSample& s : samples) {
    Graph g;
    const MultiScaleFlows flows = forward(g, model, normalize_image(s.image1).image,
                                          normalize_image(s.image2).image);
    total += multiscale_loss(flows, s.flow, spec).value().data()[0];
  }
  return total / static_cast<double>(samples.size());
}

double mean_aee(const Model& model, const std::vector<SyntheticSample>& samples) {
  if (samples.empty()) throw DimensionError("mean_aee: no samples");
  double total = 0.0;
  std::size_t count = 0;
  for (const SyntheticSample& s : samples) {
    const Tensor est = infer_flow(model, s.image1, s.image2);
    const std::size_t plane = est.shape().plane();
    for (std::size_t i = 0; i < plane; ++i) {
      total += std::hypot(est.plane(0, 0)[i] - s.flow.plane(0, 0)[i],
                          est.plane(0, 1)[i] - s.flow.plane(0, 1)[i]);
    }
    count += plane;
  }
  return total / static_cast<double>(count);
}

}  // namespace lfn
