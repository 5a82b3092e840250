#include "mixerflow/train/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "mixerflow/data/dataset.hpp"
#include "mixerflow/data/dequantize.hpp"
#include "mixerflow/data/loaders.hpp"
#include "mixerflow/data/pnm.hpp"
#include "mixerflow/data/shuffle.hpp"
#include "mixerflow/layers/actnorm.hpp"
#include "mixerflow/layers/coupling.hpp"
#include "mixerflow/layers/linear_block.hpp"
#include "mixerflow/layers/maf.hpp"
#include "mixerflow/layers/shift.hpp"
#include "mixerflow/model/mixer_layer.hpp"
#include "mixerflow/substrate/errors.hpp"
#include "mixerflow/train/optimizer.hpp"

namespace mixerflow {

namespace {

class EvalMode {
 public:
  explicit EvalMode(Module& m) : m_(m), previous_(m.training()) { m_.set_training(false); }
  ~EvalMode() { m_.set_training(previous_); }

 private:
  Module& m_;
  bool previous_;
};

Shape with_batch(std::size_t b, const Shape& sample) {
  Shape s{b};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

Tensor normal_tensor(const Shape& shape, Rng& rng, double mean = 0.0, double sd = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = mean + sd * rng.normal();
  return Tensor(shape, std::move(v));
}

MixerFlowConfig zoo_mixer_config() {
  MixerFlowConfig c;
  c.flows_per_stage = 1;
  c.hidden_dim = 16;
  return c;
}

template <class Fn>
CheckResult guarded(const std::string& name, Fn fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return {name, false, std::numeric_limits<double>::infinity(), e.what()};
  }
}

CheckResult identity_at_init() {
  MixerFlowConfig c;
  c.geometry = {8, 8, 1, 2, 2};
  c.n_layers = 4;
  c.flows_per_stage = 2;
  c.hidden_dim = 16;
  c.shift_every = 2;
  c.seed = 11;
  FlowModel model(c);
  model.force_actnorm_identity();
  EvalMode eval(model);
  NoGradGuard no_grad;

  // Pushing the basis through reveals the permutation, if there is one.
  const std::size_t d = model.dims();
  std::vector<double> eye(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
  const auto basis = model.forward(Tensor(with_batch(d, c.geometry.image_shape()), eye));
  const auto out = basis.output.values();
  std::vector<std::size_t> target(d);
  std::vector<bool> hit(d, false);
  double worst = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    std::size_t j = 0;
    for (std::size_t k = 1; k < d; ++k)
      if (std::abs(out[i * d + k]) > std::abs(out[i * d + j])) j = k;
    if (hit[j]) return {"identity_at_init", false, 1.0, "two inputs land on one output"};
    hit[j] = true;
    target[i] = j;
    for (std::size_t k = 0; k < d; ++k) worst = std::max(worst, std::abs(out[i * d + k] - (k == j ? 1.0 : 0.0)));
  }
  Rng rng(3);
  const Tensor x = normal_tensor(with_batch(8, c.geometry.image_shape()), rng);
  const auto fx = model.forward(x);
  const auto xv = x.values();
  const auto yv = fx.output.values();
  for (std::size_t s = 0; s < 8; ++s)
    for (std::size_t i = 0; i < d; ++i) worst = std::max(worst, std::abs(yv[s * d + target[i]] - xv[s * d + i]));
  for (double ld : fx.log_det.values()) worst = std::max(worst, std::abs(ld));
  return {"identity_at_init", worst < 1e-10, worst, ""};
}

CheckResult actnorm_init() {
  const Shape sample{16};
  ActNorm layer("actnorm", sample);
  Rng rng(5);
  const std::size_t n = 1000;
  const Tensor x = normal_tensor(with_batch(n, sample), rng, 5.0, 2.0);
  Tensor y;
  {
    DataInitScope init;
    NoGradGuard no_grad;
    y = layer.forward(x).output;
  }
  const auto v = y.values();
  double worst_mean = 0.0, worst_var = 0.0;
  for (std::size_t j = 0; j < sample[0]; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += v[i * sample[0] + j];
    m /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (v[i * sample[0] + j] - m) * (v[i * sample[0] + j] - m);
    var /= n;
    worst_mean = std::max(worst_mean, std::abs(m));
    worst_var = std::max(worst_var, std::abs(var - 1.0));
  }
  return {"actnorm_init", worst_mean < 1e-5 && worst_var < 1e-4, std::max(worst_mean, worst_var), ""};
}

CheckResult normalization(std::size_t train_steps) {
  FlowModel model(tiny_density_config());
  Rng rng(17);
  model.initialize(synthetic_plane_batch(256, rng));
  double worst = std::abs(density_mass(model, -8.0, 8.0, 0.05) - 1.0);
  Adam adam(model.parameters(), {});
  for (std::size_t t = 0; t < train_steps; ++t) {
    adam.zero_grad();
    const Tensor loss = negate(mean(model.log_likelihood(synthetic_plane_batch(256, rng)).log_prob));
    backward(loss);
    clip_global_norm(adam.parameters(), 5.0);
    adam.step(cosine_lr(5e-3, t, train_steps));
  }
  worst = std::max(worst, std::abs(density_mass(model, -8.0, 8.0, 0.05) - 1.0));
  return {"normalization", worst < 0.02, worst, ""};
}

}  // namespace

std::string CheckResult::line() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3e", worst);
  return "CHECK " + name + (passed ? " PASS " : " FAIL ") + buf;
}

CheckScope parse_check_scope(const std::string& name) {
  if (name == "layers") return CheckScope::layers;
  if (name == "model") return CheckScope::model;
  if (name == "gradients") return CheckScope::gradients;
  if (name == "data") return CheckScope::data;
  if (name == "all") return CheckScope::all;
  throw ConfigError("unknown check scope '" + name + "'");
}

PatchGeometry suite_geometry(std::size_t dims) {
  switch (dims) {
    case 8: return {2, 2, 2, 1, 2};
    case 16: return {4, 4, 1, 2, 2};
    case 48: return {4, 4, 3, 2, 2};
  }
  throw ContractError("no suite geometry with " + std::to_string(dims) + " dimensions");
}

void perturb_parameters(Module& module, Rng& rng, double scale) {
  for (Parameter* p : module.parameters())
    for (double& v : p->value.mutable_values()) v += scale * rng.normal();
}

std::vector<LayerCase> layer_zoo(const PatchGeometry& g, std::uint64_t seed) {
  Rng rng(seed);
  const Shape image = g.image_shape();
  const Shape mixer = g.mixer_shape();
  const std::size_t c = g.patch_width();
  std::vector<LayerCase> zoo;

  for (LinearMode mode : {LinearMode::lu, LinearMode::rlu}) {
    auto conv = std::make_unique<Conv1x1>("conv1x1", g, mode);
    conv->matrix().randomize(rng);
    zoo.push_back({std::string("conv1x1_") + to_string(mode), std::move(conv), image});
  }
  zoo.push_back({"patchify", std::make_unique<Patchify>("patchify", g), image});
  zoo.push_back({"transpose", std::make_unique<TransposeMixer>("transpose"), mixer});
  for (LinearMode mode : {LinearMode::lu, LinearMode::rlu}) {
    auto block = std::make_unique<LinearBlock>("linear", c, mode);
    block->matrix().randomize(rng);
    zoo.push_back({std::string("linear_") + to_string(mode), std::move(block), mixer});
  }
  for (ScaleLaw law : {ScaleLaw::exp, ScaleLaw::bounded}) {
    ConditionerOptions opts;
    opts.hidden = 16;
    auto coupling = make_affine_coupling("coupling", c, law, opts, rng);
    perturb_parameters(*coupling, rng, 0.1);
    zoo.push_back({std::string("coupling_") + to_string(law), std::move(coupling), mixer});
  }
  {
    auto actnorm = std::make_unique<ActNorm>("actnorm", mixer);
    actnorm->initialize_from(normal_tensor(with_batch(64, mixer), rng, 0.5, 1.5));
    perturb_parameters(*actnorm, rng, 0.1);
    zoo.push_back({"actnorm", std::move(actnorm), mixer});
  }
  {
    MadeOptions opts;
    opts.hidden = {16, 16};
    opts.mask_seed = rng.next();
    auto maf = std::make_unique<MafLayer>("maf", c, opts, rng);
    perturb_parameters(*maf, rng, 0.1);
    zoo.push_back({"maf", std::move(maf), mixer});
  }
  const MixerFlowConfig mc = zoo_mixer_config();
  {
    auto layer = std::make_unique<MixerLayer>("mixer", g, mc, rng);
    layer->visit([&](Bijection& b) {
      if (auto* an = dynamic_cast<ActNorm*>(&b)) an->set_identity();
    });
    perturb_parameters(*layer, rng, 0.05);
    zoo.push_back({"mixer_layer", std::move(layer), mixer});
  }
  bool shiftable = true;
  try {
    shifted_geometry(g, 1, 1);
  } catch (const GeometryError&) {
    shiftable = false;
  }
  if (shiftable) {
    auto shift = std::make_unique<ShiftLayer>("shift", g, 1, 1, [&](const std::string& path, const PatchGeometry& inner) {
      return std::make_unique<MixerLayer>(path, inner, mc, rng);
    });
    shift->visit([&](Bijection& b) {
      if (auto* an = dynamic_cast<ActNorm*>(&b)) an->set_identity();
    });
    perturb_parameters(*shift, rng, 0.05);
    zoo.push_back({"shift_mixer", std::move(shift), mixer});
  }
  return zoo;
}

CheckResult check_bijection(const std::string& name, Bijection& layer, const Shape& sample_shape,
                            const VerifyOptions& options) {
  const VerifyReport r = verify_bijection(layer, sample_shape, options);
  if (!r.failure.empty()) return {name, false, std::numeric_limits<double>::infinity(), r.failure};
  return {name, r.passed, std::max(r.max_round_trip_error, r.max_log_det_error), ""};
}

MixerFlowConfig tiny_gradient_config() {
  MixerFlowConfig c;
  c.geometry = {4, 4, 1, 2, 2};
  c.n_layers = 2;
  c.flows_per_stage = 2;
  c.hidden_dim = 16;
  c.shift_every = 2;
  c.seed = 21;
  return c;
}

MixerFlowConfig tiny_density_config() {
  MixerFlowConfig c;
  c.geometry = {1, 2, 1, 1, 2};
  c.n_layers = 2;
  c.flows_per_stage = 2;
  c.hidden_dim = 16;
  c.enable_shift_layers = false;
  c.seed = 31;
  return c;
}

Tensor random_images(const PatchGeometry& g, std::size_t n, Rng& rng) {
  std::vector<double> v(n * g.dims());
  for (double& x : v) x = rng.uniform();
  return Tensor(with_batch(n, g.image_shape()), std::move(v));
}

Tensor synthetic_plane_batch(std::size_t n, Rng& rng) {
  std::vector<double> v(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double a = rng.normal(), b = rng.normal();
    v[2 * i] = side * 1.5 + 0.6 * a;
    v[2 * i + 1] = side * 0.5 + 0.4 * a + 0.3 * b;
  }
  return Tensor({n, 1, 1, 2}, std::move(v));
}

double density_mass(FlowModel& model, double lo, double hi, double step) {
  const auto& g = model.config().geometry;
  if (g.dims() != 2) throw ContractError("density_mass needs a two-dimensional model");
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
  EvalMode eval(model);
  NoGradGuard no_grad;
  double total = 0.0;
  const std::size_t chunk_rows = 64;
  for (std::size_t r0 = 0; r0 < n; r0 += chunk_rows) {
    const std::size_t r1 = std::min(n, r0 + chunk_rows);
    std::vector<double> pts;
    pts.reserve((r1 - r0) * n * 2);
    for (std::size_t i = r0; i < r1; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        pts.push_back(lo + step * static_cast<double>(i));
        pts.push_back(lo + step * static_cast<double>(j));
      }
    const std::size_t count = pts.size() / 2;
    const Tensor lp = model.log_likelihood(Tensor({count, 1, 1, 2}, std::move(pts))).log_prob;
    const auto v = lp.values();
    for (std::size_t i = r0, k = 0; i < r1; ++i)
      for (std::size_t j = 0; j < n; ++j, ++k) {
        const double wi = (i == 0 || i == n - 1) ? 0.5 : 1.0;
        const double wj = (j == 0 || j == n - 1) ? 0.5 : 1.0;
        total += wi * wj * std::exp(v[k]);
      }
  }
  return total * step * step;
}

GradientCheckReport model_gradient_check(FlowModel& model, std::size_t batch, const GradientCheckOptions& options) {
  Rng rng(derive_seed(options.seed, 99));
  const Tensor x = random_images(model.config().geometry, batch, rng);
  if (!model.initialized()) model.initialize(x);
  perturb_parameters(model, rng, 0.05);
  return check_model_gradients(model, x, options);
}

std::vector<CheckResult> layer_checks() {
  std::vector<CheckResult> out;
  for (std::size_t d : {8, 16, 48}) {
    auto zoo = layer_zoo(suite_geometry(d), 100 + d);
    for (auto& c : zoo) {
      VerifyOptions opts;
      opts.seed = d;
      out.push_back(check_bijection(c.name + "@" + std::to_string(d), *c.layer, c.sample_shape, opts));
    }
  }
  return out;
}

std::vector<CheckResult> model_checks() {
  return {guarded("identity_at_init", identity_at_init), guarded("actnorm_init", actnorm_init),
          guarded("normalization", [] { return normalization(500); })};
}

std::vector<CheckResult> gradient_checks() {
  return {guarded("gradients", [] {
    FlowModel model(tiny_gradient_config());
    GradientCheckOptions opts;
    opts.max_elements = 200;
    opts.seed = 4;
    const auto r = model_gradient_check(model, 4, opts);
    return CheckResult{"gradients", r.passed, r.max_relative_error, r.worst_parameter};
  })};
}

std::vector<CheckResult> data_checks() {
  std::vector<CheckResult> out;
  out.push_back(guarded("dequantize_range", [] {
    ImageBatch b;
    std::vector<double> px(512);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<double>(i % 256);
    b.pixels = Tensor({2, 1, 16, 16}, px);
    const ImageBatch dq = dequantize(b, 256, 1, 0);
    const auto y = dq.pixels.values();
    // worst value: number of samples outside their bucket
    double misses = 0.0;
    for (std::size_t i = 0; i < px.size(); ++i)
      if (y[i] < px[i] / 256.0 || y[i] >= (px[i] + 1.0) / 256.0) misses += 1.0;
    return CheckResult{"dequantize_range", misses == 0.0, misses, ""};
  }));
  for (ShuffleKind kind : {ShuffleKind::local, ShuffleKind::global}) {
    const std::string name = "shuffle_roundtrip_" + to_string(kind);
    out.push_back(guarded(name, [&] {
      const PatchGeometry g{8, 8, 3, 2, 2};
      Rng rng(8);
      ImageBatch b;
      b.pixels = random_images(g, 10, rng);
      const auto spec = ShuffleSpec::make(kind, g, 123);
      const ImageBatch restored = inverse_shuffle(apply_shuffle(b, spec), spec);
      const auto back = restored.pixels.values();
      const auto orig = b.pixels.values();
      double worst = 0.0;
      for (std::size_t i = 0; i < orig.size(); ++i) worst = std::max(worst, std::abs(back[i] - orig[i]));
      return CheckResult{name, worst == 0.0, worst, ""};
    }));
  }
  out.push_back(guarded("pnm_roundtrip", [] {
    RawImage img{3, 5, 7, {}};
    for (std::size_t i = 0; i < 3 * 5 * 7; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 37));
    const RawImage back = decode_pnm(encode_pnm(img));
    const bool same = back.channels == 3 && back.height == 5 && back.width == 7 && back.pixels == img.pixels;
    return CheckResult{"pnm_roundtrip", same, same ? 0.0 : 1.0, ""};
  }));
  out.push_back(guarded("idx_decode", [] {
    std::vector<std::uint8_t> bytes = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3};
    for (int i = 0; i < 12; ++i) bytes.push_back(static_cast<std::uint8_t>(i * 20));
    const ImageDataset ds = decode_idx_images(bytes);
    const bool ok = ds.size() == 2 && ds.height == 2 && ds.width == 3 && ds.image(1)[5] == 220;
    return CheckResult{"idx_decode", ok, ok ? 0.0 : 1.0, ""};
  }));
  return out;
}

std::vector<CheckResult> run_checks(CheckScope scope) {
  std::vector<CheckResult> out;
  auto add = [&](std::vector<CheckResult> part) { out.insert(out.end(), part.begin(), part.end()); };
  if (scope == CheckScope::layers || scope == CheckScope::all) add(layer_checks());
  if (scope == CheckScope::model || scope == CheckScope::all) add(model_checks());
  if (scope == CheckScope::gradients || scope == CheckScope::all) add(gradient_checks());
  if (scope == CheckScope::data || scope == CheckScope::all) add(data_checks());
  return out;
}

}  // namespace mixerflow
