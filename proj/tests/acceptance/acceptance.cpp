// Acceptance criteria runner. Prints one PASS/FAIL line per criterion and exits non-zero if any fails.
//   acceptance [--only 1,2,7] [--mnist DIR] [--work DIR]

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../support/oracles.hpp"
#include "mixerflow/data/loaders.hpp"
#include "mixerflow/data/shuffle.hpp"
#include "mixerflow/flow/density.hpp"
#include "mixerflow/layers/actnorm.hpp"
#include "mixerflow/layers/maf.hpp"
#include "mixerflow/model/flow_model.hpp"
#include "mixerflow/model/hybrid.hpp"
#include "mixerflow/substrate/errors.hpp"
#include "mixerflow/train/checks.hpp"
#include "mixerflow/train/commands.hpp"
#include "mixerflow/train/optimizer.hpp"
#include "mixerflow/train/run_config.hpp"
#include "mixerflow/train/session.hpp"

using namespace mixerflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Context {
  fs::path mnist;
  fs::path work;
  std::unique_ptr<TrainingSession> desk;  // the trained gate-7 session, reused by gate 10
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::vector<double> flat(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

Shape batched(const Shape& sample) {
  Shape s{1};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Dequantizes 8-bit images with test-side noise: y = (x + u)/256, u ~ U[0,1).
Tensor dequantize_oracle(const ImageDataset& d, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t per = d.sample_size();
  std::vector<double> v(n * per);
  for (std::size_t i = 0; i < n * per; ++i) v[i] = std::min((d.pixels[i] + u(gen)) / 256.0, (d.pixels[i] + 1.0) / 256.0 - 1e-12);
  return Tensor({n, d.channels, d.height, d.width}, std::move(v));
}

// Mean bpd over the first n images, from raw model log-densities.
double bpd_oracle(FlowModel& model, const ImageDataset& d, std::size_t n, std::uint64_t seed) {
  const Tensor x = dequantize_oracle(d, n, seed);
  const bool was = model.training();
  model.set_training(false);
  NoGradGuard no_grad;
  const double dims = static_cast<double>(d.sample_size());
  double total = 0.0;
  const std::size_t chunk = 250;
  for (std::size_t s = 0; s < n; s += chunk) {
    const std::size_t e = std::min(n, s + chunk);
    const auto xv = x.values();
    const Tensor part({e - s, d.channels, d.height, d.width},
                      std::vector<double>(xv.begin() + s * d.sample_size(), xv.begin() + e * d.sample_size()));
    const Tensor lp = model.log_likelihood(part).log_prob;
    for (double v : lp.values()) total += -v / (dims * std::log(2.0)) + 8.0;
  }
  model.set_training(was);
  return total / static_cast<double>(n);
}

// 1. Every layer type: round trip and log-det against a finite-difference Jacobian.
Outcome layer_bijectivity(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t probes = 20;
  double worst_rt = 0.0, worst_ld = 0.0;
  std::string worst_name;
  std::set<std::string> covered;
  std::size_t total = 0;
  for (std::size_t dims : {8, 16, 48}) {
    auto zoo = layer_zoo(suite_geometry(dims), 1000 + dims);
    std::mt19937_64 gen(dims);
    std::normal_distribution<double> normal;
    for (auto& c : zoo) {
      c.layer->set_training(false);
      NoGradGuard no_grad;
      const Shape shape = batched(c.sample_shape);
      const std::size_t d = shape_numel(shape);
      const auto fn = [&](const std::vector<double>& v) { return flat(c.layer->forward(Tensor(shape, v)).output); };
      for (std::size_t p = 0; p < probes; ++p) {
        std::vector<double> x(d);
        for (double& v : x) v = normal(gen);
        const FlowResult r = c.layer->forward(Tensor(shape, x));
        const double rt = oracle::max_abs_diff(flat(c.layer->inverse(r.output)), x);
        const auto det = oracle::slogdet(oracle::jacobian(fn, x), d);
        const double ld = det.sign == 0 ? std::numeric_limits<double>::infinity() : std::fabs(r.log_det.item() - det.log_abs);
        if (rt > worst_rt || ld > worst_ld) worst_name = c.name + "@D" + std::to_string(dims);
        worst_rt = std::max(worst_rt, rt);
        worst_ld = std::max(worst_ld, ld);
        ++total;
      }
      covered.insert(c.name);
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = worst_rt < 1e-8 && worst_ld < 1e-6 && secs < 120 && covered.count("shift_mixer") && covered.count("maf");
  return {ok, std::to_string(covered.size()) + " layer kinds, " + std::to_string(total) + " probes, round trip " +
                  fmt("%.2e", worst_rt) + ", log-det " + fmt("%.2e", worst_ld) + " (worst " + worst_name + "), " +
                  fmt("%.1f s", secs)};
}

// 2. Fresh model with identity ActNorm equals the patch-order permutation with zero log-det.
Outcome identity_at_init(Context&) {
  MixerFlowConfig cfg;  // 32x32x3, patch 4
  cfg.seed = 2;
  auto model = build_model(cfg);
  model->force_actnorm_identity();
  model->set_training(false);
  const PatchGeometry& g = cfg.geometry;
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u;
  const std::size_t n = 4;
  std::vector<double> x(n * g.dims());
  for (double& v : x) v = u(gen);
  NoGradGuard no_grad;
  const FlowResult r = model->forward(Tensor({n, g.channels, g.height, g.width}, x));
  const auto out = flat(r.output);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = 0;
    for (std::size_t py = 0; py < g.height / g.patch_h; ++py)
      for (std::size_t px = 0; px < g.width / g.patch_w; ++px)
        for (std::size_t dy = 0; dy < g.patch_h; ++dy)
          for (std::size_t dx = 0; dx < g.patch_w; ++dx)
            for (std::size_t c = 0; c < g.channels; ++c, ++k) {
              const std::size_t src = (c * g.height + py * g.patch_h + dy) * g.width + px * g.patch_w + dx;
              worst = std::max(worst, std::fabs(out[i * g.dims() + k] - x[i * g.dims() + src]));
            }
  }
  double ld = 0.0;
  for (double v : r.log_det.values()) ld = std::max(ld, std::fabs(v));
  return {worst < 1e-10 && ld < 1e-10, "max |f(x) - Pi(x)| " + fmt("%.2e", worst) + ", max |log det| " + fmt("%.2e", ld)};
}

// 3. ActNorm data init on a mean-5, std-2 batch.
Outcome actnorm_init(Context&) {
  const Shape sample{6, 8};
  const std::size_t n = 4000, d = 48;
  std::mt19937_64 gen(3);
  std::normal_distribution<double> normal(5.0, 2.0);
  std::vector<double> x(n * d);
  for (double& v : x) v = normal(gen);
  ActNorm layer("actnorm", sample);
  std::vector<double> y;
  {
    DataInitScope init;
    NoGradGuard no_grad;
    y = flat(layer.forward(Tensor({n, 6, 8}, x)).output);
  }
  double worst_mean = 0.0, worst_var = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += y[i * d + j];
    m /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (y[i * d + j] - m) * (y[i * d + j] - m);
    var /= n;
    worst_mean = std::max(worst_mean, std::fabs(m));
    worst_var = std::max(worst_var, std::fabs(var - 1.0));
  }
  return {worst_mean < 1e-5 && worst_var < 1e-4, "max |mean| " + fmt("%.2e", worst_mean) + ", max |var - 1| " + fmt("%.2e", worst_var)};
}

// 4. Autograd NLL gradients of a tiny model against central differences.
Outcome gradient_check(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  MixerFlowConfig cfg;
  cfg.geometry = {4, 4, 1, 2, 2};
  cfg.n_layers = 2;
  cfg.flows_per_stage = 2;
  cfg.hidden_dim = 16;
  cfg.shift_every = 2;
  cfg.seed = 41;
  FlowModel model(cfg);
  std::mt19937_64 gen(41);
  std::uniform_real_distribution<double> u;
  std::normal_distribution<double> normal;
  std::vector<double> xv(4 * 16);
  for (double& v : xv) v = u(gen);
  const Tensor x({4, 1, 4, 4}, xv);
  model.initialize(x);
  for (Parameter* p : model.parameters())
    for (double& v : p->value.mutable_values()) v += 0.05 * normal(gen);

  const auto nll = [&] { return negate(mean(model.log_likelihood(x).log_prob)); };
  const Tensor loss = nll();
  const double loss0 = loss.item();
  backward(loss);

  std::vector<std::pair<Parameter*, std::size_t>> elements;
  for (Parameter* p : model.parameters())
    for (std::size_t i = 0; i < p->value.numel(); ++i) elements.emplace_back(p, i);
  std::shuffle(elements.begin(), elements.end(), gen);
  elements.resize(std::min<std::size_t>(elements.size(), 256));

  const double h = 1e-5;
  // Below this magnitude a central difference cannot resolve the gradient: loss rounding / h.
  const double floor = std::max(1e-6, 1e5 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::fabs(loss0)) / h);
  double worst = 0.0;
  std::string where;
  NoGradGuard no_grad;
  for (auto [p, i] : elements) {
    const Tensor g = p->gradient();
    const double analytic = g[i];
    double& w = p->value.mutable_values()[i];
    const double keep = w;
    w = keep + h;
    const double up = nll().item();
    w = keep - h;
    const double down = nll().item();
    w = keep;
    const double numeric = (up - down) / (2 * h);
    const double rel = std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
    if (rel > worst) {
      worst = rel;
      where = p->name + "[" + std::to_string(i) + "]";
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && elements.size() >= 200 && secs < 300,
          std::to_string(elements.size()) + " elements, max rel err " + fmt("%.2e", worst) + " at " + where + " (floor " +
              fmt("%.1e", floor) + "), " + fmt("%.1f s", secs)};
}

// Trapezoidal integral of exp(log p) over [lo, hi]^2.
double quadrature(FlowModel& model, double lo, double hi, double step) {
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
  model.set_training(false);
  NoGradGuard no_grad;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row;
    for (std::size_t j = 0; j < n; ++j) {
      row.push_back(lo + step * i);
      row.push_back(lo + step * j);
    }
    const Tensor lp = model.log_likelihood(Tensor({n, 1, 1, 2}, row)).log_prob;
    const auto v = lp.values();
    const double wi = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    for (std::size_t j = 0; j < n; ++j) total += wi * ((j == 0 || j == n - 1) ? 0.5 : 1.0) * std::exp(v[j]);
  }
  model.set_training(true);
  return total * step * step;
}

// 5. A 2-D flow integrates to one before and after training.
Outcome normalization(Context&) {
  MixerFlowConfig cfg;
  cfg.geometry = {1, 2, 1, 1, 2};
  cfg.n_layers = 2;
  cfg.flows_per_stage = 2;
  cfg.hidden_dim = 16;
  cfg.enable_shift_layers = false;
  cfg.seed = 51;
  FlowModel model(cfg);
  std::mt19937_64 gen(51);
  std::normal_distribution<double> normal;
  const auto batch = [&](std::size_t n) {
    // Two tilted blobs.
    std::vector<double> v;
    for (std::size_t i = 0; i < n; ++i) {
      const double side = (gen() & 1) ? 1.0 : -1.0;
      const double a = normal(gen), b = normal(gen);
      v.push_back(side * 1.5 + 0.6 * a);
      v.push_back(side * 0.5 + 0.4 * a + 0.3 * b);
    }
    return Tensor({n, 1, 1, 2}, v);
  };
  model.initialize(batch(256));
  const double before = quadrature(model, -8, 8, 0.05);
  Adam adam(model.parameters());
  const double nll_start = -mean(model.log_likelihood(batch(1024)).log_prob).item();
  for (std::size_t t = 0; t < 500; ++t) {
    adam.zero_grad();
    backward(negate(mean(model.log_likelihood(batch(256)).log_prob)));
    clip_global_norm(adam.parameters(), 5.0);
    adam.step(cosine_lr(5e-3, t, 500));
  }
  const double nll_end = -mean(model.log_likelihood(batch(1024)).log_prob).item();
  const double after = quadrature(model, -8, 8, 0.05);
  const bool ok = std::fabs(before - 1) <= 0.02 && std::fabs(after - 1) <= 0.02;
  return {ok, "mass before " + fmt("%.5f", before) + ", after 500 steps " + fmt("%.5f", after) + " (nll " +
                  fmt("%.3f", nll_start) + " -> " + fmt("%.3f", nll_end) + ")"};
}

// 6. Bits-per-dimension anchors.
Outcome bpd_anchors(Context&) {
  const double zero = bits_per_dim(0.0, 3072, 256);
  const double slope = bits_per_dim(-1.0, 3072, 256) - zero;  // bpd per nat of NLL
  const double nats = 0.01 / slope;
  const double oracle_nats = 0.01 * 3072 * std::log(2.0);
  const bool ok = zero == 8.0 && std::fabs(nats - 21.29) <= 0.01 && std::fabs(nats - oracle_nats) < 1e-9;
  return {ok, "bpd(0) = " + fmt("%.17g", zero) + ", 0.01 bpd = " + fmt("%.6f", nats) + " nats"};
}

// 7. Desk-scale MNIST training.
Outcome mnist_desk(Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig run = load_run_config(fs::path(MIXERFLOW_SOURCE_DIR) / "configs/mnist_desk.cfg");
  run.data_dir = ctx.mnist.string();
  run.out_dir = (ctx.work / "mnist_desk").string();
  auto session = std::make_unique<TrainingSession>(run);
  session->load_data();
  std::string failure;
  try {
    session->run(&std::cerr);
  } catch (const NumericError& e) {
    failure = e.what();
  }
  const double secs = seconds_since(t0);
  const auto& losses = session->step_losses();
  std::vector<double> windows;
  for (std::size_t w = 0; w + 1 <= losses.size() / 500 && w < 4; ++w) {
    double s = 0.0;
    for (std::size_t i = w * 500; i < (w + 1) * 500; ++i) s += losses[i];
    windows.push_back(s / 500);
  }
  bool monotone = windows.size() == 4;
  for (std::size_t w = 1; w < windows.size(); ++w) monotone = monotone && windows[w] < windows[w - 1];
  std::string wtext;
  for (double w : windows) wtext += (wtext.empty() ? "" : " > ") + fmt("%.1f", w);
  if (!failure.empty()) {
    ctx.desk = std::move(session);
    return {false, "numeric failure: " + failure + "; windows " + wtext};
  }
  const double val = bpd_oracle(session->model(), session->val_data(), session->val_data().size(), 2024);
  ctx.desk = std::move(session);
  return {val <= 4.0 && monotone, "val bpd " + fmt("%.4f", val) + " after " + std::to_string(losses.size()) +
                                      " steps, 500-step NLL windows " + wtext + ", " + fmt("%.0f s", secs)};
}

// 8. MAF couplings: trains without numeric failure and improves by half a bit; MADE is strictly autoregressive.
Outcome mnist_maf(Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig run = load_run_config(fs::path(MIXERFLOW_SOURCE_DIR) / "configs/mnist_maf.cfg");
  run.data_dir = ctx.mnist.string();
  run.out_dir = (ctx.work / "mnist_maf").string();
  if (run.model.coupling_kind != CouplingKind::maf) return {false, "config does not select maf couplings"};
  TrainingSession session(run);
  session.load_data();
  session.initialize();
  const std::size_t n_eval = std::min<std::size_t>(500, session.val_data().size());
  const double start = bpd_oracle(session.model(), session.val_data(), n_eval, 88);
  std::string failure;
  try {
    session.run(&std::cerr);
  } catch (const NumericError& e) {
    failure = e.what();
  }
  if (!failure.empty()) return {false, "numeric failure: " + failure};
  const double end = bpd_oracle(session.model(), session.val_data(), n_eval, 88);

  // Finite-difference Jacobian of every MADE network: d out_i / d x_j must vanish for j >= i.
  double upper = 0.0;
  std::size_t networks = 0;
  std::mt19937_64 gen(8);
  std::normal_distribution<double> normal;
  session.model().visit([&](Bijection& b) {
    auto* maf = dynamic_cast<MafLayer*>(&b);
    if (!maf) return;
    MadeNetwork& made = maf->made();
    const std::size_t d = made.inputs();
    NoGradGuard no_grad;
    const auto fn = [&](const std::vector<double>& v) { return flat(made(Tensor({1, d}, v))); };
    std::vector<double> x(d);
    for (double& v : x) v = normal(gen);
    const auto jac = oracle::jacobian(fn, x);  // (2d) x d
    for (std::size_t head = 0; head < 2; ++head)
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) upper = std::max(upper, std::fabs(jac[(head * d + i) * d + j]));
    ++networks;
  });
  const double secs = seconds_since(t0);
  const bool ok = start - end >= 0.5 && networks > 0 && upper < 1e-9;
  return {ok, "val bpd " + fmt("%.4f", start) + " -> " + fmt("%.4f", end) + " over " + std::to_string(session.step()) +
                  " steps, " + std::to_string(networks) + " MADE networks, max upper-triangle " + fmt("%.1e", upper) +
                  ", " + fmt("%.0f s", secs)};
}

// Flat image index of slot j of patch k, slots ordered (dy, dx, channel) with channel fastest.
std::size_t patch_pixel(const PatchGeometry& g, std::size_t k, std::size_t j) {
  const std::size_t per_row = g.width / g.patch_w;
  const std::size_t dy = j / (g.patch_w * g.channels), dx = (j / g.channels) % g.patch_w, c = j % g.channels;
  return (c * g.height + (k / per_row) * g.patch_h + dy) * g.width + (k % per_row) * g.patch_w + dx;
}

// 9. Shuffles invert exactly; the local spec is a shared within-patch permutation after a patch reordering.
Outcome shuffle_pipeline(Context&) {
  std::size_t checked = 0;
  for (PatchGeometry g : {PatchGeometry{28, 28, 1, 4, 4}, PatchGeometry{32, 32, 3, 4, 4}}) {
    std::mt19937_64 gen(g.dims());
    ImageBatch batch;
    std::vector<double> v(100 * g.dims());
    for (double& e : v) e = static_cast<double>(gen() % 256);
    batch.pixels = Tensor({100, g.channels, g.height, g.width}, v);
    for (std::uint64_t seed : {3, 4}) {
      for (const ShuffleSpec& spec : {ShuffleSpec::local(g, seed), ShuffleSpec::global(g, seed)}) {
        const ImageBatch back = inverse_shuffle(apply_shuffle(batch, spec), spec);
        if (flat(back.pixels) != v) return {false, "round trip differs for seed " + std::to_string(seed)};
        ++checked;
      }
      const ShuffleSpec local = ShuffleSpec::local(g, seed);
      const std::size_t np = g.dims() / (g.patch_h * g.patch_w * g.channels);
      const std::size_t slots = g.patch_h * g.patch_w * g.channels;
      std::vector<std::size_t> expected(g.dims());
      for (std::size_t k = 0; k < np; ++k)
        for (std::size_t j = 0; j < slots; ++j)
          expected[patch_pixel(g, k, j)] = patch_pixel(g, local.patch_order()[k], local.within_patch()[j]);
      if (local.permutation() != expected) return {false, "local permutation differs from the two-stage oracle"};
      const ImageBatch shuffled = apply_shuffle(batch, local);
      const auto sv = flat(shuffled.pixels);
      for (std::size_t i = 0; i < 100; ++i)
        for (std::size_t p = 0; p < g.dims(); ++p)
          if (sv[i * g.dims() + p] != v[i * g.dims() + expected[p]]) return {false, "applied local shuffle differs from the oracle"};
    }
  }
  return {true, std::to_string(checked) + " spec round trips on 100 images each, local specs match the two-stage oracle"};
}

// 10. Linear head on the frozen gate-7 flow.
Outcome hybrid_head(Context& ctx) {
  if (!ctx.desk) {
    const fs::path ck = ctx.work / "mnist_desk" / "checkpoint";
    if (!fs::exists(ck)) return {false, "no trained desk model (run criterion 7 first)"};
    ctx.desk = TrainingSession::resume(ck);
    ctx.desk->load_data();
  }
  FlowModel& model = ctx.desk->model();
  const ImageDataset& train = ctx.desk->train_data();
  const ImageDataset& val = ctx.desk->val_data();
  const Tensor train_x = dequantize_oracle(train, train.size(), 31);
  const Tensor val_x = dequantize_oracle(val, val.size(), 32);
  const std::uint64_t before = model.checksum();
  HybridOptions opts;
  opts.epochs = 3;
  const HybridResult r = hybrid_train_head(model, train_x, train.labels, 10, opts);
  const Tensor logits = r.head->logits(encode(model, val_x));
  const auto lv = logits.values();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const auto row = lv.subspan(i * 10, 10);
    if (static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) == val.labels[i]) ++correct;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(val.size());
  const bool unchanged = model.checksum() == before && r.flow_checksum_after == before;
  return {acc >= 0.5 && unchanged, "val accuracy " + fmt("%.4f", acc) + " (train " + fmt("%.4f", r.train.accuracy) +
                                       "), flow checksum " + (unchanged ? "unchanged" : "CHANGED")};
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 11. Same config and seeds give byte-identical logs and samples; a restored checkpoint reproduces the NLL.
Outcome reproducibility(Context& ctx) {
  RunConfig run;
  run.dataset = DatasetKind::mnist;
  run.data_dir = ctx.mnist.string();
  run.model.geometry = {28, 28, 1, 4, 4};
  run.model.n_layers = 2;
  run.model.flows_per_stage = 1;
  run.model.hidden_dim = 16;
  run.model.seed = 9;
  run.model.actnorm_min_std = 1.0;
  run.batch_size = 32;
  run.steps = 20;
  run.log_every = 5;
  run.checkpoint_every = 10;
  run.eval_samples = 100;
  std::vector<std::unique_ptr<TrainingSession>> sessions;
  for (const char* name : {"repro_a", "repro_b"}) {
    run.out_dir = (ctx.work / name).string();
    fs::remove_all(run.out_dir);
    sessions.push_back(std::make_unique<TrainingSession>(run));
    sessions.back()->load_data();
    sessions.back()->run();
    write_samples(sessions.back()->model(), 4, 77, fs::path(run.out_dir) / "samples");
  }
  const fs::path a = ctx.work / "repro_a", b = ctx.work / "repro_b";
  const std::string log_a = read_bytes(a / "metrics.log");
  if (log_a.empty() || log_a != read_bytes(b / "metrics.log")) return {false, "metric logs differ"};
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a / "samples")) {
    if (read_bytes(e.path()) != read_bytes(b / "samples" / e.path().filename())) return {false, "sample files differ"};
    ++files;
  }
  auto restored = TrainingSession::resume(a / "checkpoint");
  restored->load_data();
  const Tensor x = dequantize_oracle(sessions[0]->val_data(), 16, 5);
  const auto nll = [&](FlowModel& m) {
    m.set_training(false);
    NoGradGuard no_grad;
    return -mean(m.log_likelihood(x).log_prob).item();
  };
  const double live = nll(sessions[0]->model());
  const double back = nll(restored->model());
  const bool ok = live == back && files == 5;
  return {ok, std::to_string(std::count(log_a.begin(), log_a.end(), '\n')) + " identical log lines, " +
                  std::to_string(files) + " identical sample files, restored NLL " + fmt("%.17g", back) +
                  (live == back ? " (bit-exact)" : " differs from " + fmt("%.17g", live))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MixerFlow acceptance criteria"};
  std::vector<int> only;
  Context ctx;
  const char* env = std::getenv("MIXERFLOW_MNIST_DIR");
  std::string mnist = env ? env : MIXERFLOW_MNIST_DIR;
  std::string work = "acceptance_work";
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  app.add_option("--mnist", mnist, "MNIST directory");
  app.add_option("--work", work, "Scratch directory for runs");
  CLI11_PARSE(app, argc, argv);
  ctx.mnist = mnist;
  ctx.work = work;
  fs::create_directories(ctx.work);

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria = {
      {"layer_bijectivity", layer_bijectivity}, {"identity_at_init", identity_at_init},
      {"actnorm_init", actnorm_init},           {"gradient_check", gradient_check},
      {"normalization", normalization},         {"bpd_anchors", bpd_anchors},
      {"mnist_desk", mnist_desk},               {"mnist_maf", mnist_maf},
      {"shuffle_pipeline", shuffle_pipeline},   {"hybrid_head", hybrid_head},
      {"reproducibility", reproducibility},
  };
  std::ofstream results(ctx.work / "results.txt", std::ios::app);
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const std::string line = std::string(o.passed ? "PASS" : "FAIL") + " criterion " + std::to_string(id) + " " +
                             criteria[i].first + ": " + o.detail;
    std::cout << line << std::endl;
    results << line << std::endl;
    if (!o.passed) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
