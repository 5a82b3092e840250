#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <vector>

#include "mixerflow/data/pnm.hpp"
#include "mixerflow/flow/bijection.hpp"
#include "mixerflow/layers/actnorm.hpp"
#include "mixerflow/substrate/errors.hpp"
#include "mixerflow/train/checkpoint.hpp"
#include "mixerflow/train/checks.hpp"
#include "mixerflow/train/commands.hpp"
#include "mixerflow/train/optimizer.hpp"
#include "mixerflow/train/run_config.hpp"
#include "mixerflow/train/session.hpp"

using namespace mixerflow;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mixerflow_test_train_" + name);
  fs::remove_all(dir);
  return dir;
}

// Blobby 8x8 grey images so that training has some structure to find.
ImageDataset toy_images(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  ImageDataset d{1, 8, 8, {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    const double cx = 2 + 4 * rng.uniform(), cy = 2 + 4 * rng.uniform();
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) {
        const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        d.pixels.push_back(static_cast<std::uint8_t>(std::lround(40 + 200 * std::exp(-r2 / 4))));
      }
    d.labels.push_back(static_cast<int>(i % 10));
  }
  return d;
}

RunConfig toy_run(const fs::path& out) {
  RunConfig run;
  run.dataset = DatasetKind::image_dir;
  run.image_size = 8;
  run.model.geometry = {8, 8, 1, 2, 2};
  run.model.n_layers = 2;
  run.model.flows_per_stage = 1;
  run.model.hidden_dim = 16;
  run.model.shift_every = 2;
  run.model.seed = 3;
  run.batch_size = 16;
  run.steps = 6;
  run.lr = 2e-3;
  run.log_every = 3;
  run.checkpoint_every = 0;
  run.eval_samples = 0;
  run.out_dir = out.string();
  return run;
}

std::unique_ptr<TrainingSession> toy_session(const RunConfig& run) {
  auto s = std::make_unique<TrainingSession>(run);
  s->set_data(toy_images(64, 1), toy_images(20, 2));
  return s;
}

}  // namespace

TEST_CASE("zero-step run writes an initialized checkpoint") {
  const fs::path out = scratch("zero");
  RunConfig run = toy_run(out);
  run.steps = 0;
  toy_session(run)->run();
  const CheckpointData ck = read_checkpoint(out / "checkpoint");
  CHECK(ck.step == 0);
  auto resumed = TrainingSession::resume(out / "checkpoint");
  CHECK(resumed->model().initialized());
  bool found_actnorm = false;
  for (const auto& t : ck.tensors) found_actnorm = found_actnorm || t.name.find("actnorm") != std::string::npos;
  CHECK(found_actnorm);
  fs::remove_all(out);
}

TEST_CASE("adam minimizes a quadratic") {
  Parameter w{"w", Tensor::parameter({3}, {5.0, -4.0, 0.5})};
  const Tensor target({3}, {1.0, 2.0, -3.0});
  Adam adam({&w}, AdamOptions{0.05});
  int steps = 0;
  double err = 1.0;
  for (; steps < 5000 && err > 1e-4; ++steps) {
    adam.zero_grad();
    const Tensor d = sub(w.value, target);
    backward(sum(mul(d, d)));
    adam.step(0.05 * (1.0 - static_cast<double>(steps) / 5000));
    err = 0;
    for (std::size_t i = 0; i < 3; ++i) err = std::max(err, std::fabs(w.value[i] - target[i]));
  }
  CHECK(err <= 1e-4);
  CHECK(adam.steps() == static_cast<std::uint64_t>(steps));
}

TEST_CASE("cosine schedule anchors") {
  CHECK(cosine_lr(1e-3, 0, 100) == 1e-3);
  CHECK(std::fabs(cosine_lr(1e-3, 50, 100) - 5e-4) < 1e-15);
  CHECK(std::fabs(cosine_lr(1e-3, 100, 100)) < 1e-18);
  CHECK(std::fabs(cosine_lr(1e-3, 100, 100, 1e-5) - 1e-5) < 1e-18);
  CHECK(cosine_lr(1e-3, 25, 100) > cosine_lr(1e-3, 75, 100));
}

TEST_CASE("global norm clipping") {
  Parameter a{"a", Tensor::parameter({2}, {1.0, 1.0})};
  Parameter b{"b", Tensor::parameter({1}, {1.0})};
  Parameter* params[] = {&a, &b};
  backward(add(sum(mul(a.value, Tensor({2}, {30.0, 0.0}))), sum(mul(b.value, Tensor({1}, {40.0})))));
  CHECK(std::fabs(global_grad_norm(params) - 50.0) < 1e-12);
  const double before = clip_global_norm(params, 5.0);
  CHECK(std::fabs(before - 50.0) < 1e-12);
  CHECK(std::fabs(global_grad_norm(params) - 5.0) < 1e-9);

  Parameter c{"c", Tensor::parameter({1}, {1.0})};
  Parameter* small[] = {&c};
  backward(sum(mul(c.value, Tensor({1}, {3.0}))));
  clip_global_norm(small, 5.0);
  CHECK(c.gradient()[0] == 3.0);
}

TEST_CASE("checkpoints round-trip byte for byte") {
  const fs::path out = scratch("ckpt");
  RunConfig run = toy_run(out);
  auto session = toy_session(run);
  session->run();
  const fs::path first = out / "checkpoint";
  auto resumed = TrainingSession::resume(first);
  resumed->save(out / "again");
  for (const char* f : {"manifest.txt", "index.txt", "blobs.bin"})
    CHECK(slurp(first / f) == slurp(out / "again" / f));

  resumed->set_data(toy_images(64, 1), toy_images(20, 2));
  const ImageBatch probe = session->batch_for_step(0);
  session->model().set_training(false);
  resumed->model().set_training(false);
  NoGradGuard no_grad;
  const Tensor lp_a = session->model().log_likelihood(probe.pixels).log_prob;
  const Tensor lp_b = resumed->model().log_likelihood(probe.pixels).log_prob;
  const auto va = lp_a.values();
  const auto vb = lp_b.values();
  CHECK(std::vector<double>(va.begin(), va.end()) == std::vector<double>(vb.begin(), vb.end()));
  fs::remove_all(out);
}

TEST_CASE("resuming mid-run continues the same trajectory") {
  const fs::path out = scratch("resume");
  RunConfig run = toy_run(out);
  auto straight = toy_session(run);
  for (int i = 0; i < 4; ++i) straight->train_step();

  auto first = toy_session(run);
  first->train_step();
  first->train_step();
  first->save(out / "mid");
  auto second = TrainingSession::resume(out / "mid");
  second->set_data(toy_images(64, 1), toy_images(20, 2));
  second->train_step();
  second->train_step();
  CHECK(second->step() == 4);
  CHECK(second->step_losses().back() == straight->step_losses().back());
  fs::remove_all(out);
}

TEST_CASE("evaluation is deterministic") {
  auto session = toy_session(toy_run(scratch("eval")));
  session->initialize();
  const ImageDataset val = toy_images(20, 2);
  const EvalResult a = evaluate_bpd(session->model(), val, 11, 7);
  const EvalResult b = evaluate_bpd(session->model(), val, 11, 7);
  CHECK(a.per_sample.size() == 20);
  CHECK(a.mean_bpd == b.mean_bpd);
  CHECK(a.stderr_bpd > 0.0);
  CHECK(evaluate_bpd(session->model(), val, 12, 7).mean_bpd != a.mean_bpd);
  CHECK_THROWS_AS(evaluate_bpd(session->model(), toy_images(0, 2), 11), ContractError);
}

TEST_CASE("sampling writes reproducible images") {
  const fs::path out = scratch("samples");
  auto session = toy_session(toy_run(out));
  session->initialize();
  const SampleFiles one = write_samples(session->model(), 1, 5, out / "one");
  CHECK(one.images.size() == 1);
  const RawImage img = read_pnm(one.images.front());
  CHECK(img.width == 8);
  CHECK(img.channels == 1);

  const SampleFiles a = write_samples(session->model(), 4, 9, out / "a");
  const SampleFiles b = write_samples(session->model(), 4, 9, out / "b");
  const SampleFiles c = write_samples(session->model(), 4, 10, out / "c");
  CHECK(slurp(a.grid) == slurp(b.grid));
  CHECK(slurp(a.grid) != slurp(c.grid));
  CHECK_THROWS_AS(write_samples(session->model(), 0, 1, out / "none"), ContractError);
  fs::remove_all(out);
}

TEST_CASE("sample quantization and grid layout") {
  const Tensor s({1, 1, 1, 4}, {-0.5, 0.0, 0.999, 2.0});
  CHECK(quantize_samples(s).front().pixels == std::vector<std::uint8_t>{0, 0, 255, 255});

  std::vector<RawImage> tiles;
  for (int i = 0; i < 16; ++i) tiles.push_back(RawImage{1, 28, 28, std::vector<std::uint8_t>(784, static_cast<std::uint8_t>(i))});
  const RawImage grid = make_grid(tiles);
  CHECK(grid.width == 112);
  CHECK(grid.height == 112);
  CHECK(grid.pixels[0] == 0);
  CHECK(grid.pixels[28] == 1);
  CHECK(grid.pixels[28 * 112] == 4);
  CHECK(grid.pixels[111 * 112 + 111] == 15);
  const std::vector<std::uint8_t> pnm = encode_pnm(grid);
  CHECK(std::string(pnm.begin(), pnm.begin() + 2) == "P5");
}

TEST_CASE("self-check flags a wrong log-det and passes gradients") {
  class Skewed : public Bijection {
   public:
    Skewed() : Bijection("skewed") {}
    FlowResult forward(const Tensor& x) override { return {x, Tensor::full({x.dim(0)}, 0.1)}; }
    Tensor inverse(const Tensor& z) override { return z; }
  };
  Skewed skewed;
  const CheckResult bad = check_bijection("skewed", skewed, {4});
  CHECK_FALSE(bad.passed);
  CHECK(std::fabs(bad.worst - 0.1) < 1e-6);
  CHECK(bad.line().rfind("CHECK skewed FAIL", 0) == 0);

  for (const auto& r : run_checks(CheckScope::gradients)) CHECK_MESSAGE(r.passed, r.line());
  CHECK_THROWS_AS(parse_check_scope("everything"), ConfigError);
}

TEST_CASE("run config parsing") {
  const RunConfig c = parse_run_config("# comment\nbatch_size = 32\nlr = 0.01  # trailing\n\nscale_law = bounded\n");
  CHECK(c.batch_size == 32);
  CHECK(c.lr == 0.01);
  CHECK(c.model.scale_law == ScaleLaw::bounded);
  CHECK_THROWS_AS(parse_run_config("bogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("lr = 1\nlr = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("steps = -4\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("just words\n"), ConfigError);
  try {
    parse_run_config("lr = 1\n\nlr = 2\n");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  const RunConfig back = parse_run_config(serialize_run_config(c));
  CHECK(serialize_run_config(back) == serialize_run_config(c));
}

TEST_CASE("metric log lines") {
  const fs::path out = scratch("metrics");
  auto session = toy_session(toy_run(out));
  session->run();
  std::ifstream log(out / "metrics.log");
  const std::regex pattern(R"(step=\d+ lr=\S+ nll=\S+ bpd=\S+)");
  std::vector<std::string> lines;
  for (std::string line; std::getline(log, line);) lines.push_back(line);
  REQUIRE(lines.size() == 2);
  for (const auto& l : lines) CHECK(std::regex_match(l, pattern));
  CHECK(lines[0].rfind("step=3 lr=", 0) == 0);
  CHECK(MetricRecord{10, 0.5, -1.25, 3.0}.line() == "step=10 lr=0.5 nll=-1.25 bpd=3");
  fs::remove_all(out);
}
