#include "mixerflow/train/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "mixerflow/substrate/errors.hpp"
#include "mixerflow/train/session.hpp"

namespace mixerflow {

std::vector<RawImage> quantize_samples(const Tensor& samples, int levels) {
  if (samples.rank() != 4) throw ContractError("samples must be [n, ch, h, w], got " + shape_to_string(samples.shape()));
  const std::size_t n = samples.dim(0), per = samples.numel() / n;
  const auto v = samples.values();
  std::vector<RawImage> out;
  for (std::size_t i = 0; i < n; ++i) {
    RawImage img{samples.dim(1), samples.dim(2), samples.dim(3), std::vector<std::uint8_t>(per)};
    for (std::size_t j = 0; j < per; ++j) {
      const double y = std::clamp(v[i * per + j], 0.0, 1.0);
      const double bucket = std::min(std::floor(y * levels), static_cast<double>(levels - 1));
      img.pixels[j] = static_cast<std::uint8_t>(std::lround(bucket * 255.0 / (levels - 1)));
    }
    out.push_back(std::move(img));
  }
  return out;
}

RawImage make_grid(const std::vector<RawImage>& images) {
  if (images.empty()) throw ContractError("no images to tile");
  const RawImage& first = images.front();
  const std::size_t n = images.size();
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const std::size_t rows = (n + cols - 1) / cols;
  RawImage grid{first.channels, rows * first.height, cols * first.width, {}};
  grid.pixels.assign(grid.channels * grid.height * grid.width, 0);
  for (std::size_t k = 0; k < n; ++k) {
    const RawImage& img = images[k];
    if (img.channels != first.channels || img.height != first.height || img.width != first.width)
      throw ContractError("grid images must share one size");
    const std::size_t oy = (k / cols) * img.height, ox = (k % cols) * img.width;
    for (std::size_t c = 0; c < img.channels; ++c)
      for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
          grid.pixels[(c * grid.height + oy + y) * grid.width + ox + x] = img.pixels[(c * img.height + y) * img.width + x];
  }
  return grid;
}

SampleFiles write_samples(FlowModel& model, std::size_t count, std::uint64_t seed, const std::filesystem::path& out_dir) {
  if (count == 0) throw ContractError("sample count must be positive");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  const bool was_training = model.training();
  model.set_training(false);
  const Tensor x = model.sample(count, seed);
  model.set_training(was_training);
  const auto images = quantize_samples(x, model.config().dequant_levels);
  const std::string ext = images.front().channels == 1 ? ".pgm" : ".ppm";
  SampleFiles files;
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%04zu", i);
    files.images.push_back(out_dir / (name + ext));
    write_pnm(files.images.back(), images[i]);
  }
  files.grid = out_dir / ("grid" + ext);
  write_pnm(files.grid, make_grid(images));
  return files;
}

int train_command(const TrainOptions& options, std::ostream& out) {
  RunConfig run = load_run_config(options.config);
  if (options.data_dir) run.data_dir = *options.data_dir;
  if (options.steps) run.steps = *options.steps;
  if (options.batch_size) run.batch_size = *options.batch_size;
  if (options.seed) run.model.seed = *options.seed;
  if (options.shuffle) run.shuffle = parse_shuffle_kind(*options.shuffle);
  if (options.out_dir) run.out_dir = *options.out_dir;
  TrainingSession session(run);
  session.load_data();
  out << "parameters=" << session.model().parameter_count() << " train=" << session.train_data().size()
      << " val=" << session.val_data().size() << std::endl;
  session.run(&out);
  out << "checkpoint=" << (std::filesystem::path(run.out_dir) / "checkpoint").string() << std::endl;
  return 0;
}

int eval_command(const std::filesystem::path& checkpoint, const std::optional<std::string>& data_dir,
                 const std::string& split, std::ostream& out) {
  auto session = TrainingSession::resume(checkpoint);
  const RunConfig& run = session->config();
  const std::string dir = data_dir ? *data_dir : run.data_dir;
  const ImageDataset data = load_dataset(run.dataset, dir, parse_split(split), run.image_size, run.split_seed);
  ImageDataset shuffled = data;
  if (run.shuffle != ShuffleKind::identity)
    shuffled = apply_shuffle(data, ShuffleSpec::make(run.shuffle, run.model.geometry, run.shuffle_seed));
  const EvalResult r = evaluate_bpd(session->model(), shuffled, run.eval_seed);
  out << "split=" << split << " n=" << r.per_sample.size() << " bpd=" << format_double(r.mean_bpd)
      << " stderr=" << format_double(r.stderr_bpd) << std::endl;
  return 0;
}

int sample_command(const std::filesystem::path& checkpoint, std::size_t count, std::uint64_t seed,
                   const std::filesystem::path& out_dir, std::ostream& out) {
  auto session = TrainingSession::resume(checkpoint);
  const SampleFiles files = write_samples(session->model(), count, seed, out_dir);
  for (const auto& f : files.images) out << f.string() << '\n';
  out << files.grid.string() << std::endl;
  return 0;
}

int check_command(const std::string& scope, std::ostream& out) {
  bool ok = true;
  for (const auto& r : run_checks(parse_check_scope(scope))) {
    out << r.line();
    if (!r.detail.empty() && !r.passed) out << " (" << r.detail << ")";
    out << std::endl;
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

int gradcheck_command(const std::filesystem::path& config, std::ostream& out) {
  const RunConfig run = load_run_config(config);
  FlowModel model(run.model);
  GradientCheckOptions opts;
  opts.max_elements = 200;
  opts.seed = run.seed();
  const auto r = model_gradient_check(model, 4, opts);
  out << "GRADCHECK checked=" << r.checked << " max_rel_err=" << format_double(r.max_relative_error)
      << " worst=" << r.worst_parameter << "[" << r.worst_index << "] " << (r.passed ? "PASS" : "FAIL") << std::endl;
  return r.passed ? 0 : 1;
}

}  // namespace mixerflow
