#include "mixerflow/train/session.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include "mixerflow/data/dequantize.hpp"
#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

namespace {

constexpr std::uint64_t kSamplerStream = 1;
constexpr std::uint64_t kDequantStream = 2;

class EvalMode {
 public:
  explicit EvalMode(Module& m) : m_(m), previous_(m.training()) { m_.set_training(false); }
  ~EvalMode() { m_.set_training(previous_); }

 private:
  Module& m_;
  bool previous_;
};

void append_line(const std::filesystem::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  out << line << '\n';
}

}  // namespace

std::string MetricRecord::line() const {
  return "step=" + std::to_string(step) + " lr=" + format_double(lr) + " nll=" + format_double(nll) +
         " bpd=" + format_double(bpd);
}

void check_geometry(const FlowModel& model, const ImageDataset& data) {
  const auto& g = model.config().geometry;
  if (data.channels != g.channels || data.height != g.height || data.width != g.width)
    throw ContractError("dataset images are " + shape_to_string({data.channels, data.height, data.width}) +
                        " but the model expects " + shape_to_string(g.image_shape()));
}

EvalResult evaluate_bpd(FlowModel& model, const ImageDataset& data, std::uint64_t dequant_seed, std::size_t chunk,
                        std::size_t limit) {
  check_geometry(model, data);
  const std::size_t n = limit == 0 ? data.size() : std::min(limit, data.size());
  if (n == 0) throw ContractError("evaluation needs at least one image");
  EvalMode eval(model);
  NoGradGuard no_grad;
  EvalResult r;
  r.per_sample.reserve(n);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0, c = 0; start < n; start += chunk, ++c) {
    idx.clear();
    for (std::size_t i = start; i < std::min(n, start + chunk); ++i) idx.push_back(i);
    const ImageBatch y = dequantize(data.batch(idx), model.config().dequant_levels, dequant_seed, c);
    const Tensor bpd_tensor = model.log_likelihood(y.pixels).bpd;
    const auto bpd = bpd_tensor.values();
    r.per_sample.insert(r.per_sample.end(), bpd.begin(), bpd.end());
  }
  double sum = 0.0;
  for (double v : r.per_sample) sum += v;
  r.mean_bpd = sum / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (double v : r.per_sample) ss += (v - r.mean_bpd) * (v - r.mean_bpd);
    r.stderr_bpd = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
  }
  return r;
}

TrainingSession::TrainingSession(RunConfig run) : run_(std::move(run)) {
  run_.validate();
  model_ = build_model(run_.model);
  optimizer_ = std::make_unique<Adam>(model_->parameters(), AdamOptions{run_.lr, 0.9, 0.999, 1e-8});
}

std::unique_ptr<TrainingSession> TrainingSession::resume(const std::filesystem::path& checkpoint_dir) {
  const CheckpointData data = read_checkpoint(checkpoint_dir);
  auto session = std::make_unique<TrainingSession>(data.run);
  session->restore(data);
  return session;
}

std::uint64_t TrainingSession::dequant_seed() const { return derive_seed(run_.seed(), kDequantStream); }

void TrainingSession::set_data(ImageDataset train, ImageDataset val) {
  check_geometry(*model_, train);
  check_geometry(*model_, val);
  if (run_.shuffle != ShuffleKind::identity) {
    shuffle_ = ShuffleSpec::make(run_.shuffle, run_.model.geometry, run_.shuffle_seed);
    train = apply_shuffle(train, *shuffle_);
    val = apply_shuffle(val, *shuffle_);
  }
  train_ = std::move(train);
  val_ = std::move(val);
  sampler_ = std::make_unique<BatchSampler>(train_.size(), run_.batch_size, derive_seed(run_.seed(), kSamplerStream));
}

void TrainingSession::load_data() {
  if (run_.data_dir.empty()) throw ConfigError("data_dir is not set");
  auto train = load_dataset(run_.dataset, run_.data_dir, DataSplit::train, run_.image_size, run_.split_seed);
  auto val = load_dataset(run_.dataset, run_.data_dir, DataSplit::val, run_.image_size, run_.split_seed);
  set_data(std::move(train), std::move(val));
}

void TrainingSession::require_data() const {
  if (!sampler_) throw ContractError("training session has no data; call set_data or load_data first");
}

ImageBatch TrainingSession::batch_for_step(std::uint64_t step) const {
  require_data();
  const auto idx = sampler_->indices(step);
  return dequantize(train_.batch(idx), run_.model.dequant_levels, dequant_seed(), step);
}

void TrainingSession::initialize() {
  if (model_->initialized()) return;
  model_->initialize(batch_for_step(step_).pixels);
}

double TrainingSession::train_step() {
  initialize();
  const ImageBatch batch = batch_for_step(step_);
  const double lr = cosine_lr(run_.lr, step_, run_.steps, run_.lr_min);
  optimizer_->zero_grad();
  const Tensor loss = negate(mean(model_->log_likelihood(batch.pixels).log_prob));
  const double nll = loss.item();
  backward(loss);
  const auto& params = optimizer_->parameters();
  last_grad_norm_ = clip_global_norm(params, run_.grad_clip);
  optimizer_->step(lr);
  ++step_;
  step_losses_.push_back(nll);
  return nll;
}

double TrainingSession::validation_bpd() {
  require_data();
  return evaluate_bpd(*model_, val_, run_.eval_seed, 250, run_.eval_samples).mean_bpd;
}

void TrainingSession::run(std::ostream* echo) {
  require_data();
  const std::filesystem::path out = run_.out_dir;
  std::filesystem::create_directories(out);
  const auto log_path = out / "metrics.log";
  {
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw IoError("cannot write " + log_path.string());
    for (const auto& m : metrics_) log << m << '\n';
  }
  try {
    initialize();
    double interval_sum = 0.0;
    std::uint64_t interval_n = 0;
    while (step_ < run_.steps) {
      const double lr = cosine_lr(run_.lr, step_, run_.steps, run_.lr_min);
      interval_sum += train_step();
      ++interval_n;
      if (step_ % run_.log_every == 0 || step_ == run_.steps) {
        MetricRecord rec{step_, lr, interval_sum / static_cast<double>(interval_n), validation_bpd()};
        metrics_.push_back(rec.line());
        append_line(log_path, metrics_.back());
        if (echo) *echo << metrics_.back() << std::endl;
        interval_sum = 0.0;
        interval_n = 0;
      }
      if (run_.checkpoint_every != 0 && step_ % run_.checkpoint_every == 0 && step_ != run_.steps) save(out / "checkpoint");
    }
  } catch (const NumericError& e) {
    const auto failure = out / "failure";
    try {
      save(failure);
    } catch (const Error&) {
      // the original error is the one worth reporting
    }
    throw NumericError("training stopped at step " + std::to_string(step_) + ": " + e.what() +
                       " (state saved to " + failure.string() + ")");
  }
  save(out / "checkpoint");
}

CheckpointData TrainingSession::snapshot() {
  CheckpointData data;
  data.run = run_;
  data.step = step_;
  data.optimizer_steps = optimizer_->steps();
  data.metrics = metrics_;
  for (Parameter* p : model_->parameters()) {
    const auto v = p->value.values();
    data.tensors.push_back({"param/" + p->name, p->value.shape(), {v.begin(), v.end()}});
  }
  for (Buffer* b : model_->buffers()) {
    const auto v = b->value.values();
    data.tensors.push_back({"buffer/" + b->name, b->value.shape(), {v.begin(), v.end()}});
  }
  const auto& params = optimizer_->parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    data.tensors.push_back({"adam_m/" + params[i]->name, params[i]->value.shape(), optimizer_->first_moments()[i]});
    data.tensors.push_back({"adam_v/" + params[i]->name, params[i]->value.shape(), optimizer_->second_moments()[i]});
  }
  return data;
}

void TrainingSession::save(const std::filesystem::path& dir) { write_checkpoint(dir, snapshot()); }

void TrainingSession::restore(const CheckpointData& data) {
  auto take = [&](const std::string& name, const Shape& shape) -> const std::vector<double>& {
    const TensorRecord* t = data.find(name);
    if (!t) throw FormatError("checkpoint has no tensor " + name, 0);
    if (t->shape != shape)
      throw FormatError("checkpoint tensor " + name + " has shape " + shape_to_string(t->shape) + ", expected " +
                            shape_to_string(shape),
                        0);
    return t->values;
  };
  auto copy_into = [](Tensor& dst, const std::vector<double>& src) {
    auto out = dst.mutable_values();
    std::copy(src.begin(), src.end(), out.begin());
  };
  for (Parameter* p : model_->parameters()) copy_into(p->value, take("param/" + p->name, p->value.shape()));
  for (Buffer* b : model_->buffers()) copy_into(b->value, take("buffer/" + b->name, b->value.shape()));
  const auto& params = optimizer_->parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    optimizer_->first_moments()[i] = take("adam_m/" + params[i]->name, params[i]->value.shape());
    optimizer_->second_moments()[i] = take("adam_v/" + params[i]->name, params[i]->value.shape());
  }
  const std::size_t expected = 2 * params.size() + model_->parameters().size() + model_->buffers().size();
  if (data.tensors.size() != expected)
    throw FormatError("checkpoint holds " + std::to_string(data.tensors.size()) + " tensors, the model needs " +
                          std::to_string(expected),
                      0);
  optimizer_->set_steps(data.optimizer_steps);
  step_ = data.step;
  metrics_ = data.metrics;
}

}  // namespace mixerflow
