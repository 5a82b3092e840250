#include "mixerflow/model/hybrid.hpp"

#include <algorithm>
#include <string>

#include "mixerflow/substrate/errors.hpp"
#include "mixerflow/train/optimizer.hpp"

namespace mixerflow {

namespace {

void check_labels(std::size_t n, std::span<const int> labels, std::size_t classes) {
  if (labels.size() != n) {
    throw ContractError("hybrid head: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                        " samples");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ContractError("hybrid head: label " + std::to_string(y) + " outside 0.." + std::to_string(classes - 1));
    }
  }
}

Tensor rows_of(const Tensor& x, std::span<const std::size_t> rows) {
  const std::size_t d = x.numel() / x.dim(0);
  const auto v = x.values();
  std::vector<double> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(v.begin() + rows[i] * d, d, out.begin() + i * d);
  return Tensor({rows.size(), d}, std::move(out));
}

}  // namespace

HybridHead::HybridHead(std::string path, std::size_t dims, std::size_t classes)
    : Module(std::move(path)), classes_(classes) {
  if (classes < 2) throw ContractError("hybrid head needs at least two classes");
  Rng unused(0);
  linear_ = &adopt(std::make_unique<Dense>(child_path("linear"), dims, classes, unused, DenseInit::zero));
}

Tensor HybridHead::logits(const Tensor& z) const {
  const std::size_t n = z.dim(0);
  return (*linear_)(reshape(z, {n, z.numel() / n}));
}

Tensor HybridHead::loss(const Tensor& z, std::span<const int> labels) const {
  const std::size_t n = z.dim(0);
  check_labels(n, labels, classes_);
  std::vector<double> onehot(n * classes_, 0.0);
  for (std::size_t i = 0; i < n; ++i) onehot[i * classes_ + static_cast<std::size_t>(labels[i])] = 1.0;
  const Tensor picked = mul(log_softmax(logits(z)), Tensor({n, classes_}, std::move(onehot)));
  return scale(sum(picked), -1.0 / static_cast<double>(n));
}

HybridMetrics HybridHead::evaluate(const Tensor& z, std::span<const int> labels) const {
  NoGradGuard no_grad;
  const std::size_t n = z.dim(0);
  HybridMetrics m;
  m.loss = loss(z, labels).item();
  const Tensor lg = logits(z);
  const auto v = lg.values();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = v.subspan(i * classes_, classes_);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == static_cast<std::size_t>(labels[i])) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return m;
}

Tensor encode(FlowModel& model, const Tensor& images, std::size_t chunk) {
  const bool was_training = model.training();
  model.set_training(false);
  NoGradGuard no_grad;
  const std::size_t n = images.dim(0);
  const std::size_t per = images.numel() / n;
  const std::size_t d = model.dims();
  std::vector<double> out(n * d);
  Shape shape = images.shape();
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    shape[0] = count;
    const auto src = images.values().subspan(start * per, count * per);
    const Tensor z = model.forward(Tensor(shape, std::vector<double>(src.begin(), src.end()))).output;
    std::copy(z.values().begin(), z.values().end(), out.begin() + start * d);
  }
  model.set_training(was_training);
  return Tensor({n, d}, std::move(out));
}

HybridResult train_head(const Tensor& latents, std::span<const int> labels, std::size_t classes,
                        const HybridOptions& options) {
  const std::size_t n = latents.dim(0);
  check_labels(n, labels, classes);
  HybridResult result;
  result.head = std::make_unique<HybridHead>("head", latents.numel() / n, classes);
  Adam adam(result.head->parameters(), AdamOptions{options.lr});
  Rng rng(options.seed);
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const auto order = rng.permutation(n);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(batch, n - start));
      std::vector<int> y(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) y[i] = labels[rows[i]];
      adam.zero_grad();
      const Tensor loss = result.head->loss(rows_of(latents, rows), y);
      backward(loss);
      adam.step(options.lr);
      total += loss.item() * static_cast<double>(rows.size());
    }
    result.epoch_losses.push_back(total / static_cast<double>(n));
  }
  result.train = result.head->evaluate(latents, labels);
  return result;
}

HybridResult hybrid_train_head(FlowModel& model, const Tensor& images, std::span<const int> labels,
                               std::size_t classes, const HybridOptions& options) {
  if (!model.initialized()) throw InitializationError("hybrid head: the flow must be initialized first");
  const std::uint64_t before = model.checksum();
  const Tensor z = encode(model, images);
  HybridResult result = train_head(z, labels, classes, options);
  result.flow_checksum_before = before;
  result.flow_checksum_after = model.checksum();
  return result;
}

}  // namespace mixerflow
