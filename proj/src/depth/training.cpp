#include "unict/depth/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace unict::depth {

namespace {

template <typename T>
std::size_t total_valid(std::span<const Sample<T>> batch) {
  std::size_t n = 0;
  for (const auto& s : batch) n += s.target.valid_count();
  return n;
}

template <typename T>
Var<T> input(const Tensor<T>& t) {
  return t.empty() ? Var<T>() : tensor::constant(t);
}

template <typename T>
void add_metrics(metrics::MetricAccumulator& acc, const Tensor<T>& pred, const DepthFrame& gt) {
  std::vector<float> p(pred.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<float>(pred[i]);
  acc.add<float>(p, gt.depth.values());
}

}  // namespace

template <typename T>
Trainer<T>::Trainer(DepthNet<T>& net, const tensor::AdamWOptions& opts)
    : net_(net), opt_(net.parameters(), opts) {}

template <typename T>
StepResult Trainer<T>::step(std::span<const Sample<T>> batch) {
  const std::size_t n = total_valid(batch);
  if (n == 0) throw LossError("training batch has no valid ground-truth pixels");
  const auto& cfg = net_.config();
  net_.parameters().zero_grad();
  StepResult out;
  double sum = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    if (s.target.valid_count() == 0) continue;
    auto pred = net_.forward(input(s.voxel), input(s.image));
    auto partial = masked_loss_sum(pred, s.target, cfg.loss);
    const double v = partial.value()[0];
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "non-finite loss at optimizer step " << opt_.steps() << ", batch sample " << i
          << " (partial sum " << v << ", lr " << opt_.lr() << ")";
      throw TrainingError(msg.str());
    }
    sum += v;
    add_metrics(out.metrics, pred.value(), s.target);
    tensor::backward(partial, Tensor<T>({1}, static_cast<T>(1.0 / double(n))));
  }
  for (const auto& p : net_.parameters().entries()) {
    if (p.var.has_grad() && !p.var.grad().all_finite()) {
      throw TrainingError("non-finite gradient for " + p.name + " at optimizer step " +
                          std::to_string(opt_.steps()));
    }
  }
  opt_.step();
  out.loss = sum / double(n);
  return out;
}

template <typename T>
StepResult evaluate(const DepthNet<T>& net, std::span<const Sample<T>> samples) {
  StepResult out;
  double sum = 0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    const auto pred = net.infer(s.voxel, s.image);
    if (s.target.valid_count() == 0) continue;
    sum += depth_loss(pred, s.target, net.config().loss) * double(s.target.valid_count());
    n += s.target.valid_count();
    out.metrics.add<float>(pred.depth.values(), s.target.depth.values());
  }
  out.loss = n ? sum / double(n) : std::nan("");
  return out;
}

std::string EpochRecord::to_json() const {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["split"] = split;
  j["loss"] = num(loss);
  j["abs_rel"] = num(metrics.abs_rel);
  j["rmse_log"] = num(metrics.rmse_log);
  j["d1"] = num(metrics.delta[0]);
  j["d2"] = num(metrics.delta[1]);
  j["d3"] = num(metrics.delta[2]);
  return j.dump();
}

template <typename T>
std::vector<EpochRecord> fit(DepthNet<T>& net, std::span<const Sample<T>> train,
                             std::span<const Sample<T>> val, const FitOptions& opts,
                             const std::function<void(const EpochRecord&)>& on_record) {
  if (opts.epochs == 0) throw ConfigError("epochs must be >= 1");
  if (opts.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (train.empty()) throw ConfigError("training set is empty");
  tensor::AdamWOptions adam;
  adam.lr = opts.lr;
  adam.weight_decay = opts.weight_decay;
  Trainer<T> trainer(net, adam);
  tensor::MultiStepLR schedule(opts.lr, opts.milestones, opts.lr_factor);
  std::mt19937_64 rng(opts.shuffle_seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochRecord> records;
  auto emit = [&](EpochRecord r) {
    if (on_record) on_record(r);
    records.push_back(std::move(r));
  };
  std::vector<Sample<T>> batch;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    trainer.set_lr(schedule.lr_at(static_cast<int>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    metrics::MetricAccumulator acc;
    double weighted = 0;
    std::size_t pixels = 0;
    for (std::size_t b = 0; b < order.size(); b += opts.batch_size) {
      batch.clear();
      for (std::size_t i = b; i < std::min(order.size(), b + opts.batch_size); ++i) {
        batch.push_back(train[order[i]]);
      }
      const std::size_t n = total_valid<T>(batch);
      if (n == 0) continue;
      auto r = trainer.step(batch);
      weighted += r.loss * double(n);
      pixels += n;
      acc.merge(r.metrics);
    }
    emit({epoch, "train", pixels ? weighted / double(pixels) : std::nan(""), acc.report()});
    if (!val.empty()) {
      auto v = evaluate(net, val);
      emit({epoch, "val", v.loss, v.metrics.report()});
    }
  }
  return records;
}

template class Trainer<float>;
template class Trainer<double>;
template StepResult evaluate(const DepthNet<float>&, std::span<const Sample<float>>);
template StepResult evaluate(const DepthNet<double>&, std::span<const Sample<double>>);
template std::vector<EpochRecord> fit(DepthNet<float>&, std::span<const Sample<float>>,
                                      std::span<const Sample<float>>, const FitOptions&,
                                      const std::function<void(const EpochRecord&)>&);
template std::vector<EpochRecord> fit(DepthNet<double>&, std::span<const Sample<double>>,
                                      std::span<const Sample<double>>, const FitOptions&,
                                      const std::function<void(const EpochRecord&)>&);

}  // namespace unict::depth
