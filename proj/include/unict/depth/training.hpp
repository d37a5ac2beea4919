#pragma once

#include <functional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "unict/depth/network.hpp"
#include "unict/metrics/metrics.hpp"
#include "unict/tensor/optim.hpp"

namespace unict::depth {

template <typename T>
struct Sample {
  Tensor<T> voxel;  // [B x H x W]
  Tensor<T> image;  // [3 x H x W]
  DepthFrame target;
};

/// Non-finite loss or gradient during training.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepResult {
  double loss = 0;  // before the update
  metrics::MetricAccumulator metrics;
};

/// One AdamW update per batch. The batch loss is the sum of per-pixel terms
/// over every valid pixel in the batch divided by their total count; each
/// sample's graph is built, differentiated and released in turn.
template <typename T>
class Trainer {
 public:
  Trainer(DepthNet<T>& net, const tensor::AdamWOptions& opts);

  StepResult step(std::span<const Sample<T>> batch);
  void set_lr(double lr) { opt_.set_lr(lr); }
  double lr() const { return opt_.lr(); }
  std::size_t steps() const { return opt_.steps(); }

 private:
  DepthNet<T>& net_;
  tensor::AdamW<T> opt_;
};

/// Loss and metrics of the clamped predictions over a sample set.
template <typename T>
StepResult evaluate(const DepthNet<T>& net, std::span<const Sample<T>> samples);

struct EpochRecord {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0;
  metrics::MetricReport metrics;

  /// {"epoch","split","loss","abs_rel","rmse_log","d1","d2","d3"} on one line.
  std::string to_json() const;
};

struct FitOptions {
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  double lr = 2e-4;
  double weight_decay = 1e-2;
  std::vector<int> milestones = {10, 20, 30};
  double lr_factor = 0.5;
  std::uint64_t shuffle_seed = 0;
};


/// Trains for opts.epochs (epoch indices start at 0; the LR for epoch e is
/// base * factor^(milestones <= e)). Emits a "train" record per epoch and a
/// "val" record when `val` is non-empty.
template <typename T>
std::vector<EpochRecord> fit(DepthNet<T>& net, std::span<const Sample<T>> train,
                             std::span<const Sample<T>> val, const FitOptions& opts,
                             const std::function<void(const EpochRecord&)>& on_record = {});

}  // namespace unict::depth
