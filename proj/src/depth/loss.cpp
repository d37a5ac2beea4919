#include "unict/depth/loss.hpp"

#include <cmath>

#include "unict/metrics/metrics.hpp"

namespace unict::depth {

std::size_t DepthFrame::valid_count() const {
  std::size_t n = 0;
  for (auto v : valid) n += v != 0;
  return n;
}

DepthFrame DepthFrame::from_ground_truth(Tensor<float> depth) {
  DepthFrame f;
  f.valid.resize(depth.size());
  for (std::size_t i = 0; i < depth.size(); ++i) f.valid[i] = metrics::valid_depth(depth[i]);
  f.depth = std::move(depth);
  return f;
}

DepthFrame DepthFrame::from_prediction(Tensor<float> depth) {
  DepthFrame f;
  f.valid.assign(depth.size(), 1);
  f.depth = std::move(depth);
  return f;
}

namespace {

void check_geometry(const tensor::Shape& pred, const DepthFrame& gt) {
  if (pred.size() != 3 || pred[0] != 1 || gt.depth.shape() != pred ||
      gt.valid.size() != gt.depth.size()) {
    throw tensor::ShapeError("loss: prediction " + tensor::to_string(pred) +
                             " does not match ground truth " +
                             tensor::to_string(gt.depth.shape()));
  }
}

}  // namespace

template <typename T>
Var<T> masked_loss_sum(const Var<T>& pred, const DepthFrame& gt, const LossWeights& w) {
  check_geometry(pred.shape(), gt);
  Tensor<T> target(pred.shape()), mask(pred.shape());
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (gt.valid[i]) {
      target[i] = static_cast<T>(gt.depth[i]);
      mask[i] = T(1);
    }
  }
  auto r = tensor::mul(tensor::sub(tensor::constant(std::move(target)), pred),
                       tensor::constant(std::move(mask)));
  Var<T> terms;
  if (w.l1 != 0.0) terms = tensor::scale(tensor::abs(r), static_cast<T>(w.l1));
  if (w.l2 != 0.0) {
    auto sq = tensor::scale(tensor::square(r), static_cast<T>(w.l2));
    terms = terms.defined() ? terms + sq : sq;
  }
  if (!terms.defined()) terms = tensor::scale(r, T(0));
  return tensor::sum(terms);
}

template <typename T>
Var<T> depth_loss(const Var<T>& pred, const DepthFrame& gt, const LossWeights& w) {
  check_geometry(pred.shape(), gt);
  const std::size_t n = gt.valid_count();
  if (n == 0) throw LossError("loss: ground truth has no valid pixels");
  return tensor::scale(masked_loss_sum(pred, gt, w), T(1) / static_cast<T>(n));
}

double depth_loss(const DepthFrame& pred, const DepthFrame& gt, const LossWeights& w) {
  check_geometry(pred.depth.shape(), gt);
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.depth.size(); ++i) {
    if (!gt.valid[i]) continue;
    const double r = double(gt.depth[i]) - double(pred.depth[i]);
    sum += w.l1 * std::abs(r) + w.l2 * r * r;
    ++n;
  }
  if (n == 0) throw LossError("loss: ground truth has no valid pixels");
  return sum / double(n);
}

template Var<float> masked_loss_sum(const Var<float>&, const DepthFrame&, const LossWeights&);
template Var<double> masked_loss_sum(const Var<double>&, const DepthFrame&, const LossWeights&);
template Var<float> depth_loss(const Var<float>&, const DepthFrame&, const LossWeights&);
template Var<double> depth_loss(const Var<double>&, const DepthFrame&, const LossWeights&);

}  // namespace unict::depth
