#include "unict/depth/network.hpp"

#include <algorithm>
#include <cmath>

#include "unict/tensor/checkpoint.hpp"

namespace unict::depth {

using tensor::Shape;
using tensor::ShapeError;

template <typename T>
ResidualBlock<T>::ResidualBlock(ParameterStore<T>& store, const std::string& name,
                                std::size_t in, std::size_t out, std::size_t stride, Rng& rng)
    : conv1(store, name + ".conv1", in, out, 3, stride, 1, rng),
      conv2(store, name + ".conv2", out, out, 3, 1, 1, rng),
      norm1(store, name + ".norm1", out),
      norm2(store, name + ".norm2", out),
      project(in != out || stride != 1) {
  if (project) shortcut = nn::Conv2d<T>(store, name + ".shortcut", in, out, 1, stride, 0, rng);
}

template <typename T>
Var<T> ResidualBlock<T>::operator()(const Var<T>& x) const {
  auto h = tensor::relu(norm1(conv1(x)));
  h = norm2(conv2(h));
  return tensor::relu(h + (project ? shortcut(x) : x));
}

template <typename T>
DecoderBlock<T>::DecoderBlock(ParameterStore<T>& store, const std::string& name, std::size_t in,
                              std::size_t skip, std::size_t out, Rng& rng)
    : up(store, name + ".up", in, out, rng),
      fuse(store, name + ".fuse", out + skip, out, 3, 1, 1, rng),
      norm(store, name + ".norm", out) {}

template <typename T>
Var<T> DecoderBlock<T>::operator()(const Var<T>& x, const Var<T>& skip,
                                   std::size_t skip_channels) const {
  auto u = tensor::relu(up(x));
  Var<T> s = skip;
  if (!s.defined()) {
    s = tensor::constant(Tensor<T>({skip_channels, u.dim(1), u.dim(2)}));
  } else if (s.rank() != 3 || s.dim(1) != u.dim(1) || s.dim(2) != u.dim(2)) {
    throw ShapeError("skip " + tensor::to_string(s.shape()) + " does not match upsampled " +
                     tensor::to_string(u.shape()));
  }
  return tensor::relu(norm(fuse(tensor::concat<T>({u, s}, 0))));
}

template <typename T>
DepthNet<T>::DepthNet(const NetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg.validate();
  Rng rng(seed);
  auto& s = store_;
  const bool events = cfg.modality != Modality::kImageOnly;
  const bool image = cfg.modality != Modality::kEventsOnly;
  std::size_t merged = 0;
  if (events) {
    event_conv_ = nn::Conv2d<T>(s, "pre.event", cfg.time_bins, cfg.event_channels, 3, 1, 1, rng);
    merged += cfg.event_channels;
  }
  if (image) {
    image_conv_ = nn::Conv2d<T>(s, "pre.image", 3, cfg.image_channels, 3, 1, 1, rng);
    merged += cfg.image_channels;
  }
  merge_conv_ = nn::Conv2d<T>(s, "pre.merge", merged, cfg.stem_channels, 3, 1, 1, rng);

  const auto& enc = cfg.encoder_channels;
  res1_ = ResidualBlock<T>(s, "enc.res1", cfg.stem_channels, enc[0], 2, rng);
  res2_ = ResidualBlock<T>(s, "enc.res2", enc[0], enc[0], 1, rng);
  const auto variant = cfg.block;
  std::size_t h = cfg.height / 2, w = cfg.width / 2;
  for (std::size_t i = 0; i < 4; ++i) {
    stages_[i] = attention::HybridStage<T>(s, "enc.stage" + std::to_string(i + 1), enc[i], h, w,
                                           cfg.stage_config(i), variant, rng);
    h /= 2;
    w /= 2;
  }

  const auto& dec = cfg.decoder_channels;
  for (std::size_t i = 0; i < 5; ++i) {
    const std::size_t in = i == 0 ? enc[4] : dec[i - 1];
    const std::size_t skip = i < 4 ? enc[3 - i] : cfg.stem_channels;
    decoder_[i] = DecoderBlock<T>(s, "dec.block" + std::to_string(i + 1), in, skip, dec[i], rng);
  }
  head_ = nn::Conv2d<T>(s, "head", dec[4], 1, 3, 1, 1, rng);
  // softplus^-1(d) = log(exp(d) - 1)
  const double d = cfg.initial_depth;
  head_.bias.mutable_value()[0] = static_cast<T>(d > 30 ? d : std::log(std::expm1(d)));
}

template <typename T>
void DepthNet<T>::check_inputs(const Var<T>& voxel, const Var<T>& image) const {
  const Shape vshape{cfg_.time_bins, cfg_.height, cfg_.width};
  const Shape ishape{3, cfg_.height, cfg_.width};
  if (cfg_.modality != Modality::kImageOnly && (!voxel.defined() || voxel.shape() != vshape)) {
    throw ShapeError("voxel grid must be " + tensor::to_string(vshape) + ", got " +
                     (voxel.defined() ? tensor::to_string(voxel.shape()) : "none"));
  }
  if (cfg_.modality != Modality::kEventsOnly && (!image.defined() || image.shape() != ishape)) {
    throw ShapeError("image must be " + tensor::to_string(ishape) + ", got " +
                     (image.defined() ? tensor::to_string(image.shape()) : "none"));
  }
}

template <typename T>
Var<T> DepthNet<T>::preprocess(const Var<T>& voxel, const Var<T>& image) const {
  check_inputs(voxel, image);
  std::vector<Var<T>> parts;
  if (cfg_.modality != Modality::kImageOnly) parts.push_back(tensor::relu(event_conv_(voxel)));
  if (cfg_.modality != Modality::kEventsOnly) parts.push_back(tensor::relu(image_conv_(image)));
  auto x = parts.size() == 1 ? parts[0] : tensor::concat(parts, 0);
  return tensor::relu(merge_conv_(x));
}

template <typename T>
Features<T> DepthNet<T>::encode(const Var<T>& stem) const {
  Features<T> f;
  f.full = stem;
  f.scales[0] = res2_(res1_(stem));
  for (std::size_t i = 0; i < 4; ++i) f.scales[i + 1] = stages_[i](f.scales[i]);
  return f;
}

template <typename T>
Var<T> DepthNet<T>::decode(const Features<T>& f, std::array<bool, 5> skips,
                           std::array<Var<T>, 5>* trace) const {
  Var<T> x = f.scales[4];
  for (std::size_t i = 0; i < 5; ++i) {
    const Var<T>& skip = i < 4 ? f.scales[3 - i] : f.full;
    const std::size_t width = i < 4 ? cfg_.encoder_channels[3 - i] : cfg_.stem_channels;
    x = decoder_[i](x, skips[i] ? skip : Var<T>(), width);
    if (trace) (*trace)[i] = x;
  }
  return tensor::softplus(head_(x));
}

template <typename T>
Var<T> DepthNet<T>::forward(const Var<T>& voxel, const Var<T>& image) const {
  return decode(encode(preprocess(voxel, image)));
}

template <typename T>
DepthFrame DepthNet<T>::infer(const Tensor<T>& voxel, const Tensor<T>& image) const {
  tensor::NoGradGuard guard;
  auto v = voxel.empty() ? Var<T>() : tensor::constant(voxel);
  auto im = image.empty() ? Var<T>() : tensor::constant(image);
  auto pred = forward(v, im).value();
  Tensor<float> depth(pred.shape());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    depth[i] = static_cast<float>(std::clamp<double>(pred[i], 0.0, 80.0));
  }
  return DepthFrame::from_prediction(std::move(depth));
}

template <typename T>
DepthFrame DepthNet<T>::infer(const events::VoxelGrid& voxel, const Tensor<T>& image) const {
  return infer(voxel.as<T>(), image);
}

template <typename T>
void DepthNet<T>::save(const std::filesystem::path& path) const {
  tensor::save_parameters(path, store_);
}

template <typename T>
void DepthNet<T>::load(const std::filesystem::path& path) {
  tensor::load_parameters(path, store_);
}

template struct ResidualBlock<float>;
template struct ResidualBlock<double>;
template struct DecoderBlock<float>;
template struct DecoderBlock<double>;
template class DepthNet<float>;
template class DepthNet<double>;

}  // namespace unict::depth
