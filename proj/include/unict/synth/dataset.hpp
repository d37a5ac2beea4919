#pragma once

#include <filesystem>
#include <vector>

#include "unict/depth/training.hpp"
#include "unict/synth/scene.hpp"

namespace unict::synth {

/// A sequence of independent random scenes rendered back to back. Scene s
/// occupies frames [s * F, (s + 1) * F); a one-frame gap separates scenes in
/// time so no interval spans two scenes.
struct DatasetOptions {
  std::uint64_t seed = 0;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t scenes = 10;
  std::size_t frames_per_scene = 21;
  /// Fraction of sample frames whose stored image is all zeros. Events are
  /// always simulated from the real images.
  double blank_fraction = 0.0;
  SceneOptions scene;
  std::size_t threads = 1;
};

void to_json(nlohmann::json& j, const DatasetOptions& o);

struct Dataset {
  DatasetOptions options;
  std::vector<SceneSpec> scenes;
  std::vector<Tensor<float>> images;  // [1 x H x W]
  std::vector<depth::DepthFrame> depth;
  std::vector<double> timestamps;
  std::vector<events::EventRecord> events;
  std::vector<std::uint8_t> blank;  // per frame

  std::size_t frames() const { return images.size(); }
  /// Frames that have a preceding frame in the same scene.
  std::vector<std::size_t> sample_frames() const;
};

Dataset generate_dataset(const DatasetOptions& opts);

/// Layout: images/NNNNNN.pgm, depth/NNNNNN.pfm, events.bin, timestamps.txt
/// (one time in seconds per line) and spec.json.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir);

/// One training sample per frame in `frames` (all sample frames by
/// default): the voxel grid of events since the previous frame, the image
/// replicated to three channels, and the depth target.
template <typename T>
std::vector<depth::Sample<T>> make_samples(const Dataset& data, std::size_t bins,
                                           const std::vector<std::size_t>& frames = {});

}  // namespace unict::synth
