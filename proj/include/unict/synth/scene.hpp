#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "unict/depth/loss.hpp"
#include "unict/events/event.hpp"

namespace unict::synth {

using tensor::Tensor;

class SceneError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A fronto-parallel plane translating in the image. Its footprint at t = 0
/// is the rectangle [x, x + w) x [y, y + h) in pixels; w or h of 0 makes it
/// unbounded in that direction. Intensity is a sinusoid over the plane's own
/// coordinates: brightness * (1 + contrast * sin(2 pi f (u cos a + v sin a) + phase)).
struct Plane {
  double depth = 10.0;         // metres
  double vx = 0.0, vy = 0.0;   // px/s
  double frequency = 0.1;      // cycles/px
  double orientation = 0.0;    // radians
  double phase = 0.0;
  double brightness = 0.5;
  double contrast = 0.3;       // in [0, 1)
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;

  bool covers(double px, double py, double t) const;
  double intensity(double px, double py, double t) const;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t height = 64;
  std::size_t width = 64;
  double frame_rate = 30.0;
  double threshold = 0.15;  // log-intensity contrast for one event
  std::vector<Plane> planes;

  /// Throws SceneError on empty geometry, depths outside [1, 80] m,
  /// non-positive threshold or frame rate, or a contrast outside [0, 1).
  void validate() const;
  double frame_time(std::size_t k) const { return static_cast<double>(k) / frame_rate; }
};

void to_json(nlohmann::json& j, const Plane& p);
void from_json(const nlohmann::json& j, Plane& p);
void to_json(nlohmann::json& j, const SceneSpec& s);
void from_json(const nlohmann::json& j, SceneSpec& s);

/// How depth maps onto the appearance and motion of generated planes.
/// Brightness falls with depth, apparent speed is parallax_speed / depth,
/// and texture frequency is drawn independently of depth.
struct SceneOptions {
  std::size_t min_planes = 2, max_planes = 4;
  double min_depth = 2.0, max_depth = 10.0;
  double parallax_speed = 90.0;  // px/s at 1 m
  double min_frequency = 0.05, max_frequency = 0.15;
  double contrast = 0.35;
  double frame_rate = 30.0;
  double threshold = 0.15;
};

double brightness_at_depth(double depth);

/// Unbounded background plane at the far end of the depth range plus
/// randomly placed nearer rectangles, all derived from `seed`.
SceneSpec random_scene(std::uint64_t seed, std::size_t height, std::size_t width,
                       const SceneOptions& opts = {});

struct RenderedFrames {
  std::vector<Tensor<float>> images;  // [1 x H x W], intensity in (0, 1]
  std::vector<depth::DepthFrame> depth;
  std::vector<double> timestamps;
};

/// Frame k is sampled at pixel centres at time k / frame_rate; the nearest
/// covering plane wins. Pixels no plane covers get depth 0 (invalid) and
/// intensity 0.5. `threads` renders frames concurrently.
RenderedFrames render_frames(const SceneSpec& spec, std::size_t n_frames, std::size_t threads = 1);

/// Per-pixel log-intensity event simulator. Each pixel keeps a reference
/// level, initialised from the first frame. Between consecutive frames the
/// log intensity is taken as linear in time. Every time it moves a full
/// threshold away from the reference, one event is emitted at the
/// interpolated crossing time and the reference steps by one threshold. The
/// output is sorted by timestamp; ties keep pixel order. Throws SceneError
/// with fewer than two frames or mismatched inputs.
std::vector<events::EventRecord> simulate_events(const SceneSpec& spec,
                                                 const std::vector<Tensor<float>>& images,
                                                 const std::vector<double>& timestamps);

}  // namespace unict::synth
