#include "unict/synth/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <thread>

namespace unict::synth {

bool Plane::covers(double px, double py, double t) const {
  const double u = px - vx * t, v = py - vy * t;
  if (w > 0.0 && (u < x || u >= x + w)) return false;
  if (h > 0.0 && (v < y || v >= y + h)) return false;
  return true;
}

double Plane::intensity(double px, double py, double t) const {
  const double u = px - vx * t, v = py - vy * t;
  const double s = u * std::cos(orientation) + v * std::sin(orientation);
  return brightness * (1.0 + contrast * std::sin(2.0 * std::numbers::pi * frequency * s + phase));
}

void SceneSpec::validate() const {
  if (height == 0 || width == 0) throw SceneError("scene: empty resolution");
  if (height > 65535 || width > 65535) throw SceneError("scene: resolution exceeds 65535");
  if (!(frame_rate > 0.0)) throw SceneError("scene: frame_rate must be positive");
  if (!(threshold > 0.0)) throw SceneError("scene: threshold must be positive");
  if (planes.empty()) throw SceneError("scene: no planes");
  for (std::size_t i = 0; i < planes.size(); ++i) {
    const auto& p = planes[i];
    const std::string at = "scene: plane " + std::to_string(i) + ": ";
    if (!(p.depth >= 1.0 && p.depth <= 80.0)) throw SceneError(at + "depth outside [1, 80] m");
    if (!(p.contrast >= 0.0 && p.contrast < 1.0)) throw SceneError(at + "contrast outside [0, 1)");
    if (!(p.brightness > 0.0)) throw SceneError(at + "brightness must be positive");
    if (p.w < 0.0 || p.h < 0.0) throw SceneError(at + "negative extent");
  }
}

void to_json(nlohmann::json& j, const Plane& p) {
  j = {{"depth", p.depth}, {"vx", p.vx}, {"vy", p.vy}, {"frequency", p.frequency},
       {"orientation", p.orientation}, {"phase", p.phase}, {"brightness", p.brightness},
       {"contrast", p.contrast}, {"x", p.x}, {"y", p.y}, {"w", p.w}, {"h", p.h}};
}

void from_json(const nlohmann::json& j, Plane& p) {
  j.at("depth").get_to(p.depth);
  j.at("vx").get_to(p.vx);
  j.at("vy").get_to(p.vy);
  j.at("frequency").get_to(p.frequency);
  j.at("orientation").get_to(p.orientation);
  j.at("phase").get_to(p.phase);
  j.at("brightness").get_to(p.brightness);
  j.at("contrast").get_to(p.contrast);
  j.at("x").get_to(p.x);
  j.at("y").get_to(p.y);
  j.at("w").get_to(p.w);
  j.at("h").get_to(p.h);
}

void to_json(nlohmann::json& j, const SceneSpec& s) {
  j = {{"seed", s.seed}, {"height", s.height}, {"width", s.width},
       {"frame_rate", s.frame_rate}, {"threshold", s.threshold}, {"planes", s.planes}};
}

void from_json(const nlohmann::json& j, SceneSpec& s) {
  j.at("seed").get_to(s.seed);
  j.at("height").get_to(s.height);
  j.at("width").get_to(s.width);
  j.at("frame_rate").get_to(s.frame_rate);
  j.at("threshold").get_to(s.threshold);
  j.at("planes").get_to(s.planes);
}

double brightness_at_depth(double depth) { return 0.95 * std::exp(-depth / 8.0); }

SceneSpec random_scene(std::uint64_t seed, std::size_t height, std::size_t width,
                       const SceneOptions& opts) {
  if (!(opts.min_depth >= 1.0 && opts.max_depth > opts.min_depth + 1.0)) {
    throw SceneError("random_scene: depth range must be within [1, 80] and span > 1 m");
  }
  if (opts.min_planes == 0 || opts.max_planes < opts.min_planes) {
    throw SceneError("random_scene: bad plane count range");
  }
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const double two_pi = 2.0 * std::numbers::pi;

  auto textured = [&](double depth) {
    Plane p;
    p.depth = depth;
    const double dir = uni(0.0, two_pi);
    p.vx = opts.parallax_speed / depth * std::cos(dir);
    p.vy = opts.parallax_speed / depth * std::sin(dir);
    p.frequency = uni(opts.min_frequency, opts.max_frequency);
    p.orientation = uni(0.0, std::numbers::pi);
    p.phase = uni(0.0, two_pi);
    p.brightness = brightness_at_depth(depth);
    p.contrast = opts.contrast;
    return p;
  };

  SceneSpec s;
  s.seed = seed;
  s.height = height;
  s.width = width;
  s.frame_rate = opts.frame_rate;
  s.threshold = opts.threshold;
  const double far = uni(opts.max_depth - 0.25 * (opts.max_depth - opts.min_depth), opts.max_depth);
  s.planes.push_back(textured(far));
  const auto n = std::uniform_int_distribution<std::size_t>(opts.min_planes, opts.max_planes)(rng);
  const double hh = static_cast<double>(height), ww = static_cast<double>(width);
  for (std::size_t i = 1; i < n; ++i) {
    Plane p = textured(uni(opts.min_depth, far - 1.0));
    p.w = uni(0.25, 0.6) * ww;
    p.h = uni(0.25, 0.6) * hh;
    p.x = uni(-0.1 * ww, ww - 0.9 * p.w);
    p.y = uni(-0.1 * hh, hh - 0.9 * p.h);
    s.planes.push_back(p);
  }
  s.validate();
  return s;
}

namespace {

void render_one(const SceneSpec& spec, const std::vector<const Plane*>& by_depth, std::size_t k,
                Tensor<float>& image, Tensor<float>& depth) {
  const double t = spec.frame_time(k);
  image = Tensor<float>({1, spec.height, spec.width});
  depth = Tensor<float>({1, spec.height, spec.width});
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      const std::size_t i = y * spec.width + x;
      image[i] = 0.5f;
      for (const Plane* p : by_depth) {
        if (p->covers(px, py, t)) {
          image[i] = static_cast<float>(std::clamp(p->intensity(px, py, t), 1e-3, 1.0));
          depth[i] = static_cast<float>(p->depth);
          break;
        }
      }
    }
  }
}

}  // namespace

RenderedFrames render_frames(const SceneSpec& spec, std::size_t n_frames, std::size_t threads) {
  spec.validate();
  std::vector<const Plane*> by_depth;
  for (const auto& p : spec.planes) by_depth.push_back(&p);
  std::stable_sort(by_depth.begin(), by_depth.end(),
                   [](const Plane* a, const Plane* b) { return a->depth < b->depth; });

  std::vector<Tensor<float>> images(n_frames), depths(n_frames);
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n_frames, 1));
  auto work = [&](std::size_t first) {
    for (std::size_t k = first; k < n_frames; k += threads)
      render_one(spec, by_depth, k, images[k], depths[k]);
  };
  std::vector<std::jthread> pool;
  for (std::size_t i = 1; i < threads; ++i) pool.emplace_back(work, i);
  work(0);
  pool.clear();

  RenderedFrames out;
  out.images = std::move(images);
  for (auto& d : depths) out.depth.push_back(depth::DepthFrame::from_ground_truth(std::move(d)));
  for (std::size_t k = 0; k < n_frames; ++k) out.timestamps.push_back(spec.frame_time(k));
  return out;
}

std::vector<events::EventRecord> simulate_events(const SceneSpec& spec,
                                                 const std::vector<Tensor<float>>& images,
                                                 const std::vector<double>& timestamps) {
  if (images.size() < 2) throw SceneError("simulate_events: need at least two frames");
  if (timestamps.size() != images.size()) {
    throw SceneError("simulate_events: one timestamp per frame required");
  }
  const tensor::Shape shape{1, spec.height, spec.width};
  for (const auto& im : images) {
    if (im.shape() != shape) throw SceneError("simulate_events: frame shape does not match the scene size");
  }
  for (std::size_t k = 1; k < timestamps.size(); ++k) {
    if (!(timestamps[k] > timestamps[k - 1])) {
      throw SceneError("simulate_events: timestamps must increase");
    }
  }
  const double theta = spec.threshold;
  if (!(theta > 0.0)) throw SceneError("simulate_events: threshold must be positive");

  const std::size_t n_pix = spec.height * spec.width;
  std::vector<events::EventRecord> out;
  for (std::size_t i = 0; i < n_pix; ++i) {
    const auto x = static_cast<std::uint16_t>(i % spec.width);
    const auto y = static_cast<std::uint16_t>(i / spec.width);
    double ref = std::log(static_cast<double>(images[0][i]));
    for (std::size_t k = 1; k < images.size(); ++k) {
      const double l0 = std::log(static_cast<double>(images[k - 1][i]));
      const double l1 = std::log(static_cast<double>(images[k][i]));
      const double dt = timestamps[k] - timestamps[k - 1];
      for (;;) {
        std::int8_t p;
        if (l1 - ref >= theta) {
          ref += theta;
          p = 1;
        } else if (ref - l1 >= theta) {
          ref -= theta;
          p = -1;
        } else {
          break;
        }
        // The crossed level lies between l0 and l1; the clamp only absorbs rounding.
        const double a = l1 != l0 ? std::clamp((ref - l0) / (l1 - l0), 0.0, 1.0) : 0.0;
        out.push_back({timestamps[k - 1] + a * dt, x, y, p});
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.t < b.t; });
  return out;
}

}  // namespace unict::synth
