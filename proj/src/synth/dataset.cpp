#include "unict/synth/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "unict/events/event_io.hpp"
#include "unict/events/voxel_grid.hpp"
#include "unict/events/windowing.hpp"
#include "unict/io/image_io.hpp"

namespace unict::synth {

namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const DatasetOptions& o) {
  j = {{"seed", o.seed},
       {"height", o.height},
       {"width", o.width},
       {"scenes", o.scenes},
       {"frames_per_scene", o.frames_per_scene},
       {"blank_fraction", o.blank_fraction}};
}

std::vector<std::size_t> Dataset::sample_frames() const {
  std::vector<std::size_t> out;
  const std::size_t f = options.frames_per_scene;
  for (std::size_t k = 0; k < frames(); ++k)
    if (f > 0 && k % f != 0) out.push_back(k);
  return out;
}

Dataset generate_dataset(const DatasetOptions& opts) {
  if (opts.scenes == 0 || opts.frames_per_scene < 2) {
    throw SceneError("dataset: need at least one scene of two frames");
  }
  if (!(opts.blank_fraction >= 0.0 && opts.blank_fraction <= 1.0)) {
    throw SceneError("dataset: blank_fraction outside [0, 1]");
  }
  Dataset d;
  d.options = opts;
  const std::size_t f = opts.frames_per_scene;
  std::mt19937_64 seeds(opts.seed);
  for (std::size_t s = 0; s < opts.scenes; ++s) {
    SceneSpec spec = random_scene(seeds(), opts.height, opts.width, opts.scene);
    auto frames = render_frames(spec, f, opts.threads);
    const double offset = static_cast<double>(s * (f + 1)) / spec.frame_rate;
    for (auto& t : frames.timestamps) t += offset;
    auto ev = simulate_events(spec, frames.images, frames.timestamps);
    d.events.insert(d.events.end(), ev.begin(), ev.end());
    for (std::size_t k = 0; k < f; ++k) {
      d.images.push_back(std::move(frames.images[k]));
      d.depth.push_back(std::move(frames.depth[k]));
      d.timestamps.push_back(frames.timestamps[k]);
    }
    d.scenes.push_back(std::move(spec));
  }

  d.blank.assign(d.frames(), 0);
  auto candidates = d.sample_frames();
  std::shuffle(candidates.begin(), candidates.end(), std::mt19937_64(opts.seed ^ 0x5bd1e995u));
  const auto n_blank = static_cast<std::size_t>(
      std::lround(opts.blank_fraction * static_cast<double>(candidates.size())));
  for (std::size_t i = 0; i < n_blank; ++i) {
    d.blank[candidates[i]] = 1;
    d.images[candidates[i]].fill(0.0f);
  }
  return d;
}

namespace {

std::string frame_name(std::size_t k, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.%s", k, ext);
  return buf;
}

}  // namespace

void write_dataset(const fs::path& dir, const Dataset& data) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "depth");
  for (std::size_t k = 0; k < data.frames(); ++k) {
    io::write_pgm(dir / "images" / frame_name(k, "pgm"), data.images[k]);
    io::write_pfm(dir / "depth" / frame_name(k, "pfm"), data.depth[k].depth);
  }
  events::write_events_binary(dir / "events.bin", data.events,
                              static_cast<std::uint16_t>(data.options.width),
                              static_cast<std::uint16_t>(data.options.height));
  std::ofstream ts(dir / "timestamps.txt");
  ts.precision(17);
  for (double t : data.timestamps) ts << t << "\n";

  nlohmann::json spec = data.options;
  spec["version"] = 1;
  spec["scene_specs"] = data.scenes;
  std::vector<std::size_t> blank;
  for (std::size_t k = 0; k < data.frames(); ++k)
    if (data.blank[k]) blank.push_back(k);
  spec["blank_frames"] = blank;
  std::ofstream(dir / "spec.json") << spec.dump(2) << "\n";
  if (!ts) throw SceneError("dataset: failed writing " + dir.string());
}

Dataset read_dataset(const fs::path& dir) {
  std::ifstream spec_in(dir / "spec.json");
  if (!spec_in) throw SceneError("dataset: missing " + (dir / "spec.json").string());
  nlohmann::json spec;
  try {
    spec = nlohmann::json::parse(spec_in);
    Dataset d;
    spec.at("seed").get_to(d.options.seed);
    spec.at("height").get_to(d.options.height);
    spec.at("width").get_to(d.options.width);
    spec.at("scenes").get_to(d.options.scenes);
    spec.at("frames_per_scene").get_to(d.options.frames_per_scene);
    spec.at("blank_fraction").get_to(d.options.blank_fraction);
    spec.at("scene_specs").get_to(d.scenes);

    std::ifstream ts(dir / "timestamps.txt");
    if (!ts) throw SceneError("dataset: missing timestamps.txt");
    for (double t; ts >> t;) d.timestamps.push_back(t);
    d.blank.assign(d.timestamps.size(), 0);
    for (std::size_t k : spec.at("blank_frames").get<std::vector<std::size_t>>()) d.blank.at(k) = 1;
    for (std::size_t k = 0; k < d.timestamps.size(); ++k) {
      d.images.push_back(io::read_pgm(dir / "images" / frame_name(k, "pgm")));
      d.depth.push_back(
          depth::DepthFrame::from_ground_truth(io::read_pfm(dir / "depth" / frame_name(k, "pfm"))));
    }
    d.events = events::read_events(dir / "events.bin", events::EventFormat::kBinary);
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw SceneError("dataset: bad spec.json: " + std::string(e.what()));
  }
}

template <typename T>
std::vector<depth::Sample<T>> make_samples(const Dataset& data, std::size_t bins,
                                           const std::vector<std::size_t>& frames) {
  const auto wanted = frames.empty() ? data.sample_frames() : frames;
  const auto slices = events::window_events(data.events, data.timestamps);
  const std::size_t h = data.options.height, w = data.options.width;
  std::vector<depth::Sample<T>> out;
  out.reserve(wanted.size());
  for (std::size_t k : wanted) {
    if (k == 0 || k >= data.frames()) throw SceneError("make_samples: frame out of range");
    depth::Sample<T> s;
    s.voxel = events::voxelize(slices[k - 1], h, w, bins).template as<T>();
    s.image = Tensor<T>({3, h, w});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < h * w; ++i) s.image[c * h * w + i] = static_cast<T>(data.images[k][i]);
    s.target = data.depth[k];
    out.push_back(std::move(s));
  }
  return out;
}

template std::vector<depth::Sample<float>> make_samples(const Dataset&, std::size_t,
                                                        const std::vector<std::size_t>&);
template std::vector<depth::Sample<double>> make_samples(const Dataset&, std::size_t,
                                                         const std::vector<std::size_t>&);

}  // namespace unict::synth
