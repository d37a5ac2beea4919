#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "unict/events/voxel_grid.hpp"
#include "unict/events/windowing.hpp"
#include "unict/io/image_io.hpp"
#include "unict/synth/dataset.hpp"

using namespace unict;
using synth::Plane;
using synth::SceneSpec;
using tensor::Tensor;

namespace {

SceneSpec single_plane(double depth, double vx = 0.0) {
  SceneSpec s;
  s.height = 12;
  s.width = 16;
  Plane p;
  p.depth = depth;
  p.vx = vx;
  s.planes.push_back(p);
  return s;
}

struct PixelCounts {
  long up = 0, down = 0;
};

// Straight per-pixel replay of the threshold rule, counting only.
std::map<std::pair<int, int>, PixelCounts> reference_counts(const SceneSpec& spec,
                                                            const std::vector<Tensor<float>>& frames) {
  std::map<std::pair<int, int>, PixelCounts> out;
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      const std::size_t i = y * spec.width + x;
      double level = std::log(double(frames[0][i]));
      PixelCounts c;
      for (std::size_t k = 1; k < frames.size(); ++k) {
        const double now = std::log(double(frames[k][i]));
        while (now - level >= spec.threshold) {
          level += spec.threshold;
          ++c.up;
        }
        while (level - now >= spec.threshold) {
          level -= spec.threshold;
          ++c.down;
        }
      }
      if (c.up || c.down) out[{int(x), int(y)}] = c;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("image formats round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "unict_io_test";
  std::filesystem::create_directories(dir);
  tensor::Rng rng(1);
  auto map = tensor::uniform<float>({1, 5, 7}, -3, 90, rng);
  map[3] = std::numeric_limits<float>::infinity();
  io::write_pfm(dir / "a.pfm", map);
  auto back = io::read_pfm(dir / "a.pfm");
  CHECK(back.shape() == map.shape());
  for (std::size_t i = 0; i < map.size(); ++i) CHECK(back[i] == map[i]);

  Tensor<float> gray({1, 3, 4});
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = float(i * 20) / 255.0f;
  io::write_pgm(dir / "a.pgm", gray);
  auto g = io::read_pgm(dir / "a.pgm");
  for (std::size_t i = 0; i < gray.size(); ++i) CHECK(g[i] == doctest::Approx(gray[i]).epsilon(1e-6));

  io::write_depth_png(dir / "a.png", map);
  CHECK(std::filesystem::file_size(dir / "a.png") > 8);
  CHECK_THROWS_AS(io::read_pfm(dir / "a.pgm"), io::ImageError);
  CHECK_THROWS_AS(io::read_pgm(dir / "missing.pgm"), io::ImageError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("turbo colormap endpoints") {
  const auto lo = io::turbo(0.0), hi = io::turbo(1.0), mid = io::turbo(0.5);
  CHECK(lo[0] + lo[1] + lo[2] < 120);  // near-black low end
  const auto cold = io::turbo(0.1);
  CHECK(cold[2] > cold[0]);
  CHECK(hi[0] > hi[2]);   // dark red end
  CHECK(mid[1] > 200);    // bright green-yellow middle
  CHECK(io::turbo(-1.0) == lo);
  CHECK(io::turbo(2.0) == hi);
}

TEST_CASE("static plane renders constant depth and yields no events") {
  auto spec = single_plane(10.0);
  auto frames = synth::render_frames(spec, 4);
  for (const auto& d : frames.depth) {
    CHECK(d.valid_count() == spec.height * spec.width);
    for (float v : d.depth.values()) CHECK(v == 10.0f);
  }
  auto ev = synth::simulate_events(spec, frames.images, frames.timestamps);
  CHECK(ev.empty());
  events::EventSlice slice{ev, frames.timestamps.front(),
                           frames.timestamps.back() - frames.timestamps.front()};
  CHECK(events::voxelize(slice, spec.height, spec.width).total() == 0.0);
}

TEST_CASE("nearer planes occlude farther ones") {
  SceneSpec s = single_plane(9.0);
  Plane a;
  a.depth = 4.0;
  a.x = 2;
  a.y = 2;
  a.w = 8;
  a.h = 6;
  Plane b = a;
  b.depth = 2.0;
  b.x = 6;
  b.w = 8;
  s.planes = {s.planes[0], b, a};  // not sorted by depth
  auto f = synth::render_frames(s, 1);
  for (std::size_t y = 0; y < s.height; ++y) {
    for (std::size_t x = 0; x < s.width; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double want = 9.0;
      for (const auto& p : s.planes)
        if (p.covers(px, py, 0.0)) want = std::min(want, p.depth);
      CHECK(f.depth[0].depth.at(0, y, x) == float(want));
    }
  }
  CHECK(f.depth[0].depth.at(0, 3, 7) == 2.0f);
  CHECK(f.depth[0].depth.at(0, 3, 3) == 4.0f);
}

TEST_CASE("uncovered pixels are invalid") {
  SceneSpec s = single_plane(5.0);
  s.planes[0].w = 4;
  s.planes[0].h = 4;
  auto f = synth::render_frames(s, 1);
  CHECK(f.depth[0].valid_count() == 16);
}

TEST_CASE("simulator matches the per-pixel reference on random scenes") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CAPTURE(seed);
    auto spec = synth::random_scene(seed, 24, 32);
    auto frames = synth::render_frames(spec, 8, 2);
    auto ev = synth::simulate_events(spec, frames.images, frames.timestamps);
    CHECK(!ev.empty());

    std::map<std::pair<int, int>, PixelCounts> got;
    for (std::size_t i = 0; i < ev.size(); ++i) {
      auto& c = got[{ev[i].x, ev[i].y}];
      (ev[i].p > 0 ? c.up : c.down)++;
      if (i > 0) CHECK(ev[i - 1].t <= ev[i].t);
      CHECK(ev[i].t >= frames.timestamps.front());
      CHECK(ev[i].t <= frames.timestamps.back());
    }
    const auto want = reference_counts(spec, frames.images);
    CHECK(got.size() == want.size());
    for (const auto& [px, c] : want) {
      CHECK(got[px].up == c.up);
      CHECK(got[px].down == c.down);
    }
  }
}

TEST_CASE("event polarity follows the log-intensity change in its interval") {
  auto spec = synth::random_scene(9, 24, 32);
  auto frames = synth::render_frames(spec, 6);
  auto ev = synth::simulate_events(spec, frames.images, frames.timestamps);
  REQUIRE(!ev.empty());
  for (const auto& e : ev) {
    std::size_t k = 1;
    while (k + 1 < frames.timestamps.size() && e.t > frames.timestamps[k]) ++k;
    const std::size_t i = e.y * spec.width + e.x;
    const double change = std::log(double(frames.images[k][i])) - std::log(double(frames.images[k - 1][i]));
    CHECK(change * e.p > 0.0);
  }
}

TEST_CASE("a moving step edge only fires along the edge columns") {
  SceneSpec s = single_plane(9.0);
  s.width = 40;
  s.planes[0].contrast = 0.0;
  s.planes[0].brightness = 0.2;
  Plane bar;
  bar.depth = 3.0;
  bar.contrast = 0.0;
  bar.brightness = 0.8;
  bar.x = 10;
  bar.w = 10;
  bar.vx = s.frame_rate;  // one pixel per frame
  s.planes.push_back(bar);
  auto f = synth::render_frames(s, 5);
  auto ev = synth::simulate_events(s, f.images, f.timestamps);
  REQUIRE(!ev.empty());
  std::set<int> cols;
  for (const auto& e : ev) cols.insert(e.x);
  CHECK(cols == std::set<int>{10, 11, 12, 13, 20, 21, 22, 23});
}

TEST_CASE("rendering and simulation are deterministic") {
  auto a = synth::random_scene(4, 20, 20);
  auto b = synth::random_scene(4, 20, 20);
  CHECK(nlohmann::json(a) == nlohmann::json(b));
  CHECK(nlohmann::json(a) != nlohmann::json(synth::random_scene(5, 20, 20)));
  auto fa = synth::render_frames(a, 5, 1), fb = synth::render_frames(b, 5, 3);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(fa.images[k] == fb.images[k]);
    CHECK(fa.depth[k].depth == fb.depth[k].depth);
  }
  CHECK(synth::simulate_events(a, fa.images, fa.timestamps) ==
        synth::simulate_events(b, fb.images, fb.timestamps));
  // Frame k on its own matches frame k of a longer render.
  auto longer = synth::render_frames(a, 9);
  CHECK(longer.depth[4].depth == fa.depth[4].depth);
}

TEST_CASE("scene validation") {
  auto s = single_plane(10.0);
  CHECK_NOTHROW(s.validate());
  s.planes[0].depth = 0.5;
  CHECK_THROWS_AS(s.validate(), synth::SceneError);
  s = single_plane(10.0);
  s.threshold = 0.0;
  CHECK_THROWS_AS(s.validate(), synth::SceneError);
  s = single_plane(10.0);
  s.planes.clear();
  CHECK_THROWS_AS(s.validate(), synth::SceneError);
  auto f = synth::render_frames(single_plane(3.0), 1);
  CHECK_THROWS_AS(synth::simulate_events(single_plane(3.0), f.images, f.timestamps), synth::SceneError);
  SceneSpec back = nlohmann::json(synth::random_scene(2, 8, 8)).get<SceneSpec>();
  CHECK(nlohmann::json(back) == nlohmann::json(synth::random_scene(2, 8, 8)));
}

TEST_CASE("dataset files round-trip and feed training samples") {
  synth::DatasetOptions opts;
  opts.seed = 3;
  opts.height = opts.width = 32;
  opts.scenes = 2;
  opts.frames_per_scene = 5;
  opts.blank_fraction = 0.5;
  auto data = synth::generate_dataset(opts);
  CHECK(data.frames() == 10);
  CHECK(data.sample_frames() == std::vector<std::size_t>{1, 2, 3, 4, 6, 7, 8, 9});
  std::size_t blanks = 0;
  for (std::size_t k = 0; k < data.frames(); ++k) {
    if (!data.blank[k]) continue;
    ++blanks;
    CHECK(k % 5 != 0);
    for (float v : data.images[k].values()) CHECK(v == 0.0f);
  }
  CHECK(blanks == 4);

  const auto dir = std::filesystem::temp_directory_path() / "unict_dataset_test";
  std::filesystem::remove_all(dir);
  synth::write_dataset(dir, data);
  for (const char* name : {"events.bin", "timestamps.txt", "spec.json", "images/000009.pgm",
                           "depth/000009.pfm"})
    CHECK(std::filesystem::exists(dir / name));
  auto back = synth::read_dataset(dir);
  CHECK(back.events == data.events);
  CHECK(back.timestamps == data.timestamps);
  CHECK(back.blank == data.blank);
  CHECK(back.scenes.size() == 2);
  for (std::size_t k = 0; k < data.frames(); ++k) CHECK(back.depth[k].depth == data.depth[k].depth);

  auto samples = synth::make_samples<float>(back, 5);
  REQUIRE(samples.size() == 8);
  CHECK(samples[0].voxel.shape() == tensor::Shape{5, 32, 32});
  CHECK(samples[0].image.shape() == tensor::Shape{3, 32, 32});
  // The voxel of frame k holds exactly the polarity sum of events in (t_{k-1}, t_k).
  const auto slices = events::window_events(data.events, data.timestamps);
  double sum = 0;
  for (const auto& e : slices[0].events) sum += e.p;
  double voxel_sum = 0;
  for (float v : samples[0].voxel.values()) voxel_sum += v;
  CHECK(voxel_sum == doctest::Approx(sum));
  std::filesystem::remove_all(dir);
}
