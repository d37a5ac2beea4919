// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset. Exit status is non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support/nets.hpp"
#include "unict/attention/attention.hpp"
#include "unict/attention/blocks.hpp"
#include "unict/events/event_io.hpp"
#include "unict/events/voxel_grid.hpp"
#include "unict/synth/dataset.hpp"
#include "unict/tensor/grad_check.hpp"

using namespace unict;
using tensor::Rng;
using tensor::Shape;
using tensor::Tensor;
using tensor::Var;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed checks with a short reason each.
struct Checks {
  std::vector<std::string> failures;
  std::ostringstream notes;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  Outcome done() const {
    Outcome o;
    o.pass = failures.empty();
    o.detail = notes.str();
    for (std::size_t i = 0; i < failures.size() && i < 3; ++i) o.detail += "; FAILED " + failures[i];
    if (failures.size() > 3) o.detail += "; +" + std::to_string(failures.size() - 3) + " more";
    return o;
  }
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// 1. Voxelization

Outcome voxelization() {
  Checks c;
  Rng rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t h = 1 + rng() % 40, w = 1 + rng() % 40, bins = 1 + rng() % 9;
    events::EventSlice s;
    s.t0 = u(rng) * 100.0;
    s.duration = 1e-3 + u(rng);
    const std::size_t n = rng() % 400;
    for (std::size_t i = 0; i < n; ++i) {
      s.events.push_back({s.t0 + s.duration * u(rng), static_cast<std::uint16_t>(rng() % w),
                          static_cast<std::uint16_t>(rng() % h), rng() % 2 ? std::int8_t(1) : std::int8_t(-1)});
    }
    std::sort(s.events.begin(), s.events.end(), [](auto& a, auto& b) { return a.t < b.t; });
    double polarity = 0;
    for (const auto& e : s.events) polarity += e.p;
    worst = std::max(worst, std::abs(events::voxelize(s, h, w, bins).total() - polarity));
  }
  c.expect(worst <= 1e-6, "mass conservation, max deviation " + fmt(worst));
  c.notes << "1000 slices, max |sum grid - sum p| = " << fmt(worst);

  // t* = (B - 1)(t - t0)/dT = 4 * 0.625 = 2.5 for B = 5.
  events::EventSlice one{{{0.625, 1, 0, 1}}, 0.0, 1.0};
  const auto g = events::voxelize(one, 1, 2, 5);
  bool exact = g.at(2, 0, 1) == 0.5 && g.at(3, 0, 1) == 0.5;
  for (std::size_t b = 0; b < 5; ++b) exact = exact && g.at(b, 0, 0) == 0.0;
  for (std::size_t b : {0, 1, 4}) exact = exact && g.at(b, 0, 1) == 0.0;
  c.expect(exact, "single-event split");
  c.notes << "; single event at t*=2.5 -> " << g.at(2, 0, 1) << "/" << g.at(3, 0, 1);
  return c.done();
}

// ---------------------------------------------------------------------------
// 2. Attention equivalence

// Plain multi-head attention over all tokens.
Tensor<double> dense_oracle(const Tensor<double>& q, const Tensor<double>& k,
                            const Tensor<double>& v, std::size_t heads) {
  const std::size_t p = q.dim(0), c = q.dim(1), ch = c / heads;
  Tensor<double> out({p, c});
  std::vector<double> s(p);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < p; ++i) {
      double mx = -INFINITY;
      for (std::size_t j = 0; j < p; ++j) {
        double d = 0;
        for (std::size_t e = 0; e < ch; ++e) d += q.at(i, h * ch + e) * k.at(j, h * ch + e);
        s[j] = d / std::sqrt(double(ch));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (auto& x : s) z += (x = std::exp(x - mx));
      for (std::size_t e = 0; e < ch; ++e) {
        double acc = 0;
        for (std::size_t j = 0; j < p; ++j) acc += s[j] * v.at(j, h * ch + e);
        out.at(i, h * ch + e) = acc / z;
      }
    }
  }
  return out;
}

Outcome attention_equivalence() {
  Checks c;
  Rng rng(202);
  double worst = 0;
  bool identity = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t gh = 1 + rng() % 7, gw = 1 + rng() % 7, heads = 1 + rng() % 4;
    const std::size_t c_dim = heads * (1 + rng() % 6), p = gh * gw;
    auto q = tensor::uniform<double>({p, c_dim}, -2, 2, rng);
    auto k = tensor::uniform<double>({p, c_dim}, -2, 2, rng);
    auto v = tensor::uniform<double>({p, c_dim}, -2, 2, rng);
    const auto got = attention::window_attention(tensor::constant(q), tensor::constant(k),
                                                 tensor::constant(v), gh, gw, gh, gw, heads)
                         .out.value();
    const auto want = dense_oracle(q, k, v, heads);
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));

    const auto same = attention::group_channel_attention(tensor::constant(q), tensor::constant(k),
                                                         tensor::constant(v), c_dim)
                          .out.value();
    identity = identity && same == v;
  }
  c.expect(worst < 1e-6, "windowed vs dense oracle, max diff " + fmt(worst));
  c.expect(identity, "group attention with one channel per group is not V");
  c.notes << "100 cases, N_w=1 max |diff| = " << fmt(worst) << "; N_g=C returns V exactly: "
          << (identity ? "yes" : "no");
  return c.done();
}

// ---------------------------------------------------------------------------
// 3. Gradients

attention::BlockConfig small_block() {
  attention::BlockConfig cfg;
  cfg.channels = 8;
  cfg.heads = 2;
  cfg.window_h = cfg.window_w = 2;
  cfg.group_channels = 4;
  cfg.mlp_ratio = 2;
  return cfg;
}

Outcome gradients() {
  Checks c;
  constexpr double kTol = 1e-4;
  auto run = [&](const std::string& name, const std::function<Var<double>()>& objective,
                 std::vector<tensor::NamedParameter<double>> params, tensor::GradCheckOptions opts) {
    opts.tolerance = kTol;
    const auto r = tensor::grad_check(objective, params, opts);
    c.expect(r.passed(), name + " (" + r.summary().substr(0, 200) + ")");
    c.notes << (c.notes.tellp() > 0 ? ", " : "") << name << " " << fmt(r.max_rel_error, 2);
  };

  // Each block gets its own store and a fixed random weighting of its output.
  const auto cfg = small_block();
  for (auto [name, kind] : {std::pair{"window attention", attention::BranchKind::kWindow},
                            std::pair{"channel-group attention", attention::BranchKind::kChannelGroup}}) {
    tensor::ParameterStore<double> store;
    Rng rng(300 + static_cast<int>(kind));
    attention::Branch<double> branch(store, name, kind, cfg, rng);
    auto x = tensor::parameter(tensor::uniform<double>({16, 8}, -1, 1, rng));
    auto params = store.entries();
    params.push_back({"input", x});
    Rng wr(1);
    auto w = tensor::uniform<double>({16, 8}, -1, 1, wr);
    run(name, [&] { return tensor::sum(tensor::mul(branch(x, 4, 4), tensor::constant(w))); },
        params, {});
  }
  {
    tensor::ParameterStore<double> store;
    Rng rng(310);
    attention::DetailGate<double> gate(store, "dcc", 8, rng);
    auto x = tensor::parameter(tensor::uniform<double>({8, 6, 6}, -1, 1, rng));
    auto params = store.entries();
    params.push_back({"input", x});
    Rng wr(2);
    auto w = tensor::uniform<double>({1, 6, 6}, -1, 1, wr);
    run("detail gate", [&] { return tensor::sum(tensor::mul(gate(x), tensor::constant(w))); }, params, {});
  }
  {
    // Dual attention without gating.
    tensor::ParameterStore<double> store;
    Rng rng(320);
    attention::DualAttentionBlock<double> block(store, "dual", cfg,
                                                {attention::BranchKind::kChannelGroup,
                                                 attention::BranchKind::kWindow, false, false}, rng);
    auto x = tensor::parameter(tensor::uniform<double>({16, 8}, -1, 1, rng));
    auto params = store.entries();
    params.push_back({"input", x});
    Rng wr(3);
    auto w = tensor::uniform<double>({16, 8}, -1, 1, wr);
    run("dual block", [&] { return tensor::sum(tensor::mul(block({x, 4, 4}).tokens, tensor::constant(w))); },
        params, {});
  }
  {
    // Patch embedding, gated dual attention and MLP.
    tensor::ParameterStore<double> store;
    Rng rng(330);
    attention::HybridStage<double> stage(store, "stage", 3, 8, 8, cfg, attention::BlockVariant{}, rng);
    auto x = tensor::parameter(tensor::uniform<double>({3, 8, 8}, -1, 1, rng));
    auto params = store.entries();
    params.push_back({"input", x});
    Rng wr(4);
    auto w = tensor::uniform<double>({8, 4, 4}, -1, 1, wr);
    run("gated stage", [&] { return tensor::sum(tensor::mul(stage(x), tensor::constant(w))); },
        params, {});
  }
  {
    depth::DepthNet<double> net(testing::micro_config(32), 21);
    Rng rng(22);
    auto s = testing::random_sample<double>(net.config(), rng);
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    for (const auto& p : net.parameters().entries()) {
      if (p.name.ends_with(".bias") || p.name.ends_with(".beta")) {
        auto& t = p.var.mutable_value();
        for (std::size_t i = 0; i < t.size(); ++i) t[i] += jitter(rng);
      }
    }
    auto v = tensor::constant(s.voxel), im = tensor::constant(s.image);
    tensor::GradCheckOptions opts;
    opts.max_entries_per_param = 4;
    opts.scale_floor = 1e-4;
    run("toy net 32x32",
        [&] { return depth::depth_loss(net.forward(v, im), s.target, net.config().loss); },
        net.parameters().entries(), opts);
  }
  return c.done();
}

// ---------------------------------------------------------------------------
// 4. Complexity

Outcome complexity() {
  Checks c;
  attention::BlockConfig cfg;  // C = 64, heads 2, 7x7 windows, C_g = 16
  const std::vector<std::pair<std::size_t, std::size_t>> grids = {
      {7, 7}, {7, 14}, {14, 14}, {14, 28}, {28, 28}, {28, 56}, {56, 56}};
  std::vector<std::array<double, 3>> macs;
  std::vector<double> tokens;
  Rng rng(404);
  tensor::NoGradGuard ng;
  for (auto [gh, gw] : grids) {
    const std::size_t p = gh * gw;
    auto make = [&] { return tensor::constant(tensor::uniform<float>({p, cfg.channels}, -1, 1, rng)); };
    auto q = make(), k = make(), v = make();
    std::array<double, 3> m{};
    std::function<void()> kernels[3] = {
        [&] { attention::dense_attention(q, k, v, cfg.heads); },
        [&] { attention::window_attention(q, k, v, gh, gw, cfg.window_h, cfg.window_w, cfg.heads); },
        [&] { attention::group_channel_attention(q, k, v, cfg.groups()); }};
    for (int i = 0; i < 3; ++i) {
      tensor::OpCounter counter;
      tensor::CountScope scope(counter);
      kernels[i]();
      m[i] = static_cast<double>(counter.total);
    }
    macs.push_back(m);
    tokens.push_back(static_cast<double>(p));
  }
  const std::size_t n = macs.size();
  const double dense_ratio = macs[n - 1][0] / macs[n - 2][0];
  const double window_ratio = macs[n - 1][1] / macs[n - 2][1];
  double lo = 1e300, hi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    lo = std::min(lo, macs[i][2] / tokens[i]);
    hi = std::max(hi, macs[i][2] / tokens[i]);
  }
  const double spread = hi / lo - 1.0;
  c.expect(std::abs(dense_ratio - 4.0) <= 0.2, "dense ratio " + fmt(dense_ratio));
  c.expect(std::abs(window_ratio - 2.0) <= 0.1, "windowed ratio " + fmt(window_ratio));
  c.expect(spread <= 0.10, "group MACs/P spread " + fmt(spread));
  c.notes << "P " << tokens[n - 2] << "->" << tokens[n - 1] << ": dense x" << fmt(dense_ratio)
          << ", window x" << fmt(window_ratio) << "; channel-group MACs/P spread " << fmt(100 * spread, 3)
          << "% over P=49..3136";
  return c.done();
}

// ---------------------------------------------------------------------------
// 5. Shape ladder

Outcome shape_ladder() {
  Checks c;
  for (std::size_t size : {64, 96, 128, 224}) {
    depth::NetConfig cfg;
    cfg.height = cfg.width = size;
    depth::DepthNet<float> net(cfg, 5);
    Rng rng(size);
    tensor::NoGradGuard ng;
    auto v = tensor::constant(tensor::uniform<float>({cfg.time_bins, size, size}, -1, 1, rng));
    auto im = tensor::constant(tensor::uniform<float>({3, size, size}, 0, 1, rng));
    const auto f = net.encode(net.preprocess(v, im));
    for (std::size_t i = 0; i < 5; ++i) {
      const std::size_t s = size >> (i + 1);
      c.expect(f.scales[i].shape() == Shape{cfg.encoder_channels[i], s, s},
               std::to_string(size) + " encoder " + std::to_string(i));
    }
    std::array<Var<float>, 5> trace;
    const auto out = net.decode(f, {true, true, true, true, true}, &trace);
    for (std::size_t i = 0; i < 5; ++i) {
      const std::size_t s = size >> (4 - i);
      c.expect(trace[i].shape() == Shape{cfg.decoder_channels[i], s, s},
               std::to_string(size) + " decoder " + std::to_string(i));
    }
    c.expect(out.shape() == Shape{1, size, size}, std::to_string(size) + " output");
  }
  c.notes << "inputs 64/96/128/224: encoder at 1/2..1/32, decoder back to 1/1";
  return c.done();
}

// ---------------------------------------------------------------------------
// 6. Training sanity

template <typename T>
double abs_rel_after(const depth::NetConfig& cfg, const std::vector<depth::Sample<T>>& train,
                     const std::vector<depth::Sample<T>>& val, const depth::FitOptions& opts) {
  depth::DepthNet<T> net(cfg, 1);
  const auto records = depth::fit<T>(net, train, val, opts);
  return records.back().metrics.abs_rel;
}

Outcome training() {
  Checks c;
  // (a) overfit one batch of 8 at 64x64, 500 steps, LR 2e-4.
  {
    synth::DatasetOptions o;
    o.seed = 7;
    o.height = o.width = 64;
    o.scenes = 1;
    o.frames_per_scene = 9;
    const auto batch = synth::make_samples<float>(synth::generate_dataset(o), 5);
    depth::DepthNet<float> net(depth::NetConfig::tiny(64, 64), 1);
    tensor::AdamWOptions adam;
    adam.lr = 2e-4;
    depth::Trainer<float> trainer(net, adam);
    double first = 0, last = 0;
    for (int i = 0; i < 500; ++i) {
      last = trainer.step(batch).loss;
      if (i == 0) first = last;
    }
    const double ratio = last / first;
    c.expect(ratio < 0.05, "overfit final/initial " + fmt(ratio));
    c.notes << "overfit 8x64x64 500 steps: loss " << fmt(first) << " -> " << fmt(last) << " ("
            << fmt(100 * ratio, 3) << "%)";
  }

  // (b) 10 epochs on 200 frames from 40 short scenes; the last 8 scenes are
  // held out whole, so validation never sees a training scene.
  auto split = [](const synth::Dataset& d) {
    std::vector<std::size_t> tr, va;
    for (std::size_t k : d.sample_frames())
      (k / d.options.frames_per_scene >= d.options.scenes - 8 ? va : tr).push_back(k);
    return std::pair{synth::make_samples<float>(d, 5, tr), synth::make_samples<float>(d, 5, va)};
  };
  synth::DatasetOptions o;
  o.seed = 1;
  o.height = o.width = 64;
  o.scenes = 40;
  o.frames_per_scene = 6;  // 5 sample frames each -> 200
  depth::FitOptions fit;
  fit.epochs = 10;
  fit.batch_size = 8;
  fit.lr = 2e-3;
  fit.milestones = {6, 8};
  const auto cfg = depth::NetConfig::tiny(64, 64);
  {
    const auto [train, val] = split(synth::generate_dataset(o));
    const double rel = abs_rel_after<float>(cfg, train, val, fit);
    c.expect(rel < 0.10, "validation Abs Rel " + fmt(rel));
    c.notes << "; 10 epochs on " << train.size() + val.size() << " frames: val Abs Rel " << fmt(rel);
  }
  {
    o.blank_fraction = 0.5;
    const auto [train, val] = split(synth::generate_dataset(o));
    double rel[3];
    const depth::Modality modes[3] = {depth::Modality::kFusion, depth::Modality::kEventsOnly,
                                      depth::Modality::kImageOnly};
    for (int i = 0; i < 3; ++i) {
      auto m = cfg;
      m.modality = modes[i];
      rel[i] = abs_rel_after<float>(m, train, val, fit);
    }
    c.expect(rel[0] < rel[1] && rel[0] < rel[2],
             "fusion " + fmt(rel[0]) + " vs events " + fmt(rel[1]) + " / image " + fmt(rel[2]));
    c.notes << "; half-blank split Abs Rel fusion " << fmt(rel[0]) << ", events " << fmt(rel[1])
            << ", image " << fmt(rel[2]);
  }
  return c.done();
}

// ---------------------------------------------------------------------------
// 7. Metrics

struct Frame {
  std::vector<double> pred, gt;
};

Frame random_frame(Rng& rng, double max_depth) {
  std::uniform_real_distribution<double> d(0.05, max_depth), u(0, 1);
  Frame f;
  const std::size_t n = 20 + rng() % 200;
  for (std::size_t i = 0; i < n; ++i) {
    double g = d(rng);
    const double r = u(rng);
    if (r < 0.05) g = 0.0;
    else if (r < 0.08) g = 120.0;
    else if (r < 0.10) g = NAN;
    f.gt.push_back(g);
    f.pred.push_back(d(rng) * (u(rng) < 0.05 ? 0.001 : 1.0));
  }
  f.gt[0] = 5.0;  // at least one pixel inside every cutoff
  return f;
}

Outcome metric_checks() {
  Checks c;
  Rng rng(707);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto f = random_frame(rng, 85.0);
    double err[3] = {}, rel = 0, lsq = 0;
    std::size_t cnt[3] = {}, n = 0, within[3] = {};
    for (std::size_t i = 0; i < f.gt.size(); ++i) {
      const double g = f.gt[i], p = f.pred[i];
      if (!(g > 0 && g <= 80)) continue;
      ++n;
      for (int k = 0; k < 3; ++k)
        if (g <= 10.0 * (k + 1)) {
          err[k] += std::abs(p - g);
          ++cnt[k];
        }
      rel += std::abs(p - g) / g;
      const double pc = std::min(80.0, std::max(0.01, p));
      lsq += (std::log(pc) - std::log(g)) * (std::log(pc) - std::log(g));
      const double ratio = std::max(pc / g, g / pc);
      for (int k = 0; k < 3; ++k) within[k] += ratio < std::pow(1.25, k + 1);
    }
    const std::span<const double> p(f.pred), g(f.gt);
    for (int k = 0; k < 3; ++k) {
      worst = std::max(worst, std::abs(metrics::avg_error(p, g, 10.0 * (k + 1)) - err[k] / cnt[k]));
      worst = std::max(worst, std::abs(metrics::delta_acc(p, g, k + 1) - double(within[k]) / n));
    }
    worst = std::max(worst, std::abs(metrics::abs_rel(p, g) - rel / n));
    worst = std::max(worst, std::abs(metrics::rmse_log(p, g) - std::sqrt(lsq / n)));
  }
  c.expect(worst < 1e-6, "oracle deviation " + fmt(worst));
  c.notes << "200 frames vs brute force: max |diff| = " << fmt(worst);

  // Depths stay within [0.05, 25] m so a scale in [0.5, 3] never reaches the clamp.
  std::uniform_real_distribution<double> scale(0.5, 3.0);
  bool monotone = true;
  double drift = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto f = random_frame(rng, 25.0);
    for (auto& x : f.pred) x = std::max(x, 0.05);
    const std::span<const double> p(f.pred), g(f.gt);
    const auto a = metrics::evaluate(p, g);
    monotone = monotone && a.delta[0] <= a.delta[1] && a.delta[1] <= a.delta[2];
    const double s = scale(rng);
    for (auto& x : f.pred) x *= s;
    for (auto& x : f.gt)
      if (std::isfinite(x) && x > 0 && x <= 80) x *= s;
    const auto b = metrics::evaluate(std::span<const double>(f.pred), std::span<const double>(f.gt));
    drift = std::max({drift, std::abs(a.abs_rel - b.abs_rel), std::abs(a.rmse_log - b.rmse_log)});
    for (int k = 0; k < 3; ++k) drift = std::max(drift, std::abs(a.delta[k] - b.delta[k]));
  }
  c.expect(monotone, "delta monotonicity");
  c.expect(drift < 1e-6, "scale invariance drift " + fmt(drift));
  c.notes << "; 1000 frames: delta monotone, joint-scale drift " << fmt(drift);
  return c.done();
}

// ---------------------------------------------------------------------------
// 8. Loss

Outcome loss_checks() {
  Checks c;
  auto frame = [](std::vector<float> v) {
    return depth::DepthFrame::from_ground_truth(Tensor<float>({1, 2, 2}, std::move(v)));
  };
  auto pred = [](std::vector<float> v) {
    return depth::DepthFrame::from_prediction(Tensor<float>({1, 2, 2}, std::move(v)));
  };
  auto var_loss = [](const depth::DepthFrame& p, const depth::DepthFrame& g) {
    return depth::depth_loss(tensor::constant(p.depth.cast<double>()), g, {}).value()[0];
  };
  const auto gt = frame({3, 4, 0, 6});
  const std::pair<std::vector<float>, double> cases[] = {
      {{3, 4, 1, 6}, 0.0}, {{2, 3, 9, 5}, 2.0}, {{5, 6, 9, 8}, 6.0}};
  for (const auto& [p, want] : cases) {
    const double a = depth::depth_loss(pred(p), gt, {}), b = var_loss(pred(p), gt);
    c.expect(a == want && b == want, "example " + fmt(want) + " gave " + fmt(a) + "/" + fmt(b));
  }
  c.notes << "examples 0 / 2.0 / 6.0 exact";

  Rng rng(808);
  bool invariant = true;
  for (int trial = 0; trial < 200; ++trial) {
    auto d = tensor::uniform<float>({1, 6, 6}, 1, 30, rng);
    auto p = tensor::uniform<float>({1, 6, 6}, 1, 30, rng);
    auto g = depth::DepthFrame::from_ground_truth(d);
    for (std::size_t i = trial % 3; i < 36; i += 3) g.valid[i] = 0;
    const double base = var_loss(depth::DepthFrame::from_prediction(p), g);
    for (std::size_t i = trial % 3; i < 36; i += 3) {
      g.depth[i] = trial % 2 ? NAN : 1e6f;
      p[i] = -1e4f;
    }
    invariant = invariant && var_loss(depth::DepthFrame::from_prediction(p), g) == base;
  }
  c.expect(invariant, "masked-pixel invariance");
  c.notes << "; masked pixels never change the loss (200 trials)";
  return c.done();
}

// ---------------------------------------------------------------------------
// 9. Serialization

Outcome serialization() {
  Checks c;
  const auto dir = std::filesystem::temp_directory_path() / "unict_acceptance";
  std::filesystem::create_directories(dir);

  depth::NetConfig cfg = depth::NetConfig::tiny(64, 64);
  depth::DepthNet<float> a(cfg, 3), b(cfg, 4);
  Rng rng(909);
  auto s = testing::random_sample<float>(cfg, rng);
  a.save(dir / "net.ckpt");
  b.load(dir / "net.ckpt");
  const auto pa = a.infer(s.voxel, s.image), pb = b.infer(s.voxel, s.image);
  c.expect(pa.depth == pb.depth, "checkpoint inference differs");
  c.expect(a.parameters().snapshot() == b.parameters().snapshot(), "checkpoint parameters differ");
  c.notes << "checkpoint save/load/infer bit-identical";

  std::vector<events::EventRecord> ev(1000000);
  std::uniform_real_distribution<double> dt(0.0, 1e-4);
  double t = 0;
  for (auto& e : ev) {
    t += dt(rng);
    e = {t, static_cast<std::uint16_t>(rng() % 65535), static_cast<std::uint16_t>(rng() % 65535),
         rng() % 2 ? std::int8_t(1) : std::int8_t(-1)};
  }
  events::write_events_binary(dir / "ev.bin", ev, 65535, 65535);
  const auto back = events::read_events(dir / "ev.bin");
  c.expect(back == ev, "event binary round trip");
  c.notes << "; 1e6 events round-trip exactly";
  std::filesystem::remove_all(dir);
  return c.done();
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const Criterion all[] = {
      {1, "voxelization", 5, voxelization},
      {2, "attention equivalence", 30, attention_equivalence},
      {3, "finite-difference gradients", 300, gradients},
      {4, "attention complexity", 60, complexity},
      {5, "shape ladder", 60, shape_ladder},
      {6, "training sanity", 1800, training},
      {7, "metrics", 60, metric_checks},
      {8, "loss", 60, loss_checks},
      {9, "serialization", 120, serialization},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& cr : all) {
    if (!wanted.empty() && !wanted.count(cr.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > cr.budget_s) {
      o.pass = false;
      o.detail += "; over the " + fmt(cr.budget_s) + " s budget";
    }
    failed += !o.pass;
    std::printf("criterion %d %-28s %s  [%.1f s] %s\n", cr.id, cr.name, o.pass ? "PASS" : "FAIL",
                secs, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
