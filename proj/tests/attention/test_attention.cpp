#include "doctest.h"

#include <cmath>
#include <numeric>

#include "support/test_util.hpp"
#include "unict/attention/attention.hpp"
#include "unict/attention/blocks.hpp"

using namespace unict;
using attention::BlockConfig;
using attention::BlockVariant;
using attention::BranchKind;
using tensor::Shape;
using tensor::Tensor;
using tensor::Var;
using testing::random_tensor;

namespace {

// Brute-force multi-head attention. Tokens attend only to tokens with the
// same window id.
Tensor<double> attention_oracle(const Tensor<double>& q, const Tensor<double>& k,
                                const Tensor<double>& v, std::size_t heads,
                                const std::vector<std::size_t>& window_of) {
  const std::size_t p = q.dim(0), c = q.dim(1), ch = c / heads;
  Tensor<double> out({p, c});
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < p; ++i) {
      std::vector<double> s(p, -INFINITY);
      double mx = -INFINITY;
      for (std::size_t j = 0; j < p; ++j) {
        if (window_of[i] != window_of[j]) continue;
        double d = 0;
        for (std::size_t e = 0; e < ch; ++e) d += q.at(i, h * ch + e) * k.at(j, h * ch + e);
        s[j] = d / std::sqrt(double(ch));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (std::size_t j = 0; j < p; ++j) {
        s[j] = window_of[i] == window_of[j] ? std::exp(s[j] - mx) : 0.0;
        z += s[j];
      }
      for (std::size_t e = 0; e < ch; ++e) {
        double acc = 0;
        for (std::size_t j = 0; j < p; ++j) acc += s[j] / z * v.at(j, h * ch + e);
        out.at(i, h * ch + e) = acc;
      }
    }
  }
  return out;
}

// Channel-group attention with the C_g x C_g matrix built explicitly.
Tensor<double> group_oracle(const Tensor<double>& q, const Tensor<double>& k,
                            const Tensor<double>& v, std::size_t groups) {
  const std::size_t p = q.dim(0), c = q.dim(1), cg = c / groups;
  Tensor<double> out({p, c});
  for (std::size_t g = 0; g < groups; ++g) {
    std::vector<std::vector<double>> a(cg, std::vector<double>(cg));
    for (std::size_t r = 0; r < cg; ++r) {
      double mx = -INFINITY;
      for (std::size_t s = 0; s < cg; ++s) {
        double d = 0;
        for (std::size_t t = 0; t < p; ++t) d += q.at(t, g * cg + r) * k.at(t, g * cg + s);
        a[r][s] = d / std::sqrt(double(cg));
        mx = std::max(mx, a[r][s]);
      }
      double z = 0;
      for (auto& x : a[r]) z += (x = std::exp(x - mx));
      for (auto& x : a[r]) x /= z;
    }
    // (A V_g^T)^T
    for (std::size_t t = 0; t < p; ++t) {
      for (std::size_t r = 0; r < cg; ++r) {
        double acc = 0;
        for (std::size_t s = 0; s < cg; ++s) acc += a[r][s] * v.at(t, g * cg + s);
        out.at(t, g * cg + r) = acc;
      }
    }
  }
  return out;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void check_rows_sum_to_one(const Tensor<double>& probs) {
  const std::size_t cols = probs.shape().back();
  for (std::size_t r = 0; r < probs.size() / cols; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < cols; ++j) s += probs[r * cols + j];
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

BlockConfig small_config() {
  BlockConfig cfg;
  cfg.channels = 8;
  cfg.heads = 2;
  cfg.window_h = 2;
  cfg.window_w = 2;
  cfg.group_channels = 4;
  return cfg;
}

}  // namespace

TEST_CASE("single-window attention matches the dense oracle") {
  tensor::Rng rng(1);
  const std::size_t gh = 4, gw = 4, c = 8;
  auto q = random_tensor({gh * gw, c}, rng), k = random_tensor({gh * gw, c}, rng),
       v = random_tensor({gh * gw, c}, rng);
  auto r = attention::window_attention(tensor::constant(q), tensor::constant(k),
                                       tensor::constant(v), gh, gw, gh, gw, 2);
  std::vector<std::size_t> one(gh * gw, 0);
  CHECK(max_abs_diff(r.out.value(), attention_oracle(q, k, v, 2, one)) < 1e-6);
  auto d = attention::dense_attention(tensor::constant(q), tensor::constant(k),
                                      tensor::constant(v), 2);
  CHECK(max_abs_diff(d.out.value(), r.out.value()) == 0.0);
  check_rows_sum_to_one(r.probs.value());
}

TEST_CASE("windowed attention matches a masked oracle") {
  tensor::Rng rng(2);
  const std::size_t gh = 4, gw = 6, c = 6;
  auto q = random_tensor({gh * gw, c}, rng), k = random_tensor({gh * gw, c}, rng),
       v = random_tensor({gh * gw, c}, rng);
  std::vector<std::size_t> window_of(gh * gw);
  for (std::size_t y = 0; y < gh; ++y)
    for (std::size_t x = 0; x < gw; ++x) window_of[y * gw + x] = (y / 2) * 3 + x / 2;
  auto r = attention::window_attention(tensor::constant(q), tensor::constant(k),
                                       tensor::constant(v), gh, gw, 2, 2, 3);
  CHECK(max_abs_diff(r.out.value(), attention_oracle(q, k, v, 3, window_of)) < 1e-12);
  CHECK(r.probs.shape() == Shape{6 * 3, 4, 4});
  check_rows_sum_to_one(r.probs.value());
}

TEST_CASE("two-token worked example") {
  auto q = tensor::constant(Tensor<double>({2, 1}, std::vector<double>{1, 0}));
  auto v = tensor::constant(Tensor<double>({2, 1}, std::vector<double>{1, 2}));
  auto r = attention::window_attention(q, q, v, 1, 2, 1, 2, 1);
  const double e = std::exp(1.0);
  CHECK(r.out.value()[0] == doctest::Approx(e / (e + 1) + 2 / (e + 1)).epsilon(1e-12));
  CHECK(r.out.value()[0] == doctest::Approx(1.2689).epsilon(1e-4));
}

TEST_CASE("identical value rows pass through attention unchanged") {
  tensor::Rng rng(3);
  auto q = random_tensor({16, 4}, rng), k = random_tensor({16, 4}, rng);
  Tensor<double> v({16, 4});
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t c = 0; c < 4; ++c) v.at(i, c) = 0.25 * double(c) - 1.0;
  auto r = attention::window_attention(tensor::constant(q), tensor::constant(k),
                                       tensor::constant(v), 4, 4, 2, 2, 2);
  CHECK(max_abs_diff(r.out.value(), v) < 1e-12);
}

TEST_CASE("attention rejects indivisible geometry") {
  auto x = tensor::constant(Tensor<double>({12, 4}));
  CHECK_THROWS_AS(attention::window_attention(x, x, x, 3, 4, 2, 2, 2), attention::ConfigError);
  CHECK_THROWS_AS(attention::window_attention(x, x, x, 3, 4, 3, 4, 3), attention::ConfigError);
  CHECK_THROWS_AS(attention::group_channel_attention(x, x, x, 3), attention::ConfigError);
  BlockConfig cfg = small_config();
  CHECK_THROWS_AS(cfg.validate(3, 4), attention::ConfigError);
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), attention::ConfigError);
}

TEST_CASE("group attention with one channel per group is identity on V") {
  tensor::Rng rng(4);
  auto q = random_tensor({10, 6}, rng, -3, 3), k = random_tensor({10, 6}, rng, -3, 3),
       v = random_tensor({10, 6}, rng);
  auto r = attention::group_channel_attention(tensor::constant(q), tensor::constant(k),
                                              tensor::constant(v), 6);
  CHECK(r.out.value() == v);
  auto zero = attention::group_channel_attention(tensor::constant(q), tensor::constant(k),
                                                 tensor::constant(Tensor<double>({10, 6})), 3);
  CHECK(zero.out.value() == Tensor<double>({10, 6}));
}

TEST_CASE("group attention matches the explicit-matrix oracle") {
  tensor::Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    auto q = random_tensor({3, 4}, rng), k = random_tensor({3, 4}, rng),
         v = random_tensor({3, 4}, rng);
    auto r = attention::group_channel_attention(tensor::constant(q), tensor::constant(k),
                                                tensor::constant(v), 2);
    CHECK(max_abs_diff(r.out.value(), group_oracle(q, k, v, 2)) < 1e-6);
    CHECK(r.probs.shape() == Shape{2, 2, 2});
    check_rows_sum_to_one(r.probs.value());
  }
}

TEST_CASE("attention kernels pass finite differences") {
  tensor::Rng rng(6);
  std::vector<Tensor<double>> in = {random_tensor({16, 8}, rng), random_tensor({16, 8}, rng),
                                    random_tensor({16, 8}, rng)};
  auto win = testing::check_fn(
      [](const std::vector<Var<double>>& x) {
        return attention::window_attention(x[0], x[1], x[2], 4, 4, 2, 2, 2).out;
      },
      in);
  CHECK_MESSAGE(win.passed(), win.summary());
  auto grp = testing::check_fn(
      [](const std::vector<Var<double>>& x) {
        return attention::group_channel_attention(x[0], x[1], x[2], 2).out;
      },
      in);
  CHECK_MESSAGE(grp.passed(), grp.summary());
}

TEST_CASE("gate with zero parameters outputs one half everywhere") {
  tensor::ParameterStore<double> store;
  tensor::Rng rng(7);
  attention::DetailGate<double> gate(store, "gate", 96, rng);
  for (auto& p : store.entries()) p.var.mutable_value().fill(0.0);
  auto x = tensor::constant(random_tensor({96, 28, 28}, rng));
  auto m = gate(x);
  CHECK(m.shape() == Shape{1, 28, 28});
  for (double v : m.value().values()) CHECK(v == 0.5);
}

TEST_CASE("gate matches a hand evaluation on a 2x2x2 input") {
  tensor::ParameterStore<double> store;
  tensor::Rng rng(8);
  attention::DetailGate<double> gate(store, "gate", 2, rng);
  for (auto& p : store.entries()) p.var.mutable_value().fill(0.0);
  // 7x7 spatial conv: centre taps only.
  auto& ws = gate.spatial.weight.mutable_value();  // [1 x 2 x 7 x 7]
  ws[0 * 49 + 3 * 7 + 3] = 0.5;
  ws[1 * 49 + 3 * 7 + 3] = -1.0;
  gate.spatial.bias.mutable_value()[0] = 0.1;
  // 2 -> 1 reduce conv: centre taps plus channel 0's right neighbour.
  auto& wr = gate.reduce.weight.mutable_value();  // [1 x 2 x 3 x 3]
  wr[0 * 9 + 4] = 0.3;
  wr[0 * 9 + 5] = 0.25;
  wr[1 * 9 + 4] = -0.7;
  gate.reduce.bias.mutable_value()[0] = 0.05;
  gate.project.weight.mutable_value()[4] = 2.0;
  gate.project.bias.mutable_value()[0] = -0.2;

  const double x0[2][2] = {{1, 2}, {3, 4}}, x1[2][2] = {{-1, 0}, {2, -2}};
  Tensor<double> x({2, 2, 2});
  for (int y = 0; y < 2; ++y)
    for (int c = 0; c < 2; ++c) {
      x.at(0, y, c) = x0[y][c];
      x.at(1, y, c) = x1[y][c];
    }
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  double g0[2][2], g1[2][2];
  for (int y = 0; y < 2; ++y)
    for (int c = 0; c < 2; ++c) {
      const double s = sig(0.5 * std::max(x0[y][c], x1[y][c]) -
                           1.0 * 0.5 * (x0[y][c] + x1[y][c]) + 0.1);
      g0[y][c] = x0[y][c] * s;
      g1[y][c] = x1[y][c] * s;
    }
  auto m = gate(tensor::constant(x));
  for (int y = 0; y < 2; ++y)
    for (int c = 0; c < 2; ++c) {
      const double right = c + 1 < 2 ? g0[y][c + 1] : 0.0;
      const double h = std::max(0.0, 0.3 * g0[y][c] + 0.25 * right - 0.7 * g1[y][c] + 0.05);
      CHECK(m.value().at(0, y, c) == doctest::Approx(sig(2.0 * h - 0.2)).epsilon(1e-12));
    }
}

TEST_CASE("gate map stays inside (0, 1)") {
  tensor::ParameterStore<double> store;
  tensor::Rng rng(9);
  attention::DetailGate<double> gate(store, "gate", 8, rng);
  auto m = gate(tensor::constant(random_tensor({8, 6, 6}, rng, -5, 5)));
  for (double v : m.value().values()) CHECK((v > 0.0 && v < 1.0));
}

TEST_CASE("forced gates reduce the dual block to its ungated parts") {
  tensor::ParameterStore<double> store;
  tensor::Rng rng(10);
  attention::DualAttentionBlock<double> block(store, "blk", small_config(), BlockVariant{}, rng);
  attention::TokenMap<double> x{tensor::constant(random_tensor({16, 8}, rng)), 4, 4};

  auto y = block.norm1()(x.tokens);
  auto expect = x.tokens + block.merge()(tensor::concat<double>(
                               {block.first()(y, 4, 4), block.second()(y, 4, 4)}, 1));
  auto ones = block.attention_unit(x, Tensor<double>({1, 4, 4}, 1.0));
  CHECK(ones.value() == expect.value());

  auto zeros = block.attention_unit(x, Tensor<double>({1, 4, 4}, 0.0));
  const auto& bias = block.merge().bias.value();
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t c = 0; c < 8; ++c)
      CHECK(zeros.value().at(i, c) == x.tokens.value().at(i, c) + bias[c]);
  CHECK_THROWS_AS(block.attention_unit(x, Tensor<double>({1, 2, 8}, 1.0)), tensor::ShapeError);
}

TEST_CASE("dual block gradients pass finite differences at 4x4 tokens") {
  using B = BranchKind;
  const BlockVariant variants[] = {{B::kConvolution, B::kConvolution, false, false},
                                   {B::kDense, B::kDense, false, false},
                                   {}};
  for (int row = 0; row < 3; ++row) {
    CAPTURE(row);
    tensor::ParameterStore<double> store;
    tensor::Rng rng(11 + row);
    attention::DualAttentionBlock<double> block(store, "blk", small_config(), variants[row],
                                                rng);
    auto x = tensor::parameter(random_tensor({16, 8}, rng));
    auto w = random_tensor({16, 8}, rng);
    auto params = store.entries();
    params.push_back({"input", x});
    auto report = tensor::grad_check(
        [&] { return testing::weighted_sum(block({x, 4, 4}).tokens, w); }, params);
    CHECK_MESSAGE(report.passed(), report.summary());
  }
}

TEST_CASE("hybrid stage gradients pass finite differences at 8x8 tokens") {
  tensor::ParameterStore<double> store;
  tensor::Rng rng(20);
  attention::HybridStage<double> stage(store, "stage", 3, 16, 16, small_config(), BlockVariant{},
                                       rng);
  auto x = tensor::constant(random_tensor({3, 16, 16}, rng));
  auto w = random_tensor({8, 8, 8}, rng);
  tensor::GradCheckOptions opts;
  opts.max_entries_per_param = 24;
  auto report = tensor::grad_check([&] { return testing::weighted_sum(stage(x), w); },
                                   store.entries(), opts);
  CHECK_MESSAGE(report.passed(), report.summary());
}

TEST_CASE("permuting windows permutes the windowed branch output") {
  tensor::ParameterStore<double> store;
  tensor::Rng rng(21);
  BlockConfig cfg = small_config();
  attention::Branch<double> branch(store, "window", BranchKind::kWindow, cfg, rng);
  const std::size_t gh = 4, gw = 6, pw = 4, nw = 6;
  auto index = tensor::window_partition_index(gh, gw, 2, 2);
  const std::vector<std::size_t> sigma = {3, 0, 5, 1, 4, 2};
  std::vector<std::size_t> source(gh * gw);  // row of x feeding row t of x'
  for (std::size_t w = 0; w < nw; ++w)
    for (std::size_t i = 0; i < pw; ++i) source[index[w * pw + i]] = index[sigma[w] * pw + i];

  auto x = tensor::constant(random_tensor({gh * gw, 8}, rng));
  auto out = branch(x, gh, gw);
  auto out_perm = branch(tensor::gather_rows(x, source), gh, gw);
  CHECK(max_abs_diff(out_perm.value(), tensor::gather_rows(out, source).value()) < 1e-12);
}

TEST_CASE("analytic MAC counts") {
  BlockConfig cfg;
  cfg.channels = 64;
  cfg.group_channels = 16;
  std::uint64_t prev_dense = 0, prev_window = 0, prev_channel = 0;
  for (std::size_t p : {49, 98, 196, 392, 784, 1568, 3136}) {
    auto n = attention::count_attention_macs(cfg, p);
    if (prev_dense) {
      CHECK(double(n.get("dense")) / double(prev_dense) == doctest::Approx(4.0).epsilon(1e-12));
      CHECK(double(n.get("window")) / double(prev_window) == doctest::Approx(2.0).epsilon(1e-12));
      CHECK(double(n.get("channel")) / double(prev_channel) == doctest::Approx(2.0).epsilon(1e-12));
    }
    prev_dense = n.get("dense");
    prev_window = n.get("window");
    prev_channel = n.get("channel");
  }
  auto one = attention::count_attention_macs(cfg, 49);
  CHECK(one.get("window") == one.get("dense"));
  CHECK_THROWS_AS(attention::count_attention_macs(cfg, 50), attention::ConfigError);
}

TEST_CASE("measured MACs agree with the analytic counts") {
  BlockConfig cfg = small_config();
  const std::size_t gh = 4, gw = 4, p = gh * gw;
  auto x = tensor::constant(Tensor<double>({p, cfg.channels}, 0.1));
  auto analytic = attention::count_attention_macs(cfg, p);
  auto measure = [&](auto&& fn) {
    tensor::OpCounter c;
    tensor::CountScope scope(c);
    fn();
    return c.get("bmm");
  };
  CHECK(measure([&] { attention::dense_attention(x, x, x, cfg.heads); }) ==
        analytic.get("dense"));
  CHECK(measure([&] {
          attention::window_attention(x, x, x, gh, gw, cfg.window_h, cfg.window_w, cfg.heads);
        }) == analytic.get("window"));
  CHECK(measure([&] { attention::group_channel_attention(x, x, x, cfg.groups()); }) ==
        analytic.get("channel"));
}

TEST_CASE("patch embedding geometry") {
  tensor::ParameterStore<double> store;
  tensor::Rng rng(30);
  attention::PatchEmbed<double> embed(store, "embed", 64, 128, 28, 28, rng);
  auto t = embed(tensor::constant(random_tensor({64, 56, 56}, rng)));
  CHECK(t.count() == 784);
  CHECK(t.tokens.shape() == Shape{784, 128});
  CHECK_THROWS_AS(embed(tensor::constant(Tensor<double>({64, 55, 56}))), tensor::ShapeError);
  CHECK_THROWS_AS(embed(tensor::constant(Tensor<double>({64, 28, 28}))), tensor::ShapeError);

  tensor::ParameterStore<double> zs;
  attention::PatchEmbed<double> zero(zs, "embed", 2, 3, 2, 2, rng);
  zero.position().mutable_value().fill(0.0);
  zs.at("embed.proj.bias").mutable_value() = Tensor<double>({3}, std::vector<double>{1, -2, 3});
  auto z = zero(tensor::constant(Tensor<double>({2, 4, 4})));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(z.tokens.value().at(i, 0) == 1.0);
    CHECK(z.tokens.value().at(i, 1) == -2.0);
    CHECK(z.tokens.value().at(i, 2) == 3.0);
  }
}

TEST_CASE("stage construction is deterministic and variants build") {
  BlockConfig cfg;
  cfg.channels = 32;
  cfg.heads = 2;
  cfg.group_channels = 16;
  auto build = [&](BlockVariant variant, std::uint64_t seed) {
    tensor::ParameterStore<float> store;
    tensor::Rng rng(seed);
    attention::HybridStage<float> stage(store, "s", 16, 56, 56, cfg, variant, rng);
    Tensor<float> x({16, 56, 56});
    tensor::Rng xr(99);
    x = random_tensor<float>({16, 56, 56}, xr);
    tensor::NoGradGuard ng;
    auto y = stage(tensor::constant(x));
    return std::make_pair(store.scalar_count(), y.value());
  };
  auto [n1, y1] = build({}, 1);
  auto [n2, y2] = build({}, 1);
  CHECK(n1 == n2);
  CHECK(y1 == y2);
  CHECK(y1.shape() == Shape{32, 28, 28});
  auto [n3, y3] = build({BranchKind::kWindow, BranchKind::kWindow, false, false}, 1);
  CHECK(y3.shape() == Shape{32, 28, 28});
  CHECK(n3 < n1);
  for (auto k : {BranchKind::kConvolution, BranchKind::kDense, BranchKind::kWindow,
                 BranchKind::kChannelGroup})
    CHECK(attention::branch_kind_from_string(attention::to_string(k)) == k);
  CHECK_THROWS_AS(attention::branch_kind_from_string("swin"), attention::ConfigError);
}

TEST_CASE("window fitting picks the largest divisor") {
  CHECK(attention::fit_window(7, 28) == 7);
  CHECK(attention::fit_window(7, 8) == 4);
  CHECK(attention::fit_window(7, 3) == 3);
  CHECK(attention::fit_window(7, 2) == 2);
  CHECK(attention::fit_window(7, 11) == 1);
}
