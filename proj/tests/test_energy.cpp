#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <random>

#include "energy.hpp"
#include "error.hpp"
#include "network.hpp"
#include "support/oracles.hpp"

using namespace flowstyle;

namespace {

Activation<float> random_block(int h, int w, int maps, std::uint64_t seed) {
  Activation<float> a(h, w, maps);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  for (float& v : a.data) v = d(rng);
  return a;
}

LossWeights single(const char* content, float lc, const char* style, float ls) {
  LossWeights w = LossWeights::zero();
  if (content) w.content[content] = lc;
  if (style) w.style[style] = ls;
  return w;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("gram matches the brute-force double loop") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int i = 1 + static_cast<int>(rng() % 64);
    const int j = 1 + static_cast<int>(rng() % 16);
    const auto a = random_block(1, i, j, rng());
    const auto g = gram(a, "x");
    const auto ref = testing::brute_gram(testing::to_double(a.data), i, j);
    REQUIRE(g.size == j);
    for (std::size_t k = 0; k < ref.size(); ++k) CHECK(g.values[k] == doctest::Approx(ref[k]).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("gram is symmetric and pixel-permutation invariant") {
  auto a = random_block(4, 5, 6, 8);
  const auto g = gram(a);
  for (int j = 0; j < 6; ++j)
    for (int k = 0; k < 6; ++k) CHECK(g.at(j, k) == g.at(k, j));
  std::vector<std::size_t> perm(a.pixels());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  Activation<float> b = a;
  for (int j = 0; j < a.maps; ++j)
    for (std::size_t i = 0; i < a.pixels(); ++i) b.at(i, j) = a.at(perm[i], j);
  const auto gb = gram(b);
  for (std::size_t k = 0; k < g.values.size(); ++k) CHECK(gb.values[k] == doctest::Approx(g.values[k]).epsilon(1e-6));
}

TEST_CASE("content loss: hand example, zero at target, linear in weight") {
  FeatureMaps f, t;
  f["c"] = Activation<float>(1, 1, 1, 3.0f);
  t["c"] = Activation<float>(1, 1, 1, 1.0f);
  auto r = content_loss(f, t, single("c", 1.0f, nullptr, 0));
  CHECK(r.value == doctest::Approx(4.0));
  CHECK(r.grads.at("c").data[0] == doctest::Approx(4.0));
  auto r2 = content_loss(f, t, single("c", 2.0f, nullptr, 0));
  CHECK(r2.value == doctest::Approx(8.0));
  CHECK(r2.grads.at("c").data[0] == doctest::Approx(8.0));
  auto zero = content_loss(t, t, single("c", 1.0f, nullptr, 0));
  CHECK(zero.value == 0.0);
  CHECK(zero.grads.at("c").data[0] == 0.0f);
  FeatureMaps wrong;
  wrong["c"] = Activation<float>(1, 2, 1);
  CHECK(code_of([&] { content_loss(wrong, t, single("c", 1.0f, nullptr, 0)); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("style loss: hand example and permutation invariance") {
  FeatureMaps f;
  f["s"] = Activation<float>(1, 1, 1, 2.0f);
  StyleTargets t;
  t["s"] = GramMatrix{"s", 1, {1.0f}};
  const auto r = style_loss(f, t, single(nullptr, 0, "s", 1.0f));
  CHECK(r.value == doctest::Approx(9.0));
  CHECK(r.grads.at("s").data[0] == doctest::Approx(24.0));
  CHECK(style_loss(f, t, single(nullptr, 0, "s", 3.0f)).value == doctest::Approx(27.0));

  FeatureMaps g;
  g["s"] = random_block(3, 4, 5, 12);
  StyleTargets tg;
  tg["s"] = gram(random_block(3, 4, 5, 13), "s");
  const double before = style_loss(g, tg, single(nullptr, 0, "s", 1.0f)).value;
  auto& a = g["s"];
  for (int j = 0; j < a.maps; ++j) std::reverse(a.map(j).begin(), a.map(j).end());
  CHECK(style_loss(g, tg, single(nullptr, 0, "s", 1.0f)).value == doctest::Approx(before).epsilon(1e-6));
  tg["s"] = gram(a, "s");
  CHECK(style_loss(g, tg, single(nullptr, 0, "s", 1.0f)).value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("style loss gradient matches finite differences at feature level") {
  FeatureMaps f;
  f["s"] = random_block(3, 3, 4, 31);
  StyleTargets t;
  t["s"] = gram(random_block(3, 3, 4, 32), "s");
  const auto w = single(nullptr, 0, "s", 0.7f);
  const auto r = style_loss(f, t, w);
  const auto& tgt = t.at("s");
  auto objective = [&](const std::vector<double>& x) {
    const auto g = testing::brute_gram(x, 9, 4);
    double s = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) s += (g[k] - tgt.values[k]) * (g[k] - tgt.values[k]);
    return 0.7 * s / 16.0;
  };
  const auto numeric = testing::fd_gradient(objective, testing::to_double(f.at("s").data));
  CHECK(testing::relative_l2(r.grads.at("s").data, numeric) < 1e-4);
}

TEST_CASE("tv loss") {
  CHECK(tv_loss(ImageTensor(3, 3, 3, 0.4f), 1.0f).value == 0.0);
  const ImageTensor step(2, 2, 1, std::vector<float>{0, 1, 0, 1});
  CHECK(tv_loss(step, 1.0f).value == doctest::Approx(2.0));
  CHECK(code_of([] { tv_loss(ImageTensor(1, 5, 1), 1.0f); }) == ErrorCode::ImageTooSmall);

  const ImageTensor img = noise_image(5, 4, 2, 77);
  const auto r = tv_loss(img, 0.3f);
  auto objective = [&](const std::vector<double>& x) {
    double s = 0.0;
    auto px = [&](int y, int xx, int c) { return x[(static_cast<std::size_t>(y) * 4 + xx) * 2 + c]; };
    for (int y = 0; y < 5; ++y)
      for (int xx = 0; xx < 4; ++xx)
        for (int c = 0; c < 2; ++c) {
          if (y + 1 < 5) s += std::pow(px(y + 1, xx, c) - px(y, xx, c), 2);
          if (xx + 1 < 4) s += std::pow(px(y, xx + 1, c) - px(y, xx, c), 2);
        }
    return 0.3 * s;
  };
  const auto numeric = testing::fd_gradient(objective, testing::to_double(img.data()));
  CHECK(testing::relative_l2(r.grad.data(), numeric) < 1e-4);
}

TEST_CASE("tv loss is zero iff each channel is constant") {
  ImageTensor img(4, 4, 3);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      img.at(y, x, 0) = 0.1f;
      img.at(y, x, 1) = 0.5f;
      img.at(y, x, 2) = 0.9f;
    }
  CHECK(tv_loss(img, 1.0f).value == 0.0);
  img.at(2, 1, 1) = 0.6f;
  CHECK(tv_loss(img, 1.0f).value > 0.0);
}

TEST_CASE("temporal loss") {
  LossWeights w = LossWeights::zero();
  w.temporal = 1.0f;
  const ImageTensor x(1, 2, 1, std::vector<float>{4.0f, 0.0f});
  const ImageTensor y(1, 2, 1, std::vector<float>{1.0f, 7.0f});
  Mask m(1, 2, false);
  m.valid[0] = 1;
  const auto sq = temporal_loss(x, y, m, w);
  CHECK(sq.value == doctest::Approx(9.0));
  CHECK(sq.grad.data()[0] == doctest::Approx(6.0));
  CHECK(sq.grad.data()[1] == 0.0f);

  CHECK(temporal_loss(x, x, Mask(1, 2, true), w).value == 0.0);
  w.temporal_kind = TemporalKind::Charbonnier;
  CHECK(temporal_loss(x, x, Mask(1, 2, true), w).value == 0.0);
  const auto ch = temporal_loss(x, y, m, w);
  CHECK(std::abs(ch.value - 3.0) < 1e-3);
  CHECK(ch.grad.data()[1] == 0.0f);

  CHECK(code_of([&] { temporal_loss(x, y, Mask(1, 2, false), w); }) == ErrorCode::EmptyMask);
  CHECK(code_of([&] { temporal_loss(x, ImageTensor(2, 1, 1), m, w); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("temporal loss gradient matches finite differences for both kinds") {
  const ImageTensor x = noise_image(4, 4, 3, 1);
  const ImageTensor y = noise_image(4, 4, 3, 2);
  Mask m(4, 4, true);
  for (int k = 0; k < 16; k += 3) m.valid[k] = 0;
  for (auto kind : {TemporalKind::Squared, TemporalKind::Charbonnier}) {
    LossWeights w = LossWeights::zero();
    w.temporal = 2.0f;
    w.temporal_kind = kind;
    w.charbonnier_eps = 0.05f;
    const auto r = temporal_loss(x, y, m, w);
    auto objective = [&](const std::vector<double>& v) {
      double s = 0.0;
      for (std::size_t p = 0; p < 16; ++p) {
        if (!m.valid[p]) continue;
        for (int c = 0; c < 3; ++c) {
          const double d = v[p * 3 + c] - y.data()[p * 3 + c];
          s += kind == TemporalKind::Squared ? d * d : std::sqrt(d * d + 0.05 * 0.05) - 0.05;
        }
      }
      return 2.0 * s / static_cast<double>(m.count());
    };
    const auto numeric = testing::fd_gradient(objective, testing::to_double(x.data()), 1e-4);
    CHECK(testing::relative_l2(r.grad.data(), numeric) < 1e-3);
    CHECK(r.value == doctest::Approx(objective(testing::to_double(x.data()))).epsilon(1e-5));
  }
}

TEST_CASE("total energy: zero weights, breakdown sum, and oracle value") {
  const Network net = tiny_vgg();
  const ImageTensor content = noise_image(16, 16, 3, 1);
  const ImageTensor style = noise_image(16, 16, 3, 2);
  const ImageTensor x = noise_image(16, 16, 3, 3);

  const auto zw = LossWeights::zero();
  const auto zero = total_energy(net, x, compute_content_targets(net, content, zw), compute_style_targets(net, style, zw),
                                 {}, zw);
  CHECK(zero.breakdown.total == 0.0);
  for (float v : zero.grad.data()) CHECK(v == 0.0f);

  LossWeights w = LossWeights::defaults();
  const auto ct = compute_content_targets(net, content, w);
  const auto st = compute_style_targets(net, style, w);
  const auto r = total_energy(net, x, ct, st, {}, w);
  const auto& b = r.breakdown;
  CHECK(b.total == b.content + b.style + b.tv + b.temporal);
  CHECK(b.content > 0.0);
  CHECK(b.style > 0.0);
  CHECK(b.tv > 0.0);
  const auto targets = testing::double_targets(net, content, style, w);
  const double oracle = testing::energy_oracle(net, testing::to_double(x.data()), 16, 16, 3, targets, w);
  CHECK(b.total == doctest::Approx(oracle).epsilon(1e-4));

  const auto no_grad = total_energy(net, x, ct, st, {}, w, false);
  CHECK(no_grad.grad.empty());
  CHECK(no_grad.breakdown.total == b.total);
}

TEST_CASE("total energy gradient matches finite differences including a temporal term") {
  const Network net = tiny_vgg();
  const ImageTensor content = noise_image(8, 8, 3, 5);
  const ImageTensor style = noise_image(8, 8, 3, 6);
  const ImageTensor x = noise_image(8, 8, 3, 7);
  LossWeights w = LossWeights::defaults();
  for (auto& [name, v] : w.style) v = 50.0f;
  w.temporal = 0.5f;
  std::vector<TemporalTerm> terms{{noise_image(8, 8, 3, 8), Mask(8, 8, true)}};
  terms[0].mask.valid[3] = 0;
  const auto ct = compute_content_targets(net, content, w);
  const auto st = compute_style_targets(net, style, w);
  const auto r = total_energy(net, x, ct, st, terms, w);
  CHECK(r.breakdown.temporal > 0.0);
  const auto targets = testing::double_targets(net, content, style, w);
  auto objective = [&](const std::vector<double>& v) {
    double e = testing::energy_oracle(net, v, 8, 8, 3, targets, w);
    double s = 0.0;
    for (std::size_t p = 0; p < 64; ++p) {
      if (!terms[0].mask.valid[p]) continue;
      for (int c = 0; c < 3; ++c) s += std::pow(v[p * 3 + c] - terms[0].warped.data()[p * 3 + c], 2);
    }
    return e + 0.5 * s / 63.0;
  };
  const auto numeric = testing::fd_gradient(objective, testing::to_double(x.data()));
  CHECK(testing::relative_l2(r.grad.data(), numeric) < 1e-3);
}

TEST_CASE("auto balance") {
  LossWeights w = LossWeights::defaults();
  EnergyBreakdown b;

  SUBCASE("style at exactly 5% is unchanged") {
    b.content = 95;
    b.style = 5;
    b.total = 100;
    const auto out = auto_balance_weights(b, w);
    CHECK(out.content == w.content);
    CHECK(out.style == w.style);
  }
  SUBCASE("single active term is unchanged") {
    b.content = 3;
    b.total = 3;
    const auto out = auto_balance_weights(b, w);
    CHECK(out.content == w.content);
    CHECK(out.style == w.style);
    CHECK(out.tv == w.tv);
  }
  SUBCASE("content 99 style 1 lifts style to at least 5%") {
    b.content = 99;
    b.style = 1;
    b.total = 100;
    const auto out = auto_balance_weights(b, w);
    const double k = out.style.at("conv1_1") / w.style.at("conv1_1");
    CHECK(k > 1.0);
    for (const auto& [name, v] : out.style) CHECK(v / w.style.at(name) == doctest::Approx(k));
    const double content = b.content * out.content.at("conv4_2") / w.content.at("conv4_2");
    const double style = b.style * k;
    CHECK(style / (content + style) >= 0.05);
  }
  SUBCASE("three active terms with two small ones") {
    b.content = 1000;
    b.style = 1;
    b.tv = 0.01;
    b.total = b.content + b.style + b.tv;
    const auto out = auto_balance_weights(b, w);
    const double c = b.content * out.content.at("conv4_2") / w.content.at("conv4_2");
    const double s = b.style * out.style.at("conv2_1") / w.style.at("conv2_1");
    const double t = b.tv * out.tv / w.tv;
    CHECK(s / (c + s + t) >= 0.05);
    CHECK(t / (c + s + t) >= 0.05);
    CHECK(c / (c + s + t) >= 0.05);
  }
  SUBCASE("no active term") {
    CHECK(code_of([&] { auto_balance_weights(b, w); }) == ErrorCode::AllTermsZero);
  }
}

TEST_CASE("loss weights validation") {
  LossWeights w = LossWeights::defaults();
  w.tv = -1.0f;
  CHECK(code_of([&] { w.validate(); }) == ErrorCode::InvalidArgument);
  w = LossWeights::defaults();
  w.style["conv1_1"] = std::nanf("");
  CHECK(code_of([&] { w.validate(); }) == ErrorCode::InvalidArgument);
  CHECK(LossWeights::defaults().feature_layers().size() == 6);
}
