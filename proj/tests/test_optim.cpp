#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "energy.hpp"
#include "error.hpp"
#include "network.hpp"
#include "optim.hpp"

using namespace flowstyle;

TEST_CASE("adam: zero gradient from a fresh state leaves the image unchanged") {
  ImageTensor img = noise_image(4, 4, 3, 1);
  const ImageTensor before = img;
  AdamState st(img.size(), {});
  adam_step(st, img, ImageTensor(4, 4, 3));
  CHECK(img == before);
  CHECK(st.step == 1);
}

TEST_CASE("adam: first step with unit gradient moves by the step size") {
  ImageTensor img(2, 2, 1, 0.5f);
  AdamState st(img.size(), {});
  adam_step(st, img, ImageTensor(2, 2, 1, 1.0f));
  for (float v : img.data()) CHECK(std::abs((v - 0.5f) + 0.02f) < 1e-6f * 0.02f + 1e-7f);
}

TEST_CASE("adam: closed form over several steps and determinism") {
  ImageTensor a(1, 1, 1, 0.0f), b(1, 1, 1, 0.0f);
  AdamState sa(1, {}), sb(1, {});
  double m = 0, v = 0, x = 0;
  const float grads[] = {1.0f, -0.5f, 2.0f, 0.25f};
  for (int t = 1; t <= 4; ++t) {
    const double g = grads[t - 1];
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.02 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    adam_step(sa, a, ImageTensor(1, 1, 1, grads[t - 1]));
    adam_step(sb, b, ImageTensor(1, 1, 1, grads[t - 1]));
    CHECK(a.data()[0] == doctest::Approx(x).epsilon(1e-5));
  }
  CHECK(a == b);
  for (float vv : sa.v) CHECK(vv >= 0.0f);
}

TEST_CASE("adam: shape mismatch") {
  ImageTensor img(2, 2, 1);
  AdamState st(img.size(), {});
  try {
    adam_step(st, img, ImageTensor(2, 3, 1));
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("style transfer: zero iterations returns init") {
  const Network net = tiny_vgg();
  const ImageTensor init = noise_image(8, 8, 3, 2), content = noise_image(8, 8, 3, 3);
  const auto w = LossWeights::defaults();
  TransferOptions opt;
  opt.iterations = 0;
  const auto r = style_transfer(net, init, content, compute_style_targets(net, content, w), w, opt);
  CHECK(r.image == init);
  CHECK(r.report.iterations == 0);
  CHECK(r.report.trace.empty());
}

TEST_CASE("style transfer: content-only at the target is a fixed point") {
  const Network net = tiny_vgg();
  const ImageTensor img = noise_image(8, 8, 3, 4);
  LossWeights w = LossWeights::zero();
  w.content["conv4_2"] = 1.0f;
  TransferOptions opt;
  opt.iterations = 20;
  const auto r = style_transfer(net, img, img, {}, w, opt);
  CHECK(r.start.total == 0.0);
  for (std::size_t k = 0; k < img.size(); ++k) CHECK(std::abs(r.image.data()[k] - img.data()[k]) <= 1e-6f);
}

TEST_CASE("style transfer: all-zero weights is the identity") {
  const Network net = tiny_vgg();
  const ImageTensor init = noise_image(8, 8, 3, 5);
  TransferOptions opt;
  opt.iterations = 15;
  const auto r = style_transfer(net, init, noise_image(8, 8, 3, 6), {}, LossWeights::zero(), opt);
  CHECK(r.image == init);
  CHECK(r.report.trace.size() == 15);
}

TEST_CASE("style transfer: trace length, decrease, determinism") {
  const Network net = tiny_vgg();
  const ImageTensor content = noise_image(16, 16, 3, 7), style = noise_image(16, 16, 3, 8);
  const auto w = LossWeights::defaults();
  const auto st = compute_style_targets(net, style, w);
  TransferOptions opt;
  opt.iterations = 60;
  const auto a = style_transfer(net, content, content, st, w, opt);
  const auto b = style_transfer(net, content, content, st, w, opt);
  CHECK(a.report.trace.size() == 60);
  CHECK(a.report.iterations == 60);
  CHECK(a.end.total < a.start.total);
  CHECK(a.image == b.image);
  CHECK(a.report.termination == Termination::IterationBudget);
}

TEST_CASE("style transfer: keep_best never returns a worse iterate than the start") {
  const Network net = tiny_vgg();
  const ImageTensor content = noise_image(16, 16, 3, 9), style = noise_image(16, 16, 3, 10);
  const auto w = LossWeights::defaults();
  TransferOptions opt;
  opt.iterations = 30;
  opt.keep_best = true;
  opt.adam.step_size = 0.5f;
  const auto r = style_transfer(net, content, content, compute_style_targets(net, style, w), w, opt);
  CHECK(r.end.total <= r.start.total);
}

TEST_CASE("style transfer: relative improvement stop") {
  const Network net = tiny_vgg();
  const ImageTensor img = noise_image(8, 8, 3, 11);
  LossWeights w = LossWeights::zero();
  w.tv = 1e-3f;
  TransferOptions opt;
  opt.iterations = 400;
  opt.min_relative_improvement = 0.95;
  const auto r = style_transfer(net, img, img, {}, w, opt);
  CHECK(r.report.termination == Termination::RelativeImprovement);
  CHECK(r.report.iterations < 400);
  CHECK(r.report.trace.size() == static_cast<std::size_t>(r.report.iterations));
}

TEST_CASE("style transfer: auto balance lifts small terms at the first iterate") {
  const Network net = tiny_vgg();
  const ImageTensor content = noise_image(16, 16, 3, 12), style = noise_image(16, 16, 3, 13);
  LossWeights w = LossWeights::defaults();
  w.tv = 1e-8f;
  TransferOptions opt;
  opt.iterations = 1;
  opt.auto_balance = true;
  const auto r = style_transfer(net, noise_image(16, 16, 3, 14), content, compute_style_targets(net, style, w), w, opt);
  CHECK(r.weights.tv > w.tv);
  const auto& b = r.start;
  CHECK(b.tv / b.total >= kMinTermShare);
  CHECK(b.style / b.total >= kMinTermShare);
  CHECK(b.content / b.total >= kMinTermShare);
}

TEST_CASE("style transfer: non-finite energy stops with the last finite iterate") {
  const Network net = tiny_vgg();
  const ImageTensor content = noise_image(8, 8, 3, 15);
  LossWeights w = LossWeights::zero();
  w.style["conv5_1"] = 1.0f;
  TransferOptions opt;
  opt.iterations = 50;
  opt.adam.step_size = 1e18f;
  const auto r = style_transfer(net, content, content, compute_style_targets(net, noise_image(8, 8, 3, 16), w), w, opt);
  CHECK(r.report.termination == Termination::NonFiniteEnergy);
  CHECK(r.image.all_finite());
  CHECK(std::isfinite(r.end.total));
}
