// Acceptance suite. Prints one PASS/FAIL line per criterion; exits nonzero
// when any selected criterion fails. `--only N` runs a single criterion.

#include <chrono>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "color.hpp"
#include "energy.hpp"
#include "error.hpp"
#include "flow.hpp"
#include "image_io.hpp"
#include "job.hpp"
#include "json.hpp"
#include "pipeline.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace flowstyle;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const Network& net() {
  static const Network n = tiny_vgg();
  return n;
}

// 1 -------------------------------------------------------------------------
Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  LossWeights w = LossWeights::defaults();
  for (auto& [name, v] : w.style) v = 50.0f;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::uint64_t s = 1000 + 3 * trial;
    const ImageTensor content = noise_image(16, 16, 3, s);
    const ImageTensor style = noise_image(16, 16, 3, s + 1);
    const ImageTensor x = noise_image(16, 16, 3, s + 2);
    const auto r = total_energy(net(), x, compute_content_targets(net(), content, w),
                                compute_style_targets(net(), style, w), {}, w);
    if (!(r.breakdown.content > 0 && r.breakdown.style > 0 && r.breakdown.tv > 0)) {
      return {false, fmt("trial %d has an inactive term", trial)};
    }
    const auto targets = testing::double_targets(net(), content, style, w);
    const auto numeric = testing::fd_gradient(
        [&](const std::vector<double>& v) { return testing::energy_oracle(net(), v, 16, 16, 3, targets, w); },
        testing::to_double(x.data()), 1e-3);
    worst = std::max(worst, testing::relative_l2(r.grad.data(), numeric));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-3 && secs < 120.0, fmt("max relative L2 %.3g over 20 trials (< 1e-3), %.1f s (< 120 s)", worst, secs)};
}

// 2 -------------------------------------------------------------------------
Outcome gram_oracle() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> side(1, 8), maps(1, 16);
  std::normal_distribution<float> value(0.0f, 1.0f);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Activation<float> a(side(rng), side(rng), maps(rng));
    for (float& v : a.data) v = value(rng);
    const auto g = gram(a);
    const auto ref = testing::brute_gram(testing::to_double(a.data), static_cast<int>(a.pixels()), a.maps);
    for (std::size_t k = 0; k < ref.size(); ++k) {
      const double err = std::abs(g.values[k] - ref[k]) / std::max(std::abs(ref[k]), 1e-12);
      if (std::abs(ref[k]) > 1e-6) worst = std::max(worst, err);
      else worst = std::max(worst, std::abs(g.values[k] - ref[k]));
    }
  }
  return {worst < 1e-5, fmt("max relative error %.3g over 100 blocks, I <= 64, J <= 16 (< 1e-5)", worst)};
}

// 3 -------------------------------------------------------------------------
Outcome coherence_improvement() {
  const auto t0 = std::chrono::steady_clock::now();
  const testing::Texture tex(128, 77);
  const auto frames = testing::translating_clip(tex, 8, 64, 64, 1);
  SequenceFlows flows;
  for (int t = 1; t < 8; ++t) flows.back.push_back(FlowField::constant(64, 64, -1.0f, 0.0f));
  const ImageTensor style = testing::stripe_style(64, 5);
  auto run = [&](Strategy s) {
    RenderOptions o;
    o.strategy = s;
    o.transfer.iterations = 300;
    return render_sequence(net(), frames, style, o, flows).coherence;
  };
  const double ind = run(Strategy::Independent);
  const double prev = run(Strategy::PreviousFrame);
  const double flow = run(Strategy::FlowInit);
  const double secs = seconds_since(t0);
  return {flow <= 0.5 * ind && secs < 900.0,
          fmt("FlowInit %.4g vs 0.5 x Independent %.4g; PreviousFrame %.4g; %.0f s (< 900 s)", flow, 0.5 * ind, prev,
              secs)};
}

// 4 -------------------------------------------------------------------------
Outcome warp_exactness() {
  const ImageTensor img = noise_image(12, 15, 3, 4);
  int mismatches = 0;
  for (int du = -4; du <= 4; ++du) {
    for (int dv = -4; dv <= 4; ++dv) {
      const auto r = warp(img, FlowField::constant(12, 15, static_cast<float>(du), static_cast<float>(dv)));
      for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 15; ++x) {
          const int sy = y + dv, sx = x + du;
          const bool inside = sy >= 0 && sy < 12 && sx >= 0 && sx < 15;
          if (r.valid.at(y, x) != inside) ++mismatches;
          if (!inside) continue;
          for (int c = 0; c < 3; ++c) {
            const float got = r.image.at(y, x, c), want = img.at(sy, sx, c);
            if (std::memcmp(&got, &want, sizeof(float)) != 0) ++mismatches;
          }
        }
      }
    }
  }
  const auto id = warp(img, FlowField(12, 15));
  const bool identity = id.image == img && id.valid.count() == 12 * 15;
  return {mismatches == 0 && identity, fmt("%d mismatches over 81 integer flows; zero flow identity %s", mismatches,
                                           identity ? "yes" : "no")};
}

// 5 -------------------------------------------------------------------------
Outcome flow_estimation() {
  const testing::Texture tex(64, 5);
  const ImageTensor a = tex.crop(64, 64, 0, 0);
  const ImageTensor b = tex.crop(64, 64, 0, -1);
  const auto f = estimate_flow(a, b);
  const int border = 4;
  double epe = 0.0;
  int n = 0;
  for (int y = border; y < 64 - border; ++y) {
    for (int x = border; x < 64 - border; ++x) {
      epe += std::hypot(f.u(y, x) - 1.0f, f.v(y, x));
      ++n;
    }
  }
  epe /= n;
  const auto s = estimate_flow(a, a);
  double mag = 0.0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) mag += std::hypot(s.u(y, x), s.v(y, x));
  mag /= 64.0 * 64.0;
  return {epe < 0.5 && mag < 0.05, fmt("1 px shift interior EPE %.4f (< 0.5); static mean magnitude %.4g (< 0.05)", epe, mag)};
}

// 6 -------------------------------------------------------------------------
Outcome flo_round_trip() {
  testing::TempDir dir;
  FlowField f(17, 23);
  std::mt19937_64 rng(6);
  std::normal_distribution<float> d(0.0f, 5.0f);
  for (float& v : f.uv) v = d(rng);
  write_flo_file(f, dir / "a.flo");
  const FlowField back = read_flo_file(dir / "a.flo");
  const bool exact = back.width == f.width && back.height == f.height &&
                     std::memcmp(back.uv.data(), f.uv.data(), f.uv.size() * sizeof(float)) == 0;
  auto bytes = write_flo(f);
  bytes[1] = 'X';
  bool rejected = false;
  try {
    read_flo(bytes);
  } catch (const Error& e) {
    rejected = e.code() == ErrorCode::BadMagic;
  }
  return {exact && rejected, fmt("round trip bit-exact %s; wrong magic rejected %s", exact ? "yes" : "no",
                                 rejected ? "yes" : "no")};
}

// 7 -------------------------------------------------------------------------
Outcome scene_cuts() {
  testing::TempDir dir;
  const testing::Texture tex(64, 7);
  std::filesystem::create_directories(dir / "frames");
  for (int t = 0; t < 6; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05d.png", t);
    write_image(quantize_8bit(tex.crop(16, 16, 0, -t)), dir / "frames" / name);
  }
  write_image(testing::stripe_style(16, 1), dir / "style.png");
  const auto job = parse_render_job(R"({"style":"style.png","frames_dir":"frames","out_dir":"out",
      "strategy":"flow-init","iterations":5,"scene_cuts":[3]})",
                                    dir.path());
  render_video(job);
  std::ifstream in(dir / "out" / "trace.json");
  const auto trace = nlohmann::json::parse(in);
  std::string content_at;
  for (const auto& fr : trace["frames"]) {
    if (fr["init"] == "content") content_at += (content_at.empty() ? "" : ",") + std::to_string(fr["index"].get<int>());
  }
  return {content_at == "0,3" && trace["frames"].size() == 6, "content initialization at {" + content_at + "}"};
}

// 8 -------------------------------------------------------------------------
Outcome optimization_sanity() {
  LossWeights w = LossWeights::zero();
  w.style = LossWeights::defaults().style;
  const ImageTensor style = testing::stripe_style(32, 8);
  const ImageTensor init = noise_image(32, 32, 3, 8);
  TransferOptions o;
  o.iterations = 300;
  const auto r = style_transfer(net(), init, init, compute_style_targets(net(), style, w), w, o);
  const auto& tr = r.report.trace;
  int violations = 0;
  for (std::size_t k = 0; k + 50 < tr.size() && k + 50 < 300; ++k) {
    if (tr[k + 50].total > tr[k].total) ++violations;
  }
  const double ratio = r.end.style / r.start.style;
  return {ratio < 0.05 && violations == 0 && tr.size() == 300,
          fmt("final/initial style loss %.4f (< 0.05); %d windowed increases", ratio, violations)};
}

// 9 -------------------------------------------------------------------------
Outcome histogram_matching() {
  const ImageTensor src = testing::Texture(64, 9).crop(48, 48, 0, 0);
  const ImageTensor ref = quantize_8bit(testing::stripe_style(40, 9));
  const auto matched = match_histogram(src, ref);
  double emd = 0.0;
  for (int c = 0; c < 3; ++c) emd = std::max(emd, testing::emd_oracle(matched, ref, c));

  const ImageTensor self = quantize_8bit(noise_image(32, 32, 3, 9));
  const auto same = match_histogram(self, self);
  double moved = 0.0;
  for (std::size_t k = 0; k < self.size(); ++k) moved = std::max<double>(moved, std::abs(same.data()[k] - self.data()[k]));

  const ImageTensor style = testing::stripe_style(32, 9);
  std::vector<ImageTensor> frames{ImageTensor(32, 32, 3, 0.0f), ImageTensor(32, 32, 3, 0.0f)};
  {
    const ImageTensor t = testing::Texture(64, 10).crop(32, 32, 0, 0);
    for (std::size_t k = 0; k < t.size(); ++k) {
      frames[0].data()[k] = 0.3f * t.data()[k];
      frames[1].data()[k] = 0.6f + 0.4f * t.data()[k];
    }
  }
  const auto movie = build_style_movie(style, frames);
  const double dark = mean_value(to_luminance(movie[0]));
  const double bright = mean_value(to_luminance(movie[1]));
  return {emd < 2.0 / 256 && moved < 1.0 / 256 && dark < bright,
          fmt("EMD %.5f (< %.5f); self-match max move %.5f (< %.5f); style luminance dark %.3f < bright %.3f", emd,
              2.0 / 256, moved, 1.0 / 256, dark, bright)};
}

// 10 ------------------------------------------------------------------------
Outcome joint_backtracking() {
  const testing::Texture tex(64, 42);
  const auto frames = testing::translating_clip(tex, 4, 32, 32, 1);
  SequenceFlows flows;
  for (int t = 1; t < 4; ++t) flows.back.push_back(FlowField::constant(32, 32, -1.0f, 0.0f));
  for (int t = 0; t + 1 < 4; ++t) flows.next.push_back(FlowField::constant(32, 32, 1.0f, 0.0f));
  const ImageTensor style = testing::stripe_style(32, 10);

  RenderOptions first;
  first.strategy = Strategy::FlowInit;
  first.transfer.iterations = 50;
  const auto init = render_sequence(net(), frames, style, first, flows).frames;

  RenderOptions o = first;
  o.strategy = Strategy::JointBacktrack;
  o.weights.temporal = 1.0f;
  const auto st = sequence_style_targets(net(), frames, style, o);
  const auto after = joint_backtrack_pass(net(), frames, init, flows, st, o, 1);
  const double e0 = sequence_energy(net(), frames, init, flows, st, o.weights, o.scene_cuts);
  const double e1 = sequence_energy(net(), frames, after, flows, st, o.weights, o.scene_cuts);
  const double c0 = coherence_metric(init, flows.back);
  const double c1 = coherence_metric(after, flows.back);
  return {e1 <= e0 && c1 <= c0, fmt("sequence energy %.6g -> %.6g; coherence %.5g -> %.5g", e0, e1, c0, c1)};
}

// 11 ------------------------------------------------------------------------
Outcome weight_balancing() {
  const ImageTensor content = testing::Texture(64, 11).crop(32, 32, 0, 0);
  const ImageTensor style = testing::stripe_style(32, 11);
  const ImageTensor x = noise_image(32, 32, 3, 11);
  LossWeights w = LossWeights::defaults();
  w.tv = 1e-7f;
  w.temporal = 1e-6f;
  const TemporalTerm term{content, Mask(32, 32, true)};
  const std::span<const TemporalTerm> temporal(&term, 1);
  const auto ct = compute_content_targets(net(), content, w);
  const auto st = compute_style_targets(net(), style, w);
  const auto before = total_energy(net(), x, ct, st, temporal, w, false).breakdown;
  const auto balanced = auto_balance_weights(before, w);
  const auto after = total_energy(net(), x, ct, st, temporal, balanced, false).breakdown;
  const double parts[] = {after.content, after.style, after.tv, after.temporal};
  double smallest = 1.0;
  for (double p : parts) smallest = std::min(smallest, p / after.total);
  const double before_min = std::min({before.content, before.style, before.tv, before.temporal}) / before.total;
  return {smallest >= kMinTermShare, fmt("smallest term share %.4f before, %.4f after (>= 0.05)", before_min, smallest)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowstyle acceptance suite"};
  int only = 0;
  app.add_option("--only", only, "run a single criterion")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all{
      {1, "gradient correctness", gradient_check},
      {2, "gram oracle equivalence", gram_oracle},
      {3, "coherence improvement", coherence_improvement},
      {4, "warp exactness", warp_exactness},
      {5, "flow estimation", flow_estimation},
      {6, ".flo round trip", flo_round_trip},
      {7, "scene-cut contract", scene_cuts},
      {8, "optimization sanity", optimization_sanity},
      {9, "histogram matching", histogram_matching},
      {10, "joint back-tracking", joint_backtracking},
      {11, "weight balancing", weight_balancing},
  };
  int failed = 0;
  for (const auto& c : all) {
    if (only != 0 && c.id != only) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %2d %s  %s: %s\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
