#include <algorithm>
#include <cmath>
#include <random>

#include "eanet/datasets.hpp"

namespace eanet {

namespace {

struct Rect {
  double x0, y0, x1, y1;
  float rgb[3];
  float tir;
};

bool covers(const BoundingBox& b, int px, int py) {
  const double cx = px + 0.5, cy = py + 0.5;
  return cx >= b.x && cx < b.right() && cy >= b.y && cy < b.bottom();
}

float to_pixel(double v) { return static_cast<float>(std::clamp(std::round(v), 0.0, 255.0)); }

}  // namespace

Sequence synth_sequence(const SynthSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int W = spec.width, H = spec.height;
  const ImageSize bounds{W, H};

  // Static scene: gradient plus a handful of coloured slabs with cooler TIR.
  std::vector<Rect> slabs;
  for (int i = 0; i < 12; ++i) {
    Rect r{};
    const double w = 8 + uni(rng) * W * 0.25, h = 8 + uni(rng) * H * 0.25;
    r.x0 = uni(rng) * (W - w);
    r.y0 = uni(rng) * (H - h);
    r.x1 = r.x0 + w;
    r.y1 = r.y0 + h;
    for (auto& c : r.rgb) c = static_cast<float>(40 + uni(rng) * 150);
    r.tir = static_cast<float>(40 + uni(rng) * 60);
    slabs.push_back(r);
  }
  Image base_rgb(W, H, 3), base_tir(W, H, 1);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      float rgb[3] = {static_cast<float>(60 + 80.0 * x / W), static_cast<float>(90 + 60.0 * y / H), 120.0f};
      float tir = static_cast<float>(55 + 25.0 * std::sin(6.28318 * x / W) * std::cos(6.28318 * y / H));
      for (const auto& r : slabs) {
        if (x + 0.5 >= r.x0 && x + 0.5 < r.x1 && y + 0.5 >= r.y0 && y + 0.5 < r.y1) {
          std::copy(std::begin(r.rgb), std::end(r.rgb), rgb);
          tir = r.tir;
        }
      }
      for (int c = 0; c < 3; ++c) base_rgb.at(x, y, c) = rgb[c];
      base_tir.at(x, y, 0) = tir;
    }
  }

  Sequence seq;
  seq.name = spec.name;
  const double cx0 = spec.start.center_x(), cy0 = spec.start.center_y();
  for (int t = 0; t < spec.frames; ++t) {
    const double s = std::pow(spec.scale_rate, t);
    const BoundingBox gt =
        clip_to_image(BoundingBox::from_center(cx0 + spec.dx * t, cy0 + spec.dy * t, spec.start.w * s, spec.start.h * s),
                      bounds);
    const bool occluded = spec.occlusion_start >= 0 && t >= spec.occlusion_start &&
                          t < spec.occlusion_start + spec.occlusion_length;
    const bool dim = spec.illumination_start >= 0 && t >= spec.illumination_start;
    const bool crossover = spec.crossover_start >= 0 && t >= spec.crossover_start;
    BoundingBox occluder{gt.x - 4, gt.y - 4, gt.w + 8, gt.h + 8};

    Image rgb = base_rgb, tir1 = base_tir;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        if (occluded && covers(occluder, x, y)) {
          for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = 128.0f;
          tir1.at(x, y, 0) = 90.0f;
        } else if (covers(gt, x, y)) {
          // 4x4 checkerboard in target coordinates.
          const int u = static_cast<int>(4.0 * (x + 0.5 - gt.x) / gt.w);
          const int v = static_cast<int>(4.0 * (y + 0.5 - gt.y) / gt.h);
          const bool odd = ((u + v) & 1) != 0;
          rgb.at(x, y, 0) = odd ? 250.0f : 230.0f;
          rgb.at(x, y, 1) = odd ? 220.0f : 60.0f;
          rgb.at(x, y, 2) = odd ? 60.0f : 40.0f;
          if (!crossover) tir1.at(x, y, 0) = odd ? 235.0f : 210.0f;
        }
      }
    }
    const double gain = dim ? spec.illumination_factor : 1.0;
    for (auto& p : rgb.pixels) p = to_pixel(p * gain + spec.noise * noise(rng));
    for (auto& p : tir1.pixels) p = to_pixel(p + spec.noise * noise(rng));

    FramePair fp;
    fp.rgb = std::move(rgb);
    fp.tir = replicate_to_rgb(tir1);
    fp.index = static_cast<std::size_t>(t);
    seq.frames.push_back(std::move(fp));
    seq.ground_truth.emplace_back(gt);
  }

  const double speed = std::hypot(spec.dx, spec.dy);
  if (speed >= 5.0) seq.set(EvalAttribute::FM);
  if (spec.scale_rate != 1.0) seq.set(EvalAttribute::SV);
  if (spec.occlusion_length > 0 && spec.occlusion_start >= 0) {
    seq.set(EvalAttribute::PO);
    if (spec.occlusion_length >= 3) seq.set(EvalAttribute::HO);
  } else {
    seq.set(EvalAttribute::NO);
  }
  if (spec.illumination_start >= 0) seq.set(EvalAttribute::LI);
  if (spec.crossover_start >= 0) seq.set(EvalAttribute::TC);
  return seq;
}

std::vector<SynthSpec> default_synthetic_suite(int frames) {
  std::vector<SynthSpec> suite;
  auto add = [&](const std::string& name, BoundingBox start, double dx, double dy) -> SynthSpec& {
    SynthSpec s;
    s.name = name;
    s.frames = frames;
    s.start = start;
    s.dx = dx;
    s.dy = dy;
    suite.push_back(s);
    return suite.back();
  };
  add("synth_clean", {30, 40, 28, 28}, 2, 1);
  add("synth_fm", {10, 30, 28, 28}, 5, 1);
  add("synth_iv", {100, 40, 28, 28}, -2, 1).illumination_start = frames / 4;
  add("synth_occ", {30, 50, 28, 28}, 2, 0);
  suite.back().occlusion_start = frames / 2;
  suite.back().occlusion_length = 3;
  add("synth_sv", {50, 40, 26, 26}, 1, 0.5).scale_rate = 1.02;
  add("synth_tc", {40, 30, 28, 28}, 2, 1).crossover_start = frames / 4;
  return suite;
}

}  // namespace eanet
