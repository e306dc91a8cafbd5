#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gaiforge/contracts.hpp"
#include "gaiforge/parallel.hpp"
#include "gaiforge/rng.hpp"
#include "gaiforge/sample.hpp"
#include "gaiforge/tensor.hpp"

namespace gaiforge {

enum class ArtifactKind { PeriodicPattern, SeamBlend, ChannelShift, LocalWarp };

inline std::string artifact_kind_name(ArtifactKind k) {
  switch (k) {
    case ArtifactKind::PeriodicPattern: return "periodic-pattern";
    case ArtifactKind::SeamBlend: return "seam-blend";
    case ArtifactKind::ChannelShift: return "channel-shift";
    case ArtifactKind::LocalWarp: return "local-warp";
  }
  return "?";
}

inline ArtifactKind artifact_kind_from_name(const std::string& s) {
  if (s == "periodic-pattern") return ArtifactKind::PeriodicPattern;
  if (s == "seam-blend") return ArtifactKind::SeamBlend;
  if (s == "channel-shift") return ArtifactKind::ChannelShift;
  if (s == "local-warp") return ArtifactKind::LocalWarp;
  throw ContractViolation("unknown artifact kind: " + s);
}

/// One synthetic forgery family. Parameter layout by kind:
///   periodic-pattern: {fx_cycles, fy_cycles, amplitude}
///   seam-blend:       {axis (0 vertical seam / 1 horizontal), strength, shift_px}
///   channel-shift:    {channel, dx_px, dy_px, strength}
///   local-warp:       {amplitude_px, radius_fraction}
/// The leading strength/amplitude-like parameter at index amplitude_index()
/// scales the artifact; zero reproduces the base image.
struct ForgeryFamilySpec {
  int id = 0;
  ArtifactKind kind = ArtifactKind::PeriodicPattern;
  std::vector<double> params;
  int group = 0;

  std::size_t amplitude_index() const {
    switch (kind) {
      case ArtifactKind::PeriodicPattern: return 2;
      case ArtifactKind::SeamBlend: return 1;
      case ArtifactKind::ChannelShift: return 3;
      case ArtifactKind::LocalWarp: return 0;
    }
    return 0;
  }
};

enum class Split { Train, Test };

namespace detail {

inline double smoothstep01(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// Bilinear lookup with edge clamping; integer coordinates reproduce the
// stored value exactly.
inline double sample_bilinear(const Tensor& img, double y, double x, std::size_t c) {
  const std::size_t h = img.extent(0), w = img.extent(1), d = img.extent(2);
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  std::size_t y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
  std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  double v00 = img[(y0 * w + x0) * d + c], v01 = img[(y0 * w + x1) * d + c];
  double v10 = img[(y1 * w + x0) * d + c], v11 = img[(y1 * w + x1) * d + c];
  return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
         fy * ((1.0 - fx) * v10 + fx * v11);
}

}  // namespace detail

/// Procedural "real" image: a smooth low-frequency color field with a
/// face-like blob (skin-tone ellipse with two darker eye spots). All structure
/// comes from the supplied stream, so identical streams render identical
/// images.
inline Tensor render_base_image(SeededRng rng, std::size_t h, std::size_t w,
                                std::size_t d) {
  require(h >= 4 && w >= 4 && d >= 1, "render_base_image: image too small");
  const double pi = 3.14159265358979323846;
  double cx = rng.uniform(0.40, 0.60) * static_cast<double>(w);
  double cy = rng.uniform(0.42, 0.58) * static_cast<double>(h);
  double rx = rng.uniform(0.24, 0.34) * static_cast<double>(w);
  double ry = rng.uniform(0.30, 0.42) * static_cast<double>(h);
  std::vector<double> skin(d), background(d);
  double base_skin = rng.uniform(0.55, 0.80);
  for (std::size_t c = 0; c < d; ++c)
    skin[c] = base_skin * (1.0 - 0.18 * static_cast<double>(c)) * rng.uniform(0.9, 1.05);
  for (std::size_t c = 0; c < d; ++c) background[c] = rng.uniform(0.15, 0.50);
  constexpr int kModes = 3;
  double fx[kModes], fy[kModes], phase[kModes], amp[kModes];
  for (int m = 0; m < kModes; ++m) {
    fx[m] = rng.uniform(0.3, 1.3);
    fy[m] = rng.uniform(0.3, 1.3);
    phase[m] = rng.uniform(0.0, 2.0 * pi);
    amp[m] = rng.uniform(0.03, 0.09);
  }
  double eye_dx = rx * rng.uniform(0.38, 0.5);
  double eye_dy = -ry * rng.uniform(0.15, 0.3);
  double eye_sigma = 0.055 * static_cast<double>(std::min(h, w)) * rng.uniform(0.8, 1.3);
  double eye_dark = rng.uniform(0.25, 0.4);
  // Skin-like texture. Without it every artifact is trivially separable from
  // the smooth background by raw high-frequency energy.
  constexpr double kTextureNoise = 0.05;

  Tensor img({h, w, d});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double field = 0.0;
      for (int m = 0; m < kModes; ++m)
        field += amp[m] * std::cos(2.0 * pi * (fx[m] * static_cast<double>(x) / static_cast<double>(w) +
                                               fy[m] * static_cast<double>(y) / static_cast<double>(h)) +
                                   phase[m]);
      double ex = (static_cast<double>(x) - cx) / rx;
      double ey = (static_cast<double>(y) - cy) / ry;
      double dist = ex * ex + ey * ey;
      double face = detail::smoothstep01((1.25 - dist) / 0.5);
      double eyes = 0.0;
      for (int side = -1; side <= 1; side += 2) {
        double dxp = static_cast<double>(x) - (cx + side * eye_dx);
        double dyp = static_cast<double>(y) - (cy + eye_dy);
        eyes += std::exp(-(dxp * dxp + dyp * dyp) / (2.0 * eye_sigma * eye_sigma));
      }
      for (std::size_t c = 0; c < d; ++c) {
        double v = background[c] + field;
        v = v + face * (skin[c] + 0.5 * field - v);
        v -= eye_dark * eyes * face;
        v += rng.uniform(-kTextureNoise, kTextureNoise);
        img[(y * w + x) * d + c] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

/// Applies one family's parametric artifact to a base image. Per-image
/// artifact placement (phase, seam position, warp center) comes from the
/// supplied stream. Output is clipped to [0,1].
inline Tensor apply_artifact(const Tensor& base, const ForgeryFamilySpec& spec,
                             SeededRng rng) {
  const std::size_t h = base.extent(0), w = base.extent(1), d = base.extent(2);
  const double pi = 3.14159265358979323846;
  Tensor out = base;
  switch (spec.kind) {
    case ArtifactKind::PeriodicPattern: {
      require(spec.params.size() == 3, "periodic-pattern expects {fx, fy, amplitude}");
      double fcx = spec.params[0], fcy = spec.params[1], amplitude = spec.params[2];
      double phase = rng.uniform(0.0, 2.0 * pi);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          double s = std::sin(2.0 * pi * (fcx * static_cast<double>(x) / static_cast<double>(w) +
                                          fcy * static_cast<double>(y) / static_cast<double>(h)) +
                              phase);
          for (std::size_t c = 0; c < d; ++c) {
            double weight = 1.0 - 0.25 * static_cast<double>(c);
            std::size_t i = (y * w + x) * d + c;
            out[i] = std::clamp(base[i] + amplitude * weight * s, 0.0, 1.0);
          }
        }
      break;
    }
    case ArtifactKind::SeamBlend: {
      require(spec.params.size() == 3, "seam-blend expects {axis, strength, shift_px}");
      int axis = static_cast<int>(spec.params[0]);
      double strength = spec.params[1];
      double shift = spec.params[2];
      double pos = rng.uniform(0.30, 0.70);
      if (axis == 0) {
        std::size_t seam = static_cast<std::size_t>(pos * static_cast<double>(w - 1));
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = seam; x < w; ++x)
            for (std::size_t c = 0; c < d; ++c) {
              double ghost = detail::sample_bilinear(base, static_cast<double>(y),
                                                     static_cast<double>(x) - shift, c);
              std::size_t i = (y * w + x) * d + c;
              out[i] = std::clamp(base[i] + strength * (ghost - base[i]), 0.0, 1.0);
            }
      } else {
        std::size_t seam = static_cast<std::size_t>(pos * static_cast<double>(h - 1));
        for (std::size_t y = seam; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < d; ++c) {
              double ghost = detail::sample_bilinear(base, static_cast<double>(y) - shift,
                                                     static_cast<double>(x), c);
              std::size_t i = (y * w + x) * d + c;
              out[i] = std::clamp(base[i] + strength * (ghost - base[i]), 0.0, 1.0);
            }
      }
      break;
    }
    case ArtifactKind::ChannelShift: {
      require(spec.params.size() == 4, "channel-shift expects {channel, dx, dy, strength}");
      std::size_t channel = static_cast<std::size_t>(spec.params[0]);
      require(channel < d, "channel-shift: channel index out of range");
      double dx = spec.params[1], dy = spec.params[2], strength = spec.params[3];
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          double shifted = detail::sample_bilinear(base, static_cast<double>(y) - dy,
                                                   static_cast<double>(x) - dx, channel);
          std::size_t i = (y * w + x) * d + channel;
          out[i] = std::clamp(base[i] + strength * (shifted - base[i]), 0.0, 1.0);
        }
      break;
    }
    case ArtifactKind::LocalWarp: {
      require(spec.params.size() == 2, "local-warp expects {amplitude_px, radius_fraction}");
      double amplitude = spec.params[0];
      double radius = spec.params[1] * static_cast<double>(std::min(h, w));
      double wx = rng.uniform(0.30, 0.70) * static_cast<double>(w);
      double wy = rng.uniform(0.30, 0.70) * static_cast<double>(h);
      double angle = rng.uniform(0.0, 2.0 * pi);
      double ux = std::cos(angle), uy = std::sin(angle);
      double sigma = std::max(radius / 2.0, 1e-9);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          double rdx = static_cast<double>(x) - wx, rdy = static_cast<double>(y) - wy;
          double fall = std::exp(-(rdx * rdx + rdy * rdy) / (2.0 * sigma * sigma));
          double disp = amplitude * fall;
          if (disp == 0.0) continue;
          for (std::size_t c = 0; c < d; ++c) {
            double v = detail::sample_bilinear(base, static_cast<double>(y) - disp * uy,
                                               static_cast<double>(x) - disp * ux, c);
            out[(y * w + x) * d + c] = std::clamp(v, 0.0, 1.0);
          }
        }
      break;
    }
  }
  return out;
}

namespace detail {

inline constexpr std::uint64_t kTrainSplitTag = 1;
inline constexpr std::uint64_t kTestSplitTag = 2;
inline constexpr std::uint64_t kBaseImageTag = 0;
inline constexpr std::uint64_t kArtifactTagOffset = 1000;

inline SeededRng image_stream(std::uint64_t real_seed, Split split, std::size_t index) {
  SeededRng root(real_seed);
  SeededRng split_rng = root.child(split == Split::Train ? kTrainSplitTag : kTestSplitTag);
  return split_rng.child(index);
}

}  // namespace detail

/// Renders `count` forged samples of one family: procedural base images from
/// the shared real-image streams, then the family artifact. Deterministic per
/// (spec, real_seed, split); train and test streams are disjoint by tag.
/// Images are index-addressed, so a thread count > 1 changes nothing but speed.
inline std::vector<LabeledSample> generate_family_dataset(
    const ForgeryFamilySpec& spec, std::uint64_t real_seed, Split split,
    std::size_t count, std::size_t h, std::size_t w, std::size_t d, int label,
    std::size_t threads = 1) {
  std::vector<LabeledSample> out(count);
  parallel_for(count, threads, [&](std::size_t i) {
    SeededRng img = detail::image_stream(real_seed, split, i);
    std::uint64_t id = img.state();
    Tensor base = render_base_image(img.child(detail::kBaseImageTag), h, w, d);
    Tensor forged = apply_artifact(
        base, spec,
        img.child(detail::kArtifactTagOffset + static_cast<std::uint64_t>(spec.id)));
    out[i] = make_sample(std::move(forged), label, id);
  });
  return out;
}

/// One family sample, addressed by its index in the split stream. Equals
/// element `index` of generate_family_dataset with count > index.
inline LabeledSample generate_family_sample_at(const ForgeryFamilySpec& spec,
                                               std::uint64_t real_seed, Split split,
                                               std::size_t index, std::size_t h,
                                               std::size_t w, std::size_t d, int label) {
  SeededRng img = detail::image_stream(real_seed, split, index);
  std::uint64_t id = img.state();
  Tensor base = render_base_image(img.child(detail::kBaseImageTag), h, w, d);
  Tensor forged = apply_artifact(
      base, spec,
      img.child(detail::kArtifactTagOffset + static_cast<std::uint64_t>(spec.id)));
  return make_sample(std::move(forged), label, id);
}

/// The shared real images (no artifact) for the same streams.
inline std::vector<LabeledSample> generate_real_dataset(std::uint64_t real_seed,
                                                        Split split, std::size_t count,
                                                        std::size_t h, std::size_t w,
                                                        std::size_t d, int label = 0,
                                                        std::size_t threads = 1) {
  std::vector<LabeledSample> out(count);
  parallel_for(count, threads, [&](std::size_t i) {
    SeededRng img = detail::image_stream(real_seed, split, i);
    std::uint64_t id = img.state();
    Tensor base = render_base_image(img.child(detail::kBaseImageTag), h, w, d);
    out[i] = make_sample(std::move(base), label, id);
  });
  return out;
}

/// Default roster: three coverage groups of two families each. Group members
/// share an artifact kind at nearby parameters; kinds differ across groups.
/// Parameters are frozen against the coverage acceptance run.
inline std::vector<ForgeryFamilySpec> default_roster() {
  return {
      {0, ArtifactKind::PeriodicPattern, {4.0, 1.0, 0.16}, 0},
      {1, ArtifactKind::PeriodicPattern, {4.3, 1.2, 0.15}, 0},
      {2, ArtifactKind::SeamBlend, {0.0, 0.65, 2.0}, 1},
      {3, ArtifactKind::SeamBlend, {0.0, 0.55, 2.5}, 1},
      {4, ArtifactKind::ChannelShift, {0.0, 0.0, 2.0, 0.85}, 2},
      {5, ArtifactKind::ChannelShift, {0.0, 0.0, 2.0, 0.60}, 2},
  };
}

}  // namespace gaiforge
