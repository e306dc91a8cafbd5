#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gaiforge/contracts.hpp"
#include "gaiforge/net.hpp"
#include "gaiforge/rng.hpp"
#include "gaiforge/sample.hpp"
#include "gaiforge/tensor.hpp"

namespace gaiforge {

/// Knobs of the guided adversarial interpolation loop.
struct GaiConfig {
  std::size_t steps = 10;        // T, iterative update count
  double eta = 1.0;              // normalized-gradient step size
  double lambda = 0.5;           // restrain term weight
  double beta = 10.0;            // smoothness term weight
  double tau = 0.5;              // teacher-confidence rejection threshold
  double replace_prob = 0.99;    // p, per-duplicate replacement probability
  double alpha0 = 0.75;          // constant initialization of the coefficients
  double noise_scale = 0.01;     // half-width of the uniform init perturbation
  int minority_label = 0;        // class index n+1
  bool restrain_on_softmax = true;  // false: restrain reads the raw logit

  void validate() const {
    require(eta > 0.0, "GaiConfig: eta must be positive");
    require(lambda >= 0.0 && beta >= 0.0, "GaiConfig: lambda and beta must be >= 0");
    require(tau >= 0.0 && tau <= 1.0, "GaiConfig: tau must lie in [0,1]");
    require(replace_prob >= 0.0 && replace_prob <= 1.0,
            "GaiConfig: replacement probability must lie in [0,1]");
    require(alpha0 > 0.0 && alpha0 <= 1.0, "GaiConfig: alpha0 must lie in (0,1]");
    require(noise_scale >= 0.0 && noise_scale <= 1.0,
            "GaiConfig: noise_scale must lie in [0,1]");
    require(minority_label >= 0, "GaiConfig: minority label must be set");
  }
};

enum class Variant { Gai, GaiMinus, NoTeacher, Mixup };

/// One recorded optimization step, for replay checks.
struct StepTrace {
  Tensor alpha_before;
  Tensor gradient;
  Tensor alpha_after;
  bool skipped = false;
};

struct GenerationOutcome {
  Tensor sample;                  // x_adv
  bool accepted = false;          // teacher confidence reached tau
  double teacher_confidence = 0;  // softmax(g(x_adv))[minority]
  Variant variant = Variant::Gai;
  Tensor alpha;                   // final coefficients (or delta for GaiMinus)
  Tensor initial_sample;          // sample before any update
  int skipped_steps = 0;          // steps dropped due to vanishing gradient
  std::vector<StepTrace> trace;   // filled only when requested
};

/// Optimization state of one interpolation; step functions mutate it in place.
struct InterpState {
  Tensor alpha;
  Tensor x_major;
  Tensor x_minor;
  int source_class = 0;
  int step = 0;
};

/// x* = alpha (.) x_major + (1 - alpha) (.) x_minor. alpha must already lie in
/// [0,1] elementwise, so the result stays between the two inputs.
inline Tensor interpolate(const Tensor& alpha, const Tensor& x_major,
                          const Tensor& x_minor) {
  check_same_shape(alpha, x_major, "interpolate");
  check_same_shape(alpha, x_minor, "interpolate");
  require(min_element(alpha) >= 0.0 && max_element(alpha) <= 1.0,
          "interpolate: alpha has elements outside [0,1]");
  Tensor out(alpha.shape());
  for (std::size_t i = 0; i < alpha.size(); ++i)
    out[i] = alpha[i] * x_major[i] + (1.0 - alpha[i]) * x_minor[i];
  return out;
}

/// Total variation of a [H,W,D] coefficient tensor: squared channel-vector
/// differences along both spatial axes, each normalized by its pair count.
inline double smoothness_loss(const Tensor& alpha) {
  require(alpha.rank() == 3, "smoothness_loss: expected a [H,W,D] tensor");
  const std::size_t h = alpha.extent(0), w = alpha.extent(1), d = alpha.extent(2);
  double vertical = 0.0;
  if (h > 1) {
    for (std::size_t y = 0; y + 1 < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t c = 0; c < d; ++c) {
          double diff = alpha[((y + 1) * w + x) * d + c] - alpha[(y * w + x) * d + c];
          vertical += diff * diff;
        }
    vertical /= static_cast<double>((h - 1) * w);
  }
  double horizontal = 0.0;
  if (w > 1) {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x + 1 < w; ++x)
        for (std::size_t c = 0; c < d; ++c) {
          double diff = alpha[(y * w + x + 1) * d + c] - alpha[(y * w + x) * d + c];
          horizontal += diff * diff;
        }
    horizontal /= static_cast<double>(h * (w - 1));
  }
  return vertical + horizontal;
}

/// Analytic gradient of smoothness_loss.
inline Tensor smoothness_gradient(const Tensor& alpha) {
  require(alpha.rank() == 3, "smoothness_gradient: expected a [H,W,D] tensor");
  const std::size_t h = alpha.extent(0), w = alpha.extent(1), d = alpha.extent(2);
  Tensor grad(alpha.shape());
  const double cv = h > 1 ? 1.0 / static_cast<double>((h - 1) * w) : 0.0;
  const double ch = w > 1 ? 1.0 / static_cast<double>(h * (w - 1)) : 0.0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < d; ++c) {
        double acc = 0.0;
        double v = alpha[(y * w + x) * d + c];
        if (y > 0) acc += 2.0 * cv * (v - alpha[((y - 1) * w + x) * d + c]);
        if (y + 1 < h) acc -= 2.0 * cv * (alpha[((y + 1) * w + x) * d + c] - v);
        if (x > 0) acc += 2.0 * ch * (v - alpha[(y * w + x - 1) * d + c]);
        if (x + 1 < w) acc -= 2.0 * ch * (alpha[(y * w + x + 1) * d + c] - v);
        grad[(y * w + x) * d + c] = acc;
      }
  return grad;
}

struct ObjectiveParts {
  double cls = 0.0;       // teacher cross entropy toward the minority class
  double restrain = 0.0;  // student's confidence on the source class
  double smooth = 0.0;    // total variation of the coefficients
  double total = 0.0;
};

namespace detail {

inline InputLossSpec restrain_spec(const GaiConfig& cfg, int source_class) {
  return cfg.restrain_on_softmax ? InputLossSpec::softmax_prob_of(source_class)
                                 : InputLossSpec::logit_of(source_class);
}

/// d(cls + lambda * restrain)/d(x*), the data part of the objective gradient.
inline Tensor data_input_gradient(const Tensor& x_star, const GaiConfig& cfg,
                                  const Classifier& teacher, const Classifier& student,
                                  int source_class) {
  Tensor grad = teacher.input_gradient(
      InputLossSpec::cross_entropy_to(cfg.minority_label), x_star);
  if (cfg.lambda != 0.0) {
    Tensor rg = student.input_gradient(restrain_spec(cfg, source_class), x_star);
    grad = add(grad, scale(rg, cfg.lambda));
  }
  return grad;
}

}  // namespace detail

/// Eq-style objective: teacher CE toward the minority class, plus the weighted
/// student restrain term, plus the weighted smoothness of the coefficients.
inline ObjectiveParts objective_parts(const Tensor& x_star, const GaiConfig& cfg,
                                      const Classifier& teacher, const Classifier& student,
                                      const Tensor& alpha, int source_class) {
  require(source_class != cfg.minority_label,
          "objective: source class equals the minority label");
  ObjectiveParts parts;
  parts.cls = teacher.input_loss(
      InputLossSpec::cross_entropy_to(cfg.minority_label), x_star);
  parts.restrain =
      student.input_loss(detail::restrain_spec(cfg, source_class), x_star);
  parts.smooth = smoothness_loss(alpha);
  parts.total = parts.cls + cfg.lambda * parts.restrain + cfg.beta * parts.smooth;
  return parts;
}

inline double objective(const Tensor& x_star, const GaiConfig& cfg,
                        const Classifier& teacher, const Classifier& student,
                        const Tensor& alpha, int source_class) {
  return objective_parts(x_star, cfg, teacher, student, alpha, source_class).total;
}

/// Full objective gradient with respect to alpha: the data gradient chained
/// through d(x*)/d(alpha) = x_major - x_minor, plus the smoothness gradient.
inline Tensor objective_alpha_gradient(const Tensor& alpha, const Tensor& x_major,
                                       const Tensor& x_minor, const GaiConfig& cfg,
                                       const Classifier& teacher, const Classifier& student,
                                       int source_class) {
  require(source_class != cfg.minority_label,
          "objective: source class equals the minority label");
  Tensor x_star = interpolate(alpha, x_major, x_minor);
  Tensor grad = mul(detail::data_input_gradient(x_star, cfg, teacher, student, source_class),
                    sub(x_major, x_minor));
  if (cfg.beta != 0.0) grad = add(grad, scale(smoothness_gradient(alpha), cfg.beta));
  return grad;
}

/// Objective gradient with respect to the additive perturbation of GaiMinus;
/// the smoothness term is applied to delta itself.
inline Tensor objective_delta_gradient(const Tensor& delta, const Tensor& x_major,
                                       const GaiConfig& cfg, const Classifier& teacher,
                                       const Classifier& student, int source_class) {
  require(source_class != cfg.minority_label,
          "objective: source class equals the minority label");
  Tensor x_star = add(x_major, delta);
  Tensor grad = detail::data_input_gradient(x_star, cfg, teacher, student, source_class);
  if (cfg.beta != 0.0) grad = add(grad, scale(smoothness_gradient(delta), cfg.beta));
  return grad;
}

inline constexpr double kVanishingGradientNorm = 1e-12;

/// One normalized-gradient update of the interpolation coefficients. Returns
/// the recorded gradient; a vanishing gradient leaves alpha untouched.
inline StepTrace gai_step(InterpState& state, const GaiConfig& cfg,
                          const Classifier& teacher, const Classifier& student,
                          bool keep_tensors = true) {
  StepTrace rec;
  if (keep_tensors) rec.alpha_before = state.alpha;
  Tensor xi = objective_alpha_gradient(state.alpha, state.x_major, state.x_minor, cfg,
                                       teacher, student, state.source_class);
  double norm = l2_norm(xi);
  if (norm < kVanishingGradientNorm) {
    rec.skipped = true;
  } else {
    state.alpha = clamp01(sub(state.alpha, scale(xi, cfg.eta / norm)));
  }
  state.step += 1;
  if (keep_tensors) {
    rec.gradient = std::move(xi);
    rec.alpha_after = state.alpha;
  }
  return rec;
}

/// Initial coefficients: alpha0 everywhere, perturbed by uniform noise in
/// [-noise_scale, +noise_scale] and clamped into [0,1].
inline Tensor initial_alpha(const std::vector<std::size_t>& shape, const GaiConfig& cfg,
                            SeededRng& rng) {
  Tensor alpha = Tensor::full(shape, cfg.alpha0);
  if (cfg.noise_scale > 0.0) {
    for (std::size_t i = 0; i < alpha.size(); ++i)
      alpha[i] += rng.uniform(-cfg.noise_scale, cfg.noise_scale);
    alpha = clamp01(alpha);
  }
  return alpha;
}

/// Guided adversarial interpolation of one majority/minority pair.
inline GenerationOutcome gai_generate(const Tensor& x_major, const Tensor& x_minor,
                                      int source_class, const GaiConfig& cfg,
                                      const Classifier& teacher, const Classifier& student,
                                      SeededRng& rng, bool record_trace = false) {
  cfg.validate();
  check_same_shape(x_major, x_minor, "gai_generate");
  require(source_class != cfg.minority_label,
          "gai_generate: a majority sample must come from a majority class");
  GenerationOutcome out;
  out.variant = Variant::Gai;
  InterpState state;
  state.alpha = initial_alpha(x_major.shape(), cfg, rng);
  state.x_major = x_major;
  state.x_minor = x_minor;
  state.source_class = source_class;
  out.initial_sample = interpolate(state.alpha, x_major, x_minor);
  for (std::size_t j = 0; j < cfg.steps; ++j) {
    StepTrace rec = gai_step(state, cfg, teacher, student, record_trace);
    if (rec.skipped) out.skipped_steps += 1;
    if (record_trace) out.trace.push_back(std::move(rec));
  }
  out.alpha = state.alpha;
  out.sample = interpolate(state.alpha, x_major, x_minor);
  out.teacher_confidence =
      softmax_rows(teacher.forward(batch_of_one(out.sample, teacher.arch())))
          [static_cast<std::size_t>(cfg.minority_label)];
  out.accepted = out.teacher_confidence >= cfg.tau;
  return out;
}

/// Perturbation-only degeneration: optimizes an additive delta on the
/// majority sample over the same objective, smoothness applied to delta.
inline GenerationOutcome gai_minus_generate(const Tensor& x_major, int source_class,
                                            const GaiConfig& cfg, const Classifier& teacher,
                                            const Classifier& student, SeededRng& rng,
                                            bool record_trace = false) {
  (void)rng;  // delta starts at exactly zero; no stochastic init
  cfg.validate();
  require(source_class != cfg.minority_label,
          "gai_minus_generate: a majority sample must come from a majority class");
  GenerationOutcome out;
  out.variant = Variant::GaiMinus;
  Tensor delta = zeros_like(x_major);
  out.initial_sample = add(x_major, delta);
  for (std::size_t j = 0; j < cfg.steps; ++j) {
    StepTrace rec;
    if (record_trace) rec.alpha_before = delta;
    Tensor xi = objective_delta_gradient(delta, x_major, cfg, teacher, student, source_class);
    double norm = l2_norm(xi);
    if (norm < kVanishingGradientNorm) {
      rec.skipped = true;
      out.skipped_steps += 1;
    } else {
      delta = sub(delta, scale(xi, cfg.eta / norm));
    }
    if (record_trace) {
      rec.gradient = std::move(xi);
      rec.alpha_after = delta;
      out.trace.push_back(std::move(rec));
    }
  }
  out.alpha = delta;
  out.sample = add(x_major, delta);
  out.teacher_confidence =
      softmax_rows(teacher.forward(batch_of_one(out.sample, teacher.arch())))
          [static_cast<std::size_t>(cfg.minority_label)];
  out.accepted = out.teacher_confidence >= cfg.tau;
  return out;
}

struct FixedInterpResult {
  Tensor sample;
  int hard_label = 0;               // used when !mixed
  std::vector<double> soft_target;  // used when mixed; length = class count
  bool mixed = false;
};

/// Teacher-free interpolation at a fixed ratio. With mix_labels the target
/// distribution puts alpha0 on the source class and 1-alpha0 on the minority
/// class (fixed-ratio mixup); otherwise the sample keeps the hard minority
/// label (the no-teacher variant).
inline FixedInterpResult fixed_interp_generate(const Tensor& x_major, const Tensor& x_minor,
                                               double alpha0, bool mix_labels,
                                               int source_class, int minority_label,
                                               std::size_t num_classes) {
  require(alpha0 >= 0.0 && alpha0 <= 1.0, "fixed_interp_generate: alpha0 must lie in [0,1]");
  FixedInterpResult out;
  out.sample = interpolate(Tensor::full(x_major.shape(), alpha0), x_major, x_minor);
  out.mixed = mix_labels;
  if (mix_labels) {
    out.soft_target.assign(num_classes, 0.0);
    out.soft_target[static_cast<std::size_t>(source_class)] += alpha0;
    out.soft_target[static_cast<std::size_t>(minority_label)] += 1.0 - alpha0;
  } else {
    out.hard_label = minority_label;
  }
  return out;
}

/// Algorithm-1 outer loop over a batch of minority duplicates: each sample is
/// independently replaced, with probability p, by an accepted generation from
/// a uniformly drawn majority sample. Labels are never changed. Per-sample
/// child streams keep results independent of scheduling.
inline std::vector<LabeledSample> replace_batch(const std::vector<LabeledSample>& minority_batch,
                                                const std::vector<LabeledSample>& majority_pool,
                                                const GaiConfig& cfg, const Classifier& teacher,
                                                const Classifier& student, SeededRng& rng,
                                                Variant variant = Variant::Gai) {
  cfg.validate();
  require(!majority_pool.empty(), "replace_batch: majority pool is empty");
  require(variant == Variant::Gai || variant == Variant::GaiMinus,
          "replace_batch: teacher-guided variants only");
  for (const auto& s : minority_batch)
    require(s.label == cfg.minority_label,
            "replace_batch: sample with label " + std::to_string(s.label) +
                " is not a minority duplicate");
  std::vector<LabeledSample> out = minority_batch;
  for (std::size_t i = 0; i < out.size(); ++i) {
    SeededRng stream = rng.child(i);
    if (!stream.bernoulli(cfg.replace_prob)) continue;
    const LabeledSample& major = majority_pool[stream.uniform_below(majority_pool.size())];
    GenerationOutcome gen =
        variant == Variant::Gai
            ? gai_generate(*major.image, *out[i].image, major.label, cfg, teacher,
                           student, stream)
            : gai_minus_generate(*major.image, major.label, cfg, teacher, student, stream);
    if (gen.accepted)
      out[i].image = std::make_shared<const Tensor>(std::move(gen.sample));
  }
  return out;
}

}  // namespace gaiforge
