#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gaiforge/contracts.hpp"
#include "gaiforge/gai.hpp"
#include "gaiforge/net.hpp"
#include "gaiforge/rng.hpp"
#include "gaiforge/sample.hpp"

namespace gaiforge {

enum class SampleMode { InstanceBalanced, ClassBalanced };

/// Sampling policy. Instance-balanced draws are uniform over the multiset in
/// which the minority class is counted minority_dup_factor times (factor 1 is
/// plain uniform); class-balanced draws a class uniformly, then a sample
/// uniformly within it.
struct SamplerSpec {
  SampleMode mode = SampleMode::ClassBalanced;
  std::size_t minority_dup_factor = 1;
  int minority_label = -1;  // class the duplication factor applies to

  void validate() const {
    require(minority_dup_factor >= 1, "SamplerSpec: duplication factor must be >= 1");
  }
};

class BatchSampler {
 public:
  BatchSampler(const Dataset& dataset, const SamplerSpec& spec)
      : dataset_(&dataset), spec_(spec) {
    spec.validate();
    require(!dataset.empty(), "BatchSampler: dataset is empty");
    if (spec.mode == SampleMode::ClassBalanced) {
      require(!dataset.declared_classes.empty(),
              "BatchSampler: class-balanced sampling needs declared classes");
      std::map<int, std::vector<std::size_t>> buckets;
      for (std::size_t i = 0; i < dataset.samples.size(); ++i)
        buckets[dataset.samples[i].label].push_back(i);
      for (int c : dataset.declared_classes) {
        auto it = buckets.find(c);
        require(it != buckets.end() && !it->second.empty(),
                "BatchSampler: declared class " + std::to_string(c) +
                    " has no samples (class-balanced sampling)");
        class_indices_.push_back(it->second);
      }
    } else if (spec.minority_dup_factor > 1) {
      for (std::size_t i = 0; i < dataset.samples.size(); ++i)
        if (dataset.samples[i].label == spec.minority_label)
          minority_indices_.push_back(i);
    }
  }

  std::size_t draw_index(SeededRng& rng) const {
    if (spec_.mode == SampleMode::ClassBalanced) {
      const auto& bucket = class_indices_[rng.uniform_below(class_indices_.size())];
      return bucket[rng.uniform_below(bucket.size())];
    }
    std::size_t n = dataset_->size();
    std::size_t extra = (spec_.minority_dup_factor - 1) * minority_indices_.size();
    std::size_t r = rng.uniform_below(n + extra);
    if (r < n) return r;
    return minority_indices_[(r - n) % minority_indices_.size()];
  }

  std::vector<std::size_t> draw_indices(SeededRng& rng, std::size_t count) const {
    std::vector<std::size_t> out(count);
    for (auto& i : out) i = draw_index(rng);
    return out;
  }

 private:
  const Dataset* dataset_;
  SamplerSpec spec_;
  std::vector<std::vector<std::size_t>> class_indices_;
  std::vector<std::size_t> minority_indices_;
};

inline std::vector<LabeledSample> sample_batch(const Dataset& dataset,
                                               const SamplerSpec& spec, SeededRng& rng,
                                               std::size_t batch_size) {
  BatchSampler sampler(dataset, spec);
  std::vector<LabeledSample> out;
  out.reserve(batch_size);
  for (std::size_t i : sampler.draw_indices(rng, batch_size))
    out.push_back(dataset.samples[i]);
  return out;
}

/// SGD schedule: linear warmup to base_lr, then step decay at the milestones.
struct TrainSchedule {
  std::size_t iterations = 3000;
  double base_lr = 0.05;
  std::size_t warmup = 150;
  std::vector<std::size_t> milestones = {1000, 2000};
  double decay = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 32;

  void validate() const {
    if (iterations == 0) return;
    require(base_lr > 0.0 && batch_size > 0, "TrainSchedule: lr and batch size must be positive");
    require(warmup < iterations, "TrainSchedule: warmup must precede the end of training");
    for (std::size_t i = 1; i < milestones.size(); ++i)
      require(milestones[i - 1] < milestones[i], "TrainSchedule: milestones must increase");
    if (!milestones.empty()) {
      require(warmup < milestones.front(),
              "TrainSchedule: warmup must end before the first milestone");
      require(milestones.back() < iterations,
              "TrainSchedule: milestones must precede the end of training");
    }
  }
};

/// lr(t) = base*(t+1)/warmup during warmup, then base decayed once per passed
/// milestone. Exact, no smoothing.
inline double learning_rate_at(const TrainSchedule& s, std::size_t t) {
  if (s.warmup > 0 && t < s.warmup)
    return s.base_lr * static_cast<double>(t + 1) / static_cast<double>(s.warmup);
  double lr = s.base_lr;
  for (std::size_t m : s.milestones)
    if (t >= m) lr *= s.decay;
  return lr;
}

enum class Method { Unseen, IB, CB, Mixup, NoTeacher, GaiMinus, Gai };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::Unseen: return "unseen";
    case Method::IB: return "ib";
    case Method::CB: return "cb";
    case Method::Mixup: return "mixup";
    case Method::NoTeacher: return "no_teacher";
    case Method::GaiMinus: return "gai_minus";
    case Method::Gai: return "gai";
  }
  return "?";
}

inline Method method_from_name(const std::string& s) {
  if (s == "unseen") return Method::Unseen;
  if (s == "ib") return Method::IB;
  if (s == "cb") return Method::CB;
  if (s == "mixup") return Method::Mixup;
  if (s == "no_teacher") return Method::NoTeacher;
  if (s == "gai_minus") return Method::GaiMinus;
  if (s == "gai") return Method::Gai;
  throw ContractViolation("unknown method: " + s);
}

/// Training method plus whatever it needs: the GAI knobs for the generative
/// methods and a teacher for the guided ones. The teacher is never mutated.
struct MethodSpec {
  Method method = Method::CB;
  GaiConfig gai;
  const Classifier* teacher = nullptr;

  bool uses_generation() const {
    return method == Method::Mixup || method == Method::NoTeacher ||
           method == Method::GaiMinus || method == Method::Gai;
  }
  bool needs_teacher() const {
    return method == Method::Gai || method == Method::GaiMinus;
  }
  SamplerSpec sampler() const {
    if (method == Method::IB) return {SampleMode::InstanceBalanced, 1, -1};
    if (method == Method::Unseen) return {SampleMode::InstanceBalanced, 1, -1};
    return {SampleMode::ClassBalanced, 1, gai.minority_label};
  }
  void validate(const Dataset& dataset) const {
    if (needs_teacher())
      require(teacher != nullptr, "MethodSpec: " + method_name(method) + " requires a teacher");
    if (uses_generation()) gai.validate();
    if (method == Method::Unseen && gai.minority_label >= 0)
      for (const auto& s : dataset.samples)
        require(s.label != gai.minority_label,
                "MethodSpec: unseen training forbids minority data");
  }
};

struct HistoryRow {
  std::size_t iteration = 0;
  double lr = 0.0;
  double loss = 0.0;
  double minority_acc = -1.0;  // batch minority accuracy; -1 when absent
};

struct TrainResult {
  Classifier model;
  std::vector<HistoryRow> history;
};

namespace detail {

inline Tensor assemble_batch(const std::vector<LabeledSample>& batch, const ArchSpec& arch) {
  Tensor out({batch.size(), arch.height, arch.width, arch.depth});
  std::size_t pixel = arch.height * arch.width * arch.depth;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Tensor& img = *batch[i].image;
    require(img.size() == pixel, "train: sample shape does not match model input");
    std::copy(img.data(), img.data() + pixel, out.data() + i * pixel);
  }
  return out;
}

inline std::string label_histogram(const std::vector<int>& labels) {
  std::map<int, int> counts;
  for (int l : labels) counts[l] += 1;
  std::string s = "{";
  for (auto& [label, count] : counts)
    s += std::to_string(label) + ":" + std::to_string(count) + " ";
  if (s.size() > 1) s.pop_back();
  return s + "}";
}

}  // namespace detail

/// SGD with Nesterov momentum, weight decay, warmup and step decay. For the
/// generative methods every minority duplicate in a batch is passed through
/// the sample-replacement step (teacher-guided or fixed-ratio) before the
/// gradient update. The student passed to generation is the current model.
inline TrainResult train(const Classifier& start, const Dataset& dataset,
                         const TrainSchedule& schedule, const MethodSpec& method,
                         SeededRng rng) {
  schedule.validate();
  method.validate(dataset);
  TrainResult result;
  result.model = start;
  if (schedule.iterations == 0) return result;
  require(!dataset.empty(), "train: dataset is empty");

  Classifier& model = result.model;
  const ArchSpec& arch = model.arch();
  const std::size_t k = arch.classes;
  const int minority = method.gai.minority_label;
  BatchSampler sampler(dataset, method.sampler());

  std::vector<Tensor*> params = model.parameters();
  std::vector<Tensor> velocity;
  for (Tensor* p : params) velocity.emplace_back(p->shape());

  for (std::size_t t = 0; t < schedule.iterations; ++t) {
    double lr = learning_rate_at(schedule, t);
    SeededRng iter_rng = rng.child(t);
    SeededRng draw_rng = iter_rng.child(0);
    std::vector<std::size_t> idx = sampler.draw_indices(draw_rng, schedule.batch_size);
    std::vector<LabeledSample> batch;
    batch.reserve(idx.size());
    for (std::size_t i : idx) batch.push_back(dataset.samples[i]);

    bool has_soft = false;
    Tensor soft_targets;
    if (method.uses_generation()) {
      std::vector<std::size_t> minor_pos;
      std::vector<LabeledSample> pool;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].label == minority)
          minor_pos.push_back(i);
        else
          pool.push_back(batch[i]);
      }
      if (!minor_pos.empty() && !pool.empty()) {
        SeededRng gen_rng = iter_rng.child(1);
        if (method.method == Method::Gai || method.method == Method::GaiMinus) {
          std::vector<LabeledSample> minors;
          for (std::size_t i : minor_pos) minors.push_back(batch[i]);
          std::vector<LabeledSample> replaced = replace_batch(
              minors, pool, method.gai, *method.teacher, model, gen_rng,
              method.method == Method::Gai ? Variant::Gai : Variant::GaiMinus);
          for (std::size_t j = 0; j < minor_pos.size(); ++j)
            batch[minor_pos[j]] = replaced[j];
        } else {
          bool mix = method.method == Method::Mixup;
          if (mix) {
            soft_targets = Tensor({batch.size(), k});
            for (std::size_t i = 0; i < batch.size(); ++i)
              soft_targets[i * k + static_cast<std::size_t>(batch[i].label)] = 1.0;
          }
          for (std::size_t j = 0; j < minor_pos.size(); ++j) {
            SeededRng stream = gen_rng.child(j);
            if (!stream.bernoulli(method.gai.replace_prob)) continue;
            const LabeledSample& major = pool[stream.uniform_below(pool.size())];
            FixedInterpResult gen = fixed_interp_generate(
                *major.image, *batch[minor_pos[j]].image, method.gai.alpha0, mix,
                major.label, minority, k);
            batch[minor_pos[j]].image =
                std::make_shared<const Tensor>(std::move(gen.sample));
            if (mix) {
              has_soft = true;
              for (std::size_t c = 0; c < k; ++c)
                soft_targets[minor_pos[j] * k + c] = gen.soft_target[c];
            }
          }
        }
      }
    }

    Tensor inputs = detail::assemble_batch(batch, arch);
    std::vector<int> labels(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) labels[i] = batch[i].label;

    BatchGradients grads = has_soft ? model.param_gradients_soft(inputs, soft_targets)
                                    : model.param_gradients(inputs, labels);
    if (!std::isfinite(grads.loss))
      throw ContractViolation("train: non-finite loss at iteration " + std::to_string(t) +
                              ", lr=" + std::to_string(lr) + ", batch labels " +
                              detail::label_histogram(labels));

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      Tensor& p = *params[pi];
      Tensor& v = velocity[pi];
      const Tensor& g = grads.params[pi];
      for (std::size_t i = 0; i < p.size(); ++i) {
        double gw = g[i] + schedule.weight_decay * p[i];
        v[i] = schedule.momentum * v[i] + gw;
        p[i] -= lr * (gw + schedule.momentum * v[i]);
      }
    }

    if (t % 10 == 0) {
      double minor_correct = 0.0, minor_total = 0.0;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].label != minority || minority < 0) continue;
        minor_total += 1.0;
        const double* row = grads.logits.data() + i * k;
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c)
          if (row[c] > row[best]) best = c;
        if (static_cast<int>(best) == minority) minor_correct += 1.0;
      }
      result.history.push_back(
          {t, lr, grads.loss, minor_total > 0 ? minor_correct / minor_total : -1.0});
    }
  }
  return result;
}

/// Few-shot finetuning: identical loop, initialized from the base parameters.
inline TrainResult finetune_from_base(const Classifier& base, const Dataset& few_shot,
                                      const TrainSchedule& schedule,
                                      const MethodSpec& method, SeededRng rng) {
  return train(base, few_shot, schedule, method, rng);
}

}  // namespace gaiforge
