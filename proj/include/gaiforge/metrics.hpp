#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "gaiforge/contracts.hpp"
#include "gaiforge/net.hpp"
#include "gaiforge/sample.hpp"

namespace gaiforge {

/// Per-sample binary forgery scores: all forgery classes mapped onto one
/// "fake" score, the sum of their softmax mass.
struct BinaryScores {
  std::vector<double> score;
  std::vector<std::uint8_t> is_real;
  std::vector<std::uint8_t> is_minor;
};

inline BinaryScores binary_scores(const Classifier& model, const Dataset& test,
                                  int minority_label) {
  BinaryScores out;
  const ArchSpec& arch = model.arch();
  const std::size_t k = arch.classes;
  const std::size_t pixels = arch.height * arch.width * arch.depth;
  constexpr std::size_t kChunk = 128;
  for (std::size_t b = 0; b < test.samples.size(); b += kChunk) {
    std::size_t m = std::min(kChunk, test.samples.size() - b);
    Tensor inputs({m, arch.height, arch.width, arch.depth});
    for (std::size_t i = 0; i < m; ++i) {
      const LabeledSample& s = test.samples[b + i];
      require(s.label >= 0 && static_cast<std::size_t>(s.label) < k,
              "binary_scores: label " + std::to_string(s.label) +
                  " does not fit the model's " + std::to_string(k) + " classes");
      require(s.image->size() == pixels, "binary_scores: sample shape mismatch");
      std::copy(s.image->data(), s.image->data() + pixels, inputs.data() + i * pixels);
    }
    Tensor probs = softmax_rows(model.forward(inputs));
    for (std::size_t i = 0; i < m; ++i) {
      double fake = 0.0;
      for (std::size_t c = 1; c < k; ++c) fake += probs[i * k + c];
      const LabeledSample& s = test.samples[b + i];
      out.score.push_back(fake);
      out.is_real.push_back(s.label == 0 ? 1 : 0);
      out.is_minor.push_back(s.label == minority_label ? 1 : 0);
    }
  }
  return out;
}

/// Trapezoid AUC of fake-vs-real scores. Tied groups contribute the exact
/// half-pair area, so the result equals the pairwise count
/// (#fake>real + ties/2) / (n_fake * n_real).
inline double auc_trapezoid(const std::vector<double>& fake_scores,
                            const std::vector<double>& real_scores) {
  require(!fake_scores.empty() && !real_scores.empty(),
          "auc_trapezoid: both score sets must be nonempty");
  struct Entry {
    double score;
    bool fake;
  };
  std::vector<Entry> all;
  all.reserve(fake_scores.size() + real_scores.size());
  for (double s : fake_scores) all.push_back({s, true});
  for (double s : real_scores) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.fake && !b.fake;
  });
  double area2 = 0.0;  // twice the unnormalized area, integer-valued
  double tp = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    double pos = 0.0, neg = 0.0;
    while (j < all.size() && all[j].score == all[i].score) {
      if (all[j].fake)
        pos += 1.0;
      else
        neg += 1.0;
      ++j;
    }
    area2 += neg * (2.0 * tp + pos);
    tp += pos;
    i = j;
  }
  return area2 / (2.0 * static_cast<double>(fake_scores.size()) *
                  static_cast<double>(real_scores.size()));
}

/// TPR of the minority class at the smallest score threshold whose real-sample
/// FPR does not exceed fpr_point. Scores equal to the threshold count as
/// positive. Returns percent and the threshold used.
inline std::pair<double, double> tpr_at_fpr(const std::vector<double>& minority_scores,
                                            const std::vector<double>& real_scores,
                                            double fpr_point) {
  require(fpr_point >= 0.0 && fpr_point < 1.0, "tpr_at_fpr: fpr must lie in [0,1)");
  require(!minority_scores.empty() && !real_scores.empty(),
          "tpr_at_fpr: score sets must be nonempty");
  std::vector<double> reals = real_scores;
  std::sort(reals.begin(), reals.end());
  std::vector<double> candidates = minority_scores;
  candidates.insert(candidates.end(), real_scores.begin(), real_scores.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  const double n_real = static_cast<double>(reals.size());
  double threshold = std::numeric_limits<double>::infinity();
  for (double cand : candidates) {
    // reals >= cand
    std::size_t above = reals.end() - std::lower_bound(reals.begin(), reals.end(), cand);
    if (static_cast<double>(above) / n_real <= fpr_point) {
      threshold = cand;
      break;
    }
  }
  double tp = 0.0;
  for (double s : minority_scores)
    if (s >= threshold) tp += 1.0;
  return {100.0 * tp / static_cast<double>(minority_scores.size()), threshold};
}

struct MetricStat {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> raw;
};

namespace detail {

inline MetricStat stat_of(std::vector<double> raw) {
  MetricStat s;
  s.raw = raw;
  std::sort(raw.begin(), raw.end());  // permutation-invariant reduction order
  double sum = 0.0;
  for (double v : raw) sum += v;
  s.mean = sum / static_cast<double>(raw.size());
  double var = 0.0;
  for (double v : raw) var += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(raw.size()));
  return s;
}

}  // namespace detail

/// The four-metric protocol. ACC and TPR are percentages; AUC is kept in
/// [0,1] here and scaled by 100 only in emitted reports.
struct MetricsReport {
  MetricStat acc_minor;
  MetricStat tpr_at_fpr;
  MetricStat acc_all;
  MetricStat auc;
  double fpr_point = 0.01;
  bool tpr_reliable = true;
  std::size_t n_real = 0, n_fake = 0, n_minor = 0;
  std::size_t seeds = 1;
};

/// Single-seed evaluation on an assembled test set. ACC thresholds sit at the
/// 0.5 binary score; equal-to-threshold counts as fake.
inline MetricsReport evaluate(const Classifier& model, const Dataset& test,
                              int minority_label, double fpr_point) {
  require(!test.samples.empty(), "evaluate: test set is empty");
  BinaryScores scores = binary_scores(model, test, minority_label);
  std::vector<double> real_s, fake_s, minor_s;
  for (std::size_t i = 0; i < scores.score.size(); ++i) {
    if (scores.is_real[i])
      real_s.push_back(scores.score[i]);
    else
      fake_s.push_back(scores.score[i]);
    if (scores.is_minor[i]) minor_s.push_back(scores.score[i]);
  }
  require(!real_s.empty() && !fake_s.empty() && !minor_s.empty(),
          "evaluate: test set must contain real, fake and minority samples");

  MetricsReport rep;
  rep.fpr_point = fpr_point;
  rep.n_real = real_s.size();
  rep.n_fake = fake_s.size();
  rep.n_minor = minor_s.size();
  rep.tpr_reliable =
      fpr_point > 0.0 && static_cast<double>(real_s.size()) * fpr_point >= 1.0;

  double correct = 0.0;
  for (std::size_t i = 0; i < scores.score.size(); ++i) {
    bool predicted_fake = scores.score[i] >= 0.5;
    if (predicted_fake != static_cast<bool>(scores.is_real[i])) correct += 1.0;
  }
  double acc_all = 100.0 * correct / static_cast<double>(scores.score.size());
  double minor_hit = 0.0;
  for (double s : minor_s)
    if (s >= 0.5) minor_hit += 1.0;
  double acc_minor = 100.0 * minor_hit / static_cast<double>(minor_s.size());
  double tpr = tpr_at_fpr(minor_s, real_s, fpr_point).first;
  double auc = auc_trapezoid(fake_s, real_s);

  rep.acc_minor = detail::stat_of({acc_minor});
  rep.tpr_at_fpr = detail::stat_of({tpr});
  rep.acc_all = detail::stat_of({acc_all});
  rep.auc = detail::stat_of({auc});
  return rep;
}

/// Mean and population standard deviation over per-seed reports.
inline MetricsReport aggregate_runs(const std::vector<MetricsReport>& reports) {
  require(!reports.empty(), "aggregate_runs: need at least one report");
  const MetricsReport& first = reports.front();
  MetricsReport agg = first;
  std::vector<double> acc_minor, tpr, acc_all, auc;
  std::size_t seeds = 0;
  for (const auto& r : reports) {
    require(r.fpr_point == first.fpr_point,
            "aggregate_runs: mismatched FPR operating points");
    acc_minor.insert(acc_minor.end(), r.acc_minor.raw.begin(), r.acc_minor.raw.end());
    tpr.insert(tpr.end(), r.tpr_at_fpr.raw.begin(), r.tpr_at_fpr.raw.end());
    acc_all.insert(acc_all.end(), r.acc_all.raw.begin(), r.acc_all.raw.end());
    auc.insert(auc.end(), r.auc.raw.begin(), r.auc.raw.end());
    seeds += r.seeds;
    agg.tpr_reliable = agg.tpr_reliable && r.tpr_reliable;
  }
  agg.seeds = seeds;
  agg.acc_minor = detail::stat_of(std::move(acc_minor));
  agg.tpr_at_fpr = detail::stat_of(std::move(tpr));
  agg.acc_all = detail::stat_of(std::move(acc_all));
  agg.auc = detail::stat_of(std::move(auc));
  return agg;
}

}  // namespace gaiforge
