#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gaiforge/contracts.hpp"
#include "gaiforge/data.hpp"
#include "gaiforge/net.hpp"
#include "gaiforge/parallel.hpp"
#include "gaiforge/rng.hpp"
#include "gaiforge/sample.hpp"
#include "gaiforge/train.hpp"

namespace gaiforge {

/// Cross-forgery accuracy, percent: accuracy[i][j] is the share of family j's
/// test fakes that the detector trained on family i flags as fake.
struct CoverageMatrix {
  std::vector<std::vector<double>> accuracy;
  std::vector<std::string> warnings;

  std::size_t size() const { return accuracy.size(); }

  /// Diagonal dominance is expected but not enforced; deviations are warnings.
  void check_diagonal() {
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = 0; j < size(); ++j)
        if (j != i && accuracy[i][j] > accuracy[i][i])
          warnings.push_back("detector " + std::to_string(i) + " scores higher on family " +
                             std::to_string(j) + " than on its own family");
  }
};

struct CoverageConfig {
  std::size_t train_per_family = 1200;
  std::size_t test_per_family = 400;
  std::uint64_t real_seed = 7;
  std::size_t height = 16, width = 16, depth = 3;
};

using DetectorFactory = std::function<Classifier(SeededRng&)>;

/// Core of the coverage analysis over already-rendered splits. family_ids is
/// used only to name families in error context.
inline CoverageMatrix coverage_matrix_from_samples(
    const std::vector<std::vector<LabeledSample>>& fakes_train,
    const std::vector<std::vector<LabeledSample>>& fakes_test,
    const std::vector<LabeledSample>& reals, const DetectorFactory& factory,
    const TrainSchedule& schedule, SeededRng rng, std::size_t threads,
    const std::vector<int>& family_ids) {
  const std::size_t n = fakes_train.size();
  require(n >= 2, "coverage_matrix: need at least two families");
  require(fakes_test.size() == n && family_ids.size() == n,
          "coverage_matrix: family split counts disagree");
  CoverageMatrix out;
  out.accuracy.assign(n, std::vector<double>(n, 0.0));
  parallel_for(n, threads, [&](std::size_t i) {
    try {
      require(!fakes_train[i].empty() && !reals.empty(),
              "empty training split for the detector");
      Dataset train_set;
      train_set.declared_classes = {0, 1};
      train_set.samples = reals;
      train_set.samples.insert(train_set.samples.end(), fakes_train[i].begin(),
                               fakes_train[i].end());
      SeededRng family_rng = rng.child(i);
      SeededRng init_rng = family_rng.child(0);
      Classifier detector = factory(init_rng);
      MethodSpec spec;
      spec.method = Method::CB;
      TrainResult trained = train(detector, train_set, schedule, spec, family_rng.child(1));
      const ArchSpec& arch = trained.model.arch();
      std::size_t pixels = arch.height * arch.width * arch.depth;
      for (std::size_t j = 0; j < n; ++j) {
        require(!fakes_test[j].empty(), "empty test split for family " +
                                            std::to_string(family_ids[j]));
        std::size_t correct = 0;
        constexpr std::size_t kChunk = 128;
        for (std::size_t b = 0; b < fakes_test[j].size(); b += kChunk) {
          std::size_t m = std::min(kChunk, fakes_test[j].size() - b);
          Tensor inputs({m, arch.height, arch.width, arch.depth});
          for (std::size_t s = 0; s < m; ++s)
            std::copy(fakes_test[j][b + s].image->data(),
                      fakes_test[j][b + s].image->data() + pixels,
                      inputs.data() + s * pixels);
          Tensor logits = trained.model.forward(inputs);
          for (std::size_t s = 0; s < m; ++s)
            if (logits[s * 2 + 1] > logits[s * 2 + 0]) ++correct;
        }
        out.accuracy[i][j] = 100.0 * static_cast<double>(correct) /
                             static_cast<double>(fakes_test[j].size());
      }
    } catch (const std::exception& e) {
      throw ContractViolation("coverage_matrix: family " + std::to_string(family_ids[i]) +
                              ": " + e.what());
    }
  });
  out.check_diagonal();
  return out;
}

/// Trains one real-vs-family binary detector per family and fills the full
/// cross-accuracy matrix. Families run independently on child streams, so the
/// result does not depend on scheduling.
inline CoverageMatrix coverage_matrix(const std::vector<ForgeryFamilySpec>& families,
                                      const CoverageConfig& data,
                                      const DetectorFactory& factory,
                                      const TrainSchedule& schedule, SeededRng rng,
                                      std::size_t threads = 1) {
  require(families.size() >= 2, "coverage_matrix: need at least two families");
  const std::size_t n = families.size();
  std::vector<LabeledSample> reals =
      generate_real_dataset(data.real_seed, Split::Train, data.train_per_family,
                            data.height, data.width, data.depth, 0, threads);
  std::vector<std::vector<LabeledSample>> fakes_train(n), fakes_test(n);
  std::vector<int> ids(n);
  parallel_for(n, threads, [&](std::size_t i) {
    ids[i] = families[i].id;
    fakes_train[i] = generate_family_dataset(families[i], data.real_seed, Split::Train,
                                             data.train_per_family, data.height,
                                             data.width, data.depth, 1);
    fakes_test[i] = generate_family_dataset(families[i], data.real_seed, Split::Test,
                                            data.test_per_family, data.height,
                                            data.width, data.depth, 1);
  });
  return coverage_matrix_from_samples(fakes_train, fakes_test, reals, factory, schedule,
                                      rng, threads, ids);
}

/// Threshold graph over the coverage matrix plus its undirected components.
struct Taxonomy {
  double threshold = 70.0;
  std::vector<std::pair<int, int>> edges;  // directed i -> j
  std::vector<int> component_of;           // per family index
  int num_components = 0;
};

/// Pure function of (matrix, threshold): keeps edge i->j iff accuracy[i][j]
/// is at least the threshold, then takes undirected connected components.
inline Taxonomy build_taxonomy(const CoverageMatrix& matrix, double threshold) {
  require(threshold > 0.0 && threshold < 100.0,
          "build_taxonomy: threshold must lie in (0,100)");
  const std::size_t n = matrix.size();
  Taxonomy tax;
  tax.threshold = threshold;
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || matrix.accuracy[i][j] < threshold) continue;
      tax.edges.emplace_back(static_cast<int>(i), static_cast<int>(j));
      int a = find(static_cast<int>(i)), b = find(static_cast<int>(j));
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  tax.component_of.assign(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    int root = find(static_cast<int>(i));
    if (tax.component_of[root] < 0) tax.component_of[root] = next++;
    tax.component_of[i] = tax.component_of[root];
  }
  tax.num_components = next;
  return tax;
}

/// Benchmark recipe: which families are the majority classes, which one is
/// the few-shot minority, and the split sizes. `seed` drives shot selection.
struct BenchmarkSpec {
  std::vector<int> majority_ids = {0, 1, 2, 3};
  int minority_id = 4;
  std::size_t shots = 50;
  std::uint64_t seed = 99;
  double coverage_threshold = 70.0;
  std::size_t family_train = 10000;
  std::size_t family_test = 500;
  std::size_t real_test = 500;
  std::uint64_t real_seed = 7;
  std::size_t height = 16, width = 16, depth = 3;
};

struct Benchmark {
  Dataset train;         // real + all majority data + exactly N shots
  Dataset train_unseen;  // the same without the shots
  Dataset test;          // full test splits of real, majority and minority
  int minority_label = 0;
  std::size_t num_classes = 0;
  std::vector<int> class_family;  // class label -> family id (-1 for real)
};

namespace detail {

inline const ForgeryFamilySpec& find_family(const std::vector<ForgeryFamilySpec>& roster,
                                            int id) {
  for (const auto& f : roster)
    if (f.id == id) return f;
  throw ContractViolation("benchmark: family id " + std::to_string(id) +
                          " not in the roster");
}

inline std::size_t roster_position(const std::vector<ForgeryFamilySpec>& roster, int id) {
  for (std::size_t i = 0; i < roster.size(); ++i)
    if (roster[i].id == id) return i;
  throw ContractViolation("benchmark: family id " + std::to_string(id) +
                          " not in the roster");
}

}  // namespace detail

/// The rendered splits a benchmark is assembled from. Independent of the shot
/// count, so shot sweeps can share one pool.
struct BenchmarkPool {
  std::vector<LabeledSample> real_train, real_test;
  std::vector<std::vector<LabeledSample>> majority_train, majority_test;
  std::vector<LabeledSample> minority_test;
};

inline void validate_benchmark_spec(const BenchmarkSpec& spec,
                                    const std::vector<ForgeryFamilySpec>& roster,
                                    const CoverageMatrix* coverage) {
  require(!spec.majority_ids.empty(), "benchmark: majority set is empty");
  for (int id : spec.majority_ids) {
    detail::find_family(roster, id);
    require(id != spec.minority_id, "benchmark: minority family " +
                                        std::to_string(spec.minority_id) +
                                        " also appears in the majority set");
  }
  detail::find_family(roster, spec.minority_id);
  std::set<int> unique_major(spec.majority_ids.begin(), spec.majority_ids.end());
  require(unique_major.size() == spec.majority_ids.size(),
          "benchmark: duplicate majority family ids");
  require(spec.shots >= 1, "benchmark: shot count must be positive");
  require(spec.shots <= spec.family_train,
          "benchmark: insufficient minority data for " + std::to_string(spec.shots) +
              " shots");
  require(spec.shots * 100 <= spec.family_train,
          "benchmark: shot count " + std::to_string(spec.shots) +
              " exceeds 1% of the smallest majority class (" +
              std::to_string(spec.family_train) + ")");
  if (coverage) {
    require(coverage->size() == roster.size(),
            "benchmark: coverage matrix does not match the roster");
    std::size_t mpos = detail::roster_position(roster, spec.minority_id);
    for (int id : spec.majority_ids) {
      std::size_t pos = detail::roster_position(roster, id);
      double a = coverage->accuracy[pos][mpos];
      require(a < spec.coverage_threshold,
              "benchmark: minority family " + std::to_string(spec.minority_id) +
                  " is covered by majority family " + std::to_string(id) +
                  " (cross accuracy " + std::to_string(a) + " >= threshold)");
    }
  }
}

inline BenchmarkPool generate_benchmark_pool(const BenchmarkSpec& spec,
                                             const std::vector<ForgeryFamilySpec>& roster,
                                             std::size_t threads = 1) {
  const std::size_t n = spec.majority_ids.size();
  BenchmarkPool pool;
  pool.majority_train.resize(n);
  pool.majority_test.resize(n);
  // Real train volume mirrors the total majority fake volume.
  std::size_t real_train = n * spec.family_train;
  pool.real_train = generate_real_dataset(spec.real_seed, Split::Train, real_train,
                                          spec.height, spec.width, spec.depth, 0, threads);
  pool.real_test = generate_real_dataset(spec.real_seed, Split::Test, spec.real_test,
                                         spec.height, spec.width, spec.depth, 0, threads);
  for (std::size_t i = 0; i < n; ++i) {
    const ForgeryFamilySpec& fam = detail::find_family(roster, spec.majority_ids[i]);
    int label = static_cast<int>(i + 1);
    pool.majority_train[i] =
        generate_family_dataset(fam, spec.real_seed, Split::Train, spec.family_train,
                                spec.height, spec.width, spec.depth, label, threads);
    pool.majority_test[i] =
        generate_family_dataset(fam, spec.real_seed, Split::Test, spec.family_test,
                                spec.height, spec.width, spec.depth, label, threads);
  }
  const ForgeryFamilySpec& minority = detail::find_family(roster, spec.minority_id);
  pool.minority_test = generate_family_dataset(
      minority, spec.real_seed, Split::Test, spec.family_test, spec.height, spec.width,
      spec.depth, static_cast<int>(n + 1), threads);
  return pool;
}

/// Distinct minority-pool indices selected for the shots, seeded by the spec.
inline std::vector<std::size_t> select_shot_indices(const BenchmarkSpec& spec) {
  SeededRng shot_rng(spec.seed);
  std::set<std::size_t> shot_idx;
  while (shot_idx.size() < spec.shots)
    shot_idx.insert(shot_rng.uniform_below(spec.family_train));
  return std::vector<std::size_t>(shot_idx.begin(), shot_idx.end());
}

/// Assembly from an existing pool; only the shots are rendered here.
inline Benchmark assemble_from_pool(const BenchmarkSpec& spec,
                                    const std::vector<ForgeryFamilySpec>& roster,
                                    const BenchmarkPool& pool,
                                    const CoverageMatrix* coverage = nullptr) {
  validate_benchmark_spec(spec, roster, coverage);
  Benchmark bench;
  const std::size_t n = spec.majority_ids.size();
  bench.num_classes = n + 2;
  bench.minority_label = static_cast<int>(n + 1);
  bench.class_family.assign(bench.num_classes, -1);
  for (std::size_t i = 0; i < n; ++i)
    bench.class_family[i + 1] = spec.majority_ids[i];
  bench.class_family[bench.minority_label] = spec.minority_id;

  const ForgeryFamilySpec& minority = detail::find_family(roster, spec.minority_id);
  std::vector<LabeledSample> shots;
  for (std::size_t idx : select_shot_indices(spec))
    shots.push_back(generate_family_sample_at(minority, spec.real_seed, Split::Train, idx,
                                              spec.height, spec.width, spec.depth,
                                              bench.minority_label));

  bench.train_unseen.samples = pool.real_train;
  for (const auto& m : pool.majority_train)
    bench.train_unseen.samples.insert(bench.train_unseen.samples.end(), m.begin(), m.end());
  for (std::size_t c = 0; c <= n; ++c)
    bench.train_unseen.declared_classes.push_back(static_cast<int>(c));

  bench.train.samples = bench.train_unseen.samples;
  bench.train.samples.insert(bench.train.samples.end(), shots.begin(), shots.end());
  bench.train.declared_classes = bench.train_unseen.declared_classes;
  bench.train.declared_classes.push_back(bench.minority_label);

  bench.test.samples = pool.real_test;
  for (const auto& m : pool.majority_test)
    bench.test.samples.insert(bench.test.samples.end(), m.begin(), m.end());
  bench.test.samples.insert(bench.test.samples.end(), pool.minority_test.begin(),
                            pool.minority_test.end());
  bench.test.declared_classes = bench.train.declared_classes;
  return bench;
}

/// Builds the few-shot train/test sets. When a coverage matrix is supplied the
/// minority choice is validated against it: no majority family may cover the
/// minority at the threshold. Shots are drawn without replacement from the
/// minority train pool using the spec seed.
inline Benchmark assemble_benchmark(const BenchmarkSpec& spec,
                                    const std::vector<ForgeryFamilySpec>& roster,
                                    const CoverageMatrix* coverage = nullptr,
                                    std::size_t threads = 1) {
  validate_benchmark_spec(spec, roster, coverage);
  BenchmarkPool pool = generate_benchmark_pool(spec, roster, threads);
  return assemble_from_pool(spec, roster, pool, coverage);
}

}  // namespace gaiforge
