#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "gaiforge/bench.hpp"
#include "gaiforge/data.hpp"
#include "gaiforge/metrics.hpp"
#include "oracles.hpp"

using namespace gaiforge;

namespace {

ForgeryFamilySpec family_of(ArtifactKind kind, std::vector<double> params, int id = 0,
                            int group = 0) {
  return {id, kind, std::move(params), group};
}

}  // namespace

TEST_CASE("family generation") {
  SECTION("same spec and seed render bitwise-identical datasets") {
    ForgeryFamilySpec fam = family_of(ArtifactKind::PeriodicPattern, {4.0, 1.0, 0.15}, 3);
    auto a = generate_family_dataset(fam, 7, Split::Train, 6, 8, 8, 3, 1);
    auto b = generate_family_dataset(fam, 7, Split::Train, 6, 8, 8, 3, 1);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(bitwise_equal(*a[i].image, *b[i].image));
      CHECK(a[i].id == b[i].id);
    }
  }
  SECTION("zero amplitude reproduces the base image for every kind") {
    std::vector<ForgeryFamilySpec> null_specs = {
        family_of(ArtifactKind::PeriodicPattern, {4.0, 1.0, 0.0}, 0),
        family_of(ArtifactKind::SeamBlend, {0.0, 0.0, 2.0}, 1),
        family_of(ArtifactKind::ChannelShift, {0.0, 2.0, 0.0, 0.0}, 2),
        family_of(ArtifactKind::LocalWarp, {0.0, 0.3}, 3),
    };
    auto reals = generate_real_dataset(7, Split::Train, 4, 8, 8, 3);
    for (const auto& spec : null_specs) {
      auto fakes = generate_family_dataset(spec, 7, Split::Train, 4, 8, 8, 3, 1);
      for (std::size_t i = 0; i < fakes.size(); ++i)
        for (std::size_t p = 0; p < fakes[i].image->size(); ++p)
          CHECK((*fakes[i].image)[p] == (*reals[i].image)[p]);
    }
  }
  SECTION("nonzero amplitude changes the image") {
    ForgeryFamilySpec fam = family_of(ArtifactKind::ChannelShift, {0.0, 2.0, 0.0, 0.9}, 4);
    auto reals = generate_real_dataset(7, Split::Train, 2, 8, 8, 3);
    auto fakes = generate_family_dataset(fam, 7, Split::Train, 2, 8, 8, 3, 1);
    CHECK_FALSE(bitwise_equal(*fakes[0].image, *reals[0].image));
  }
  SECTION("pixels stay in [0,1]") {
    for (const auto& fam : default_roster()) {
      auto fakes = generate_family_dataset(fam, 9, Split::Train, 3, 16, 16, 3, 1);
      for (const auto& s : fakes) {
        CHECK(min_element(*s.image) >= 0.0);
        CHECK(max_element(*s.image) <= 1.0);
      }
    }
  }
  SECTION("train and test streams never share ids") {
    ForgeryFamilySpec fam = default_roster()[0];
    auto train = generate_family_dataset(fam, 7, Split::Train, 50, 8, 8, 3, 1);
    auto test = generate_family_dataset(fam, 7, Split::Test, 50, 8, 8, 3, 1);
    std::set<std::uint64_t> train_ids, test_ids;
    for (const auto& s : train) train_ids.insert(s.id);
    for (const auto& s : test) test_ids.insert(s.id);
    CHECK(train_ids.size() == 50);
    for (std::uint64_t id : test_ids) CHECK(train_ids.count(id) == 0);
  }
}

TEST_CASE("taxonomy") {
  SECTION("all-zero matrix gives singletons") {
    CoverageMatrix m;
    m.accuracy.assign(4, std::vector<double>(4, 0.0));
    Taxonomy t = build_taxonomy(m, 70.0);
    CHECK(t.edges.empty());
    CHECK(t.num_components == 4);
  }
  SECTION("all-hundred matrix gives one component") {
    CoverageMatrix m;
    m.accuracy.assign(4, std::vector<double>(4, 100.0));
    Taxonomy t = build_taxonomy(m, 70.0);
    CHECK(t.num_components == 1);
  }
  SECTION("hand-applied rule on a 3-family matrix") {
    CoverageMatrix m;
    m.accuracy = {{99, 80, 10}, {75, 99, 10}, {5, 5, 99}};
    Taxonomy t = build_taxonomy(m, 70.0);
    std::set<std::pair<int, int>> edges(t.edges.begin(), t.edges.end());
    CHECK(edges == std::set<std::pair<int, int>>{{0, 1}, {1, 0}});
    CHECK(t.num_components == 2);
    CHECK(t.component_of[0] == t.component_of[1]);
    CHECK(t.component_of[2] != t.component_of[0]);
  }
  SECTION("threshold must be a percentage strictly inside (0,100)") {
    CoverageMatrix m;
    m.accuracy.assign(2, std::vector<double>(2, 50.0));
    CHECK_THROWS_AS(build_taxonomy(m, 0.0), ContractViolation);
    CHECK_THROWS_AS(build_taxonomy(m, 100.0), ContractViolation);
  }
  SECTION("pure function of matrix and threshold") {
    CoverageMatrix m;
    m.accuracy = {{90, 71}, {69, 90}};
    Taxonomy a = build_taxonomy(m, 70.0);
    Taxonomy b = build_taxonomy(m, 70.0);
    CHECK(a.edges == b.edges);
    CHECK(a.component_of == b.component_of);
    // edges respect the predicate exactly, boundary included
    CHECK(std::set<std::pair<int, int>>(a.edges.begin(), a.edges.end()) ==
          std::set<std::pair<int, int>>{{0, 1}});
  }
}

TEST_CASE("benchmark assembly") {
  std::vector<ForgeryFamilySpec> roster = default_roster();
  BenchmarkSpec spec;
  spec.majority_ids = {0, 1, 2, 3};
  spec.minority_id = 4;
  spec.shots = 10;
  spec.family_train = 1000;
  spec.family_test = 40;
  spec.real_test = 40;
  spec.height = 8;
  spec.width = 8;
  spec.depth = 3;

  SECTION("shot count and composition") {
    Benchmark b = assemble_benchmark(spec, roster);
    CHECK(b.num_classes == 6);
    CHECK(b.minority_label == 5);
    std::size_t minority_count = 0;
    for (const auto& s : b.train.samples) minority_count += s.label == 5;
    CHECK(minority_count == 10);
    std::size_t real_count = 0;
    for (const auto& s : b.train.samples) real_count += s.label == 0;
    CHECK(real_count == 4 * 1000);  // real volume mirrors majority volume
    CHECK(b.test.samples.size() == 40 + 4 * 40 + 40);
  }
  SECTION("the unseen view drops exactly the shots") {
    Benchmark b = assemble_benchmark(spec, roster);
    CHECK(b.train_unseen.samples.size() + 10 == b.train.samples.size());
    for (const auto& s : b.train_unseen.samples) CHECK(s.label != b.minority_label);
    for (std::size_t i = 0; i < b.train_unseen.samples.size(); ++i)
      CHECK(b.train_unseen.samples[i].image.get() == b.train.samples[i].image.get());
    CHECK(b.train_unseen.declared_classes ==
          std::vector<int>{0, 1, 2, 3, 4});
  }
  SECTION("train and test ids are disjoint") {
    Benchmark b = assemble_benchmark(spec, roster);
    std::set<std::uint64_t> train_ids;
    for (const auto& s : b.train.samples) train_ids.insert(s.id);
    for (const auto& s : b.test.samples) CHECK(train_ids.count(s.id) == 0);
  }
  SECTION("a covered minority is rejected against the coverage matrix") {
    CoverageMatrix cov;
    cov.accuracy.assign(6, std::vector<double>(6, 10.0));
    cov.accuracy[1][4] = 83.0;  // majority family 1 covers the minority
    CHECK_THROWS_AS(assemble_benchmark(spec, roster, &cov), ContractViolation);
    cov.accuracy[1][4] = 60.0;
    CHECK_NOTHROW(assemble_benchmark(spec, roster, &cov));
  }
  SECTION("shot-count guardrails") {
    BenchmarkSpec bad = spec;
    bad.shots = 11;  // > 1% of 1000
    CHECK_THROWS_AS(assemble_benchmark(bad, roster), ContractViolation);
    bad.shots = 2000;  // more than the pool holds
    CHECK_THROWS_AS(assemble_benchmark(bad, roster), ContractViolation);
    bad = spec;
    bad.majority_ids = {0, 1, 2, 4};
    bad.minority_id = 4;
    CHECK_THROWS_AS(assemble_benchmark(bad, roster), ContractViolation);
  }
  SECTION("shot selection is deterministic per spec seed") {
    std::vector<std::size_t> a = select_shot_indices(spec);
    std::vector<std::size_t> b = select_shot_indices(spec);
    CHECK(a == b);
    BenchmarkSpec other = spec;
    other.seed += 1;
    CHECK(select_shot_indices(other) != a);
  }
}

TEST_CASE("binary scores and metrics") {
  SECTION("perfectly separated scores") {
    std::vector<double> fakes(10, 0.9), reals(10, 0.1);
    CHECK(auc_trapezoid(fakes, reals) == 1.0);
    auto [tpr, thr] = tpr_at_fpr(fakes, reals, 0.0);
    CHECK(tpr == 100.0);
  }
  SECTION("worked example: TPR at FPR 0 and pairwise AUC") {
    std::vector<double> reals = {0.1, 0.4};
    std::vector<double> minors = {0.3, 0.9};
    auto [tpr, thr] = tpr_at_fpr(minors, reals, 0.0);
    CHECK(tpr == 50.0);
    CHECK(thr > 0.4);
    CHECK(auc_trapezoid(minors, reals) == 0.75);
  }
  SECTION("trapezoid AUC equals the pairwise oracle on random score sets") {
    SeededRng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
      std::size_t nf = 1 + rng.uniform_below(100);
      std::size_t nr = 1 + rng.uniform_below(100);
      std::vector<double> fakes(nf), reals(nr);
      // quantized scores force ties
      for (auto& v : fakes) v = rng.uniform_below(20) / 19.0;
      for (auto& v : reals) v = rng.uniform_below(20) / 19.0;
      double lhs = auc_trapezoid(fakes, reals);
      double rhs = oracles::pairwise_auc(fakes, reals);
      CHECK(std::abs(lhs - rhs) <= 1e-12);
    }
  }
  SECTION("reversing scores flips the AUC when there are no ties") {
    SeededRng rng(2);
    std::set<double> used;
    std::vector<double> fakes, reals;
    while (fakes.size() < 30) {
      double v = rng.uniform01();
      if (used.insert(v).second) fakes.push_back(v);
    }
    while (reals.size() < 40) {
      double v = rng.uniform01();
      if (used.insert(v).second) reals.push_back(v);
    }
    std::vector<double> neg_f, neg_r;
    for (double v : fakes) neg_f.push_back(-v);
    for (double v : reals) neg_r.push_back(-v);
    CHECK(auc_trapezoid(neg_f, neg_r) ==
          Catch::Approx(1.0 - auc_trapezoid(fakes, reals)).epsilon(1e-14));
  }
  SECTION("tpr threshold picks the smallest feasible score") {
    std::vector<double> reals = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<double> minors = {0.55, 0.65, 0.95};
    auto [tpr, thr] = tpr_at_fpr(minors, reals, 0.2);
    // two reals (0.9, 1.0) may score >= threshold; smallest such score is 0.9
    CHECK(thr == 0.9);
    CHECK(tpr == Catch::Approx(100.0 / 3.0));
  }
}

TEST_CASE("evaluate and aggregate") {
  // A stub "model" is impractical here; use a tiny trained one end to end.
  std::vector<ForgeryFamilySpec> roster = {
      family_of(ArtifactKind::PeriodicPattern, {4.0, 1.0, 0.16}, 0, 0),
      family_of(ArtifactKind::ChannelShift, {0.0, 2.0, 0.0, 0.9}, 1, 1),
  };
  BenchmarkSpec spec;
  spec.majority_ids = {0};
  spec.minority_id = 1;
  spec.shots = 2;
  spec.family_train = 200;
  spec.family_test = 30;
  spec.real_test = 30;
  spec.height = 8;
  spec.width = 8;
  spec.depth = 3;
  Benchmark bench = assemble_benchmark(spec, roster);

  ArchSpec arch;
  arch.height = 8;
  arch.width = 8;
  arch.depth = 3;
  arch.conv_channels = {4};
  arch.hidden = 8;
  arch.classes = bench.num_classes;
  SeededRng rng(3);
  Classifier model = Classifier::init(arch, rng);

  SECTION("binary mass conservation") {
    BinaryScores scores = binary_scores(model, bench.test, bench.minority_label);
    const std::size_t k = arch.classes;
    for (std::size_t i = 0; i < std::min<std::size_t>(20, bench.test.samples.size());
         ++i) {
      Tensor probs = softmax_rows(
          model.forward(batch_of_one(*bench.test.samples[i].image, arch)));
      double fake = 0.0;
      for (std::size_t c = 1; c < k; ++c) fake += probs[c];
      CHECK(std::abs(scores.score[i] - fake) <= 1e-15);
      CHECK(std::abs(scores.score[i] - (1.0 - probs[0])) <= 1e-12);
    }
  }
  SECTION("report fields and reliability flag") {
    MetricsReport rep = evaluate(model, bench.test, bench.minority_label, 0.01);
    CHECK(rep.n_real == 30);
    CHECK(rep.n_fake == 60);
    CHECK(rep.n_minor == 30);
    CHECK_FALSE(rep.tpr_reliable);  // 30 reals cannot resolve FPR 1%
    MetricsReport rep2 = evaluate(model, bench.test, bench.minority_label, 0.1);
    CHECK(rep2.tpr_reliable);
    CHECK(rep.acc_minor.mean >= 0.0);
    CHECK(rep.acc_minor.mean <= 100.0);
    CHECK(rep.auc.mean >= 0.0);
    CHECK(rep.auc.mean <= 1.0);
  }
  SECTION("aggregation: mean, population std, symmetry") {
    MetricsReport a = evaluate(model, bench.test, bench.minority_label, 0.1);
    MetricsReport b = a, c = a;
    a.acc_minor = {78.0, 0.0, {78.0}};
    b.acc_minor = {79.0, 0.0, {79.0}};
    c.acc_minor = {80.0, 0.0, {80.0}};
    MetricsReport agg = aggregate_runs({a, b, c});
    CHECK(agg.acc_minor.mean == Catch::Approx(79.0).epsilon(1e-15));
    CHECK(agg.acc_minor.stddev == Catch::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
    MetricsReport agg2 = aggregate_runs({c, a, b});
    CHECK(agg2.acc_minor.mean == agg.acc_minor.mean);
    CHECK(agg2.acc_minor.stddev == agg.acc_minor.stddev);
    CHECK(aggregate_runs({a}).acc_minor.stddev == 0.0);
  }
  SECTION("mismatched operating points are rejected") {
    MetricsReport a = evaluate(model, bench.test, bench.minority_label, 0.1);
    MetricsReport b = evaluate(model, bench.test, bench.minority_label, 0.2);
    CHECK_THROWS_AS(aggregate_runs({a, b}), ContractViolation);
  }
}

TEST_CASE("coverage matrix on two distinguishable families") {
  std::vector<ForgeryFamilySpec> families = {
      family_of(ArtifactKind::PeriodicPattern, {4.0, 1.0, 0.16}, 0, 0),
      family_of(ArtifactKind::PeriodicPattern, {4.0, 1.0, 0.16}, 1, 0),
  };
  CoverageConfig data;
  data.train_per_family = 150;
  data.test_per_family = 60;
  data.real_seed = 7;
  data.height = 8;
  data.width = 8;
  data.depth = 3;
  ArchSpec arch;
  arch.height = 8;
  arch.width = 8;
  arch.depth = 3;
  arch.conv_channels = {6};
  arch.hidden = 12;
  arch.classes = 2;
  DetectorFactory factory = [arch](SeededRng& rng) { return Classifier::init(arch, rng); };
  TrainSchedule sched;
  sched.iterations = 300;
  sched.base_lr = 0.05;
  sched.warmup = 20;
  sched.milestones = {200};
  sched.batch_size = 16;
  CoverageMatrix m = coverage_matrix(families, data, factory, sched, SeededRng(5), 2);
  REQUIRE(m.size() == 2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(std::isfinite(m.accuracy[i][j]));
      CHECK(m.accuracy[i][j] >= 0.0);
      CHECK(m.accuracy[i][j] <= 100.0);
    }
  // identical family specs must transfer almost perfectly
  CHECK(m.accuracy[0][0] >= 90.0);
  CHECK(std::abs(m.accuracy[0][1] - m.accuracy[0][0]) <= 5.0);
}
