#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "gaiforge/data.hpp"
#include "gaiforge/train.hpp"

using namespace gaiforge;

namespace {

Dataset toy_dataset(const std::vector<std::pair<int, std::size_t>>& class_sizes,
                    std::size_t hw = 4, std::size_t depth = 1) {
  Dataset ds;
  SeededRng rng(42);
  std::uint64_t id = 0;
  for (const auto& [label, count] : class_sizes) {
    ds.declared_classes.push_back(label);
    for (std::size_t i = 0; i < count; ++i) {
      Tensor img({hw, hw, depth});
      for (std::size_t p = 0; p < img.size(); ++p) img[p] = rng.uniform01();
      ds.samples.push_back(make_sample(std::move(img), label, id++));
    }
  }
  return ds;
}

ArchSpec toy_arch(std::size_t classes, std::size_t hw = 4, std::size_t depth = 1) {
  ArchSpec a;
  a.height = hw;
  a.width = hw;
  a.depth = depth;
  a.conv_channels = {4};
  a.hidden = 8;
  a.classes = classes;
  return a;
}

}  // namespace

TEST_CASE("samplers") {
  SECTION("class-balanced frequencies over {1000, 50}") {
    Dataset ds = toy_dataset({{0, 1000}, {1, 50}});
    SamplerSpec spec{SampleMode::ClassBalanced, 1, -1};
    SeededRng rng(1);
    std::vector<LabeledSample> draws = sample_batch(ds, spec, rng, 10000);
    double minority = 0;
    for (const auto& s : draws) minority += s.label == 1 ? 1 : 0;
    double freq = minority / 10000.0;
    CHECK(std::abs(freq - 0.5) <= 3.0 * std::sqrt(0.25 / 10000.0));
  }
  SECTION("instance-balanced frequencies over {1000, 50}") {
    Dataset ds = toy_dataset({{0, 1000}, {1, 50}});
    SamplerSpec spec{SampleMode::InstanceBalanced, 1, -1};
    SeededRng rng(2);
    std::vector<LabeledSample> draws = sample_batch(ds, spec, rng, 10000);
    double minority = 0;
    for (const auto& s : draws) minority += s.label == 1 ? 1 : 0;
    double p = 50.0 / 1050.0;
    CHECK(std::abs(minority / 10000.0 - p) <= 3.0 * std::sqrt(p * (1 - p) / 10000.0));
  }
  SECTION("single-class dataset: both modes draw that class") {
    Dataset ds = toy_dataset({{3, 20}});
    SeededRng rng(3);
    for (SampleMode mode : {SampleMode::InstanceBalanced, SampleMode::ClassBalanced}) {
      std::vector<LabeledSample> draws = sample_batch(ds, {mode, 1, -1}, rng, 100);
      for (const auto& s : draws) CHECK(s.label == 3);
    }
  }
  SECTION("class-balanced counts stay within the 4-sigma bound") {
    Dataset ds = toy_dataset({{0, 300}, {1, 60}, {2, 11}, {3, 900}});
    SamplerSpec spec{SampleMode::ClassBalanced, 1, -1};
    SeededRng rng(4);
    const std::size_t n = 20000;
    std::map<int, double> counts;
    for (const auto& s : sample_batch(ds, spec, rng, n)) counts[s.label] += 1;
    const double k = 4.0;
    double expect = static_cast<double>(n) / k;
    double bound = 4.0 * std::sqrt(static_cast<double>(n) * (1.0 / k) * (1.0 - 1.0 / k));
    for (int c = 0; c < 4; ++c) CHECK(std::abs(counts[c] - expect) <= bound);
  }
  SECTION("empty declared class under CB is a contract violation") {
    Dataset ds = toy_dataset({{0, 5}});
    ds.declared_classes.push_back(1);  // declared but absent
    SamplerSpec spec{SampleMode::ClassBalanced, 1, -1};
    SeededRng rng(5);
    CHECK_THROWS_AS(sample_batch(ds, spec, rng, 4), ContractViolation);
  }
  SECTION("duplication factor raises instance-balanced minority frequency") {
    Dataset ds = toy_dataset({{0, 900}, {1, 100}});
    SamplerSpec spec{SampleMode::InstanceBalanced, 9, 1};
    SeededRng rng(6);
    std::vector<LabeledSample> draws = sample_batch(ds, spec, rng, 10000);
    double minority = 0;
    for (const auto& s : draws) minority += s.label == 1 ? 1 : 0;
    // duplicated multiset: 900 + 900 virtual copies -> p = 0.5
    CHECK(std::abs(minority / 10000.0 - 0.5) <= 3.0 * std::sqrt(0.25 / 10000.0));
  }
}

TEST_CASE("learning rate schedule") {
  TrainSchedule s;
  s.iterations = 300;
  s.base_lr = 0.4;
  s.warmup = 50;
  s.milestones = {100, 200};
  s.decay = 0.1;
  SECTION("linear warmup is exact") {
    for (std::size_t t = 0; t < s.warmup; ++t)
      CHECK(learning_rate_at(s, t) == s.base_lr * static_cast<double>(t + 1) / 50.0);
  }
  SECTION("milestones decay exactly") {
    CHECK(learning_rate_at(s, 99) == 0.4);
    CHECK(learning_rate_at(s, 100) == 0.4 * 0.1);
    CHECK(learning_rate_at(s, 199) == 0.4 * 0.1);
    CHECK(learning_rate_at(s, 200) == 0.4 * 0.1 * 0.1);
  }
  SECTION("validation rejects a disordered schedule") {
    TrainSchedule bad = s;
    bad.warmup = 150;
    CHECK_THROWS_AS(bad.validate(), ContractViolation);
    bad = s;
    bad.milestones = {250, 350};
    CHECK_THROWS_AS(bad.validate(), ContractViolation);
    bad = s;
    bad.milestones = {200, 100};
    CHECK_THROWS_AS(bad.validate(), ContractViolation);
  }
}

TEST_CASE("train loop") {
  Dataset ds = toy_dataset({{0, 30}, {1, 30}, {2, 10}});
  ArchSpec arch = toy_arch(3);
  SeededRng init_rng(7);
  Classifier start = Classifier::init(arch, init_rng);

  TrainSchedule sched;
  sched.iterations = 40;
  sched.base_lr = 0.05;
  sched.warmup = 5;
  sched.milestones = {20, 30};
  sched.batch_size = 8;

  SECTION("zero iterations returns the model bitwise") {
    TrainSchedule zero = sched;
    zero.iterations = 0;
    MethodSpec m;
    m.method = Method::CB;
    TrainResult r = train(start, ds, zero, m, SeededRng(11));
    CHECK(r.model.param_checksum() == start.param_checksum());
    CHECK(r.history.empty());
  }
  SECTION("fixed seed runs are bitwise reproducible") {
    MethodSpec m;
    m.method = Method::CB;
    TrainResult a = train(start, ds, sched, m, SeededRng(12));
    TrainResult b = train(start, ds, sched, m, SeededRng(12));
    CHECK(a.model.param_checksum() == b.model.param_checksum());
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i)
      CHECK(a.history[i].loss == b.history[i].loss);
  }
  SECTION("unseen training rejects minority data") {
    MethodSpec m;
    m.method = Method::Unseen;
    m.gai.minority_label = 2;
    CHECK_THROWS_AS(train(start, ds, sched, m, SeededRng(13)), ContractViolation);
  }
  SECTION("guided methods require a teacher") {
    MethodSpec m;
    m.method = Method::Gai;
    m.gai.minority_label = 2;
    CHECK_THROWS_AS(train(start, ds, sched, m, SeededRng(14)), ContractViolation);
  }
  SECTION("teacher parameters are never mutated") {
    SeededRng t_rng(15);
    Classifier teacher = Classifier::init(arch, t_rng);
    std::uint64_t before = teacher.param_checksum();
    MethodSpec m;
    m.method = Method::Gai;
    m.gai = GaiConfig{};
    m.gai.steps = 2;
    m.gai.minority_label = 2;
    m.teacher = &teacher;
    TrainResult r = train(start, ds, sched, m, SeededRng(16));
    CHECK(teacher.param_checksum() == before);
    CHECK(r.model.param_checksum() != start.param_checksum());
  }
  SECTION("mixup and no-teacher variants run without a teacher") {
    for (Method method : {Method::Mixup, Method::NoTeacher}) {
      MethodSpec m;
      m.method = method;
      m.gai.minority_label = 2;
      TrainResult r = train(start, ds, sched, m, SeededRng(17));
      CHECK(std::isfinite(r.history.back().loss));
    }
  }
  SECTION("a non-finite loss aborts with a diagnostic snapshot") {
    TrainSchedule explode = sched;
    explode.base_lr = 1e18;
    explode.warmup = 0;
    explode.milestones = {};
    explode.iterations = 30;
    MethodSpec m;
    m.method = Method::CB;
    try {
      train(start, ds, explode, m, SeededRng(18));
      FAIL("expected a non-finite loss abort");
    } catch (const ContractViolation& e) {
      std::string msg = e.what();
      CHECK(msg.find("non-finite loss") != std::string::npos);
      CHECK(msg.find("iteration") != std::string::npos);
      CHECK(msg.find("lr=") != std::string::npos);
      CHECK(msg.find("labels") != std::string::npos);
    }
  }
  SECTION("history is recorded every 10 iterations") {
    MethodSpec m;
    m.method = Method::CB;
    TrainResult r = train(start, ds, sched, m, SeededRng(19));
    REQUIRE(r.history.size() == 4);  // t = 0, 10, 20, 30
    CHECK(r.history[0].iteration == 0);
    CHECK(r.history[3].iteration == 30);
    CHECK(r.history[1].lr == learning_rate_at(sched, 10));
  }
}

TEST_CASE("finetune_from_base") {
  Dataset ds = toy_dataset({{0, 40}, {1, 40}});
  ArchSpec arch = toy_arch(2);
  SeededRng rng(20);
  Classifier base = Classifier::init(arch, rng);
  TrainSchedule zero;
  zero.iterations = 0;
  MethodSpec m;
  m.method = Method::CB;
  TrainResult r = finetune_from_base(base, ds, zero, m, SeededRng(21));
  CHECK(r.model.param_checksum() == base.param_checksum());
}

TEST_CASE("training separates two easy classes") {
  // Class 1 images carry a strong constant offset; a short run must learn it.
  Dataset ds;
  ds.declared_classes = {0, 1};
  SeededRng rng(22);
  for (int i = 0; i < 60; ++i) {
    Tensor img({4, 4, 1});
    int label = i % 2;
    for (std::size_t p = 0; p < img.size(); ++p)
      img[p] = 0.3 * rng.uniform01() + (label ? 0.6 : 0.0);
    ds.samples.push_back(make_sample(std::move(img), label, i));
  }
  ArchSpec arch = toy_arch(2);
  SeededRng init_rng(23);
  Classifier start = Classifier::init(arch, init_rng);
  TrainSchedule sched;
  sched.iterations = 150;
  sched.base_lr = 0.05;
  sched.warmup = 10;
  sched.milestones = {100};
  sched.batch_size = 16;
  MethodSpec m;
  m.method = Method::CB;
  TrainResult r = train(start, ds, sched, m, SeededRng(24));
  std::size_t correct = 0;
  for (const auto& s : ds.samples) {
    Tensor logits = r.model.forward(batch_of_one(*s.image, arch));
    int pred = logits[1] > logits[0] ? 1 : 0;
    correct += pred == s.label;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(ds.samples.size()) > 0.95);
}
