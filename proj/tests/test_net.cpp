#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "gaiforge/net.hpp"
#include "oracles.hpp"

using namespace gaiforge;

namespace {

ArchSpec small_arch(std::size_t hw = 8, std::size_t depth = 2, std::size_t classes = 3) {
  ArchSpec a;
  a.height = hw;
  a.width = hw;
  a.depth = depth;
  a.conv_channels = {4, 6};
  a.hidden = 10;
  a.classes = classes;
  return a;
}

Tensor random_batch(SeededRng& rng, const ArchSpec& a, std::size_t b) {
  Tensor t({b, a.height, a.width, a.depth});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform01();
  return t;
}

}  // namespace

TEST_CASE("forward basics") {
  SECTION("zero parameters give zero logits and a uniform softmax") {
    SeededRng rng(1);
    ArchSpec arch = small_arch(8, 2, 4);
    Classifier c = Classifier::init(arch, rng);
    for (Tensor* p : c.parameters())
      for (std::size_t i = 0; i < p->size(); ++i) (*p)[i] = 0.0;
    Tensor batch = random_batch(rng, arch, 2);
    Tensor logits = c.forward(batch);
    for (std::size_t i = 0; i < logits.size(); ++i) CHECK(logits[i] == 0.0);
    Tensor probs = softmax_rows(logits);
    for (std::size_t i = 0; i < probs.size(); ++i)
      CHECK(probs[i] == Catch::Approx(0.25).margin(1e-15));
  }
  SECTION("duplicated samples give identical logit rows") {
    SeededRng rng(2);
    ArchSpec arch = small_arch();
    Classifier c = Classifier::init(arch, rng);
    Tensor one = random_batch(rng, arch, 1);
    Tensor two({2, arch.height, arch.width, arch.depth});
    std::copy(one.data(), one.data() + one.size(), two.data());
    std::copy(one.data(), one.data() + one.size(), two.data() + one.size());
    Tensor logits = c.forward(two);
    for (std::size_t k = 0; k < arch.classes; ++k)
      CHECK(logits[k] == logits[arch.classes + k]);
  }
  SECTION("forward is pure and deterministic") {
    SeededRng rng(3);
    ArchSpec arch = small_arch();
    Classifier c = Classifier::init(arch, rng);
    Tensor batch = random_batch(rng, arch, 3);
    CHECK(bitwise_equal(c.forward(batch), c.forward(batch)));
    SeededRng rng_a(77), rng_b(77);
    Classifier a = Classifier::init(arch, rng_a);
    Classifier b = Classifier::init(arch, rng_b);
    CHECK(bitwise_equal(a.forward(batch), b.forward(batch)));
  }
  SECTION("batch shape mismatch is a contract violation") {
    SeededRng rng(4);
    ArchSpec arch = small_arch();
    Classifier c = Classifier::init(arch, rng);
    Tensor bad({1, arch.height + 1, arch.width, arch.depth});
    CHECK_THROWS_AS(c.forward(bad), ContractViolation);
  }
}

TEST_CASE("softmax invariants") {
  SeededRng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits({4, 7});
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = rng.uniform(-30.0, 30.0);
    Tensor probs = softmax_rows(logits);
    for (std::size_t b = 0; b < 4; ++b) {
      double sum = 0.0;
      for (std::size_t k = 0; k < 7; ++k) {
        double p = probs[b * 7 + k];
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        sum += p;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("cross entropy values") {
  SECTION("uniform logits, K=4") {
    Tensor logits({1, 4}, {0.3, 0.3, 0.3, 0.3});
    CHECK(cross_entropy(logits, {2}) == Catch::Approx(std::log(4.0)).epsilon(1e-12));
  }
  SECTION("saturated true class") {
    Tensor logits({1, 2}, {50.0, 0.0});
    CHECK(cross_entropy(logits, {0}) < 1e-20);
  }
  SECTION("direct evaluation of [1,2] label 0") {
    Tensor logits({1, 2}, {1.0, 2.0});
    CHECK(cross_entropy(logits, {0}) == Catch::Approx(1.313262).margin(1e-6));
  }
  SECTION("out-of-range label") {
    Tensor logits({1, 2}, {0.0, 0.0});
    CHECK_THROWS_AS(cross_entropy(logits, {2}), ContractViolation);
    CHECK_THROWS_AS(cross_entropy(logits, {-1}), ContractViolation);
  }
  SECTION("soft targets reduce to hard labels on one-hot rows") {
    Tensor logits({2, 3}, {0.1, -0.4, 2.0, 1.0, 0.0, -1.0});
    Tensor targets({2, 3}, {0.0, 1.0, 0.0, 1.0, 0.0, 0.0});
    CHECK(cross_entropy_soft(logits, targets) ==
          Catch::Approx(cross_entropy(logits, {1, 0})).epsilon(1e-12));
  }
}

TEST_CASE("parameter gradients match finite differences") {
  SeededRng rng(6);
  ArchSpec arch = small_arch(8, 2, 3);
  Classifier model = Classifier::init(arch, rng);
  Tensor batch = random_batch(rng, arch, 3);
  std::vector<int> labels = {0, 2, 1};
  BatchGradients grads = model.param_gradients(batch, labels);
  std::vector<Tensor*> params = model.parameters();

  const double step = 1e-5;
  int checked = 0, failed = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t pi = rng.uniform_below(params.size());
    std::size_t ci = rng.uniform_below(params[pi]->size());
    double* coord = params[pi]->data() + ci;
    // Skip coordinates adjacent to a ReLU kink: perturbing them must not flip
    // any preactivation sign.
    double saved = *coord;
    *coord = saved + step;
    double pre_plus = model.min_abs_preactivation(batch);
    *coord = saved - step;
    double pre_minus = model.min_abs_preactivation(batch);
    *coord = saved;
    if (pre_plus < 1e-6 || pre_minus < 1e-6) continue;
    double numeric = oracles::central_difference(
        [&] { return cross_entropy(model.forward(batch), labels); }, coord, step);
    ++checked;
    if (!oracles::gradient_matches(grads.params[pi][ci], numeric, 1e-4, 1e-8)) ++failed;
  }
  INFO("checked " << checked << " coordinates");
  CHECK(checked > 50);
  CHECK(failed == 0);
}

TEST_CASE("gradient of a duplicated batch") {
  SeededRng rng(7);
  ArchSpec arch = small_arch(8, 1, 3);
  Classifier model = Classifier::init(arch, rng);
  Tensor one = random_batch(rng, arch, 2);
  std::vector<int> labels = {1, 2};
  Tensor two({4, arch.height, arch.width, arch.depth});
  std::copy(one.data(), one.data() + one.size(), two.data());
  std::copy(one.data(), one.data() + one.size(), two.data() + one.size());
  std::vector<int> labels2 = {1, 2, 1, 2};
  BatchGradients g1 = model.param_gradients(one, labels);
  BatchGradients g2 = model.param_gradients(two, labels2);
  for (std::size_t pi = 0; pi < g1.params.size(); ++pi)
    for (std::size_t i = 0; i < g1.params[pi].size(); ++i) {
      double a = g1.params[pi][i], b = g2.params[pi][i];
      CHECK(std::abs(a - b) <= 1e-12 * std::max({std::abs(a), std::abs(b), 1e-6}));
    }
}

TEST_CASE("input gradients") {
  SECTION("linear model: logit gradient equals the weight map") {
    ArchSpec arch;
    arch.height = 3;
    arch.width = 3;
    arch.depth = 1;
    arch.conv_channels = {};
    arch.hidden = 0;
    arch.classes = 2;
    SeededRng rng(8);
    Classifier model = Classifier::init(arch, rng);
    Tensor x({3, 3, 1});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform01();
    Tensor grad = model.input_gradient(InputLossSpec::logit_of(1), x);
    const Tensor& w = *model.parameters()[0];  // [9, 2]
    for (std::size_t i = 0; i < 9; ++i) CHECK(grad[i] == w[i * 2 + 1]);
  }
  SECTION("matches finite differences on random pixels") {
    SeededRng rng(9);
    ArchSpec arch = small_arch(8, 2, 3);
    Classifier model = Classifier::init(arch, rng);
    Tensor x({arch.height, arch.width, arch.depth});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform01();

    for (InputLossSpec spec : {InputLossSpec::cross_entropy_to(2),
                               InputLossSpec::logit_of(0),
                               InputLossSpec::softmax_prob_of(1)}) {
      Tensor grad = model.input_gradient(spec, x);
      int failed = 0, checked = 0;
      for (int trial = 0; trial < 100; ++trial) {
        std::size_t i = rng.uniform_below(x.size());
        double saved = x[i];
        x[i] = saved + 1e-5;
        double pre_plus = model.min_abs_preactivation(batch_of_one(x, arch));
        x[i] = saved - 1e-5;
        double pre_minus = model.min_abs_preactivation(batch_of_one(x, arch));
        x[i] = saved;
        if (pre_plus < 1e-6 || pre_minus < 1e-6) continue;
        double numeric = oracles::central_difference(
            [&] { return model.input_loss(spec, x); }, x.data() + i, 1e-5);
        ++checked;
        if (!oracles::gradient_matches(grad[i], numeric, 1e-4, 1e-8)) ++failed;
      }
      INFO("loss kind " << static_cast<int>(spec.kind) << ": checked " << checked);
      CHECK(checked > 50);
      CHECK(failed == 0);
    }
  }
  SECTION("a fully dead ReLU region has exactly zero gradient") {
    ArchSpec arch;
    arch.height = 6;
    arch.width = 6;
    arch.depth = 1;
    arch.conv_channels = {3};
    arch.hidden = 5;
    arch.classes = 2;
    SeededRng rng(10);
    Classifier model = Classifier::init(arch, rng);
    // Large negative conv biases kill every conv preactivation.
    Tensor* conv_bias = model.parameters()[1];
    for (std::size_t i = 0; i < conv_bias->size(); ++i) (*conv_bias)[i] = -100.0;
    Tensor x({6, 6, 1});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform01();
    Tensor grad = model.input_gradient(InputLossSpec::cross_entropy_to(1), x);
    for (std::size_t i = 0; i < grad.size(); ++i) CHECK(grad[i] == 0.0);
  }
}

TEST_CASE("checkpoint round trip") {
  SeededRng rng(11);
  ArchSpec arch = small_arch(8, 3, 5);
  Classifier model = Classifier::init(arch, rng);
  std::stringstream buf;
  model.save(buf);
  Classifier back = Classifier::load(buf);
  CHECK(back.param_checksum() == model.param_checksum());
  Tensor batch = random_batch(rng, arch, 2);
  CHECK(bitwise_equal(back.forward(batch), model.forward(batch)));
  std::stringstream bad;
  bad << "??????";
  CHECK_THROWS_AS(Classifier::load(bad), ContractViolation);
}
