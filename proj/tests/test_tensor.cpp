#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <sstream>

#include "gaiforge/rng.hpp"
#include "gaiforge/tensor.hpp"

using namespace gaiforge;

namespace {

Tensor random_tensor(SeededRng& rng, std::vector<std::size_t> shape, double lo = -2.0,
                     double hi = 2.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("elementwise operations") {
  Tensor a({2}, {1.0, 2.0});
  Tensor b({2}, {3.0, 4.0});

  SECTION("mul matches the definition") {
    Tensor r = mul(a, b);
    CHECK(r[0] == 3.0);
    CHECK(r[1] == 8.0);
  }
  SECTION("additive identity") {
    SeededRng rng(1);
    Tensor x = random_tensor(rng, {3, 4});
    Tensor r = add(x, zeros_like(x));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(r[i] == x[i]);
  }
  SECTION("self-cancellation") {
    Tensor x({1}, {0.75});
    CHECK(sub(x, x)[0] == 0.0);
  }
  SECTION("shape mismatch names both shapes") {
    Tensor c({3});
    try {
      add(a, c);
      FAIL("expected ContractViolation");
    } catch (const ContractViolation& e) {
      std::string msg = e.what();
      CHECK(msg.find("[2]") != std::string::npos);
      CHECK(msg.find("[3]") != std::string::npos);
    }
  }
  SECTION("addition is commutative bitwise") {
    SeededRng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor x = random_tensor(rng, {5, 3});
      Tensor y = random_tensor(rng, {5, 3});
      CHECK(bitwise_equal(add(x, y), add(y, x)));
    }
  }
}

TEST_CASE("clamp01") {
  SECTION("direct clamp") {
    Tensor t({3}, {1.3, -0.2, 0.5});
    Tensor r = clamp01(t);
    CHECK(r[0] == 1.0);
    CHECK(r[1] == 0.0);
    CHECK(r[2] == 0.5);
  }
  SECTION("fixed points") {
    Tensor z({4});
    CHECK(bitwise_equal(clamp01(z), z));
    Tensor interior({1}, {0.999999});
    CHECK(clamp01(interior)[0] == 0.999999);
  }
  SECTION("idempotent bitwise") {
    SeededRng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor x = random_tensor(rng, {17}, -3.0, 3.0);
      Tensor once = clamp01(x);
      CHECK(bitwise_equal(clamp01(once), once));
    }
  }
}

TEST_CASE("l2_norm") {
  CHECK(l2_norm(Tensor({2}, {3.0, 4.0})) == 5.0);
  CHECK(l2_norm(Tensor({8})) == 0.0);
  CHECK(l2_norm(Tensor({4}, {1.0, 1.0, 1.0, 1.0})) == 2.0);

  SECTION("absolute homogeneity within 1e-12 relative") {
    SeededRng rng(4);
    for (int trial = 0; trial < 30; ++trial) {
      Tensor x = random_tensor(rng, {9});
      double c = rng.uniform(-1000.0, 1000.0);
      double lhs = l2_norm(scale(x, c));
      double rhs = std::abs(c) * l2_norm(x);
      CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(std::abs(lhs), std::abs(rhs)));
    }
  }
}

TEST_CASE("seeded rng") {
  SECTION("same seed, same draws, bitwise") {
    SeededRng a(123456), b(123456);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  }
  SECTION("child streams are independent of parent advancement") {
    SeededRng a(9);
    SeededRng child_before = a.child(7);
    a.next_u64();
    SeededRng child_after = a.child(7);
    CHECK(child_before.state() != child_after.state());  // child keys off state
    SeededRng b(9);
    CHECK(b.child(7).state() == child_before.state());
  }
  SECTION("bernoulli boundaries") {
    SeededRng rng(5);
    for (int i = 0; i < 200; ++i) {
      CHECK(rng.bernoulli(1.0) == 1);
      CHECK(rng.bernoulli(0.0) == 0);
    }
  }
  SECTION("bernoulli frequency within the binomial bound") {
    SeededRng rng(6);
    int ones = 0;
    for (int i = 0; i < 10000; ++i) ones += rng.bernoulli(0.99);
    double mean = ones / 10000.0;
    CHECK(mean >= 0.985);
    CHECK(mean <= 0.995);
  }
  SECTION("p outside [0,1] is rejected") {
    SeededRng rng(7);
    CHECK_THROWS_AS(rng.bernoulli(1.5), ContractViolation);
    CHECK_THROWS_AS(rng.bernoulli(-0.1), ContractViolation);
  }
  SECTION("uniform01 stays in [0,1)") {
    SeededRng rng(8);
    for (int i = 0; i < 10000; ++i) {
      double u = rng.uniform01();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
    }
  }
}

TEST_CASE("tensor serialization") {
  SECTION("round trip is bitwise") {
    SeededRng rng(10);
    Tensor t = random_tensor(rng, {3, 5, 2});
    std::stringstream buf;
    write_tensor(buf, t);
    Tensor back = read_tensor(buf);
    CHECK(back.shape() == t.shape());
    CHECK(bitwise_equal(back, t));
  }
  SECTION("header layout: magic, u32 rank, u64 extents, f64 payload") {
    Tensor t({2, 1}, {1.0, -0.5});
    std::stringstream buf;
    write_tensor(buf, t);
    std::string bytes = buf.str();
    REQUIRE(bytes.size() == 4 + 4 + 2 * 8 + 2 * 8);
    CHECK(bytes.substr(0, 4) == "GAIT");
    CHECK(static_cast<unsigned char>(bytes[4]) == 2);  // rank, little endian
    CHECK(static_cast<unsigned char>(bytes[8]) == 2);  // first extent
    CHECK(static_cast<unsigned char>(bytes[16]) == 1);
    double first;
    std::memcpy(&first, bytes.data() + 24, 8);
    CHECK(first == 1.0);  // x86 doubles are already little-endian
  }
  SECTION("bad magic is rejected") {
    std::stringstream buf;
    buf << "NOPExxxxxxxxxxxxxxxx";
    CHECK_THROWS_AS(read_tensor(buf), ContractViolation);
  }
  SECTION("truncated payload is rejected") {
    SeededRng rng(11);
    Tensor t = random_tensor(rng, {4});
    std::stringstream buf;
    write_tensor(buf, t);
    std::string bytes = buf.str();
    std::stringstream cut(bytes.substr(0, bytes.size() - 8));
    CHECK_THROWS_AS(read_tensor(cut), ContractViolation);
  }
}
