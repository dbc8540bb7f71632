#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "progrnet/error.hpp"
#include "progrnet/quantizer.hpp"

using namespace progrnet;

namespace {

Tensor random_tensor(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(dist(rng));
  return Tensor({n}, std::move(v));
}

/// Keep only the top `keep` bits of every k-bit code.
QuantizedTensor truncated(QuantizedTensor q, int keep) {
  const int low = q.bits - keep;
  for (auto& c : q.codes) c = (c >> low) << low;
  return q;
}

}  // namespace

TEST_SUITE("quantizer") {
  TEST_CASE("quantize: worked examples") {
    auto q = quantize(Tensor({3}, {0.0f, 0.5f, 1.0f}), 2);
    CHECK(q.codes == std::vector<std::uint32_t>{0, 1, 3});
    CHECK(q.min_val == 0.0f);
    CHECK(q.max_val == 1.0f);

    auto c = quantize(Tensor({2}, {0.7f, 0.7f}), 8);
    CHECK(c.codes == std::vector<std::uint32_t>{0, 0});
    CHECK(c.min_val == 0.7f);
    CHECK(c.max_val == 0.7f);

    auto m = quantize(Tensor({4}, {3.0f, -2.0f, 5.0f, -2.0f}), 7);
    CHECK(m.codes[1] == 0);
    CHECK(m.codes[3] == 0);
    CHECK(m.codes[2] == 127);
  }

  TEST_CASE("quantize: preconditions") {
    Tensor t({2}, {1.0f, 2.0f});
    CHECK_THROWS_AS(quantize(t, 0), Error);
    CHECK_THROWS_AS(quantize(t, 17), Error);
    CHECK_THROWS_AS(quantize(Tensor{}, 8), Error);
  }

  TEST_CASE("dequantize: worked examples") {
    QuantizedTensor q{{1}, 2, 0.0f, 1.0f, {3}};
    CHECK(dequantize(q, 2)[0] == doctest::Approx(0.875).epsilon(1e-7));

    QuantizedTensor top{{1}, 4, 0.0f, 1.0f, {0b1000}};
    CHECK(dequantize(top, 1)[0] == doctest::Approx(0.75).epsilon(1e-7));

    QuantizedTensor flat{{3}, 8, 0.7f, 0.7f, {0, 0, 0}};
    for (int b = 1; b <= 8; ++b) {
      auto t = dequantize(flat, b);
      for (float v : t.data()) CHECK(v == 0.7f);
    }
    CHECK_THROWS_AS(dequantize(q, 0), Error);
    CHECK_THROWS_AS(dequantize(q, 3), Error);
  }

  TEST_CASE("round trip bound at full precision for every k") {
    std::mt19937_64 rng(21);
    for (int k = 1; k <= 16; ++k) {
      for (int trial = 0; trial < 20; ++trial) {
        double scale = std::pow(10.0, std::uniform_real_distribution<double>(-3, 3)(rng));
        auto t = random_tensor(rng, 1 + rng() % 500, -scale, scale);
        auto q = quantize(t, k);
        check_quantized(q);
        auto back = dequantize(q, k);
        const double range = double(q.max_val) - q.min_val;
        const double bound = (range / std::ldexp(1.0, k) + range * std::ldexp(1.0, -20)) * (1 + 1e-6);
        for (std::size_t i = 0; i < t.size(); ++i) REQUIRE(std::abs(double(back[i]) - t[i]) <= bound);
      }
    }
  }

  TEST_CASE("partial precision bound halves with each extra bit") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 30; ++trial) {
      auto t = random_tensor(rng, 2000, -3.0, 7.0);
      auto q = quantize(t, 16);
      const double range = double(q.max_val) - q.min_val;
      double previous_worst = INFINITY;
      for (int b = 1; b <= 16; ++b) {
        auto back = dequantize(truncated(q, b), b);
        const double bound = range / std::ldexp(1.0, b) + range * std::ldexp(1.0, -20);
        double worst = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
          const double v = back[i];
          worst = std::max(worst, std::abs(v - t[i]));
          // Output range: [min, max + range / 2^(B+1)].
          REQUIRE(v >= q.min_val);
          REQUIRE(v <= double(q.max_val) + range / std::ldexp(1.0, b + 1) + 1e-6 * range);
        }
        REQUIRE(worst <= bound * (1 + 1e-6));
        // Half-interval centering: the error is at most half the interval, plus slack.
        REQUIRE(worst <= (range / std::ldexp(1.0, b + 1) + range * std::ldexp(1.0, -20)) * (1 + 1e-5));
        if (b > 4) REQUIRE(worst < previous_worst);
        previous_worst = worst;
      }
    }
  }

  TEST_CASE("quantize commutes with permutation") {
    std::mt19937_64 rng(23);
    auto t = random_tensor(rng, 257, -1.0, 1.0);
    std::vector<std::size_t> perm(t.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<float> shuffled(t.size());
    for (std::size_t i = 0; i < perm.size(); ++i) shuffled[i] = t[perm[i]];
    auto q = quantize(t, 12);
    auto qs = quantize(Tensor({t.size()}, shuffled), 12);
    CHECK(qs.min_val == q.min_val);
    CHECK(qs.max_val == q.max_val);
    for (std::size_t i = 0; i < perm.size(); ++i) REQUIRE(qs.codes[i] == q.codes[perm[i]]);
  }

  TEST_CASE("codes are invariant under power-of-two scaling") {
    std::mt19937_64 rng(24);
    auto t = random_tensor(rng, 300, 0.0, 1.0);
    std::vector<float> moved(t.size());
    // A power-of-two scale keeps the float arithmetic exact.
    for (std::size_t i = 0; i < t.size(); ++i) moved[i] = t[i] * 64.0f;
    CHECK(quantize(Tensor({t.size()}, moved), 10).codes == quantize(t, 10).codes);
  }
}
