#include <algorithm>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "progrnet/bit_codec.hpp"
#include "progrnet/error.hpp"

using namespace progrnet;

TEST_SUITE("bit_codec") {
  TEST_CASE("schedule validation") {
    CHECK_NOTHROW(BitSchedule(4, {1, 2, 4}));
    CHECK_THROWS_AS(BitSchedule(4, {}), Error);
    CHECK_THROWS_AS(BitSchedule(4, {2, 1, 4}), Error);
    CHECK_THROWS_AS(BitSchedule(4, {0, 4}), Error);
    CHECK_THROWS_AS(BitSchedule(4, {1, 3}), Error);
    CHECK_THROWS_AS(BitSchedule(0, {0}), Error);
    CHECK_THROWS_AS(BitSchedule(17, {17}), Error);

    BitSchedule s(4, {1, 2, 4});
    CHECK(s.stages() == 3);
    CHECK(s.width(1) == 1);
    CHECK(s.width(2) == 1);
    CHECK(s.width(3) == 2);
    CHECK(s.position(0) == 0);
  }

  TEST_CASE("default schedule is 2,4,...,16") {
    auto s = BitSchedule::default_for(16);
    CHECK(s.positions() == std::vector<int>{2, 4, 6, 8, 10, 12, 14, 16});
    CHECK(BitSchedule::parse(16, "2,4,6,8,10,12,14,16") == s);
    CHECK(BitSchedule::parse(16, " 4, 16 ").positions() == std::vector<int>{4, 16});
    CHECK_THROWS_AS(BitSchedule::parse(16, "4,2,16"), Error);
    CHECK_THROWS_AS(BitSchedule::parse(16, "4,,16"), Error);
    CHECK_THROWS_AS(BitSchedule::parse(16, "a"), Error);
  }

  TEST_CASE("divide: worked example and edges") {
    BitSchedule s(4, {1, 2, 4});
    // 0b1011 -> MSB 1 | next bit 0 | last two bits 11.
    CHECK(divide(0b1011, s, 1) == 1);
    CHECK(divide(0b1011, s, 2) == 0);
    CHECK(divide(0b1011, s, 3) == 3);
    for (int m = 1; m <= 3; ++m) {
      CHECK(divide(0, s, m) == 0);
      CHECK(divide(15, s, m) == (1u << s.width(m)) - 1);
    }
    CHECK_THROWS_AS(divide(16, s, 1), Error);
    CHECK_THROWS_AS(divide(1, s, 0), Error);
    CHECK_THROWS_AS(divide(1, s, 4), Error);
  }

  TEST_CASE("concatenate and accumulate: worked examples") {
    BitSchedule s(4, {1, 2, 4});
    std::vector<std::uint32_t> all = {1, 0, 3};
    CHECK(concatenate(all, s) == 11);
    CHECK(concatenate(std::span(all).first(2), s) == 8);
    std::vector<std::uint32_t> zeros = {0, 0, 0};
    CHECK(concatenate(zeros, s) == 0);

    CHECK(accumulate(8, 3, s, 3) == 11);
    CHECK(accumulate(0, 1, s, 1) == concatenate(std::span(all).first(1), s));
    CHECK(accumulate(9, 0, s, 2) == 9);
    CHECK_THROWS_AS(accumulate(0, 4, s, 3), Error);
    std::vector<std::uint32_t> bad = {2};
    CHECK_THROWS_AS(concatenate(bad, s), Error);
  }

  TEST_CASE("divide and concatenate agree with the bit-position oracle") {
    std::mt19937_64 rng(11);
    for (int k = 1; k <= 10; ++k) {
      for (int trial = 0; trial < 5; ++trial) {
        auto positions = oracle::random_schedule(rng, k);
        BitSchedule s(k, positions);
        for (std::uint32_t code = 0; code < (1u << k); ++code) {
          std::vector<std::uint32_t> frags;
          for (int m = 1; m <= s.stages(); ++m) {
            auto f = divide(code, s, m);
            REQUIRE(f == oracle::bit_field(code, k, s.position(m - 1), s.position(m)));
            frags.push_back(f);
          }
          for (std::size_t m = 1; m <= frags.size(); ++m) {
            auto prefix = std::span(frags).first(m);
            REQUIRE(concatenate(prefix, s) == oracle::place_fragments(prefix, k, positions));
          }
        }
      }
    }
  }

  TEST_CASE("prefix consistency: first m fragments clear the low k - b_m bits") {
    std::mt19937_64 rng(12);
    BitSchedule s = BitSchedule::default_for(16);
    std::uniform_int_distribution<std::uint32_t> dist(0, 0xFFFF);
    for (int i = 0; i < 20000; ++i) {
      auto code = dist(rng);
      std::uint32_t acc = 0;
      for (int m = 1; m <= s.stages(); ++m) {
        acc = accumulate(acc, divide(code, s, m), s, m);
        const int low = 16 - s.position(m);
        REQUIRE(acc == ((code >> low) << low));
      }
    }
  }

  TEST_CASE("accumulation order does not matter") {
    std::mt19937_64 rng(13);
    BitSchedule s(12, {1, 3, 4, 8, 9, 12});
    std::uniform_int_distribution<std::uint32_t> dist(0, 0xFFF);
    std::vector<int> order = {1, 2, 3, 4, 5, 6};
    for (int i = 0; i < 2000; ++i) {
      auto code = dist(rng);
      std::shuffle(order.begin(), order.end(), rng);
      std::uint32_t acc = 0;
      for (int m : order) acc = accumulate(acc, divide(code, s, m), s, m);
      REQUIRE(acc == code);
    }
  }

  TEST_CASE("tensor lifts") {
    std::vector<std::uint32_t> codes = {0, 1, 3};
    BitSchedule s(2, {1, 2});
    auto p1 = divide_tensor(codes, s, 1);
    auto p2 = divide_tensor(codes, s, 2);
    CHECK(p1.values == std::vector<std::uint32_t>{0, 0, 1});
    CHECK(p2.values == std::vector<std::uint32_t>{0, 1, 1});
    std::vector<FragmentPlane> planes = {p1, p2};
    CHECK(concat_tensor(planes, s) == codes);

    BitSchedule identity(2, {2});
    CHECK(divide_tensor(codes, identity, 1).values == codes);

    std::vector<FragmentPlane> reversed = {p2, p1};
    CHECK_THROWS_AS(concat_tensor(reversed, s), Error);
  }

  TEST_CASE("no information inflation: plane widths sum to k") {
    std::mt19937_64 rng(14);
    for (int k = 1; k <= 16; ++k) {
      BitSchedule s(k, oracle::random_schedule(rng, k));
      std::size_t numel = 1 + rng() % 1000;
      std::vector<std::uint32_t> codes(numel, (1u << k) - 1);
      std::size_t bits = 0;
      for (int m = 1; m <= s.stages(); ++m) bits += numel * std::size_t(divide_tensor(codes, s, m).width);
      CHECK(bits == numel * std::size_t(k));
    }
  }
}
