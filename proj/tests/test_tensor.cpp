// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>
#include <sstream>

#include "resnext/errors.hpp"
#include "resnext/ntf.hpp"
#include "resnext/tensor.hpp"

using namespace resnext;

TEST_CASE("tensor shape validation") {
  CHECK_THROWS_AS(Tensor<float>(Shape{}), RejectedInputError);
  CHECK_THROWS_AS(Tensor<float>(Shape{1, 2, 3, 4, 5}), RejectedInputError);
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 0}), RejectedInputError);
  CHECK_THROWS(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}));
  Tensor<double> t({2, 3, 4, 5}, 1.5);
  CHECK(t.size() == 120);
  CHECK(t.at(1, 2, 3, 4) == 1.5);
  CHECK(t.all_finite());
  t[7] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("row-major layout, last axis fastest") {
  Tensor<float> t({2, 3, 2, 2});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i);
  CHECK(t.at(0, 0, 0, 1) == 1.0f);
  CHECK(t.at(0, 0, 1, 0) == 2.0f);
  CHECK(t.at(0, 1, 0, 0) == 4.0f);
  CHECK(t.at(1, 0, 0, 0) == 12.0f);
}

TEST_CASE("channel concat and slice invert each other") {
  std::mt19937_64 rng(3);
  const auto a = random_normal<double>({2, 3, 4, 4}, rng);
  const auto b = random_normal<double>({2, 5, 4, 4}, rng);
  const std::vector<Tensor<double>> parts{a, b};
  const auto cat = concat_channels<double>(parts);
  CHECK(cat.shape() == Shape{2, 8, 4, 4});
  CHECK(slice_channels(cat, 0, 3) == a);
  CHECK(slice_channels(cat, 3, 5) == b);
  CHECK(cat.at(1, 4, 2, 3) == b.at(1, 1, 2, 3));
  CHECK_THROWS(slice_channels(cat, 6, 3));
}

TEST_CASE("outer-axis concat and slice") {
  std::mt19937_64 rng(4);
  const auto a = random_normal<float>({2, 3, 3, 3}, rng);
  const auto b = random_normal<float>({4, 3, 3, 3}, rng);
  const std::vector<Tensor<float>> parts{a, b};
  const auto cat = concat_outer<float>(parts);
  CHECK(cat.shape() == Shape{6, 3, 3, 3});
  CHECK(slice_outer(cat, 0, 2) == a);
  CHECK(slice_outer(cat, 2, 4) == b);
}

TEST_CASE("max_rel_diff") {
  Tensor<double> a({3}, std::vector<double>{1, 2, 4});
  Tensor<double> b({3}, std::vector<double>{1, 2, 3});
  CHECK(max_rel_diff(a, a) == 0.0);
  CHECK(max_rel_diff(a, b) == doctest::Approx(0.25));
  CHECK_THROWS(max_rel_diff(a, Tensor<double>({4})));
}

TEST_CASE("NTF1 byte layout") {
  Tensor<float> t({2, 1}, std::vector<float>{1.0f, -2.0f});
  std::ostringstream os;
  write_tensor(os, t);
  const std::string s = os.str();
  REQUIRE(s.size() == 4 + 1 + 1 + 2 * 4 + 2 * 4);
  CHECK(s.substr(0, 4) == "NTF1");
  CHECK(s[4] == 1);
  CHECK(s[5] == 2);
  CHECK(static_cast<unsigned char>(s[6]) == 2);
  CHECK(s[7] == 0);
  CHECK(static_cast<unsigned char>(s[10]) == 1);
  // 1.0f little-endian: 00 00 80 3f
  CHECK(static_cast<unsigned char>(s[14]) == 0x00);
  CHECK(static_cast<unsigned char>(s[16]) == 0x80);
  CHECK(static_cast<unsigned char>(s[17]) == 0x3f);
}

TEST_CASE("NTF1 round trip both dtypes") {
  std::mt19937_64 rng(9);
  const auto f = random_normal<float>({3, 2, 4}, rng);
  const auto d = random_normal<double>({5}, rng);
  std::stringstream ss;
  write_tensor(ss, f);
  write_tensor(ss, d);
  CHECK(read_tensor_as<float>(ss) == f);
  const auto any = read_tensor(ss);
  REQUIRE(std::holds_alternative<Tensor<double>>(any));
  CHECK(std::get<Tensor<double>>(any) == d);
}

TEST_CASE("NTF1 format errors") {
  std::istringstream bad_magic("NTF2\x01\x01\x01\x00\x00\x00");
  CHECK_THROWS_AS(read_tensor(bad_magic), FormatError);
  std::istringstream bad_dtype(std::string("NTF1\x07\x01\x01\x00\x00\x00", 10));
  CHECK_THROWS_AS(read_tensor(bad_dtype), FormatError);
  std::istringstream truncated(std::string("NTF1\x01\x01\x02\x00\x00\x00\x00\x00", 12));
  CHECK_THROWS_AS(read_tensor(truncated), FormatError);
  std::istringstream wrong_type(std::string("NTF1\x02\x01\x01\x00\x00\x00", 10) + std::string(8, '\0'));
  CHECK_THROWS_AS(read_tensor_as<float>(wrong_type), FormatError);
}

TEST_CASE("named container round trip") {
  std::mt19937_64 rng(1);
  NamedTensors in{{"1.0.w", random_normal<float>({4, 2, 3, 3}, rng)}, {"stem.bn_var", Tensor<double>({4}, 1.0)}};
  std::stringstream ss;
  write_named(ss, in);
  const auto out = read_named(ss);
  REQUIRE(out.size() == 2);
  CHECK(out[0].first == "1.0.w");
  CHECK(find_tensor<float>(out, "1.0.w") == std::get<Tensor<float>>(in[0].second));
  CHECK(find_tensor<double>(out, "stem.bn_var") == std::get<Tensor<double>>(in[1].second));
  CHECK_THROWS_AS(find_tensor<float>(out, "missing"), FormatError);
  CHECK_THROWS_AS(find_tensor<float>(out, "stem.bn_var"), FormatError);
}
