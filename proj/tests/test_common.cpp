/*
 * Copyright 2026 The softalign Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <sstream>

#include "softalign/config.hpp"

namespace softalign {
namespace {

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, UniformInUnitInterval) {
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, BelowStaysInRange) {
  Rng r(2);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) ++hits[r.below(7)];
  for (int h : hits) EXPECT_GT(h, 800);
  EXPECT_THROW(r.below(0), InputError);
}

TEST(Rng, CategoricalSkipsZeroWeights) {
  Rng r(3);
  const std::vector<double> w{0.0, 1.0, 0.0, 3.0};
  int ones = 0;
  for (int i = 0; i < 4000; ++i) {
    const auto k = r.categorical(w);
    ASSERT_TRUE(k == 1 || k == 3);
    ones += k == 1;
  }
  EXPECT_NEAR(ones / 4000.0, 0.25, 0.03);
  EXPECT_THROW(r.categorical(std::vector<double>{0.0, 0.0}), InputError);
}

TEST(Rng, NormalMoments) {
  Rng r(4);
  double s = 0, s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.03);
  EXPECT_NEAR(s2 / n, 1.0, 0.05);
}

TEST(MixSeed, TagsGiveDistinctStreams) {
  EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
  EXPECT_NE(mix_seed(1, 0), mix_seed(2, 0));
  EXPECT_EQ(mix_seed(9, 3), mix_seed(9, 3));
}

TEST(Utf8, RoundTripMultibyte) {
  const std::string s = "a\xE2\x96\x81z \xC3\xA9";
  const auto cps = utf8_decode(s);
  ASSERT_EQ(cps.size(), 5u);
  EXPECT_EQ(cps[1], 0x2581u);
  EXPECT_EQ(utf8_encode(cps), s);
}

TEST(Utf8, InvalidByteBecomesReplacement) {
  const auto cps = utf8_decode("\xFF");
  ASSERT_EQ(cps.size(), 1u);
  EXPECT_EQ(cps[0], 0xFFFDu);
}

TEST(Strings, SplitJoinTrim) {
  EXPECT_EQ(split_whitespace("  a  bb\tc "), (std::vector<std::string>{"a", "bb", "c"}));
  EXPECT_EQ(join({"x", "y"}, ", "), "x, y");
  EXPECT_EQ(trim("  q \n"), "q");
}

TEST(FormatDouble, RoundTripsExactly) {
  for (double v : {0.1, 1.0 / 3.0, 2e-300, -7.25, 123456789.0}) EXPECT_EQ(std::stod(format_double(v)), v);
}

TEST(Binio, RoundTrip) {
  std::stringstream ss;
  binio::put_magic(ss, "TEST");
  binio::put_u64(ss, 0x0102030405060708ULL);
  binio::put_f64(ss, -0.0);
  binio::put_string(ss, "hello");
  binio::expect_magic(ss, "TEST");
  EXPECT_EQ(binio::get_u64(ss), 0x0102030405060708ULL);
  EXPECT_TRUE(std::signbit(binio::get_f64(ss)));
  EXPECT_EQ(binio::get_string(ss), "hello");
}

TEST(Binio, LittleEndianLayout) {
  std::stringstream ss;
  binio::put_u64(ss, 1);
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 8u);
  EXPECT_EQ(bytes[0], '\x01');
  EXPECT_EQ(bytes[7], '\x00');
}

TEST(Binio, WrongMagicThrows) {
  std::stringstream ss("ABCD");
  EXPECT_THROW(binio::expect_magic(ss, "SAGT"), IoError);
}

TEST(Errors, ExitCodes) {
  EXPECT_EQ(ConfigError("x").exit_code(), 2);
  EXPECT_EQ(NumericError("x").exit_code(), 3);
  EXPECT_EQ(IoError("x").exit_code(), 4);
}

TEST(KeyValueConfig, SectionsAndOverrides) {
  const auto cfg = KeyValueConfig::parse(
      "a = 1  # comment\n"
      "a = 2\n"
      "[obj x]\n"
      "k = hello world\n"
      "flag = yes\n");
  EXPECT_EQ(cfg.get_or<int>("a", 0), 2);
  EXPECT_EQ(cfg.get_all("a").size(), 2u);
  EXPECT_EQ(*cfg.get("k", "obj x"), "hello world");
  EXPECT_TRUE(cfg.get_or<bool>("flag", false, "obj x"));
  EXPECT_FALSE(cfg.get("k"));
  EXPECT_EQ(cfg.sections(), std::vector<std::string>{"obj x"});
}

TEST(KeyValueConfig, BadInputs) {
  EXPECT_THROW(KeyValueConfig::parse("nokey\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("[open\n"), ConfigError);
  const auto cfg = KeyValueConfig::parse("n = -3\nx = 1.5z\n");
  EXPECT_THROW(cfg.get_or<std::size_t>("n", 0), ConfigError);
  EXPECT_THROW(cfg.get_or<double>("x", 0.0), ConfigError);
  EXPECT_THROW(cfg.require<int>("missing"), ConfigError);
}

TEST(Checksum, SensitiveToEveryBit) {
  std::vector<double> v{1.0, 2.0};
  const auto h = checksum(v);
  v[1] = std::nextafter(2.0, 3.0);
  EXPECT_NE(checksum(v), h);
}

}  // namespace
}  // namespace softalign
