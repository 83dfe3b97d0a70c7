/*
 * Copyright 2026 The treecloak Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "treecloak/encoding.h"

#include <gtest/gtest.h>

#include <set>

#include "treecloak/error.h"
#include "treecloak/random.h"

namespace treecloak::encoding {
namespace {

// Enumerates all weight-h words in lexicographic order of their one-positions
// by brute force over every l-bit integer.
std::vector<std::string> BruteForceCodebook(std::size_t l, std::size_t h) {
  std::vector<std::vector<std::size_t>> subsets;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << l); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcountll(mask)) != h) continue;
    std::vector<std::size_t> pos;
    for (std::size_t i = 0; i < l; ++i) {
      if (mask >> i & 1) pos.push_back(i);
    }
    subsets.push_back(pos);
  }
  std::sort(subsets.begin(), subsets.end());
  std::vector<std::string> words;
  for (const auto& s : subsets) {
    std::string w(l, '0');
    for (auto p : s) w[p] = '1';
    words.push_back(w);
  }
  return words;
}

TEST(BinomialTest, SmallValuesAndSaturation) {
  EXPECT_EQ(Binomial(6, 3), 20u);
  EXPECT_EQ(Binomial(363, 2), 65703u);
  EXPECT_EQ(Binomial(5, 7), 0u);
  EXPECT_EQ(Binomial(10000, 5000), UINT64_MAX);
}

TEST(CwTest, SixThreeCodebookMatchesBruteForceRanking) {
  const CwParams cw{6, 3};
  EXPECT_EQ(cw.codebook_size(), 20u);
  const auto oracle = BruteForceCodebook(6, 3);
  ASSERT_EQ(oracle.size(), 20u);
  for (std::uint64_t v = 0; v < 20; ++v) {
    const CwCodeword w = CwEncode(v, cw);
    EXPECT_EQ(w.ToString(), oracle[v]) << v;
    EXPECT_EQ(w.weight(), 3u);
    EXPECT_EQ(CwRank(w), v);
  }
  EXPECT_THROW(CwEncode(20, cw), Error);
}

TEST(CwTest, SixBitLabelsAreWeightThreeWords) {
  const auto book = BruteForceCodebook(6, 3);
  const std::set<std::string> words(book.begin(), book.end());
  for (const char* label : {"111000", "110100", "110001", "100101"}) {
    EXPECT_TRUE(words.count(label)) << label;
    EXPECT_EQ(CwCodeword::FromString(label).weight(), 3u);
  }
}

TEST(CwTest, ConstantWeightAndInjectiveOverDomains) {
  for (std::size_t l = 1; l <= 12; ++l) {
    for (std::size_t h = 1; h <= l; ++h) {
      const CwParams cw{l, h};
      std::set<std::string> seen;
      for (std::uint64_t v = 0; v < cw.codebook_size(); ++v) {
        const auto w = CwEncode(v, cw);
        ASSERT_EQ(w.weight(), h);
        ASSERT_TRUE(seen.insert(w.ToString()).second);
        ASSERT_EQ(CwRank(w), v);
      }
    }
  }
}

TEST(CwTest, LargeCodebooksRoundTrip) {
  Csprng rng(11);
  for (int bw : {8, 16, 32}) {
    const CwParams cw = CwParams::ForBitwidth(bw);
    EXPECT_GE(cw.codebook_size(), std::uint64_t{1} << bw);
    EXPECT_LT(Binomial(cw.length - 1, cw.weight), std::uint64_t{1} << bw);
    for (int i = 0; i < 200; ++i) {
      const std::uint64_t v = rng.Uniform(std::uint64_t{1} << bw);
      const auto w = CwEncode(v, cw);
      ASSERT_EQ(w.weight(), cw.weight);
      ASSERT_EQ(CwRank(w), v);
    }
  }
  EXPECT_EQ(CwParams::ForBitwidth(8).length, 24u);
  EXPECT_EQ(CwParams::ForBitwidth(16).length, 363u);
}

std::vector<std::string> Render(const ReVector& re) {
  std::vector<std::string> out;
  for (const auto& l : re) out.push_back(l ? l->ToString() : "null");
  return out;
}

TEST(PeReTest, ThreeBitPointEncoding) {
  const CwParams cw{6, 3};
  std::vector<std::string> pe;
  for (const auto& w : PeEncode(3, 3, cw)) pe.push_back(w.ToString());
  EXPECT_EQ(pe, (std::vector<std::string>{"111000", "111000", "110100", "110001"}));
}

TEST(PeReTest, ThreeBitRangeEncodings) {
  const CwParams cw{6, 3};
  EXPECT_EQ(Render(ReEncode(1, 3, cw)),
            (std::vector<std::string>{"null", "110100", "110100", "null"}));
  // RE(4): levels 0 and 1 empty, {6,7} at level 2 and leaf 5 at level 3.
  const auto re4 = ReEncode(4, 3, cw);
  EXPECT_FALSE(re4[0]);
  EXPECT_FALSE(re4[1]);
  ASSERT_TRUE(re4[2]);
  EXPECT_EQ(re4[2]->ToString(), "110001");
  ASSERT_TRUE(re4[3]);
  EXPECT_EQ(CwRank(*re4[3]), 5u);
  EXPECT_EQ(re4[3]->ToString(), CwEncode(5, cw).ToString());
}

TEST(PeReTest, MaxValueHasEmptyRange) {
  for (int bw : {1, 3, 8}) {
    for (const auto& l : ReEncode(CbtMaxValue(bw), bw, CwParams::ForBitwidth(bw))) {
      EXPECT_FALSE(l);
    }
  }
}

TEST(PeReTest, RejectsOutOfRange) {
  EXPECT_THROW(PeEncode(8, 3, CwParams{6, 3}), Error);
  EXPECT_THROW(ReEncode(8, 3, CwParams{6, 3}), Error);
}

// Leaves below node j of level d in a b-bit tree.
std::set<std::uint64_t> Leaves(int b, int d, std::uint64_t j) {
  std::set<std::uint64_t> out;
  const std::uint64_t width = std::uint64_t{1} << (b - d);
  for (std::uint64_t v = j * width; v < (j + 1) * width; ++v) out.insert(v);
  return out;
}

TEST(PeReTest, RangeCoverIsExactAndDisjoint) {
  for (int b = 1; b <= 8; ++b) {
    const CwParams cw = CwParams::ForBitwidth(b);
    for (std::uint64_t beta = 0; beta <= CbtMaxValue(b); ++beta) {
      const auto re = ReEncode(beta, b, cw);
      std::set<std::uint64_t> covered;
      std::size_t total = 0;
      for (int d = 0; d <= b; ++d) {
        if (!re[d]) continue;
        const auto leaves = Leaves(b, d, CwRank(*re[d]));
        total += leaves.size();
        covered.insert(leaves.begin(), leaves.end());
      }
      ASSERT_EQ(total, covered.size()) << "overlap at b=" << b << " beta=" << beta;
      std::set<std::uint64_t> expected;
      for (std::uint64_t v = beta + 1; v <= CbtMaxValue(b); ++v) expected.insert(v);
      ASSERT_EQ(covered, expected);
    }
  }
}

TEST(PeReTest, CommonNodeIffGreaterExhaustive) {
  for (int b = 1; b <= 8; ++b) {
    const CwParams cw = CwParams::ForBitwidth(b);
    for (std::uint64_t a = 0; a <= CbtMaxValue(b); ++a) {
      const auto pe = PeEncode(a, b, cw);
      for (std::uint64_t beta = 0; beta <= CbtMaxValue(b); ++beta) {
        const auto re = ReEncode(beta, b, cw);
        int matches = 0;
        for (int d = 0; d <= b; ++d) matches += re[d] && *re[d] == pe[d];
        ASSERT_EQ(matches > 0, a > beta) << b << " " << a << " " << beta;
        ASSERT_LE(matches, 1);
      }
    }
  }
}

TEST(LayoutTest, TwoFeatureRepetitionThree) {
  const std::vector<std::string> names = {"age", "sleep"};
  const auto layout = QueryLayout::Build(names, 3, CwParams{6, 3}, 3, 64);
  // One feature per half-row, four CBT levels each.
  EXPECT_EQ(layout.features()[0].start, 0u);
  EXPECT_EQ(layout.features()[1].start, 32u);
  EXPECT_EQ(layout.gap(), 4u);
  EXPECT_EQ(layout.plane_count(), 6u);
  EXPECT_EQ(layout.compressed_count(), 2u);
  EXPECT_EQ(layout.UnitSlot(1, 2, 2), 32u + 2 + 8);
}

TEST(LayoutTest, JsonRoundTrip) {
  const std::vector<std::string> names = {"a", "b", "c"};
  const auto layout = QueryLayout::Build(names, 8, CwParams::ForBitwidth(8), 4, 256);
  EXPECT_EQ(QueryLayout::FromJson(layout.ToJson()), layout);
  EXPECT_THROW(QueryLayout::FromJson("{\"version\": 7}"), Error);
}

TEST(LayoutTest, CapacityError) {
  const std::vector<std::string> names = {"a", "b", "c", "d"};
  EXPECT_THROW(QueryLayout::Build(names, 8, CwParams::ForBitwidth(8), 8, 64), Error);
}

TEST(LayoutTest, UsesBothHalves) {
  std::vector<std::string> names;
  for (int i = 0; i < 6; ++i) names.push_back("f" + std::to_string(i));
  const auto layout = QueryLayout::Build(names, 8, CwParams::ForBitwidth(8), 2, 128);
  // 6 features x 9 levels x 2 repetitions = 108 slots > N / 2.
  EXPECT_GT(layout.utilized_slots(), 64u);
  std::set<int> rows;
  for (const auto& f : layout.features()) rows.insert(f.start >= 64);
  EXPECT_EQ(rows.size(), 2u);
}

class PackingTest : public ::testing::Test {
 protected:
  PackingTest()
      : params_(fhe::FheParams::Create(128)),
        rng_(5),
        keys_(fhe::GenerateKeys(params_, rng_)),
        ledger_(std::make_shared<fhe::OpLedger>()),
        eval_(keys_.public_key, ledger_),
        dec_(keys_.secret, ledger_) {}

  FeatureValues RandomValues(const QueryLayout& layout) {
    FeatureValues v;
    for (const auto& f : layout.features()) v[f.name] = rng_.Uniform(CbtMaxValue(layout.bitwidth()) + 1);
    return v;
  }

  fhe::FheParams params_;
  Csprng rng_;
  fhe::KeyPair keys_;
  std::shared_ptr<fhe::OpLedger> ledger_;
  fhe::Evaluator eval_;
  fhe::Decryptor dec_;
};

TEST_F(PackingTest, PackedPlanesMatchDirectConstruction) {
  const std::vector<std::string> names = {"age", "sleep", "stress"};
  const auto layout = QueryLayout::Build(names, 5, CwParams::ForBitwidth(5), 3, 128);
  for (int trial = 0; trial < 10; ++trial) {
    const auto values = RandomValues(layout);
    const auto cts = PackQuery(values, layout, dec_);
    ASSERT_EQ(cts.size(), layout.plane_count());
    // Oracle: write every PE bit straight into its repeated slots.
    std::vector<std::vector<std::uint64_t>> expected(layout.plane_count(),
                                                     std::vector<std::uint64_t>(128, 0));
    for (std::size_t f = 0; f < names.size(); ++f) {
      const auto pe = PeEncode(values.at(names[f]), 5, layout.cw());
      for (std::size_t d = 0; d < layout.levels(); ++d) {
        for (std::size_t m = 0; m < layout.plane_count(); ++m) {
          for (std::size_t r = 0; r < 3; ++r) {
            expected[m][layout.features()[f].start + d + r * layout.gap()] = pe[d].bit(m);
          }
        }
      }
    }
    for (std::size_t m = 0; m < cts.size(); ++m) {
      ASSERT_EQ(fhe::Decode(dec_.Decrypt(cts[m])), expected[m]);
    }
  }
}

TEST_F(PackingTest, RepetitionOneIsPlainPerBitPacking) {
  const std::vector<std::string> names = {"x"};
  const auto layout = QueryLayout::Build(names, 4, CwParams::ForBitwidth(4), 1, 128);
  const auto data = BuildPlaneData({{"x", 9}}, layout);
  EXPECT_EQ(CompressPlanes(data, layout, params_), PackPlanes(data, layout, params_));
  const auto pe = PeEncode(9, 4, layout.cw());
  const auto planes = PackPlanes(data, layout, params_);
  for (std::size_t m = 0; m < planes.size(); ++m) {
    for (std::size_t d = 0; d < layout.levels(); ++d) EXPECT_EQ(planes[m][d], pe[d].bit(m));
  }
}

TEST_F(PackingTest, MissingFeatureRejected) {
  const std::vector<std::string> names = {"x", "y"};
  const auto layout = QueryLayout::Build(names, 4, CwParams::ForBitwidth(4), 1, 128);
  EXPECT_THROW(PackQuery({{"x", 1}}, layout, dec_), Error);
}

TEST_F(PackingTest, CompressionCountsAndSlotPlacement) {
  const std::vector<std::string> names = {"age", "sleep"};
  const auto layout = QueryLayout::Build(names, 3, CwParams{6, 3}, 3, 128);
  const auto data = BuildPlaneData({{"age", 5}, {"sleep", 2}}, layout);
  const auto compressed = CompressPlanes(data, layout, params_);
  ASSERT_EQ(compressed.size(), 2u);  // M = 6 planes -> 6 / 3
  for (std::size_t m = 0; m < 6; ++m) {
    for (std::size_t f = 0; f < 2; ++f) {
      for (std::size_t d = 0; d < 4; ++d) {
        EXPECT_EQ(compressed[m / 3][layout.UnitSlot(f, d, m % 3)], data[m][f * 4 + d]);
      }
    }
  }
}

TEST_F(PackingTest, DecompressRestoresRepetitionsExactly) {
  for (std::size_t rep : {1u, 2u, 3u, 5u}) {
    const std::vector<std::string> names = {"a", "b", "c"};
    const auto layout = QueryLayout::Build(names, 4, CwParams::ForBitwidth(4), rep, 128);
    for (int trial = 0; trial < 5; ++trial) {
      const auto values = RandomValues(layout);
      const auto q = CompressQuery(values, layout, dec_);
      ASSERT_EQ(q.ciphertexts.size(), layout.compressed_count());
      const auto restored = DecompressQuery(q.ciphertexts, layout, eval_);
      const auto direct = PackPlanes(BuildPlaneData(values, layout), layout, params_);
      ASSERT_EQ(restored.size(), direct.size());
      for (std::size_t m = 0; m < direct.size(); ++m) {
        ASSERT_EQ(dec_.Decrypt(restored[m]), direct[m]) << "rep=" << rep << " plane " << m;
      }
    }
  }
}

TEST_F(PackingTest, DecompressRotationSchedule) {
  const std::vector<std::string> names = {"age", "sleep"};
  for (std::size_t rep : {1u, 2u, 3u, 4u}) {
    const auto layout = QueryLayout::Build(names, 5, CwParams::ForBitwidth(5), rep, 128);
    const auto q = CompressQuery({{"age", 28}, {"sleep", 7}}, layout, dec_);
    const auto before = ledger_->Snapshot();
    DecompressQuery(q.ciphertexts, layout, eval_);
    const auto d = ledger_->Snapshot() - before;
    // Hand-derived: each plane copies its block into the other R - 1 blocks.
    EXPECT_EQ(d.row_rotations, layout.plane_count() * (rep - 1));
    EXPECT_EQ(d.column_rotations, 0u);
    EXPECT_EQ(d.plain_mults, rep == 1 ? 0u : layout.plane_count());
  }
}

TEST_F(PackingTest, DecompressRejectsWrongCount) {
  const std::vector<std::string> names = {"a"};
  const auto layout = QueryLayout::Build(names, 4, CwParams::ForBitwidth(4), 3, 128);
  auto q = CompressQuery({{"a", 3}}, layout, dec_);
  q.ciphertexts.pop_back();
  EXPECT_THROW(DecompressQuery(q.ciphertexts, layout, eval_), Error);
}

TEST_F(PackingTest, CompressionNeverReadsValuesOnlyLayout) {
  // Compress a plane set with arbitrary unit patterns: result depends only on
  // the (plane, unit) -> slot rule.
  const std::vector<std::string> names = {"a", "b"};
  const auto layout = QueryLayout::Build(names, 4, CwParams::ForBitwidth(4), 2, 128);
  PlaneData data(layout.plane_count(), std::vector<std::uint8_t>(layout.unit_count()));
  for (auto& plane : data) {
    for (auto& bit : plane) bit = static_cast<std::uint8_t>(rng_.Uniform(2));
  }
  const auto compressed = CompressPlanes(data, layout, params_);
  std::vector<fhe::Ciphertext> cts;
  for (const auto& p : compressed) cts.push_back(dec_.Encrypt(p));
  const auto restored = DecompressQuery(cts, layout, eval_);
  const auto direct = PackPlanes(data, layout, params_);
  for (std::size_t m = 0; m < direct.size(); ++m) EXPECT_EQ(dec_.Decrypt(restored[m]), direct[m]);
}

}  // namespace
}  // namespace treecloak::encoding
