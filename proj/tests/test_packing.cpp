// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "rlt/errors.hpp"
#include "rlt/packing.hpp"
#include "testkit.hpp"

using namespace rlt;

namespace {

// Sequences that share one source configuration, with random lengths.
std::vector<TokenSequence> compatible_sequences(std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const TubeletConfig cfg{4, 4, 2, 8};
    std::vector<TokenSequence> out;
    for (std::size_t i = 0; i < count; ++i) {
        const auto raw = testkit::random_walk_video({3, 8, 8, 8 + 4 * (rng() % 3)}, cfg, rng());
        TokenizeSettings s;
        s.config = cfg;
        out.push_back(tokenize(raw, s));
    }
    return out;
}

}  // namespace

TEST(Pack, BoundariesAreCumulativeLengths) {
    const auto seqs = compatible_sequences(4, 1);
    const auto batch = pack(seqs);
    ASSERT_EQ(batch.example_count(), 4u);
    std::uint32_t acc = 0;
    EXPECT_EQ(batch.boundaries()[0], 0u);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        acc += static_cast<std::uint32_t>(seqs[i].size());
        EXPECT_EQ(batch.boundaries()[i + 1], acc);
        EXPECT_EQ(batch.meta()[i].token_count, seqs[i].size());
        EXPECT_EQ(batch.meta()[i].source_id, std::to_string(i));
    }
    EXPECT_EQ(batch.total_tokens(), acc);
    EXPECT_EQ(batch.payload().size(), acc * batch.patch_size());
}

TEST(Pack, SegmentsHoldOriginalTokensInOrder) {
    const auto seqs = compatible_sequences(3, 2);
    const auto batch = pack(seqs);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        for (std::size_t k = 0; k < seqs[i].size(); ++k) {
            const std::size_t j = batch.segment_begin(i) + k;
            ASSERT_EQ(batch.tokens()[j], seqs[i].token(k));
            const auto a = batch.payload().subspan(j * batch.patch_size(), batch.patch_size());
            const auto b = seqs[i].patch(k);
            ASSERT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
        }
    }
}

TEST(Pack, RoundTripProperty) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 100; ++i) {
        const auto seqs = compatible_sequences(1 + rng() % 5, rng());
        const auto back = unpack(pack(seqs));
        ASSERT_EQ(back, seqs);
    }
}

TEST(Pack, CustomIdsAndErrors) {
    const auto seqs = compatible_sequences(2, 4);
    const std::vector<std::string> ids{"a.rltt", "b.rltt"};
    EXPECT_EQ(pack(seqs, ids).meta()[1].source_id, "b.rltt");
    EXPECT_THROW(pack(std::span<const TokenSequence>{}), UsageError);
    const std::vector<std::string> short_ids{"only"};
    EXPECT_THROW(pack(seqs, short_ids), UsageError);
}

TEST(Pack, RejectsMixedConfiguration) {
    auto seqs = compatible_sequences(1, 5);
    TokenizeSettings s;
    s.config = {2, 2, 2, 8};
    seqs.push_back(tokenize(testkit::random_walk_video({3, 8, 8, 8}, s.config, 9), s));
    EXPECT_THROW(pack(seqs), UsageError);

    auto seqs2 = compatible_sequences(1, 6);
    TokenizeSettings s2;
    s2.config = {4, 4, 2, 8};
    s2.tau = Threshold(0.2);
    seqs2.push_back(tokenize(testkit::random_walk_video({3, 8, 8, 8}, s2.config, 9), s2));
    EXPECT_THROW(pack(seqs2), UsageError);
}

TEST(Pack, MixedRawDimsAreAllowed) {
    const auto seqs = compatible_sequences(6, 7);
    bool differ = false;
    for (const auto& s : seqs) differ |= s.source().dims != seqs[0].source().dims;
    ASSERT_TRUE(differ);
    EXPECT_NO_THROW(pack(seqs));
}

TEST(PackedBatch, IntegrityChecks) {
    const auto batch = pack(compatible_sequences(2, 8));
    std::vector<Token> tokens(batch.tokens().begin(), batch.tokens().end());
    std::vector<float> payload(batch.payload().begin(), batch.payload().end());
    std::vector<std::uint32_t> bounds(batch.boundaries().begin(), batch.boundaries().end());
    std::vector<ExampleMeta> meta(batch.meta().begin(), batch.meta().end());
    EXPECT_NO_THROW(PackedBatch(tokens, payload, batch.patch_size(), bounds, meta));

    auto b2 = bounds;
    b2.back() += 1;
    EXPECT_THROW(PackedBatch(tokens, payload, batch.patch_size(), b2, meta), IntegrityError);
    auto p2 = payload;
    p2.pop_back();
    EXPECT_THROW(PackedBatch(tokens, p2, batch.patch_size(), bounds, meta), IntegrityError);
    auto m2 = meta;
    m2[0].token_count += 1;
    EXPECT_THROW(PackedBatch(tokens, payload, batch.patch_size(), bounds, m2), IntegrityError);
}

TEST(CheckBoundaries, Rules) {
    const std::vector<std::uint32_t> ok{0, 3, 5};
    EXPECT_NO_THROW(check_boundaries(ok, 5));
    EXPECT_THROW(check_boundaries(ok, 6), IntegrityError);
    const std::vector<std::uint32_t> nonzero{1, 5};
    EXPECT_THROW(check_boundaries(nonzero, 5), IntegrityError);
    const std::vector<std::uint32_t> flat{0, 3, 3, 5};
    EXPECT_THROW(check_boundaries(flat, 5), IntegrityError);
    const std::vector<std::uint32_t> single{0};
    EXPECT_THROW(check_boundaries(single, 0), IntegrityError);
}

TEST(BlockDiagonalMask, ThreeFiveExample) {
    const std::vector<std::uint32_t> bounds{0, 3, 8};
    const auto dense = BlockDiagonalMask::dense_from(bounds);
    ASSERT_EQ(dense.side(), 8u);
    ASSERT_EQ(dense.dense_bits().size(), 64u);
    for (std::size_t q = 0; q < 8; ++q)
        for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(dense.allowed(q, k), (q < 3) == (k < 3)) << q << "," << k;
    EXPECT_EQ(dense.allowed_pairs(), 9u + 25u);
    EXPECT_EQ(dense.segment_of(2), 0u);
    EXPECT_EQ(dense.segment_of(3), 1u);
}

TEST(BlockDiagonalMask, CompactAgreesWithDense) {
    std::mt19937_64 rng(10);
    for (int i = 0; i < 100; ++i) {
        std::vector<std::uint32_t> bounds{0};
        for (std::size_t s = 0, n = 1 + rng() % 6; s < n; ++s) bounds.push_back(bounds.back() + 1 + rng() % 7);
        const auto compact = BlockDiagonalMask::compact(bounds);
        const auto dense = compact.to_dense();
        ASSERT_EQ(compact.form(), MaskForm::Compact);
        ASSERT_EQ(dense.form(), MaskForm::Dense);
        ASSERT_EQ(compact.side(), dense.side());
        ASSERT_EQ(compact.allowed_pairs(), dense.allowed_pairs());
        for (std::size_t q = 0; q < compact.side(); ++q)
            for (std::size_t k = 0; k < compact.side(); ++k) ASSERT_EQ(compact.allowed(q, k), dense.allowed(q, k));
    }
    EXPECT_THROW(BlockDiagonalMask::compact({0, 2}).allowed(2, 0), BoundsError);
}

TEST(BuildMask, FromBatch) {
    const auto batch = pack(compatible_sequences(3, 11));
    const auto m = build_mask(batch, MaskForm::Dense);
    EXPECT_EQ(m.side(), batch.total_tokens());
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t n = batch.segment_end(i) - batch.segment_begin(i);
        pairs += n * n;
    }
    EXPECT_EQ(m.allowed_pairs(), pairs);
    EXPECT_EQ(build_mask(batch, MaskForm::Compact).allowed_pairs(), pairs);
}
