// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rlt/tokenizer.hpp"

namespace rlt {

struct ExampleMeta {
    std::size_t token_count = 0;
    std::string source_id;
    SourceInfo source;

    friend bool operator==(const ExampleMeta&, const ExampleMeta&) = default;
};

// Several token sequences concatenated end to end, no padding. Segment i
// covers tokens [boundaries[i], boundaries[i+1]).
class PackedBatch {
public:
    PackedBatch() = default;
    // Validates the boundary/meta/payload relationships; IntegrityError on
    // any mismatch.
    PackedBatch(std::vector<Token> tokens, std::vector<float> payload, std::size_t patch_size,
                std::vector<std::uint32_t> boundaries, std::vector<ExampleMeta> meta);

    std::size_t example_count() const noexcept { return meta_.size(); }
    std::size_t total_tokens() const noexcept { return tokens_.size(); }
    std::size_t patch_size() const noexcept { return patch_size_; }

    std::span<const Token> tokens() const noexcept { return tokens_; }
    std::span<const float> payload() const noexcept { return payload_; }
    std::span<const std::uint32_t> boundaries() const noexcept { return boundaries_; }
    std::span<const ExampleMeta> meta() const noexcept { return meta_; }

    std::size_t segment_begin(std::size_t i) const { return boundaries_.at(i); }
    std::size_t segment_end(std::size_t i) const { return boundaries_.at(i + 1); }

    friend bool operator==(const PackedBatch&, const PackedBatch&) = default;

private:
    std::vector<Token> tokens_;
    std::vector<float> payload_;
    std::size_t patch_size_ = 0;
    std::vector<std::uint32_t> boundaries_;
    std::vector<ExampleMeta> meta_;
};

// Throws IntegrityError unless `boundaries` starts at 0, strictly increases,
// and ends at `total`.
void check_boundaries(std::span<const std::uint32_t> boundaries, std::size_t total);

// Concatenates in input order. All sequences must share tubelet geometry,
// channel count and tokenization parameters (UsageError otherwise). `ids`
// may be empty, in which case examples are named by position.
PackedBatch pack(std::span<const TokenSequence> seqs, std::span<const std::string> ids = {});
std::vector<TokenSequence> unpack(const PackedBatch& batch);

enum class MaskForm : std::uint8_t { Dense, Compact };

// Block-diagonal attention structure. The compact form is the boundaries
// array that variable-length attention kernels take; the dense form is an
// explicit side x side boolean matrix.
class BlockDiagonalMask {
public:
    static BlockDiagonalMask compact(std::vector<std::uint32_t> boundaries);
    static BlockDiagonalMask dense_from(std::span<const std::uint32_t> boundaries);

    MaskForm form() const noexcept { return form_; }
    std::size_t side() const noexcept { return side_; }
    std::span<const std::uint32_t> boundaries() const noexcept { return boundaries_; }

    bool allowed(std::size_t query, std::size_t key) const;
    std::size_t allowed_pairs() const noexcept;
    BlockDiagonalMask to_dense() const;
    // Row-major side*side bytes; empty for the compact form.
    std::span<const std::uint8_t> dense_bits() const noexcept { return dense_; }
    // Segment containing `token`.
    std::size_t segment_of(std::size_t token) const;

private:
    MaskForm form_ = MaskForm::Compact;
    std::size_t side_ = 0;
    std::vector<std::uint32_t> boundaries_;
    std::vector<std::uint8_t> dense_;
};

BlockDiagonalMask build_mask(const PackedBatch& batch, MaskForm form);

}  // namespace rlt
