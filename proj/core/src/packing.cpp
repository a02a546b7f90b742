// SPDX-License-Identifier: Apache-2.0

#include "rlt/packing.hpp"

#include <algorithm>

#include "rlt/errors.hpp"

namespace rlt {

void check_boundaries(std::span<const std::uint32_t> boundaries, std::size_t total) {
    if (boundaries.size() < 2) {
        throw IntegrityError("boundaries need at least two entries, got " +
                             std::to_string(boundaries.size()));
    }
    if (boundaries.front() != 0) throw IntegrityError("boundaries must start at 0");
    for (std::size_t i = 1; i < boundaries.size(); ++i) {
        if (boundaries[i] <= boundaries[i - 1]) {
            throw IntegrityError("boundaries are not strictly increasing at index " + std::to_string(i));
        }
    }
    if (boundaries.back() != total) {
        throw IntegrityError("last boundary " + std::to_string(boundaries.back()) +
                             " != packed token count " + std::to_string(total));
    }
}

PackedBatch::PackedBatch(std::vector<Token> tokens, std::vector<float> payload, std::size_t patch_size,
                         std::vector<std::uint32_t> boundaries, std::vector<ExampleMeta> meta)
    : tokens_(std::move(tokens)),
      payload_(std::move(payload)),
      patch_size_(patch_size),
      boundaries_(std::move(boundaries)),
      meta_(std::move(meta)) {
    check_boundaries(boundaries_, tokens_.size());
    if (meta_.size() + 1 != boundaries_.size()) {
        throw IntegrityError("batch has " + std::to_string(meta_.size()) + " examples but " +
                             std::to_string(boundaries_.size() - 1) + " segments");
    }
    for (std::size_t i = 0; i < meta_.size(); ++i) {
        if (meta_[i].token_count != boundaries_[i + 1] - boundaries_[i]) {
            throw IntegrityError("example " + std::to_string(i) + " declares " +
                                 std::to_string(meta_[i].token_count) + " tokens, segment holds " +
                                 std::to_string(boundaries_[i + 1] - boundaries_[i]));
        }
        if (meta_[i].source.patch_size() != patch_size_) {
            throw IntegrityError("example " + std::to_string(i) + " patch size disagrees with batch");
        }
    }
    if (payload_.size() != tokens_.size() * patch_size_) {
        throw IntegrityError("batch payload has " + std::to_string(payload_.size()) +
                             " floats, expected " + std::to_string(tokens_.size() * patch_size_));
    }
}

namespace {

bool same_tokenization(const SourceInfo& a, const SourceInfo& b) {
    return a.config.patch_x == b.config.patch_x && a.config.patch_y == b.config.patch_y &&
           a.config.tubelet_t == b.config.tubelet_t && a.dims.channels == b.dims.channels &&
           a.norm == b.norm && a.tau == b.tau && a.metric == b.metric;
}

}  // namespace

PackedBatch pack(std::span<const TokenSequence> seqs, std::span<const std::string> ids) {
    if (seqs.empty()) throw UsageError("pack needs at least one token sequence");
    if (!ids.empty() && ids.size() != seqs.size()) {
        throw UsageError("pack got " + std::to_string(ids.size()) + " ids for " +
                         std::to_string(seqs.size()) + " sequences");
    }
    const SourceInfo& first = seqs.front().source();
    std::size_t total = 0;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        if (!same_tokenization(first, seqs[i].source())) {
            throw UsageError("sequence " + std::to_string(i) +
                             " was tokenized with a different configuration than sequence 0");
        }
        if (seqs[i].empty()) throw UsageError("sequence " + std::to_string(i) + " has no tokens");
        total += seqs[i].size();
    }

    const std::size_t width = first.patch_size();
    std::vector<Token> tokens;
    tokens.reserve(total);
    std::vector<float> payload;
    payload.reserve(total * width);
    std::vector<std::uint32_t> boundaries{0};
    std::vector<ExampleMeta> meta;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const auto& seq = seqs[i];
        tokens.insert(tokens.end(), seq.tokens().begin(), seq.tokens().end());
        payload.insert(payload.end(), seq.payload().begin(), seq.payload().end());
        boundaries.push_back(static_cast<std::uint32_t>(tokens.size()));
        meta.push_back({seq.size(), ids.empty() ? std::to_string(i) : ids[i], seq.source()});
    }
    return PackedBatch(std::move(tokens), std::move(payload), width, std::move(boundaries), std::move(meta));
}

std::vector<TokenSequence> unpack(const PackedBatch& batch) {
    check_boundaries(batch.boundaries(), batch.total_tokens());
    std::vector<TokenSequence> out;
    out.reserve(batch.example_count());
    const std::size_t width = batch.patch_size();
    for (std::size_t i = 0; i < batch.example_count(); ++i) {
        const std::size_t begin = batch.segment_begin(i), end = batch.segment_end(i);
        std::vector<Token> tokens(batch.tokens().begin() + static_cast<std::ptrdiff_t>(begin),
                                  batch.tokens().begin() + static_cast<std::ptrdiff_t>(end));
        const auto p = batch.payload().subspan(begin * width, (end - begin) * width);
        out.emplace_back(batch.meta()[i].source, std::move(tokens), std::vector<float>(p.begin(), p.end()));
    }
    return out;
}

BlockDiagonalMask BlockDiagonalMask::compact(std::vector<std::uint32_t> boundaries) {
    check_boundaries(boundaries, boundaries.empty() ? 0 : boundaries.back());
    BlockDiagonalMask mask;
    mask.form_ = MaskForm::Compact;
    mask.side_ = boundaries.back();
    mask.boundaries_ = std::move(boundaries);
    return mask;
}

BlockDiagonalMask BlockDiagonalMask::dense_from(std::span<const std::uint32_t> boundaries) {
    return compact({boundaries.begin(), boundaries.end()}).to_dense();
}

std::size_t BlockDiagonalMask::segment_of(std::size_t token) const {
    if (token >= side_) throw BoundsError("token " + std::to_string(token) + " outside mask");
    const auto it = std::upper_bound(boundaries_.begin(), boundaries_.end(), token);
    return static_cast<std::size_t>(it - boundaries_.begin()) - 1;
}

bool BlockDiagonalMask::allowed(std::size_t query, std::size_t key) const {
    if (query >= side_ || key >= side_) throw BoundsError("mask index outside " + std::to_string(side_));
    if (form_ == MaskForm::Dense) return dense_[query * side_ + key] != 0;
    return segment_of(query) == segment_of(key);
}

std::size_t BlockDiagonalMask::allowed_pairs() const noexcept {
    if (form_ == MaskForm::Dense) {
        return static_cast<std::size_t>(std::count(dense_.begin(), dense_.end(), std::uint8_t{1}));
    }
    std::size_t pairs = 0;
    for (std::size_t i = 0; i + 1 < boundaries_.size(); ++i) {
        const std::size_t n = boundaries_[i + 1] - boundaries_[i];
        pairs += n * n;
    }
    return pairs;
}

BlockDiagonalMask BlockDiagonalMask::to_dense() const {
    BlockDiagonalMask mask = *this;
    if (form_ == MaskForm::Dense) return mask;
    mask.form_ = MaskForm::Dense;
    mask.dense_.assign(side_ * side_, 0);
    for (std::size_t s = 0; s + 1 < boundaries_.size(); ++s) {
        for (std::size_t q = boundaries_[s]; q < boundaries_[s + 1]; ++q) {
            std::fill_n(mask.dense_.begin() + static_cast<std::ptrdiff_t>(q * side_ + boundaries_[s]),
                        boundaries_[s + 1] - boundaries_[s], std::uint8_t{1});
        }
    }
    return mask;
}

BlockDiagonalMask build_mask(const PackedBatch& batch, MaskForm form) {
    auto mask = BlockDiagonalMask::compact({batch.boundaries().begin(), batch.boundaries().end()});
    return form == MaskForm::Dense ? mask.to_dense() : mask;
}

}  // namespace rlt
