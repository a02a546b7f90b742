// SPDX-License-Identifier: Apache-2.0

// Run-length tokenization: find tubelets that repeat their temporal
// predecessor, drop them, and record how many slots each surviving token
// stands for.

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rlt/video.hpp"

namespace rlt {

// How two frame crops are compared. MeanAbs divides the L1 sum by the crop
// element count so a threshold means the same thing for every patch size.
enum class DiffMetric : std::uint8_t { MeanAbs = 0, SumAbs = 1 };

std::string_view to_string(DiffMetric metric) noexcept;
// Accepts "mean"/"mean_abs" and "sum"/"sum_abs". Throws ConfigError.
DiffMetric parse_metric(std::string_view text);

// Difference threshold tau. A pair is static only if its difference is
// strictly below tau. +infinity is accepted as the "everything is static"
// sweep sentinel; NaN and negative values are rejected.
class Threshold {
public:
    static constexpr double kDefault = 0.1;

    Threshold() = default;
    explicit Threshold(double tau);

    static Threshold infinity() { return Threshold(std::numeric_limits<double>::infinity()); }

    double value() const noexcept { return tau_; }

    friend bool operator==(const Threshold&, const Threshold&) = default;

private:
    double tau_ = kDefault;
};

// Retention flags over tubelet slots, true = token kept. Slot order matches
// PatchGrid: (t, y, x).
class StaticMask {
public:
    StaticMask(std::size_t grid_x, std::size_t grid_y, std::size_t grid_t, bool fill = true);

    std::size_t grid_x() const noexcept { return grid_x_; }
    std::size_t grid_y() const noexcept { return grid_y_; }
    std::size_t grid_t() const noexcept { return grid_t_; }
    std::size_t slot_count() const noexcept { return bits_.size(); }

    bool retained(std::size_t x, std::size_t y, std::size_t t) const noexcept {
        return bits_[(t * grid_y_ + y) * grid_x_ + x] != 0;
    }
    void set(std::size_t x, std::size_t y, std::size_t t, bool keep) noexcept {
        bits_[(t * grid_y_ + y) * grid_x_ + x] = keep ? 1 : 0;
    }
    std::span<const std::uint8_t> bits() const noexcept { return bits_; }

    std::size_t retained_count() const noexcept;
    // Every slot of the first temporal layer must be retained.
    bool first_slot_invariant_holds() const noexcept;

    friend bool operator==(const StaticMask&, const StaticMask&) = default;

private:
    std::size_t grid_x_;
    std::size_t grid_y_;
    std::size_t grid_t_;
    std::vector<std::uint8_t> bits_;
};

// Differences between temporally adjacent slots. Entry (x, y, t) for t >= 1
// compares slot t-1 against slot t; t = 0 has no entry.
class DifferenceGrid {
public:
    DifferenceGrid(std::size_t grid_x, std::size_t grid_y, std::size_t grid_t, DiffMetric metric);

    std::size_t grid_x() const noexcept { return grid_x_; }
    std::size_t grid_y() const noexcept { return grid_y_; }
    std::size_t grid_t() const noexcept { return grid_t_; }
    DiffMetric metric() const noexcept { return metric_; }

    double at(std::size_t x, std::size_t y, std::size_t t) const noexcept {
        return values_[((t - 1) * grid_y_ + y) * grid_x_ + x];
    }
    double& at(std::size_t x, std::size_t y, std::size_t t) noexcept {
        return values_[((t - 1) * grid_y_ + y) * grid_x_ + x];
    }

private:
    std::size_t grid_x_;
    std::size_t grid_y_;
    std::size_t grid_t_;
    DiffMetric metric_;
    std::vector<double> values_;
};

// Run length per slot in tubelet-slot units; 0 marks a pruned slot.
class RunLengthGrid {
public:
    RunLengthGrid(std::size_t grid_x, std::size_t grid_y, std::size_t grid_t);

    std::size_t grid_x() const noexcept { return grid_x_; }
    std::size_t grid_y() const noexcept { return grid_y_; }
    std::size_t grid_t() const noexcept { return grid_t_; }

    std::uint32_t at(std::size_t x, std::size_t y, std::size_t t) const noexcept {
        return lengths_[(t * grid_y_ + y) * grid_x_ + x];
    }
    std::uint32_t& at(std::size_t x, std::size_t y, std::size_t t) noexcept {
        return lengths_[(t * grid_y_ + y) * grid_x_ + x];
    }
    std::span<const std::uint32_t> lengths() const noexcept { return lengths_; }

    friend bool operator==(const RunLengthGrid&, const RunLengthGrid&) = default;

private:
    std::size_t grid_x_;
    std::size_t grid_y_;
    std::size_t grid_t_;
    std::vector<std::uint32_t> lengths_;
};

struct TokenizeSettings {
    TubeletConfig config;
    NormalizationParams norm = NormalizationParams::imagenet();
    Threshold tau;
    DiffMetric metric = DiffMetric::MeanAbs;
};

// Everything needed to recompute a token sequence from its source video.
struct SourceInfo {
    VideoDims dims;
    TubeletConfig config;
    NormalizationParams norm;
    double tau = Threshold::kDefault;
    DiffMetric metric = DiffMetric::MeanAbs;
    // True when pixels were ingested as 8-bit and divided by 255.
    bool u8_source = false;

    std::size_t grid_x() const noexcept { return dims.width / config.patch_x; }
    std::size_t grid_y() const noexcept { return dims.height / config.patch_y; }
    std::size_t grid_t() const noexcept { return dims.frames / config.tubelet_t; }
    std::size_t slot_count() const noexcept { return grid_x() * grid_y() * grid_t(); }
    std::size_t patch_size() const noexcept {
        return dims.channels * config.tubelet_t * config.patch_y * config.patch_x;
    }
    TokenizeSettings settings() const { return {config, norm, Threshold(tau), metric}; }

    friend bool operator==(const SourceInfo&, const SourceInfo&) = default;
};

struct Token {
    std::uint32_t x = 0;
    std::uint32_t y = 0;
    std::uint32_t t = 0;
    std::uint32_t run_length = 1;

    friend bool operator==(const Token&, const Token&) = default;
};

// Retained tokens in canonical (t, y, x) order. Payloads are stored
// contiguously, one normalized tubelet of source.patch_size() floats per
// token.
class TokenSequence {
public:
    TokenSequence() = default;
    TokenSequence(SourceInfo source, std::vector<Token> tokens, std::vector<float> payload);

    const SourceInfo& source() const noexcept { return source_; }
    std::span<const Token> tokens() const noexcept { return tokens_; }
    std::size_t size() const noexcept { return tokens_.size(); }
    bool empty() const noexcept { return tokens_.empty(); }
    std::size_t patch_size() const noexcept { return source_.patch_size(); }

    const Token& token(std::size_t i) const { return tokens_.at(i); }
    std::span<const float> patch(std::size_t i) const;
    std::span<const float> payload() const noexcept { return payload_; }

    friend bool operator==(const TokenSequence&, const TokenSequence&) = default;

private:
    SourceInfo source_;
    std::vector<Token> tokens_;
    std::vector<float> payload_;
};

// Structural checks on a sequence: canonical order, slot bounds, and
// 1 <= run_length <= grid_t. With `require_conservation`, additionally every
// spatial column must have lengths summing to grid_t (true for tokenize
// output, not after random_mask). Throws ContractError.
void check_sequence(const TokenSequence& seq, bool require_conservation);

// L1 difference between the first frame-crop of slot t_prev and the last
// frame-crop of slot t_next at spatial slot (x, y). Requires
// t_next == t_prev + 1 (UsageError otherwise).
double patch_difference(const PatchGrid& grid, std::size_t x, std::size_t y, std::size_t t_prev,
                        std::size_t t_next, DiffMetric metric);

DifferenceGrid compute_differences(const PatchGrid& grid, DiffMetric metric);
// Same values, read straight from an unnormalized clip without building the
// normalized video or the patch grid.
DifferenceGrid compute_differences(const VideoTensor& video, const NormalizationParams& norm,
                                   const TubeletConfig& config, DiffMetric metric);
StaticMask mask_from_differences(const DifferenceGrid& diffs, Threshold tau);
StaticMask compute_static_mask(const PatchGrid& grid, Threshold tau, DiffMetric metric);

// Each retained slot's length is the distance to the next retained slot in
// its column, or to the end of the clip when there is none. Throws
// ContractError if the first temporal layer is not fully retained.
RunLengthGrid compute_run_lengths(const StaticMask& mask);

// Collects retained tubelets of `grid` with their run lengths.
TokenSequence gather_tokens(const PatchGrid& grid, const StaticMask& mask,
                            const RunLengthGrid& lengths, SourceInfo source);

// normalize -> extract -> mask -> run lengths -> gather. Produces exactly
// what gather_tokens over extract_patches(normalize(video)) would, without
// materializing either intermediate.
TokenSequence tokenize(const VideoTensor& video, const TokenizeSettings& settings,
                       bool u8_source = false);

// Fixed-grid tokenization: every slot becomes a token with run length 1.
TokenSequence standard_tokenize(const VideoTensor& video, const TokenizeSettings& settings,
                                bool u8_source = false);

// 1 - N_P' / N_P.
double reduction_ratio(const TokenSequence& seq);

// Uniformly drops floor(ratio * size) tokens, reproducible from `seed`.
// Survivors keep their order and run lengths. Throws UsageError unless
// 0 <= ratio < 1.
TokenSequence random_mask(const TokenSequence& seq, double ratio, std::uint64_t seed);

}  // namespace rlt
