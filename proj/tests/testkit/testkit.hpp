// SPDX-License-Identifier: Apache-2.0

// Test-only generators and slow reference implementations. Nothing here
// calls into rlt's mask, run-length or difference code; the oracles index
// raw buffers themselves so they stay independent of what they check.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rlt/refmodel.hpp"
#include "rlt/tokenizer.hpp"
#include "rlt/video.hpp"

namespace rlt::testkit {

enum class SyntheticKind { Static, Noise, MovingBlock, BrightnessRamp, TwoSegmentStatic };

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::Static;
    VideoDims dims{3, 16, 32, 32};
    TubeletConfig config{16, 16, 2, 64};
    std::uint64_t seed = 0;

    // Noise: fraction of patch rows (from the top) that stay frozen.
    double static_fraction = 0.0;
    // BrightnessRamp: per-slot change in normalized units, measured with
    // `norm`. The raw step for channel c is delta * norm.std[c].
    double delta = 0.0;
    float base = 0.1f;
    NormalizationParams norm = NormalizationParams::imagenet();
    // MovingBlock: start slot of the block; it moves +1 patch in x per
    // tubelet slot, wrapping around the row.
    std::size_t block_x = 0;
    std::size_t block_y = 0;
    float block_value = 0.95f;
};

VideoTensor gen_video(const SyntheticSpec& spec);

// Exact retained set implied by the moving-block geometry: first layer,
// plus at slot t the patch the block left and the one it entered.
StaticMask moving_block_prediction(const SyntheticSpec& spec);

// Pixel random walk where each spatial patch column gets its own step size
// drawn from {0, 0.005, 0.02, 0.05, 0.1, 0.3}. Produces masks with a mix of
// kept and pruned slots at the usual thresholds.
VideoTensor random_walk_video(const VideoDims& dims, const TubeletConfig& config, std::uint64_t seed);

// Naive normalization: one scalar expression per element.
VideoTensor oracle_normalize(const VideoTensor& video, const NormalizationParams& params);

// L1 difference read directly out of a (normalized) video's pixels.
double oracle_pixel_difference(const VideoTensor& normalized, const TubeletConfig& config, std::size_t x,
                               std::size_t y, std::size_t t_prev, DiffMetric metric);

// Triple loop over the patch grid's raw buffer.
StaticMask oracle_mask(const PatchGrid& grid, Threshold tau, DiffMetric metric);
// Same decision computed from the normalized video, bypassing patch extraction.
StaticMask oracle_mask_from_video(const VideoTensor& normalized, const TubeletConfig& config, Threshold tau,
                                  DiffMetric metric);

// For each retained slot: min over later retained t' of (t' - t), else
// grid_t - t. Literal scan, O(grid_t^2) per column.
RunLengthGrid oracle_run_lengths(const StaticMask& mask);

// Random mask with the whole first layer retained.
StaticMask random_mask_grid(std::size_t gx, std::size_t gy, std::size_t gt, double keep_probability,
                            std::uint64_t seed);

// A structurally valid token sequence with random payload; `conserving`
// makes run lengths sum to grid_t per column.
TokenSequence random_sequence(std::uint64_t seed, bool conserving = true);

// Scalar re-implementation of one token's embedding.
std::vector<float> oracle_embed(const Token& token, std::span<const float> patch, const PatchEmbedder& embedder,
                                const PositionalTables& tables);

}  // namespace rlt::testkit
