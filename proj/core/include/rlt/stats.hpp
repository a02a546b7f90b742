// SPDX-License-Identifier: Apache-2.0

// Corpus-level token reduction reports, threshold sweeps and pruned-patch
// overlays.

#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "rlt/io.hpp"
#include "rlt/tokenizer.hpp"

namespace rlt {

// A clip that is loaded lazily, so unreadable inputs surface as skipped
// records instead of aborting the whole report.
struct ClipSource {
    std::string id;
    std::function<IngestedVideo()> load;
};

struct ClipRecord {
    std::string id;
    std::size_t slots = 0;     // N_P
    std::size_t retained = 0;  // N_P'
    double reduction = 0.0;
    std::size_t grid_x = 0;
    std::size_t grid_y = 0;
    std::size_t grid_t = 0;
    double tau = 0.0;
    DiffMetric metric = DiffMetric::MeanAbs;

    friend bool operator==(const ClipRecord&, const ClipRecord&) = default;
};

struct SkippedClip {
    std::string id;
    std::string reason;

    friend bool operator==(const SkippedClip&, const SkippedClip&) = default;
};

constexpr std::size_t kHistogramBuckets = 10;

struct ReductionSummary {
    double mean_reduction = 0.0;
    double median_reduction = 0.0;
    // Bucket i counts reductions in [i/10, (i+1)/10).
    std::array<std::size_t, kHistogramBuckets> histogram{};
    std::size_t tokens_before = 0;
    std::size_t tokens_after = 0;

    friend bool operator==(const ReductionSummary&, const ReductionSummary&) = default;
};

struct ReductionReport {
    double tau = 0.0;
    DiffMetric metric = DiffMetric::MeanAbs;
    std::vector<ClipRecord> records;  // input order
    std::vector<SkippedClip> skipped;
    ReductionSummary summary;

    friend bool operator==(const ReductionReport&, const ReductionReport&) = default;
};

ReductionSummary summarize(const std::vector<ClipRecord>& records);

// Tokenizes every clip (on up to `workers` threads) and reports its
// reduction. Record order and values do not depend on `workers`.
ReductionReport analyze(const std::vector<ClipSource>& clips, const TokenizeSettings& settings,
                        std::size_t workers = 1);

// One JSON object per line: a header, one line per clip, one per skipped
// clip, then the summary.
std::string report_jsonl(const ReductionReport& report);
std::string report_table(const ReductionReport& report);

struct SweepRow {
    double tau = 0.0;
    double mean_reduction = 0.0;
    double mean_tokens = 0.0;

    friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepReport {
    DiffMetric metric = DiffMetric::MeanAbs;
    std::size_t clip_count = 0;
    std::vector<SweepRow> rows;
    std::vector<SkippedClip> skipped;
};

std::vector<double> default_tau_grid();

// Mean reduction and token count per threshold. Differences are computed
// once per clip and re-thresholded. `tau_grid` must be non-decreasing
// (UsageError otherwise); settings.tau is ignored.
SweepReport sweep_tau(const std::vector<ClipSource>& clips, const TokenizeSettings& settings,
                      const std::vector<double>& tau_grid, std::size_t workers = 1);

std::string sweep_jsonl(const SweepReport& report);
std::string sweep_table(const SweepReport& report);

struct OverlayStyle {
    float gray = 0.5f;
};

struct Overlay {
    VideoTensor frames;                // same dims as the source video
    std::vector<std::uint8_t> pruned;  // T x H x W, 1 where a pixel was grayed
    std::size_t pruned_pixels(std::size_t frame) const;
};

// Source pixels where a token was kept, `style.gray` where the slot was
// pruned. `video` is the raw (unnormalized) clip `seq` was made from;
// UsageError if the dims or geometry disagree.
Overlay render_overlay(const VideoTensor& video, const TokenSequence& seq, const OverlayStyle& style = {});

}  // namespace rlt
