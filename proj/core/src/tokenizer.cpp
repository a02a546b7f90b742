// SPDX-License-Identifier: Apache-2.0

#include "rlt/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <tuple>

#include "rlt/errors.hpp"
#include "rlt/random.hpp"

namespace rlt {

std::string_view to_string(DiffMetric metric) noexcept {
    return metric == DiffMetric::SumAbs ? "sum_abs" : "mean_abs";
}

DiffMetric parse_metric(std::string_view text) {
    if (text == "mean" || text == "mean_abs") return DiffMetric::MeanAbs;
    if (text == "sum" || text == "sum_abs") return DiffMetric::SumAbs;
    throw ConfigError("unknown difference metric '" + std::string(text) + "' (expected mean|sum)");
}

Threshold::Threshold(double tau) : tau_(tau) {
    if (std::isnan(tau) || tau < 0.0) {
        throw ConfigError("threshold tau must be >= 0, got " + std::to_string(tau));
    }
}

StaticMask::StaticMask(std::size_t grid_x, std::size_t grid_y, std::size_t grid_t, bool fill)
    : grid_x_(grid_x), grid_y_(grid_y), grid_t_(grid_t), bits_(grid_x * grid_y * grid_t, fill ? 1 : 0) {}

std::size_t StaticMask::retained_count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool StaticMask::first_slot_invariant_holds() const noexcept {
    const std::size_t layer = grid_x_ * grid_y_;
    return std::all_of(bits_.begin(), bits_.begin() + static_cast<std::ptrdiff_t>(layer),
                       [](std::uint8_t b) { return b != 0; });
}

DifferenceGrid::DifferenceGrid(std::size_t grid_x, std::size_t grid_y, std::size_t grid_t,
                               DiffMetric metric)
    : grid_x_(grid_x),
      grid_y_(grid_y),
      grid_t_(grid_t),
      metric_(metric),
      values_(grid_x * grid_y * (grid_t > 0 ? grid_t - 1 : 0), 0.0) {}

RunLengthGrid::RunLengthGrid(std::size_t grid_x, std::size_t grid_y, std::size_t grid_t)
    : grid_x_(grid_x), grid_y_(grid_y), grid_t_(grid_t), lengths_(grid_x * grid_y * grid_t, 0) {}

TokenSequence::TokenSequence(SourceInfo source, std::vector<Token> tokens, std::vector<float> payload)
    : source_(std::move(source)), tokens_(std::move(tokens)), payload_(std::move(payload)) {
    if (payload_.size() != tokens_.size() * source_.patch_size()) {
        throw ContractError("token payload has " + std::to_string(payload_.size()) +
                            " floats, expected " +
                            std::to_string(tokens_.size() * source_.patch_size()));
    }
}

std::span<const float> TokenSequence::patch(std::size_t i) const {
    if (i >= tokens_.size()) {
        throw BoundsError("token index " + std::to_string(i) + " >= " + std::to_string(tokens_.size()));
    }
    const std::size_t n = patch_size();
    return std::span<const float>(payload_).subspan(i * n, n);
}

void check_sequence(const TokenSequence& seq, bool require_conservation) {
    const auto& src = seq.source();
    const std::size_t gx = src.grid_x(), gy = src.grid_y(), gt = src.grid_t();
    const auto tokens = seq.tokens();
    std::vector<std::uint32_t> column_sum(gx * gy, 0);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const Token& tok = tokens[i];
        if (tok.x >= gx || tok.y >= gy || tok.t >= gt) {
            throw ContractError("token " + std::to_string(i) + " lies outside the source grid");
        }
        if (tok.run_length < 1 || tok.run_length > gt) {
            throw ContractError("token " + std::to_string(i) + " has run length " +
                                std::to_string(tok.run_length) + " outside [1, " +
                                std::to_string(gt) + "]");
        }
        if (i > 0) {
            const Token& prev = tokens[i - 1];
            if (std::tie(prev.t, prev.y, prev.x) >= std::tie(tok.t, tok.y, tok.x)) {
                throw ContractError("tokens are not in strict (t, y, x) order at index " +
                                    std::to_string(i));
            }
        }
        column_sum[tok.y * gx + tok.x] += tok.run_length;
    }
    if (require_conservation) {
        for (std::size_t i = 0; i < column_sum.size(); ++i) {
            if (column_sum[i] != gt) {
                throw ContractError("run lengths of column (" + std::to_string(i % gx) + ", " +
                                    std::to_string(i / gx) + ") sum to " +
                                    std::to_string(column_sum[i]) + ", expected " +
                                    std::to_string(gt));
            }
        }
    }
}

namespace {

// Sum of |first crop of `earlier` - last crop of `later`| over one tubelet
// pair, in double precision. Both spans are full tubelets.
double l1_first_vs_last(std::span<const float> earlier, std::span<const float> later,
                        std::size_t channels, std::size_t tubelet_t, std::size_t crop_plane) {
    double sum = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
        const float* a = earlier.data() + (c * tubelet_t) * crop_plane;
        const float* b = later.data() + (c * tubelet_t + tubelet_t - 1) * crop_plane;
        for (std::size_t i = 0; i < crop_plane; ++i) {
            sum += std::fabs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
        }
    }
    return sum;
}

double finish(double sum, std::size_t count, DiffMetric metric) {
    return metric == DiffMetric::MeanAbs ? sum / static_cast<double>(count) : sum;
}

}  // namespace

double patch_difference(const PatchGrid& grid, std::size_t x, std::size_t y, std::size_t t_prev,
                        std::size_t t_next, DiffMetric metric) {
    if (t_next != t_prev + 1) {
        throw UsageError("patch_difference compares adjacent slots only, got t_prev=" +
                         std::to_string(t_prev) + " t_next=" + std::to_string(t_next));
    }
    const auto& cfg = grid.config();
    const std::size_t plane = cfg.patch_y * cfg.patch_x;
    const double sum = l1_first_vs_last(grid.patch(x, y, t_prev), grid.patch(x, y, t_next),
                                        grid.channels(), cfg.tubelet_t, plane);
    return finish(sum, grid.crop_size(), metric);
}

DifferenceGrid compute_differences(const PatchGrid& grid, DiffMetric metric) {
    const std::size_t gx = grid.grid_x(), gy = grid.grid_y(), gt = grid.grid_t();
    const auto& cfg = grid.config();
    const std::size_t plane = cfg.patch_y * cfg.patch_x;
    const std::size_t n = grid.patch_size();
    const auto raw = grid.raw();
    DifferenceGrid diffs(gx, gy, gt, metric);
    for (std::size_t t = 1; t < gt; ++t) {
        for (std::size_t y = 0; y < gy; ++y) {
            for (std::size_t x = 0; x < gx; ++x) {
                const auto earlier = raw.subspan(grid.slot_index(x, y, t - 1) * n, n);
                const auto later = raw.subspan(grid.slot_index(x, y, t) * n, n);
                const double sum = l1_first_vs_last(earlier, later, grid.channels(), cfg.tubelet_t, plane);
                diffs.at(x, y, t) = finish(sum, grid.crop_size(), metric);
            }
        }
    }
    return diffs;
}

DifferenceGrid compute_differences(const VideoTensor& video, const NormalizationParams& norm,
                                   const TubeletConfig& config, DiffMetric metric) {
    config.validate_for(video.dims());
    norm.validate(video.channels());
    require_finite(video);
    const std::size_t C = video.channels();
    const std::size_t dx = config.patch_x, dy = config.patch_y, dt = config.tubelet_t;
    const std::size_t gx = video.width() / dx, gy = video.height() / dy, gt = video.frames() / dt;
    const std::size_t crop = C * dy * dx;
    DifferenceGrid diffs(gx, gy, gt, metric);
    std::vector<double> sums(gx);
    const float* data = video.data().data();
    for (std::size_t t = 1; t < gt; ++t) {
        for (std::size_t y = 0; y < gy; ++y) {
            std::fill(sums.begin(), sums.end(), 0.0);
            // c, row, column order per tubelet, matching the patch-grid path
            for (std::size_t c = 0; c < C; ++c) {
                const float mean = norm.mean[c], std = norm.std[c];
                for (std::size_t h = y * dy; h < (y + 1) * dy; ++h) {
                    const float* a = data + video.index(c, (t - 1) * dt, h, 0);
                    const float* b = data + video.index(c, t * dt + dt - 1, h, 0);
                    for (std::size_t x = 0; x < gx; ++x) {
                        double acc = sums[x];
                        for (std::size_t w = x * dx; w < (x + 1) * dx; ++w) {
                            const float na = (a[w] - mean) / std;
                            const float nb = (b[w] - mean) / std;
                            acc += std::fabs(static_cast<double>(na) - static_cast<double>(nb));
                        }
                        sums[x] = acc;
                    }
                }
            }
            for (std::size_t x = 0; x < gx; ++x) diffs.at(x, y, t) = finish(sums[x], crop, metric);
        }
    }
    return diffs;
}

StaticMask mask_from_differences(const DifferenceGrid& diffs, Threshold tau) {
    StaticMask mask(diffs.grid_x(), diffs.grid_y(), diffs.grid_t(), true);
    const double limit = tau.value();
    for (std::size_t t = 1; t < diffs.grid_t(); ++t) {
        for (std::size_t y = 0; y < diffs.grid_y(); ++y) {
            for (std::size_t x = 0; x < diffs.grid_x(); ++x) {
                // static iff diff < tau; equality keeps the token
                mask.set(x, y, t, !(diffs.at(x, y, t) < limit));
            }
        }
    }
    return mask;
}

StaticMask compute_static_mask(const PatchGrid& grid, Threshold tau, DiffMetric metric) {
    return mask_from_differences(compute_differences(grid, metric), tau);
}

RunLengthGrid compute_run_lengths(const StaticMask& mask) {
    if (!mask.first_slot_invariant_holds()) {
        throw ContractError("static mask does not retain the whole first temporal layer");
    }
    const std::size_t gx = mask.grid_x(), gy = mask.grid_y(), gt = mask.grid_t();
    RunLengthGrid lengths(gx, gy, gt);
    for (std::size_t y = 0; y < gy; ++y) {
        for (std::size_t x = 0; x < gx; ++x) {
            std::size_t next = gt;
            for (std::size_t t = gt; t-- > 0;) {
                if (mask.retained(x, y, t)) {
                    lengths.at(x, y, t) = static_cast<std::uint32_t>(next - t);
                    next = t;
                }
            }
        }
    }
    return lengths;
}

TokenSequence gather_tokens(const PatchGrid& grid, const StaticMask& mask,
                            const RunLengthGrid& lengths, SourceInfo source) {
    const std::size_t gx = grid.grid_x(), gy = grid.grid_y(), gt = grid.grid_t();
    if (mask.grid_x() != gx || mask.grid_y() != gy || mask.grid_t() != gt ||
        lengths.grid_x() != gx || lengths.grid_y() != gy || lengths.grid_t() != gt) {
        throw UsageError("mask, run lengths and patch grid disagree on grid dimensions");
    }
    const std::size_t n = grid.patch_size();
    const std::size_t count = mask.retained_count();
    std::vector<Token> tokens;
    tokens.reserve(count);
    std::vector<float> payload(count * n);
    const auto raw = grid.raw();
    float* dst = payload.data();
    for (std::size_t t = 0; t < gt; ++t) {
        for (std::size_t y = 0; y < gy; ++y) {
            for (std::size_t x = 0; x < gx; ++x) {
                if (!mask.retained(x, y, t)) continue;
                tokens.push_back({static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                                  static_cast<std::uint32_t>(t), lengths.at(x, y, t)});
                std::memcpy(dst, raw.data() + grid.slot_index(x, y, t) * n, n * sizeof(float));
                dst += n;
            }
        }
    }
    return TokenSequence(std::move(source), std::move(tokens), std::move(payload));
}

namespace {

SourceInfo make_source(const VideoTensor& video, const TokenizeSettings& settings, bool u8_source) {
    return {video.dims(), settings.config, settings.norm, settings.tau.value(), settings.metric, u8_source};
}

}  // namespace

TokenSequence tokenize(const VideoTensor& video, const TokenizeSettings& settings, bool u8_source) {
    const StaticMask mask = mask_from_differences(
        compute_differences(video, settings.norm, settings.config, settings.metric), settings.tau);
    const RunLengthGrid lengths = compute_run_lengths(mask);

    const auto& cfg = settings.config;
    const std::size_t C = video.channels();
    const std::size_t dx = cfg.patch_x, dy = cfg.patch_y, dt = cfg.tubelet_t;
    const std::size_t gx = mask.grid_x(), gy = mask.grid_y(), gt = mask.grid_t();
    const std::size_t n = C * dt * dy * dx;
    std::vector<Token> tokens;
    tokens.reserve(mask.retained_count());
    std::vector<float> payload(mask.retained_count() * n);
    const float* data = video.data().data();
    float* dst = payload.data();
    for (std::size_t t = 0; t < gt; ++t) {
        for (std::size_t y = 0; y < gy; ++y) {
            for (std::size_t x = 0; x < gx; ++x) {
                if (!mask.retained(x, y, t)) continue;
                tokens.push_back({static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                                  static_cast<std::uint32_t>(t), lengths.at(x, y, t)});
                for (std::size_t c = 0; c < C; ++c) {
                    const float mean = settings.norm.mean[c], std = settings.norm.std[c];
                    for (std::size_t f = t * dt; f < (t + 1) * dt; ++f) {
                        for (std::size_t h = y * dy; h < (y + 1) * dy; ++h) {
                            const float* row = data + video.index(c, f, h, x * dx);
                            for (std::size_t w = 0; w < dx; ++w) *dst++ = (row[w] - mean) / std;
                        }
                    }
                }
            }
        }
    }
    return TokenSequence(make_source(video, settings, u8_source), std::move(tokens), std::move(payload));
}

TokenSequence standard_tokenize(const VideoTensor& video, const TokenizeSettings& settings,
                                bool u8_source) {
    settings.config.validate_for(video.dims());
    const PatchGrid grid = extract_patches(normalize(video, settings.norm), settings.config);
    const StaticMask mask(grid.grid_x(), grid.grid_y(), grid.grid_t(), true);
    return gather_tokens(grid, mask, compute_run_lengths(mask), make_source(video, settings, u8_source));
}

double reduction_ratio(const TokenSequence& seq) {
    const std::size_t total = seq.source().slot_count();
    if (total == 0) return 0.0;
    return 1.0 - static_cast<double>(seq.size()) / static_cast<double>(total);
}

TokenSequence random_mask(const TokenSequence& seq, double ratio, std::uint64_t seed) {
    if (!(ratio >= 0.0 && ratio < 1.0)) {
        throw UsageError("random_mask ratio must lie in [0, 1), got " + std::to_string(ratio));
    }
    const std::size_t n = seq.size();
    // The epsilon keeps ratios like 0.72 * 100 from flooring to 71.
    const auto drop = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));

    // Partial Fisher-Yates: the first `drop` entries of `order` are removed.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i < drop; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(order[i], order[j]);
    }
    std::vector<std::uint8_t> keep(n, 1);
    for (std::size_t i = 0; i < drop; ++i) keep[order[i]] = 0;

    const std::size_t width = seq.patch_size();
    std::vector<Token> tokens;
    tokens.reserve(n - drop);
    std::vector<float> payload;
    payload.reserve((n - drop) * width);
    for (std::size_t i = 0; i < n; ++i) {
        if (!keep[i]) continue;
        tokens.push_back(seq.token(i));
        const auto p = seq.patch(i);
        payload.insert(payload.end(), p.begin(), p.end());
    }
    return TokenSequence(seq.source(), std::move(tokens), std::move(payload));
}

}  // namespace rlt
