// SPDX-License-Identifier: Apache-2.0

#include "testkit.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace rlt::testkit {

namespace {

// Static per-pixel texture for one frame: values in [lo, hi).
std::vector<float> texture(const VideoDims& dims, std::mt19937_64& rng, float lo, float hi) {
    std::uniform_real_distribution<float> u(lo, hi);
    std::vector<float> frame(dims.channels * dims.height * dims.width);
    for (float& v : frame) v = u(rng);
    return frame;
}

void put_frame(VideoTensor& video, std::size_t t, const std::vector<float>& frame) {
    const std::size_t hw = video.height() * video.width();
    for (std::size_t c = 0; c < video.channels(); ++c) {
        for (std::size_t i = 0; i < hw; ++i) {
            video.at(c, t, i / video.width(), i % video.width()) = frame[c * hw + i];
        }
    }
}

}  // namespace

VideoTensor gen_video(const SyntheticSpec& spec) {
    const VideoDims& dims = spec.dims;
    spec.config.validate_for(dims);
    VideoTensor video(dims);
    std::mt19937_64 rng(spec.seed);
    const std::size_t dt = spec.config.tubelet_t;

    switch (spec.kind) {
        case SyntheticKind::Static: {
            const auto frame = texture(dims, rng, 0.0f, 1.0f);
            for (std::size_t t = 0; t < dims.frames; ++t) put_frame(video, t, frame);
            break;
        }
        case SyntheticKind::Noise: {
            const auto frozen = texture(dims, rng, 0.0f, 1.0f);
            const std::size_t patch_rows = dims.height / spec.config.patch_y;
            const auto frozen_rows = static_cast<std::size_t>(std::floor(spec.static_fraction * static_cast<double>(patch_rows))) *
                                     spec.config.patch_y;
            const std::size_t hw = dims.height * dims.width;
            for (std::size_t t = 0; t < dims.frames; ++t) {
                auto frame = texture(dims, rng, 0.0f, 1.0f);
                for (std::size_t c = 0; c < dims.channels; ++c) {
                    for (std::size_t i = 0; i < frozen_rows * dims.width; ++i) frame[c * hw + i] = frozen[c * hw + i];
                }
                put_frame(video, t, frame);
            }
            break;
        }
        case SyntheticKind::MovingBlock: {
            // Background texture stays below 0.5 so the block (>= 0.95) always
            // differs from whatever it covers by far more than any usual tau.
            const auto background = texture(dims, rng, 0.0f, 0.5f);
            const std::size_t gx = dims.width / spec.config.patch_x;
            for (std::size_t t = 0; t < dims.frames; ++t) {
                put_frame(video, t, background);
                const std::size_t bx = (spec.block_x + t / dt) % gx;
                for (std::size_t c = 0; c < dims.channels; ++c) {
                    for (std::size_t h = 0; h < spec.config.patch_y; ++h) {
                        for (std::size_t w = 0; w < spec.config.patch_x; ++w) {
                            video.at(c, t, spec.block_y * spec.config.patch_y + h, bx * spec.config.patch_x + w) =
                                spec.block_value;
                        }
                    }
                }
            }
            break;
        }
        case SyntheticKind::BrightnessRamp: {
            if (spec.norm.std.size() != dims.channels) throw std::invalid_argument("ramp norm/channel mismatch");
            for (std::size_t c = 0; c < dims.channels; ++c) {
                const double step = spec.delta * static_cast<double>(spec.norm.std[c]);
                for (std::size_t t = 0; t < dims.frames; ++t) {
                    const auto value = static_cast<float>(spec.base + static_cast<double>(t / dt) * step);
                    for (std::size_t h = 0; h < dims.height; ++h) {
                        for (std::size_t w = 0; w < dims.width; ++w) video.at(c, t, h, w) = value;
                    }
                }
            }
            break;
        }
        case SyntheticKind::TwoSegmentStatic: {
            const auto first = texture(dims, rng, 0.0f, 0.5f);
            const auto second = texture(dims, rng, 0.5f, 1.0f);
            for (std::size_t t = 0; t < dims.frames; ++t) put_frame(video, t, t < dims.frames / 2 ? first : second);
            break;
        }
    }
    return video;
}

StaticMask moving_block_prediction(const SyntheticSpec& spec) {
    const std::size_t gx = spec.dims.width / spec.config.patch_x;
    const std::size_t gy = spec.dims.height / spec.config.patch_y;
    const std::size_t gt = spec.dims.frames / spec.config.tubelet_t;
    StaticMask mask(gx, gy, gt, false);
    for (std::size_t y = 0; y < gy; ++y) {
        for (std::size_t x = 0; x < gx; ++x) mask.set(x, y, 0, true);
    }
    for (std::size_t t = 1; t < gt; ++t) {
        mask.set((spec.block_x + t - 1) % gx, spec.block_y, t, true);  // vacated
        mask.set((spec.block_x + t) % gx, spec.block_y, t, true);      // entered
    }
    return mask;
}

VideoTensor random_walk_video(const VideoDims& dims, const TubeletConfig& config, std::uint64_t seed) {
    static constexpr float kSteps[] = {0.0f, 0.005f, 0.02f, 0.05f, 0.1f, 0.3f};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);
    std::uniform_real_distribution<float> sym(-1.0f, 1.0f);
    std::uniform_int_distribution<std::size_t> pick(0, std::size(kSteps) - 1);

    const std::size_t gx = dims.width / config.patch_x, gy = dims.height / config.patch_y;
    std::vector<float> step(gx * gy);
    for (float& s : step) s = kSteps[pick(rng)];

    VideoTensor video(dims);
    for (std::size_t c = 0; c < dims.channels; ++c) {
        for (std::size_t h = 0; h < dims.height; ++h) {
            for (std::size_t w = 0; w < dims.width; ++w) video.at(c, 0, h, w) = unit(rng);
        }
    }
    for (std::size_t t = 1; t < dims.frames; ++t) {
        for (std::size_t c = 0; c < dims.channels; ++c) {
            for (std::size_t h = 0; h < dims.height; ++h) {
                for (std::size_t w = 0; w < dims.width; ++w) {
                    const float s = step[(h / config.patch_y) * gx + w / config.patch_x];
                    video.at(c, t, h, w) = video.at(c, t - 1, h, w) + s * sym(rng);
                }
            }
        }
    }
    return video;
}

VideoTensor oracle_normalize(const VideoTensor& video, const NormalizationParams& params) {
    VideoTensor out(video.dims());
    for (std::size_t c = 0; c < video.channels(); ++c) {
        for (std::size_t t = 0; t < video.frames(); ++t) {
            for (std::size_t h = 0; h < video.height(); ++h) {
                for (std::size_t w = 0; w < video.width(); ++w) {
                    out.at(c, t, h, w) = (video.at(c, t, h, w) - params.mean[c]) / params.std[c];
                }
            }
        }
    }
    return out;
}

double oracle_pixel_difference(const VideoTensor& normalized, const TubeletConfig& config, std::size_t x,
                               std::size_t y, std::size_t t_prev, DiffMetric metric) {
    const std::size_t first_frame = t_prev * config.tubelet_t;
    const std::size_t last_frame = (t_prev + 1) * config.tubelet_t + config.tubelet_t - 1;
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < normalized.channels(); ++c) {
        for (std::size_t h = y * config.patch_y; h < (y + 1) * config.patch_y; ++h) {
            for (std::size_t w = x * config.patch_x; w < (x + 1) * config.patch_x; ++w) {
                const double a = normalized.at(c, first_frame, h, w);
                const double b = normalized.at(c, last_frame, h, w);
                sum += std::fabs(a - b);
                ++count;
            }
        }
    }
    return metric == DiffMetric::MeanAbs ? sum / static_cast<double>(count) : sum;
}

StaticMask oracle_mask(const PatchGrid& grid, Threshold tau, DiffMetric metric) {
    const auto& cfg = grid.config();
    const std::size_t gx = grid.grid_x(), gy = grid.grid_y(), gt = grid.grid_t();
    const std::size_t C = grid.channels(), dt = cfg.tubelet_t, dy = cfg.patch_y, dx = cfg.patch_x;
    const std::size_t n = C * dt * dy * dx;
    const auto raw = grid.raw();
    StaticMask mask(gx, gy, gt, false);
    for (std::size_t t = 0; t < gt; ++t) {
        for (std::size_t y = 0; y < gy; ++y) {
            for (std::size_t x = 0; x < gx; ++x) {
                if (t == 0) {
                    mask.set(x, y, t, true);
                    continue;
                }
                const std::size_t prev = ((t - 1) * gy + y) * gx + x;
                const std::size_t cur = (t * gy + y) * gx + x;
                double sum = 0.0;
                for (std::size_t c = 0; c < C; ++c) {
                    for (std::size_t j = 0; j < dy; ++j) {
                        for (std::size_t i = 0; i < dx; ++i) {
                            const double a = raw[prev * n + ((c * dt + 0) * dy + j) * dx + i];
                            const double b = raw[cur * n + ((c * dt + dt - 1) * dy + j) * dx + i];
                            sum += std::fabs(a - b);
                        }
                    }
                }
                const double diff = metric == DiffMetric::MeanAbs ? sum / static_cast<double>(C * dy * dx) : sum;
                mask.set(x, y, t, !(diff < tau.value()));
            }
        }
    }
    return mask;
}

StaticMask oracle_mask_from_video(const VideoTensor& normalized, const TubeletConfig& config, Threshold tau,
                                  DiffMetric metric) {
    const std::size_t gx = normalized.width() / config.patch_x;
    const std::size_t gy = normalized.height() / config.patch_y;
    const std::size_t gt = normalized.frames() / config.tubelet_t;
    StaticMask mask(gx, gy, gt, true);
    for (std::size_t t = 1; t < gt; ++t) {
        for (std::size_t y = 0; y < gy; ++y) {
            for (std::size_t x = 0; x < gx; ++x) {
                const double diff = oracle_pixel_difference(normalized, config, x, y, t - 1, metric);
                mask.set(x, y, t, diff >= tau.value());
            }
        }
    }
    return mask;
}

RunLengthGrid oracle_run_lengths(const StaticMask& mask) {
    const std::size_t gx = mask.grid_x(), gy = mask.grid_y(), gt = mask.grid_t();
    RunLengthGrid out(gx, gy, gt);
    for (std::size_t y = 0; y < gy; ++y) {
        for (std::size_t x = 0; x < gx; ++x) {
            for (std::size_t t = 0; t < gt; ++t) {
                if (!mask.retained(x, y, t)) continue;
                std::size_t best = gt - t;
                for (std::size_t later = t + 1; later < gt; ++later) {
                    if (mask.retained(x, y, later) && later - t < best) best = later - t;
                }
                out.at(x, y, t) = static_cast<std::uint32_t>(best);
            }
        }
    }
    return out;
}

StaticMask random_mask_grid(std::size_t gx, std::size_t gy, std::size_t gt, double keep_probability,
                            std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution keep(keep_probability);
    StaticMask mask(gx, gy, gt, false);
    for (std::size_t t = 0; t < gt; ++t) {
        for (std::size_t y = 0; y < gy; ++y) {
            for (std::size_t x = 0; x < gx; ++x) mask.set(x, y, t, t == 0 || keep(rng));
        }
    }
    return mask;
}

TokenSequence random_sequence(std::uint64_t seed, bool conserving) {
    std::mt19937_64 rng(seed);
    auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
    SourceInfo src;
    src.config = {pick(1, 4), pick(1, 4), pick(1, 2), pick(8, 64)};
    src.dims = {pick(1, 3), src.config.tubelet_t * pick(1, 6), src.config.patch_y * pick(1, 4),
                src.config.patch_x * pick(1, 4)};
    src.norm = NormalizationParams::identity(src.dims.channels);
    for (auto& m : src.norm.mean) m = std::uniform_real_distribution<float>(0.3f, 0.6f)(rng);
    for (auto& s : src.norm.std) s = std::uniform_real_distribution<float>(0.1f, 0.4f)(rng);
    src.tau = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    src.metric = pick(0, 1) == 0 ? DiffMetric::MeanAbs : DiffMetric::SumAbs;
    src.u8_source = pick(0, 1) == 1;

    const StaticMask mask = random_mask_grid(src.grid_x(), src.grid_y(), src.grid_t(), 0.5, rng());
    const RunLengthGrid lengths = oracle_run_lengths(mask);
    std::vector<Token> tokens;
    std::vector<float> payload;
    std::normal_distribution<float> value(0.0f, 1.0f);
    for (std::size_t t = 0; t < src.grid_t(); ++t) {
        for (std::size_t y = 0; y < src.grid_y(); ++y) {
            for (std::size_t x = 0; x < src.grid_x(); ++x) {
                if (!mask.retained(x, y, t)) continue;
                if (!conserving && t > 0 && pick(0, 3) == 0) continue;
                tokens.push_back({static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                                  static_cast<std::uint32_t>(t), lengths.at(x, y, t)});
                for (std::size_t i = 0; i < src.patch_size(); ++i) payload.push_back(value(rng));
            }
        }
    }
    return TokenSequence(src, std::move(tokens), std::move(payload));
}

std::vector<float> oracle_embed(const Token& token, std::span<const float> patch, const PatchEmbedder& embedder,
                                const PositionalTables& tables) {
    const std::size_t d = embedder.weight.cols;
    std::vector<float> out(d);
    const std::size_t slot = (token.t * tables.grid_y + token.y) * tables.grid_x + token.x;
    for (std::size_t j = 0; j < d; ++j) {
        double acc = embedder.bias[j];
        for (std::size_t k = 0; k < patch.size(); ++k) acc += static_cast<double>(patch[k]) * embedder.weight(k, j);
        acc += tables.spatial_temporal[slot * d + j];
        acc += tables.length_bias[(token.run_length - 1) * d + j];
        out[j] = static_cast<float>(acc);
    }
    return out;
}

}  // namespace rlt::testkit
