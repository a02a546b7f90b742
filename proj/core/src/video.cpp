// SPDX-License-Identifier: Apache-2.0

#include "rlt/video.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "rlt/errors.hpp"

namespace rlt {

std::string VideoDims::to_string() const {
    return std::to_string(channels) + "x" + std::to_string(frames) + "x" + std::to_string(height) +
           "x" + std::to_string(width);
}

namespace {

void check_dims(const VideoDims& dims) {
    if (dims.channels == 0 || dims.frames == 0 || dims.height == 0 || dims.width == 0) {
        throw ConfigError("video dimensions must all be >= 1, got " + dims.to_string());
    }
}

}  // namespace

VideoTensor::VideoTensor(VideoDims dims) : dims_(dims) {
    check_dims(dims_);
    data_.assign(dims_.element_count(), 0.0f);
}

VideoTensor::VideoTensor(VideoDims dims, std::vector<float> data) : dims_(dims), data_(std::move(data)) {
    check_dims(dims_);
    if (data_.size() != dims_.element_count()) {
        throw ConfigError("video data has " + std::to_string(data_.size()) + " elements, dims " +
                          dims_.to_string() + " require " + std::to_string(dims_.element_count()));
    }
}

void TubeletConfig::validate() const {
    if (patch_x == 0) throw ConfigError("patch_x must be >= 1");
    if (patch_y == 0) throw ConfigError("patch_y must be >= 1");
    if (tubelet_t == 0) throw ConfigError("tubelet_t must be >= 1");
}

void TubeletConfig::validate_for(const VideoDims& dims) const {
    validate();
    if (dims.width % patch_x != 0) {
        throw ConfigError("width " + std::to_string(dims.width) + " is not divisible by patch_x " +
                          std::to_string(patch_x));
    }
    if (dims.height % patch_y != 0) {
        throw ConfigError("height " + std::to_string(dims.height) + " is not divisible by patch_y " +
                          std::to_string(patch_y));
    }
    if (dims.frames % tubelet_t != 0) {
        throw ConfigError("frames " + std::to_string(dims.frames) +
                          " is not divisible by tubelet_t " + std::to_string(tubelet_t));
    }
}

NormalizationParams NormalizationParams::imagenet() {
    return {{0.485f, 0.456f, 0.406f}, {0.229f, 0.224f, 0.225f}};
}

NormalizationParams NormalizationParams::identity(std::size_t channels) {
    return {std::vector<float>(channels, 0.0f), std::vector<float>(channels, 1.0f)};
}

void NormalizationParams::validate(std::size_t channels) const {
    if (mean.size() != channels || std.size() != channels) {
        throw ConfigError("normalization has " + std::to_string(mean.size()) + " means and " +
                          std::to_string(std.size()) + " stds for a " + std::to_string(channels) +
                          "-channel video");
    }
    for (std::size_t c = 0; c < channels; ++c) {
        if (!std::isfinite(mean[c])) throw ConfigError("normalization mean is not finite");
        if (!(std[c] > 0.0f) || !std::isfinite(std[c])) {
            throw ConfigError("normalization std[" + std::to_string(c) + "] must be > 0");
        }
    }
}

PatchGrid::PatchGrid(std::size_t channels, TubeletConfig config, std::size_t grid_x,
                     std::size_t grid_y, std::size_t grid_t, std::vector<float> patches)
    : channels_(channels),
      config_(config),
      grid_x_(grid_x),
      grid_y_(grid_y),
      grid_t_(grid_t),
      patches_(std::move(patches)) {
    config_.validate();
    if (channels_ == 0 || grid_x_ == 0 || grid_y_ == 0 || grid_t_ == 0) {
        throw ConfigError("patch grid dimensions must all be >= 1");
    }
    if (patches_.size() != patch_count() * patch_size()) {
        throw ConfigError("patch grid payload has " + std::to_string(patches_.size()) +
                          " floats, expected " + std::to_string(patch_count() * patch_size()));
    }
}

std::span<const float> PatchGrid::patch(std::size_t x, std::size_t y, std::size_t t) const {
    if (x >= grid_x_ || y >= grid_y_ || t >= grid_t_) {
        throw BoundsError("patch slot (" + std::to_string(x) + ", " + std::to_string(y) + ", " +
                          std::to_string(t) + ") outside grid " + std::to_string(grid_x_) + "x" +
                          std::to_string(grid_y_) + "x" + std::to_string(grid_t_));
    }
    const std::size_t n = patch_size();
    return std::span<const float>(patches_).subspan(slot_index(x, y, t) * n, n);
}

void require_finite(const VideoTensor& video) {
    const auto data = video.data();
    const auto bad = std::find_if(data.begin(), data.end(), [](float v) { return !std::isfinite(v); });
    if (bad != data.end()) {
        throw DataError("non-finite pixel value at flat index " +
                        std::to_string(static_cast<std::size_t>(bad - data.begin())));
    }
}

namespace {

template <typename Op>
VideoTensor map_channels(const VideoTensor& video, const NormalizationParams& params, Op op) {
    params.validate(video.channels());
    require_finite(video);
    std::vector<float> out(video.data().size());
    const std::size_t plane = video.frames() * video.height() * video.width();
    const auto in = video.data();
    for (std::size_t c = 0; c < video.channels(); ++c) {
        const float mean = params.mean[c];
        const float std = params.std[c];
        const float* src = in.data() + c * plane;
        float* dst = out.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = op(src[i], mean, std);
    }
    return VideoTensor(video.dims(), std::move(out));
}

}  // namespace

VideoTensor normalize(const VideoTensor& video, const NormalizationParams& params) {
    return map_channels(video, params, [](float v, float mean, float std) { return (v - mean) / std; });
}

VideoTensor denormalize(const VideoTensor& video, const NormalizationParams& params) {
    return map_channels(video, params, [](float v, float mean, float std) { return v * std + mean; });
}

PatchGrid extract_patches(const VideoTensor& video, const TubeletConfig& config) {
    config.validate_for(video.dims());
    const std::size_t C = video.channels();
    const std::size_t dx = config.patch_x, dy = config.patch_y, dt = config.tubelet_t;
    const std::size_t gx = video.width() / dx, gy = video.height() / dy, gt = video.frames() / dt;
    const std::size_t patch_size = C * dt * dy * dx;

    std::vector<float> patches(gx * gy * gt * patch_size);
    const float* src = video.data().data();
    // Walk the source row by row; each row segment of dx pixels is contiguous
    // in both layouts.
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t f = 0; f < video.frames(); ++f) {
            const std::size_t t = f / dt, ft = f % dt;
            for (std::size_t h = 0; h < video.height(); ++h) {
                const std::size_t y = h / dy, fy = h % dy;
                const float* row = src + video.index(c, f, h, 0);
                for (std::size_t x = 0; x < gx; ++x) {
                    float* dst = patches.data() + ((t * gy + y) * gx + x) * patch_size +
                                 ((c * dt + ft) * dy + fy) * dx;
                    std::memcpy(dst, row + x * dx, dx * sizeof(float));
                }
            }
        }
    }
    return PatchGrid(C, config, gx, gy, gt, std::move(patches));
}

VideoTensor reassemble(const PatchGrid& grid) {
    const auto& config = grid.config();
    const std::size_t dx = config.patch_x, dy = config.patch_y, dt = config.tubelet_t;
    const std::size_t gx = grid.grid_x(), gy = grid.grid_y();
    const std::size_t patch_size = grid.patch_size();
    VideoTensor video(grid.video_dims());
    const float* src = grid.raw().data();
    float* out = video.data().data();
    for (std::size_t c = 0; c < video.channels(); ++c) {
        for (std::size_t f = 0; f < video.frames(); ++f) {
            const std::size_t t = f / dt, ft = f % dt;
            for (std::size_t h = 0; h < video.height(); ++h) {
                const std::size_t y = h / dy, fy = h % dy;
                float* row = out + video.index(c, f, h, 0);
                for (std::size_t x = 0; x < gx; ++x) {
                    const float* patch = src + ((t * gy + y) * gx + x) * patch_size +
                                         ((c * dt + ft) * dy + fy) * dx;
                    std::memcpy(row + x * dx, patch, dx * sizeof(float));
                }
            }
        }
    }
    return video;
}

std::vector<float> patch_frame_crop(const PatchGrid& grid, std::size_t x, std::size_t y,
                                    std::size_t t_slot, std::size_t frame_offset) {
    const auto& config = grid.config();
    if (frame_offset >= config.tubelet_t) {
        throw BoundsError("frame_offset " + std::to_string(frame_offset) +
                          " outside tubelet of " + std::to_string(config.tubelet_t) + " frames");
    }
    const auto patch = grid.patch(x, y, t_slot);
    const std::size_t row_block = config.patch_y * config.patch_x;
    std::vector<float> crop(grid.crop_size());
    for (std::size_t c = 0; c < grid.channels(); ++c) {
        const auto src = patch.subspan((c * config.tubelet_t + frame_offset) * row_block, row_block);
        std::copy(src.begin(), src.end(), crop.begin() + static_cast<std::ptrdiff_t>(c * row_block));
    }
    return crop;
}

}  // namespace rlt
