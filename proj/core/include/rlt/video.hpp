// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rlt {

struct VideoDims {
    std::size_t channels = 0;
    std::size_t frames = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t element_count() const noexcept { return channels * frames * height * width; }
    std::string to_string() const;

    friend bool operator==(const VideoDims&, const VideoDims&) = default;
};

// Dense C x T x H x W frame stack, channel-major (C outermost, W innermost).
// Raw pixels are expected in [0, 1]; normalized tensors are unbounded.
class VideoTensor {
public:
    VideoTensor() = default;
    // Zero-filled. Throws ConfigError if any dimension is 0.
    explicit VideoTensor(VideoDims dims);
    // Throws ConfigError if data.size() != dims.element_count().
    VideoTensor(VideoDims dims, std::vector<float> data);

    const VideoDims& dims() const noexcept { return dims_; }
    std::size_t channels() const noexcept { return dims_.channels; }
    std::size_t frames() const noexcept { return dims_.frames; }
    std::size_t height() const noexcept { return dims_.height; }
    std::size_t width() const noexcept { return dims_.width; }

    std::size_t index(std::size_t c, std::size_t t, std::size_t h, std::size_t w) const noexcept {
        return ((c * dims_.frames + t) * dims_.height + h) * dims_.width + w;
    }
    float at(std::size_t c, std::size_t t, std::size_t h, std::size_t w) const noexcept {
        return data_[index(c, t, h, w)];
    }
    float& at(std::size_t c, std::size_t t, std::size_t h, std::size_t w) noexcept {
        return data_[index(c, t, h, w)];
    }

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }

    friend bool operator==(const VideoTensor&, const VideoTensor&) = default;

private:
    VideoDims dims_;
    std::vector<float> data_;
};

struct TubeletConfig {
    std::size_t patch_x = 16;   // D_x, pixels along W
    std::size_t patch_y = 16;   // D_y, pixels along H
    std::size_t tubelet_t = 2;  // D_t, frames per tubelet
    std::size_t embed_dim = 64;

    // Throws ConfigError naming the first offending axis.
    void validate() const;
    void validate_for(const VideoDims& dims) const;

    friend bool operator==(const TubeletConfig&, const TubeletConfig&) = default;
};

struct NormalizationParams {
    std::vector<float> mean;
    std::vector<float> std;

    static NormalizationParams imagenet();
    // mean 0, std 1: normalize() becomes the identity.
    static NormalizationParams identity(std::size_t channels);

    // Throws ConfigError when sizes disagree with `channels` or a std is not
    // strictly positive and finite.
    void validate(std::size_t channels) const;

    friend bool operator==(const NormalizationParams&, const NormalizationParams&) = default;
};

// Video reorganized into non-overlapping tubelets. Tubelets are stored in
// (t, y, x) slot order; each one holds C*D_t*D_y*D_x floats laid out as
// [c][dt][dy][dx], i.e. the flattening a Conv3d patch embedding uses.
class PatchGrid {
public:
    PatchGrid(std::size_t channels, TubeletConfig config, std::size_t grid_x, std::size_t grid_y,
              std::size_t grid_t, std::vector<float> patches);

    std::size_t channels() const noexcept { return channels_; }
    const TubeletConfig& config() const noexcept { return config_; }
    std::size_t grid_x() const noexcept { return grid_x_; }
    std::size_t grid_y() const noexcept { return grid_y_; }
    std::size_t grid_t() const noexcept { return grid_t_; }
    std::size_t patch_count() const noexcept { return grid_x_ * grid_y_ * grid_t_; }
    std::size_t patch_size() const noexcept {
        return channels_ * config_.tubelet_t * config_.patch_y * config_.patch_x;
    }
    // Elements in one single-frame crop of a tubelet.
    std::size_t crop_size() const noexcept { return channels_ * config_.patch_y * config_.patch_x; }

    std::size_t slot_index(std::size_t x, std::size_t y, std::size_t t) const noexcept {
        return (t * grid_y_ + y) * grid_x_ + x;
    }
    // Throws BoundsError on out-of-range slots.
    std::span<const float> patch(std::size_t x, std::size_t y, std::size_t t) const;
    std::span<const float> raw() const noexcept { return patches_; }

    VideoDims video_dims() const noexcept {
        return {channels_, grid_t_ * config_.tubelet_t, grid_y_ * config_.patch_y,
                grid_x_ * config_.patch_x};
    }

private:
    std::size_t channels_;
    TubeletConfig config_;
    std::size_t grid_x_;
    std::size_t grid_y_;
    std::size_t grid_t_;
    std::vector<float> patches_;
};

// Throws DataError on the first NaN/Inf, naming its flat index.
void require_finite(const VideoTensor& video);

// out[c,t,h,w] = (in[c,t,h,w] - mean[c]) / std[c]
VideoTensor normalize(const VideoTensor& video, const NormalizationParams& params);
VideoTensor denormalize(const VideoTensor& video, const NormalizationParams& params);

PatchGrid extract_patches(const VideoTensor& video, const TubeletConfig& config);
// Inverse of extract_patches.
VideoTensor reassemble(const PatchGrid& grid);

// The C*D_y*D_x spatial crop of tubelet (x, y, t_slot) at absolute frame
// t_slot*D_t + frame_offset, laid out [c][dy][dx].
std::vector<float> patch_frame_crop(const PatchGrid& grid, std::size_t x, std::size_t y,
                                    std::size_t t_slot, std::size_t frame_offset);

}  // namespace rlt
