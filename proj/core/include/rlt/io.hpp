// SPDX-License-Identifier: Apache-2.0

// File formats (all little-endian):
//
//   RLTV1  raw video
//     "RLTV1" | u8 dtype (0 = f32, 1 = u8) | u32 C, T, H, W | C*T*H*W elements,
//     channel-major. u8 elements are divided by 255 on read.
//
//   RLTT1  one token sequence
//     "RLTT1" | config block | sequence block
//
//   RLTP1  packed batch
//     "RLTP1" | config block | u32 B | u32 boundaries[B + 1] |
//     B x (u32 id_len | id bytes | sequence block)
//
//   config block:   u32 patch_x, patch_y, tubelet_t, embed_dim | f64 tau |
//                   u8 metric (0 = mean_abs, 1 = sum_abs) | u32 n |
//                   f32 mean[n] | f32 std[n]
//   sequence block: u8 source dtype | u32 C, T, H, W | u32 N | u32 P |
//                   N x (u32 x, y, t, run_length | f32 payload[P])
//
// Readers reject trailing bytes, short payloads and inconsistent counts.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rlt/packing.hpp"
#include "rlt/tokenizer.hpp"
#include "rlt/video.hpp"

namespace rlt {

enum class RawDType : std::uint8_t { F32 = 0, U8 = 1 };

struct IngestedVideo {
    VideoTensor video;
    bool u8_source = false;
};

std::vector<std::uint8_t> encode_raw(const VideoTensor& video, RawDType dtype = RawDType::F32);
IngestedVideo decode_raw(std::span<const std::uint8_t> bytes);

void write_raw(const std::filesystem::path& path, const VideoTensor& video, RawDType dtype = RawDType::F32);
VideoTensor read_raw(const std::filesystem::path& path, bool* u8_source = nullptr);

// Interleaved 8-bit image, row-major, `channels` values per pixel.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> pixels;
};

// PNG via libpng, or binary PPM/PGM (P6/P5), chosen by extension.
Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& image);

// Frame `t` of a C=1 or C=3 video, values clamped to [0, 1] and scaled to 8 bits.
Image frame_to_image(const VideoTensor& video, std::size_t t);

// "frame_2" < "frame_10": digit runs compare by value.
bool natural_less(const std::string& a, const std::string& b);

// Every file in `dir` whose name matches the glob `pattern`, in natural
// order, stacked as frames of a 3-channel video. Grayscale is replicated to
// RGB, alpha is dropped, bytes are divided by 255.
VideoTensor read_image_dir(const std::filesystem::path& dir, const std::string& pattern = "*.png");

// Exactly T frames of interleaved HWC RGB24 (or C-channel) bytes, e.g. the
// output of `ffmpeg -f rawvideo -pix_fmt rgb24 -`. Transposed to
// channel-major and divided by 255.
VideoTensor read_frame_pipe(std::istream& stream, const VideoDims& dims);

std::vector<std::uint8_t> encode_tokens(const TokenSequence& seq);
TokenSequence decode_tokens(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_batch(const PackedBatch& batch);
PackedBatch decode_batch(std::span<const std::uint8_t> bytes);

void write_tokens(const std::filesystem::path& path, const TokenSequence& seq);
TokenSequence read_tokens(const std::filesystem::path& path);
void write_batch(const std::filesystem::path& path, const PackedBatch& batch);
PackedBatch read_batch(const std::filesystem::path& path);

// The 5-byte magic at the start of a file, or "" if it is shorter.
std::string sniff_magic(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace rlt
