// SPDX-License-Identifier: Apache-2.0

#include "rlt/io.hpp"

#include <fnmatch.h>
#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>

#include "rlt/errors.hpp"

namespace rlt {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kVideoMagic = "RLTV1";
constexpr std::string_view kTokensMagic = "RLTT1";
constexpr std::string_view kBatchMagic = "RLTP1";

class ByteWriter {
public:
    void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        u32(bits);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        u64(bits);
    }
    void dim(std::size_t v, const char* what) {
        if (v > std::numeric_limits<std::uint32_t>::max()) {
            throw ConfigError(std::string(what) + " does not fit in 32 bits");
        }
        u32(static_cast<std::uint32_t>(v));
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw ParseError(std::string("truncated ") + what + ": expected " + std::to_string(n) +
                                 " bytes, " + std::to_string(remaining()) + " available",
                             pos_);
        }
    }
    void magic(std::string_view expected) {
        need(expected.size(), "magic");
        if (std::memcmp(data_.data() + pos_, expected.data(), expected.size()) != 0) {
            throw ParseError("bad magic: expected \"" + std::string(expected) + "\"", pos_);
        }
        pos_ += expected.size();
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return data_[pos_++];
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32(const char* what) {
        const std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    double f64(const char* what) {
        const std::uint64_t bits = u64(what);
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    std::string string(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void f32_array(std::span<float> out, const char* what) {
        need(out.size() * 4, what);
        for (float& v : out) v = f32(what);
    }
    void expect_end() const {
        if (remaining() != 0) {
            throw ParseError(std::to_string(remaining()) + " unexpected trailing bytes", pos_);
        }
    }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

// Product of dims, or ParseError if it overflows 64 bits.
std::uint64_t checked_count(std::initializer_list<std::uint64_t> dims, std::size_t offset) {
    std::uint64_t total = 1;
    for (std::uint64_t d : dims) {
        if (d != 0 && total > std::numeric_limits<std::uint64_t>::max() / d) {
            throw ParseError("dimension product overflows", offset);
        }
        total *= d;
    }
    return total;
}

VideoDims read_dims(ByteReader& in) {
    const std::size_t at = in.offset();
    VideoDims dims;
    dims.channels = in.u32("channel count");
    dims.frames = in.u32("frame count");
    dims.height = in.u32("height");
    dims.width = in.u32("width");
    if (dims.channels == 0 || dims.frames == 0 || dims.height == 0 || dims.width == 0) {
        throw ParseError("zero dimension in " + dims.to_string(), at);
    }
    return dims;
}

void write_dims(ByteWriter& out, const VideoDims& dims) {
    out.dim(dims.channels, "channel count");
    out.dim(dims.frames, "frame count");
    out.dim(dims.height, "height");
    out.dim(dims.width, "width");
}

// The part of SourceInfo shared by every sequence in a file.
struct ConfigBlock {
    TubeletConfig config;
    double tau = 0.0;
    DiffMetric metric = DiffMetric::MeanAbs;
    NormalizationParams norm;

    static ConfigBlock of(const SourceInfo& s) { return {s.config, s.tau, s.metric, s.norm}; }
};

void write_config(ByteWriter& out, const ConfigBlock& block) {
    out.dim(block.config.patch_x, "patch_x");
    out.dim(block.config.patch_y, "patch_y");
    out.dim(block.config.tubelet_t, "tubelet_t");
    out.dim(block.config.embed_dim, "embed_dim");
    out.f64(block.tau);
    out.u8(static_cast<std::uint8_t>(block.metric));
    out.dim(block.norm.mean.size(), "normalization channel count");
    for (float m : block.norm.mean) out.f32(m);
    for (float s : block.norm.std) out.f32(s);
}

ConfigBlock read_config(ByteReader& in) {
    ConfigBlock block;
    const std::size_t at = in.offset();
    block.config.patch_x = in.u32("patch_x");
    block.config.patch_y = in.u32("patch_y");
    block.config.tubelet_t = in.u32("tubelet_t");
    block.config.embed_dim = in.u32("embed_dim");
    if (block.config.patch_x == 0 || block.config.patch_y == 0 || block.config.tubelet_t == 0) {
        throw ParseError("tubelet dimensions must be >= 1", at);
    }
    const std::size_t tau_at = in.offset();
    block.tau = in.f64("tau");
    if (std::isnan(block.tau) || block.tau < 0.0) throw ParseError("invalid tau", tau_at);
    const std::size_t metric_at = in.offset();
    const std::uint8_t metric = in.u8("metric");
    if (metric > 1) throw ParseError("unknown metric code " + std::to_string(metric), metric_at);
    block.metric = static_cast<DiffMetric>(metric);
    const std::uint32_t n = in.u32("normalization channel count");
    in.need(static_cast<std::size_t>(n) * 8, "normalization parameters");
    block.norm.mean.resize(n);
    block.norm.std.resize(n);
    in.f32_array(block.norm.mean, "normalization mean");
    in.f32_array(block.norm.std, "normalization std");
    return block;
}

void write_sequence(ByteWriter& out, const TokenSequence& seq) {
    const auto& src = seq.source();
    out.u8(src.u8_source ? 1 : 0);
    write_dims(out, src.dims);
    out.dim(seq.size(), "token count");
    out.dim(seq.patch_size(), "patch size");
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const Token& tok = seq.token(i);
        out.u32(tok.x);
        out.u32(tok.y);
        out.u32(tok.t);
        out.u32(tok.run_length);
        for (float v : seq.patch(i)) out.f32(v);
    }
}

TokenSequence read_sequence(ByteReader& in, const ConfigBlock& block) {
    SourceInfo src;
    src.config = block.config;
    src.tau = block.tau;
    src.metric = block.metric;
    src.norm = block.norm;
    const std::size_t dtype_at = in.offset();
    const std::uint8_t dtype = in.u8("source dtype");
    if (dtype > 1) throw ParseError("unknown source dtype " + std::to_string(dtype), dtype_at);
    src.u8_source = dtype == 1;
    const std::size_t dims_at = in.offset();
    src.dims = read_dims(in);
    if (src.dims.width % src.config.patch_x != 0 || src.dims.height % src.config.patch_y != 0 ||
        src.dims.frames % src.config.tubelet_t != 0) {
        throw ParseError("source dims " + src.dims.to_string() + " do not divide into tubelets", dims_at);
    }
    if (src.norm.mean.size() != src.dims.channels) {
        throw ParseError("normalization has " + std::to_string(src.norm.mean.size()) +
                             " channels, source has " + std::to_string(src.dims.channels),
                         dims_at);
    }
    const std::size_t count_at = in.offset();
    const std::uint32_t count = in.u32("token count");
    const std::uint32_t patch = in.u32("patch size");
    const std::uint64_t expected_patch =
        checked_count({src.dims.channels, src.config.tubelet_t, src.config.patch_y, src.config.patch_x}, count_at);
    if (patch != expected_patch) {
        throw ParseError("patch size " + std::to_string(patch) + " != C*D_t*D_y*D_x = " +
                             std::to_string(expected_patch),
                         count_at);
    }
    if (count > src.slot_count()) {
        throw ParseError("token count " + std::to_string(count) + " exceeds the " +
                             std::to_string(src.slot_count()) + " slots of the source",
                         count_at);
    }
    const std::uint64_t record = 16 + 4 * static_cast<std::uint64_t>(patch);
    in.need(checked_count({count, record}, count_at), "token records");

    std::vector<Token> tokens(count);
    std::vector<float> payload(static_cast<std::size_t>(count) * patch);
    for (std::uint32_t i = 0; i < count; ++i) {
        Token& tok = tokens[i];
        tok.x = in.u32("token x");
        tok.y = in.u32("token y");
        tok.t = in.u32("token t");
        tok.run_length = in.u32("run length");
        in.f32_array(std::span<float>(payload).subspan(static_cast<std::size_t>(i) * patch, patch),
                     "token payload");
    }
    TokenSequence seq(std::move(src), std::move(tokens), std::move(payload));
    try {
        check_sequence(seq, false);
    } catch (const ContractError& e) {
        throw ParseError(std::string("invalid token records: ") + e.what(), count_at);
    }
    return seq;
}

float to_unit(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

std::uint8_t to_byte(float v) {
    const float clamped = std::clamp(std::isfinite(v) ? v : 0.0f, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

std::string lower_extension(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

Image read_png(const fs::path& path) {
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw ParseError("cannot read PNG " + path.string() + ": " + png.message, 0);
    }
    png.format = PNG_FORMAT_RGBA;
    Image rgba{png.width, png.height, 4, std::vector<std::uint8_t>(PNG_IMAGE_SIZE(png))};
    if (!png_image_finish_read(&png, nullptr, rgba.pixels.data(), 0, nullptr)) {
        const std::string message = png.message;
        png_image_free(&png);
        throw ParseError("cannot decode PNG " + path.string() + ": " + message, 0);
    }
    Image rgb{rgba.width, rgba.height, 3, std::vector<std::uint8_t>(rgba.width * rgba.height * 3)};
    for (std::size_t i = 0; i < rgba.width * rgba.height; ++i) {
        std::copy_n(rgba.pixels.begin() + static_cast<std::ptrdiff_t>(4 * i), 3,
                    rgb.pixels.begin() + static_cast<std::ptrdiff_t>(3 * i));
    }
    return rgb;
}

void write_png(const fs::path& path, const Image& image) {
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    if (image.channels == 1) {
        png.format = PNG_FORMAT_GRAY;
    } else if (image.channels == 3) {
        png.format = PNG_FORMAT_RGB;
    } else {
        throw UsageError("PNG output supports 1 or 3 channels");
    }
    if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
        throw Error("cannot write PNG " + path.string() + ": " + png.message);
    }
}

// Binary PGM/PPM with maxval 255.
Image read_pnm(const fs::path& path) {
    const auto bytes = read_file_bytes(path);
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&]() -> std::size_t {
        skip_space();
        const std::size_t start = pos;
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
            if (v > (1u << 24)) throw ParseError("PNM header value too large", start);
            ++pos;
        }
        if (pos == start) throw ParseError("malformed PNM header in " + path.string(), start);
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw ParseError("not a binary PGM/PPM file: " + path.string(), 0);
    }
    pos = 2;
    Image image;
    image.channels = bytes[1] == '6' ? 3 : 1;
    image.width = number();
    image.height = number();
    const std::size_t maxval = number();
    if (maxval != 255) throw ParseError("only 8-bit PNM files are supported", pos);
    ++pos;  // single whitespace before the raster
    const std::size_t need = image.width * image.height * image.channels;
    if (bytes.size() < pos || bytes.size() - pos != need) {
        throw ParseError("PNM raster has " + std::to_string(bytes.size() > pos ? bytes.size() - pos : 0) +
                             " bytes, expected " + std::to_string(need),
                         pos);
    }
    image.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    if (image.channels == 1) {
        Image rgb{image.width, image.height, 3, std::vector<std::uint8_t>(need * 3)};
        for (std::size_t i = 0; i < need; ++i) std::fill_n(rgb.pixels.begin() + static_cast<std::ptrdiff_t>(3 * i), 3, image.pixels[i]);
        return rgb;
    }
    return image;
}

void write_pnm(const fs::path& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3) throw UsageError("PNM output supports 1 or 3 channels");
    const std::string header = std::string(image.channels == 3 ? "P6" : "P5") + "\n" +
                               std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> bytes(header.begin(), header.end());
    bytes.insert(bytes.end(), image.pixels.begin(), image.pixels.end());
    write_file_bytes(path, bytes);
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string(), 0);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + path.string());
}

std::string sniff_magic(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    char buf[5];
    if (!in.read(buf, 5)) return "";
    return std::string(buf, 5);
}

std::vector<std::uint8_t> encode_raw(const VideoTensor& video, RawDType dtype) {
    ByteWriter out;
    out.bytes(kVideoMagic);
    out.u8(static_cast<std::uint8_t>(dtype));
    write_dims(out, video.dims());
    if (dtype == RawDType::U8) {
        for (float v : video.data()) out.u8(to_byte(v));
    } else {
        for (float v : video.data()) out.f32(v);
    }
    return out.take();
}

IngestedVideo decode_raw(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.magic(kVideoMagic);
    const std::size_t dtype_at = in.offset();
    const std::uint8_t code = in.u8("dtype");
    if (code > 1) throw ParseError("unknown dtype code " + std::to_string(code), dtype_at);
    const std::size_t dims_at = in.offset();
    const VideoDims dims = read_dims(in);
    const std::uint64_t elements = checked_count({dims.channels, dims.frames, dims.height, dims.width}, dims_at);
    const std::uint64_t width = code == 1 ? 1 : 4;
    if (elements > std::numeric_limits<std::uint64_t>::max() / width) {
        throw ParseError("payload size overflows", dims_at);
    }
    const std::uint64_t expected = elements * width;
    if (in.remaining() != expected) {
        throw ParseError("payload holds " + std::to_string(in.remaining()) + " bytes, header declares " +
                             std::to_string(expected) + " for " + dims.to_string(),
                         in.offset());
    }
    std::vector<float> data(elements);
    if (code == 1) {
        for (float& v : data) v = to_unit(in.u8("pixel"));
    } else {
        in.f32_array(data, "pixels");
    }
    return {VideoTensor(dims, std::move(data)), code == 1};
}

void write_raw(const fs::path& path, const VideoTensor& video, RawDType dtype) {
    write_file_bytes(path, encode_raw(video, dtype));
}

VideoTensor read_raw(const fs::path& path, bool* u8_source) {
    auto ingested = decode_raw(read_file_bytes(path));
    if (u8_source != nullptr) *u8_source = ingested.u8_source;
    return std::move(ingested.video);
}

Image read_image(const fs::path& path) {
    const std::string ext = lower_extension(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return read_pnm(path);
    throw UsageError("unsupported image format: " + path.string());
}

void write_image(const fs::path& path, const Image& image) {
    if (image.pixels.size() != image.width * image.height * image.channels) {
        throw UsageError("image buffer does not match its dimensions");
    }
    const std::string ext = lower_extension(path);
    if (ext == ".png") return write_png(path, image);
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return write_pnm(path, image);
    throw UsageError("unsupported image format: " + path.string());
}

Image frame_to_image(const VideoTensor& video, std::size_t t) {
    if (video.channels() != 1 && video.channels() != 3) {
        throw UsageError("only 1- or 3-channel videos can be written as images");
    }
    if (t >= video.frames()) throw BoundsError("frame " + std::to_string(t) + " out of range");
    Image image{video.width(), video.height(), video.channels(), {}};
    image.pixels.resize(image.width * image.height * image.channels);
    for (std::size_t h = 0; h < video.height(); ++h) {
        for (std::size_t w = 0; w < video.width(); ++w) {
            for (std::size_t c = 0; c < video.channels(); ++c) {
                image.pixels[(h * image.width + w) * image.channels + c] = to_byte(video.at(c, t, h, w));
            }
        }
    }
    return image;
}

bool natural_less(const std::string& a, const std::string& b) {
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const bool da = std::isdigit(static_cast<unsigned char>(a[i])) != 0;
        const bool db = std::isdigit(static_cast<unsigned char>(b[j])) != 0;
        if (da && db) {
            std::size_t ei = i, ej = j;
            while (ei < a.size() && std::isdigit(static_cast<unsigned char>(a[ei]))) ++ei;
            while (ej < b.size() && std::isdigit(static_cast<unsigned char>(b[ej]))) ++ej;
            // Compare by value: strip leading zeros, then length, then digits.
            std::size_t si = i, sj = j;
            while (si + 1 < ei && a[si] == '0') ++si;
            while (sj + 1 < ej && b[sj] == '0') ++sj;
            if (ei - si != ej - sj) return ei - si < ej - sj;
            const int cmp = a.compare(si, ei - si, b, sj, ej - sj);
            if (cmp != 0) return cmp < 0;
            if (ei - i != ej - j) return ei - i < ej - j;  // fewer leading zeros first
            i = ei;
            j = ej;
        } else {
            if (a[i] != b[j]) return a[i] < b[j];
            ++i;
            ++j;
        }
    }
    return a.size() - i < b.size() - j;
}

VideoTensor read_image_dir(const fs::path& dir, const std::string& pattern) {
    if (!fs::is_directory(dir)) throw ParseError("not a directory: " + dir.string(), 0);
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (fnmatch(pattern.c_str(), name.c_str(), 0) == 0) names.push_back(name);
    }
    if (names.empty()) {
        throw ParseError("no files matching '" + pattern + "' in " + dir.string(), 0);
    }
    std::sort(names.begin(), names.end(), natural_less);

    std::vector<Image> frames;
    frames.reserve(names.size());
    for (const auto& name : names) frames.push_back(read_image(dir / name));

    const std::size_t width = frames.front().width, height = frames.front().height;
    std::string offenders;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (frames[i].width != width || frames[i].height != height) {
            offenders += " " + names[i] + " (" + std::to_string(frames[i].width) + "x" +
                         std::to_string(frames[i].height) + ")";
        }
    }
    if (!offenders.empty()) {
        throw DataError("images in " + dir.string() + " differ from " + names.front() + " (" +
                        std::to_string(width) + "x" + std::to_string(height) + "):" + offenders);
    }

    VideoTensor video({3, frames.size(), height, width});
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const auto& px = frames[t].pixels;
        for (std::size_t h = 0; h < height; ++h) {
            for (std::size_t w = 0; w < width; ++w) {
                for (std::size_t c = 0; c < 3; ++c) video.at(c, t, h, w) = to_unit(px[(h * width + w) * 3 + c]);
            }
        }
    }
    return video;
}

VideoTensor read_frame_pipe(std::istream& stream, const VideoDims& dims) {
    VideoTensor video(dims);
    const std::size_t frame_bytes = dims.height * dims.width * dims.channels;
    std::vector<std::uint8_t> frame(frame_bytes);
    for (std::size_t t = 0; t < dims.frames; ++t) {
        stream.read(reinterpret_cast<char*>(frame.data()), static_cast<std::streamsize>(frame_bytes));
        if (static_cast<std::size_t>(stream.gcount()) != frame_bytes) {
            throw StreamError("short read on frame pipe: frame " + std::to_string(t) + " got " +
                                  std::to_string(stream.gcount()) + " of " + std::to_string(frame_bytes) +
                                  " bytes",
                              t);
        }
        for (std::size_t h = 0; h < dims.height; ++h) {
            for (std::size_t w = 0; w < dims.width; ++w) {
                for (std::size_t c = 0; c < dims.channels; ++c) {
                    video.at(c, t, h, w) = to_unit(frame[(h * dims.width + w) * dims.channels + c]);
                }
            }
        }
    }
    return video;
}

std::vector<std::uint8_t> encode_tokens(const TokenSequence& seq) {
    ByteWriter out;
    out.bytes(kTokensMagic);
    write_config(out, ConfigBlock::of(seq.source()));
    write_sequence(out, seq);
    return out.take();
}

TokenSequence decode_tokens(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.magic(kTokensMagic);
    const ConfigBlock block = read_config(in);
    TokenSequence seq = read_sequence(in, block);
    in.expect_end();
    return seq;
}

std::vector<std::uint8_t> encode_batch(const PackedBatch& batch) {
    ByteWriter out;
    out.bytes(kBatchMagic);
    write_config(out, ConfigBlock::of(batch.meta().front().source));
    out.dim(batch.example_count(), "example count");
    for (std::uint32_t b : batch.boundaries()) out.u32(b);
    const auto seqs = unpack(batch);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const std::string& id = batch.meta()[i].source_id;
        out.dim(id.size(), "source id length");
        out.bytes(id);
        write_sequence(out, seqs[i]);
    }
    return out.take();
}

PackedBatch decode_batch(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.magic(kBatchMagic);
    const ConfigBlock block = read_config(in);
    const std::size_t count_at = in.offset();
    const std::uint32_t count = in.u32("example count");
    if (count == 0) throw ParseError("packed batch has no examples", count_at);
    in.need(static_cast<std::size_t>(count + 1) * 4, "boundaries");
    std::vector<std::uint32_t> boundaries(count + 1);
    for (auto& b : boundaries) b = in.u32("boundary");

    std::vector<TokenSequence> seqs;
    std::vector<std::string> ids;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = in.u32("source id length");
        ids.push_back(in.string(len, "source id"));
        seqs.push_back(read_sequence(in, block));
    }
    in.expect_end();

    // The stored boundaries must agree with the segments actually present.
    std::uint32_t running = 0;
    check_boundaries(boundaries, boundaries.back());
    for (std::uint32_t i = 0; i < count; ++i) {
        running += static_cast<std::uint32_t>(seqs[i].size());
        if (boundaries[i + 1] != running) {
            throw IntegrityError("boundary " + std::to_string(i + 1) + " is " +
                                 std::to_string(boundaries[i + 1]) + " but segments sum to " +
                                 std::to_string(running));
        }
    }
    return pack(seqs, ids);
}

void write_tokens(const fs::path& path, const TokenSequence& seq) { write_file_bytes(path, encode_tokens(seq)); }

TokenSequence read_tokens(const fs::path& path) { return decode_tokens(read_file_bytes(path)); }

void write_batch(const fs::path& path, const PackedBatch& batch) { write_file_bytes(path, encode_batch(batch)); }

PackedBatch read_batch(const fs::path& path) { return decode_batch(read_file_bytes(path)); }

}  // namespace rlt
