// SPDX-License-Identifier: Apache-2.0

#include "rlt/refmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include <json.hpp>

#include "rlt/errors.hpp"
#include "rlt/random.hpp"

namespace rlt {

namespace {

constexpr float kLayerNormEps = 1e-6f;
constexpr int kSnapshotVersion = 1;

void fill_uniform(std::span<float> out, SplitMix64& rng, double limit) {
    for (float& v : out) v = static_cast<float>((2.0 * rng.uniform() - 1.0) * limit);
}

void fill_normal(std::span<float> out, SplitMix64& rng, double stddev) {
    for (float& v : out) v = static_cast<float>(rng.normal() * stddev);
}

// Xavier-uniform weights, small uniform biases.
Matrix init_linear(std::size_t in, std::size_t out, std::vector<float>& bias, SplitMix64& rng) {
    Matrix w(in, out);
    fill_uniform(w.data, rng, std::sqrt(6.0 / static_cast<double>(in + out)));
    bias.assign(out, 0.0f);
    fill_uniform(bias, rng, 0.01);
    return w;
}

LayerNormWeights init_norm(std::size_t d) {
    return {std::vector<float>(d, 1.0f), std::vector<float>(d, 0.0f)};
}

// out = in * w + bias, row by row. The j-innermost loop vectorizes without
// reassociating any sum.
Matrix linear(const Matrix& in, const Matrix& w, std::span<const float> bias) {
    Matrix out(in.rows, w.cols);
    for (std::size_t i = 0; i < in.rows; ++i) {
        float* dst = out.row(i);
        std::copy(bias.begin(), bias.end(), dst);
        const float* src = in.row(i);
        for (std::size_t k = 0; k < in.cols; ++k) {
            const float a = src[k];
            const float* wr = w.row(k);
            for (std::size_t j = 0; j < w.cols; ++j) dst[j] += a * wr[j];
        }
    }
    return out;
}

Matrix layer_norm(const Matrix& in, const LayerNormWeights& norm) {
    Matrix out(in.rows, in.cols);
    const auto n = static_cast<double>(in.cols);
    for (std::size_t i = 0; i < in.rows; ++i) {
        const float* src = in.row(i);
        double mean = 0.0;
        for (std::size_t j = 0; j < in.cols; ++j) mean += src[j];
        mean /= n;
        double var = 0.0;
        for (std::size_t j = 0; j < in.cols; ++j) var += (src[j] - mean) * (src[j] - mean);
        var /= n;
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        float* dst = out.row(i);
        for (std::size_t j = 0; j < in.cols; ++j) {
            dst[j] = static_cast<float>((src[j] - mean) * inv) * norm.gamma[j] + norm.beta[j];
        }
    }
    return out;
}

float gelu(float x) { return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f)); }

// Multi-head attention over a packed qkv matrix (n x 3d). Each query
// attends to the keys its mask row allows.
Matrix attention(const Matrix& qkv, std::size_t heads, const BlockDiagonalMask& mask,
                 AttentionTrace* trace) {
    const std::size_t n = qkv.rows;
    const std::size_t d = qkv.cols / 3;
    const std::size_t dh = d / heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    const bool dense = mask.form() == MaskForm::Dense;
    const auto bits = mask.dense_bits();
    const auto bounds = mask.boundaries();

    Matrix out(n, d);
    std::vector<float> scores(n);
    std::size_t segment = 0;
    for (std::size_t q = 0; q < n; ++q) {
        while (q >= bounds[segment + 1]) ++segment;
        // Dense form scores every key and masks with -inf; compact form only
        // visits the segment. Allowed keys are summed in the same order
        // either way.
        const std::size_t key_begin = dense ? 0 : bounds[segment];
        const std::size_t key_end = dense ? n : bounds[segment + 1];
        for (std::size_t h = 0; h < heads; ++h) {
            const float* qv = qkv.row(q) + h * dh;
            float max_score = -std::numeric_limits<float>::infinity();
            for (std::size_t k = key_begin; k < key_end; ++k) {
                if (dense && bits[q * n + k] == 0) {
                    scores[k] = -std::numeric_limits<float>::infinity();
                    continue;
                }
                const float* kv = qkv.row(k) + d + h * dh;
                float s = 0.0f;
                for (std::size_t j = 0; j < dh; ++j) s += qv[j] * kv[j];
                scores[k] = s * scale;
                max_score = std::max(max_score, scores[k]);
            }
            float sum = 0.0f;
            for (std::size_t k = key_begin; k < key_end; ++k) {
                scores[k] = std::exp(scores[k] - max_score);
                sum += scores[k];
            }
            const float inv = 1.0f / sum;
            float* dst = out.row(q) + h * dh;
            for (std::size_t k = key_begin; k < key_end; ++k) {
                const float w = scores[k] * inv;
                if (w == 0.0f) continue;
                const float* vv = qkv.row(k) + 2 * d + h * dh;
                for (std::size_t j = 0; j < dh; ++j) dst[j] += w * vv[j];
            }
            if (trace != nullptr) {
                double allowed = 0.0, leaked = 0.0;
                for (std::size_t k = key_begin; k < key_end; ++k) {
                    const double w = static_cast<double>(scores[k] * inv);
                    if (mask.allowed(q, k)) {
                        allowed += w;
                    } else {
                        leaked += w;
                    }
                }
                // Keys outside the visited range receive exactly zero weight.
                trace->allowed_mass.push_back(allowed);
                trace->leaked_mass.push_back(leaked);
            }
        }
    }
    return out;
}

void add_in_place(Matrix& acc, const Matrix& delta) {
    for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += delta.data[i];
}

std::uint64_t fnv1a(std::uint64_t hash, std::span<const float> values) {
    for (float v : values) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        for (int b = 0; b < 4; ++b) {
            hash ^= (bits >> (8 * b)) & 0xFFu;
            hash *= 0x100000001B3ull;
        }
    }
    return hash;
}

}  // namespace

ModelConfig ModelConfig::for_source(const SourceInfo& source, std::uint64_t seed) {
    ModelConfig config;
    config.patch_dim = source.patch_size();
    config.grid_x = source.grid_x();
    config.grid_y = source.grid_y();
    config.grid_t = source.grid_t();
    config.seed = seed;
    return config;
}

void ModelConfig::validate() const {
    if (patch_dim == 0) throw ConfigError("model patch_dim must be >= 1");
    if (grid_x == 0 || grid_y == 0 || grid_t == 0) throw ConfigError("model grid must be >= 1 per axis");
    if (d_embed == 0 || depth == 0 || heads == 0 || mlp_ratio == 0 || num_classes == 0) {
        throw ConfigError("model dims must all be >= 1");
    }
    if (d_embed % heads != 0) {
        throw ConfigError("d_embed " + std::to_string(d_embed) + " not divisible by heads " +
                          std::to_string(heads));
    }
}

namespace {

void accumulate_patch(const PatchEmbedder& e, std::span<const float> patch, std::span<double> acc) {
    std::copy(e.bias.begin(), e.bias.end(), acc.begin());
    for (std::size_t k = 0; k < e.weight.rows; ++k) {
        const double a = patch[k];
        const float* wr = e.weight.row(k);
        for (std::size_t j = 0; j < e.weight.cols; ++j) acc[j] += a * wr[j];
    }
}

}  // namespace

void PatchEmbedder::apply(std::span<const float> patch, std::span<float> out) const {
    std::vector<double> acc(weight.cols);
    accumulate_patch(*this, patch, acc);
    std::copy(acc.begin(), acc.end(), out.begin());
}

std::span<const float> PositionalTables::position(std::uint32_t x, std::uint32_t y, std::uint32_t t) const {
    if (x >= grid_x || y >= grid_y || t >= grid_t) {
        throw ContractError("slot (" + std::to_string(x) + ", " + std::to_string(y) + ", " +
                            std::to_string(t) + ") outside the position table");
    }
    return std::span<const float>(spatial_temporal).subspan(((t * grid_y + y) * grid_x + x) * d_embed, d_embed);
}

std::span<const float> PositionalTables::length(std::uint32_t run_length) const {
    if (run_length < 1 || run_length > grid_t) {
        throw ContractError("run length " + std::to_string(run_length) +
                            " outside the length table [1, " + std::to_string(grid_t) +
                            "]; lengths must be in tubelet slots");
    }
    return std::span<const float>(length_bias).subspan((run_length - 1) * d_embed, d_embed);
}

ToyTransformer::ToyTransformer(ModelConfig config) : config_(config) {
    config_.validate();
    const std::size_t d = config_.d_embed;
    SplitMix64 rng(config_.seed);

    embedder_.weight = init_linear(config_.patch_dim, d, embedder_.bias, rng);

    tables_.grid_x = config_.grid_x;
    tables_.grid_y = config_.grid_y;
    tables_.grid_t = config_.grid_t;
    tables_.d_embed = d;
    tables_.spatial_temporal.resize(config_.grid_x * config_.grid_y * config_.grid_t * d);
    fill_normal(tables_.spatial_temporal, rng, 0.1);
    tables_.length_bias.resize(config_.grid_t * d);
    fill_normal(tables_.length_bias, rng, 0.1);

    const std::size_t hidden = config_.mlp_ratio * d;
    blocks_.resize(config_.depth);
    for (auto& block : blocks_) {
        block.norm1 = init_norm(d);
        block.qkv = init_linear(d, 3 * d, block.qkv_bias, rng);
        block.proj = init_linear(d, d, block.proj_bias, rng);
        block.norm2 = init_norm(d);
        block.fc1 = init_linear(d, hidden, block.fc1_bias, rng);
        block.fc2 = init_linear(hidden, d, block.fc2_bias, rng);
    }
    final_norm_ = init_norm(d);
    head_ = init_linear(d, config_.num_classes, head_bias_, rng);
}

Matrix embed_tokens(std::span<const Token> tokens, std::span<const float> payload,
                    std::size_t patch_size, const PatchEmbedder& embedder,
                    const PositionalTables& tables) {
    if (patch_size != embedder.weight.rows) {
        throw ContractError("token patch size " + std::to_string(patch_size) +
                            " does not match embedder input " + std::to_string(embedder.weight.rows));
    }
    const std::size_t d = embedder.weight.cols;
    Matrix out(tokens.size(), d);
    std::vector<double> acc(d);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const Token& tok = tokens[i];
        const auto pos = tables.position(tok.x, tok.y, tok.t);
        const auto len = tables.length(tok.run_length);
        accumulate_patch(embedder, payload.subspan(i * patch_size, patch_size), acc);
        float* dst = out.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            acc[j] += pos[j];
            acc[j] += len[j];
            dst[j] = static_cast<float>(acc[j]);
        }
    }
    return out;
}

Matrix embed(const TokenSequence& seq, const PatchEmbedder& embedder, const PositionalTables& tables) {
    return embed_tokens(seq.tokens(), seq.payload(), seq.patch_size(), embedder, tables);
}

Matrix ToyTransformer::run(const Matrix& embedded, const BlockDiagonalMask& mask,
                           AttentionTrace* trace) const {
    Matrix x = embedded;
    for (const auto& block : blocks_) {
        const Matrix qkv = linear(layer_norm(x, block.norm1), block.qkv, block.qkv_bias);
        add_in_place(x, linear(attention(qkv, config_.heads, mask, trace), block.proj, block.proj_bias));
        Matrix hidden = linear(layer_norm(x, block.norm2), block.fc1, block.fc1_bias);
        for (float& v : hidden.data) v = gelu(v);
        add_in_place(x, linear(hidden, block.fc2, block.fc2_bias));
    }
    const Matrix normed = layer_norm(x, final_norm_);

    const auto bounds = mask.boundaries();
    const std::size_t segments = bounds.size() - 1;
    const std::size_t d = config_.d_embed;
    Matrix pooled(segments, d);
    for (std::size_t s = 0; s < segments; ++s) {
        float* dst = pooled.row(s);
        for (std::size_t i = bounds[s]; i < bounds[s + 1]; ++i) {
            const float* src = normed.row(i);
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
        const float inv = 1.0f / static_cast<float>(bounds[s + 1] - bounds[s]);
        for (std::size_t j = 0; j < d; ++j) dst[j] *= inv;
    }
    return linear(pooled, head_, head_bias_);
}

Matrix ToyTransformer::forward_packed(const PackedBatch& batch, MaskForm form, AttentionTrace* trace) const {
    const Matrix embedded = embed_tokens(batch.tokens(), batch.payload(), batch.patch_size(), embedder_, tables_);
    return run(embedded, build_mask(batch, form), trace);
}

Matrix ToyTransformer::forward_with_mask(const PackedBatch& batch, const BlockDiagonalMask& mask,
                                         AttentionTrace* trace) const {
    if (mask.side() != batch.total_tokens()) {
        throw UsageError("mask covers " + std::to_string(mask.side()) + " tokens, batch has " +
                         std::to_string(batch.total_tokens()));
    }
    const Matrix embedded = embed_tokens(batch.tokens(), batch.payload(), batch.patch_size(), embedder_, tables_);
    return run(embedded, mask, trace);
}

std::vector<float> ToyTransformer::forward_single(const TokenSequence& seq) const {
    if (seq.empty()) throw UsageError("forward_single needs at least one token");
    const Matrix embedded = embed(seq, embedder_, tables_);
    const std::vector<std::uint32_t> bounds{0, static_cast<std::uint32_t>(seq.size())};
    return run(embedded, BlockDiagonalMask::dense_from(bounds), nullptr).data;
}

std::uint64_t ToyTransformer::weight_checksum() const {
    std::uint64_t h = 0xCBF29CE484222325ull;
    h = fnv1a(h, embedder_.weight.data);
    h = fnv1a(h, embedder_.bias);
    h = fnv1a(h, tables_.spatial_temporal);
    h = fnv1a(h, tables_.length_bias);
    for (const auto& b : blocks_) {
        for (const auto* v : {&b.norm1.gamma, &b.norm1.beta, &b.qkv.data, &b.qkv_bias, &b.proj.data,
                              &b.proj_bias, &b.norm2.gamma, &b.norm2.beta, &b.fc1.data, &b.fc1_bias,
                              &b.fc2.data, &b.fc2_bias}) {
            h = fnv1a(h, *v);
        }
    }
    h = fnv1a(h, final_norm_.gamma);
    h = fnv1a(h, final_norm_.beta);
    h = fnv1a(h, head_.data);
    h = fnv1a(h, head_bias_);
    return h;
}

FlopCount count_flops(std::span<const std::size_t> segment_lengths, const ModelConfig& config) {
    const auto d = static_cast<double>(config.d_embed);
    const auto depth = static_cast<double>(config.depth);
    const auto r = static_cast<double>(config.mlp_ratio);
    double tokens = 0.0, squares = 0.0;
    for (std::size_t n : segment_lengths) {
        tokens += static_cast<double>(n);
        squares += static_cast<double>(n) * static_cast<double>(n);
    }
    FlopCount f;
    f.patch_embed = 2.0 * static_cast<double>(config.patch_dim) * d * tokens;
    // qkv 6d^2 + proj 2d^2 + fc1/fc2 2 * 2rd^2, per token per layer
    f.linear = depth * tokens * (8.0 * d * d + 4.0 * r * d * d);
    // QK^T and AV, each 2 * T^2 * d summed over heads
    f.attention = depth * 4.0 * squares * d;
    f.head = static_cast<double>(segment_lengths.size()) * 2.0 * d * static_cast<double>(config.num_classes);
    return f;
}

FlopCount count_flops(const TokenSequence& seq, const ModelConfig& config) {
    const std::size_t n = seq.size();
    return count_flops(std::span<const std::size_t>(&n, 1), config);
}

FlopCount count_flops(const PackedBatch& batch, const ModelConfig& config) {
    std::vector<std::size_t> lengths;
    for (std::size_t i = 0; i < batch.example_count(); ++i) {
        lengths.push_back(batch.segment_end(i) - batch.segment_begin(i));
    }
    return count_flops(lengths, config);
}

std::string snapshot_json(const ToyTransformer& model) {
    const auto& c = model.config();
    nlohmann::json j = {
        {"format", "rlt-toy-transformer"},
        {"version", kSnapshotVersion},
        {"seed", c.seed},
        {"patch_dim", c.patch_dim},
        {"grid", {c.grid_x, c.grid_y, c.grid_t}},
        {"d_embed", c.d_embed},
        {"depth", c.depth},
        {"heads", c.heads},
        {"mlp_ratio", c.mlp_ratio},
        {"num_classes", c.num_classes},
        {"weight_checksum", model.weight_checksum()},
    };
    return j.dump(2);
}

ToyTransformer load_snapshot(const std::string& json) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("model snapshot is not valid JSON: ") + e.what(), e.byte);
    }
    ModelConfig c;
    std::uint64_t checksum = 0;
    try {
        if (j.at("format") != "rlt-toy-transformer" || j.at("version") != kSnapshotVersion) {
            throw ParseError("unsupported model snapshot format", 0);
        }
        c.seed = j.at("seed").get<std::uint64_t>();
        c.patch_dim = j.at("patch_dim").get<std::size_t>();
        const auto& grid = j.at("grid");
        c.grid_x = grid.at(0).get<std::size_t>();
        c.grid_y = grid.at(1).get<std::size_t>();
        c.grid_t = grid.at(2).get<std::size_t>();
        c.d_embed = j.at("d_embed").get<std::size_t>();
        c.depth = j.at("depth").get<std::size_t>();
        c.heads = j.at("heads").get<std::size_t>();
        c.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
        c.num_classes = j.at("num_classes").get<std::size_t>();
        checksum = j.at("weight_checksum").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model snapshot is missing a field: ") + e.what(), 0);
    }
    ToyTransformer model(c);
    if (model.weight_checksum() != checksum) {
        throw Error("model snapshot checksum mismatch: weights regenerated from seed " +
                    std::to_string(c.seed) + " differ from the recorded ones");
    }
    return model;
}

}  // namespace rlt
