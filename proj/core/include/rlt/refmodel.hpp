// SPDX-License-Identifier: Apache-2.0

// Small forward-only ViT used to exercise run-length tokens end to end:
// patch embedding, position + length encodings, block-diagonal attention
// over packed batches and mean-pooled classification.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rlt/packing.hpp"
#include "rlt/tokenizer.hpp"

namespace rlt {

// Row-major float matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

    float* row(std::size_t r) noexcept { return data.data() + r * cols; }
    const float* row(std::size_t r) const noexcept { return data.data() + r * cols; }
    float& operator()(std::size_t r, std::size_t c) noexcept { return data[r * cols + c]; }
    float operator()(std::size_t r, std::size_t c) const noexcept { return data[r * cols + c]; }
};

struct ModelConfig {
    std::size_t patch_dim = 0;  // C * D_x * D_y * D_t
    std::size_t grid_x = 1;
    std::size_t grid_y = 1;
    std::size_t grid_t = 1;
    std::size_t d_embed = 64;
    std::size_t depth = 2;
    std::size_t heads = 4;
    std::size_t mlp_ratio = 4;
    std::size_t num_classes = 10;
    std::uint64_t seed = 0;

    // Model sized for sequences tokenized from videos of this source shape.
    static ModelConfig for_source(const SourceInfo& source, std::uint64_t seed = 0);
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Linear projection of a flattened tubelet to d_embed.
struct PatchEmbedder {
    Matrix weight;  // patch_dim x d_embed
    std::vector<float> bias;

    // Accumulates in double and rounds once.
    void apply(std::span<const float> patch, std::span<float> out) const;
};

// Learned position table indexed by (x, y, t) slot, plus the run-length
// bias table. Row l-1 of `length_bias` encodes run length l.
struct PositionalTables {
    std::size_t grid_x = 0;
    std::size_t grid_y = 0;
    std::size_t grid_t = 0;
    std::size_t d_embed = 0;
    std::vector<float> spatial_temporal;  // (t, y, x) major, d_embed per slot
    std::vector<float> length_bias;       // grid_t rows of d_embed

    // ContractError when the slot or length does not fit the tables.
    std::span<const float> position(std::uint32_t x, std::uint32_t y, std::uint32_t t) const;
    std::span<const float> length(std::uint32_t run_length) const;
};

struct LayerNormWeights {
    std::vector<float> gamma;
    std::vector<float> beta;
};

struct BlockWeights {
    LayerNormWeights norm1;
    Matrix qkv;  // d x 3d
    std::vector<float> qkv_bias;
    Matrix proj;  // d x d
    std::vector<float> proj_bias;
    LayerNormWeights norm2;
    Matrix fc1;  // d x (mlp_ratio * d)
    std::vector<float> fc1_bias;
    Matrix fc2;  // (mlp_ratio * d) x d
    std::vector<float> fc2_bias;
};

// Per layer/head/query sums of attention probabilities, split into the keys
// the mask allows and the keys it forbids.
struct AttentionTrace {
    std::vector<double> allowed_mass;
    std::vector<double> leaked_mass;
};

class ToyTransformer {
public:
    explicit ToyTransformer(ModelConfig config);

    const ModelConfig& config() const noexcept { return config_; }
    const PatchEmbedder& embedder() const noexcept { return embedder_; }
    PatchEmbedder& embedder() noexcept { return embedder_; }
    const PositionalTables& tables() const noexcept { return tables_; }
    PositionalTables& tables() noexcept { return tables_; }
    std::span<const BlockWeights> blocks() const noexcept { return blocks_; }

    // B x num_classes logits. Attention is restricted to each example's own
    // segment; Dense uses an explicit mask with -inf scores, Compact walks
    // segment ranges directly.
    Matrix forward_packed(const PackedBatch& batch, MaskForm form = MaskForm::Compact,
                          AttentionTrace* trace = nullptr) const;
    // Same, with a caller-supplied mask; its boundaries also decide pooling.
    // UsageError if the mask side differs from the batch's token count.
    Matrix forward_with_mask(const PackedBatch& batch, const BlockDiagonalMask& mask,
                             AttentionTrace* trace = nullptr) const;
    // Unpacked reference path over one sequence with an all-true mask.
    std::vector<float> forward_single(const TokenSequence& seq) const;

    // FNV-1a over the bit patterns of every weight, in construction order.
    std::uint64_t weight_checksum() const;

private:
    Matrix run(const Matrix& embedded, const BlockDiagonalMask& mask, AttentionTrace* trace) const;

    ModelConfig config_;
    PatchEmbedder embedder_;
    PositionalTables tables_;
    std::vector<BlockWeights> blocks_;
    LayerNormWeights final_norm_;
    Matrix head_;  // d x num_classes
    std::vector<float> head_bias_;
};

// Per token: E(patch) + position[x, y, t] + length[run_length - 1].
Matrix embed(const TokenSequence& seq, const PatchEmbedder& embedder, const PositionalTables& tables);
Matrix embed_tokens(std::span<const Token> tokens, std::span<const float> payload,
                    std::size_t patch_size, const PatchEmbedder& embedder,
                    const PositionalTables& tables);

// Multiply-adds counted as 2 flops; norms, softmax and GELU are not counted.
struct FlopCount {
    double patch_embed = 0;  // 2 * P * d per token
    double linear = 0;       // qkv, proj and MLP: linear in total tokens
    double attention = 0;    // 4 * T_i^2 * d per layer per segment
    double head = 0;         // 2 * d * num_classes per example

    double total() const noexcept { return patch_embed + linear + attention + head; }
};

FlopCount count_flops(std::span<const std::size_t> segment_lengths, const ModelConfig& config);
FlopCount count_flops(const TokenSequence& seq, const ModelConfig& config);
FlopCount count_flops(const PackedBatch& batch, const ModelConfig& config);

// Weight snapshot: the seed and dims that regenerate the weights, plus
// their checksum so a mismatched rebuild is detected on load.
std::string snapshot_json(const ToyTransformer& model);
// Throws ParseError on malformed JSON, Error on checksum mismatch.
ToyTransformer load_snapshot(const std::string& json);

}  // namespace rlt
