// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rlt/stats.hpp"
#include "rlt/tokenizer.hpp"

namespace rlt::cli {

enum ExitCode : int {
    kOk = 0,
    kDataError = 1,    // parse, IO, data, integrity, stream
    kConfigError = 2,  // bad flags, incompatible geometry, usage
    kEquivalenceFailure = 3,
};

// Entry point shared by the binary and the tests. `args` excludes argv[0].
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

// Noise clip whose top `static_fraction` of patch rows never change.
VideoTensor synthetic_clip(const VideoDims& dims, std::size_t patch_y, double static_fraction, std::uint64_t seed);

struct BenchOptions {
    std::size_t runs = 50;
    std::size_t forward_runs = 50;
    std::uint64_t seed = 0;
};

struct BenchRecord {
    std::string id;
    VideoDims dims;
    std::size_t slots = 0;
    std::size_t tokens = 0;
    double tokenize_ms = 0.0;  // median
    double forward_ms = 0.0;   // median
    double tokens_per_s = 0.0;
    double overhead = 0.0;     // tokenize_ms / forward_ms
};

// Times tokenize() and the toy forward pass over the resulting tokens.
BenchRecord bench_clip(const std::string& id, const VideoTensor& video, const TokenizeSettings& settings,
                       const BenchOptions& options);

std::string bench_text(const std::vector<BenchRecord>& records);
std::string bench_json(const std::vector<BenchRecord>& records);

}  // namespace rlt::cli
