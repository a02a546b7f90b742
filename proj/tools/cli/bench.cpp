// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "rlt/errors.hpp"
#include "rlt/random.hpp"
#include "rlt/refmodel.hpp"

namespace rlt::cli {

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

template <typename Fn>
double time_ms(Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

VideoTensor synthetic_clip(const VideoDims& dims, std::size_t patch_y, double static_fraction, std::uint64_t seed) {
    if (patch_y == 0 || dims.height % patch_y != 0) throw ConfigError("clip height must divide into patch rows");
    if (!(static_fraction >= 0.0 && static_fraction <= 1.0)) throw ConfigError("static fraction must be in [0, 1]");
    const std::size_t static_rows =
        static_cast<std::size_t>(std::lround(static_fraction * static_cast<double>(dims.height / patch_y))) * patch_y;
    SplitMix64 rng(seed);
    VideoTensor v(dims);
    for (std::size_t c = 0; c < dims.channels; ++c)
        for (std::size_t t = 0; t < dims.frames; ++t)
            for (std::size_t h = 0; h < dims.height; ++h)
                for (std::size_t w = 0; w < dims.width; ++w) {
                    v.at(c, t, h, w) = (t > 0 && h < static_rows) ? v.at(c, 0, h, w)
                                                                  : static_cast<float>(rng.uniform());
                }
    return v;
}

BenchRecord bench_clip(const std::string& id, const VideoTensor& video, const TokenizeSettings& settings,
                       const BenchOptions& options) {
    if (options.runs == 0 || options.forward_runs == 0) throw UsageError("bench needs at least one run");
    TokenSequence seq = tokenize(video, settings);  // warm-up, and the sequence the model sees
    std::vector<double> tok_ms;
    for (std::size_t r = 0; r < options.runs; ++r) {
        tok_ms.push_back(time_ms([&] { seq = tokenize(video, settings); }));
    }

    const ToyTransformer model(ModelConfig::for_source(seq.source(), options.seed));
    std::vector<float> logits = model.forward_single(seq);
    std::vector<double> fwd_ms;
    for (std::size_t r = 0; r < options.forward_runs; ++r) {
        fwd_ms.push_back(time_ms([&] { logits = model.forward_single(seq); }));
    }
    if (!std::all_of(logits.begin(), logits.end(), [](float x) { return std::isfinite(x); })) {
        throw DataError("toy forward produced non-finite logits");
    }

    BenchRecord rec;
    rec.id = id;
    rec.dims = video.dims();
    rec.slots = seq.source().slot_count();
    rec.tokens = seq.size();
    rec.tokenize_ms = median(tok_ms);
    rec.forward_ms = median(fwd_ms);
    rec.tokens_per_s = rec.tokenize_ms > 0.0 ? static_cast<double>(rec.slots) / (rec.tokenize_ms / 1000.0) : 0.0;
    rec.overhead = rec.forward_ms > 0.0 ? rec.tokenize_ms / rec.forward_ms : 0.0;
    return rec;
}

std::string bench_text(const std::vector<BenchRecord>& records) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-24s %-16s %8s %8s %14s %14s %14s %10s\n", "clip", "dims", "N_P", "N_P'",
                  "tokenize_ms", "tokens_per_s", "forward_ms", "overhead");
    out << line;
    for (const auto& r : records) {
        std::snprintf(line, sizeof line, "%-24s %-16s %8zu %8zu %14.3f %14.0f %14.3f %9.2f%%\n", r.id.c_str(),
                      r.dims.to_string().c_str(), r.slots, r.tokens, r.tokenize_ms, r.tokens_per_s, r.forward_ms,
                      100.0 * r.overhead);
        out << line;
    }
    return out.str();
}

std::string bench_json(const std::vector<BenchRecord>& records) {
    nlohmann::json clips = nlohmann::json::array();
    double worst = 0.0;
    for (const auto& r : records) {
        worst = std::max(worst, r.overhead);
        clips.push_back({{"id", r.id},
                         {"dims", {r.dims.channels, r.dims.frames, r.dims.height, r.dims.width}},
                         {"n_p", r.slots},
                         {"n_p_prime", r.tokens},
                         {"tokenize_ms", r.tokenize_ms},
                         {"tokens_per_s", r.tokens_per_s},
                         {"forward_ms", r.forward_ms},
                         {"overhead_ratio", r.overhead}});
    }
    const nlohmann::json doc{{"units", {{"time", "ms"}, {"throughput", "input slots per second"}}},
                             {"clips", clips},
                             {"max_overhead_ratio", worst}};
    return doc.dump(2) + "\n";
}

}  // namespace rlt::cli
