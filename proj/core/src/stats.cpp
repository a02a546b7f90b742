// SPDX-License-Identifier: Apache-2.0

#include "rlt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "rlt/errors.hpp"
#include "rlt/parallel.hpp"

namespace rlt {

namespace {

std::string format_double(double v, int precision = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

nlohmann::json tau_json(double tau) {
    // JSON has no infinity; the sweep sentinel is written as a string.
    if (std::isinf(tau)) return "inf";
    return tau;
}

}  // namespace

ReductionSummary summarize(const std::vector<ClipRecord>& records) {
    ReductionSummary s;
    if (records.empty()) return s;
    std::vector<double> reductions;
    reductions.reserve(records.size());
    double sum = 0.0;
    for (const auto& r : records) {
        reductions.push_back(r.reduction);
        sum += r.reduction;
        s.tokens_before += r.slots;
        s.tokens_after += r.retained;
        const auto bucket = std::min<std::size_t>(
            kHistogramBuckets - 1, static_cast<std::size_t>(std::floor(r.reduction * kHistogramBuckets)));
        ++s.histogram[bucket];
    }
    s.mean_reduction = sum / static_cast<double>(records.size());
    std::sort(reductions.begin(), reductions.end());
    const std::size_t mid = reductions.size() / 2;
    s.median_reduction = reductions.size() % 2 == 1 ? reductions[mid] : 0.5 * (reductions[mid - 1] + reductions[mid]);
    return s;
}

ReductionReport analyze(const std::vector<ClipSource>& clips, const TokenizeSettings& settings,
                        std::size_t workers) {
    if (clips.empty()) throw UsageError("analyze needs at least one clip");
    std::vector<std::optional<ClipRecord>> records(clips.size());
    std::vector<std::string> failures(clips.size());
    detail::parallel_for(clips.size(), workers, [&](std::size_t i) {
        try {
            const IngestedVideo clip = clips[i].load();
            const TokenSequence seq = tokenize(clip.video, settings, clip.u8_source);
            const auto& src = seq.source();
            records[i] = ClipRecord{clips[i].id,    src.slot_count(), seq.size(),   reduction_ratio(seq),
                                    src.grid_x(),   src.grid_y(),     src.grid_t(), settings.tau.value(),
                                    settings.metric};
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    });

    ReductionReport report;
    report.tau = settings.tau.value();
    report.metric = settings.metric;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        if (records[i]) {
            report.records.push_back(std::move(*records[i]));
        } else {
            report.skipped.push_back({clips[i].id, failures[i]});
        }
    }
    report.summary = summarize(report.records);
    return report;
}

std::string report_jsonl(const ReductionReport& report) {
    std::ostringstream out;
    out << nlohmann::json{{"type", "header"}, {"tau", tau_json(report.tau)}, {"metric", to_string(report.metric)}}.dump()
        << '\n';
    for (const auto& r : report.records) {
        out << nlohmann::json{{"type", "clip"},
                              {"id", r.id},
                              {"n_p", r.slots},
                              {"n_p_prime", r.retained},
                              {"reduction", r.reduction},
                              {"grid", {r.grid_x, r.grid_y, r.grid_t}},
                              {"tau", tau_json(r.tau)},
                              {"metric", to_string(r.metric)}}
                   .dump()
            << '\n';
    }
    for (const auto& s : report.skipped) {
        out << nlohmann::json{{"type", "skipped"}, {"id", s.id}, {"reason", s.reason}}.dump() << '\n';
    }
    const auto& sum = report.summary;
    out << nlohmann::json{{"type", "summary"},
                          {"clips", report.records.size()},
                          {"skipped", report.skipped.size()},
                          {"mean_reduction", sum.mean_reduction},
                          {"median_reduction", sum.median_reduction},
                          {"histogram", sum.histogram},
                          {"tokens_before", sum.tokens_before},
                          {"tokens_after", sum.tokens_after}}
               .dump()
        << '\n';
    return out.str();
}

std::string report_table(const ReductionReport& report) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-32s %10s %10s %10s %12s\n", "clip", "N_P", "N_P'", "reduction", "grid");
    out << line;
    for (const auto& r : report.records) {
        const std::string grid = std::to_string(r.grid_x) + "x" + std::to_string(r.grid_y) + "x" + std::to_string(r.grid_t);
        std::snprintf(line, sizeof line, "%-32s %10zu %10zu %10s %12s\n", r.id.c_str(), r.slots, r.retained,
                      format_double(r.reduction).c_str(), grid.c_str());
        out << line;
    }
    for (const auto& s : report.skipped) out << "skipped " << s.id << ": " << s.reason << '\n';
    const auto& sum = report.summary;
    out << "clips=" << report.records.size() << " skipped=" << report.skipped.size()
        << " mean_reduction=" << format_double(sum.mean_reduction)
        << " median_reduction=" << format_double(sum.median_reduction) << " tokens_before=" << sum.tokens_before
        << " tokens_after=" << sum.tokens_after << '\n';
    return out.str();
}

std::vector<double> default_tau_grid() { return {0.0, 0.025, 0.05, 0.075, 0.1, 0.15, 0.2, 0.3, 0.5, 1.0}; }

SweepReport sweep_tau(const std::vector<ClipSource>& clips, const TokenizeSettings& settings,
                      const std::vector<double>& tau_grid, std::size_t workers) {
    if (clips.empty()) throw UsageError("sweep needs at least one clip");
    if (tau_grid.empty()) throw UsageError("sweep needs at least one threshold");
    std::vector<Threshold> taus;
    for (std::size_t i = 0; i < tau_grid.size(); ++i) {
        taus.emplace_back(tau_grid[i]);
        if (i > 0 && tau_grid[i] < tau_grid[i - 1]) throw UsageError("tau grid must be sorted ascending");
    }

    // retained[clip][k] for threshold k
    std::vector<std::vector<std::size_t>> retained(clips.size());
    std::vector<std::size_t> slots(clips.size(), 0);
    std::vector<std::string> failures(clips.size());
    detail::parallel_for(clips.size(), workers, [&](std::size_t i) {
        try {
            const IngestedVideo clip = clips[i].load();
            const DifferenceGrid diffs =
                compute_differences(clip.video, settings.norm, settings.config, settings.metric);
            slots[i] = diffs.grid_x() * diffs.grid_y() * diffs.grid_t();
            for (const Threshold& tau : taus) retained[i].push_back(mask_from_differences(diffs, tau).retained_count());
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    });

    SweepReport report;
    report.metric = settings.metric;
    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        if (failures[i].empty()) {
            ok.push_back(i);
        } else {
            report.skipped.push_back({clips[i].id, failures[i]});
        }
    }
    report.clip_count = ok.size();
    for (std::size_t k = 0; k < taus.size(); ++k) {
        SweepRow row;
        row.tau = tau_grid[k];
        for (std::size_t i : ok) {
            row.mean_tokens += static_cast<double>(retained[i][k]);
            row.mean_reduction += 1.0 - static_cast<double>(retained[i][k]) / static_cast<double>(slots[i]);
        }
        if (!ok.empty()) {
            row.mean_tokens /= static_cast<double>(ok.size());
            row.mean_reduction /= static_cast<double>(ok.size());
        }
        report.rows.push_back(row);
    }
    return report;
}

std::string sweep_jsonl(const SweepReport& report) {
    std::ostringstream out;
    out << nlohmann::json{{"type", "header"}, {"metric", to_string(report.metric)}, {"clips", report.clip_count}}.dump()
        << '\n';
    for (const auto& r : report.rows) {
        out << nlohmann::json{{"type", "row"},
                              {"tau", tau_json(r.tau)},
                              {"mean_reduction", r.mean_reduction},
                              {"mean_tokens", r.mean_tokens}}
                   .dump()
            << '\n';
    }
    for (const auto& s : report.skipped) {
        out << nlohmann::json{{"type", "skipped"}, {"id", s.id}, {"reason", s.reason}}.dump() << '\n';
    }
    return out.str();
}

std::string sweep_table(const SweepReport& report) {
    std::ostringstream out;
    char line[128];
    std::snprintf(line, sizeof line, "%10s %16s %14s\n", "tau", "mean_reduction", "mean_tokens");
    out << line;
    for (const auto& r : report.rows) {
        std::snprintf(line, sizeof line, "%10s %16s %14s\n", std::isinf(r.tau) ? "inf" : format_double(r.tau).c_str(),
                      format_double(r.mean_reduction).c_str(), format_double(r.mean_tokens, 2).c_str());
        out << line;
    }
    for (const auto& s : report.skipped) out << "skipped " << s.id << ": " << s.reason << '\n';
    return out.str();
}

std::size_t Overlay::pruned_pixels(std::size_t frame) const {
    const std::size_t plane = frames.height() * frames.width();
    const auto begin = pruned.begin() + static_cast<std::ptrdiff_t>(frame * plane);
    return static_cast<std::size_t>(std::count(begin, begin + static_cast<std::ptrdiff_t>(plane), std::uint8_t{1}));
}

Overlay render_overlay(const VideoTensor& video, const TokenSequence& seq, const OverlayStyle& style) {
    const auto& src = seq.source();
    if (src.dims != video.dims()) {
        throw UsageError("token sequence was made from a " + src.dims.to_string() + " clip, overlay video is " +
                         video.dims().to_string());
    }
    src.config.validate_for(video.dims());
    const std::size_t gx = src.grid_x(), gy = src.grid_y(), gt = src.grid_t();
    std::vector<std::uint8_t> kept(gx * gy * gt, 0);
    for (const Token& tok : seq.tokens()) {
        if (tok.x >= gx || tok.y >= gy || tok.t >= gt) throw UsageError("token outside the overlay grid");
        kept[(tok.t * gy + tok.y) * gx + tok.x] = 1;
    }

    Overlay overlay{video, std::vector<std::uint8_t>(video.frames() * video.height() * video.width(), 0)};
    const std::size_t dx = src.config.patch_x, dy = src.config.patch_y, dt = src.config.tubelet_t;
    for (std::size_t f = 0; f < video.frames(); ++f) {
        const std::size_t t = f / dt;
        for (std::size_t h = 0; h < video.height(); ++h) {
            const std::size_t y = h / dy;
            for (std::size_t w = 0; w < video.width(); ++w) {
                if (kept[(t * gy + y) * gx + w / dx]) continue;
                overlay.pruned[(f * video.height() + h) * video.width() + w] = 1;
                for (std::size_t c = 0; c < video.channels(); ++c) overlay.frames.at(c, f, h, w) = style.gray;
            }
        }
    }
    return overlay;
}

}  // namespace rlt
