// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "rlt/errors.hpp"
#include "rlt/io.hpp"
#include "rlt/packing.hpp"
#include "rlt/parallel.hpp"
#include "rlt/refmodel.hpp"

namespace rlt::cli {

namespace {

namespace fs = std::filesystem;

struct Options {
    std::string command;
    std::vector<std::string> inputs;
    double tau = Threshold::kDefault;
    std::string metric = "mean";
    std::size_t patch = 16;
    std::size_t tubelet = 2;
    std::string norm = "imagenet";
    std::vector<float> mean;
    std::vector<float> std;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::string output;
    std::string pattern = "*.png";
    std::string pipe_dims;
    std::string format = "table";

    std::string taus;
    std::string tokens;
    std::size_t batch = 4;
    bool corrupt_boundaries = false;
    double tolerance = 1e-5;
    std::string snapshot_out;
    std::string snapshot_in;
    std::size_t runs = 50;
    std::size_t forward_runs = 0;
    std::vector<std::size_t> resolutions{224};
    std::size_t frames = 16;
    std::size_t clips = 1;
    double static_fraction = 0.3;
};

std::string join_floats(const std::vector<float>& v) {
    std::string s;
    char buf[32];
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s%.6g", i ? "," : "", static_cast<double>(v[i]));
        s += buf;
    }
    return s;
}

VideoDims parse_dims(const std::string& text) {
    VideoDims d;
    std::size_t* fields[] = {&d.channels, &d.frames, &d.height, &d.width};
    std::istringstream in(text);
    std::string part;
    std::size_t k = 0;
    while (std::getline(in, part, 'x')) {
        if (k == 4) break;
        try {
            std::size_t used = 0;
            *fields[k] = std::stoul(part, &used);
            if (used != part.size()) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw ConfigError("--pipe-dims expects CxTxHxW, got '" + text + "'");
        }
        ++k;
    }
    if (k != 4 || !in.eof()) throw ConfigError("--pipe-dims expects CxTxHxW, got '" + text + "'");
    return d;
}

std::size_t probe_channels(const Options& o) {
    if (o.inputs.empty()) return 3;
    const std::string& first = o.inputs.front();
    if (first == "-") return o.pipe_dims.empty() ? 3 : parse_dims(o.pipe_dims).channels;
    if (fs::is_regular_file(first) && sniff_magic(first) == "RLTV1") {
        const auto bytes = read_file_bytes(first);
        if (bytes.size() >= 10) return bytes[6] | (bytes[7] << 8) | (bytes[8] << 16) | (std::size_t{bytes[9]} << 24);
    }
    return 3;
}

NormalizationParams resolve_norm(const Options& o, std::size_t channels) {
    if (o.norm == "imagenet") {
        if (!o.mean.empty() || !o.std.empty()) throw ConfigError("--mean/--std need --norm custom");
        return NormalizationParams::imagenet();
    }
    if (o.norm == "none") return NormalizationParams::identity(channels);
    if (o.mean.empty() || o.mean.size() != o.std.size()) {
        throw ConfigError("--norm custom needs --mean and --std with one value per channel");
    }
    NormalizationParams p{o.mean, o.std};
    p.validate(p.mean.size());
    return p;
}

TokenizeSettings resolve_settings(const Options& o) {
    TokenizeSettings s;
    s.config = TubeletConfig{o.patch, o.patch, o.tubelet, TubeletConfig{}.embed_dim};
    s.config.validate();
    s.tau = Threshold(o.tau);
    s.metric = parse_metric(o.metric);
    s.norm = resolve_norm(o, probe_channels(o));
    return s;
}

void echo_config(std::ostream& out, const Options& o, const TokenizeSettings& s) {
    out << "# rlt " << o.command << " tau=" << s.tau.value() << " metric=" << to_string(s.metric)
        << " patch=" << s.config.patch_x << " tubelet=" << s.config.tubelet_t << " norm=" << o.norm
        << " mean=" << join_floats(s.norm.mean) << " std=" << join_floats(s.norm.std) << " seed=" << o.seed
        << " workers=" << o.workers << " output=" << (o.output.empty() ? "-" : o.output)
        << " inputs=" << o.inputs.size() << '\n';
}

std::string input_id(const std::string& path) {
    if (path == "-") return "stdin";
    const fs::path p(path);
    return p.has_filename() ? p.filename().string() : p.parent_path().filename().string();
}

IngestedVideo load_video(const std::string& path, const Options& o, std::istream& in) {
    if (path == "-") {
        if (o.pipe_dims.empty()) throw UsageError("reading frames from stdin needs --pipe-dims CxTxHxW");
        return {read_frame_pipe(in, parse_dims(o.pipe_dims)), true};
    }
    if (fs::is_directory(path)) return {read_image_dir(path, o.pattern), true};
    if (!fs::exists(path)) throw ParseError("no such file: " + path, 0);
    const std::string magic = sniff_magic(path);
    if (magic != "RLTV1") throw ParseError(path + " is not an RLTV1 video (magic '" + magic + "')", 0);
    bool u8 = false;
    VideoTensor v = read_raw(path, &u8);
    return {std::move(v), u8};
}

std::vector<ClipSource> clip_sources(const Options& o, std::istream& in) {
    std::vector<ClipSource> clips;
    for (const auto& path : o.inputs) {
        clips.push_back({input_id(path), [path, &o, &in] { return load_video(path, o, in); }});
    }
    return clips;
}

void require_inputs(const Options& o) {
    if (o.inputs.empty()) throw UsageError(o.command + " needs at least one input");
}

void require_output(const Options& o) {
    if (o.output.empty()) throw UsageError(o.command + " needs --output");
}

void emit(const Options& o, std::ostream& out, const std::string& text) {
    if (o.output.empty()) {
        out << text;
        return;
    }
    std::ofstream f(o.output, std::ios::trunc);
    if (!f) throw Error("cannot open " + o.output + " for writing");
    f << text;
    out << "# wrote " << o.output << '\n';
}

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

int cmd_tokenize(const Options& o, std::istream& in, std::ostream& out) {
    require_inputs(o);
    require_output(o);
    const TokenizeSettings s = resolve_settings(o);
    echo_config(out, o, s);
    const bool many = o.inputs.size() > 1;
    if (many) fs::create_directories(o.output);

    std::vector<std::optional<TokenSequence>> seqs(o.inputs.size());
    std::vector<std::exception_ptr> errors(o.inputs.size());
    detail::parallel_for(o.inputs.size(), o.workers, [&](std::size_t i) {
        try {
            const IngestedVideo clip = load_video(o.inputs[i], o, in);
            seqs[i] = tokenize(clip.video, s, clip.u8_source);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    });
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const std::string id = input_id(o.inputs[i]);
        const fs::path dest = many ? fs::path(o.output) / (fs::path(id).stem().string() + ".rltt") : fs::path(o.output);
        write_tokens(dest, *seqs[i]);
        out << id << " n_p=" << seqs[i]->source().slot_count() << " n_p_prime=" << seqs[i]->size()
            << " reduction=" << fixed(reduction_ratio(*seqs[i])) << " -> " << dest.string() << '\n';
    }
    return kOk;
}

int cmd_pack(const Options& o, std::ostream& out) {
    require_inputs(o);
    require_output(o);
    out << "# rlt pack output=" << o.output << " inputs=" << o.inputs.size() << '\n';
    std::vector<TokenSequence> seqs;
    std::vector<std::string> ids;
    for (const auto& path : o.inputs) {
        seqs.push_back(read_tokens(path));
        ids.push_back(input_id(path));
    }
    const PackedBatch batch = pack(seqs, ids);
    write_batch(o.output, batch);
    out << "examples=" << batch.example_count() << " tokens=" << batch.total_tokens() << " boundaries=";
    for (std::size_t i = 0; i < batch.boundaries().size(); ++i) out << (i ? "," : "") << batch.boundaries()[i];
    out << " -> " << o.output << '\n';
    return kOk;
}

std::string safe_file_name(const std::string& id) {
    std::string name;
    for (char c : id) name += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_') ? c : '_';
    if (name.empty() || name == "." || name == "..") name = "example";
    if (fs::path(name).extension() != ".rltt") name += ".rltt";
    return name;
}

int cmd_unpack(const Options& o, std::ostream& out) {
    if (o.inputs.size() != 1) throw UsageError("unpack takes exactly one batch file");
    require_output(o);
    out << "# rlt unpack output=" << o.output << '\n';
    const PackedBatch batch = read_batch(o.inputs.front());
    const auto seqs = unpack(batch);
    fs::create_directories(o.output);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        std::string name = safe_file_name(batch.meta()[i].source_id);
        if (fs::exists(fs::path(o.output) / name)) name = std::to_string(i) + "_" + name;
        const fs::path dest = fs::path(o.output) / name;
        write_tokens(dest, seqs[i]);
        out << batch.meta()[i].source_id << " tokens=" << seqs[i].size() << " -> " << dest.string() << '\n';
    }
    return kOk;
}

void check_format(const Options& o) {
    if (o.format != "table" && o.format != "jsonl" && o.format != "json" && o.format != "text") {
        throw ConfigError("unknown --format '" + o.format + "'");
    }
}

int cmd_stats(const Options& o, std::istream& in, std::ostream& out) {
    require_inputs(o);
    check_format(o);
    const TokenizeSettings s = resolve_settings(o);
    echo_config(out, o, s);
    const ReductionReport report = analyze(clip_sources(o, in), s, o.workers);
    emit(o, out, o.format == "jsonl" || o.format == "json" ? report_jsonl(report) : report_table(report));
    return kOk;
}

std::vector<double> parse_taus(const std::string& text) {
    if (text.empty()) return default_tau_grid();
    std::vector<double> taus;
    std::istringstream in(text);
    for (std::string part; std::getline(in, part, ',');) {
        if (part == "inf") {
            taus.push_back(std::numeric_limits<double>::infinity());
            continue;
        }
        try {
            std::size_t used = 0;
            taus.push_back(std::stod(part, &used));
            if (used != part.size()) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw ConfigError("--taus expects comma-separated numbers or 'inf', got '" + part + "'");
        }
    }
    return taus;
}

int cmd_sweep(const Options& o, std::istream& in, std::ostream& out) {
    require_inputs(o);
    check_format(o);
    const TokenizeSettings s = resolve_settings(o);
    const auto grid = parse_taus(o.taus);
    echo_config(out, o, s);
    const SweepReport report = sweep_tau(clip_sources(o, in), s, grid, o.workers);
    emit(o, out, o.format == "jsonl" || o.format == "json" ? sweep_jsonl(report) : sweep_table(report));
    return kOk;
}

int cmd_viz(const Options& o, std::istream& in, std::ostream& out) {
    if (o.inputs.size() != 1) throw UsageError("viz takes exactly one video");
    require_output(o);
    const TokenizeSettings s = resolve_settings(o);
    echo_config(out, o, s);
    const IngestedVideo clip = load_video(o.inputs.front(), o, in);
    const TokenSequence seq = o.tokens.empty() ? tokenize(clip.video, s, clip.u8_source) : read_tokens(o.tokens);
    const Overlay overlay = render_overlay(clip.video, seq);
    fs::create_directories(o.output);
    const double plane = static_cast<double>(clip.video.height() * clip.video.width());
    for (std::size_t f = 0; f < clip.video.frames(); ++f) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04zu.png", f);
        write_image(fs::path(o.output) / name, frame_to_image(overlay.frames, f));
        out << name << " pruned=" << fixed(static_cast<double>(overlay.pruned_pixels(f)) / plane) << '\n';
    }
    out << "tokens=" << seq.size() << " of " << seq.source().slot_count() << " reduction=" << fixed(reduction_ratio(seq))
        << '\n';
    return kOk;
}

std::vector<TokenSequence> refdemo_sequences(const Options& o, const TokenizeSettings& s, std::istream& in) {
    std::vector<TokenSequence> seqs;
    if (o.inputs.empty()) {
        if (o.batch == 0) throw UsageError("--batch must be >= 1");
        const VideoDims dims{3, 4 * o.tubelet, 2 * o.patch, 2 * o.patch};
        for (std::size_t i = 0; i < o.batch; ++i) {
            const double frac = o.batch > 1 ? static_cast<double>(i) / static_cast<double>(o.batch - 1) : 0.5;
            seqs.push_back(tokenize(synthetic_clip(dims, o.patch, frac, o.seed * 1000 + i), s));
        }
        return seqs;
    }
    for (const auto& path : o.inputs) {
        if (path != "-" && fs::is_regular_file(path) && sniff_magic(path) == "RLTT1") {
            seqs.push_back(read_tokens(path));
        } else {
            const IngestedVideo clip = load_video(path, o, in);
            seqs.push_back(tokenize(clip.video, s, clip.u8_source));
        }
    }
    return seqs;
}

int cmd_refdemo(const Options& o, std::istream& in, std::ostream& out) {
    const TokenizeSettings s = resolve_settings(o);
    echo_config(out, o, s);
    const auto seqs = refdemo_sequences(o, s, in);
    const PackedBatch batch = pack(seqs);

    ModelConfig mc = ModelConfig::for_source(seqs.front().source(), o.seed);
    for (const auto& seq : seqs) {
        mc.grid_x = std::max(mc.grid_x, seq.source().grid_x());
        mc.grid_y = std::max(mc.grid_y, seq.source().grid_y());
        mc.grid_t = std::max(mc.grid_t, seq.source().grid_t());
    }
    std::optional<ToyTransformer> model;
    if (!o.snapshot_in.empty()) {
        std::ifstream f(o.snapshot_in);
        if (!f) throw ParseError("cannot open " + o.snapshot_in, 0);
        model.emplace(load_snapshot(std::string(std::istreambuf_iterator<char>(f), {})));
        const auto& c = model->config();
        if (c.patch_dim != mc.patch_dim || c.grid_x < mc.grid_x || c.grid_y < mc.grid_y || c.grid_t < mc.grid_t) {
            throw ConfigError("model snapshot does not fit these token sequences");
        }
    } else {
        model.emplace(mc);
    }
    if (!o.snapshot_out.empty()) {
        std::ofstream f(o.snapshot_out, std::ios::trunc);
        if (!f) throw Error("cannot open " + o.snapshot_out + " for writing");
        f << snapshot_json(*model) << '\n';
    }
    out << "# model checksum=" << model->weight_checksum() << " d=" << model->config().d_embed
        << " depth=" << model->config().depth << " heads=" << model->config().heads << '\n';

    Matrix packed;
    if (o.corrupt_boundaries) {
        if (batch.example_count() < 2) throw UsageError("--corrupt-boundaries needs at least two examples");
        std::vector<std::uint32_t> bounds(batch.boundaries().begin(), batch.boundaries().end());
        bounds[1] = bounds[1] + 1 < bounds[2] ? bounds[1] + 1 : bounds[1] - 1;
        if (bounds[1] == 0) throw UsageError("batch too small to corrupt");
        out << "# corrupted boundary 1: " << batch.boundaries()[1] << " -> " << bounds[1] << '\n';
        packed = model->forward_with_mask(batch, BlockDiagonalMask::compact(bounds));
    } else {
        packed = model->forward_packed(batch);
    }

    double worst = 0.0;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const auto single = model->forward_single(seqs[i]);
        double dev = 0.0;
        out << "example " << i << " tokens=" << seqs[i].size() << " logits=";
        for (std::size_t j = 0; j < single.size(); ++j) {
            const double d = std::abs(static_cast<double>(packed(i, j)) - single[j]);
            dev = std::isnan(d) ? std::numeric_limits<double>::infinity() : std::max(dev, d);
            out << (j ? "," : "") << fixed(packed(i, j), 6);
        }
        out << " deviation=" << dev << '\n';
        worst = std::max(worst, dev);
    }
    const bool ok = worst <= o.tolerance;
    out << "max_abs_deviation=" << worst << " tolerance=" << o.tolerance << (ok ? " PASS" : " FAIL") << '\n';
    return ok ? kOk : kEquivalenceFailure;
}

int cmd_bench(const Options& o, std::istream& in, std::ostream& out) {
    check_format(o);
    const TokenizeSettings s = resolve_settings(o);
    echo_config(out, o, s);
    BenchOptions bo;
    bo.runs = o.runs;
    bo.forward_runs = o.forward_runs ? o.forward_runs : o.runs;
    bo.seed = o.seed;
    std::vector<BenchRecord> records;
    if (o.inputs.empty()) {
        for (std::size_t res : o.resolutions) {
            for (std::size_t c = 0; c < o.clips; ++c) {
                const VideoDims dims{3, o.frames, res, res};
                const std::string id = "synthetic_" + std::to_string(res) + "_" + std::to_string(c);
                records.push_back(
                    bench_clip(id, synthetic_clip(dims, o.patch, o.static_fraction, o.seed + c), s, bo));
            }
        }
    } else {
        for (const auto& path : o.inputs) {
            records.push_back(bench_clip(input_id(path), load_video(path, o, in).video, s, bo));
        }
    }
    emit(o, out, o.format == "json" || o.format == "jsonl" ? bench_json(records) : bench_text(records));
    return kOk;
}

void add_common(CLI::App* sub, Options& o) {
    sub->add_option("inputs", o.inputs, "Input paths: RLTV1 video, frame directory, or - for a raw frame pipe");
    sub->add_option("--tau", o.tau, "Static threshold on the mean/sum absolute difference")->capture_default_str();
    sub->add_option("--metric", o.metric, "Difference metric: mean or sum")
        ->check(CLI::IsMember({"mean", "sum", "mean_abs", "sum_abs"}))
        ->capture_default_str();
    sub->add_option("--patch", o.patch, "Spatial patch size in pixels (square)")->capture_default_str();
    sub->add_option("--tubelet", o.tubelet, "Frames per tubelet")->capture_default_str();
    sub->add_option("--norm", o.norm, "Normalization: imagenet, none or custom")
        ->check(CLI::IsMember({"imagenet", "none", "custom"}))
        ->capture_default_str();
    sub->add_option("--mean", o.mean, "Per-channel mean for --norm custom")->delimiter(',');
    sub->add_option("--std", o.std, "Per-channel std for --norm custom")->delimiter(',');
    sub->add_option("--seed", o.seed, "Seed for synthetic clips and model weights")->capture_default_str();
    sub->add_option("--workers", o.workers, "Worker threads for batch modes")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("-o,--output", o.output, "Output file or directory");
    sub->add_option("--pattern", o.pattern, "Glob for frame directories")->capture_default_str();
    sub->add_option("--pipe-dims", o.pipe_dims, "CxTxHxW of a raw RGB24 frame stream on stdin");
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"Run-length video tokenizer: prune repeated tubelets and pack variable-length sequences"};
    app.footer("Exit codes: 0 ok, 1 parse/IO/data error, 2 configuration or usage error, 3 refdemo equivalence failure");
    app.require_subcommand(1);
    app.set_version_flag("--version", "rlt 0.1.0");
    Options o;

    auto* tok = app.add_subcommand("tokenize", "Tokenize clips into RLTT1 token files");
    add_common(tok, o);
    auto* pk = app.add_subcommand("pack", "Pack RLTT1 token files into one RLTP1 batch");
    add_common(pk, o);
    auto* up = app.add_subcommand("unpack", "Split an RLTP1 batch back into RLTT1 files");
    add_common(up, o);
    auto* st = app.add_subcommand("stats", "Per-clip token reduction report");
    add_common(st, o);
    st->add_option("--format", o.format, "table or jsonl")->capture_default_str();
    auto* sw = app.add_subcommand("sweep", "Mean reduction over a threshold grid");
    add_common(sw, o);
    sw->add_option("--taus", o.taus, "Comma-separated ascending thresholds; 'inf' allowed")
        ->default_str("0,0.025,0.05,0.075,0.1,0.15,0.2,0.3,0.5,1");
    sw->add_option("--format", o.format, "table or jsonl")->capture_default_str();
    auto* vz = app.add_subcommand("viz", "Write overlay frames with pruned tubelets grayed out");
    add_common(vz, o);
    vz->add_option("--tokens", o.tokens, "Use this RLTT1 file instead of tokenizing");
    auto* rd = app.add_subcommand("refdemo", "Packed vs per-example forward through the toy transformer");
    add_common(rd, o);
    rd->add_option("--batch", o.batch, "Synthetic examples when no inputs are given")->capture_default_str();
    rd->add_flag("--corrupt-boundaries", o.corrupt_boundaries, "Shift one segment boundary to force a mismatch");
    rd->add_option("--tolerance", o.tolerance, "Max allowed per-logit deviation")->capture_default_str();
    rd->add_option("--save-snapshot", o.snapshot_out, "Write the model snapshot JSON here");
    rd->add_option("--load-snapshot", o.snapshot_in, "Rebuild the model from a snapshot JSON");
    auto* bn = app.add_subcommand("bench", "Tokenization time against toy-model forward time");
    add_common(bn, o);
    bn->add_option("--runs", o.runs, "Timed tokenize runs per clip (median reported)")->capture_default_str();
    bn->add_option("--forward-runs", o.forward_runs, "Timed forward runs per clip (default: --runs)");
    bn->add_option("--resolution", o.resolutions, "Square sizes for synthetic clips")->delimiter(',')->capture_default_str();
    bn->add_option("--frames", o.frames, "Frames per synthetic clip")->capture_default_str();
    bn->add_option("--clips", o.clips, "Synthetic clips per resolution")->capture_default_str();
    bn->add_option("--static-fraction", o.static_fraction, "Fraction of frozen patch rows in synthetic clips")
        ->capture_default_str();
    bn->add_option("--format", o.format, "text or json")->default_str("text");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    for (auto* sub : app.get_subcommands()) o.command = sub->get_name();
    try {
        if (o.command == "tokenize") return cmd_tokenize(o, in, out);
        if (o.command == "pack") return cmd_pack(o, out);
        if (o.command == "unpack") return cmd_unpack(o, out);
        if (o.command == "stats") return cmd_stats(o, in, out);
        if (o.command == "sweep") return cmd_sweep(o, in, out);
        if (o.command == "viz") return cmd_viz(o, in, out);
        if (o.command == "refdemo") return cmd_refdemo(o, in, out);
        if (o.command == "bench") return cmd_bench(o, in, out);
        throw UsageError("unknown subcommand " + o.command);
    } catch (const ConfigError& e) {
        err << "rlt " << o.command << ": configuration error: " << e.what() << '\n';
        return kConfigError;
    } catch (const UsageError& e) {
        err << "rlt " << o.command << ": usage error: " << e.what() << '\n';
        return kConfigError;
    } catch (const Error& e) {
        err << "rlt " << o.command << ": " << e.what() << '\n';
        return kDataError;
    } catch (const fs::filesystem_error& e) {
        err << "rlt " << o.command << ": " << e.what() << '\n';
        return kDataError;
    }
}

}  // namespace rlt::cli
