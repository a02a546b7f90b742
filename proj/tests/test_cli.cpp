// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

#include "cli/cli.hpp"
#include "rlt/io.hpp"
#include "rlt/packing.hpp"
#include "testkit.hpp"

using namespace rlt;
namespace fs = std::filesystem;
using testkit::SyntheticKind;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run_cli(const std::vector<std::string>& args, const std::string& stdin_bytes = "") {
    std::istringstream in(stdin_bytes);
    std::ostringstream out, err;
    const int code = cli::run(args, in, out, err);
    return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("rlt_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
                std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string clip(const std::string& name, SyntheticKind kind, std::uint64_t seed = 1,
                     VideoDims dims = {3, 16, 32, 32}) {
        const auto path = (dir_ / name).string();
        write_raw(path, testkit::gen_video({.kind = kind, .dims = dims, .config = {16, 16, 2, 64}, .seed = seed}));
        return path;
    }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

std::size_t retained_in(const std::string& out) {
    std::smatch m;
    const std::regex re("n_p_prime=(\\d+)");
    if (!std::regex_search(out, m, re)) return SIZE_MAX;
    return std::stoul(m[1]);
}

}  // namespace

TEST_F(CliTest, HelpAndBadArguments) {
    const auto help = run_cli({"--help"});
    EXPECT_EQ(help.code, 0);
    EXPECT_NE(help.out.find("tokenize"), std::string::npos);
    const auto sub_help = run_cli({"tokenize", "--help"});
    EXPECT_EQ(sub_help.code, 0);
    EXPECT_NE(sub_help.out.find("--tau"), std::string::npos);
    EXPECT_NE(sub_help.out.find("0.1"), std::string::npos);
    EXPECT_EQ(run_cli({}).code, 2);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
    EXPECT_EQ(run_cli({"tokenize", "x", "--metric", "l2", "-o", "y"}).code, 2);
    EXPECT_EQ(run_cli({"tokenize", "x", "--tau", "-1", "-o", "y"}).code, 2);
    EXPECT_EQ(run_cli({"tokenize", path("missing.rltv"), "-o", path("o.rltt")}).code, 1);
    EXPECT_EQ(run_cli({"stats", path("missing.rltv"), "--norm", "custom"}).code, 2);
}

TEST_F(CliTest, TokenizeStaticClipAndEchoConfig) {
    const auto in = clip("static.rltv", SyntheticKind::Static);
    const auto r = run_cli({"tokenize", in, "-o", path("static.rltt")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.rfind("# rlt tokenize tau=0.1 metric=mean_abs patch=16 tubelet=2 norm=imagenet", 0), 0u) << r.out;
    EXPECT_NE(r.out.find("n_p=32 n_p_prime=4 reduction=0.8750"), std::string::npos) << r.out;

    TokenizeSettings s;
    EXPECT_EQ(read_tokens(path("static.rltt")), tokenize(read_raw(in), s));
}

TEST_F(CliTest, TokenizeThresholdMonotone) {
    const auto in = clip("ramp.rltv", SyntheticKind::Noise, 4);
    const auto loose = run_cli({"tokenize", in, "--tau", "0.1", "-o", path("a.rltt")});
    const auto strict = run_cli({"tokenize", in, "--tau", "0", "-o", path("b.rltt")});
    ASSERT_EQ(loose.code, 0);
    ASSERT_EQ(strict.code, 0);
    EXPECT_GE(retained_in(strict.out), retained_in(loose.out));
}

TEST_F(CliTest, TokenizeWorkersDoNotChangeOutput) {
    const std::vector<std::string> inputs{clip("a.rltv", SyntheticKind::Noise, 1), clip("b.rltv", SyntheticKind::Static, 2),
                                          clip("c.rltv", SyntheticKind::TwoSegmentStatic, 3)};
    auto args1 = inputs;
    args1.insert(args1.begin(), "tokenize");
    auto args3 = args1;
    args1.insert(args1.end(), {"-o", path("w1"), "--workers", "1"});
    args3.insert(args3.end(), {"-o", path("w3"), "--workers", "3"});
    const auto r1 = run_cli(args1);
    const auto r3 = run_cli(args3);
    ASSERT_EQ(r1.code, 0) << r1.err;
    ASSERT_EQ(r3.code, 0) << r3.err;
    for (const char* name : {"a.rltt", "b.rltt", "c.rltt"}) {
        EXPECT_EQ(read_file_bytes(fs::path(path("w1")) / name), read_file_bytes(fs::path(path("w3")) / name)) << name;
    }

    auto stats1 = inputs, stats3 = inputs;
    stats1.insert(stats1.begin(), {"stats", "--format", "jsonl", "--workers", "1"});
    stats3.insert(stats3.begin(), {"stats", "--format", "jsonl", "--workers", "3"});
    const auto s1 = run_cli(stats1), s3 = run_cli(stats3);
    ASSERT_EQ(s1.code, 0);
    const auto strip = [](const std::string& s) { return s.substr(s.find('\n') + 1); };
    EXPECT_EQ(strip(s1.out), strip(s3.out));
}

TEST_F(CliTest, PackUnpackRoundTrip) {
    const auto a = clip("a.rltv", SyntheticKind::Noise, 1);
    const auto b = clip("b.rltv", SyntheticKind::Static, 2);
    ASSERT_EQ(run_cli({"tokenize", a, "-o", path("a.rltt")}).code, 0);
    ASSERT_EQ(run_cli({"tokenize", b, "-o", path("b.rltt")}).code, 0);
    const auto p = run_cli({"pack", path("a.rltt"), path("b.rltt"), "-o", path("ab.rltp")});
    ASSERT_EQ(p.code, 0) << p.err;
    const auto ta = read_tokens(path("a.rltt"));
    const auto tb = read_tokens(path("b.rltt"));
    const std::string bounds = "boundaries=0," + std::to_string(ta.size()) + "," + std::to_string(ta.size() + tb.size());
    EXPECT_NE(p.out.find(bounds), std::string::npos) << p.out;

    const auto u = run_cli({"unpack", path("ab.rltp"), "-o", path("out")});
    ASSERT_EQ(u.code, 0) << u.err;
    EXPECT_EQ(read_file_bytes(fs::path(path("out")) / "a.rltt"), read_file_bytes(path("a.rltt")));
    EXPECT_EQ(read_file_bytes(fs::path(path("out")) / "b.rltt"), read_file_bytes(path("b.rltt")));

    ASSERT_EQ(run_cli({"pack", path("a.rltt"), "-o", path("single.rltp")}).code, 0);
    EXPECT_EQ(read_batch(path("single.rltp")).example_count(), 1u);
    EXPECT_EQ(run_cli({"pack", path("a.rltv"), "-o", path("bad.rltp")}).code, 1);
}

TEST_F(CliTest, PackRejectsMixedConfig) {
    const auto a = clip("a.rltv", SyntheticKind::Noise, 1);
    ASSERT_EQ(run_cli({"tokenize", a, "-o", path("a.rltt")}).code, 0);
    ASSERT_EQ(run_cli({"tokenize", a, "--tau", "0.2", "-o", path("b.rltt")}).code, 0);
    EXPECT_EQ(run_cli({"pack", path("a.rltt"), path("b.rltt"), "-o", path("ab.rltp")}).code, 2);
}

TEST_F(CliTest, StatsAndSweep) {
    const auto st = clip("static.rltv", SyntheticKind::Static);
    const auto r = run_cli({"stats", st, clip("two.rltv", SyntheticKind::TwoSegmentStatic), path("nope.rltv"), "--format",
                            "jsonl", "-o", path("report.jsonl")});
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream f(path("report.jsonl"));
    std::vector<nlohmann::json> lines;
    for (std::string line; std::getline(f, line);) lines.push_back(nlohmann::json::parse(line));
    ASSERT_EQ(lines.size(), 5u);
    EXPECT_EQ(lines[1]["reduction"], 0.875);
    EXPECT_EQ(lines[2]["reduction"], 0.75);
    EXPECT_EQ(lines[3]["type"], "skipped");
    EXPECT_EQ(lines[4]["mean_reduction"], 0.8125);

    const auto sw = run_cli({"sweep", st, "--taus", "0,0.1,inf", "--format", "jsonl"});
    ASSERT_EQ(sw.code, 0) << sw.err;
    EXPECT_NE(sw.out.find("\"tau\":\"inf\""), std::string::npos);
    EXPECT_EQ(run_cli({"sweep", st, "--taus", "0.5,0.1"}).code, 2);
    EXPECT_EQ(run_cli({"sweep", st, "--taus", "abc"}).code, 2);
}

TEST_F(CliTest, VizWritesOverlayFrames) {
    const auto st = clip("static.rltv", SyntheticKind::Static);
    const auto r = run_cli({"viz", st, "-o", path("viz")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(fs::path(path("viz")) / "frame_0000.png"));
    EXPECT_TRUE(fs::exists(fs::path(path("viz")) / "frame_0015.png"));
    EXPECT_NE(r.out.find("frame_0000.png pruned=0.0000"), std::string::npos);
    EXPECT_NE(r.out.find("frame_0002.png pruned=1.0000"), std::string::npos);
    const Image img = read_image(fs::path(path("viz")) / "frame_0005.png");
    EXPECT_EQ(img.pixels[0], 128);
}

TEST_F(CliTest, RefdemoEquivalence) {
    const auto r4 = run_cli({"refdemo", "--batch", "4", "--seed", "3"});
    EXPECT_EQ(r4.code, 0) << r4.out << r4.err;
    EXPECT_NE(r4.out.find("PASS"), std::string::npos);
    const auto r1 = run_cli({"refdemo", clip("a.rltv", SyntheticKind::Noise, 1)});
    EXPECT_EQ(r1.code, 0);
    EXPECT_NE(r1.out.find("max_abs_deviation=0 "), std::string::npos) << r1.out;
    const auto bad = run_cli({"refdemo", "--batch", "4", "--corrupt-boundaries"});
    EXPECT_EQ(bad.code, 3) << bad.out;
    EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
    EXPECT_EQ(run_cli({"refdemo", "--batch", "1", "--corrupt-boundaries"}).code, 2);
}

TEST_F(CliTest, RefdemoSnapshotReproducible) {
    const auto a = run_cli({"refdemo", "--seed", "9", "--save-snapshot", path("m.json")});
    ASSERT_EQ(a.code, 0) << a.err;
    const auto b = run_cli({"refdemo", "--seed", "9", "--load-snapshot", path("m.json")});
    ASSERT_EQ(b.code, 0) << b.err;
    const auto body = [](const std::string& s) { return s.substr(s.find('\n') + 1); };
    EXPECT_EQ(body(a.out), body(b.out));
    std::ofstream(path("bad.json")) << "{";
    EXPECT_EQ(run_cli({"refdemo", "--load-snapshot", path("bad.json")}).code, 1);
}

TEST_F(CliTest, BenchJsonSchema) {
    const auto r = run_cli({"bench", "--runs", "2", "--resolution", "32,64", "--frames", "4", "--format", "json",
                            "-o", path("bench.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream f(path("bench.json"));
    const auto doc = nlohmann::json::parse(f);
    EXPECT_EQ(doc["units"]["time"], "ms");
    ASSERT_EQ(doc["clips"].size(), 2u);
    for (const auto& c : doc["clips"]) {
        for (const char* key : {"id", "dims", "n_p", "n_p_prime", "tokenize_ms", "tokens_per_s", "forward_ms",
                                "overhead_ratio"}) {
            EXPECT_TRUE(c.contains(key)) << key;
        }
    }
    EXPECT_TRUE(doc.contains("max_overhead_ratio"));
    const auto text = run_cli({"bench", "--runs", "1", "--resolution", "32", "--frames", "2"});
    ASSERT_EQ(text.code, 0);
    EXPECT_NE(text.out.find("tokenize_ms"), std::string::npos);
}

TEST_F(CliTest, FramePipeInput) {
    std::string bytes(2 * 32 * 32 * 3, '\x40');
    const auto r = run_cli({"tokenize", "-", "--pipe-dims", "3x2x32x32", "-o", path("pipe.rltt")}, bytes);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto seq = read_tokens(path("pipe.rltt"));
    EXPECT_TRUE(seq.source().u8_source);
    EXPECT_EQ(seq.size(), 4u);
    EXPECT_EQ(run_cli({"tokenize", "-", "--pipe-dims", "3x4x32x32", "-o", path("p2.rltt")}, bytes).code, 1);
    EXPECT_EQ(run_cli({"tokenize", "-", "-o", path("p3.rltt")}, bytes).code, 2);
    EXPECT_EQ(run_cli({"tokenize", "-", "--pipe-dims", "3x2x32", "-o", path("p4.rltt")}, bytes).code, 2);
}

TEST_F(CliTest, NormalizationOptions) {
    const auto st = clip("static.rltv", SyntheticKind::Static);
    EXPECT_EQ(run_cli({"tokenize", st, "--norm", "none", "-o", path("n.rltt")}).code, 0);
    EXPECT_EQ(read_tokens(path("n.rltt")).source().norm, NormalizationParams::identity(3));
    EXPECT_EQ(run_cli({"tokenize", st, "--norm", "custom", "--mean", "0.5,0.5,0.5", "--std", "0.2,0.2,0.2", "-o",
                       path("c.rltt")})
                  .code,
              0);
    EXPECT_EQ(run_cli({"tokenize", st, "--norm", "custom", "--mean", "0.5", "--std", "0.2", "-o", path("d.rltt")}).code,
              2);
    EXPECT_EQ(run_cli({"tokenize", st, "--mean", "0.5,0.5,0.5", "-o", path("e.rltt")}).code, 2);
}

TEST_F(CliTest, EverySubcommandEchoesConfig) {
    const auto st = clip("static.rltv", SyntheticKind::Static);
    ASSERT_EQ(run_cli({"tokenize", st, "-o", path("s.rltt")}).code, 0);
    ASSERT_EQ(run_cli({"pack", path("s.rltt"), "-o", path("s.rltp")}).code, 0);
    const std::vector<std::vector<std::string>> runs{
        {"tokenize", st, "-o", path("t.rltt")},
        {"pack", path("s.rltt"), "-o", path("p.rltp")},
        {"unpack", path("s.rltp"), "-o", path("u")},
        {"stats", st},
        {"sweep", st},
        {"viz", st, "-o", path("v")},
        {"refdemo"},
        {"bench", "--runs", "1", "--resolution", "32", "--frames", "2"},
    };
    for (const auto& args : runs) {
        const auto r = run_cli(args);
        EXPECT_EQ(r.code, 0) << args[0] << ": " << r.err;
        EXPECT_EQ(r.out.rfind("# rlt " + args[0] + " ", 0), 0u) << r.out;
    }
}
