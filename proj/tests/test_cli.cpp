#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "selfdeblur/selfdeblur.hpp"

namespace selfdeblur {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("selfdeblur_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string p(const std::string& name) const { return (dir_ / name).string(); }

    int cli(const std::string& args) const {
        const std::string cmd = std::string(SELFDEBLUR_CLI) + " " + args + " > " + p("stdout.txt") + " 2> " +
                                p("stderr.txt");
        const int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    }

    std::string sharp(int size = 32, std::uint64_t seed = 1) const {
        const std::string path = p("sharp" + std::to_string(size) + ".png");
        if (!fs::exists(path)) write_png(path, make_test_scene(size, size, 3, seed));
        return path;
    }

    json read_json(const std::string& name) const { return json::parse(read_text_file(p(name))); }

    fs::path dir_;
};

TEST_F(Cli, SynthDeltaWithoutNoiseIsIdentity) {
    ASSERT_EQ(cli("--out " + p("s") + " synth --sharp " + sharp() + " --kernel motion:1,0 --noise 0"), 0);
    EXPECT_EQ(read_png(p("s/blurred.png")).data, read_png(sharp()).data);
    ASSERT_EQ(cli("eval --result " + p("s/blurred.png") + " --reference " + sharp() + " --report " + p("r.json")), 0);
    const json r = read_json("r.json");
    EXPECT_EQ(r["rows"][0]["psnr"].get<double>(), kPsnrCap);
    EXPECT_EQ(r["rows"][0]["ssim"].get<double>(), 1.0);
}

TEST_F(Cli, SynthOnePercentNoiseIsFortyDb) {
    write_png(p("gray.png"), Image(64, 64, 3, 0.5));
    ASSERT_EQ(cli("--seed 3 --out " + p("s") + " synth --sharp " + p("gray.png") + " --kernel motion:1,0"), 0);
    const json m = read_json("s/blurred_manifest.json");
    EXPECT_EQ(m["noise_sigma"].get<double>(), 0.01);
    EXPECT_NEAR(m["psnr_blurred"].get<double>(), 40.0, 0.2);
}

TEST_F(Cli, SynthWalkKernelIsNormalized) {
    ASSERT_EQ(cli("--out " + p("s") + " synth --sharp " + sharp() + " --kernel walk:15,4 --prefix w"), 0);
    EXPECT_TRUE(read_kernel_text(p("s/w_kernel.txt")).is_normalized(1e-12));
    EXPECT_TRUE(fs::exists(p("s/w_manifest.json")));
}

TEST_F(Cli, SynthErrors) {
    EXPECT_EQ(cli("--out " + p("s") + " synth --sharp " + sharp() + " --kernel motion:7"), 1);
    EXPECT_EQ(cli("--out " + p("s") + " synth --sharp " + sharp() + " --kernel blob:1,2"), 1);
    EXPECT_EQ(cli("--out " + p("s") + " synth --sharp " + p("missing.png") + " --kernel motion:3,0"), 2);
    EXPECT_EQ(cli("synth"), 1);
    EXPECT_EQ(cli(""), 1);
}

std::string tiny_net() { return " --set base_width=4 --set max_width=8 --quiet"; }

TEST_F(Cli, DeblurSingleIterationWritesEverything) {
    ASSERT_EQ(cli("--out " + p("s") + " synth --sharp " + sharp() + " --kernel motion:5,45"), 0);
    ASSERT_EQ(cli("--out " + p("d") + " deblur --input " + p("s/blurred.png") +
                  " --kernel-size 5 --iters 1 --scales 2 --per-scale --float-dump --reference " + sharp() +
                  " --true-kernel " + p("s/blurred_kernel.txt") + tiny_net()),
              0)
        << read_text_file(p("stderr.txt"));
    EXPECT_EQ(read_png(p("d/deblurred.png")).height, 32);
    EXPECT_EQ(read_png(p("d/kernel.png")).height, 5);
    EXPECT_TRUE(read_kernel_text(p("d/kernel.txt")).is_normalized());
    EXPECT_EQ(read_float_dump(p("d/deblurred.f32")).width, 32);
    EXPECT_EQ(read_png(p("d/scale1.png")).height, 16);
    EXPECT_EQ(read_kernel_text(p("d/scale1_kernel.txt")).rows, 3);
    const std::string trace = read_text_file(p("d/trace.csv"));
    EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 2);
    const json s = read_json("d/summary.json");
    EXPECT_EQ(s["status"], "ok");
    EXPECT_EQ(s["iterations"], 1);
    EXPECT_EQ(s["config"]["scales"], 2);
    EXPECT_EQ(s["config"]["preset"], "desk");
    EXPECT_TRUE(s.contains("psnr_gain"));
    EXPECT_TRUE(s.contains("kernel_ncc"));
    EXPECT_TRUE(s.contains("refine_fallbacks"));
}

TEST_F(Cli, DeblurSingleScaleAblation) {
    ASSERT_EQ(cli("--out " + p("s") + " synth --sharp " + sharp() + " --kernel motion:5,0"), 0);
    ASSERT_EQ(cli("--out " + p("d") + " deblur --input " + p("s/blurred.png") + " --kernel-size 5 --iters 2 --scales 1" +
                  tiny_net()),
              0);
    const json s = read_json("d/summary.json");
    EXPECT_EQ(s["config"]["scales"], 1);
    EXPECT_TRUE(fs::exists(p("d/deblurred.png")));
}

TEST_F(Cli, DeblurIsBitReproducible) {
    ASSERT_EQ(cli("--out " + p("s") + " synth --sharp " + sharp() + " --kernel motion:5,30"), 0);
    for (const char* run : {"a", "b"}) {
        ASSERT_EQ(cli("--seed 9 --out " + p(run) + " deblur --input " + p("s/blurred.png") +
                      " --kernel-size 5 --iters 3 --scales 2 --no-timing --float-dump" + tiny_net()),
                  0);
    }
    EXPECT_EQ(read_text_file(p("a/trace.csv")), read_text_file(p("b/trace.csv")));
    EXPECT_EQ(read_text_file(p("a/deblurred.f32")), read_text_file(p("b/deblurred.f32")));
    EXPECT_EQ(read_text_file(p("a/summary.json")), read_text_file(p("b/summary.json")));
}

TEST_F(Cli, DeblurConfigFile) {
    ASSERT_EQ(cli("--out " + p("s") + " synth --sharp " + sharp() + " --kernel motion:5,30"), 0);
    write_text_file(p("ok.cfg"), "# comment\nlambda_h = 2.5\ngamma=3\niters=1\nscales=2\nbase_width=4\nmax_width=4\n");
    ASSERT_EQ(cli("--preset lai --config " + p("ok.cfg") + " --out " + p("d") + " deblur --input " +
                  p("s/blurred.png") + " --kernel-size 5 --quiet"),
              0)
        << read_text_file(p("stderr.txt"));
    const json s = read_json("d/summary.json");
    EXPECT_EQ(s["config"]["preset"], "lai");
    EXPECT_EQ(s["config"]["lambda_h"], 2.5);
    EXPECT_EQ(s["config"]["gamma"], 3.0);
    EXPECT_EQ(s["config"]["lr"], 0.001);

    write_text_file(p("bad.cfg"), "lambda_h=1\nwarp_speed=9\n");
    EXPECT_EQ(cli("--config " + p("bad.cfg") + " --out " + p("e") + " deblur --input " + p("s/blurred.png") +
                  " --kernel-size 5 --quiet"),
              1);
    EXPECT_NE(read_text_file(p("stderr.txt")).find("warp_speed"), std::string::npos);
}

TEST_F(Cli, DeblurUsageErrors) {
    ASSERT_EQ(cli("--out " + p("s") + " synth --sharp " + sharp() + " --kernel motion:5,30"), 0);
    const std::string in = " deblur --input " + p("s/blurred.png");
    EXPECT_EQ(cli("--out " + p("d") + in + " --iters 1"), 1);                         // no kernel size
    EXPECT_EQ(cli("--out " + p("d") + in + " --kernel-size 4 --iters 1"), 1);         // even
    EXPECT_EQ(cli("--out " + p("d") + in + " --kernel-size 5 --iters 0"), 1);
    EXPECT_EQ(cli("--preset fast --out " + p("d") + in + " --kernel-size 5"), 1);
    EXPECT_EQ(cli("--out " + p("d") + " deblur --input " + p("none.png") + " --kernel-size 5 --iters 1"), 2);
}

TEST_F(Cli, EvalDirectoryBatch) {
    fs::create_directories(p("res"));
    fs::create_directories(p("ref"));
    std::vector<double> expect;
    for (int i = 0; i < 3; ++i) {
        const Image ref = make_test_scene(24, 24, 3, 10 + i);
        const Image res = synthesize_blur(ref, gaussian_kernel(1.0, 5), 0.02, i);
        const std::string name = "img" + std::to_string(i) + ".png";
        write_png(p("ref/" + name), ref);
        write_png(p("res/" + name), res);
        expect.push_back(psnr(read_png(p("res/" + name)), read_png(p("ref/" + name))));
    }
    ASSERT_EQ(cli("eval --result " + p("res") + " --reference " + p("ref") + " --report " + p("r.json")), 0);
    const json r = read_json("r.json");
    ASSERT_EQ(r["rows"].size(), 3u);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(r["rows"][i]["psnr"].get<double>(), expect[i], 1e-9);
    EXPECT_EQ(r["average"]["count"], 3);
    EXPECT_NEAR(r["average"]["psnr"].get<double>(), (expect[0] + expect[1] + expect[2]) / 3, 1e-9);

    ASSERT_EQ(cli("eval --format csv --result " + p("res") + " --reference " + p("ref") + " --report " + p("r.csv")), 0);
    const std::string csv = read_text_file(p("r.csv"));
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);  // header + 3 rows + average

    // A size mismatch is reported, excluded from the average and fails the run.
    write_png(p("res/img1.png"), Image(20, 24, 3, 0.5));
    EXPECT_EQ(cli("eval --result " + p("res") + " --reference " + p("ref") + " --report " + p("m.json")), 2);
    const json m = read_json("m.json");
    EXPECT_TRUE(m["rows"][1].contains("error"));
    EXPECT_EQ(m["average"]["count"], 2);
    EXPECT_NEAR(m["average"]["psnr"].get<double>(), (expect[0] + expect[2]) / 2, 1e-9);
}

TEST_F(Cli, EvalLuminance) {
    const Image ref = make_test_scene(24, 24, 3, 3);
    const Image res = synthesize_blur(ref, gaussian_kernel(1.0, 3), 0.0, 0);
    write_png(p("a.png"), res);
    write_png(p("b.png"), ref);
    ASSERT_EQ(cli("eval --luminance --result " + p("a.png") + " --reference " + p("b.png") + " --report " + p("r.json")),
              0);
    const json r = read_json("r.json");
    EXPECT_EQ(r["aggregation"], "luminance");
    const double want = psnr(luminance(read_png(p("a.png"))), luminance(read_png(p("b.png"))));
    EXPECT_NEAR(r["rows"][0]["psnr"].get<double>(), want, 1e-9);
}

}  // namespace
}  // namespace selfdeblur
