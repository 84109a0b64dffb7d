#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "oaip/pipeline.hpp"
#include "oaip/raster.hpp"
#include "test_util.hpp"

using namespace oaip;

TEST_CASE("defaults mirror the published hyperparameters") {
    RunConfig cfg;
    CHECK(cfg.patch_size == 64);
    CHECK(cfg.num_pos == 20);
    CHECK(cfg.num_neg == 30);
    CHECK(cfg.iterations == 1000);
    CHECK(cfg.prune_interval == 20);
    CHECK(cfg.prune_rate.num == 1);
    CHECK(cfg.prune_rate.den == 16);
    CHECK(cfg.theta.num == 7);
    CHECK(cfg.theta.den == 10);
    CHECK(cfg.grad_bits == 5);
}

TEST_CASE("rational parsing") {
    CHECK(parse_rational("1/16").num == 1);
    CHECK(parse_rational("1/16").den == 16);
    CHECK(parse_rational("0.7").num == 7);
    CHECK(parse_rational("0.7").den == 10);
    CHECK(parse_rational("0.35").num == 7);
    CHECK(parse_rational("0.35").den == 20);
    CHECK(parse_rational("2/4").num == 1);
    CHECK(parse_rational("1").den == 1);
    CHECK_THROWS_AS(parse_rational("1/0"), std::invalid_argument);
    CHECK_THROWS_AS(parse_rational("abc"), std::exception);
}

namespace {
RasterImage noise_image(SplitMix64& rng, int h, int w) {
    RasterImage img;
    img.height = h;
    img.width = w;
    img.channels = 3;
    img.pixels.resize(size_t(h) * w * 3);
    for (auto& v : img.pixels) v = float(rng.below(256));
    return img;
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}
}  // namespace

TEST_CASE("tiny end-to-end run writes every artifact and is deterministic") {
    SplitMix64 rng(0xabc);
    RasterImage pre = noise_image(rng, 32, 32);
    RasterImage post = pre;
    for (int y = 8; y < 24; ++y)
        for (int x = 8; x < 24; ++x)
            for (int c = 0; c < 3; ++c)
                post.pixels[(size_t(y) * 32 + x) * 3 + c] = float(255 - int(pre.at(y, x, c)));

    const std::string dir = "/tmp/oaip_pipe_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    save_rawf(dir + "/pre.rawf", pre);
    save_rawf(dir + "/post.rawf", post);
    RasterImage gt;
    gt.height = gt.width = 32;
    gt.channels = 3;
    gt.pixels.assign(32 * 32 * 3, 0.0f);
    for (int y = 8; y < 24; ++y)
        for (int x = 8; x < 24; ++x)
            for (int c = 0; c < 3; ++c) gt.pixels[(size_t(y) * 32 + x) * 3 + c] = 255.0f;
    save_rawf(dir + "/gt.rawf", gt);

    RunConfig cfg;
    cfg.pre_path = dir + "/pre.rawf";
    cfg.post_path = dir + "/post.rawf";
    cfg.gt_path = dir + "/gt.rawf";
    cfg.out_dir = dir + "/out";
    cfg.patch_size = 16;
    cfg.num_pos = 1;
    cfg.num_neg = 2;
    cfg.iterations = 4;
    cfg.prune_interval = 2;
    cfg.prune_rate = {1, 4};
    cfg.seed = 5;

    PipelineResult r1 = run_pipeline(cfg);
    for (const char* name : {"change_map.pgm", "difference_map.pgm", "train_log.csv",
                             "metrics.txt", "weights_final.oaipw", "config_resolved.txt"})
        CHECK(std::filesystem::exists(dir + "/out/" + name));
    CHECK(r1.report.has_value());
    CHECK(r1.initial_filters == 256 + 8 * 512);

    // outputs re-readable
    RasterImage cm = load_raster(dir + "/out/change_map.pgm");
    CHECK(cm.height == 32);
    load_weights(dir + "/out/weights_final.oaipw");

    // determinism: identical seed, identical bytes for the key artifacts
    cfg.out_dir = dir + "/out2";
    run_pipeline(cfg);
    CHECK(slurp(dir + "/out/change_map.pgm") == slurp(dir + "/out2/change_map.pgm"));
    CHECK(slurp(dir + "/out/weights_final.oaipw") == slurp(dir + "/out2/weights_final.oaipw"));
    CHECK(slurp(dir + "/out/difference_map.pgm") == slurp(dir + "/out2/difference_map.pgm"));

    std::filesystem::remove_all(dir);
}

TEST_CASE("pipeline rejects mismatched image sizes") {
    SplitMix64 rng(0x9);
    const std::string dir = "/tmp/oaip_pipe_err";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    save_rawf(dir + "/a.rawf", noise_image(rng, 32, 32));
    save_rawf(dir + "/b.rawf", noise_image(rng, 32, 48));
    RunConfig cfg;
    cfg.pre_path = dir + "/a.rawf";
    cfg.post_path = dir + "/b.rawf";
    cfg.out_dir = dir + "/out";
    cfg.patch_size = 16;
    CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("size mismatch"),
                         std::runtime_error);
    std::filesystem::remove_all(dir);
}
