// oaipcd: change detection for co-registered heterogeneous image pairs with
// integer-only fine-tuning and adaptive filter pruning.
#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "oaip/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Heterogeneous change detection with all-integer fine-tuning"};
    app.require_subcommand(1);

    CLI::App* detect = app.add_subcommand("detect", "run the full detection pipeline");
    oaip::RunConfig cfg;
    std::string prune_rate = "1/16", theta = "0.7", alpha = "1,1,1";

    detect->add_option("--pre", cfg.pre_path, "pre-event raster (P5/P6/RAWF)")->required();
    detect->add_option("--post", cfg.post_path, "post-event raster")->required();
    detect->add_option("--gt", cfg.gt_path, "ground-truth change map (optional)");
    detect->add_option("--weights", cfg.weights_path, "initial OAIPW1 weights (optional)");
    detect->add_option("--out", cfg.out_dir, "output directory")->required();
    detect->set_config("--config", "", "flat key=value configuration file");
    detect->add_option("--patch-size", cfg.patch_size, "sample patch side length");
    detect->add_option("--nh", cfg.num_pos, "positive (high change score) samples");
    detect->add_option("--nl", cfg.num_neg, "negative (low change score) samples");
    detect->add_option("--iters", cfg.iterations, "training iterations");
    detect->add_option("--prune-interval", cfg.prune_interval, "iterations between prunes");
    detect->add_option("--prune-rate", prune_rate, "max fraction pruned per operation (p/q)");
    detect->add_option("--theta", theta, "rollback tolerance factor in (0,1)");
    detect->add_option("--bgw", cfg.grad_bits, "gradient bit budget (1..7)");
    detect->add_option("--alpha", alpha, "tap weights a3,a4,a5");
    detect->add_option("--seed", cfg.seed, "seed for the weight initializer");
    detect->add_option("--tile", cfg.tile, "inference tile size (0 = whole image)");

    CLI11_PARSE(app, argc, argv);

    try {
        cfg.prune_rate = oaip::parse_rational(prune_rate);
        cfg.theta = oaip::parse_rational(theta);
        if (std::sscanf(alpha.c_str(), "%d,%d,%d", &cfg.alpha[0], &cfg.alpha[1],
                        &cfg.alpha[2]) != 3)
            throw std::invalid_argument("--alpha expects three comma-separated integers");

        oaip::PipelineResult r = oaip::run_pipeline(cfg);
        std::printf("filters %d -> %d, weight bytes %zu -> %zu, otsu threshold %d\n",
                    r.initial_filters, r.final_filters, r.initial_weight_bytes,
                    r.final_weight_bytes, r.threshold);
        if (r.report)
            std::printf("accuracy %.4f  precision %.4f  recall %.4f  kappa %.4f\n",
                        r.report->accuracy, r.report->precision, r.report->recall,
                        r.report->kappa);
        if (r.budget_exceeded) {
            std::fprintf(stderr, "warning: iteration budget exceeded, training stopped early\n");
            return 2;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
