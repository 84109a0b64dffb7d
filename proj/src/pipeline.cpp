#include "oaip/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "oaip/network.hpp"
#include "oaip/sampling.hpp"
#include "oaip/training.hpp"

namespace oaip {

namespace {

int64_t parse_int(const std::string& s) {
    size_t used = 0;
    int64_t v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters in number: " + s);
    return v;
}

Rational reduce(Rational r) {
    int64_t g = std::gcd(r.num, r.den);
    if (g > 1) {
        r.num /= g;
        r.den /= g;
    }
    return r;
}

std::vector<uint8_t> to_binary_mask(const RasterImage& img) {
    std::vector<uint8_t> mask(size_t(img.height) * img.width, 0);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) mask[size_t(y) * img.width + x] = img.at(y, x, 0) != 0.0f;
    return mask;
}

std::vector<uint8_t> normalize_to_bytes(const RealMap& map) {
    double lo = map.values.empty() ? 0.0 : map.values[0], hi = lo;
    for (double v : map.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<uint8_t> out(map.values.size(), 0);
    if (hi > lo) {
        const double scale = 255.0 / (hi - lo);
        for (size_t i = 0; i < map.values.size(); ++i)
            out[i] = uint8_t(std::clamp<long>(std::lround((map.values[i] - lo) * scale), 0, 255));
    }
    return out;
}

void write_metrics(const std::string& path, const MetricsReport& m, int threshold) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f.precision(12);
    f << "correct_changed = " << m.correct_changed << "\n"
      << "correct_unchanged = " << m.correct_unchanged << "\n"
      << "detected_changed = " << m.detected_changed << "\n"
      << "true_changed = " << m.true_changed << "\n"
      << "total_pixels = " << m.total << "\n"
      << "accuracy = " << m.accuracy << "\n"
      << "precision = " << m.precision << "\n"
      << "recall = " << m.recall << "\n"
      << "expected_agreement = " << m.expected_agreement << "\n"
      << "kappa = " << m.kappa << "\n"
      << "otsu_threshold = " << threshold << "\n";
}

void write_config_echo(const std::string& path, const RunConfig& c) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f << "pre = " << c.pre_path << "\n"
      << "post = " << c.post_path << "\n"
      << "gt = " << c.gt_path << "\n"
      << "weights = " << c.weights_path << "\n"
      << "out = " << c.out_dir << "\n"
      << "patch_size = " << c.patch_size << "\n"
      << "nh = " << c.num_pos << "\n"
      << "nl = " << c.num_neg << "\n"
      << "iters = " << c.iterations << "\n"
      << "prune_interval = " << c.prune_interval << "\n"
      << "prune_rate = " << c.prune_rate.num << "/" << c.prune_rate.den << "\n"
      << "theta = " << c.theta.num << "/" << c.theta.den << "\n"
      << "bgw = " << c.grad_bits << "\n"
      << "alpha = " << c.alpha[0] << "," << c.alpha[1] << "," << c.alpha[2] << "\n"
      << "seed = " << c.seed << "\n"
      << "tile = " << c.tile << "\n";
}

}  // namespace

Rational parse_rational(const std::string& text) {
    if (text.empty()) throw std::invalid_argument("empty rational");
    auto slash = text.find('/');
    if (slash != std::string::npos) {
        Rational r{parse_int(text.substr(0, slash)), parse_int(text.substr(slash + 1))};
        if (r.den <= 0) throw std::invalid_argument("non-positive denominator in " + text);
        return reduce(r);
    }
    auto dot = text.find('.');
    if (dot == std::string::npos) return {parse_int(text), 1};
    std::string head = text.substr(0, dot), frac = text.substr(dot + 1);
    if (frac.size() > 15) frac = frac.substr(0, 15);
    int64_t den = 1;
    for (size_t i = 0; i < frac.size(); ++i) den *= 10;
    int64_t num = (head.empty() ? 0 : parse_int(head)) * den + (frac.empty() ? 0 : parse_int(frac));
    return reduce({num, den});
}

PipelineResult run_pipeline(const RunConfig& cfg) {
    if (cfg.patch_size < 16)
        throw std::invalid_argument("patch size must be >= 16 (five conv blocks)");
    if (cfg.out_dir.empty()) throw std::invalid_argument("output directory required");

    RasterImage pre = load_raster(cfg.pre_path);
    RasterImage post = load_raster(cfg.post_path);
    if (pre.height != post.height || pre.width != post.width)
        throw std::runtime_error("image size mismatch: pre " + std::to_string(pre.height) + "x" +
                                 std::to_string(pre.width) + " vs post " +
                                 std::to_string(post.height) + "x" + std::to_string(post.width));

    std::filesystem::create_directories(cfg.out_dir);
    const std::string out = cfg.out_dir + "/";
    write_config_echo(out + "config_resolved.txt", cfg);

    // sample selection
    PatchGrid grid = make_grid(pre.height, pre.width, cfg.patch_size);
    std::vector<double> a_pre = affinity(patch_means(pre, grid));
    std::vector<double> a_post = affinity(patch_means(post, grid));
    std::vector<double> scores = change_scores(a_pre, a_post, grid.count());
    SampleSet samples = select_samples(scores, cfg.num_pos, cfg.num_neg, pre, post, grid);

    // network
    SiameseState net = cfg.weights_path.empty() ? build_network() : load_weights(cfg.weights_path);
    if (cfg.weights_path.empty()) init_random_weights(net, cfg.seed);

    PipelineResult result;
    result.initial_filters = net.total_prunable_filters();
    result.initial_weight_bytes = net.weight_bytes();

    // fine-tune
    TrainConfig tc;
    tc.iterations = cfg.iterations;
    tc.grad_bits = cfg.grad_bits;
    tc.tap_alpha = cfg.alpha;
    tc.num_pos = cfg.num_pos;
    tc.num_neg = cfg.num_neg;
    tc.patch_size = cfg.patch_size;
    PruneConfig pc;
    pc.interval = cfg.prune_interval;
    pc.max_rate = cfg.prune_rate;
    pc.tolerance = cfg.theta;
    TrainResult tr = run_training(net, samples, tc, pc);
    write_train_log_csv(out + "train_log.csv", tr.log);
    result.budget_exceeded = tr.budget_exceeded;
    result.final_filters = net.total_prunable_filters();
    result.final_weight_bytes = net.weight_bytes();

    // inference
    InferenceResult inf = infer_change_map(net, pre, post, cfg.alpha, cfg.tile);
    result.threshold = inf.threshold;

    std::vector<uint8_t> change_bytes(inf.change.size());
    for (size_t i = 0; i < inf.change.size(); ++i) change_bytes[i] = inf.change[i] ? 255 : 0;
    save_pgm(out + "change_map.pgm", change_bytes, pre.height, pre.width);
    save_pgm(out + "difference_map.pgm", normalize_to_bytes(inf.difference), pre.height,
             pre.width);
    save_weights(net, out + "weights_final.oaipw");

    if (!cfg.gt_path.empty()) {
        RasterImage gt = load_raster(cfg.gt_path);
        if (gt.height != pre.height || gt.width != pre.width)
            throw std::runtime_error("ground truth size mismatch");
        MetricsReport m = metrics(inf.change, to_binary_mask(gt));
        write_metrics(out + "metrics.txt", m, inf.threshold);
        result.report = m;
    }
    return result;
}

}  // namespace oaip
