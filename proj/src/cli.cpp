#include "gwcosal/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gwcosal/gradcheck.hpp"
#include "gwcosal/grouping.hpp"
#include "gwcosal/image_io.hpp"
#include "gwcosal/manifest.hpp"
#include "gwcosal/metrics.hpp"
#include "gwcosal/net.hpp"
#include "gwcosal/rng.hpp"
#include "gwcosal/runconfig.hpp"
#include "gwcosal/trainer.hpp"
#include "gwcosal/weights_io.hpp"

namespace gwcosal::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr long kDescriptorThumbSize = 64;

struct GroupArgs {
    std::string mode;
    std::string images_dir;
    std::string manifest_file;
    int k = 5;
    std::uint64_t seed = 0;
    std::string out;
};

struct TrainArgs {
    std::string config;
    std::string groups;
    std::string images_dir;
    std::string masks_dir;
    std::string out;
    std::string log;
    long max_iters = -1; // -1: use config value
};

struct InferArgs {
    std::string weights;
    std::string out_dir;
    std::vector<std::string> images;
    std::vector<double> mean;
    std::string mode = "group";
};

struct EvalArgs {
    std::string pred_dir;
    std::string gt_dir;
    std::string out;
    std::string pr_csv;
};

struct GradcheckArgs {
    int seeds = 5;
    double eps = 1e-5;
};

std::vector<grouping::ImageDescriptor> corpus_descriptors(const DatasetManifest& manifest) {
    std::vector<grouping::ImageDescriptor> descriptors(manifest.entries.size());
    parallel_for(manifest.entries.size(), [&](std::size_t i) {
        const Tensor<float> raw = load_image_raw01(manifest.entries[i].image_path);
        const Tensor<float> thumb =
            bilinear_resize(raw, kDescriptorThumbSize, kDescriptorThumbSize);
        descriptors[i] = grouping::compute_descriptor(thumb);
    });
    return descriptors;
}

int cmd_group(const GroupArgs& args) {
    if (args.mode != "train" && args.mode != "eval") {
        std::cerr << "group: --mode must be train or eval\n";
        return 2;
    }
    DatasetManifest manifest = args.manifest_file.empty()
                                   ? DatasetManifest::from_directory(args.images_dir)
                                   : DatasetManifest::from_file(args.manifest_file);
    if (manifest.entries.size() < static_cast<std::size_t>(args.k)) {
        std::cerr << "group: corpus has " << manifest.entries.size() << " images, need at least "
                  << args.k << "\n";
        return 2;
    }

    std::vector<grouping::GroupSpec> groups;
    if (args.mode == "train") {
        const std::vector<grouping::ImageDescriptor> descriptors = corpus_descriptors(manifest);
        groups = grouping::build_training_groups(descriptors, manifest.ids(), args.k);
    } else {
        std::vector<std::vector<std::string>> declared = manifest.groups;
        if (declared.empty()) declared.push_back(manifest.ids());
        for (std::size_t g = 0; g < declared.size(); ++g) {
            std::vector<grouping::GroupSpec> sampled =
                grouping::sample_eval_groups(declared[g], args.k, args.seed + g);
            groups.insert(groups.end(), sampled.begin(), sampled.end());
        }
    }
    write_text_file(args.out, grouping::groups_to_json(args.k, groups));
    std::cout << "wrote " << groups.size() << " groups to " << args.out << "\n";
    return 0;
}

train::Sample<float> load_sample(const DatasetManifest& manifest,
                                 const grouping::GroupSpec& spec, const RunConfig& cfg) {
    train::Sample<float> sample;
    for (const std::string& id : spec.members) {
        const ManifestEntry& entry = manifest.by_id(id);
        if (entry.mask_path.empty()) {
            throw ConfigError("training group references id \"" + id + "\" with no mask");
        }
        sample.images.push_back(
            load_image_resized(entry.image_path, cfg.net.input_h, cfg.net.input_w, cfg.mean));
        sample.gt.push_back(load_mask_resized(entry.mask_path, cfg.net.input_h, cfg.net.input_w));
    }
    return sample;
}

int cmd_train(const TrainArgs& args) {
    RunConfig cfg = RunConfig::from_file(args.config);
    if (!args.images_dir.empty()) cfg.images_dir = args.images_dir;
    if (!args.masks_dir.empty()) cfg.masks_dir = args.masks_dir;
    if (!args.groups.empty()) cfg.groups_file = args.groups;
    if (!args.out.empty()) cfg.out_file = args.out;
    if (!args.log.empty()) cfg.log_file = args.log;
    if (args.max_iters >= 0) cfg.train.max_iters = args.max_iters;
    if (cfg.images_dir.empty() || cfg.masks_dir.empty() || cfg.groups_file.empty() ||
        cfg.out_file.empty()) {
        std::cerr << "train: images, masks, groups, and out paths are required (flags or "
                     "config paths section)\n";
        return 2;
    }

    const DatasetManifest manifest =
        DatasetManifest::from_directory(cfg.images_dir, cfg.masks_dir);
    const auto [k, specs] = grouping::groups_from_json(read_text_file(cfg.groups_file));
    if (k != cfg.net.k) {
        throw ConfigError("groups file k=" + std::to_string(k) + " does not match config k=" +
                          std::to_string(cfg.net.k));
    }
    std::vector<train::Sample<float>> samples;
    samples.reserve(specs.size());
    for (const grouping::GroupSpec& spec : specs) {
        samples.push_back(load_sample(manifest, spec, cfg));
    }

    net::ParamStore<float> params = net::init_params<float>(cfg.net, cfg.train.seed);

    std::ofstream log_file;
    std::ostream* log = &std::cout;
    if (!cfg.log_file.empty()) {
        log_file.open(cfg.log_file, std::ios::binary);
        if (!log_file) throw IoError("cannot write log file: " + cfg.log_file);
        log = &log_file;
    }
    const train::SnapshotFn<float> snapshot =
        [&cfg](long iter, const net::ParamStore<float>& p) {
            save_weights(p, cfg.net, cfg.out_file + ".iter" + std::to_string(iter));
        };

    if (!samples.empty() && cfg.train.max_iters > 0) {
        train::fit(samples, params, cfg.net, cfg.train, log, snapshot);
    }
    save_weights(params, cfg.net, cfg.out_file);
    std::cout << "wrote weights to " << cfg.out_file << "\n";
    return 0;
}

int cmd_infer(const InferArgs& args) {
    auto [params, cfg] = load_weights(args.weights);
    if (args.images.size() != static_cast<std::size_t>(cfg.k)) {
        std::cerr << "infer: weights expect exactly " << cfg.k << " images, got "
                  << args.images.size() << "\n";
        return 2;
    }
    std::array<float, 3> mean = kDefaultChannelMean;
    if (!args.mean.empty()) {
        if (args.mean.size() != 3) {
            std::cerr << "infer: --mean needs exactly 3 values\n";
            return 2;
        }
        for (std::size_t i = 0; i < 3; ++i) mean[i] = static_cast<float>(args.mean[i]);
    }
    const net::GroupMode mode = args.mode == "single" ? net::GroupMode::single_ablation
                                                      : net::GroupMode::group;

    std::vector<std::string> stems;
    for (const std::string& path : args.images) {
        const std::string stem = fs::path(path).stem().string();
        if (std::find(stems.begin(), stems.end(), stem) != stems.end()) {
            std::cerr << "infer: duplicate output name \"" << stem << "\"\n";
            return 2;
        }
        stems.push_back(stem);
    }

    std::vector<Tensor<float>> images;
    for (const std::string& path : args.images) {
        images.push_back(load_image_resized(path, cfg.input_h, cfg.input_w, mean));
    }
    const net::GroupActivations<float> acts = net::forward_group(images, params, cfg, mode);

    fs::create_directories(args.out_dir);
    for (std::size_t i = 0; i < acts.r.size(); ++i) {
        const std::string out = (fs::path(args.out_dir) / (stems[i] + ".png")).string();
        save_saliency_png(out, acts.r[i]);
        std::cout << out << "\n";
    }
    return 0;
}

std::map<std::string, std::string> dir_stems(const std::string& dir) {
    if (!fs::is_directory(dir)) throw ConfigError("directory does not exist: " + dir);
    std::map<std::string, std::string> out;
    for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext != ".png" && ext != ".jpg" && ext != ".jpeg") continue;
        out[e.path().stem().string()] = e.path().string();
    }
    return out;
}

int cmd_eval(const EvalArgs& args) {
    const std::map<std::string, std::string> preds = dir_stems(args.pred_dir);
    const std::map<std::string, std::string> gts = dir_stems(args.gt_dir);
    if (preds.empty()) {
        std::cerr << "eval: no predictions found in " << args.pred_dir << "\n";
        return 2;
    }
    std::vector<std::string> missing;
    for (const auto& [id, path] : preds) {
        if (gts.count(id) == 0) missing.push_back(id);
    }
    if (!missing.empty()) {
        std::cerr << "eval: no ground truth for prediction ids:";
        for (const std::string& id : missing) std::cerr << " " << id;
        std::cerr << "\n";
        return 2;
    }

    std::vector<metrics::EvalPair> pairs;
    for (const auto& [id, path] : preds) {
        const ImageU8 sal = decode_gray8(path);
        const ImageU8 gt = decode_gray8(gts.at(id));
        if (sal.h != gt.h || sal.w != gt.w) {
            std::cerr << "eval: size mismatch for id \"" << id << "\": prediction " << sal.w
                      << "x" << sal.h << ", ground truth " << gt.w << "x" << gt.h << "\n";
            return 2;
        }
        metrics::EvalPair pair;
        pair.id = id;
        pair.h = sal.h;
        pair.w = sal.w;
        pair.sal.resize(sal.pixels.size());
        pair.gt.resize(gt.pixels.size());
        for (std::size_t i = 0; i < sal.pixels.size(); ++i) {
            pair.sal[i] = static_cast<double>(sal.pixels[i]) / 255.0;
        }
        for (std::size_t i = 0; i < gt.pixels.size(); ++i) {
            pair.gt[i] = gt.pixels[i] >= 128 ? 1 : 0;
        }
        pairs.push_back(std::move(pair));
    }

    const metrics::MetricsReport report = metrics::evaluate(pairs);

    nlohmann::json j;
    j["mF"] = report.mf;
    j["MAE"] = report.mae;
    j["AUC"] = report.auc;
    j["AP"] = report.ap;
    j["num_images"] = pairs.size();
    j["excluded_no_positive"] = report.excluded_no_positive;
    j["excluded_no_negative"] = report.excluded_no_negative;
    nlohmann::json per_image = nlohmann::json::array();
    for (const metrics::PerImageMetrics& pm : report.per_image) {
        nlohmann::json jp;
        jp["id"] = pm.id;
        jp["MAE"] = pm.mae;
        if (std::isfinite(pm.f_adaptive)) jp["F"] = pm.f_adaptive;
        if (std::isfinite(pm.auc)) jp["AUC"] = pm.auc;
        if (std::isfinite(pm.ap)) jp["AP"] = pm.ap;
        per_image.push_back(std::move(jp));
    }
    j["per_image"] = std::move(per_image);
    nlohmann::json curve = nlohmann::json::array();
    for (const metrics::PrPoint& pt : report.curve.points) {
        curve.push_back({pt.threshold, pt.precision, pt.recall});
    }
    j["pr_curve"] = std::move(curve);
    write_text_file(args.out, j.dump(2) + "\n");

    if (!args.pr_csv.empty()) {
        std::ostringstream os;
        os << "threshold,precision,recall\n";
        os << std::setprecision(17);
        for (const metrics::PrPoint& pt : report.curve.points) {
            os << pt.threshold << "," << pt.precision << "," << pt.recall << "\n";
        }
        write_text_file(args.pr_csv, os.str());
    }
    std::cout << "mF " << report.mf << " MAE " << report.mae << " AUC " << report.auc << " AP "
              << report.ap << "\n";
    return 0;
}

// --- gradcheck subcommand -------------------------------------------------

TensorD random_tensor(Rng& rng, Shape4 shape, double scale = 1.0) {
    TensorD t(shape);
    for (double& v : t.data) v = rng.normal() * scale;
    return t;
}

double check_conv2d(std::uint64_t seed, double eps) {
    Rng rng(seed);
    ConvParams<double> p;
    p.weights = random_tensor(rng, Shape4{3, 2, 3, 3}, 0.5);
    p.bias = {rng.normal(), rng.normal(), rng.normal()};
    p.stride = 1;
    p.pad = 1;
    const TensorD x = random_tensor(rng, Shape4{2, 2, 6, 7});
    auto [y, ctx] = conv2d(x, p);
    const TensorD probe = random_tensor(rng, y.shape);
    const ConvGrads<double> g = conv2d_grad(ctx, probe);

    double worst = grad_check([&](const TensorD& xx) { return conv2d(xx, p).first; }, x,
                              g.input, probe, eps);
    worst = std::max(worst, grad_check(
                                [&](const TensorD& ww) {
                                    ConvParams<double> pp = p;
                                    pp.weights = ww;
                                    return conv2d(x, pp).first;
                                },
                                p.weights, g.weights, probe, eps));
    TensorD bias_t(Shape4{3, 1, 1, 1});
    bias_t.data = p.bias;
    TensorD bias_g(Shape4{3, 1, 1, 1});
    bias_g.data = g.bias;
    worst = std::max(worst, grad_check(
                                [&](const TensorD& bb) {
                                    ConvParams<double> pp = p;
                                    pp.bias = bb.data;
                                    return conv2d(x, pp).first;
                                },
                                bias_t, bias_g, probe, eps));
    return worst;
}

double check_deconv2d(std::uint64_t seed, double eps) {
    Rng rng(seed);
    ConvParams<double> p;
    p.weights = random_tensor(rng, Shape4{2, 3, 4, 4}, 0.5);
    p.bias = {rng.normal(), rng.normal(), rng.normal()};
    p.stride = 2;
    p.pad = 1;
    const TensorD x = random_tensor(rng, Shape4{1, 2, 5, 6});
    auto [y, ctx] = deconv2d(x, p);
    const TensorD probe = random_tensor(rng, y.shape);
    const ConvGrads<double> g = deconv2d_grad(ctx, probe);

    double worst = grad_check([&](const TensorD& xx) { return deconv2d(xx, p).first; }, x,
                              g.input, probe, eps);
    worst = std::max(worst, grad_check(
                                [&](const TensorD& ww) {
                                    ConvParams<double> pp = p;
                                    pp.weights = ww;
                                    return deconv2d(x, pp).first;
                                },
                                p.weights, g.weights, probe, eps));
    return worst;
}

double check_relu(std::uint64_t seed, double eps) {
    Rng rng(seed);
    TensorD x = random_tensor(rng, Shape4{2, 3, 4, 5});
    for (double& v : x.data) {
        if (std::abs(v) < 0.05) v = v < 0 ? v - 0.1 : v + 0.1; // keep away from the kink
    }
    auto [y, ctx] = relu(x);
    const TensorD probe = random_tensor(rng, y.shape);
    const TensorD dx = relu_grad(ctx, probe);
    return grad_check([](const TensorD& xx) { return relu(xx).first; }, x, dx, probe, eps);
}

double check_maxpool2(std::uint64_t seed, double eps) {
    Rng rng(seed);
    TensorD x(Shape4{1, 2, 6, 6});
    // Distinct, well-separated values so eps never flips an argmax.
    std::vector<double> values(x.numel());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>(i) * 0.01;
    rng.shuffle(values);
    x.data = values;
    auto [y, ctx] = maxpool2(x);
    const TensorD probe = random_tensor(rng, y.shape);
    const TensorD dx = maxpool2_grad(ctx, probe);
    return grad_check([](const TensorD& xx) { return maxpool2(xx).first; }, x, dx, probe, eps);
}

double check_end_to_end(std::uint64_t seed, double eps) {
    const net::NetConfig cfg = net::NetConfig::micro();
    net::ParamStore<double> params = net::init_params<double>(cfg, seed);
    // Shift biases positive: fewer ReLU kinks inside the probe window.
    for (auto& [name, entry] : params.entries) {
        if (name.ends_with(".b")) {
            for (double& v : entry.value.data) v += 0.25;
        }
    }
    Rng rng(seed + 1);
    std::vector<TensorD> images;
    for (int i = 0; i < cfg.k; ++i) {
        images.push_back(random_tensor(rng, Shape4{1, 3, cfg.input_h, cfg.input_w}, 0.5));
    }
    // Ground truth close to the initial prediction keeps the loss magnitude
    // small, so fp cancellation cannot swamp tiny-gradient coordinates.
    const net::GroupActivations<double> acts0 = net::forward_group(images, params, cfg);
    std::vector<TensorD> gt;
    for (int i = 0; i < cfg.k; ++i) {
        TensorD g = acts0.r[static_cast<std::size_t>(i)];
        for (double& v : g.data) {
            v = std::clamp(v + 0.02 * (2.0 * rng.uniform() - 1.0), 0.0, 1.0);
        }
        gt.push_back(std::move(g));
    }

    auto [loss, d_r] = train::group_loss(acts0.r, gt, train::Reduction::mean);
    const net::GradStore<double> grads = net::backward_group(acts0, d_r, params, cfg);

    double worst = 0.0;
    for (auto& [name, entry] : params.entries) {
        const std::string& pname = name;
        const auto loss_at = [&](const TensorD& value) {
            net::ParamStore<double> ps = params;
            ps.value(pname) = value;
            const net::GroupActivations<double> acts = net::forward_group(images, ps, cfg);
            return train::group_loss(acts.r, gt, train::Reduction::mean).first;
        };
        const FdReport report = fd_check_scalar(loss_at, entry.value, grads.at(name), eps);
        if (report.envelope_fail > 0) return 1.0; // flagged as a hard failure
        worst = std::max(worst, report.max_rel);
    }
    (void)loss;
    return worst;
}

int cmd_gradcheck(const GradcheckArgs& args) {
    constexpr double kThreshold = 1e-4;
    struct Row {
        const char* name;
        double (*fn)(std::uint64_t, double);
    };
    const Row rows[] = {
        {"conv2d", check_conv2d},       {"deconv2d", check_deconv2d},
        {"relu", check_relu},           {"maxpool2", check_maxpool2},
        {"end-to-end loss", check_end_to_end},
    };
    bool ok = true;
    for (const Row& row : rows) {
        double worst = 0.0;
        for (int s = 0; s < args.seeds; ++s) {
            worst = std::max(worst, row.fn(static_cast<std::uint64_t>(s), args.eps));
        }
        const bool pass = worst <= kThreshold;
        ok = ok && pass;
        std::cout << (pass ? "PASS" : "FAIL") << "  " << std::left << std::setw(16) << row.name
                  << " max rel err " << std::scientific << std::setprecision(3) << worst
                  << std::defaultfloat << "  (" << args.seeds << " seeds)\n";
    }
    std::cout << (ok ? "all gradient checks passed" : "gradient checks FAILED") << "\n";
    return ok ? 0 : 1;
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"group-wise co-saliency detection"};
    app.require_subcommand(1);

    GroupArgs group_args;
    CLI::App* group = app.add_subcommand("group", "build training or evaluation groups");
    group->add_option("--mode", group_args.mode, "train (nearest neighbours) or eval (sampled)")
        ->required();
    group->add_option("--images", group_args.images_dir, "flat corpus directory");
    group->add_option("--manifest", group_args.manifest_file, "manifest JSON file");
    group->add_option("--k", group_args.k, "group size")->default_val(5);
    group->add_option("--seed", group_args.seed, "sampling seed (eval mode)")->default_val(0);
    group->add_option("--out", group_args.out, "output groups JSON")->required();

    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "train on grouped samples");
    train_cmd->add_option("--config", train_args.config, "run config JSON")->required();
    train_cmd->add_option("--groups", train_args.groups, "groups JSON");
    train_cmd->add_option("--images", train_args.images_dir, "image directory");
    train_cmd->add_option("--masks", train_args.masks_dir, "mask directory");
    train_cmd->add_option("--out", train_args.out, "output weights file");
    train_cmd->add_option("--log", train_args.log, "loss log file (default stdout)");
    train_cmd->add_option("--max-iters", train_args.max_iters, "override config max_iters");

    InferArgs infer_args;
    CLI::App* infer = app.add_subcommand("infer", "run a group through the network");
    infer->add_option("--weights", infer_args.weights, "weights file")->required();
    infer->add_option("--out", infer_args.out_dir, "output directory")->required();
    infer->add_option("--mean", infer_args.mean, "per-channel input mean (3 values)");
    infer->add_option("--mode", infer_args.mode, "group (default) or single (ablation)");
    infer->add_option("images", infer_args.images, "exactly K image files")->required();

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
    eval_cmd->add_option("--pred", eval_args.pred_dir, "prediction directory")->required();
    eval_cmd->add_option("--gt", eval_args.gt_dir, "ground-truth directory")->required();
    eval_cmd->add_option("--out", eval_args.out, "report JSON path")->required();
    eval_cmd->add_option("--pr-csv", eval_args.pr_csv, "optional PR curve CSV path");

    GradcheckArgs gradcheck_args;
    CLI::App* gradcheck_cmd =
        app.add_subcommand("gradcheck", "finite-difference checks of every layer gradient");
    gradcheck_cmd->add_option("--seeds", gradcheck_args.seeds, "seeds per op")->default_val(5);
    gradcheck_cmd->add_option("--eps", gradcheck_args.eps, "finite-difference step")
        ->default_val(1e-5);

    std::vector<const char*> argv;
    argv.push_back("gwcosal");
    for (const std::string& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (group->parsed()) {
            if (group_args.images_dir.empty() == group_args.manifest_file.empty()) {
                std::cerr << "group: give exactly one of --images or --manifest\n";
                return 2;
            }
            return cmd_group(group_args);
        }
        if (train_cmd->parsed()) return cmd_train(train_args);
        if (infer->parsed()) return cmd_infer(infer_args);
        if (eval_cmd->parsed()) return cmd_eval(eval_args);
        if (gradcheck_cmd->parsed()) return cmd_gradcheck(gradcheck_args);
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}

} // namespace gwcosal::pipeline
