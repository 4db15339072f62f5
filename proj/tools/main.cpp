// simfuse command-line tool: simulate / featurize / train / distance /
// predict / evaluate / reproduce. Exit codes: 0 ok, 2 bad input, 3
// numerical degeneracy.

#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "simfuse/pipeline.hpp"

namespace {

using simfuse::RunConfig;

struct CommonFlags {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration file");
    }
    void attach_override(CLI::App* cmd, const std::string& flag,
                         const std::string& key, const std::string& help) {
        cmd->add_option_function<std::string>(
            flag,
            [this, key](const std::string& v) { overrides.emplace_back(key, v); },
            help);
    }

    RunConfig load() const {
        std::map<std::string, std::string> kv;
        std::string snapshot;
        if (!config_path.empty()) {
            snapshot = simfuse::read_text_file(config_path);
            kv = simfuse::parse_config_text(snapshot);
        } else {
            snapshot = "task = bt\n";
            kv["task"] = "bt";
        }
        if (!overrides.empty()) {
            std::string extra = "\n# command-line overrides\n";
            for (const auto& [k, v] : overrides) {
                kv[k] = v;
                extra += k + " = " + v + "\n";
            }
            snapshot += extra;
        }
        return RunConfig::from_map(kv, snapshot);
    }
};

void print_summary(const simfuse::EvalReport& report) {
    std::printf("%-12s %-12s %s\n", "method", "mean_error", "sd");
    for (std::size_t j = 0; j < report.methods.size(); ++j) {
        double mean = 0.0;
        for (std::size_t z = 0; z < report.errors.rows; ++z)
            mean += report.errors.at(z, j);
        mean /= static_cast<double>(report.errors.rows);
        double var = 0.0;
        for (std::size_t z = 0; z < report.errors.rows; ++z) {
            const double d = report.errors.at(z, j) - mean;
            var += d * d;
        }
        const double sd = report.errors.rows > 1
                              ? std::sqrt(var / static_cast<double>(
                                                    report.errors.rows - 1))
                              : 0.0;
        std::printf("%-12s %-12.4f %.4f\n", report.methods[j].c_str(), mean, sd);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"simfuse: weighted fusion of per-image forests for voxel "
                 "classification across scanners"};
    app.require_subcommand(1);

    // simulate
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic multi-study dataset");
    CommonFlags sim_flags;
    std::string sim_out;
    sim_flags.attach(simulate);
    sim_flags.attach_override(simulate, "--seed", "seed", "master seed");
    sim_flags.attach_override(simulate, "--threads", "threads", "worker threads");
    simulate->add_option("--out", sim_out, "output dataset directory")->required();

    // featurize
    auto* featurize = app.add_subcommand("featurize", "extract per-image voxel feature bags");
    CommonFlags feat_flags;
    std::string feat_dataset, feat_out;
    feat_flags.attach(featurize);
    feat_flags.attach_override(featurize, "--threads", "threads", "worker threads");
    featurize->add_option("--dataset", feat_dataset, "dataset directory")->required();
    featurize->add_option("--out", feat_out, "output bag directory")->required();

    // train
    auto* train = app.add_subcommand("train", "train one forest per bag (skips existing models)");
    CommonFlags train_flags;
    std::string train_bags, train_out;
    train_flags.attach(train);
    train_flags.attach_override(train, "--seed", "seed", "master seed");
    train_flags.attach_override(train, "--threads", "threads", "worker threads");
    train_flags.attach_override(train, "--trees", "trees", "trees per forest");
    train->add_option("--bags", train_bags, "bag directory")->required();
    train->add_option("--out", train_out, "model output directory")->required();

    // distance
    auto* distance = app.add_subcommand("distance", "compute a source-to-target distance matrix");
    CommonFlags dist_flags;
    std::string dist_bags, dist_models, dist_targets, dist_out;
    std::string dist_measure = "bag", dist_direction = "t2s";
    dist_flags.attach(distance);
    dist_flags.attach_override(distance, "--seed", "seed", "master seed");
    dist_flags.attach_override(distance, "--threads", "threads", "worker threads");
    distance->add_option("--bags", dist_bags, "source bag directory")->required();
    distance->add_option("--models", dist_models, "model directory (sup/clu)");
    distance->add_option("--targets", dist_targets, "target bag directory")->required();
    distance->add_option("--measure", dist_measure, "sup|clu|div|bag");
    distance->add_option("--direction", dist_direction, "t2s|s2t|avg");
    distance->add_option("--out", dist_out, "output directory")->required();

    // predict
    auto* predict = app.add_subcommand("predict", "fuse the per-image forests over a target bag");
    CommonFlags pred_flags;
    std::string pred_bags, pred_models, pred_target, pred_out, pred_weights;
    std::string pred_measure = "bag", pred_direction = "t2s";
    bool pred_use_distances = false;
    long pred_informed_k = -1;
    pred_flags.attach(predict);
    pred_flags.attach_override(predict, "--seed", "seed", "master seed");
    pred_flags.attach_override(predict, "--threads", "threads", "worker threads");
    pred_flags.attach_override(predict, "--p", "p", "weighting exponent");
    predict->add_option("--bags", pred_bags, "source bag directory")->required();
    predict->add_option("--models", pred_models, "model directory")->required();
    predict->add_option("--target", pred_target, "target bag CSV")->required();
    predict->add_option("--weights", pred_weights, "precomputed weights CSV");
    predict->add_flag("--use-distances", pred_use_distances,
                      "derive weights from --measure/--direction distances");
    predict->add_option("--measure", pred_measure, "sup|clu|div|bag");
    predict->add_option("--direction", pred_direction, "t2s|s2t|avg");
    predict->add_option("--informed-k", pred_informed_k,
                        "expected positive count for the informed threshold");
    predict->add_option("--out", pred_out, "output predictions CSV")->required();

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "score a predictions CSV against a labeled bag");
    CommonFlags eval_flags;
    std::string eval_pred, eval_truth, eval_out;
    eval_flags.attach(evaluate);
    evaluate->add_option("--predictions", eval_pred, "predictions CSV")->required();
    evaluate->add_option("--truth", eval_truth, "labeled truth bag CSV")->required();
    evaluate->add_option("--out", eval_out, "report directory")->required();

    // reproduce
    auto* reproduce = app.add_subcommand("reproduce", "full pipeline: simulate through report");
    CommonFlags rep_flags;
    std::string rep_out;
    rep_flags.attach(reproduce);
    rep_flags.attach_override(reproduce, "--seed", "seed", "master seed");
    rep_flags.attach_override(reproduce, "--threads", "threads", "worker threads");
    rep_flags.attach_override(reproduce, "--trees", "trees", "trees per forest");
    rep_flags.attach_override(reproduce, "--p", "p", "weighting exponent");
    reproduce->add_option("--out", rep_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (simulate->parsed()) {
            simfuse::cmd_simulate(sim_flags.load(), sim_out);
        } else if (featurize->parsed()) {
            simfuse::cmd_featurize(feat_dataset, feat_flags.load(), feat_out);
        } else if (train->parsed()) {
            simfuse::cmd_train(train_bags, train_flags.load(), train_out);
        } else if (distance->parsed()) {
            simfuse::cmd_distance(dist_bags, dist_models, dist_targets,
                                  dist_flags.load(),
                                  simfuse::measure_from_string(dist_measure),
                                  simfuse::direction_from_string(dist_direction),
                                  dist_out);
        } else if (predict->parsed()) {
            simfuse::PredictOptions opts;
            opts.weights_csv = pred_weights;
            opts.use_distances = pred_use_distances;
            opts.measure = simfuse::measure_from_string(pred_measure);
            opts.direction = simfuse::direction_from_string(pred_direction);
            opts.informed_k = pred_informed_k;
            simfuse::cmd_predict(pred_bags, pred_models, pred_target,
                                 pred_flags.load(), opts, pred_out);
        } else if (evaluate->parsed()) {
            const RunConfig cfg = eval_flags.load();
            const double err = simfuse::cmd_evaluate(eval_pred, eval_truth,
                                                     cfg.class_names(), eval_out);
            std::printf("error_rate %.6f\n", err);
        } else if (reproduce->parsed()) {
            const simfuse::EvalReport report =
                simfuse::cmd_reproduce(rep_flags.load(), rep_out);
            print_summary(report);
        }
    } catch (const simfuse::DegenerateError& e) {
        std::fprintf(stderr, "degenerate: %s\n", e.what());
        return 3;
    } catch (const simfuse::InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
