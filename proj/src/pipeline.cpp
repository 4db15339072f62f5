#include "simfuse/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <utility>

#include "simfuse/ensemble.hpp"
#include "simfuse/rng.hpp"

namespace fs = std::filesystem;

namespace simfuse {

namespace {

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw InputError("cannot create directory '" + dir + "': " + ec.message());
}

void snapshot_config(const RunConfig& cfg, const std::string& dir) {
    if (cfg.snapshot.empty()) return;
    write_text_file((fs::path(dir) / "config.txt").string(), cfg.snapshot);
}

std::string manifest_path(const std::string& bags_dir) {
    return (fs::path(bags_dir) / "bags.manifest").string();
}

SampleBag load_bag(const std::string& bags_dir, const BagManifestEntry& e) {
    return read_bag_csv((fs::path(bags_dir) / e.bag_path).string(), e.class_names,
                        e.tag);
}

/// The task region of one bag: the gate applied when active.
SampleBag load_region(const std::string& bags_dir, const BagManifestEntry& e,
                      const RunConfig& cfg) {
    SampleBag bag = load_bag(bags_dir, e);
    if (cfg.is_wml() && cfg.gate_threshold >= 0.0)
        return gate_rows(bag, cfg.recipe.designated_feature_index(),
                         cfg.gate_threshold);
    return bag;
}

std::vector<std::string> recipe_feature_names(const FeatureRecipe& recipe) {
    std::vector<std::string> names;
    for (const std::string& ch : recipe.channels) {
        names.push_back(ch + "_raw");
        for (double s : recipe.scales_mm) {
            const std::string sfx = "_" + format_double(s);
            names.push_back(ch + "_smooth" + sfx);
            names.push_back(ch + "_grad" + sfx);
            names.push_back(ch + "_absl" + sfx);
        }
    }
    if (recipe.include_position) {
        names.push_back("pos_x");
        names.push_back("pos_y");
        names.push_back("pos_z");
    }
    return names;
}

} // namespace

void cmd_simulate(const RunConfig& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    std::vector<DatasetImageEntry> entries;
    for (int k = 0; k < cfg.studies; ++k) {
        const ScannerProfile base_profile = cfg.study_profile(k);
        const PhantomSpec spec = cfg.phantom_spec(k);
        for (int j = 0; j < cfg.images_per_study; ++j) {
            const std::string tag = cfg.study_name(k) + "_img" + std::to_string(j);
            const fs::path dir = fs::path(out_dir) / tag;
            ensure_dir(dir.string());

            const Phantom ph =
                simulate_phantom(cfg.dims, cfg.spacing, spec,
                                 image_seed(cfg.seed, streams::phantom, tag));

            DatasetImageEntry e;
            e.tag = tag;
            e.study = cfg.study_name(k);
            e.subdir = tag;
            for (std::size_t c = 0; c < ph.channels.size(); ++c) {
                const std::string& ch = spec.channel_names[c];
                ScannerProfile profile = base_profile;
                profile.seed =
                    image_seed(cfg.seed, streams::scanner, tag + "/" + ch);
                write_volume((dir / ch).string(),
                             apply_scanner(ph.channels[c], profile), ch);
                e.channels.push_back(ch);
            }
            write_mask((dir / "mask").string(), ph.mask);
            write_volume((dir / "labels").string(), ph.labels, "labels");
            entries.push_back(std::move(e));
        }
    }
    write_dataset_manifest((fs::path(out_dir) / "dataset.manifest").string(),
                           entries);
    snapshot_config(cfg, out_dir);
}

void cmd_featurize(const std::string& dataset_dir, const RunConfig& cfg,
                   const std::string& out_dir) {
    const auto entries = read_dataset_manifest(
        (fs::path(dataset_dir) / "dataset.manifest").string());
    ensure_dir(out_dir);

    const std::vector<std::string> class_names = cfg.class_names();
    // labels >= this collapse to the positive class on the lesion task
    const auto lesion_label =
        static_cast<double>(cfg.phantom_spec(0).tissue_classes());

    std::vector<BagManifestEntry> bags;
    for (const auto& e : entries) {
        const fs::path dir = fs::path(dataset_dir) / e.subdir;
        const Mask mask = read_mask((dir / "mask").string());

        std::vector<Volume> channels;
        for (const std::string& ch : cfg.recipe.channels) {
            if (std::find(e.channels.begin(), e.channels.end(), ch) ==
                e.channels.end())
                throw InputError("image '" + e.tag + "' has no channel '" + ch +
                                 "'");
            channels.push_back(percentile_normalize(
                read_volume((dir / ch).string()), mask, 4.0, 96.0));
        }

        const FeatureExtraction ext = extract_features(channels, mask, cfg.recipe);
        Volume labels = read_volume((dir / "labels").string());
        if (cfg.is_wml())
            for (double& v : labels.data)
                if (v >= 0.0) v = v >= lesion_label ? 1.0 : 0.0;
        SampleBag bag = attach_labels(ext, labels, class_names);
        bag.source_tag = e.tag;

        const std::string bag_name = e.tag + ".csv";
        write_bag_csv((fs::path(out_dir) / bag_name).string(), bag);

        BagManifestEntry be;
        be.tag = e.tag;
        be.study = e.study;
        be.bag_path = bag_name;
        be.n_features = bag.n;
        be.designated_channel = cfg.recipe.designated_channel;
        be.designated_feature = cfg.recipe.designated_feature_index();
        be.class_names = class_names;
        bags.push_back(std::move(be));
    }
    write_bag_manifest(manifest_path(out_dir), bags);
    snapshot_config(cfg, out_dir);
}

void cmd_train(const std::string& bags_dir, const RunConfig& cfg,
               const std::string& out_dir) {
    const auto entries = read_bag_manifest(manifest_path(bags_dir));
    ensure_dir(out_dir);
    const SampleMode mode = cfg.train_sample_mode();
    for (const auto& e : entries) {
        const fs::path model = fs::path(out_dir) / (e.tag + ".forest");
        if (fs::exists(model)) continue; // incremental: never retrain
        const SampleBag bag = load_bag(bags_dir, e);
        if (!bag.labeled())
            throw InputError("bag '" + e.tag + "' is unlabeled");
        const SampleBag train =
            sample_bag(bag, cfg.train_count, mode,
                       image_seed(cfg.seed, streams::train_sample, e.tag));
        save_forest(train_forest(train, cfg.tree_count, cfg.mtry,
                                 image_seed(cfg.seed, streams::forest, e.tag),
                                 cfg.threads),
                    model.string());
    }
    snapshot_config(cfg, out_dir);
}

void cmd_distance(const std::string& bags_dir, const std::string& models_dir,
                  const std::string& target_bags_dir, const RunConfig& cfg,
                  Measure measure, Direction direction,
                  const std::string& out_dir) {
    const auto src_entries = read_bag_manifest(manifest_path(bags_dir));
    const auto tgt_entries = read_bag_manifest(manifest_path(target_bags_dir));
    ensure_dir(out_dir);

    const bool needs_forest = measure == Measure::sup || measure == Measure::clu;
    std::vector<SampleBag> src_bags;
    std::vector<TrainedForest> src_forests(src_entries.size());
    std::vector<DistanceSource> sources;
    for (std::size_t i = 0; i < src_entries.size(); ++i) {
        src_bags.push_back(load_region(bags_dir, src_entries[i], cfg));
        if (needs_forest) {
            const fs::path model =
                fs::path(models_dir) / (src_entries[i].tag + ".forest");
            if (!fs::exists(model))
                throw InputError("missing model for source '" +
                                 src_entries[i].tag + "': " + model.string());
            src_forests[i] = load_forest(model.string());
        }
    }
    for (std::size_t i = 0; i < src_entries.size(); ++i) {
        DistanceSource s;
        s.tag = src_entries[i].tag;
        s.bag = &src_bags[i];
        if (needs_forest) s.forest = &src_forests[i];
        sources.push_back(s);
    }

    std::vector<SampleBag> tgt_bags;
    for (const auto& e : tgt_entries) tgt_bags.push_back(load_region(target_bags_dir, e, cfg));
    std::vector<DistanceTarget> targets;
    for (std::size_t z = 0; z < tgt_entries.size(); ++z)
        targets.push_back({tgt_entries[z].tag, &tgt_bags[z]});

    DistanceMatrixOptions opts;
    opts.measure = measure;
    opts.direction = direction;
    opts.subsample = cfg.distance_count;
    opts.seed = derive_seed(cfg.seed, streams::distance);
    opts.threads = cfg.threads;
    opts.designated_feature_index = cfg.recipe.designated_feature_index();

    const auto t0 = std::chrono::steady_clock::now();
    const DistanceMatrix dm = distance_matrix(sources, targets, opts);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();

    const std::string name = to_string(measure) + "_" + to_string(direction);
    write_distance_matrix((fs::path(out_dir) / (name + ".csv")).string(), dm);

    const fs::path timing = fs::path(out_dir) / "timings.csv";
    const bool fresh = !fs::exists(timing);
    std::ofstream tf(timing, std::ios::binary | std::ios::app);
    if (!tf) throw InputError("cannot write " + timing.string());
    if (fresh) tf << "measure,direction,seconds\n";
    tf << to_string(measure) << "," << to_string(direction) << ","
       << format_double(seconds) << "\n";
    snapshot_config(cfg, out_dir);
}

void cmd_predict(const std::string& bags_dir, const std::string& models_dir,
                 const std::string& target_bag_csv, const RunConfig& cfg,
                 const PredictOptions& opts, const std::string& out_csv) {
    const auto entries = read_bag_manifest(manifest_path(bags_dir));
    if (entries.empty()) throw InputError("empty bag manifest");

    std::vector<TrainedForest> forests;
    std::vector<std::string> tags;
    for (const auto& e : entries) {
        const fs::path model = fs::path(models_dir) / (e.tag + ".forest");
        if (!fs::exists(model))
            throw InputError("missing model for '" + e.tag +
                             "': " + model.string());
        forests.push_back(load_forest(model.string()));
        tags.push_back(e.tag);
    }
    const std::vector<std::string>& class_names = forests[0].class_names;
    for (const auto& f : forests)
        if (f.class_names != class_names)
            throw InputError("models disagree on class names");

    const SampleBag target = read_bag_csv(target_bag_csv, class_names, "target");

    std::vector<double> weights;
    if (!opts.weights_csv.empty()) {
        const auto rows = read_weights_csv(opts.weights_csv);
        if (rows.size() != tags.size())
            throw InputError("weight count " + std::to_string(rows.size()) +
                             " does not match model count " +
                             std::to_string(tags.size()));
        weights.resize(tags.size());
        for (std::size_t i = 0; i < tags.size(); ++i) {
            const auto it = std::find_if(rows.begin(), rows.end(),
                                         [&](const auto& r) {
                                             return r.first == tags[i];
                                         });
            if (it == rows.end())
                throw InputError("weights file has no entry for model '" +
                                 tags[i] + "'");
            weights[i] = it->second;
        }
    } else if (opts.use_distances) {
        std::vector<SampleBag> src_bags;
        for (const auto& e : entries) src_bags.push_back(load_region(bags_dir, e, cfg));
        std::vector<DistanceSource> sources;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            DistanceSource s;
            s.tag = tags[i];
            s.bag = &src_bags[i];
            s.forest = &forests[i];
            sources.push_back(s);
        }
        const std::vector<DistanceTarget> targets{
            {target.source_tag, &target}};
        DistanceMatrixOptions dopts;
        dopts.measure = opts.measure;
        dopts.direction = opts.direction;
        dopts.subsample = cfg.distance_count;
        dopts.seed = derive_seed(cfg.seed, streams::distance);
        dopts.threads = cfg.threads;
        dopts.designated_feature_index = cfg.recipe.designated_feature_index();
        const DistanceMatrix dm = distance_matrix(sources, targets, dopts);
        weights = compute_weights(dm.column(0), cfg.p).weights;
    } else {
        weights.assign(tags.size(), 1.0 / static_cast<double>(tags.size()));
    }

    std::vector<const TrainedForest*> members;
    for (const auto& f : forests) members.push_back(&f);
    RowMatrix features(target.size(), static_cast<std::size_t>(target.n));
    features.data = target.features;
    const RowMatrix posteriors = fuse(members, weights, features, cfg.threads);

    std::vector<int> predicted;
    if (opts.informed_k >= 0) {
        if (class_names.size() != 2)
            throw InputError("informed threshold needs a binary task");
        std::vector<double> positive;
        for (std::size_t i = 0; i < posteriors.rows; ++i)
            positive.push_back(posteriors.at(i, 1));
        const double tau =
            informed_threshold(positive, static_cast<std::size_t>(opts.informed_k));
        predicted = classify_threshold(posteriors, 1, tau);
    } else {
        predicted = classify_argmax(posteriors);
    }

    std::vector<std::size_t> voxel_index(posteriors.rows);
    for (std::size_t i = 0; i < voxel_index.size(); ++i) voxel_index[i] = i;
    write_predictions_csv(out_csv, voxel_index, posteriors, predicted, class_names);
}

double cmd_evaluate(const std::string& predictions_csv,
                    const std::string& truth_bag_csv,
                    const std::vector<std::string>& class_names,
                    const std::string& out_dir) {
    const Predictions pred = read_predictions_csv(predictions_csv);
    const SampleBag truth = read_bag_csv(truth_bag_csv, class_names, "truth");
    if (!truth.labeled()) throw InputError("truth bag is unlabeled");
    if (pred.labels.size() != truth.labels.size())
        throw InputError("prediction rows (" + std::to_string(pred.labels.size()) +
                         ") do not match truth rows (" +
                         std::to_string(truth.labels.size()) + ")");

    const double err = error_rate(pred.labels, truth.labels);
    const std::size_t C = class_names.size();
    std::vector<std::size_t> confusion(C * C, 0);
    for (std::size_t i = 0; i < pred.labels.size(); ++i) {
        const int t = truth.labels[i];
        const int p = pred.labels[i];
        if (t < 0 || t >= static_cast<int>(C) || p < 0 || p >= static_cast<int>(C))
            throw InputError("label outside the class range");
        ++confusion[static_cast<std::size_t>(t) * C + p];
    }

    ensure_dir(out_dir);
    {
        std::ofstream out(fs::path(out_dir) / "evaluation.csv", std::ios::binary);
        if (!out) throw InputError("cannot write evaluation.csv");
        out << "metric,value\n";
        out << "error_rate," << format_double(err) << "\n";
        out << "voxels," << pred.labels.size() << "\n";
    }
    {
        std::ofstream out(fs::path(out_dir) / "confusion.csv", std::ios::binary);
        if (!out) throw InputError("cannot write confusion.csv");
        out << "truth";
        for (const auto& c : class_names) out << ",pred_" << c;
        out << "\n";
        for (std::size_t t = 0; t < C; ++t) {
            out << class_names[t];
            for (std::size_t p = 0; p < C; ++p) out << "," << confusion[t * C + p];
            out << "\n";
        }
    }
    return err;
}

std::vector<ExperimentImage> load_experiment_images(const std::string& bags_dir) {
    const auto entries = read_bag_manifest(manifest_path(bags_dir));
    std::vector<ExperimentImage> images;
    for (const auto& e : entries) {
        ExperimentImage img;
        img.tag = e.tag;
        img.study = e.study;
        img.bag = load_bag(bags_dir, e);
        images.push_back(std::move(img));
    }
    return images;
}

ExperimentConfig experiment_config(const RunConfig& cfg) {
    ExperimentConfig ec;
    ec.measures = cfg.measures;
    ec.directions = cfg.directions;
    ec.p = cfg.p;
    ec.tree_count = cfg.tree_count;
    ec.mtry = cfg.mtry;
    ec.seed = cfg.seed;
    ec.threads = cfg.threads;
    ec.train_count = cfg.train_count;
    ec.eval_count = cfg.eval_count;
    ec.distance_count = cfg.distance_count;
    ec.oversample_factor = cfg.is_wml() ? cfg.oversample_factor : 1.0;
    ec.gate_threshold = cfg.is_wml() ? cfg.gate_threshold : -1.0;
    ec.designated_feature_index = cfg.recipe.designated_feature_index();
    ec.target_study = cfg.study_name(cfg.target_study);
    ec.pooled_baseline = cfg.pooled_baseline;
    ec.p_grid = cfg.p_grid;
    ec.feature_names = recipe_feature_names(cfg.recipe);
    return ec;
}

EvalReport cmd_reproduce(const RunConfig& cfg, const std::string& out_dir) {
    const fs::path root(out_dir);
    ensure_dir(out_dir);

    cmd_simulate(cfg, (root / "dataset").string());
    cmd_featurize((root / "dataset").string(), cfg, (root / "bags").string());

    const auto images = load_experiment_images((root / "bags").string());
    ExperimentArtifacts art;
    const EvalReport report =
        transfer_experiment(images, experiment_config(cfg), &art);

    const fs::path models = root / "models";
    ensure_dir(models.string());
    for (std::size_t i = 0; i < art.forests.size(); ++i)
        save_forest(art.forests[i],
                    (models / (art.image_tags[i] + ".forest")).string());
    if (art.has_pooled)
        save_forest(art.pooled, (models / "all.forest").string());

    const fs::path dists = root / "distances";
    ensure_dir(dists.string());
    for (std::size_t k = 0; k < art.matrices.size(); ++k)
        write_distance_matrix(
            (dists / (art.matrix_methods[k] + ".csv")).string(),
            art.matrices[k]);

    const fs::path wdir = root / "weights";
    ensure_dir(wdir.string());
    for (std::size_t z = 0; z < art.weights.size(); ++z)
        for (std::size_t k = 0; k < art.weights[z].size(); ++k)
            write_weights_csv((wdir / (report.target_tags[z] + "_" +
                                       art.matrix_methods[k] + ".csv"))
                                  .string(),
                              art.source_tags, art.weights[z][k]);

    const fs::path pdir = root / "predictions";
    ensure_dir(pdir.string());
    const std::vector<std::string> class_names = cfg.class_names();
    for (std::size_t z = 0; z < art.posteriors.size(); ++z)
        for (std::size_t j = 0; j < art.posteriors[z].size(); ++j) {
            const RowMatrix& post = art.posteriors[z][j];
            std::vector<std::size_t> voxel_index(post.rows);
            for (std::size_t i = 0; i < post.rows; ++i) voxel_index[i] = i;
            write_predictions_csv(
                (pdir / (report.target_tags[z] + "_" + report.methods[j] +
                         ".csv"))
                    .string(),
                voxel_index, post, classify_argmax(post), class_names);
        }

    write_report(report, (root / "report").string(), cfg.snapshot);
    return report;
}

} // namespace simfuse
