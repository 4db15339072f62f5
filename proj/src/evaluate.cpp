#include "simfuse/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "simfuse/rng.hpp"

namespace simfuse {

double error_rate(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size())
        throw InputError("prediction/truth length mismatch");
    if (predicted.empty()) throw InputError("empty prediction vector");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i)
        wrong += predicted[i] != truth[i];
    return static_cast<double>(wrong) / static_cast<double>(predicted.size());
}

std::vector<std::pair<double, double>> weight_concentration(
    const std::vector<double>& distances, const std::vector<double>& p_grid) {
    const std::size_t M = distances.size();
    std::vector<std::pair<double, double>> curve;
    curve.reserve(p_grid.size());
    for (double p : p_grid) {
        std::vector<double> w = compute_weights(distances, p).weights;
        std::sort(w.begin(), w.end(), std::greater<>());
        double cum = 0.0;
        std::size_t needed = M;
        for (std::size_t i = 0; i < M; ++i) {
            cum += w[i];
            // 0.9 is not exactly representable; a strict comparison would
            // demand one classifier too many on exactly-uniform weights
            if (cum >= 0.9 - 1e-12) {
                needed = i + 1;
                break;
            }
        }
        curve.emplace_back(p, static_cast<double>(needed) / static_cast<double>(M));
    }
    return curve;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (v[a] != v[b]) return v[a] < v[b];
        return a < b;
    });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0; // ranks are 1-based
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw InputError("spearman length mismatch");
    if (a.size() < 2) throw InputError("spearman needs >= 2 pairs");
    const std::vector<double> ra = average_ranks(a), rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = ra[i] - ma, db = rb[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        throw DegenerateError("zero rank variance in spearman");
    return sab / std::sqrt(saa * sbb);
}

std::vector<double> aggregate_importance(
    const std::vector<std::vector<double>>& member_importances,
    const std::vector<double>& weights) {
    if (member_importances.empty() ||
        member_importances.size() != weights.size())
        throw InputError("importance/weight count mismatch");
    const std::size_t n = member_importances[0].size();
    std::vector<double> agg(n, 0.0);
    for (std::size_t m = 0; m < member_importances.size(); ++m) {
        if (member_importances[m].size() != n)
            throw InputError("importance length mismatch");
        for (std::size_t f = 0; f < n; ++f)
            agg[f] += weights[m] * member_importances[m][f];
    }
    double total = 0.0;
    for (double v : agg) total += v;
    if (total > 0.0)
        for (double& v : agg) v /= total;
    return agg;
}

double paired_ttest_pvalue(const std::vector<double>& a,
                           const std::vector<double>& b) {
    if (a.size() != b.size()) throw InputError("paired t-test length mismatch");
    const std::size_t n = a.size();
    if (n < 2) throw InputError("paired t-test needs >= 2 pairs");
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = (a[i] - b[i]) - mean;
        ss += e * e;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd == 0.0) return 1.0;
    const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
    boost::math::students_t dist(static_cast<double>(n - 1));
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

// ---- transfer experiment -----------------------------------------------------

namespace {

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double stop() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

std::string method_name(Measure m, Direction d) {
    return to_string(m) + "_" + to_string(d);
}

} // namespace

int EvalReport::method_index(const std::string& name) const {
    for (std::size_t i = 0; i < methods.size(); ++i)
        if (methods[i] == name) return static_cast<int>(i);
    throw InputError("unknown method '" + name + "' in report");
}

double EvalReport::mean_error(const std::string& method) const {
    const int j = method_index(method);
    double acc = 0.0;
    for (std::size_t i = 0; i < errors.rows; ++i) acc += errors.at(i, j);
    return acc / static_cast<double>(errors.rows);
}

std::pair<double, double> EvalReport::study_stats(const std::string& method,
                                                  const std::string& study) const {
    const int j = method_index(method);
    std::vector<double> vals;
    for (std::size_t i = 0; i < errors.rows; ++i)
        if (target_studies[i] == study) vals.push_back(errors.at(i, j));
    if (vals.empty()) throw InputError("no targets in study '" + study + "'");
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double sd = 0.0;
    if (vals.size() > 1) {
        double ss = 0.0;
        for (double v : vals) ss += (v - mean) * (v - mean);
        sd = std::sqrt(ss / static_cast<double>(vals.size() - 1));
    }
    return {mean, sd};
}

EvalReport transfer_experiment(const std::vector<ExperimentImage>& images,
                               const ExperimentConfig& cfg,
                               ExperimentArtifacts* artifacts) {
    if (images.size() < 2) throw InputError("transfer experiment needs >= 2 images");
    if (cfg.target_study.empty()) throw InputError("no target study named");

    std::vector<std::size_t> target_ids, source_ids, same_study_ids;
    std::set<std::string> studies;
    for (std::size_t i = 0; i < images.size(); ++i) {
        studies.insert(images[i].study);
        if (images[i].study == cfg.target_study) {
            target_ids.push_back(i);
            same_study_ids.push_back(i);
        } else {
            source_ids.push_back(i);
        }
    }
    if (target_ids.empty()) throw InputError("target study has no images");
    if (source_ids.empty()) throw InputError("no source images outside the target study");
    if (studies.size() < 2) throw InputError("transfer experiment needs >= 2 studies");
    for (const auto& img : images)
        if (!img.bag.labeled())
            throw InputError("image '" + img.tag + "' is unlabeled");

    const bool gated = cfg.gate_threshold >= 0.0;
    const int dfi = cfg.designated_feature_index;

    // the task region: full per-image bags, gate applied once up front
    std::vector<SampleBag> region(images.size());
    for (std::size_t i = 0; i < images.size(); ++i)
        region[i] = gated ? gate_rows(images[i].bag, dfi, cfg.gate_threshold)
                          : images[i].bag;

    EvalReport report;
    report.p_grid = cfg.p_grid;
    report.feature_names = cfg.feature_names;
    if (report.feature_names.empty()) {
        for (int f = 0; f < images[0].bag.n; ++f)
            report.feature_names.push_back("f" + std::to_string(f));
    }

    // ---- per-image forests (sources for fusion, target study for the
    // same-study importance baseline)
    Timer t_train;
    const int positive_class =
        static_cast<int>(images[0].bag.class_names.size()) - 1;
    SampleMode train_mode = cfg.oversample_factor > 1.0
                                ? SampleMode::oversample(positive_class,
                                                         cfg.oversample_factor)
                                : SampleMode::uniform();
    std::vector<SampleBag> train_bags(images.size());
    std::vector<TrainedForest> forests(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::string& tag = images[i].tag;
        train_bags[i] =
            sample_bag(region[i], cfg.train_count, train_mode,
                       image_seed(cfg.seed, streams::train_sample, tag));
        forests[i] = train_forest(train_bags[i], cfg.tree_count, cfg.mtry,
                                  image_seed(cfg.seed, streams::forest, tag),
                                  cfg.threads);
    }
    report.timings_s.emplace_back("train_forests", t_train.stop());

    // ---- pooled baseline over all source images
    TrainedForest pooled;
    if (cfg.pooled_baseline) {
        Timer t_pool;
        SampleBag all;
        all.n = images[0].bag.n;
        all.class_names = images[0].bag.class_names;
        all.source_tag = "all";
        for (std::size_t i : source_ids) {
            const SampleBag& tb = train_bags[i];
            all.features.insert(all.features.end(), tb.features.begin(),
                                tb.features.end());
            all.labels.insert(all.labels.end(), tb.labels.begin(), tb.labels.end());
        }
        pooled = train_forest(all, cfg.tree_count, cfg.mtry,
                              derive_seed(cfg.seed, streams::pooled), cfg.threads);
        report.timings_s.emplace_back("train_pooled", t_pool.stop());
    }

    // ---- evaluation samples (uniform within the task region)
    std::vector<SampleBag> eval_bags(target_ids.size());
    for (std::size_t z = 0; z < target_ids.size(); ++z) {
        const auto& img = images[target_ids[z]];
        eval_bags[z] = sample_bag(region[target_ids[z]], cfg.eval_count,
                                  SampleMode::uniform(),
                                  image_seed(cfg.seed, streams::eval_sample, img.tag));
        report.target_tags.push_back(img.tag);
        report.target_studies.push_back(img.study);
    }

    // ---- distance matrices per (measure, direction)
    std::vector<DistanceSource> dist_sources;
    for (std::size_t i : source_ids) {
        DistanceSource s;
        s.tag = images[i].tag;
        s.bag = &region[i];
        s.forest = &forests[i];
        dist_sources.push_back(s);
    }
    std::vector<DistanceTarget> dist_targets, eval_targets;
    for (std::size_t z = 0; z < target_ids.size(); ++z) {
        dist_targets.push_back({images[target_ids[z]].tag, &region[target_ids[z]]});
        eval_targets.push_back({images[target_ids[z]].tag, &eval_bags[z]});
    }

    std::vector<std::pair<Measure, Direction>> method_keys;
    for (Measure m : cfg.measures) {
        if (m == Measure::sup || m == Measure::clu)
            method_keys.emplace_back(m, Direction::t2s);
        else
            for (Direction d : cfg.directions) method_keys.emplace_back(m, d);
    }

    std::vector<DistanceMatrix> matrices;
    for (const auto& [m, d] : method_keys) {
        Timer t_dist;
        DistanceMatrixOptions opts;
        opts.measure = m;
        opts.direction = d;
        opts.seed = derive_seed(cfg.seed, streams::distance);
        opts.threads = cfg.threads;
        opts.designated_feature_index = dfi;
        if (m == Measure::sup) {
            // the oracle distance is definitional on the evaluation sample
            opts.subsample = 0;
            matrices.push_back(distance_matrix(dist_sources, eval_targets, opts));
        } else {
            opts.subsample = cfg.distance_count;
            matrices.push_back(distance_matrix(dist_sources, dist_targets, opts));
        }
        report.timings_s.emplace_back("distance_" + method_name(m, d),
                                      t_dist.stop());
    }

    // ---- fuse and evaluate
    report.methods.clear();
    if (cfg.pooled_baseline) report.methods.push_back("all");
    report.methods.push_back("uni");
    for (const auto& [m, d] : method_keys)
        report.methods.push_back(method_name(m, d));
    report.errors = RowMatrix(target_ids.size(), report.methods.size());

    const std::size_t M = source_ids.size();
    const std::vector<double> uniform_w(M, 1.0 / static_cast<double>(M));

    if (artifacts) {
        artifacts->eval_truth.resize(target_ids.size());
        artifacts->weights.resize(target_ids.size());
        artifacts->posteriors.resize(target_ids.size());
    }

    Timer t_predict;
    for (std::size_t z = 0; z < target_ids.size(); ++z) {
        std::vector<RowMatrix> member(M);
        for (std::size_t m = 0; m < M; ++m)
            member[m] = predict_proba(forests[source_ids[m]], eval_bags[z],
                                      cfg.threads);
        const std::vector<int>& truth = eval_bags[z].labels;
        auto score = [&](std::size_t col, RowMatrix fused) {
            report.errors.at(z, col) =
                error_rate(classify_argmax(fused), truth);
            if (artifacts) artifacts->posteriors[z].push_back(std::move(fused));
        };
        std::size_t col = 0;
        if (cfg.pooled_baseline)
            score(col++, predict_proba(pooled, eval_bags[z], cfg.threads));
        score(col++, fuse_posteriors(member, uniform_w));
        for (std::size_t k = 0; k < method_keys.size(); ++k) {
            WeightVector w = compute_weights(matrices[k].column(z), cfg.p);
            w.measure = method_keys[k].first;
            w.direction = method_keys[k].second;
            w.target_tag = report.target_tags[z];
            score(col++, fuse_posteriors(member, w.weights));
            if (artifacts) artifacts->weights[z].push_back(std::move(w));
        }
        if (artifacts) artifacts->eval_truth[z] = truth;
    }
    report.timings_s.emplace_back("predict", t_predict.stop());

    // ---- weight concentration (mean curve over targets)
    for (std::size_t k = 0; k < method_keys.size(); ++k) {
        std::vector<double> mean_fraction(cfg.p_grid.size(), 0.0);
        for (std::size_t z = 0; z < target_ids.size(); ++z) {
            const auto curve = weight_concentration(matrices[k].column(z), cfg.p_grid);
            for (std::size_t j = 0; j < curve.size(); ++j)
                mean_fraction[j] += curve[j].second;
        }
        for (double& f : mean_fraction) f /= static_cast<double>(target_ids.size());
        report.concentration[method_name(method_keys[k].first,
                                         method_keys[k].second)] = mean_fraction;
    }

    // ---- Spearman rank correlation against the oracle distance
    int sup_idx = -1;
    for (std::size_t k = 0; k < method_keys.size(); ++k)
        if (method_keys[k].first == Measure::sup) sup_idx = static_cast<int>(k);
    if (sup_idx >= 0) {
        for (std::size_t k = 0; k < method_keys.size(); ++k) {
            if (static_cast<int>(k) == sup_idx) continue;
            SpearmanRow row;
            row.method = method_name(method_keys[k].first, method_keys[k].second);
            double acc = 0.0;
            std::size_t used = 0;
            for (std::size_t z = 0; z < target_ids.size(); ++z) {
                double rho;
                try {
                    rho = spearman(matrices[k].column(z),
                                   matrices[sup_idx].column(z));
                    acc += rho;
                    ++used;
                } catch (const DegenerateError&) {
                    warn("spearman: tied column for target " +
                         report.target_tags[z] + ", skipped");
                    rho = std::numeric_limits<double>::quiet_NaN();
                }
                row.per_target.push_back(rho);
            }
            row.average = used > 0
                              ? acc / static_cast<double>(used)
                              : std::numeric_limits<double>::quiet_NaN();
            report.spearman_rows.push_back(std::move(row));
        }
    }

    // ---- aggregated feature importances
    {
        std::vector<std::vector<double>> src_imp;
        for (std::size_t i : source_ids) src_imp.push_back(forests[i].importances);
        report.importances["different_study"] =
            aggregate_importance(src_imp, uniform_w);

        if (same_study_ids.size() > 1) {
            // leave-one-out uniform aggregate within the target study
            std::vector<double> mean_agg(images[0].bag.n, 0.0);
            for (std::size_t z = 0; z < target_ids.size(); ++z) {
                std::vector<std::vector<double>> imps;
                for (std::size_t i : same_study_ids)
                    if (i != target_ids[z]) imps.push_back(forests[i].importances);
                const std::vector<double> w(imps.size(),
                                            1.0 / static_cast<double>(imps.size()));
                const auto agg = aggregate_importance(imps, w);
                for (std::size_t f = 0; f < agg.size(); ++f) mean_agg[f] += agg[f];
            }
            double total = 0.0;
            for (double v : mean_agg) total += v;
            if (total > 0.0)
                for (double& v : mean_agg) v /= total;
            report.importances["same_study"] = mean_agg;
        }

        for (std::size_t k = 0; k < method_keys.size(); ++k) {
            std::vector<double> mean_agg(images[0].bag.n, 0.0);
            for (std::size_t z = 0; z < target_ids.size(); ++z) {
                const WeightVector w = compute_weights(matrices[k].column(z), cfg.p);
                const auto agg = aggregate_importance(src_imp, w.weights);
                for (std::size_t f = 0; f < agg.size(); ++f) mean_agg[f] += agg[f];
            }
            double total = 0.0;
            for (double v : mean_agg) total += v;
            if (total > 0.0)
                for (double& v : mean_agg) v /= total;
            report.importances["weighted_" + method_name(method_keys[k].first,
                                                         method_keys[k].second)] =
                mean_agg;
        }
    }

    if (artifacts) {
        for (const auto& img : images) artifacts->image_tags.push_back(img.tag);
        artifacts->forests = std::move(forests);
        artifacts->has_pooled = cfg.pooled_baseline;
        if (cfg.pooled_baseline) artifacts->pooled = std::move(pooled);
        for (const auto& s : dist_sources) artifacts->source_tags.push_back(s.tag);
        for (const auto& [m, d] : method_keys)
            artifacts->matrix_methods.push_back(method_name(m, d));
        artifacts->matrices = std::move(matrices);
    }

    return report;
}

// ---- report emission ----------------------------------------------------------

void write_report(const EvalReport& report, const std::string& dir,
                  const std::string& config_snapshot) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto open = [&](const std::string& name) {
        std::ofstream out(fs::path(dir) / name, std::ios::binary);
        if (!out) throw InputError("cannot write report file: " + name);
        return out;
    };

    {
        auto out = open("report.csv");
        out << "target,study";
        for (const auto& m : report.methods) out << "," << m;
        out << "\n";
        for (std::size_t z = 0; z < report.target_tags.size(); ++z) {
            out << report.target_tags[z] << "," << report.target_studies[z];
            for (std::size_t j = 0; j < report.methods.size(); ++j)
                out << "," << format_double(report.errors.at(z, j));
            out << "\n";
        }
    }
    {
        auto out = open("summary.csv");
        out << "method,mean_error,sd_error,p_vs_uni\n";
        std::vector<double> uni_col;
        const int uni = report.method_index("uni");
        for (std::size_t z = 0; z < report.errors.rows; ++z)
            uni_col.push_back(report.errors.at(z, uni));
        for (std::size_t j = 0; j < report.methods.size(); ++j) {
            std::vector<double> col;
            for (std::size_t z = 0; z < report.errors.rows; ++z)
                col.push_back(report.errors.at(z, j));
            double mean = 0.0;
            for (double v : col) mean += v;
            mean /= static_cast<double>(col.size());
            double sd = 0.0;
            if (col.size() > 1) {
                double ss = 0.0;
                for (double v : col) ss += (v - mean) * (v - mean);
                sd = std::sqrt(ss / static_cast<double>(col.size() - 1));
            }
            out << report.methods[j] << "," << format_double(mean) << ","
                << format_double(sd) << ",";
            if (col.size() > 1)
                out << format_double(paired_ttest_pvalue(col, uni_col));
            else
                out << "nan";
            out << "\n";
        }
    }
    {
        auto out = open("concentration.csv");
        out << "method,p,fraction\n";
        for (const auto& [method, fractions] : report.concentration)
            for (std::size_t j = 0; j < fractions.size(); ++j)
                out << method << "," << format_double(report.p_grid[j]) << ","
                    << format_double(fractions[j]) << "\n";
    }
    {
        auto out = open("spearman.csv");
        out << "method";
        for (const auto& t : report.target_tags) out << "," << t;
        out << ",average\n";
        for (const auto& row : report.spearman_rows) {
            out << row.method;
            for (double v : row.per_target) out << "," << format_double(v);
            out << "," << format_double(row.average) << "\n";
        }
    }
    for (const auto& [strategy, imp] : report.importances) {
        auto out = open("importance_" + strategy + ".csv");
        out << "feature,importance\n";
        for (std::size_t f = 0; f < imp.size(); ++f)
            out << report.feature_names[f] << "," << format_double(imp[f]) << "\n";
    }
    {
        auto out = open("timings.csv");
        out << "phase,seconds\n";
        for (const auto& [phase, sec] : report.timings_s)
            out << phase << "," << format_double(sec) << "\n";
    }
    if (!config_snapshot.empty()) {
        auto out = open("config.txt");
        out << config_snapshot;
    }
}

} // namespace simfuse
