// Acceptance gate: one check per release criterion, one printed line each.
// Groups: fast (closed-form oracles, brute-force equivalence, toys),
// experiment (the synthetic cross-scanner study), determinism (pipeline
// byte-identity). No argument runs everything; exit 0 iff all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "simfuse/config.hpp"
#include "simfuse/distances.hpp"
#include "simfuse/ensemble.hpp"
#include "simfuse/evaluate.hpp"
#include "simfuse/features.hpp"
#include "simfuse/forest.hpp"
#include "simfuse/phantom.hpp"
#include "simfuse/pipeline.hpp"
#include "simfuse/rng.hpp"
#include "simfuse/volume.hpp"

namespace fs = std::filesystem;
using namespace simfuse;

namespace {

std::string num(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("simfuse-acc-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

SampleBag points_bag(int n, const std::vector<double>& flat) {
    SampleBag bag;
    bag.n = n;
    bag.features = flat;
    return bag;
}

// ------------------------------------------------------------------ 1

std::string crit_formulas() {
    // h = sigma * (4/(d+2))^(1/(d+4)) * N^(-1/(d+4)) at d=1, N=100, sigma=2,
    // reference evaluated at 50 decimal digits.
    const double ref = 0.84336921268549992398258087468937960240187232859984;
    const double got = silverman_bandwidth(1, 100, 2.0);
    if (std::abs(got - ref) > 1e-12 * ref)
        return "bandwidth " + num(got) + " != reference " + num(ref);

    const WeightVector wv = compute_weights({1.0, 2.0, 3.0}, 10.0);
    const double w0 = 1024.0 / 1025.0;
    const double w1 = 1.0 / 1025.0;
    if (std::abs(wv.weights[0] - w0) > 1e-12)
        return "weight[0] " + num(wv.weights[0]) + " != " + num(w0);
    if (std::abs(wv.weights[1] - w1) > 1e-12)
        return "weight[1] " + num(wv.weights[1]) + " != " + num(w1);
    if (wv.weights[2] != 0.0)
        return "weight of the farthest member is " + num(wv.weights[2]) +
               ", expected exact 0";
    return "";
}

// ------------------------------------------------------------------ 2

SampleBag random_bag(std::size_t rows, int n, std::uint64_t seed) {
    SampleBag bag;
    bag.n = n;
    bag.features.resize(rows * static_cast<std::size_t>(n));
    Rng rng(seed);
    for (double& v : bag.features) v = rng.normal();
    return bag;
}

double naive_mean_nn(const SampleBag& query, const SampleBag& ref) {
    double total = 0.0;
    for (std::size_t i = 0; i < query.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < ref.size(); ++j) {
            double sq = 0.0;
            for (int f = 0; f < query.n; ++f) {
                const double d = query.row(i)[f] - ref.row(j)[f];
                sq += d * d;
            }
            if (sq < best) best = sq;
        }
        total += best;
    }
    return total / static_cast<double>(query.size());
}

std::string crit_bruteforce() {
    Rng rng(90210);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t nq = 1 + rng.uniform_int(200);
        const std::size_t nr = 1 + rng.uniform_int(200);
        const int n = 1 + static_cast<int>(rng.uniform_int(30));
        const SampleBag q = random_bag(nq, n, derive_seed(700, rep));
        const SampleBag r = random_bag(nr, n, derive_seed(701, rep));
        const double fast = mean_nn_sqdist(q, r);
        const double naive = naive_mean_nn(q, r);
        if (fast != naive)
            return "nearest-neighbor case " + std::to_string(rep) + ": " +
                   num(fast) + " != naive " + num(naive);
    }

    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t rows = 20 + rng.uniform_int(131);
        const int n = 1 + static_cast<int>(rng.uniform_int(5));
        const SampleBag src = random_bag(rows, n, derive_seed(702, rep));
        const KdeModel model = kde_fit(src);
        for (int qi = 0; qi < 5; ++qi) {
            // query near a support point so the direct sum cannot underflow
            const std::size_t pick = rng.uniform_int(rows);
            std::vector<double> query(n);
            for (int f = 0; f < n; ++f)
                query[f] = src.row(pick)[f] + 0.3 * rng.normal();

            const double h = model.bandwidth;
            const double norm =
                std::pow(6.283185307179586476925286766559 * h * h,
                         -0.5 * n) /
                static_cast<double>(rows);
            double acc = 0.0;
            for (std::size_t j = 0; j < rows; ++j) {
                double sq = 0.0;
                for (int f = 0; f < n; ++f) {
                    const double d = query[f] - src.row(j)[f];
                    sq += d * d;
                }
                acc += std::exp(-0.5 * sq / (h * h));
            }
            const double naive_density = norm * acc;
            const double lse_density =
                std::exp(kde_log_density(model, query.data()));
            if (std::abs(lse_density - naive_density) >
                1e-9 * naive_density)
                return "density case " + std::to_string(rep) + "/" +
                       std::to_string(qi) + ": " + num(lse_density) +
                       " vs naive " + num(naive_density);
        }
    }
    return "";
}

// ------------------------------------------------------------------ 3

std::string crit_asymmetry() {
    // Source 1 covers only the target's dense cluster; source 2 also covers
    // the target's two outliers. Measured source-to-target both hit the
    // target exactly (distance 0); measured target-to-source the outliers
    // penalize source 1, so the asymmetric direction prefers source 2.
    std::vector<double> cluster;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            cluster.push_back(0.1 * i);
            cluster.push_back(0.1 * j);
        }
    std::vector<double> with_outliers = cluster;
    with_outliers.insert(with_outliers.end(), {2.0, 2.0, -1.5, 1.0});

    const SampleBag source1 = points_bag(2, cluster);
    const SampleBag source2 = points_bag(2, with_outliers);
    const SampleBag target = points_bag(2, with_outliers);

    const double s2t_1 = bag_distance(source1, target, Direction::s2t);
    const double s2t_2 = bag_distance(source2, target, Direction::s2t);
    const double t2s_1 = bag_distance(source1, target, Direction::t2s);
    const double t2s_2 = bag_distance(source2, target, Direction::t2s);

    if (s2t_1 != 0.0 || s2t_2 != 0.0)
        return "source-to-target should tie both sources at exact 0, got " +
               num(s2t_1) + " and " + num(s2t_2);
    if (!(t2s_1 > 0.0))
        return "target-to-source distance of the subset source should be "
               "positive, got " + num(t2s_1);
    if (!(t2s_2 < t2s_1))
        return "target-to-source ranking should prefer the covering source (" +
               num(t2s_2) + " vs " + num(t2s_1) + ")";
    return "";
}

// ------------------------------------------------------------ 4 and 7

std::vector<ExperimentImage> build_corpus(const RunConfig& cfg) {
    std::vector<ExperimentImage> images;
    const std::vector<std::string> class_names = cfg.class_names();
    for (int k = 0; k < cfg.studies; ++k) {
        const ScannerProfile base = cfg.study_profile(k);
        const PhantomSpec spec = cfg.phantom_spec(k);
        for (int j = 0; j < cfg.images_per_study; ++j) {
            const std::string tag =
                cfg.study_name(k) + "_img" + std::to_string(j);
            const Phantom ph =
                simulate_phantom(cfg.dims, cfg.spacing, spec,
                                 image_seed(cfg.seed, streams::phantom, tag));
            std::vector<Volume> channels;
            for (std::size_t c = 0; c < ph.channels.size(); ++c) {
                ScannerProfile profile = base;
                profile.seed = image_seed(cfg.seed, streams::scanner,
                                          tag + "/" + spec.channel_names[c]);
                channels.push_back(percentile_normalize(
                    apply_scanner(ph.channels[c], profile), ph.mask, 4.0,
                    96.0));
            }
            const FeatureExtraction ext =
                extract_features(channels, ph.mask, cfg.recipe);
            ExperimentImage img;
            img.tag = tag;
            img.study = cfg.study_name(k);
            img.bag = attach_labels(ext, ph.labels, class_names);
            img.bag.source_tag = tag;
            images.push_back(std::move(img));
        }
    }
    return images;
}

struct SeedOutcome {
    std::uint64_t seed = 0;
    std::map<std::string, double> err; // method -> mean error over targets
    std::map<std::string, double> rho; // method -> average rank correlation
};

const std::vector<SeedOutcome>& experiment_outcomes() {
    static const std::vector<SeedOutcome> cache = [] {
        std::vector<SeedOutcome> out;
        for (std::uint64_t seed : {11u, 23u, 37u, 53u, 71u}) {
            // Target and study1 carry strong small-scale bias fields that
            // smear the class intensity bands into each other; study2 is the
            // same scanner without the field. Its tight multimodal support
            // sits inside the target's smeared bands, so measured
            // source-to-target it looks deceptively close, while the
            // target's gap voxels have no study2 neighbors and its forests
            // misplace every boundary the field stretches.
            const RunConfig cfg = RunConfig::from_map(
                {{"task", "bt"},
                 {"studies", "3"},
                 {"images_per_study", "6"},
                 {"dims", "36,36,36"},
                 {"trees", "40"},
                 {"train_count", "1200"},
                 {"eval_count", "2500"},
                 {"distance_count", "800"},
                 {"measures", "sup,bag"},
                 {"directions", "t2s,s2t"},
                 {"pooled_baseline", "false"},
                 {"position", "false"},
                 {"study0.noise_sigma", "0.05"},
                 {"study0.bias_amplitude", "0.30"},
                 {"study0.bias_scale_mm", "10"},
                 {"study1.noise_sigma", "0.05"},
                 {"study1.bias_amplitude", "0.26"},
                 {"study1.bias_scale_mm", "10"},
                 {"study2.gamma", "1.0"},
                 {"study2.gain", "1.0"},
                 {"study2.offset", "0.0"},
                 {"study2.bias_amplitude", "0.10"},
                 {"study2.bias_scale_mm", "10"},
                 {"study2.noise_sigma", "0.05"},
                 {"seed", std::to_string(seed)}},
                "");
            const std::vector<ExperimentImage> images = build_corpus(cfg);
            const EvalReport rep =
                transfer_experiment(images, experiment_config(cfg));
            SeedOutcome o;
            o.seed = seed;
            for (const std::string& m : rep.methods) o.err[m] = rep.mean_error(m);
            for (const SpearmanRow& r : rep.spearman_rows)
                o.rho[r.method] = r.average;
            out.push_back(std::move(o));
        }
        return out;
    }();
    return cache;
}

std::string crit_transfer() {
    const auto& runs = experiment_outcomes();
    int ordered = 0;
    double uni_sum = 0.0, bag_sum = 0.0;
    for (const SeedOutcome& o : runs) {
        const double s = o.err.at("sup_t2s");
        const double b = o.err.at("bag_t2s");
        const double u = o.err.at("uni");
        if (s <= b + 1e-12 && b <= u + 1e-12) ++ordered;
        uni_sum += u;
        bag_sum += b;
    }
    if (ordered < 4)
        return "sup<=bag<=uni mean-error ordering held in only " +
               std::to_string(ordered) + "/5 seeds";
    const double rel = (uni_sum - bag_sum) / uni_sum;
    if (!(rel >= 0.10))
        return "weighted ensemble beats uniform by only " +
               num(100.0 * rel) + "% (need >= 10%)";
    return "";
}

std::string crit_direction() {
    const double hand = spearman({1.0, 2.0, 3.0}, {1.0, 3.0, 2.0});
    if (hand != 0.5)
        return "hand rank-correlation case gave " + num(hand) +
               ", expected exact 0.5";

    const std::vector<std::string> dirs{"bag_t2s", "bag_s2t"};
    int agree = 0;
    for (const SeedOutcome& o : experiment_outcomes()) {
        std::size_t best_rho = 0, best_err = 0;
        for (std::size_t i = 1; i < dirs.size(); ++i) {
            const double r = o.rho.at(dirs[i]);
            if (std::isfinite(r) && r > o.rho.at(dirs[best_rho])) best_rho = i;
            if (o.err.at(dirs[i]) < o.err.at(dirs[best_err])) best_err = i;
        }
        if (best_rho == best_err) ++agree;
    }
    if (agree < 4)
        return "highest-correlation direction matched lowest-error "
               "direction in only " + std::to_string(agree) + "/5 seeds";
    return "";
}

// ------------------------------------------------------------------ 5

SampleBag blob_bag(const std::vector<double>& designated_means,
                   const std::vector<std::size_t>& counts,
                   const std::vector<double>& nuisance_sds, double designated_sd,
                   std::uint64_t seed) {
    SampleBag bag;
    bag.n = 1 + static_cast<int>(nuisance_sds.size());
    Rng rng(seed);
    for (std::size_t c = 0; c < counts.size(); ++c) {
        for (std::size_t i = 0; i < counts[c]; ++i) {
            bag.features.push_back(designated_means[c] +
                                   designated_sd * rng.normal());
            for (double sd : nuisance_sds)
                bag.features.push_back(sd * rng.normal());
            bag.labels.push_back(static_cast<int>(c));
        }
    }
    for (std::size_t c = 0; c < counts.size(); ++c)
        bag.class_names.push_back("c" + std::to_string(c));
    return bag;
}

std::string crit_clustering() {
    // Well separated, balanced three-class case: clustering recovers the
    // labels, so the unsupervised distance tracks the supervised one.
    for (std::uint64_t rep = 0; rep < 3; ++rep) {
        const SampleBag source =
            blob_bag({0.2, 0.5, 0.8}, {240, 240, 240}, {0.05}, 0.06,
                     derive_seed(5100, rep));
        const SampleBag target =
            blob_bag({0.2, 0.5, 0.8}, {240, 240, 240}, {0.05}, 0.06,
                     derive_seed(5200, rep));
        const TrainedForest forest =
            train_forest(source, 30, 0, derive_seed(5300, rep));
        const std::uint64_t kseed = derive_seed(5400, rep);

        ClusterAssignment asg = kmeans(target, 3, kseed);
        match_clusters_to_classes(asg, target, 0);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < target.size(); ++i)
            if (asg.class_of_cluster[asg.cluster_of[i]] == target.labels[i])
                ++hits;
        const double recovery =
            static_cast<double>(hits) / static_cast<double>(target.size());
        if (recovery < 0.95)
            return "pair " + std::to_string(rep) +
                   ": cluster recovery only " + num(recovery);

        const double d_sup = supervised_distance(forest, target);
        const double d_clu = clustering_distance(forest, target, 0, kseed);
        if (std::abs(d_clu - d_sup) > 0.05)
            return "pair " + std::to_string(rep) + ": |d_clu - d_sup| = " +
                   num(std::abs(d_clu - d_sup)) + " > 0.05";
    }

    // Rare-positive case: 1% positives and high-variance nuisance axes.
    // k-means splits on the nuisance directions, so intensity matching
    // cannot recover the class of interest.
    const SampleBag rare = blob_bag({0.30, 0.75}, {2970, 30}, {3.0, 3.0, 3.0},
                                    0.04, derive_seed(5500, 0));
    ClusterAssignment asg = kmeans(rare, 2, derive_seed(5600, 0));
    match_clusters_to_classes(asg, rare, 0);
    std::size_t tp = 0, tn = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < rare.size(); ++i) {
        const int est = asg.class_of_cluster[asg.cluster_of[i]];
        if (rare.labels[i] == 1) {
            ++pos;
            if (est == 1) ++tp;
        } else {
            ++neg;
            if (est == 0) ++tn;
        }
    }
    const double balanced = 0.5 * (static_cast<double>(tp) / pos +
                                   static_cast<double>(tn) / neg);
    if (!(balanced < 0.60))
        return "rare-positive balanced accuracy " + num(balanced) +
               ", expected < 0.6";
    return "";
}

// ------------------------------------------------------------------ 6

std::string crit_concentration() {
    const std::vector<double> p_grid{1, 2, 5, 10, 20, 50};
    for (int v = 0; v < 100; ++v) {
        Rng rng(derive_seed(6000, v));
        const double start = 0.05 + 0.5 * rng.uniform01();
        const double step = 0.02 + 0.3 * rng.uniform01();
        std::vector<double> d(20);
        for (std::size_t i = 0; i < d.size(); ++i)
            d[i] = start + step * static_cast<double>(i);
        rng.shuffle(d);

        const auto fractions = weight_concentration(d, p_grid);
        for (std::size_t i = 1; i < fractions.size(); ++i)
            if (fractions[i].second > fractions[i - 1].second)
                return "vector " + std::to_string(v) +
                       ": fraction increased from p=" +
                       num(fractions[i - 1].first) + " to p=" +
                       num(fractions[i].first);
        if (fractions.back().second != 1.0 / 20.0)
            return "vector " + std::to_string(v) + ": fraction at p=50 is " +
                   num(fractions.back().second) + ", expected 1/M";
        const auto tail = weight_concentration(d, {200.0});
        if (tail[0].second != 1.0 / 20.0)
            return "vector " + std::to_string(v) + ": fraction at p=200 is " +
                   num(tail[0].second) + ", expected 1/M";
    }
    return "";
}

// ------------------------------------------------------------------ 8

std::string crit_informed() {
    const std::size_t total = 50000;
    const std::size_t K = 100; // 0.2% positives
    Rng rng(derive_seed(8000, 0));
    std::vector<double> scores(total);
    std::vector<int> truth(total, 0);
    for (std::size_t i = 0; i < total; ++i) {
        if (i < K) {
            truth[i] = 1;
            scores[i] = rng.uniform(0.6, 1.0);
        } else {
            scores[i] = rng.uniform(0.0, 0.8);
        }
    }

    const double tau = informed_threshold(scores, K);
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    if (tau != sorted[K - 1])
        return "threshold " + num(tau) + " != sort oracle " +
               num(sorted[K - 1]);

    std::size_t predicted = 0, fp_tau = 0, fp_half = 0;
    for (std::size_t i = 0; i < total; ++i) {
        if (scores[i] >= tau) {
            ++predicted;
            if (truth[i] == 0) ++fp_tau;
        }
        if (truth[i] == 0 && scores[i] >= 0.5) ++fp_half;
    }
    if (predicted + 1 < K || predicted > K + 1)
        return "predicted-positive count " + std::to_string(predicted) +
               " not within 1 of K=" + std::to_string(K);
    if (!(fp_tau < fp_half))
        return "informed threshold gave " + std::to_string(fp_tau) +
               " false positives vs " + std::to_string(fp_half) +
               " at tau=0.5";
    return "";
}

// ------------------------------------------------------------------ 9

std::vector<std::string> relative_files(const fs::path& root) {
    std::vector<std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file())
            out.push_back(fs::relative(entry.path(), root).generic_string());
    std::sort(out.begin(), out.end());
    return out;
}

std::string compare_trees(const fs::path& a, const fs::path& b) {
    const auto fa = relative_files(a);
    const auto fb = relative_files(b);
    if (fa != fb) return "the two runs produced different file sets";
    if (fa.size() < 20)
        return "suspiciously few artifacts (" + std::to_string(fa.size()) + ")";
    for (const std::string& rel : fa) {
        if (fs::path(rel).filename() == "timings.csv") continue; // wall clock
        if (slurp(a / rel) != slurp(b / rel))
            return "artifact '" + rel + "' differs between runs";
    }
    return "";
}

std::string reproduce_twice(const std::map<std::string, std::string>& kv,
                            const std::string& label) {
    std::ostringstream snap;
    for (const auto& [k, v] : kv) snap << k << " = " << v << "\n";
    const RunConfig cfg = RunConfig::from_map(kv, snap.str());
    TempDir a, b;
    cmd_reproduce(cfg, a.str());
    cmd_reproduce(cfg, b.str());
    const std::string diff = compare_trees(a.path, b.path);
    if (!diff.empty()) return label + ": " + diff;

    const fs::path model = a.path / "models" / "study0_img0.forest";
    const std::string text = slurp(model);
    if (text.empty()) return label + ": missing model file";
    const std::string again = serialize_forest(parse_forest(text));
    if (again != text) return label + ": forest round-trip not byte-identical";
    return "";
}

std::string crit_determinism() {
    const std::string tissue = reproduce_twice(
        {{"task", "bt"},
         {"studies", "3"},
         {"images_per_study", "2"},
         {"dims", "24,24,24"},
         {"trees", "12"},
         {"train_count", "500"},
         {"eval_count", "800"},
         {"distance_count", "200"},
         {"measures", "sup,clu,div,bag"},
         {"directions", "t2s,avg"},
         {"seed", "7"}},
        "tissue task");
    if (!tissue.empty()) return tissue;

    return reproduce_twice({{"task", "wml"},
                            {"studies", "3"},
                            {"images_per_study", "2"},
                            {"dims", "32,32,32"},
                            {"trees", "10"},
                            {"train_count", "400"},
                            {"eval_count", "600"},
                            {"distance_count", "150"},
                            {"measures", "sup,bag"},
                            {"directions", "t2s,avg"},
                            {"seed", "9"}},
                           "lesion task");
}

// ------------------------------------------------------------------ main

struct Criterion {
    int id;
    const char* label;
    const char* group;
    std::string (*fn)();
};

const Criterion kTable[] = {
    {1, "closed-form oracles (bandwidth, fusion weights)", "fast", crit_formulas},
    {2, "brute-force equivalence (nearest neighbor, density)", "fast", crit_bruteforce},
    {3, "asymmetry of the set distance on subset toys", "fast", crit_asymmetry},
    {4, "cross-scanner transfer benefit on synthetic studies", "experiment", crit_transfer},
    {5, "clustering distance validity and rare-class failure", "fast", crit_clustering},
    {6, "weight concentration monotone in the exponent", "fast", crit_concentration},
    {7, "rank correlation selects the better direction", "experiment", crit_direction},
    {8, "informed threshold on a rare-positive target", "fast", crit_informed},
    {9, "pipeline determinism and model round-trip", "determinism", crit_determinism},
};

} // namespace

int main(int argc, char** argv) {
    const std::string group = argc > 1 ? argv[1] : "all";
    if (group != "all" && group != "fast" && group != "experiment" &&
        group != "determinism") {
        std::fprintf(stderr, "usage: acceptance [fast|experiment|determinism]\n");
        return 2;
    }

    bool all_ok = true;
    for (const Criterion& c : kTable) {
        if (group != "all" && group != c.group) continue;
        const auto t0 = std::chrono::steady_clock::now();
        std::string err;
        try {
            err = c.fn();
        } catch (const std::exception& e) {
            err = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        if (err.empty()) {
            std::printf("criterion %d: %-55s pass  (%.1fs)\n", c.id, c.label,
                        secs);
        } else {
            std::printf("criterion %d: %-55s FAIL  %s\n", c.id, c.label,
                        err.c_str());
            all_ok = false;
        }
        std::fflush(stdout);
    }
    return all_ok ? 0 : 1;
}
