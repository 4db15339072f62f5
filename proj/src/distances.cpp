#include "simfuse/distances.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "simfuse/parallel.hpp"
#include "simfuse/rng.hpp"

namespace simfuse {

std::string to_string(Direction d) {
    switch (d) {
        case Direction::t2s: return "t2s";
        case Direction::s2t: return "s2t";
        case Direction::avg: return "avg";
    }
    throw InputError("bad direction");
}

std::string to_string(Measure m) {
    switch (m) {
        case Measure::sup: return "sup";
        case Measure::clu: return "clu";
        case Measure::div: return "div";
        case Measure::bag: return "bag";
    }
    throw InputError("bad measure");
}

Direction direction_from_string(const std::string& s) {
    if (s == "t2s") return Direction::t2s;
    if (s == "s2t") return Direction::s2t;
    if (s == "avg") return Direction::avg;
    throw InputError("unknown direction '" + s + "' (expected t2s|s2t|avg)");
}

Measure measure_from_string(const std::string& s) {
    if (s == "sup") return Measure::sup;
    if (s == "clu") return Measure::clu;
    if (s == "div") return Measure::div;
    if (s == "bag") return Measure::bag;
    throw InputError("unknown measure '" + s + "' (expected sup|clu|div|bag)");
}

// ---- posterior MSE ----------------------------------------------------------

double posterior_mse(const RowMatrix& posteriors, const std::vector<int>& labels) {
    if (posteriors.rows != labels.size())
        throw InputError("posterior/label count mismatch");
    if (posteriors.rows == 0) throw InputError("empty posterior matrix");
    double acc = 0.0;
    for (std::size_t i = 0; i < posteriors.rows; ++i) {
        const int l = labels[i];
        if (l < 0 || static_cast<std::size_t>(l) >= posteriors.cols)
            throw InputError("label out of posterior range");
        const double e = 1.0 - posteriors.at(i, l);
        acc += e * e;
    }
    return acc / static_cast<double>(posteriors.rows);
}

double supervised_distance(const TrainedForest& forest, const SampleBag& target,
                           int threads) {
    if (!target.labeled())
        throw InputError("supervised distance needs a labeled target");
    return posterior_mse(predict_proba(forest, target, threads), target.labels);
}

// ---- k-means ----------------------------------------------------------------

namespace {

double sqdist(const double* a, const double* b, int n) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
        const double d = a[j] - b[j];
        acc += d * d;
    }
    return acc;
}

struct LloydResult {
    std::vector<int> assign;
    RowMatrix centroids;
    double wcss = std::numeric_limits<double>::infinity();
};

LloydResult lloyd_once(const SampleBag& bag, int k, std::uint64_t seed) {
    const std::size_t N = bag.size();
    const int n = bag.n;
    Rng rng(seed);

    RowMatrix centroids(static_cast<std::size_t>(k), static_cast<std::size_t>(n));
    // greedy farthest-point seeding from a uniform start
    const std::size_t first = rng.uniform_int(N);
    std::copy(bag.row(first), bag.row(first) + n, centroids.row(0));
    std::vector<double> dmin(N);
    for (std::size_t i = 0; i < N; ++i)
        dmin[i] = sqdist(bag.row(i), centroids.row(0), n);
    for (int c = 1; c < k; ++c) {
        std::size_t far = 0;
        for (std::size_t i = 1; i < N; ++i)
            if (dmin[i] > dmin[far]) far = i;
        std::copy(bag.row(far), bag.row(far) + n, centroids.row(c));
        for (std::size_t i = 0; i < N; ++i)
            dmin[i] = std::min(dmin[i], sqdist(bag.row(i), centroids.row(c), n));
    }

    std::vector<int> assign(N, -1);
    const int max_iter = 300;
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < N; ++i) {
            int bc = 0;
            double bd = sqdist(bag.row(i), centroids.row(0), n);
            for (int c = 1; c < k; ++c) {
                const double d = sqdist(bag.row(i), centroids.row(c), n);
                if (d < bd) {
                    bd = d;
                    bc = c;
                }
            }
            if (assign[i] != bc) {
                assign[i] = bc;
                changed = true;
            }
        }
        if (!changed) break;

        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        RowMatrix sums(static_cast<std::size_t>(k), static_cast<std::size_t>(n));
        for (std::size_t i = 0; i < N; ++i) {
            ++counts[assign[i]];
            double* s = sums.row(assign[i]);
            const double* x = bag.row(i);
            for (int j = 0; j < n; ++j) s[j] += x[j];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            double* ctr = centroids.row(c);
            const double* s = sums.row(c);
            for (int j = 0; j < n; ++j)
                ctr[j] = s[j] / static_cast<double>(counts[c]);
        }
        // reseed empty clusters to the point farthest from its centroid
        std::vector<char> used(N, 0);
        for (int c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far = N;
            double fd = -1.0;
            for (std::size_t i = 0; i < N; ++i) {
                if (used[i]) continue;
                const double d = sqdist(bag.row(i), centroids.row(assign[i]), n);
                if (d > fd) {
                    fd = d;
                    far = i;
                }
            }
            std::copy(bag.row(far), bag.row(far) + n, centroids.row(c));
            used[far] = 1;
        }
    }

    LloydResult res;
    res.assign = std::move(assign);
    res.centroids = std::move(centroids);
    res.wcss = 0.0;
    for (std::size_t i = 0; i < N; ++i)
        res.wcss += sqdist(bag.row(i), res.centroids.row(res.assign[i]), n);
    return res;
}

} // namespace

ClusterAssignment kmeans(const SampleBag& bag, int k, std::uint64_t seed) {
    bag.validate();
    if (k < 1) throw InputError("k must be >= 1");
    if (static_cast<std::size_t>(k) > bag.size())
        throw InputError("k exceeds sample count");

    const int restarts = 5;
    LloydResult best;
    for (int r = 0; r < restarts; ++r) {
        LloydResult run = lloyd_once(bag, k, derive_seed(seed, r));
        if (run.wcss < best.wcss) best = std::move(run);
    }

    ClusterAssignment out;
    out.cluster_of = std::move(best.assign);
    out.centroids = std::move(best.centroids);
    out.wcss = best.wcss;
    return out;
}

void match_clusters_to_classes(ClusterAssignment& assignment, const SampleBag& bag,
                               int designated_feature_index) {
    const int k = static_cast<int>(assignment.centroids.rows);
    if (designated_feature_index < 0 || designated_feature_index >= bag.n)
        throw InputError("designated feature index out of range");

    std::vector<double> mean(k, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < bag.size(); ++i) {
        const int c = assignment.cluster_of[i];
        mean[c] += bag.row(i)[designated_feature_index];
        ++count[c];
    }
    for (int c = 0; c < k; ++c) {
        if (count[c] == 0) throw InputError("empty cluster in class matching");
        mean[c] /= static_cast<double>(count[c]);
    }

    std::vector<int> order(k);
    for (int c = 0; c < k; ++c) order[c] = c;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (mean[a] != mean[b]) return mean[a] < mean[b];
        return a < b;
    });
    for (int pos = 0; pos + 1 < k; ++pos) {
        if (mean[order[pos]] == mean[order[pos + 1]]) {
            warn("match_clusters_to_classes: tied cluster means, breaking by index");
            break;
        }
    }

    assignment.class_of_cluster.assign(k, -1);
    for (int pos = 0; pos < k; ++pos)
        assignment.class_of_cluster[order[pos]] = pos;
}

double clustering_distance(const TrainedForest& forest, const SampleBag& target,
                           int designated_feature_index, std::uint64_t seed,
                           int threads) {
    const int k = static_cast<int>(forest.n_classes());
    ClusterAssignment assignment = kmeans(target, k, seed);
    match_clusters_to_classes(assignment, target, designated_feature_index);
    std::vector<int> estimated(target.size());
    for (std::size_t i = 0; i < target.size(); ++i)
        estimated[i] = assignment.class_of_cluster[assignment.cluster_of[i]];
    return posterior_mse(predict_proba(forest, target, threads), estimated);
}

// ---- KDE / divergence --------------------------------------------------------

double silverman_bandwidth(int dim, std::size_t n_samples, double pooled_sd) {
    if (dim < 1 || n_samples < 1 || pooled_sd <= 0.0)
        throw InputError("bad silverman inputs");
    const double d = static_cast<double>(dim);
    return std::pow(4.0 / (d + 2.0), 1.0 / (d + 4.0)) *
           std::pow(static_cast<double>(n_samples), -1.0 / (d + 4.0)) * pooled_sd;
}

KdeModel kde_fit(const SampleBag& source) {
    source.validate();
    const std::size_t N = source.size();
    if (N < 2) throw InputError("kde_fit needs >= 2 samples");
    const int d = source.n;

    // pooled scale: sqrt of the mean per-dimension sample variance
    double var_sum = 0.0;
    for (int j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < N; ++i) mean += source.row(i)[j];
        mean /= static_cast<double>(N);
        double ss = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double e = source.row(i)[j] - mean;
            ss += e * e;
        }
        var_sum += ss / static_cast<double>(N - 1);
    }
    const double pooled_sd = std::sqrt(var_sum / static_cast<double>(d));
    if (pooled_sd <= 0.0)
        throw DegenerateError("zero-variance source in kde_fit");

    KdeModel model;
    model.support = source.features;
    model.n_samples = N;
    model.dim = d;
    model.pooled_sd = pooled_sd;
    model.bandwidth = silverman_bandwidth(d, N, pooled_sd);
    return model;
}

double kde_log_density(const KdeModel& model, const double* query) {
    const double h2 = model.bandwidth * model.bandwidth;
    const double inv2h2 = 0.5 / h2;
    double max_t = -std::numeric_limits<double>::infinity();
    std::vector<double> t(model.n_samples);
    for (std::size_t i = 0; i < model.n_samples; ++i) {
        const double* x = model.support.data() + i * model.dim;
        t[i] = -sqdist(query, x, model.dim) * inv2h2;
        max_t = std::max(max_t, t[i]);
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < model.n_samples; ++i)
        acc += std::exp(t[i] - max_t);
    return max_t + std::log(acc) -
           0.5 * model.dim * std::log(2.0 * M_PI * h2) -
           std::log(static_cast<double>(model.n_samples));
}

double divergence_from_model(const KdeModel& model, const SampleBag& bag,
                             int threads) {
    if (bag.n != model.dim) throw InputError("dimension mismatch in divergence");
    const std::size_t N = bag.size();
    if (N == 0) throw InputError("empty bag in divergence");
    std::vector<double> vals(N);
    parallel_for(N, threads, [&](std::size_t i) {
        vals[i] = -kde_log_density(model, bag.row(i));
    });
    double acc = 0.0;
    for (double v : vals) acc += v;
    return acc / static_cast<double>(N);
}

double divergence_distance(const SampleBag& source, const SampleBag& target,
                           Direction direction, int threads) {
    if (source.n != target.n) throw InputError("dimension mismatch");
    switch (direction) {
        case Direction::t2s:
            return divergence_from_model(kde_fit(source), target, threads);
        case Direction::s2t:
            return divergence_from_model(kde_fit(target), source, threads);
        case Direction::avg:
            return 0.5 * (divergence_from_model(kde_fit(source), target, threads) +
                          divergence_from_model(kde_fit(target), source, threads));
    }
    throw InputError("bad direction");
}

// ---- bag distance -------------------------------------------------------------

double mean_nn_sqdist(const SampleBag& query, const SampleBag& reference,
                      int threads) {
    if (query.n != reference.n) throw InputError("dimension mismatch");
    const std::size_t Nq = query.size(), Nr = reference.size();
    if (Nq == 0 || Nr == 0) throw InputError("empty bag in nearest-neighbor distance");
    const int n = query.n;
    std::vector<double> vals(Nq);
    parallel_for(Nq, threads, [&](std::size_t i) {
        const double* q = query.row(i);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < Nr; ++r) {
            const double* x = reference.row(r);
            double acc = 0.0;
            for (int j = 0; j < n; ++j) {
                const double dd = q[j] - x[j];
                acc += dd * dd;
                if (acc >= best) break; // partial sums only grow
            }
            if (acc < best) best = acc;
        }
        vals[i] = best;
    });
    double acc = 0.0;
    for (double v : vals) acc += v;
    return acc / static_cast<double>(Nq);
}

double bag_distance(const SampleBag& source, const SampleBag& target,
                    Direction direction, int threads) {
    switch (direction) {
        case Direction::t2s:
            return mean_nn_sqdist(target, source, threads);
        case Direction::s2t:
            return mean_nn_sqdist(source, target, threads);
        case Direction::avg:
            return 0.5 * (mean_nn_sqdist(target, source, threads) +
                          mean_nn_sqdist(source, target, threads));
    }
    throw InputError("bad direction");
}

// ---- distance matrices ----------------------------------------------------------

std::vector<double> DistanceMatrix::column(std::size_t z) const {
    std::vector<double> col(source_tags.size());
    for (std::size_t m = 0; m < source_tags.size(); ++m) col[m] = at(m, z);
    return col;
}

namespace {

// Stream constants for per-tag seed derivation, so subsampling and
// clustering never share an RNG stream.
constexpr std::uint64_t kSubsampleStream = 1;
constexpr std::uint64_t kClusterStream = 2;

SampleBag subsampled(const SampleBag& bag, const std::string& tag,
                     const DistanceMatrixOptions& opts) {
    if (opts.subsample == 0 || opts.subsample >= bag.size()) return bag;
    const std::uint64_t seed =
        derive_seed(derive_seed(opts.seed, kSubsampleStream), fnv1a64(tag));
    return sample_bag(bag, opts.subsample, SampleMode::uniform(), seed);
}

} // namespace

DistanceMatrix distance_matrix(const std::vector<DistanceSource>& sources,
                               const std::vector<DistanceTarget>& targets,
                               const DistanceMatrixOptions& opts) {
    if (sources.empty() || targets.empty())
        throw InputError("distance_matrix needs sources and targets");
    const bool needs_forest =
        opts.measure == Measure::sup || opts.measure == Measure::clu;
    if (needs_forest && opts.direction != Direction::t2s)
        throw InputError(to_string(opts.measure) + " supports only the t2s direction");

    for (const auto& s : sources) {
        if (s.tag.empty()) throw InputError("empty source tag");
        if (needs_forest && !s.forest)
            throw InputError("source '" + s.tag + "' has no forest");
        if (!needs_forest && !s.bag)
            throw InputError("source '" + s.tag + "' has no bag");
    }
    for (const auto& t : targets)
        if (t.tag.empty() || !t.bag)
            throw InputError("every target needs a tag and a bag");
    {
        auto unique_tags = [](auto get, const auto& list) {
            std::vector<std::string> tags;
            for (const auto& e : list) tags.push_back(get(e));
            std::sort(tags.begin(), tags.end());
            return std::adjacent_find(tags.begin(), tags.end()) == tags.end();
        };
        if (!unique_tags([](const DistanceSource& s) { return s.tag; }, sources) ||
            !unique_tags([](const DistanceTarget& t) { return t.tag; }, targets))
            throw InputError("duplicate tags in distance_matrix");
    }

    const std::size_t M = sources.size(), Z = targets.size();
    std::vector<SampleBag> src_bags(M), tgt_bags(Z);
    for (std::size_t z = 0; z < Z; ++z) {
        tgt_bags[z] = subsampled(*targets[z].bag, targets[z].tag, opts);
        if (opts.measure == Measure::sup && !tgt_bags[z].labeled())
            throw InputError("sup measure needs labeled target '" + targets[z].tag + "'");
    }
    if (!needs_forest)
        for (std::size_t m = 0; m < M; ++m)
            src_bags[m] = subsampled(*sources[m].bag, sources[m].tag, opts);

    // clu: the estimated labels depend on the target only, so cluster
    // each target once and share the labels across all sources
    std::vector<std::vector<int>> estimated(Z);
    if (opts.measure == Measure::clu) {
        for (std::size_t z = 0; z < Z; ++z) {
            const std::uint64_t seed = derive_seed(
                derive_seed(opts.seed, kClusterStream), fnv1a64(targets[z].tag));
            const int k = static_cast<int>(sources[0].forest->n_classes());
            ClusterAssignment a = kmeans(tgt_bags[z], k, seed);
            match_clusters_to_classes(a, tgt_bags[z], opts.designated_feature_index);
            estimated[z].resize(tgt_bags[z].size());
            for (std::size_t i = 0; i < tgt_bags[z].size(); ++i)
                estimated[z][i] = a.class_of_cluster[a.cluster_of[i]];
        }
    }

    DistanceMatrix out;
    out.measure = opts.measure;
    out.direction = opts.direction;
    out.seed = opts.seed;
    out.subsample = opts.subsample;
    for (const auto& s : sources) out.source_tags.push_back(s.tag);
    for (const auto& t : targets) out.target_tags.push_back(t.tag);
    out.values.assign(M * Z, 0.0);

    parallel_for(M * Z, opts.threads, [&](std::size_t e) {
        const std::size_t m = e / Z, z = e % Z;
        double v = 0.0;
        switch (opts.measure) {
            case Measure::sup:
                v = supervised_distance(*sources[m].forest, tgt_bags[z]);
                break;
            case Measure::clu:
                v = posterior_mse(predict_proba(*sources[m].forest, tgt_bags[z]),
                                  estimated[z]);
                break;
            case Measure::div:
                v = divergence_distance(src_bags[m], tgt_bags[z], opts.direction);
                break;
            case Measure::bag:
                v = bag_distance(src_bags[m], tgt_bags[z], opts.direction);
                break;
        }
        out.values[e] = v;
    });
    return out;
}

} // namespace simfuse
