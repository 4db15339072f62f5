#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "simfuse/distances.hpp"
#include "simfuse/rng.hpp"

using namespace simfuse;

namespace {

SampleBag bag_from(const std::vector<std::vector<double>>& rows,
                   std::vector<int> labels = {},
                   std::vector<std::string> class_names = {}) {
    SampleBag bag;
    bag.n = rows.empty() ? 0 : static_cast<int>(rows[0].size());
    for (const auto& r : rows)
        bag.features.insert(bag.features.end(), r.begin(), r.end());
    bag.labels = std::move(labels);
    bag.class_names = std::move(class_names);
    bag.source_tag = "t";
    return bag;
}

SampleBag random_bag(std::size_t rows, int n, std::uint64_t seed,
                     double spread = 1.0, double shift = 0.0) {
    SampleBag bag;
    bag.n = n;
    Rng rng(seed);
    for (std::size_t i = 0; i < rows; ++i)
        for (int f = 0; f < n; ++f)
            bag.features.push_back(shift + spread * rng.uniform01());
    bag.source_tag = "r" + std::to_string(seed);
    return bag;
}

// three separated 1-D clusters lifted to (value, small noise)
SampleBag blobs3(std::size_t per_class, std::uint64_t seed, double noise_sd,
                 std::vector<double> centers = {0.2, 0.5, 0.8}) {
    SampleBag bag;
    bag.n = 2;
    Rng rng(seed);
    for (std::size_t c = 0; c < centers.size(); ++c)
        for (std::size_t i = 0; i < per_class; ++i) {
            bag.features.push_back(centers[c] + noise_sd * rng.normal());
            bag.features.push_back(0.05 * rng.normal());
            bag.labels.push_back(static_cast<int>(c));
        }
    for (std::size_t c = 0; c < centers.size(); ++c)
        bag.class_names.push_back("k" + std::to_string(c));
    bag.source_tag = "blobs";
    return bag;
}

} // namespace

TEST_CASE("posterior_mse is the mean squared shortfall of the true class") {
    RowMatrix post(2, 2);
    post.data = {0.8, 0.2, 0.3, 0.7};
    const double d = posterior_mse(post, {0, 1});
    CHECK(d == doctest::Approx((0.04 + 0.09) / 2.0).epsilon(1e-12));
}

TEST_CASE("supervised_distance is zero for a perfectly fit forest") {
    const SampleBag bag = blobs3(40, 5, 0.01);
    const TrainedForest f = train_forest(bag, 30, 0, 9);
    const double d = supervised_distance(f, bag);
    CHECK(d >= 0.0);
    CHECK(d < 0.01);
}

TEST_CASE("silverman_bandwidth matches the high-precision reference") {
    // frozen from a 50-digit evaluation of (4/(d+2))^(1/(d+4)) N^(-1/(d+4)) sigma
    CHECK(silverman_bandwidth(1, 100, 2.0) ==
          doctest::Approx(0.8433692126854999239826).epsilon(1e-13));
    CHECK(silverman_bandwidth(3, 500, 0.7) ==
          doctest::Approx(0.2790529441894163607363).epsilon(1e-13));
}

TEST_CASE("kde_fit uses the pooled per-dimension sample deviation") {
    // two dims with n-1 sample variances 2 and 18 -> pooled sd = sqrt(10)
    const SampleBag bag = bag_from({{-1.0, -3.0}, {1.0, 3.0}});
    const KdeModel model = kde_fit(bag);
    CHECK(model.pooled_sd == doctest::Approx(std::sqrt(10.0)).epsilon(1e-12));
    CHECK(model.bandwidth ==
          doctest::Approx(silverman_bandwidth(2, 2, std::sqrt(10.0)))
              .epsilon(1e-12));
    CHECK(model.n_samples == 2);
    CHECK(model.dim == 2);
}

TEST_CASE("kde_fit rejects degenerate supports") {
    const SampleBag constant = bag_from({{1.0, 2.0}, {1.0, 2.0}});
    CHECK_THROWS_AS(kde_fit(constant), DegenerateError);
    const SampleBag single = bag_from({{1.0, 2.0}});
    CHECK_THROWS_AS(kde_fit(single), InputError);
}

TEST_CASE("kde_log_density matches the closed form for one kernel") {
    // single support point at 0, bandwidth forced to 1: the density at x
    // is the standard normal pdf
    KdeModel model;
    model.support = {0.0};
    model.n_samples = 1;
    model.dim = 1;
    model.bandwidth = 1.0;
    const double x = 1.5;
    const double expect = -1.125 - 0.5 * std::log(2.0 * M_PI);
    CHECK(kde_log_density(model, &x) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("kde_log_density equals the naive sum on random cases") {
    Rng rng(31);
    for (int rep = 0; rep < 5; ++rep) {
        const int n = 3;
        const SampleBag src = random_bag(50, n, 100 + rep);
        const KdeModel model = kde_fit(src);
        for (int q = 0; q < 10; ++q) {
            std::vector<double> query(n);
            for (double& v : query) v = rng.uniform01();
            // naive: direct probability sum
            double acc = 0.0;
            for (std::size_t i = 0; i < model.n_samples; ++i) {
                double sq = 0.0;
                for (int f = 0; f < n; ++f) {
                    const double d = query[f] - model.support[i * n + f];
                    sq += d * d;
                }
                acc += std::exp(-0.5 * sq / (model.bandwidth * model.bandwidth));
            }
            const double naive =
                std::log(acc) -
                std::log(static_cast<double>(model.n_samples)) -
                0.5 * n * std::log(2.0 * M_PI * model.bandwidth * model.bandwidth);
            CHECK(kde_log_density(model, query.data()) ==
                  doctest::Approx(naive).epsilon(1e-9));
        }
    }
}

TEST_CASE("divergence avg is the mean of the two directions") {
    const SampleBag a = random_bag(60, 2, 7);
    const SampleBag b = random_bag(40, 2, 8, 1.0, 0.5);
    const double t2s = divergence_distance(a, b, Direction::t2s);
    const double s2t = divergence_distance(a, b, Direction::s2t);
    const double avg = divergence_distance(a, b, Direction::avg);
    CHECK(avg == doctest::Approx(0.5 * (t2s + s2t)).epsilon(1e-12));
    CHECK(t2s != doctest::Approx(s2t).epsilon(1e-6)); // genuinely asymmetric
}

TEST_CASE("divergence grows as the target drifts away from the source") {
    const SampleBag source = random_bag(80, 2, 1);
    const SampleBag near = random_bag(50, 2, 2, 1.0, 0.1);
    const SampleBag far = random_bag(50, 2, 3, 1.0, 2.0);
    CHECK(divergence_distance(source, near, Direction::t2s) <
          divergence_distance(source, far, Direction::t2s));
}

TEST_CASE("mean_nn_sqdist matches a hand-checked configuration") {
    const SampleBag ref = bag_from({{0.0, 0.0}, {1.0, 0.0}});
    const SampleBag query = bag_from({{0.25, 0.0}, {1.0, 0.5}, {2.0, 0.0}});
    // nearest squared distances: 0.0625, 0.25, 1.0
    CHECK(mean_nn_sqdist(query, ref) ==
          doctest::Approx((0.0625 + 0.25 + 1.0) / 3.0).epsilon(1e-12));
}

TEST_CASE("bag_distance directions: subset targets collapse s2t to zero") {
    // source points all exist in the target, target has extras
    const SampleBag source = bag_from({{0.0, 0.0}, {1.0, 1.0}});
    const SampleBag target =
        bag_from({{0.0, 0.0}, {1.0, 1.0}, {5.0, 5.0}});
    CHECK(bag_distance(source, target, Direction::s2t) == 0.0);
    CHECK(bag_distance(source, target, Direction::t2s) > 0.0);
    const double avg = bag_distance(source, target, Direction::avg);
    CHECK(avg ==
          doctest::Approx(0.5 * bag_distance(source, target, Direction::t2s))
              .epsilon(1e-12));
}

TEST_CASE("mean_nn_sqdist equals the naive double loop on random bags") {
    Rng rng(55);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t nq = 20 + rng.uniform_int(40);
        const std::size_t nr = 20 + rng.uniform_int(40);
        const int n = 1 + static_cast<int>(rng.uniform_int(6));
        const SampleBag q = random_bag(nq, n, 500 + rep);
        const SampleBag r = random_bag(nr, n, 800 + rep);
        double total = 0.0;
        for (std::size_t i = 0; i < nq; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < nr; ++j) {
                double sq = 0.0;
                for (int f = 0; f < n; ++f) {
                    const double d = q.row(i)[f] - r.row(j)[f];
                    sq += d * d;
                }
                best = std::min(best, sq);
            }
            total += best;
        }
        CHECK(mean_nn_sqdist(q, r) == total / static_cast<double>(nq));
    }
}

TEST_CASE("mean_nn_sqdist is invariant to the thread count") {
    const SampleBag q = random_bag(300, 4, 1);
    const SampleBag r = random_bag(200, 4, 2);
    CHECK(mean_nn_sqdist(q, r, 1) == mean_nn_sqdist(q, r, 4));
}

TEST_CASE("kmeans recovers separated clusters exactly") {
    const SampleBag bag = blobs3(50, 17, 0.01);
    const ClusterAssignment asg = kmeans(bag, 3, 5);
    REQUIRE(asg.cluster_of.size() == bag.size());
    // clusters must coincide with the construction (up to relabeling)
    for (int c = 0; c < 3; ++c) {
        const int rep = asg.cluster_of[static_cast<std::size_t>(c) * 50];
        for (std::size_t i = 0; i < 50; ++i)
            CHECK(asg.cluster_of[static_cast<std::size_t>(c) * 50 + i] == rep);
    }
    // all three clusters used
    std::vector<int> used(asg.cluster_of.begin(), asg.cluster_of.end());
    std::sort(used.begin(), used.end());
    used.erase(std::unique(used.begin(), used.end()), used.end());
    CHECK(used.size() == 3);
}

TEST_CASE("kmeans is deterministic per seed") {
    const SampleBag bag = blobs3(30, 8, 0.05);
    const ClusterAssignment a = kmeans(bag, 3, 42);
    const ClusterAssignment b = kmeans(bag, 3, 42);
    CHECK(a.cluster_of == b.cluster_of);
    CHECK(a.centroids.data == b.centroids.data);
    CHECK(a.wcss == b.wcss);
}

TEST_CASE("kmeans wcss decreases with more clusters on structured data") {
    const SampleBag bag = blobs3(40, 9, 0.08);
    const double w2 = kmeans(bag, 2, 7).wcss;
    const double w3 = kmeans(bag, 3, 7).wcss;
    CHECK(w3 < w2);
}

TEST_CASE("match_clusters_to_classes orders by designated intensity") {
    const SampleBag bag = blobs3(25, 3, 0.01);
    ClusterAssignment asg = kmeans(bag, 3, 11);
    match_clusters_to_classes(asg, bag, 0);
    REQUIRE(asg.class_of_cluster.size() == 3);
    // the assigned class of each sample must match the construction
    for (std::size_t i = 0; i < bag.size(); ++i) {
        const int est =
            asg.class_of_cluster[static_cast<std::size_t>(asg.cluster_of[i])];
        CHECK(est == bag.labels[i]);
    }
}

TEST_CASE("clustering_distance approaches supervised_distance when clustering is exact") {
    const SampleBag source = blobs3(60, 21, 0.015);
    const SampleBag target = blobs3(60, 22, 0.015);
    const TrainedForest f = train_forest(source, 30, 0, 2);
    const double d_clu = clustering_distance(f, target, 0, 77);
    const double d_sup = supervised_distance(f, target);
    CHECK(std::abs(d_clu - d_sup) < 0.01);
}

TEST_CASE("distance_matrix has a zero bag diagonal on identical lists") {
    std::vector<SampleBag> bags;
    for (int i = 0; i < 3; ++i) bags.push_back(random_bag(40, 3, 60 + i));
    std::vector<DistanceSource> sources;
    std::vector<DistanceTarget> targets;
    for (int i = 0; i < 3; ++i) {
        const std::string tag = "img" + std::to_string(i);
        sources.push_back({tag, &bags[static_cast<std::size_t>(i)], nullptr});
        targets.push_back({tag, &bags[static_cast<std::size_t>(i)]});
    }
    DistanceMatrixOptions opts;
    opts.measure = Measure::bag;
    opts.direction = Direction::t2s;
    opts.subsample = 25;
    opts.seed = 5;
    const DistanceMatrix dm = distance_matrix(sources, targets, opts);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(dm.at(i, i) == 0.0);
        for (std::size_t j = 0; j < 3; ++j)
            if (j != i) CHECK(dm.at(i, j) > 0.0);
    }
}

TEST_CASE("distance_matrix subsampling is independent of the entry order") {
    std::vector<SampleBag> bags;
    for (int i = 0; i < 2; ++i) bags.push_back(random_bag(100, 2, 70 + i));
    SampleBag tgt = random_bag(100, 2, 90);
    DistanceMatrixOptions opts;
    opts.measure = Measure::div;
    opts.direction = Direction::avg;
    opts.subsample = 30;
    opts.seed = 8;

    std::vector<DistanceSource> both{{"a", &bags[0], nullptr},
                                     {"b", &bags[1], nullptr}};
    const std::vector<DistanceTarget> targets{{"t", &tgt}};
    const DistanceMatrix full = distance_matrix(both, targets, opts);

    const std::vector<DistanceSource> only_b{{"b", &bags[1], nullptr}};
    const DistanceMatrix partial = distance_matrix(only_b, targets, opts);
    CHECK(full.at(1, 0) == partial.at(0, 0));
}

TEST_CASE("distance_matrix enforces measure-specific preconditions") {
    SampleBag labeled = blobs3(20, 30, 0.02);
    const TrainedForest f = train_forest(labeled, 5, 0, 4);
    SampleBag unlabeled = labeled;
    unlabeled.labels.clear();

    DistanceMatrixOptions opts;
    opts.subsample = 0;
    opts.seed = 2;

    const std::vector<DistanceSource> sources{{"s", &labeled, &f}};

    opts.measure = Measure::sup;
    opts.direction = Direction::t2s;
    const std::vector<DistanceTarget> bad{{"t", &unlabeled}};
    CHECK_THROWS_AS(distance_matrix(sources, bad, opts), InputError);

    opts.direction = Direction::s2t;
    const std::vector<DistanceTarget> good{{"t", &labeled}};
    CHECK_THROWS_AS(distance_matrix(sources, good, opts), InputError);
    opts.measure = Measure::clu;
    CHECK_THROWS_AS(distance_matrix(sources, good, opts), InputError);
}

TEST_CASE("supervised distance_matrix with subsample zero uses every row") {
    SampleBag src = blobs3(30, 40, 0.02);
    const TrainedForest f = train_forest(src, 10, 0, 6);
    SampleBag tgt = blobs3(25, 41, 0.02);
    DistanceMatrixOptions opts;
    opts.measure = Measure::sup;
    opts.direction = Direction::t2s;
    opts.subsample = 0;
    const std::vector<DistanceSource> sources{{"s", &src, &f}};
    const std::vector<DistanceTarget> targets{{"t", &tgt}};
    const DistanceMatrix dm = distance_matrix(sources, targets, opts);
    CHECK(dm.at(0, 0) == supervised_distance(f, tgt));
}
