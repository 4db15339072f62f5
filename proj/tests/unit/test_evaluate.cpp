#include <doctest.h>

#include <cmath>
#include <vector>

#include "simfuse/evaluate.hpp"
#include "simfuse/rng.hpp"

using namespace simfuse;

TEST_CASE("error_rate counts mismatches") {
    CHECK(error_rate({0, 1, 1, 0}, {0, 1, 0, 1}) == 0.5);
    CHECK(error_rate({2, 2, 2}, {2, 2, 2}) == 0.0);
    CHECK(error_rate({1}, {0}) == 1.0);
    CHECK_THROWS_AS(error_rate({0, 1}, {0}), InputError);
    CHECK_THROWS_AS(error_rate({}, {}), InputError);
}

TEST_CASE("weight concentration of uniform weights needs 90% of members") {
    const std::vector<double> d(10, 0.5);
    const auto curve = weight_concentration(d, {1.0, 10.0});
    REQUIRE(curve.size() == 2);
    // with 10 equal weights the cumulative sum hits 0.9 at the ninth
    CHECK(curve[0].second == doctest::Approx(0.9));
    CHECK(curve[1].second == doctest::Approx(0.9));
    CHECK(curve[0].first == 1.0);
    CHECK(curve[1].first == 10.0);
}

TEST_CASE("weight concentration collapses to one member for peaked weights") {
    // d = (1,2,3), p = 10 -> w = (1024/1025, 1/1025, 0): one member
    // already holds 99.9% of the mass
    const auto curve = weight_concentration({1.0, 2.0, 3.0}, {10.0});
    CHECK(curve[0].second == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("weight concentration never increases with p") {
    Rng rng(21);
    std::vector<double> d;
    for (int i = 0; i < 25; ++i) d.push_back(rng.uniform01());
    const std::vector<double> grid{0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0};
    const auto curve = weight_concentration(d, grid);
    for (std::size_t j = 1; j < curve.size(); ++j)
        CHECK(curve[j].second <= curve[j - 1].second);
}

TEST_CASE("spearman matches hand-computed correlations") {
    CHECK(spearman({1, 2, 3}, {1, 3, 2}) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == 1.0);
    CHECK(spearman({1, 2, 3}, {3, 2, 1}) == -1.0);
    // ties get average ranks: a = (1,1,2) -> ranks (1.5, 1.5, 3)
    CHECK(spearman({1, 1, 2}, {1, 2, 3}) ==
          doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-15));
    CHECK(spearman({5, 3, 1, 9}, {0.5, 0.3, 0.1, 0.9}) == 1.0);
}

TEST_CASE("spearman rejects degenerate and malformed input") {
    CHECK_THROWS_AS(spearman({1, 1, 1}, {1, 2, 3}), DegenerateError);
    CHECK_THROWS_AS(spearman({1, 2, 3}, {4, 4, 4}), DegenerateError);
    CHECK_THROWS_AS(spearman({1, 2}, {1, 2, 3}), InputError);
    CHECK_THROWS_AS(spearman({1}, {2}), InputError);
}

TEST_CASE("aggregate_importance is the renormalized weighted mean") {
    const std::vector<std::vector<double>> imps{{0.5, 0.5}, {1.0, 0.0}};
    const auto agg = aggregate_importance(imps, {0.25, 0.75});
    REQUIRE(agg.size() == 2);
    CHECK(agg[0] == doctest::Approx(0.875).epsilon(1e-15));
    CHECK(agg[1] == doctest::Approx(0.125).epsilon(1e-15));
}

TEST_CASE("aggregate_importance renormalizes non-unit weights") {
    const std::vector<std::vector<double>> imps{{0.2, 0.8}, {0.6, 0.4}};
    const auto agg = aggregate_importance(imps, {2.0, 2.0});
    CHECK(agg[0] == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(agg[1] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK_THROWS_AS(aggregate_importance(imps, {1.0}), InputError);
    CHECK_THROWS_AS(
        aggregate_importance({{0.5, 0.5}, {1.0}}, {0.5, 0.5}), InputError);
}

TEST_CASE("paired t-test p-value matches the frozen reference") {
    const std::vector<double> x{0.21, 0.17, 0.25, 0.19, 0.23};
    const std::vector<double> y{0.18, 0.16, 0.21, 0.20, 0.19};
    CHECK(paired_ttest_pvalue(x, y) ==
          doctest::Approx(0.08581037844004437).epsilon(1e-12));
    CHECK(paired_ttest_pvalue(y, x) ==
          doctest::Approx(0.08581037844004437).epsilon(1e-12));
}

TEST_CASE("paired t-test returns 1 on constant differences") {
    CHECK(paired_ttest_pvalue({1.0, 2.0, 3.0}, {0.5, 1.5, 2.5}) == 1.0);
    CHECK(paired_ttest_pvalue({4.0, 4.0}, {4.0, 4.0}) == 1.0);
    CHECK_THROWS_AS(paired_ttest_pvalue({1.0}, {2.0}), InputError);
}

// ---- transfer experiment smoke ------------------------------------------------

namespace {

// Synthetic corpus standing in for featurized volumes: feature 0 carries
// the class signal with a per-study intensity shift, the rest is noise.
std::vector<ExperimentImage> synthetic_corpus() {
    const double shifts[3] = {0.0, 0.15, 0.6};
    std::vector<ExperimentImage> images;
    for (int s = 0; s < 3; ++s) {
        for (int j = 0; j < 2; ++j) {
            ExperimentImage img;
            img.study = "study" + std::to_string(s);
            img.tag = img.study + "_img" + std::to_string(j);
            img.bag.n = 3;
            img.bag.class_names = {"bg", "fg"};
            img.bag.source_tag = img.tag;
            Rng rng(fnv1a64(img.tag));
            for (int i = 0; i < 300; ++i) {
                const int label = i % 2;
                img.bag.features.push_back(shifts[s] + label +
                                           0.25 * rng.normal());
                img.bag.features.push_back(rng.normal());
                img.bag.features.push_back(rng.normal());
                img.bag.labels.push_back(label);
            }
            images.push_back(std::move(img));
        }
    }
    return images;
}

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.measures = {Measure::sup, Measure::bag};
    cfg.directions = {Direction::t2s, Direction::s2t, Direction::avg};
    cfg.tree_count = 8;
    cfg.seed = 17;
    cfg.train_count = 120;
    cfg.eval_count = 200;
    cfg.distance_count = 80;
    cfg.target_study = "study0";
    cfg.feature_names = {"signal", "noise1", "noise2"};
    return cfg;
}

} // namespace

TEST_CASE("transfer_experiment produces a fully shaped report") {
    const auto images = synthetic_corpus();
    const ExperimentConfig cfg = small_config();
    const EvalReport report = transfer_experiment(images, cfg);

    const std::vector<std::string> want{"all",     "uni",     "sup_t2s",
                                        "bag_t2s", "bag_s2t", "bag_avg"};
    CHECK(report.methods == want);
    CHECK(report.target_tags ==
          std::vector<std::string>{"study0_img0", "study0_img1"});
    CHECK(report.errors.rows == 2);
    CHECK(report.errors.cols == want.size());
    for (double e : report.errors.data) {
        CHECK(e >= 0.0);
        CHECK(e <= 1.0);
    }
    // informative feature dominates the aggregated importances
    REQUIRE(report.importances.count("different_study") == 1);
    const auto& imp = report.importances.at("different_study");
    REQUIRE(imp.size() == 3);
    CHECK(imp[0] > 0.5);
    // one concentration curve per distance-based method
    CHECK(report.concentration.size() == 4);
    for (const auto& [method, fractions] : report.concentration) {
        CHECK(report.method_index(method) >= 2);
        CHECK(fractions.size() == report.p_grid.size());
    }
    // spearman rows cover every unsupervised method
    REQUIRE(report.spearman_rows.size() == 3);
    for (const auto& row : report.spearman_rows) {
        CHECK(row.method.rfind("bag_", 0) == 0);
        CHECK(row.per_target.size() == 2);
        CHECK(std::abs(row.average) <= 1.0 + 1e-12);
    }
    CHECK(report.method_index("uni") == 1);
    CHECK_THROWS_AS(report.method_index("nope"), InputError);
    const auto [mean0, sd0] = report.study_stats("uni", "study0");
    CHECK(mean0 == doctest::Approx(report.mean_error("uni")));
    CHECK(sd0 >= 0.0);
}

TEST_CASE("transfer_experiment is deterministic and fills artifacts") {
    const auto images = synthetic_corpus();
    const ExperimentConfig cfg = small_config();
    ExperimentArtifacts art;
    const EvalReport a = transfer_experiment(images, cfg, &art);
    const EvalReport b = transfer_experiment(images, cfg);
    CHECK(a.errors.data == b.errors.data);

    CHECK(art.image_tags.size() == images.size());
    CHECK(art.forests.size() == images.size());
    CHECK(art.has_pooled);
    CHECK(art.pooled.trees.size() == 8);
    CHECK(art.source_tags.size() == 4); // two studies of two images each
    CHECK(art.matrix_methods ==
          std::vector<std::string>{"sup_t2s", "bag_t2s", "bag_s2t", "bag_avg"});
    REQUIRE(art.matrices.size() == 4);
    for (const auto& mat : art.matrices) {
        CHECK(mat.source_tags == art.source_tags);
        CHECK(mat.target_tags == a.target_tags);
    }
    REQUIRE(art.eval_truth.size() == 2);
    for (const auto& truth : art.eval_truth)
        CHECK(truth.size() == cfg.eval_count);
    REQUIRE(art.weights.size() == 2);
    REQUIRE(art.posteriors.size() == 2);
    for (std::size_t z = 0; z < 2; ++z) {
        CHECK(art.weights[z].size() == 4);
        for (const auto& wv : art.weights[z]) {
            CHECK(wv.weights.size() == 4);
            double total = 0.0;
            for (double w : wv.weights) total += w;
            CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
        }
        CHECK(art.posteriors[z].size() == a.methods.size());
        for (const auto& post : art.posteriors[z]) {
            CHECK(post.rows == cfg.eval_count);
            CHECK(post.cols == 2);
        }
    }

    // fused posteriors argmax-ed must reproduce the reported errors
    for (std::size_t z = 0; z < 2; ++z)
        for (std::size_t c = 0; c < a.methods.size(); ++c)
            CHECK(error_rate(classify_argmax(art.posteriors[z][c]),
                             art.eval_truth[z]) == a.errors.at(z, c));
}

TEST_CASE("transfer_experiment weights favour the closer study") {
    // study1 sits much nearer study0 than study2 does, so its two
    // forests should take nearly all supervised weight
    const auto images = synthetic_corpus();
    ExperimentConfig cfg = small_config();
    ExperimentArtifacts art;
    transfer_experiment(images, cfg, &art);
    for (std::size_t z = 0; z < art.weights.size(); ++z) {
        const WeightVector& sup = art.weights[z][0];
        REQUIRE(sup.measure == Measure::sup);
        // sources are study1_img0, study1_img1, study2_img0, study2_img1
        CHECK(sup.weights[0] + sup.weights[1] > 0.95);
    }
}

TEST_CASE("transfer_experiment rejects malformed corpora") {
    auto images = synthetic_corpus();
    ExperimentConfig cfg = small_config();
    cfg.target_study = "study9";
    CHECK_THROWS_AS(transfer_experiment(images, cfg), InputError);
    cfg = small_config();
    images[0].bag.labels.clear();
    CHECK_THROWS_AS(transfer_experiment(images, cfg), InputError);
}
