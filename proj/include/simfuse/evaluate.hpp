#ifndef SIMFUSE_EVALUATE_HPP
#define SIMFUSE_EVALUATE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "simfuse/ensemble.hpp"

namespace simfuse {

/// Fraction of mismatched labels, in [0, 1].
double error_rate(const std::vector<int>& predicted, const std::vector<int>& truth);

/// For each p: the fraction of classifiers that receives 90% of the
/// total weight (smallest count of descending-sorted weights whose
/// cumulative sum reaches 0.9, divided by M).
std::vector<std::pair<double, double>> weight_concentration(
    const std::vector<double>& distances, const std::vector<double>& p_grid);

/// Spearman rank correlation: Pearson correlation of ranks with ties
/// assigned average ranks. Throws DegenerateError when either column
/// has zero rank variance.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

/// Weighted average of member feature importances, renormalized to sum 1.
std::vector<double> aggregate_importance(
    const std::vector<std::vector<double>>& member_importances,
    const std::vector<double>& weights);

/// Two-sided paired t-test p-value for the difference of two error
/// columns. Returns 1 when the differences have zero variance.
double paired_ttest_pvalue(const std::vector<double>& a, const std::vector<double>& b);

// ---- transfer experiment ---------------------------------------------------

/// One image of the experiment corpus: the full labeled bag extracted
/// from a simulated (or otherwise obtained) volume.
struct ExperimentImage {
    std::string tag;
    std::string study;
    SampleBag bag;
};

struct ExperimentConfig {
    std::vector<Measure> measures{Measure::sup, Measure::bag};
    std::vector<Direction> directions{Direction::t2s, Direction::s2t, Direction::avg};
    double p = 10.0;
    int tree_count = 100;
    int mtry = 0;
    std::uint64_t seed = 0;
    int threads = 1;
    std::size_t train_count = 10000;
    std::size_t eval_count = 50000;
    std::size_t distance_count = 2000;
    /// Train-time oversampling of the positive class (WML); factor 1
    /// disables it. The positive class is the last one.
    double oversample_factor = 1.0;
    /// FLAIR-style gate on the designated intensity feature; negative
    /// disables gating.
    double gate_threshold = -1.0;
    int designated_feature_index = 0;
    /// Study whose images are the prediction targets; sources are all
    /// images of the other studies (the different-study protocol).
    std::string target_study;
    bool pooled_baseline = true;
    std::vector<double> p_grid{1, 2, 5, 10, 20, 50};
    std::vector<std::string> feature_names;
};

struct SpearmanRow {
    std::string method; // e.g. "bag_t2s"
    std::vector<double> per_target;
    double average = 0.0;
};

struct EvalReport {
    std::vector<std::string> target_tags;
    std::vector<std::string> target_studies;
    std::vector<std::string> methods; // column order of `errors`
    RowMatrix errors;                 // targets x methods
    std::vector<double> p_grid;
    /// Mean 90%-weight fraction over targets, per distance-based method.
    std::map<std::string, std::vector<double>> concentration;
    std::vector<SpearmanRow> spearman_rows;
    std::vector<std::string> feature_names;
    /// Strategy -> aggregated per-feature importances.
    std::map<std::string, std::vector<double>> importances;
    std::vector<std::pair<std::string, double>> timings_s;

    int method_index(const std::string& name) const;
    double mean_error(const std::string& method) const;
    /// Mean and sample standard deviation over the report's targets.
    std::pair<double, double> study_stats(const std::string& method,
                                          const std::string& study) const;
};

/// Everything the experiment computed beyond the report, for callers
/// that persist the artifact chain (models, matrices, weights, fused
/// predictions). Indices follow the report's target/method order.
struct ExperimentArtifacts {
    std::vector<std::string> image_tags; // forest order, all images
    std::vector<TrainedForest> forests;
    bool has_pooled = false;
    TrainedForest pooled;
    std::vector<std::string> source_tags; // fusion member order
    std::vector<std::string> matrix_methods;
    std::vector<DistanceMatrix> matrices;
    std::vector<std::vector<int>> eval_truth;        // [target][row]
    std::vector<std::vector<WeightVector>> weights;  // [target][matrix method]
    std::vector<std::vector<RowMatrix>> posteriors;  // [target][report method]
};

/// Leave-one-image-out transfer experiment over the target study:
/// trains one forest per image (once), computes the requested distance
/// matrices from the different-study sources to each target, fuses with
/// margin-power weights, and evaluates the misclassified-voxel fraction.
/// Also trains the pooled single forest on all source voxels ("all")
/// and the uniform-weight ensemble ("uni"). Deterministic per seed.
EvalReport transfer_experiment(const std::vector<ExperimentImage>& images,
                               const ExperimentConfig& cfg,
                               ExperimentArtifacts* artifacts = nullptr);

/// Emits report.csv, summary.csv, concentration.csv, spearman.csv,
/// importance_<strategy>.csv and timings.csv into `dir`, plus the
/// verbatim config snapshot when non-empty.
void write_report(const EvalReport& report, const std::string& dir,
                  const std::string& config_snapshot);

} // namespace simfuse

#endif
