#ifndef SIMFUSE_DISTANCES_HPP
#define SIMFUSE_DISTANCES_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "simfuse/forest.hpp"

namespace simfuse {

/// Direction of an asymmetric distance. t2s evaluates target samples
/// against the source reference, s2t swaps the roles, avg is the
/// arithmetic mean of both directed values.
enum class Direction { t2s, s2t, avg };

enum class Measure { sup, clu, div, bag };

std::string to_string(Direction d);
std::string to_string(Measure m);
Direction direction_from_string(const std::string& s);
Measure measure_from_string(const std::string& s);

// ---- posterior MSE (supervised / clustering core) -------------------------

/// Mean over rows of (1 - posterior assigned to the row's label)^2.
double posterior_mse(const RowMatrix& posteriors, const std::vector<int>& labels);

/// Posterior MSE of the forest against the target's true labels; in [0,1].
double supervised_distance(const TrainedForest& forest, const SampleBag& target,
                           int threads = 1);

// ---- k-means ---------------------------------------------------------------

struct ClusterAssignment {
    std::vector<int> cluster_of;     // per sample
    RowMatrix centroids;             // k x n
    std::vector<int> class_of_cluster; // empty until matched to classes
    double wcss = 0.0;
};

/// Lloyd iterations to an assignment fixpoint (300-iteration cap).
/// Seeding: first center drawn uniformly, remaining centers by greedy
/// farthest-point; 5 restarts keep the lowest within-cluster sum of
/// squares. Empty clusters are reseeded to the farthest point.
/// Deterministic per seed.
ClusterAssignment kmeans(const SampleBag& bag, int k, std::uint64_t seed);

/// Orders clusters by ascending mean of the designated intensity
/// feature and assigns class indices 0..k-1 in that order (classes are
/// declared in ascending designated-intensity order). Exact ties break
/// by cluster index with a warning.
void match_clusters_to_classes(ClusterAssignment& assignment, const SampleBag& bag,
                               int designated_feature_index);

/// Posterior MSE against cluster-estimated labels: runs kmeans with
/// k = the forest's class count, matches clusters to classes by the
/// designated intensity, then scores the forest posteriors; in [0,1].
double clustering_distance(const TrainedForest& forest, const SampleBag& target,
                           int designated_feature_index, std::uint64_t seed,
                           int threads = 1);

// ---- KDE / divergence ------------------------------------------------------

/// Isotropic Gaussian KDE over the source samples with Silverman
/// bandwidth (4/(d+2))^(1/(d+4)) * N^(-1/(d+4)) * sigma, where sigma is
/// the pooled per-dimension sample standard deviation.
struct KdeModel {
    std::vector<double> support; // N x d, row-major
    std::size_t n_samples = 0;
    int dim = 0;
    double bandwidth = 0.0;
    double pooled_sd = 0.0;
};

double silverman_bandwidth(int dim, std::size_t n_samples, double pooled_sd);

/// Throws DegenerateError on zero-variance sources; requires N >= 2.
KdeModel kde_fit(const SampleBag& source);

/// Log density at a query point via log-sum-exp over all kernels,
/// including the full normalization (2 pi h^2)^(-d/2) / N.
double kde_log_density(const KdeModel& model, const double* query);

/// Mean over the bag's rows of -log density under the model.
double divergence_from_model(const KdeModel& model, const SampleBag& bag,
                             int threads = 1);

/// Cross-entropy divergence distance. t2s: mean over target points of
/// -log P_source; s2t swaps roles; avg is their mean. May be negative
/// in dense low-dimensional regimes.
double divergence_distance(const SampleBag& source, const SampleBag& target,
                           Direction direction, int threads = 1);

// ---- bag distance ------------------------------------------------------------

/// Mean over query points of the squared Euclidean distance to the
/// nearest reference point (exact brute force).
double mean_nn_sqdist(const SampleBag& query, const SampleBag& reference,
                      int threads = 1);

/// t2s: target points matched to nearest source points; s2t swaps
/// roles; avg is their mean. Always >= 0; zero iff every query point
/// coincides with a reference point.
double bag_distance(const SampleBag& source, const SampleBag& target,
                    Direction direction, int threads = 1);

// ---- distance matrices -------------------------------------------------------

struct DistanceRecord {
    std::string source_tag;
    std::string target_tag;
    Measure measure = Measure::bag;
    Direction direction = Direction::t2s;
    double value = 0.0;
};

struct DistanceMatrix {
    std::vector<std::string> source_tags;
    std::vector<std::string> target_tags;
    std::vector<double> values; // M x Z, row-major (rows = sources)
    Measure measure = Measure::bag;
    Direction direction = Direction::t2s;
    std::uint64_t seed = 0;
    std::size_t subsample = 0;

    double at(std::size_t m, std::size_t z) const {
        return values[m * target_tags.size() + z];
    }
    /// Distances of every source to target column z.
    std::vector<double> column(std::size_t z) const;
};

/// Inputs of one source image: the bag backs div/bag measures, the
/// forest backs sup/clu. Either may be null when unused.
struct DistanceSource {
    std::string tag;
    const SampleBag* bag = nullptr;
    const TrainedForest* forest = nullptr;
};

struct DistanceTarget {
    std::string tag;
    const SampleBag* bag = nullptr;
};

struct DistanceMatrixOptions {
    Measure measure = Measure::bag;
    Direction direction = Direction::t2s;
    /// Uniform random per-image subsample applied before any pairwise
    /// computation; 0 disables subsampling.
    std::size_t subsample = 2000;
    std::uint64_t seed = 0;
    int threads = 1;
    /// Designated intensity feature for the clu measure.
    int designated_feature_index = 0;
};

/// M x Z distance matrix. Each bag is subsampled once (seed derived from
/// its tag), so entries are independent of processing order. sup
/// requires labeled targets; sup/clu accept only the t2s direction.
DistanceMatrix distance_matrix(const std::vector<DistanceSource>& sources,
                               const std::vector<DistanceTarget>& targets,
                               const DistanceMatrixOptions& opts);

} // namespace simfuse

#endif
