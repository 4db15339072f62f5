#ifndef SIMFUSE_ENSEMBLE_HPP
#define SIMFUSE_ENSEMBLE_HPP

#include <string>
#include <vector>

#include "simfuse/distances.hpp"
#include "simfuse/forest.hpp"

namespace simfuse {

struct WeightVector {
    std::vector<double> weights; // length M, >= 0, sums to 1
    double p = 10.0;
    Measure measure = Measure::bag;
    Direction direction = Direction::t2s;
    std::string target_tag;
};

/// Eq-style inverse-distance weights: w_m proportional to
/// (d_max - d_m)^p, normalized to sum 1. All-equal distances or p = 0
/// fall back to uniform weights. Invariant under positive affine
/// transforms of the distance vector.
WeightVector compute_weights(const std::vector<double>& distances, double p);

/// Weighted average of member posteriors, sum_m w_m * P_m. With weights
/// summing to 1 the rows remain a probability distribution.
RowMatrix fuse(const std::vector<const TrainedForest*>& forests,
               const std::vector<double>& weights, const RowMatrix& features,
               int threads = 1);

/// Fuses precomputed member posteriors (M matrices of shape N x C).
RowMatrix fuse_posteriors(const std::vector<RowMatrix>& member_posteriors,
                          const std::vector<double>& weights);

/// Argmax labels; exact ties break towards the lowest class index.
std::vector<int> classify_argmax(const RowMatrix& posteriors);

/// Binary thresholding: the positive class is assigned iff its
/// posterior >= tau. Throws InputError for more than two classes.
std::vector<int> classify_threshold(const RowMatrix& posteriors, int positive_class,
                                    double tau);

/// Threshold such that labeling posteriors >= tau yields (absent ties
/// at tau) exactly K positives: the K-th largest posterior. K = 0
/// returns +infinity (no positives). Throws InputError when K > N.
double informed_threshold(const std::vector<double>& positive_posteriors,
                          std::size_t K);

} // namespace simfuse

#endif
