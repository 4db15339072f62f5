#include "simfuse/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace simfuse {

WeightVector compute_weights(const std::vector<double>& distances, double p) {
    if (distances.empty()) throw InputError("compute_weights needs >= 1 distance");
    if (!(p >= 0.0)) throw InputError("p must be >= 0");
    for (double d : distances)
        if (!std::isfinite(d)) throw InputError("non-finite distance");

    WeightVector out;
    out.p = p;
    const std::size_t M = distances.size();
    out.weights.assign(M, 0.0);

    const double d_max = *std::max_element(distances.begin(), distances.end());
    double a_max = 0.0;
    for (double d : distances) a_max = std::max(a_max, d_max - d);

    if (p == 0.0 || a_max == 0.0) {
        // p = 0 flattens Eq-style weights; all-equal distances leave
        // nothing to rank — both fall back to uniform
        std::fill(out.weights.begin(), out.weights.end(), 1.0 / M);
        return out;
    }

    double sum = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        // scaling by the largest gap keeps pow() in range for large p
        out.weights[m] = std::pow((d_max - distances[m]) / a_max, p);
        sum += out.weights[m];
    }
    for (double& w : out.weights) w /= sum;
    return out;
}

namespace {

void check_weights(const std::vector<double>& weights) {
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw InputError("weights must be >= 0");
        sum += w;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
        throw InputError("weights must sum to 1");
}

} // namespace

RowMatrix fuse(const std::vector<const TrainedForest*>& forests,
               const std::vector<double>& weights, const RowMatrix& features,
               int threads) {
    if (forests.empty() || forests.size() != weights.size())
        throw InputError("forest/weight count mismatch");
    check_weights(weights);
    const std::size_t C = forests[0]->n_classes();
    for (const auto* f : forests) {
        if (!f) throw InputError("null forest");
        if (f->n_classes() != C) throw InputError("forests disagree on classes");
    }

    RowMatrix acc(features.rows, C);
    for (std::size_t m = 0; m < forests.size(); ++m) {
        if (weights[m] == 0.0) continue; // zero weight cannot change the sum
        const RowMatrix p = predict_proba(*forests[m], features, threads);
        const double w = weights[m];
        for (std::size_t i = 0; i < acc.data.size(); ++i)
            acc.data[i] += w * p.data[i];
    }
    return acc;
}

RowMatrix fuse_posteriors(const std::vector<RowMatrix>& member_posteriors,
                          const std::vector<double>& weights) {
    if (member_posteriors.empty() || member_posteriors.size() != weights.size())
        throw InputError("posterior/weight count mismatch");
    check_weights(weights);
    const std::size_t rows = member_posteriors[0].rows;
    const std::size_t cols = member_posteriors[0].cols;
    RowMatrix acc(rows, cols);
    for (std::size_t m = 0; m < member_posteriors.size(); ++m) {
        const auto& p = member_posteriors[m];
        if (p.rows != rows || p.cols != cols)
            throw InputError("member posterior shape mismatch");
        const double w = weights[m];
        if (w == 0.0) continue;
        for (std::size_t i = 0; i < acc.data.size(); ++i)
            acc.data[i] += w * p.data[i];
    }
    return acc;
}

std::vector<int> classify_argmax(const RowMatrix& posteriors) {
    if (posteriors.cols == 0) throw InputError("empty posterior matrix");
    std::vector<int> labels(posteriors.rows);
    for (std::size_t i = 0; i < posteriors.rows; ++i) {
        const double* p = posteriors.row(i);
        int best = 0;
        for (std::size_t c = 1; c < posteriors.cols; ++c)
            if (p[c] > p[best]) best = static_cast<int>(c);
        labels[i] = best;
    }
    return labels;
}

std::vector<int> classify_threshold(const RowMatrix& posteriors, int positive_class,
                                    double tau) {
    if (posteriors.cols != 2)
        throw InputError("threshold classification is binary only");
    if (positive_class < 0 || positive_class > 1)
        throw InputError("positive class out of range");
    const int negative_class = 1 - positive_class;
    std::vector<int> labels(posteriors.rows);
    for (std::size_t i = 0; i < posteriors.rows; ++i)
        labels[i] = posteriors.at(i, positive_class) >= tau ? positive_class
                                                            : negative_class;
    return labels;
}

double informed_threshold(const std::vector<double>& positive_posteriors,
                          std::size_t K) {
    if (K == 0) return std::numeric_limits<double>::infinity();
    if (K > positive_posteriors.size())
        throw InputError("K exceeds sample count");
    std::vector<double> sorted = positive_posteriors;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    return sorted[K - 1];
}

} // namespace simfuse
