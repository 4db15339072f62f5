#ifndef SIMFUSE_FOREST_HPP
#define SIMFUSE_FOREST_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "simfuse/common.hpp"
#include "simfuse/features.hpp"

namespace simfuse {

/// One tree node. Internal nodes carry a split (feature, threshold) and
/// child indices into the tree's node vector; leaves carry the class
/// counts of the bootstrap samples that reached them.
struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<std::uint32_t> counts; // leaves only

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes; // pre-order, root at 0

    /// Index of the leaf the sample falls into. Samples with
    /// x[feature] <= threshold go left.
    int leaf_for(const double* x) const;
};

/// A frozen per-image random forest.
struct TrainedForest {
    std::vector<Tree> trees;
    int n_features = 0;
    std::vector<std::string> class_names;
    std::vector<double> importances; // per feature, sums to 1 when any split exists
    std::uint64_t seed = 0;
    int tree_count = 0;
    int mtry = 0;

    std::size_t n_classes() const { return class_names.size(); }
};

/// Gini impurity 1 - sum p_c^2 of a class-count vector.
double gini_impurity(const std::vector<std::uint32_t>& counts);

/// Trains tree_count trees, each on a bootstrap of the bag (same size,
/// with replacement). At each node mtry features are drawn uniformly
/// without replacement and the best axis-aligned split by decrease in
/// Gini impurity is taken; thresholds sit at midpoints between
/// consecutive distinct sorted values; impurity ties break towards the
/// lowest feature index, then the lowest threshold. Nodes grow until
/// pure (min_leaf = 1, no depth cap). mtry <= 0 selects
/// floor(sqrt(n_features)). Deterministic per seed; trees may train in
/// parallel without affecting the result.
TrainedForest train_forest(const SampleBag& bag, int tree_count = 100, int mtry = 0,
                           std::uint64_t seed = 0, int threads = 1);

/// Per-sample class posteriors: the average over trees of leaf
/// class-count proportions. Rows sum to 1 within 1e-12.
RowMatrix predict_proba(const TrainedForest& forest, const RowMatrix& features,
                        int threads = 1);
RowMatrix predict_proba(const TrainedForest& forest, const SampleBag& bag,
                        int threads = 1);

// ---- persistence ---------------------------------------------------------

/// Versioned text serialization; one record per node in pre-order with
/// explicit child offsets. Round-trips bit-exactly.
std::string serialize_forest(const TrainedForest& forest);
TrainedForest parse_forest(const std::string& text);

void save_forest(const TrainedForest& forest, const std::string& path);
TrainedForest load_forest(const std::string& path);

} // namespace simfuse

#endif
