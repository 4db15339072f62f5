#include "simfuse/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "simfuse/parallel.hpp"
#include "simfuse/rng.hpp"

namespace simfuse {

int Tree::leaf_for(const double* x) const {
    int i = 0;
    while (!nodes[i].is_leaf())
        i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left
                                                      : nodes[i].right;
    return i;
}

double gini_impurity(const std::vector<std::uint32_t>& counts) {
    double total = 0.0;
    for (auto c : counts) total += c;
    if (total == 0.0) return 0.0;
    double sq = 0.0;
    for (auto c : counts) {
        const double p = c / total;
        sq += p * p;
    }
    return 1.0 - sq;
}

namespace {

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0; // sum_children sum_c counts^2 / n_child (maximized)
};

// Evaluates every midpoint split of one feature over the node's samples.
// `best` is updated only on a strictly better score, so iterating
// features in ascending order and thresholds in ascending value order
// realizes the tie-break (lowest feature, then lowest threshold).
void scan_feature(const SampleBag& bag, const std::vector<std::uint32_t>& rows,
                  int feature, std::size_t n_classes,
                  std::vector<std::pair<double, int>>& scratch, SplitChoice& best) {
    scratch.clear();
    for (auto r : rows)
        scratch.emplace_back(bag.row(r)[feature], bag.labels[r]);
    std::sort(scratch.begin(), scratch.end());

    const std::size_t n = scratch.size();
    std::vector<std::uint32_t> left(n_classes, 0), right(n_classes, 0);
    for (const auto& [v, l] : scratch) right[l]++;
    double sq_left = 0.0, sq_right = 0.0;
    for (auto c : right) sq_right += static_cast<double>(c) * c;

    for (std::size_t i = 0; i + 1 < n; ++i) {
        const int l = scratch[i].second;
        // move sample i from the right partition to the left one,
        // maintaining the sums of squared class counts incrementally
        sq_left += 2.0 * left[l] + 1.0;
        sq_right -= 2.0 * right[l] - 1.0;
        ++left[l];
        --right[l];
        const double a = scratch[i].first;
        const double b = scratch[i + 1].first;
        if (a == b) continue;
        const double nl = static_cast<double>(i + 1);
        const double nr = static_cast<double>(n - i - 1);
        const double score = sq_left / nl + sq_right / nr;
        if (score > best.score || !best.found) {
            double m = a + 0.5 * (b - a);
            if (!(m < b)) m = a; // guard against rounding up to b
            best.found = true;
            best.feature = feature;
            best.threshold = m;
            best.score = score;
        }
    }
}

struct TreeBuilder {
    const SampleBag& bag;
    std::size_t n_classes;
    int mtry;
    Rng& rng;
    Tree tree;
    std::vector<double> importance; // per feature, weighted Gini decrease
    std::vector<int> feature_pool;
    std::vector<std::pair<double, int>> scratch;

    TreeBuilder(const SampleBag& b, std::size_t nc, int m, Rng& r)
        : bag(b), n_classes(nc), mtry(m), rng(r),
          importance(b.n, 0.0) {
        feature_pool.resize(b.n);
        for (int f = 0; f < b.n; ++f) feature_pool[f] = f;
    }

    int build(std::vector<std::uint32_t>& rows) {
        const int idx = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();

        std::vector<std::uint32_t> counts(n_classes, 0);
        for (auto r : rows) counts[bag.labels[r]]++;
        std::size_t present = 0;
        for (auto c : counts) present += c > 0;

        SplitChoice best;
        if (present > 1) {
            // mtry distinct candidate features, evaluated in ascending order
            std::vector<int> cand(static_cast<std::size_t>(mtry));
            for (int i = 0; i < mtry; ++i) {
                const std::size_t j =
                    i + static_cast<std::size_t>(
                            rng.uniform_int(feature_pool.size() - i));
                std::swap(feature_pool[i], feature_pool[j]);
                cand[i] = feature_pool[i];
            }
            std::sort(cand.begin(), cand.end());
            for (int f : cand)
                scan_feature(bag, rows, f, n_classes, scratch, best);
            if (!best.found && mtry < bag.n) {
                // every sampled feature is constant on this node; fall back
                // to the full feature set so growth can still reach purity
                for (int f = 0; f < bag.n; ++f)
                    scan_feature(bag, rows, f, n_classes, scratch, best);
            }
        }

        if (!best.found) {
            tree.nodes[idx].counts = std::move(counts);
            return idx;
        }

        double sq_parent = 0.0;
        for (auto c : counts) sq_parent += static_cast<double>(c) * c;
        importance[best.feature] +=
            best.score - sq_parent / static_cast<double>(rows.size());

        std::vector<std::uint32_t> left_rows, right_rows;
        for (auto r : rows)
            (bag.row(r)[best.feature] <= best.threshold ? left_rows : right_rows)
                .push_back(r);
        rows.clear();
        rows.shrink_to_fit();

        tree.nodes[idx].feature = best.feature;
        tree.nodes[idx].threshold = best.threshold;
        const int left = build(left_rows);
        tree.nodes[idx].left = left;
        const int right = build(right_rows);
        tree.nodes[idx].right = right;
        return idx;
    }
};

} // namespace

TrainedForest train_forest(const SampleBag& bag, int tree_count, int mtry,
                           std::uint64_t seed, int threads) {
    bag.validate();
    if (!bag.labeled()) throw InputError("train_forest needs a labeled bag");
    if (bag.size() < 2) throw InputError("train_forest needs >= 2 samples");
    if (tree_count < 1) throw InputError("tree_count must be >= 1");
    if (mtry <= 0)
        mtry = std::max(1, static_cast<int>(std::floor(std::sqrt(bag.n))));
    mtry = std::min(mtry, bag.n);

    TrainedForest forest;
    forest.n_features = bag.n;
    forest.class_names = bag.class_names;
    forest.seed = seed;
    forest.tree_count = tree_count;
    forest.mtry = mtry;
    forest.trees.resize(tree_count);

    const std::size_t n_rows = bag.size();
    const std::size_t n_classes = bag.class_names.size();
    std::vector<std::vector<double>> per_tree_importance(tree_count);

    parallel_for(static_cast<std::size_t>(tree_count), threads, [&](std::size_t t) {
        Rng rng(derive_seed(seed, t));
        std::vector<std::uint32_t> rows(n_rows);
        for (std::size_t i = 0; i < n_rows; ++i)
            rows[i] = static_cast<std::uint32_t>(rng.uniform_int(n_rows));
        TreeBuilder builder(bag, n_classes, mtry, rng);
        builder.build(rows);
        forest.trees[t] = std::move(builder.tree);
        per_tree_importance[t] = std::move(builder.importance);
    });

    forest.importances.assign(bag.n, 0.0);
    for (const auto& imp : per_tree_importance)
        for (int f = 0; f < bag.n; ++f) forest.importances[f] += imp[f];
    double total = 0.0;
    for (double v : forest.importances) total += v;
    if (total > 0.0)
        for (double& v : forest.importances) v /= total;
    return forest;
}

namespace {

void predict_rows(const TrainedForest& forest, const double* data, std::size_t rows,
                  std::size_t cols, RowMatrix& out, int threads) {
    if (cols != static_cast<std::size_t>(forest.n_features))
        throw InputError("feature count does not match forest");
    if (forest.trees.empty()) throw InputError("empty forest");
    const std::size_t n_classes = forest.n_classes();
    const double inv_trees = 1.0 / static_cast<double>(forest.trees.size());
    parallel_for(rows, threads, [&](std::size_t i) {
        const double* x = data + i * cols;
        double* p = out.row(i);
        for (const auto& tree : forest.trees) {
            const auto& counts = tree.nodes[tree.leaf_for(x)].counts;
            double total = 0.0;
            for (auto c : counts) total += c;
            for (std::size_t c = 0; c < n_classes; ++c)
                p[c] += counts[c] / total;
        }
        for (std::size_t c = 0; c < n_classes; ++c) p[c] *= inv_trees;
    });
}

} // namespace

RowMatrix predict_proba(const TrainedForest& forest, const RowMatrix& features,
                        int threads) {
    RowMatrix out(features.rows, forest.n_classes());
    predict_rows(forest, features.data.data(), features.rows, features.cols, out,
                 threads);
    return out;
}

RowMatrix predict_proba(const TrainedForest& forest, const SampleBag& bag,
                        int threads) {
    RowMatrix out(bag.size(), forest.n_classes());
    predict_rows(forest, bag.features.data(), bag.size(),
                 static_cast<std::size_t>(bag.n), out, threads);
    return out;
}

// ---- persistence -----------------------------------------------------------

std::string serialize_forest(const TrainedForest& forest) {
    for (const auto& name : forest.class_names)
        if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
            throw InputError("class names must be non-empty without whitespace");
    std::ostringstream out;
    out << "simfuse-forest v1\n";
    out << "seed " << forest.seed << "\n";
    out << "tree_count " << forest.tree_count << "\n";
    out << "mtry " << forest.mtry << "\n";
    out << "n_features " << forest.n_features << "\n";
    out << "classes " << forest.class_names.size();
    for (const auto& name : forest.class_names) out << " " << name;
    out << "\n";
    out << "importances";
    for (double v : forest.importances) out << " " << format_double(v);
    out << "\n";
    out << "trees " << forest.trees.size() << "\n";
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
        const auto& tree = forest.trees[t];
        out << "tree " << t << " nodes " << tree.nodes.size() << "\n";
        for (const auto& n : tree.nodes) {
            if (n.is_leaf()) {
                out << "l";
                for (auto c : n.counts) out << " " << c;
                out << "\n";
            } else {
                out << "s " << n.feature << " " << format_double(n.threshold)
                    << " " << n.left << " " << n.right << "\n";
            }
        }
    }
    out << "end\n";
    return out.str();
}

namespace {

[[noreturn]] void bad_forest(const std::string& why) {
    throw InputError("malformed forest file: " + why);
}

std::string next_line(std::istringstream& in, const char* what) {
    std::string line;
    if (!std::getline(in, line)) bad_forest(std::string("missing ") + what);
    return line;
}

} // namespace

TrainedForest parse_forest(const std::string& text) {
    std::istringstream in(text);
    if (next_line(in, "header") != "simfuse-forest v1")
        bad_forest("unknown header/version");

    TrainedForest forest;
    auto expect_kv = [&](const char* key) {
        std::istringstream ls(next_line(in, key));
        std::string k;
        ls >> k;
        if (k != key) bad_forest(std::string("expected ") + key);
        return ls;
    };
    {
        auto ls = expect_kv("seed");
        if (!(ls >> forest.seed)) bad_forest("seed");
    }
    {
        auto ls = expect_kv("tree_count");
        if (!(ls >> forest.tree_count)) bad_forest("tree_count");
    }
    {
        auto ls = expect_kv("mtry");
        if (!(ls >> forest.mtry)) bad_forest("mtry");
    }
    {
        auto ls = expect_kv("n_features");
        if (!(ls >> forest.n_features) || forest.n_features < 1)
            bad_forest("n_features");
    }
    {
        auto ls = expect_kv("classes");
        std::size_t k = 0;
        if (!(ls >> k) || k < 1) bad_forest("classes");
        forest.class_names.resize(k);
        for (auto& name : forest.class_names)
            if (!(ls >> name)) bad_forest("class name");
    }
    {
        auto ls = expect_kv("importances");
        forest.importances.resize(forest.n_features);
        for (auto& v : forest.importances)
            if (!(ls >> v)) bad_forest("importances");
    }
    std::size_t n_trees = 0;
    {
        auto ls = expect_kv("trees");
        if (!(ls >> n_trees)) bad_forest("trees");
    }
    forest.trees.resize(n_trees);
    for (std::size_t t = 0; t < n_trees; ++t) {
        std::istringstream ls(next_line(in, "tree header"));
        std::string word;
        std::size_t id = 0, n_nodes = 0;
        if (!(ls >> word >> id) || word != "tree" || id != t)
            bad_forest("tree header");
        if (!(ls >> word >> n_nodes) || word != "nodes" || n_nodes < 1)
            bad_forest("tree node count");
        auto& tree = forest.trees[t];
        tree.nodes.resize(n_nodes);
        for (std::size_t i = 0; i < n_nodes; ++i) {
            std::istringstream ns(next_line(in, "node"));
            std::string kind;
            if (!(ns >> kind)) bad_forest("node kind");
            auto& node = tree.nodes[i];
            if (kind == "s") {
                if (!(ns >> node.feature >> node.threshold >> node.left >>
                      node.right))
                    bad_forest("split node");
                if (node.feature < 0 || node.feature >= forest.n_features)
                    bad_forest("split feature out of range");
                if (node.left <= static_cast<int>(i) ||
                    node.right <= static_cast<int>(i) ||
                    node.left >= static_cast<int>(n_nodes) ||
                    node.right >= static_cast<int>(n_nodes))
                    bad_forest("child offsets out of range");
            } else if (kind == "l") {
                node.feature = -1;
                node.counts.resize(forest.class_names.size());
                std::uint64_t total = 0;
                for (auto& c : node.counts) {
                    if (!(ns >> c)) bad_forest("leaf counts");
                    total += c;
                }
                if (total == 0) bad_forest("leaf with zero counts");
            } else {
                bad_forest("unknown node kind");
            }
        }
    }
    if (next_line(in, "end marker") != "end") bad_forest("missing end marker");
    return forest;
}

void save_forest(const TrainedForest& forest, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open for writing: " + path);
    const std::string text = serialize_forest(forest);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw InputError("failed to write: " + path);
}

TrainedForest load_forest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_forest(buf.str());
}

} // namespace simfuse
