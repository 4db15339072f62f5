#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "simfuse/common.hpp"
#include "simfuse/config.hpp"
#include "simfuse/distances.hpp"
#include "simfuse/ensemble.hpp"
#include "simfuse/evaluate.hpp"
#include "simfuse/features.hpp"
#include "simfuse/forest.hpp"
#include "simfuse/pipeline.hpp"

namespace py = pybind11;
using namespace simfuse;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

RowMatrix to_matrix(const DoubleArray& arr) {
    if (arr.ndim() != 2)
        throw InputError("expected a 2-d array (samples x features)");
    RowMatrix m(static_cast<std::size_t>(arr.shape(0)),
                static_cast<std::size_t>(arr.shape(1)));
    std::copy(arr.data(), arr.data() + m.data.size(), m.data.begin());
    return m;
}

py::array_t<double> from_matrix(const RowMatrix& m) {
    py::array_t<double> arr({static_cast<py::ssize_t>(m.rows),
                             static_cast<py::ssize_t>(m.cols)});
    std::copy(m.data.begin(), m.data.end(), arr.mutable_data());
    return arr;
}

py::array_t<double> from_vector(const std::vector<double>& v) {
    py::array_t<double> arr(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), arr.mutable_data());
    return arr;
}

py::array_t<int> from_ints(const std::vector<int>& v) {
    py::array_t<int> arr(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), arr.mutable_data());
    return arr;
}

SampleBag make_bag(const DoubleArray& features,
                   const std::optional<std::vector<int>>& labels,
                   std::vector<std::string> class_names) {
    RowMatrix m = to_matrix(features);
    SampleBag bag;
    bag.n = static_cast<int>(m.cols);
    bag.features = std::move(m.data);
    if (labels) bag.labels = *labels;
    bag.class_names = std::move(class_names);
    return bag;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Per-image random forests fused by unsupervised image distances";

    py::register_exception<InputError>(m, "InputError");
    py::register_exception<DegenerateError>(m, "DegenerateError");

    // ---- ensemble weights and fusion --------------------------------

    m.def(
        "compute_weights",
        [](const std::vector<double>& distances, double p) {
            return from_vector(compute_weights(distances, p).weights);
        },
        py::arg("distances"), py::arg("p") = 10.0,
        "Inverse-distance ensemble weights: w_m proportional to "
        "(d_max - d_m)^p, normalized to sum 1.");

    m.def(
        "fuse_posteriors",
        [](const std::vector<DoubleArray>& members,
           const std::vector<double>& weights) {
            std::vector<RowMatrix> mats;
            mats.reserve(members.size());
            for (const auto& a : members) mats.push_back(to_matrix(a));
            return from_matrix(fuse_posteriors(mats, weights));
        },
        py::arg("member_posteriors"), py::arg("weights"),
        "Weighted average of member posterior matrices.");

    m.def(
        "classify_argmax",
        [](const DoubleArray& posteriors) {
            return from_ints(classify_argmax(to_matrix(posteriors)));
        },
        py::arg("posteriors"));

    m.def(
        "classify_threshold",
        [](const DoubleArray& posteriors, int positive_class, double tau) {
            return from_ints(
                classify_threshold(to_matrix(posteriors), positive_class, tau));
        },
        py::arg("posteriors"), py::arg("positive_class"), py::arg("tau"));

    m.def("informed_threshold", &informed_threshold, py::arg("scores"),
          py::arg("k"),
          "The K-th largest score: thresholding at it yields K positives "
          "absent ties.");

    // ---- forests -----------------------------------------------------

    py::class_<TrainedForest>(m, "Forest")
        .def_readonly("n_features", &TrainedForest::n_features)
        .def_readonly("class_names", &TrainedForest::class_names)
        .def_readonly("tree_count", &TrainedForest::tree_count)
        .def_readonly("mtry", &TrainedForest::mtry)
        .def_readonly("seed", &TrainedForest::seed)
        .def_property_readonly(
            "importances",
            [](const TrainedForest& f) { return from_vector(f.importances); })
        .def(
            "predict_proba",
            [](const TrainedForest& f, const DoubleArray& features) {
                return from_matrix(predict_proba(f, to_matrix(features)));
            },
            py::arg("features"))
        .def(
            "predict",
            [](const TrainedForest& f, const DoubleArray& features) {
                return from_ints(
                    classify_argmax(predict_proba(f, to_matrix(features))));
            },
            py::arg("features"))
        .def("to_text", &serialize_forest)
        .def_static("from_text", &parse_forest, py::arg("text"))
        .def("save",
             [](const TrainedForest& f, const std::string& path) {
                 save_forest(f, path);
             },
             py::arg("path"))
        .def_static("load", &load_forest, py::arg("path"));

    m.def(
        "train_forest",
        [](const DoubleArray& features, const std::vector<int>& labels,
           std::vector<std::string> class_names, int trees, int mtry,
           std::uint64_t seed, int threads) {
            if (class_names.empty()) {
                int top = -1;
                for (int l : labels) top = std::max(top, l);
                for (int c = 0; c <= top; ++c)
                    class_names.push_back("class" + std::to_string(c));
            }
            const SampleBag bag =
                make_bag(features, labels, std::move(class_names));
            return train_forest(bag, trees, mtry, seed, threads);
        },
        py::arg("features"), py::arg("labels"),
        py::arg("class_names") = std::vector<std::string>{},
        py::arg("trees") = 100, py::arg("mtry") = 0, py::arg("seed") = 0,
        py::arg("threads") = 1,
        "Trains a random forest on rows of `features` labeled by `labels`.");

    // ---- image-to-image distances -------------------------------------

    m.def("silverman_bandwidth", &silverman_bandwidth, py::arg("dim"),
          py::arg("n_samples"), py::arg("pooled_sd"));

    m.def(
        "mean_nn_sqdist",
        [](const DoubleArray& query, const DoubleArray& reference) {
            return mean_nn_sqdist(make_bag(query, std::nullopt, {}),
                                  make_bag(reference, std::nullopt, {}));
        },
        py::arg("query"), py::arg("reference"),
        "Mean squared Euclidean distance from each query row to its "
        "nearest reference row.");

    m.def(
        "bag_distance",
        [](const DoubleArray& source, const DoubleArray& target,
           const std::string& direction) {
            return bag_distance(make_bag(source, std::nullopt, {}),
                                make_bag(target, std::nullopt, {}),
                                direction_from_string(direction));
        },
        py::arg("source"), py::arg("target"), py::arg("direction") = "t2s");

    m.def(
        "divergence_distance",
        [](const DoubleArray& source, const DoubleArray& target,
           const std::string& direction) {
            return divergence_distance(make_bag(source, std::nullopt, {}),
                                       make_bag(target, std::nullopt, {}),
                                       direction_from_string(direction));
        },
        py::arg("source"), py::arg("target"), py::arg("direction") = "t2s");

    m.def(
        "supervised_distance",
        [](const TrainedForest& forest, const DoubleArray& features,
           const std::vector<int>& labels) {
            return supervised_distance(
                forest, make_bag(features, labels, forest.class_names));
        },
        py::arg("forest"), py::arg("features"), py::arg("labels"),
        "Posterior MSE of the forest against true target labels.");

    m.def(
        "clustering_distance",
        [](const TrainedForest& forest, const DoubleArray& features,
           int designated_feature_index, std::uint64_t seed) {
            return clustering_distance(forest,
                                       make_bag(features, std::nullopt, {}),
                                       designated_feature_index, seed);
        },
        py::arg("forest"), py::arg("features"),
        py::arg("designated_feature_index") = 0, py::arg("seed") = 0,
        "Posterior MSE against k-means labels matched to classes by the "
        "designated intensity feature.");

    // ---- evaluation ----------------------------------------------------

    m.def("error_rate", &error_rate, py::arg("predicted"), py::arg("truth"));
    m.def("spearman", &spearman, py::arg("a"), py::arg("b"));
    m.def("paired_ttest_pvalue", &paired_ttest_pvalue, py::arg("a"),
          py::arg("b"));
    m.def("weight_concentration", &weight_concentration, py::arg("distances"),
          py::arg("p_grid"),
          "Per p: fraction of members holding 90% of the total weight.");
    m.def(
        "aggregate_importance",
        [](const std::vector<std::vector<double>>& members,
           const std::vector<double>& weights) {
            return from_vector(aggregate_importance(members, weights));
        },
        py::arg("member_importances"), py::arg("weights"));

    // ---- pipeline -------------------------------------------------------

    m.def(
        "reproduce",
        [](const std::string& config_path, const std::string& out_dir) {
            EvalReport rep;
            {
                py::gil_scoped_release release;
                const RunConfig cfg = RunConfig::from_file(config_path);
                rep = cmd_reproduce(cfg, out_dir);
            }
            py::dict errors;
            for (const std::string& method : rep.methods)
                errors[py::str(method)] = rep.mean_error(method);
            py::dict out;
            out["methods"] = rep.methods;
            out["targets"] = rep.target_tags;
            out["mean_errors"] = errors;
            return out;
        },
        py::arg("config_path"), py::arg("out_dir"),
        "Runs the full simulate/featurize/train/distance/fuse/evaluate "
        "chain described by a config file; returns the mean error per "
        "method and writes all artifacts under out_dir.");

    m.attr("__version__") = "0.1.0";
}
