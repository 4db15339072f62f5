#ifndef SIMFUSE_FEATURES_HPP
#define SIMFUSE_FEATURES_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "simfuse/volume.hpp"

namespace simfuse {

/// Per-task voxel feature definition. For every channel the extracted
/// columns are, in order:
///   [raw intensity, then per scale s: smoothed, gradient magnitude of
///    smoothed, |Laplacian| of smoothed]
/// followed, when include_position is set, by the voxel coordinates
/// normalized to [0,1] by the mask bounding box. Feature count is
/// channels * (1 + 3*scales) + 3*[position].
struct FeatureRecipe {
    std::vector<double> scales_mm;
    bool include_position = false;
    std::vector<std::string> channels;
    int designated_channel = 0;

    int feature_count() const;
    /// Column of the designated channel's raw intensity; this is the
    /// feature used for cluster-to-class matching and FLAIR gating.
    int designated_feature_index() const;
    void validate() const;

    /// Brain-tissue recipe: 1 channel, scales {1,2,3} mm, position on -> 13 features.
    static FeatureRecipe bt();
    /// White-matter-lesion recipe: 3 channels, scales {0.5,1,2} mm, position off -> 30 features.
    static FeatureRecipe wml();
};

/// An image as a set of voxel feature vectors, optionally labeled.
struct SampleBag {
    int n = 0;                     // feature dimensionality
    std::vector<double> features;  // N x n, row-major
    std::vector<int> labels;       // empty when unlabeled
    std::vector<std::string> class_names;
    std::string source_tag;

    std::size_t size() const { return n == 0 ? 0 : features.size() / n; }
    bool labeled() const { return !labels.empty(); }
    const double* row(std::size_t i) const { return features.data() + i * n; }
    double* row(std::size_t i) { return features.data() + i * n; }

    void validate() const;
};

struct FeatureExtraction {
    SampleBag bag;                      // unlabeled
    std::vector<std::size_t> voxel_index; // linear voxel index per row
};

/// Extracts the recipe's features for every masked voxel. Channels must
/// share dims/spacing and are expected to be normalized already.
FeatureExtraction extract_features(const std::vector<Volume>& channels,
                                   const Mask& mask, const FeatureRecipe& recipe);

/// Attaches labels (class index per row) from a label volume to an
/// extraction result.
SampleBag attach_labels(const FeatureExtraction& ext, const Volume& label_volume,
                        const std::vector<std::string>& class_names);

// ---- sampling ------------------------------------------------------------

struct SampleMode {
    enum class Kind { uniform, oversample };
    Kind kind = Kind::uniform;
    int oversample_class = -1;
    double oversample_factor = 1.0;
    /// Optional gate: only rows whose gate_feature exceeds gate_threshold
    /// are eligible (the WML FLAIR > 0.75 restriction).
    bool gated = false;
    int gate_feature = 0;
    double gate_threshold = 0.0;

    static SampleMode uniform();
    static SampleMode oversample(int cls, double factor);
    SampleMode with_gate(int feature, double threshold) const;
};

/// Draws `count` rows from the bag. Without replacement when count does
/// not exceed the eligible rows, otherwise with replacement and a
/// warning. Oversampling makes the named class factor-times more likely
/// per draw. Deterministic per seed. Throws InputError when gating
/// leaves no eligible voxels.
SampleBag sample_bag(const SampleBag& bag, std::size_t count, const SampleMode& mode,
                     std::uint64_t seed);

/// Rows whose `feature` strictly exceeds `threshold`, original order
/// kept. Throws InputError when nothing passes.
SampleBag gate_rows(const SampleBag& bag, int feature, double threshold);

} // namespace simfuse

#endif
