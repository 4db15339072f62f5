#ifndef SIMFUSE_IO_HPP
#define SIMFUSE_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "simfuse/distances.hpp"
#include "simfuse/ensemble.hpp"
#include "simfuse/features.hpp"
#include "simfuse/volume.hpp"

namespace simfuse {

// ---- volumes ---------------------------------------------------------------
// A volume on disk is `<base>.raw` (little-endian float32, x-fastest)
// plus `<base>.hdr`, a sidecar text header with dims, spacing, axis
// order and channel name.

void write_volume(const std::string& base_path, const Volume& v,
                  const std::string& channel_name);
Volume read_volume(const std::string& base_path, std::string* channel_name = nullptr);

void write_mask(const std::string& base_path, const Mask& m);
Mask read_mask(const std::string& base_path);

// ---- bags ------------------------------------------------------------------
// CSV with header f0,...,f{n-1},label; the label column is -1 for
// unlabeled bags. Class names travel in the manifest, not the CSV.

void write_bag_csv(const std::string& path, const SampleBag& bag);
SampleBag read_bag_csv(const std::string& path,
                       const std::vector<std::string>& class_names,
                       const std::string& source_tag);

struct BagManifestEntry {
    std::string tag;
    std::string study;
    std::string bag_path; // relative to the manifest's directory
    int n_features = 0;
    int designated_channel = 0;
    int designated_feature = 0;
    std::vector<std::string> class_names;
};

void write_bag_manifest(const std::string& path,
                        const std::vector<BagManifestEntry>& entries);
std::vector<BagManifestEntry> read_bag_manifest(const std::string& path);

// ---- simulated datasets ------------------------------------------------------

struct DatasetImageEntry {
    std::string tag;
    std::string study;
    std::string subdir; // relative; holds <channel>.raw/.hdr, mask.*, labels.*
    std::vector<std::string> channels;
};

void write_dataset_manifest(const std::string& path,
                            const std::vector<DatasetImageEntry>& entries);
std::vector<DatasetImageEntry> read_dataset_manifest(const std::string& path);

// ---- distance matrices ---------------------------------------------------------

/// CSV with one row per source (first column source_tag, remaining
/// columns one per target) plus a `<path>.meta` sidecar holding
/// measure, direction, seed and subsample count.
void write_distance_matrix(const std::string& path, const DistanceMatrix& dm);
DistanceMatrix read_distance_matrix(const std::string& path);

// ---- weights / predictions ---------------------------------------------------

void write_weights_csv(const std::string& path, const std::vector<std::string>& tags,
                       const WeightVector& wv);
std::vector<std::pair<std::string, double>> read_weights_csv(const std::string& path);

/// Predictions CSV: voxel index, per-class posterior, label.
void write_predictions_csv(const std::string& path,
                           const std::vector<std::size_t>& voxel_index,
                           const RowMatrix& posteriors,
                           const std::vector<int>& labels,
                           const std::vector<std::string>& class_names);
struct Predictions {
    std::vector<std::size_t> voxel_index;
    RowMatrix posteriors;
    std::vector<int> labels;
};
Predictions read_predictions_csv(const std::string& path);

// ---- small helpers ----------------------------------------------------------

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::vector<std::string> split(const std::string& s, char sep);
std::string join(const std::vector<std::string>& parts, const std::string& sep);

} // namespace simfuse

#endif
