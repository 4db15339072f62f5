#ifndef SIMFUSE_PIPELINE_HPP
#define SIMFUSE_PIPELINE_HPP

#include <string>
#include <vector>

#include "simfuse/config.hpp"
#include "simfuse/evaluate.hpp"
#include "simfuse/io.hpp"

namespace simfuse {

/// Simulates studies x images phantom volumes with per-study scanner
/// profiles into out_dir (volumes, masks, labels, manifest, config
/// snapshot). Deterministic per config seed.
void cmd_simulate(const RunConfig& cfg, const std::string& out_dir);

/// Normalizes each image's channels, extracts the task's features and
/// writes one labeled bag CSV per image plus the bag manifest.
void cmd_featurize(const std::string& dataset_dir, const RunConfig& cfg,
                   const std::string& out_dir);

/// Trains one forest per manifest image on a sampled training bag and
/// persists it. Images whose forest file already exists are skipped, so
/// adding images never retrains existing ones.
void cmd_train(const std::string& bags_dir, const RunConfig& cfg,
               const std::string& out_dir);

/// Computes the measure/direction distance matrix from every manifest
/// image (sources) to every target-manifest image and writes the CSV,
/// its metadata sidecar and a per-measure timing file.
void cmd_distance(const std::string& bags_dir, const std::string& models_dir,
                  const std::string& target_bags_dir, const RunConfig& cfg,
                  Measure measure, Direction direction, const std::string& out_dir);

struct PredictOptions {
    std::string weights_csv;   // either a precomputed weight file...
    bool use_distances = false; // ...or distances computed on the fly
    Measure measure = Measure::bag;
    Direction direction = Direction::t2s;
    long informed_k = -1; // >= 0 switches to the informed threshold
};

/// Fuses the per-image forests over one target bag and writes the
/// predictions CSV (voxel index, per-class posteriors, label).
void cmd_predict(const std::string& bags_dir, const std::string& models_dir,
                 const std::string& target_bag_csv, const RunConfig& cfg,
                 const PredictOptions& opts, const std::string& out_csv);

/// Compares a predictions CSV against the labeled truth bag and writes
/// a small report (error rate, per-class confusion).
double cmd_evaluate(const std::string& predictions_csv, const std::string& truth_bag_csv,
                    const std::vector<std::string>& class_names,
                    const std::string& out_dir);

/// Full pipeline: simulate -> featurize -> train -> distances ->
/// predict -> evaluate, then the report directory. Returns the report.
EvalReport cmd_reproduce(const RunConfig& cfg, const std::string& out_dir);

/// Loads the bags named by a bag manifest into experiment images.
std::vector<ExperimentImage> load_experiment_images(const std::string& bags_dir);

/// Experiment settings derived from a run config.
ExperimentConfig experiment_config(const RunConfig& cfg);

} // namespace simfuse

#endif
