#ifndef SIMFUSE_CONFIG_HPP
#define SIMFUSE_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "simfuse/distances.hpp"
#include "simfuse/features.hpp"
#include "simfuse/phantom.hpp"

namespace simfuse {

/// Flat key-value configuration text. `key = value` lines, `#` comments,
/// and TOML-style `[table]` headers that prefix subsequent keys as
/// `table.key`. Unknown keys are rejected by RunConfig::from_map.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> parse_config_file(const std::string& path);

/// Everything one run needs. The raw snapshot travels with the config
/// and is copied verbatim into every output directory.
struct RunConfig {
    std::string task = "bt"; // bt | wml | custom
    FeatureRecipe recipe = FeatureRecipe::bt();
    int tree_count = 100;
    int mtry = 0; // 0 -> floor(sqrt(n))
    double p = 10.0;
    std::vector<Measure> measures{Measure::sup, Measure::bag};
    std::vector<Direction> directions{Direction::t2s, Direction::s2t, Direction::avg};
    std::uint64_t seed = 0;
    int threads = 1;
    std::size_t train_count = 10000;
    std::size_t eval_count = 50000;
    std::size_t distance_count = 2000;
    double gate_threshold = 0.75;    // active for wml only
    double oversample_factor = 10.0; // active for wml only
    std::vector<double> p_grid{1, 2, 5, 10, 20, 50};
    bool pooled_baseline = true;

    // simulation
    int studies = 3;
    int images_per_study = 4;
    Dims dims{48, 48, 48};
    Spacing spacing{1.0, 1.0, 1.0};
    double lesion_fraction = 0.0; // default 0.02 for wml
    int target_study = 0;
    /// Per-study profile overrides, keyed `study<k>.<field>`.
    std::map<std::string, std::string> profile_overrides;

    std::string snapshot; // verbatim config text

    static RunConfig defaults_for_task(const std::string& task);
    static RunConfig from_map(const std::map<std::string, std::string>& kv,
                              const std::string& snapshot);
    static RunConfig from_file(const std::string& path);

    bool is_wml() const { return task == "wml"; }
    /// Task class names (ascending designated-channel intensity).
    std::vector<std::string> class_names() const;
    /// Gate/oversample settings as sampling modes. Training oversamples
    /// the positive (last) class for wml; evaluation and distance
    /// sampling stay uniform; the intensity gate applies to all three.
    SampleMode train_sample_mode() const;
    SampleMode eval_sample_mode() const;
    SampleMode distance_sample_mode() const;

    /// Scanner profile of study k: study 0 is the reference, study 1 a
    /// close variant, study 2 a strongly shifted scanner, further
    /// studies medium random shifts. Overrides from the config file
    /// apply on top. Deterministic in (seed, k).
    ScannerProfile study_profile(int k) const;
    /// Phantom geometry for the task (3 tissue shells; lesion blobs for
    /// wml), with the study's prior_shift applied to shell fractions.
    PhantomSpec phantom_spec(int study) const;

    std::string study_name(int k) const;
};

} // namespace simfuse

#endif
