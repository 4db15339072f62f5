#include "simfuse/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "simfuse/io.hpp"
#include "simfuse/rng.hpp"

namespace simfuse {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

} // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line, prefix;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw InputError("config line " + std::to_string(lineno) +
                                 ": unterminated table header");
            prefix = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw InputError("config line " + std::to_string(lineno) +
                             ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw InputError("config line " + std::to_string(lineno) + ": empty key");
        if (!prefix.empty()) key = prefix + "." + key;
        kv[key] = value; // last occurrence wins
    }
    return kv;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    return parse_config_text(read_text_file(path));
}

// ---- value parsing -----------------------------------------------------------

namespace {

double parse_double(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0')
        throw InputError("config key '" + key + "': bad number '" + value + "'");
    return v;
}

long long parse_int(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(value, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != value.size())
        throw InputError("config key '" + key + "': bad integer '" + value + "'");
    return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    std::uint64_t v = 0;
    try {
        v = std::stoull(value, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != value.size())
        throw InputError("config key '" + key + "': bad integer '" + value + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "yes") return true;
    if (value == "0" || value == "false" || value == "no") return false;
    throw InputError("config key '" + key + "': bad boolean '" + value + "'");
}

std::vector<std::string> parse_list(const std::string& value) {
    std::vector<std::string> out;
    for (const auto& part : split(value, ',')) {
        const std::string p = trim(part);
        if (!p.empty()) out.push_back(p);
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& key,
                                      const std::string& value) {
    std::vector<double> out;
    for (const auto& p : parse_list(value)) out.push_back(parse_double(key, p));
    return out;
}

bool starts_with_study_prefix(const std::string& key) {
    if (key.rfind("study", 0) != 0) return false;
    std::size_t i = 5;
    if (i >= key.size() || !std::isdigit(static_cast<unsigned char>(key[i])))
        return false;
    while (i < key.size() && std::isdigit(static_cast<unsigned char>(key[i]))) ++i;
    return i < key.size() && key[i] == '.';
}

} // namespace

// ---- RunConfig ------------------------------------------------------------------

RunConfig RunConfig::defaults_for_task(const std::string& task) {
    RunConfig cfg;
    cfg.task = task;
    if (task == "bt" || task == "custom") {
        cfg.recipe = FeatureRecipe::bt();
        cfg.lesion_fraction = 0.0;
    } else if (task == "wml") {
        cfg.recipe = FeatureRecipe::wml();
        cfg.lesion_fraction = 0.02;
        cfg.gate_threshold = 0.75;
        cfg.oversample_factor = 10.0;
    } else {
        throw InputError("unknown task '" + task + "' (expected bt|wml|custom)");
    }
    return cfg;
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& kv,
                              const std::string& snapshot) {
    std::string task = "bt";
    if (auto it = kv.find("task"); it != kv.end()) task = it->second;
    RunConfig cfg = defaults_for_task(task);
    cfg.snapshot = snapshot;

    for (const auto& [key, value] : kv) {
        if (key == "task") {
            // handled above
        } else if (key == "trees") {
            cfg.tree_count = static_cast<int>(parse_int(key, value));
        } else if (key == "mtry") {
            cfg.mtry = static_cast<int>(parse_int(key, value));
        } else if (key == "p") {
            cfg.p = parse_double(key, value);
        } else if (key == "measures") {
            cfg.measures.clear();
            for (const auto& m : parse_list(value))
                cfg.measures.push_back(measure_from_string(m));
        } else if (key == "directions") {
            cfg.directions.clear();
            for (const auto& d : parse_list(value))
                cfg.directions.push_back(direction_from_string(d));
        } else if (key == "seed") {
            cfg.seed = parse_u64(key, value);
        } else if (key == "threads") {
            cfg.threads = static_cast<int>(parse_int(key, value));
        } else if (key == "train_count") {
            cfg.train_count = static_cast<std::size_t>(parse_int(key, value));
        } else if (key == "eval_count") {
            cfg.eval_count = static_cast<std::size_t>(parse_int(key, value));
        } else if (key == "distance_count") {
            cfg.distance_count = static_cast<std::size_t>(parse_int(key, value));
        } else if (key == "gate_threshold") {
            cfg.gate_threshold = parse_double(key, value);
        } else if (key == "oversample_factor") {
            cfg.oversample_factor = parse_double(key, value);
        } else if (key == "p_grid") {
            cfg.p_grid = parse_double_list(key, value);
        } else if (key == "pooled_baseline") {
            cfg.pooled_baseline = parse_bool(key, value);
        } else if (key == "studies") {
            cfg.studies = static_cast<int>(parse_int(key, value));
        } else if (key == "images_per_study") {
            cfg.images_per_study = static_cast<int>(parse_int(key, value));
        } else if (key == "dims") {
            const auto v = parse_double_list(key, value);
            if (v.size() != 3) throw InputError("config key 'dims': need 3 values");
            for (int a = 0; a < 3; ++a) cfg.dims[a] = static_cast<int>(v[a]);
        } else if (key == "spacing") {
            const auto v = parse_double_list(key, value);
            if (v.size() != 3)
                throw InputError("config key 'spacing': need 3 values");
            for (int a = 0; a < 3; ++a) cfg.spacing[a] = v[a];
        } else if (key == "lesion_fraction") {
            cfg.lesion_fraction = parse_double(key, value);
        } else if (key == "target_study") {
            cfg.target_study = static_cast<int>(parse_int(key, value));
        } else if (key == "channels") {
            cfg.recipe.channels = parse_list(value);
        } else if (key == "scales") {
            cfg.recipe.scales_mm = parse_double_list(key, value);
        } else if (key == "position") {
            cfg.recipe.include_position = parse_bool(key, value);
        } else if (key == "designated_channel") {
            cfg.recipe.designated_channel = static_cast<int>(parse_int(key, value));
        } else if (starts_with_study_prefix(key)) {
            cfg.profile_overrides[key] = value;
        } else {
            throw InputError("unknown config key '" + key + "'");
        }
    }

    if (cfg.tree_count < 1) throw InputError("trees must be >= 1");
    if (cfg.p < 0.0) throw InputError("p must be >= 0");
    if (cfg.threads < 1) cfg.threads = 1;
    if (cfg.train_count < 1 || cfg.eval_count < 1 || cfg.distance_count < 1)
        throw InputError("sample counts must be >= 1");
    if (cfg.oversample_factor < 1.0)
        throw InputError("oversample_factor must be >= 1");
    if (cfg.studies < 1 || cfg.images_per_study < 1)
        throw InputError("studies and images_per_study must be >= 1");
    if (cfg.target_study < 0 || cfg.target_study >= cfg.studies)
        throw InputError("target_study out of range");
    if (cfg.measures.empty()) throw InputError("no measures configured");
    if (cfg.directions.empty()) throw InputError("no directions configured");
    if (cfg.p_grid.empty()) throw InputError("empty p_grid");
    cfg.recipe.validate();
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    const std::string text = read_text_file(path);
    return from_map(parse_config_text(text), text);
}

std::vector<std::string> RunConfig::class_names() const {
    if (task == "bt") return {"csf", "gm", "wm"};
    if (task == "wml") return {"nonwml", "wml"};
    std::vector<std::string> names;
    const auto spec = phantom_spec(0);
    for (std::size_t c = 0; c < spec.tissue_classes(); ++c)
        names.push_back("c" + std::to_string(c));
    if (lesion_fraction > 0.0) names.push_back("lesion");
    return names;
}

SampleMode RunConfig::train_sample_mode() const {
    SampleMode m = SampleMode::uniform();
    if (is_wml() && oversample_factor > 1.0) {
        const int positive = static_cast<int>(class_names().size()) - 1;
        m = SampleMode::oversample(positive, oversample_factor);
    }
    if (is_wml() && gate_threshold >= 0.0)
        m = m.with_gate(recipe.designated_feature_index(), gate_threshold);
    return m;
}

SampleMode RunConfig::eval_sample_mode() const {
    SampleMode m = SampleMode::uniform();
    if (is_wml() && gate_threshold >= 0.0)
        m = m.with_gate(recipe.designated_feature_index(), gate_threshold);
    return m;
}

SampleMode RunConfig::distance_sample_mode() const { return eval_sample_mode(); }

// ---- study profiles / phantom geometry --------------------------------------------

namespace {

constexpr std::uint64_t kProfileStream = 21;

void apply_profile_override(ScannerProfile& p, const std::string& field,
                            const std::string& value) {
    if (field == "gamma")
        p.gamma = parse_double(field, value);
    else if (field == "gain")
        p.gain = parse_double(field, value);
    else if (field == "offset")
        p.offset = parse_double(field, value);
    else if (field == "bias_amplitude")
        p.bias_amplitude = parse_double(field, value);
    else if (field == "bias_scale_mm")
        p.bias_scale_mm = parse_double(field, value);
    else if (field == "noise_sigma")
        p.noise_sigma = parse_double(field, value);
    else if (field == "prior_shift")
        p.prior_shift = parse_double_list(field, value);
    else
        throw InputError("unknown scanner profile field '" + field + "'");
}

} // namespace

ScannerProfile RunConfig::study_profile(int k) const {
    if (k < 0 || k >= studies) throw InputError("study index out of range");
    ScannerProfile p;
    p.bias_scale_mm = 40.0;
    if (k == 0) {
        // the reference scanner (default target study)
        p.gamma = 1.0;
        p.gain = 1.0;
        p.offset = 0.0;
        p.bias_amplitude = 0.02;
        p.noise_sigma = 0.02;
    } else if (k == 1) {
        // mild protocol variation of the reference
        p.gamma = 1.06;
        p.gain = 1.05;
        p.offset = 0.02;
        p.bias_amplitude = 0.04;
        p.noise_sigma = 0.025;
    } else if (k == 2) {
        // strongly shifted scanner
        p.gamma = 2.4;
        p.gain = 0.55;
        p.offset = 0.30;
        p.bias_amplitude = 0.10;
        p.noise_sigma = 0.03;
        p.prior_shift = {1.2, 1.0, 0.85};
    } else {
        // additional studies: medium shifts, deterministic in (seed, k)
        Rng rng(derive_seed(derive_seed(seed, kProfileStream),
                            static_cast<std::uint64_t>(k)));
        p.gamma = 0.8 + 0.5 * rng.uniform01();
        p.gain = 0.75 + 0.5 * rng.uniform01();
        p.offset = 0.15 * rng.uniform01();
        p.bias_amplitude = 0.02 + 0.06 * rng.uniform01();
        p.noise_sigma = 0.02 + 0.02 * rng.uniform01();
    }

    const std::string prefix = "study" + std::to_string(k) + ".";
    for (const auto& [key, value] : profile_overrides)
        if (key.rfind(prefix, 0) == 0)
            apply_profile_override(p, key.substr(prefix.size()), value);
    p.validate();
    return p;
}

PhantomSpec RunConfig::phantom_spec(int study) const {
    PhantomSpec spec;
    if (task == "wml") {
        spec.channel_names = {"t1", "pd", "flair"};
        spec.channel_class_means = {
            {0.15, 0.45, 0.78, 0.62}, // t1: csf, gm, wm, lesion
            {0.80, 0.55, 0.35, 0.50}, // pd
            {0.10, 0.45, 0.35, 0.90}, // flair: lesions bright
        };
    } else {
        spec.channel_names = {"t1"};
        spec.channel_class_means = {{0.15, 0.45, 0.78}};
    }
    spec.lesion_fraction = lesion_fraction;
    if (lesion_fraction > 0.0 && task != "wml") {
        // append a lesion mean per channel (slightly darker than WM on t1)
        for (auto& means : spec.channel_class_means) means.push_back(0.62);
    }
    if (lesion_fraction == 0.0 && task == "wml")
        throw InputError("wml task needs lesion_fraction > 0");
    return apply_prior_shift(spec, study_profile(study).prior_shift);
}

std::string RunConfig::study_name(int k) const {
    return "study" + std::to_string(k);
}

} // namespace simfuse
