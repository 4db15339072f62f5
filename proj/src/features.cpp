#include "simfuse/features.hpp"

#include <algorithm>
#include <cmath>

#include "simfuse/rng.hpp"

namespace simfuse {

int FeatureRecipe::feature_count() const {
    return static_cast<int>(channels.size()) *
               (1 + 3 * static_cast<int>(scales_mm.size())) +
           (include_position ? 3 : 0);
}

int FeatureRecipe::designated_feature_index() const {
    return designated_channel * (1 + 3 * static_cast<int>(scales_mm.size()));
}

void FeatureRecipe::validate() const {
    if (channels.empty()) throw InputError("recipe needs >= 1 channel");
    if (designated_channel < 0 ||
        designated_channel >= static_cast<int>(channels.size()))
        throw InputError("designated_channel out of range");
    for (double s : scales_mm)
        if (s <= 0.0) throw InputError("feature scales must be positive");
}

FeatureRecipe FeatureRecipe::bt() {
    FeatureRecipe r;
    r.scales_mm = {1.0, 2.0, 3.0};
    r.include_position = true;
    r.channels = {"t1"};
    r.designated_channel = 0;
    return r;
}

FeatureRecipe FeatureRecipe::wml() {
    FeatureRecipe r;
    r.scales_mm = {0.5, 1.0, 2.0};
    r.include_position = false;
    r.channels = {"t1", "pd", "flair"};
    r.designated_channel = 2;
    return r;
}

void SampleBag::validate() const {
    if (n <= 0) throw InputError("sample bag feature count must be positive");
    if (features.size() % static_cast<std::size_t>(n) != 0)
        throw InputError("sample bag feature buffer is not N x n");
    if (labeled() && labels.size() != size())
        throw InputError("sample bag label count mismatch");
    if (labeled()) {
        for (int l : labels)
            if (l < 0 || l >= static_cast<int>(class_names.size()))
                throw InputError("sample bag label out of range");
    }
}

FeatureExtraction extract_features(const std::vector<Volume>& channels,
                                   const Mask& mask, const FeatureRecipe& recipe) {
    recipe.validate();
    if (channels.size() != recipe.channels.size())
        throw InputError("channel count does not match recipe");
    for (const auto& c : channels) {
        c.validate();
        mask.require_match(c, "channel");
        if (c.dims != channels[0].dims)
            throw InputError("channels must share dims");
    }

    const auto voxels = mask.indices();
    if (voxels.empty()) throw InputError("empty mask");

    FeatureExtraction ext;
    ext.voxel_index = voxels;
    SampleBag& bag = ext.bag;
    bag.n = recipe.feature_count();
    bag.features.assign(voxels.size() * bag.n, 0.0);

    int col = 0;
    auto fill_column = [&](const Volume& v) {
        for (std::size_t r = 0; r < voxels.size(); ++r)
            bag.features[r * bag.n + col] = v.data[voxels[r]];
        ++col;
    };

    for (const auto& chan : channels) {
        fill_column(chan);
        for (double s : recipe.scales_mm) {
            Volume sm = gaussian_smooth(chan, s);
            fill_column(sm);
            fill_column(gradient_magnitude(sm));
            fill_column(laplacian(sm, /*absolute=*/true));
        }
    }

    if (recipe.include_position) {
        // bounding box of the mask, per axis, in voxel coordinates
        const Dims& d = channels[0].dims;
        int lo[3] = {d[0], d[1], d[2]};
        int hi[3] = {-1, -1, -1};
        for (std::size_t idx : voxels) {
            const auto c = unravel(idx, d);
            for (int a = 0; a < 3; ++a) {
                lo[a] = std::min(lo[a], c[a]);
                hi[a] = std::max(hi[a], c[a]);
            }
        }
        for (std::size_t r = 0; r < voxels.size(); ++r) {
            const auto c = unravel(voxels[r], d);
            for (int a = 0; a < 3; ++a) {
                const double span = hi[a] > lo[a] ? hi[a] - lo[a] : 1.0;
                bag.features[r * bag.n + col + a] = (c[a] - lo[a]) / span;
            }
        }
        col += 3;
    }
    return ext;
}

SampleBag attach_labels(const FeatureExtraction& ext, const Volume& label_volume,
                        const std::vector<std::string>& class_names) {
    SampleBag bag = ext.bag;
    bag.class_names = class_names;
    bag.labels.resize(ext.voxel_index.size());
    for (std::size_t r = 0; r < ext.voxel_index.size(); ++r) {
        const double l = label_volume.data[ext.voxel_index[r]];
        const int li = static_cast<int>(l);
        if (l < 0 || li >= static_cast<int>(class_names.size()))
            throw InputError("label volume value out of class range");
        bag.labels[r] = li;
    }
    bag.validate();
    return bag;
}

// ---- sampling ---------------------------------------------------------------

SampleMode SampleMode::uniform() { return SampleMode{}; }

SampleMode SampleMode::oversample(int cls, double factor) {
    SampleMode m;
    m.kind = Kind::oversample;
    m.oversample_class = cls;
    m.oversample_factor = factor;
    return m;
}

SampleMode SampleMode::with_gate(int feature, double threshold) const {
    SampleMode m = *this;
    m.gated = true;
    m.gate_feature = feature;
    m.gate_threshold = threshold;
    return m;
}

SampleBag gate_rows(const SampleBag& bag, int feature, double threshold) {
    bag.validate();
    if (feature < 0 || feature >= bag.n)
        throw InputError("gate feature out of range");
    SampleBag out;
    out.n = bag.n;
    out.class_names = bag.class_names;
    out.source_tag = bag.source_tag;
    for (std::size_t i = 0; i < bag.size(); ++i) {
        if (!(bag.row(i)[feature] > threshold)) continue;
        out.features.insert(out.features.end(), bag.row(i), bag.row(i) + bag.n);
        if (bag.labeled()) out.labels.push_back(bag.labels[i]);
    }
    if (out.size() == 0) throw InputError("gate leaves no eligible voxels");
    return out;
}

SampleBag sample_bag(const SampleBag& bag, std::size_t count, const SampleMode& mode,
                     std::uint64_t seed) {
    bag.validate();
    if (count == 0) throw InputError("sample count must be positive");
    if (mode.kind == SampleMode::Kind::oversample && !bag.labeled())
        throw InputError("oversampling needs labels");

    std::vector<std::size_t> eligible;
    eligible.reserve(bag.size());
    for (std::size_t i = 0; i < bag.size(); ++i) {
        if (mode.gated) {
            if (mode.gate_feature < 0 || mode.gate_feature >= bag.n)
                throw InputError("gate feature out of range");
            if (!(bag.row(i)[mode.gate_feature] > mode.gate_threshold)) continue;
        }
        eligible.push_back(i);
    }
    if (eligible.empty())
        throw InputError("gating leaves no eligible voxels");

    Rng rng(seed);
    std::vector<std::size_t> picked;
    picked.reserve(count);

    if (mode.kind == SampleMode::Kind::uniform) {
        if (count <= eligible.size()) {
            // partial Fisher-Yates: first `count` of a full shuffle
            std::vector<std::size_t> pool = eligible;
            for (std::size_t i = 0; i < count; ++i) {
                const std::size_t j =
                    i + static_cast<std::size_t>(rng.uniform_int(pool.size() - i));
                std::swap(pool[i], pool[j]);
                picked.push_back(pool[i]);
            }
        } else {
            warn("sample_bag: requested more rows than available, sampling with replacement");
            for (std::size_t i = 0; i < count; ++i)
                picked.push_back(eligible[rng.uniform_int(eligible.size())]);
        }
    } else {
        // weighted draws with replacement: rows of the oversampled class
        // carry weight `factor`, the rest weight 1
        const double factor = mode.oversample_factor;
        if (factor <= 0.0) throw InputError("oversample factor must be positive");
        std::vector<std::size_t> special, rest;
        for (std::size_t i : eligible)
            (bag.labels[i] == mode.oversample_class ? special : rest).push_back(i);
        const double w_special = factor * static_cast<double>(special.size());
        const double w_rest = static_cast<double>(rest.size());
        const double total = w_special + w_rest;
        if (total <= 0.0) throw InputError("no rows to sample");
        for (std::size_t i = 0; i < count; ++i) {
            if (!special.empty() && rng.uniform01() * total < w_special)
                picked.push_back(special[rng.uniform_int(special.size())]);
            else if (!rest.empty())
                picked.push_back(rest[rng.uniform_int(rest.size())]);
            else
                picked.push_back(special[rng.uniform_int(special.size())]);
        }
    }

    SampleBag out;
    out.n = bag.n;
    out.class_names = bag.class_names;
    out.source_tag = bag.source_tag;
    out.features.resize(picked.size() * bag.n);
    if (bag.labeled()) out.labels.resize(picked.size());
    for (std::size_t r = 0; r < picked.size(); ++r) {
        std::copy(bag.row(picked[r]), bag.row(picked[r]) + bag.n, out.row(r));
        if (bag.labeled()) out.labels[r] = bag.labels[picked[r]];
    }
    return out;
}

} // namespace simfuse
