#include "simfuse/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "simfuse/rng.hpp"

namespace simfuse {

void ScannerProfile::validate() const {
    if (gain <= 0.0) throw InputError("scanner gain must be positive");
    if (gamma <= 0.0) throw InputError("scanner gamma must be positive");
    if (bias_amplitude < 0.0 || bias_amplitude >= 1.0)
        throw InputError("bias_amplitude must be in [0, 1)");
    if (noise_sigma < 0.0) throw InputError("noise_sigma must be >= 0");
    for (double s : prior_shift)
        if (s <= 0.0) throw InputError("prior_shift entries must be positive");
}

void PhantomSpec::validate() const {
    if (shell_fractions.empty()) throw InputError("phantom needs >= 1 shell");
    double sum = 0.0;
    for (double f : shell_fractions) {
        if (f <= 0.0) throw InputError("shell fractions must be positive");
        sum += f;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
        throw InputError("shell fractions must sum to 1");
    if (channel_class_means.empty()) throw InputError("phantom needs >= 1 channel");
    if (channel_names.size() != channel_class_means.size())
        throw InputError("channel_names/channel_class_means size mismatch");
    for (const auto& means : channel_class_means)
        if (means.size() != total_classes())
            throw InputError("channel class means must cover every class");
    if (lesion_fraction < 0.0 || lesion_fraction >= 1.0)
        throw InputError("lesion_fraction must be in [0, 1)");
}

double ellipsoid_volume(const std::array<double, 3>& semiaxes) {
    return 4.0 / 3.0 * M_PI * semiaxes[0] * semiaxes[1] * semiaxes[2];
}

std::vector<double> shell_scales(const std::vector<double>& fractions) {
    // Shell k is the region between the ellipsoids scaled by s_k and
    // s_{k+1}; its volume fraction is s_k^3 - s_{k+1}^3, so
    // s_k = (sum of fractions k..end)^(1/3). s_0 = 1 by construction.
    std::vector<double> scales(fractions.size());
    double tail = 0.0;
    for (std::size_t k = fractions.size(); k-- > 0;) {
        tail += fractions[k];
        scales[k] = std::cbrt(tail);
    }
    return scales;
}

namespace {

// Smooth pseudo-random field: sum of three cosines with random
// orientation and phase, normalized to [-1, 1].
struct CosineField {
    std::array<std::array<double, 3>, 3> freq; // rad/mm
    std::array<double, 3> phase;

    static CosineField make(Rng& rng, double scale_mm) {
        CosineField f;
        for (int i = 0; i < 3; ++i) {
            // random direction, wavelength ~ scale_mm
            double dir[3];
            double norm = 0.0;
            for (int a = 0; a < 3; ++a) {
                dir[a] = rng.normal();
                norm += dir[a] * dir[a];
            }
            norm = std::sqrt(std::max(norm, 1e-12));
            const double wavelen = scale_mm * (0.75 + 0.5 * rng.uniform01());
            for (int a = 0; a < 3; ++a)
                f.freq[i][a] = 2.0 * M_PI / wavelen * dir[a] / norm;
            f.phase[i] = 2.0 * M_PI * rng.uniform01();
        }
        return f;
    }

    double at(double x, double y, double z) const {
        double s = 0.0;
        for (int i = 0; i < 3; ++i)
            s += std::cos(freq[i][0] * x + freq[i][1] * y + freq[i][2] * z +
                          phase[i]);
        return s / 3.0;
    }
};

} // namespace

PhantomSpec apply_prior_shift(const PhantomSpec& spec,
                              const std::vector<double>& prior_shift) {
    PhantomSpec out = spec;
    if (prior_shift.empty()) return out;
    if (prior_shift.size() != out.shell_fractions.size())
        throw InputError("prior_shift length must equal shell count");
    double sum = 0.0;
    for (std::size_t k = 0; k < out.shell_fractions.size(); ++k) {
        out.shell_fractions[k] *= prior_shift[k];
        sum += out.shell_fractions[k];
    }
    for (double& v : out.shell_fractions) v /= sum;
    return out;
}

Phantom simulate_phantom(Dims dims, Spacing spacing, const PhantomSpec& spec,
                         std::uint64_t seed) {
    spec.validate();
    Volume probe(dims, spacing);
    probe.validate();

    Rng shape_rng(derive_seed(seed, 1));
    Rng texture_rng(derive_seed(seed, 2));
    Rng lesion_rng(derive_seed(seed, 3));

    // per-image shape jitter on the outer semi-axes
    std::array<double, 3> semi; // mm
    for (int a = 0; a < 3; ++a) {
        const double half_extent = 0.5 * dims[a] * spacing[a];
        double jitter = 1.0 + spec.shape_jitter * (2.0 * shape_rng.uniform01() - 1.0);
        semi[a] = spec.outer_semiaxes_frac[a] * half_extent * jitter;
    }
    const std::array<double, 3> center{0.5 * (dims[0] - 1) * spacing[0],
                                       0.5 * (dims[1] - 1) * spacing[1],
                                       0.5 * (dims[2] - 1) * spacing[2]};

    const auto scales = shell_scales(spec.shell_fractions);

    Phantom out;
    out.mask.dims = dims;
    out.mask.flags.assign(probe.data.size(), 0);
    out.labels = Volume(dims, spacing);
    std::fill(out.labels.data.begin(), out.labels.data.end(), -1.0);

    const std::size_t n_tissue = spec.tissue_classes();
    std::vector<std::size_t> class_count(spec.total_classes(), 0);

    for (int z = 0; z < dims[2]; ++z) {
        for (int y = 0; y < dims[1]; ++y) {
            for (int x = 0; x < dims[0]; ++x) {
                const double px = (x * spacing[0] - center[0]) / semi[0];
                const double py = (y * spacing[1] - center[1]) / semi[1];
                const double pz = (z * spacing[2] - center[2]) / semi[2];
                const double r = std::sqrt(px * px + py * py + pz * pz);
                if (r > 1.0) continue;
                const std::size_t i = out.labels.index(x, y, z);
                out.mask.flags[i] = 1;
                // innermost shell whose scaled ellipsoid still contains r
                std::size_t cls = 0;
                for (std::size_t k = 1; k < n_tissue; ++k)
                    if (r <= scales[k]) cls = k;
                out.labels.data[i] = static_cast<double>(cls);
                ++class_count[cls];
            }
        }
    }
    const std::size_t n_masked = out.mask.count();
    if (n_masked == 0) throw DegenerateError("phantom mask is empty");

    // lesion blobs inside the innermost shell, added until the target
    // voxel count is reached (or no progress can be made)
    if (spec.lesion_fraction > 0.0) {
        const std::size_t lesion_class = n_tissue;
        const std::size_t target =
            std::max<std::size_t>(1, static_cast<std::size_t>(
                                         spec.lesion_fraction * n_masked));
        const std::size_t host = n_tissue - 1; // lesions live in the innermost shell
        std::size_t placed = 0;
        int attempts = 0;
        const int max_attempts = 10000;
        while (placed < target && attempts < max_attempts) {
            ++attempts;
            // candidate center: random masked voxel of the host class
            const int cx = static_cast<int>(lesion_rng.uniform_int(dims[0]));
            const int cy = static_cast<int>(lesion_rng.uniform_int(dims[1]));
            const int cz = static_cast<int>(lesion_rng.uniform_int(dims[2]));
            const std::size_t ci = out.labels.index(cx, cy, cz);
            if (!out.mask.flags[ci]) continue;
            if (out.labels.data[ci] != static_cast<double>(host)) continue;
            const double rad = spec.lesion_radius_mm *
                               (0.8 + 0.4 * lesion_rng.uniform01());
            const int rx = static_cast<int>(std::ceil(rad / spacing[0]));
            const int ry = static_cast<int>(std::ceil(rad / spacing[1]));
            const int rz = static_cast<int>(std::ceil(rad / spacing[2]));
            for (int dz = -rz; dz <= rz; ++dz) {
                for (int dy = -ry; dy <= ry; ++dy) {
                    for (int dx = -rx; dx <= rx; ++dx) {
                        const int vx = cx + dx, vy = cy + dy, vz = cz + dz;
                        if (vx < 0 || vy < 0 || vz < 0 || vx >= dims[0] ||
                            vy >= dims[1] || vz >= dims[2])
                            continue;
                        const double dd = dx * spacing[0] * dx * spacing[0] +
                                          dy * spacing[1] * dy * spacing[1] +
                                          dz * spacing[2] * dz * spacing[2];
                        if (dd > rad * rad) continue;
                        const std::size_t vi = out.labels.index(vx, vy, vz);
                        if (!out.mask.flags[vi]) continue;
                        if (out.labels.data[vi] != static_cast<double>(host))
                            continue;
                        out.labels.data[vi] = static_cast<double>(lesion_class);
                        ++placed;
                        if (placed >= target) break;
                    }
                    if (placed >= target) break;
                }
                if (placed >= target) break;
            }
        }
        if (placed == 0)
            throw DegenerateError("could not place any lesion voxels");
    }

    // clean intensities: class mean + smooth texture, one field per channel
    out.channels.reserve(spec.channel_class_means.size());
    for (std::size_t c = 0; c < spec.channel_class_means.size(); ++c) {
        const auto& means = spec.channel_class_means[c];
        Volume chan(dims, spacing);
        CosineField tex = CosineField::make(texture_rng, 18.0);
        for (int z = 0; z < dims[2]; ++z) {
            for (int y = 0; y < dims[1]; ++y) {
                for (int x = 0; x < dims[0]; ++x) {
                    const std::size_t i = chan.index(x, y, z);
                    if (!out.mask.flags[i]) {
                        chan.data[i] = 0.0;
                        continue;
                    }
                    const auto cls = static_cast<std::size_t>(out.labels.data[i]);
                    double v = means[cls];
                    if (spec.texture_amplitude > 0.0)
                        v += spec.texture_amplitude *
                             tex.at(x * spacing[0], y * spacing[1], z * spacing[2]);
                    chan.data[i] = v;
                }
            }
        }
        out.channels.push_back(std::move(chan));
    }
    return out;
}

Volume apply_scanner(const Volume& v, const ScannerProfile& profile) {
    profile.validate();
    const bool identity = profile.gamma == 1.0 && profile.gain == 1.0 &&
                          profile.offset == 0.0 && profile.bias_amplitude == 0.0 &&
                          profile.noise_sigma == 0.0;
    if (identity) return v;

    Volume out = v;
    Rng rng(derive_seed(profile.seed, 7));
    CosineField bias{};
    if (profile.bias_amplitude > 0.0)
        bias = CosineField::make(rng, profile.bias_scale_mm);

    for (int z = 0; z < v.dims[2]; ++z) {
        for (int y = 0; y < v.dims[1]; ++y) {
            for (int x = 0; x < v.dims[0]; ++x) {
                const std::size_t i = v.index(x, y, z);
                double val = v.data[i];
                // gamma on the non-negative part; clean phantoms are >= 0
                val = profile.gain * std::pow(std::max(val, 0.0), profile.gamma);
                if (profile.bias_amplitude > 0.0) {
                    const double b = 1.0 + profile.bias_amplitude *
                                               bias.at(x * v.spacing[0],
                                                       y * v.spacing[1],
                                                       z * v.spacing[2]);
                    val *= b;
                }
                val += profile.offset;
                if (profile.noise_sigma > 0.0)
                    val += profile.noise_sigma * rng.normal();
                out.data[i] = val;
            }
        }
    }
    return out;
}

} // namespace simfuse
