#ifndef SIMFUSE_VOLUME_HPP
#define SIMFUSE_VOLUME_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "simfuse/common.hpp"

namespace simfuse {

/// A 3D scalar grid. Data is stored x-fastest: linear index of voxel
/// (x, y, z) is x + nx * (y + ny * z). Values are doubles in memory;
/// the on-disk format is little-endian float32 (see io.hpp).
struct Volume {
    Dims dims{0, 0, 0};
    Spacing spacing{1.0, 1.0, 1.0};
    std::vector<double> data;

    Volume() = default;
    Volume(Dims d, Spacing s, double fill = 0.0)
        : dims(d), spacing(s),
          data(static_cast<std::size_t>(d[0]) * d[1] * d[2], fill) {}

    std::size_t size() const { return data.size(); }

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
    }

    double& at(int x, int y, int z) { return data[index(x, y, z)]; }
    double at(int x, int y, int z) const { return data[index(x, y, z)]; }

    /// Throws InputError on inconsistent dims/spacing or non-finite values.
    void validate() const;
};

struct Mask {
    Dims dims{0, 0, 0};
    std::vector<std::uint8_t> flags;

    Mask() = default;
    explicit Mask(Dims d, bool fill = false)
        : dims(d),
          flags(static_cast<std::size_t>(d[0]) * d[1] * d[2], fill ? 1 : 0) {}

    std::size_t size() const { return flags.size(); }
    bool at(std::size_t i) const { return flags[i] != 0; }

    std::size_t count() const;
    /// Linear indices of masked voxels in ascending order.
    std::vector<std::size_t> indices() const;

    void require_match(const Volume& v, const std::string& what) const;
};

/// Decomposes a linear index back into (x, y, z).
inline std::array<int, 3> unravel(std::size_t i, const Dims& dims) {
    const int x = static_cast<int>(i % dims[0]);
    const int y = static_cast<int>((i / dims[0]) % dims[1]);
    const int z = static_cast<int>(i / (static_cast<std::size_t>(dims[0]) * dims[1]));
    return {x, y, z};
}

// ---- intensity normalization ------------------------------------------

/// Percentile of masked intensities using linear interpolation between
/// order statistics (inclusive): rank h = pct/100 * (N-1), value
/// interpolated between x[floor(h)] and x[ceil(h)].
double masked_percentile(const Volume& v, const Mask& mask, double pct);

/// Linear map sending the low percentile of masked intensities to 0 and
/// the high one to 1. No clamping: values outside the range extend
/// linearly. Throws DegenerateError when the two percentiles coincide.
Volume percentile_normalize(const Volume& v, const Mask& mask,
                            double low_pct = 4.0, double high_pct = 96.0);

/// Maps masked values x to (max_masked - x); unmasked voxels untouched.
Volume invert_intensities(const Volume& v, const Mask& mask);

// ---- filters -----------------------------------------------------------

/// Separable Gaussian smoothing. sigma_mm is converted per axis to
/// voxels via the spacing; the kernel is truncated at radius
/// ceil(3*sigma_vox) and renormalized to sum 1. Borders replicate the
/// nearest voxel. A sigma so small that every axis kernel collapses to a
/// single sample returns the input unchanged with a warning.
Volume gaussian_smooth(const Volume& v, double sigma_mm);

/// Euclidean norm of the intensity gradient. Central differences scaled
/// by 1/(2*spacing) in the interior, one-sided differences at borders.
Volume gradient_magnitude(const Volume& v);

/// Sum of second central differences per axis scaled by 1/spacing^2
/// (one-sided second differences at borders). absolute=true takes |.|.
Volume laplacian(const Volume& v, bool absolute);

} // namespace simfuse

#endif
