#ifndef SIMFUSE_PHANTOM_HPP
#define SIMFUSE_PHANTOM_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "simfuse/volume.hpp"

namespace simfuse {

/// Appearance model of one scanner / protocol. Applied to a clean
/// phantom channel as
///   out = gain * in^gamma * bias_field + offset + noise
/// where bias_field is a smooth positive multiplicative field and noise
/// is i.i.d. Gaussian. prior_shift distorts the tissue proportions of
/// phantoms simulated for this scanner (class c's volume fraction is
/// multiplied by prior_shift[c] and renormalized).
struct ScannerProfile {
    double gamma = 1.0;
    double gain = 1.0;
    double offset = 0.0;
    double bias_amplitude = 0.0; // relative amplitude of the bias field, in [0, 1)
    double bias_scale_mm = 40.0; // correlation length of the bias field
    double noise_sigma = 0.0;
    std::vector<double> prior_shift; // empty = no shift
    std::uint64_t seed = 0;

    void validate() const;
};

/// Geometry of the synthetic head phantom: nested ellipsoidal shells,
/// one per tissue class, ordered from the outermost shell inwards. The
/// class order is the ascending-intensity order of the designated
/// channel (brain-tissue convention: CSF, GM, WM on T1).
struct PhantomSpec {
    /// Semi-axes of the outer ellipsoid as a fraction of the half-extent
    /// of the volume along each axis.
    std::array<double, 3> outer_semiaxes_frac{0.80, 0.88, 0.80};
    /// Volume fraction of each shell, outermost first; must sum to 1.
    std::vector<double> shell_fractions{0.18, 0.34, 0.48};
    /// Mean intensity per channel per class. channel_class_means[c] has
    /// one entry per tissue class plus, if lesion_fraction > 0, a final
    /// entry for the lesion class.
    std::vector<std::vector<double>> channel_class_means{{0.15, 0.45, 0.78}};
    std::vector<std::string> channel_names{"t1"};
    /// Target fraction of masked voxels covered by lesion blobs.
    double lesion_fraction = 0.0;
    /// Radius of individual lesion spheres, in mm.
    double lesion_radius_mm = 2.2;
    /// Relative jitter of shell semi-axes per image (subject variation).
    double shape_jitter = 0.03;
    /// Smooth within-class intensity variation amplitude.
    double texture_amplitude = 0.04;

    std::size_t tissue_classes() const { return shell_fractions.size(); }
    std::size_t total_classes() const {
        return shell_fractions.size() + (lesion_fraction > 0.0 ? 1 : 0);
    }
    void validate() const;
};

/// One simulated image: a clean intensity volume per channel, the head
/// mask, and the ground-truth label volume (class index per voxel,
/// lesion class last; voxels outside the mask are -1).
struct Phantom {
    std::vector<Volume> channels;
    Mask mask;
    Volume labels;
};

/// Analytic volume (mm^3) of the ellipsoid with the given semi-axes.
double ellipsoid_volume(const std::array<double, 3>& semiaxes);

/// Copy of `spec` with shell fractions multiplied by `prior_shift`
/// (per class) and renormalized. Empty shift = unchanged.
PhantomSpec apply_prior_shift(const PhantomSpec& spec,
                              const std::vector<double>& prior_shift);

/// Nested-shell semi-axis scale factors for the requested volume
/// fractions: shell k occupies fractions[k] of the outer ellipsoid.
std::vector<double> shell_scales(const std::vector<double>& fractions);

Phantom simulate_phantom(Dims dims, Spacing spacing, const PhantomSpec& spec,
                         std::uint64_t seed);

/// Applies a scanner profile to one clean channel. Deterministic for a
/// fixed profile.seed.
Volume apply_scanner(const Volume& v, const ScannerProfile& profile);

} // namespace simfuse

#endif
