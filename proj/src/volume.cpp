#include "simfuse/volume.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace simfuse {

void Volume::validate() const {
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
        throw InputError("volume dims must be >= 1 per axis");
    if (spacing[0] <= 0 || spacing[1] <= 0 || spacing[2] <= 0)
        throw InputError("volume spacing must be positive");
    const std::size_t expect =
        static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    if (data.size() != expect)
        throw InputError("volume data length does not match dims");
    for (double v : data)
        if (!std::isfinite(v)) throw InputError("volume contains non-finite values");
}

std::size_t Mask::count() const {
    std::size_t c = 0;
    for (auto f : flags) c += f != 0;
    return c;
}

std::vector<std::size_t> Mask::indices() const {
    std::vector<std::size_t> idx;
    idx.reserve(count());
    for (std::size_t i = 0; i < flags.size(); ++i)
        if (flags[i]) idx.push_back(i);
    return idx;
}

void Mask::require_match(const Volume& v, const std::string& what) const {
    if (dims != v.dims)
        throw InputError("mask dims do not match " + what);
}

// ---- normalization --------------------------------------------------------

namespace {

std::vector<double> masked_values(const Volume& v, const Mask& mask) {
    mask.require_match(v, "volume");
    std::vector<double> vals;
    vals.reserve(mask.count());
    for (std::size_t i = 0; i < v.data.size(); ++i)
        if (mask.at(i)) vals.push_back(v.data[i]);
    return vals;
}

double percentile_of_sorted(const std::vector<double>& sorted, double pct) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = pct / 100.0 * static_cast<double>(n - 1);
    const double fl = std::floor(h);
    std::size_t lo = static_cast<std::size_t>(fl);
    if (lo >= n - 1) return sorted[n - 1];
    const double frac = h - fl;
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

} // namespace

double masked_percentile(const Volume& v, const Mask& mask, double pct) {
    auto vals = masked_values(v, mask);
    if (vals.empty()) throw InputError("empty mask");
    std::sort(vals.begin(), vals.end());
    return percentile_of_sorted(vals, pct);
}

Volume percentile_normalize(const Volume& v, const Mask& mask, double low_pct,
                            double high_pct) {
    auto vals = masked_values(v, mask);
    if (vals.size() < 2) throw InputError("percentile_normalize needs >= 2 masked voxels");
    std::sort(vals.begin(), vals.end());
    const double lo = percentile_of_sorted(vals, low_pct);
    const double hi = percentile_of_sorted(vals, high_pct);
    if (hi == lo) throw DegenerateError("degenerate intensity range");
    Volume out = v;
    const double scale = 1.0 / (hi - lo);
    for (double& x : out.data) x = (x - lo) * scale;
    return out;
}

Volume invert_intensities(const Volume& v, const Mask& mask) {
    mask.require_match(v, "volume");
    double maxv = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        if (mask.at(i)) {
            maxv = std::max(maxv, v.data[i]);
            any = true;
        }
    }
    if (!any) throw InputError("empty mask");
    Volume out = v;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        if (mask.at(i)) out.data[i] = maxv - out.data[i];
    return out;
}

// ---- gaussian smoothing ----------------------------------------------------

namespace {

// Truncated, renormalized 1-D kernel; returns only the non-negative
// half [w0, w1, ..., wr] (symmetric).
std::vector<double> gaussian_half_kernel(double sigma_vox) {
    const int r = static_cast<int>(std::ceil(3.0 * sigma_vox));
    std::vector<double> half(static_cast<std::size_t>(r) + 1);
    double sum = 0.0;
    for (int i = 0; i <= r; ++i) {
        half[i] = std::exp(-0.5 * (static_cast<double>(i) * i) / (sigma_vox * sigma_vox));
        sum += (i == 0 ? half[i] : 2.0 * half[i]);
    }
    for (double& w : half) w /= sum;
    return half;
}

// Convolves along one axis with replicate-nearest borders.
void convolve_axis(const Volume& in, Volume& out, int axis,
                   const std::vector<double>& half) {
    const int r = static_cast<int>(half.size()) - 1;
    const Dims& d = in.dims;
    const std::size_t stride =
        axis == 0 ? 1
                  : (axis == 1 ? static_cast<std::size_t>(d[0])
                               : static_cast<std::size_t>(d[0]) * d[1]);
    const int len = d[axis];
    // iterate over all lines perpendicular to `axis`
    const int n0 = axis == 0 ? d[1] : d[0];
    const int n1 = axis == 2 ? d[1] : d[2];
    for (int b = 0; b < n1; ++b) {
        for (int a = 0; a < n0; ++a) {
            std::size_t base;
            if (axis == 0)
                base = in.index(0, a, b);
            else if (axis == 1)
                base = in.index(a, 0, b);
            else
                base = in.index(a, b, 0);
            for (int i = 0; i < len; ++i) {
                double acc = half[0] * in.data[base + static_cast<std::size_t>(i) * stride];
                for (int k = 1; k <= r; ++k) {
                    const int lo = std::max(i - k, 0);
                    const int hi = std::min(i + k, len - 1);
                    acc += half[k] * (in.data[base + static_cast<std::size_t>(lo) * stride] +
                                      in.data[base + static_cast<std::size_t>(hi) * stride]);
                }
                out.data[base + static_cast<std::size_t>(i) * stride] = acc;
            }
        }
    }
}

} // namespace

Volume gaussian_smooth(const Volume& v, double sigma_mm) {
    if (sigma_mm <= 0) throw InputError("sigma_mm must be positive");
    bool effective = false;
    std::array<std::vector<double>, 3> kernels;
    for (int a = 0; a < 3; ++a) {
        kernels[a] = gaussian_half_kernel(sigma_mm / v.spacing[a]);
        for (std::size_t k = 1; k < kernels[a].size(); ++k)
            if (kernels[a][k] > 0.0) effective = true;
    }
    if (!effective) {
        warn("gaussian_smooth: kernel collapses to a single sample, returning input");
        return v;
    }
    Volume cur = v;
    Volume tmp(v.dims, v.spacing);
    for (int axis = 0; axis < 3; ++axis) {
        convolve_axis(cur, tmp, axis, kernels[axis]);
        std::swap(cur.data, tmp.data);
    }
    return cur;
}

// ---- derivatives -----------------------------------------------------------

namespace {

void require_min_dims(const Volume& v, int minimum, const char* op) {
    if (v.dims[0] < minimum || v.dims[1] < minimum || v.dims[2] < minimum)
        throw InputError(std::string(op) + " requires dims >= 3 per axis");
}

} // namespace

Volume gradient_magnitude(const Volume& v) {
    require_min_dims(v, 3, "gradient_magnitude");
    Volume out(v.dims, v.spacing);
    const Dims& d = v.dims;
    for (int z = 0; z < d[2]; ++z) {
        for (int y = 0; y < d[1]; ++y) {
            for (int x = 0; x < d[0]; ++x) {
                double g2 = 0.0;
                const int c[3] = {x, y, z};
                for (int axis = 0; axis < 3; ++axis) {
                    int lo[3] = {x, y, z}, hi[3] = {x, y, z};
                    double den;
                    if (c[axis] == 0) {
                        hi[axis] = 1;
                        den = v.spacing[axis];
                    } else if (c[axis] == d[axis] - 1) {
                        lo[axis] = d[axis] - 2;
                        den = v.spacing[axis];
                    } else {
                        lo[axis] = c[axis] - 1;
                        hi[axis] = c[axis] + 1;
                        den = 2.0 * v.spacing[axis];
                    }
                    const double diff = (v.at(hi[0], hi[1], hi[2]) -
                                         v.at(lo[0], lo[1], lo[2])) / den;
                    g2 += diff * diff;
                }
                out.at(x, y, z) = std::sqrt(g2);
            }
        }
    }
    return out;
}

Volume laplacian(const Volume& v, bool absolute) {
    require_min_dims(v, 3, "laplacian");
    Volume out(v.dims, v.spacing);
    const Dims& d = v.dims;
    for (int z = 0; z < d[2]; ++z) {
        for (int y = 0; y < d[1]; ++y) {
            for (int x = 0; x < d[0]; ++x) {
                double acc = 0.0;
                const int c[3] = {x, y, z};
                for (int axis = 0; axis < 3; ++axis) {
                    // second difference; the stencil shifts inward at borders
                    int m = c[axis];
                    if (m == 0) m = 1;
                    if (m == d[axis] - 1) m = d[axis] - 2;
                    int a[3] = {x, y, z}, b[3] = {x, y, z}, mid[3] = {x, y, z};
                    a[axis] = m - 1;
                    mid[axis] = m;
                    b[axis] = m + 1;
                    const double h = v.spacing[axis];
                    acc += (v.at(a[0], a[1], a[2]) - 2.0 * v.at(mid[0], mid[1], mid[2]) +
                            v.at(b[0], b[1], b[2])) / (h * h);
                }
                out.at(x, y, z) = absolute ? std::fabs(acc) : acc;
            }
        }
    }
    return out;
}

} // namespace simfuse
