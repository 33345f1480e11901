#pragma once

#include "cdpd/data/volume.hpp"
#include "cdpd/core/rng.hpp"
#include "cdpd/core/parallel.hpp"

namespace cdpd {

struct Patch {
    Tensor<float> image; // {d, h, w}, values in [0, 1]
    Tensor<i32> label;   // {d, h, w}
    int task_id = 0;
};

constexpr double kClipLo = -175.0;
constexpr double kClipHi = 250.0;

// Clamp to the CT window and rescale to [0, 1]. Non-finite voxels are a data
// error, not something to silently squash.
inline Volume clip_normalize(const Volume& v) {
    CDPD_CHECK(v.kind == VolumeKind::image, "clip_normalize expects an image volume");
    Volume out = v;
    float* d = out.data.data();
    const float* s = v.data.data();
    const i64 n = v.data.numel();
    for (i64 i = 0; i < n; ++i)
        CDPD_CHECK(std::isfinite(double(s[i])), "non-finite intensity at voxel ", i);
    parallel_for(ceil_div(n, i64(8192)), [&](i64 b) {
        const i64 i0 = b * 8192, i1 = std::min(i0 + 8192, n);
        for (i64 i = i0; i < i1; ++i) {
            double x = double(s[i]);
            x = std::min(std::max(x, kClipLo), kClipHi);
            d[i] = float((x - kClipLo) / (kClipHi - kClipLo));
        }
    });
    return out;
}

namespace detail {

inline double lerp(double a, double b, double f) { return a + (b - a) * f; }

struct AxisTap {
    i64 lo, hi;
    double f;
};

inline AxisTap spacing_tap(i64 i, double old_spacing, double new_spacing, i64 in_n) {
    double src = (double(i) + 0.5) * new_spacing / old_spacing - 0.5;
    if (src < 0) src = 0;
    if (src > double(in_n - 1)) src = double(in_n - 1);
    const i64 lo = i64(src);
    return {lo, std::min(lo + 1, in_n - 1), src - double(lo)};
}

} // namespace detail

// Resample onto the target spacing. Images interpolate trilinearly (nested
// lerps, so constant volumes are preserved exactly); labels take the nearest
// source voxel and can never invent a new label value.
inline Volume resample_to_spacing(const Volume& v, std::array<double, 3> target) {
    v.validate();
    for (double t : target) CDPD_CHECK(t > 0, "target spacing must be positive");
    if (v.spacing == target) return v;
    Shape out_shape(3);
    for (int a = 0; a < 3; ++a) {
        out_shape[size_t(a)] = i64(std::llround(double(v.data.dim(a)) * v.spacing[size_t(a)] /
                                                target[size_t(a)]));
        CDPD_CHECK(out_shape[size_t(a)] >= 1, "resampling axis ", a, " from ", v.data.dim(a),
                   " voxels at ", v.spacing[size_t(a)], " mm to ", target[size_t(a)],
                   " mm leaves no voxels");
    }
    Volume out;
    out.kind = v.kind;
    out.spacing = target;
    out.data = Tensor<float>(out_shape);
    const i64 OD = out_shape[0], OH = out_shape[1], OW = out_shape[2];
    const i64 H = v.data.dim(1), W = v.data.dim(2);
    const float* src = v.data.data();
    const bool nearest = v.kind == VolumeKind::label;
    parallel_for(OD * OH, [&](i64 r) {
        const i64 od = r / OH;
        const i64 oh = r % OH;
        const auto td = detail::spacing_tap(od, v.spacing[0], target[0], v.data.dim(0));
        const auto th = detail::spacing_tap(oh, v.spacing[1], target[1], H);
        float* dst = out.data.data() + (od * OH + oh) * OW;
        for (i64 ow = 0; ow < OW; ++ow) {
            const auto tw = detail::spacing_tap(ow, v.spacing[2], target[2], W);
            if (nearest) {
                const i64 sd = td.f < 0.5 ? td.lo : td.hi;
                const i64 sh = th.f < 0.5 ? th.lo : th.hi;
                const i64 sw = tw.f < 0.5 ? tw.lo : tw.hi;
                dst[ow] = src[(sd * H + sh) * W + sw];
            } else {
                auto at = [&](i64 d, i64 h, i64 w) { return double(src[(d * H + h) * W + w]); };
                const double c00 = detail::lerp(at(td.lo, th.lo, tw.lo), at(td.lo, th.lo, tw.hi), tw.f);
                const double c01 = detail::lerp(at(td.lo, th.hi, tw.lo), at(td.lo, th.hi, tw.hi), tw.f);
                const double c10 = detail::lerp(at(td.hi, th.lo, tw.lo), at(td.hi, th.lo, tw.hi), tw.f);
                const double c11 = detail::lerp(at(td.hi, th.hi, tw.lo), at(td.hi, th.hi, tw.hi), tw.f);
                dst[ow] = float(detail::lerp(detail::lerp(c00, c01, th.f),
                                             detail::lerp(c10, c11, th.f), td.f));
            }
        }
    }, 4);
    return out;
}

inline Volume resample_isotropic(const Volume& v, double mm) {
    return resample_to_spacing(v, {mm, mm, mm});
}

template <class T>
Tensor<T> pad_to_min(const Tensor<T>& t, const Shape& min_dims, T fill) {
    Shape out = t.shape();
    bool need = false;
    for (int a = 0; a < 3; ++a)
        if (out[size_t(a)] < min_dims[size_t(a)]) {
            out[size_t(a)] = min_dims[size_t(a)];
            need = true;
        }
    if (!need) return t;
    Tensor<T> p(out, fill);
    for (i64 d = 0; d < t.dim(0); ++d)
        for (i64 h = 0; h < t.dim(1); ++h)
            std::memcpy(&p[(d * out[1] + h) * out[2]], &t[(d * t.dim(1) + h) * t.dim(2)],
                        size_t(t.dim(2)) * sizeof(T));
    return p;
}

// Crop an aligned image/label pair to `patch_dims`. The corner is uniform over
// valid positions; in foreground-biased mode at least half of the draws centre
// the patch on a random labelled voxel.
inline Patch extract_patch(const Volume& img, const Volume& lbl, Shape patch_dims, Rng& rng,
                           bool fg_biased = false) {
    CDPD_CHECK(img.data.shape() == lbl.data.shape(), "image ", shape_str(img.data.shape()),
               " and label ", shape_str(lbl.data.shape()), " grids are misaligned");
    Tensor<float> image = pad_to_min(img.data, patch_dims, 0.0f);
    Tensor<i32> label = pad_to_min(lbl.labels_as_int(), patch_dims, 0);

    Shape corner(3, 0);
    bool centered = false;
    if (fg_biased && rng.bernoulli(0.5)) {
        std::vector<i64> fg;
        for (i64 i = 0; i < label.numel(); ++i)
            if (label[i] != 0) fg.push_back(i);
        if (!fg.empty()) {
            const i64 v = fg[size_t(rng.uniform_int(0, i64(fg.size()) - 1))];
            const i64 w = v % label.dim(2);
            const i64 h = (v / label.dim(2)) % label.dim(1);
            const i64 d = v / (label.dim(2) * label.dim(1));
            const i64 center[3] = {d, h, w};
            for (int a = 0; a < 3; ++a) {
                i64 c = center[a] - patch_dims[size_t(a)] / 2;
                c = std::max<i64>(0, std::min(c, label.dim(a) - patch_dims[size_t(a)]));
                corner[size_t(a)] = c;
            }
            centered = true;
        }
    }
    if (!centered) {
        for (int a = 0; a < 3; ++a)
            corner[size_t(a)] = rng.uniform_int(0, image.dim(a) - patch_dims[size_t(a)]);
    }

    Patch p;
    p.image = Tensor<float>(patch_dims);
    p.label = Tensor<i32>(patch_dims);
    for (i64 d = 0; d < patch_dims[0]; ++d)
        for (i64 h = 0; h < patch_dims[1]; ++h) {
            const i64 src = ((corner[0] + d) * image.dim(1) + corner[1] + h) * image.dim(2) +
                            corner[2];
            std::memcpy(&p.image[(d * patch_dims[1] + h) * patch_dims[2]], &image[src],
                        size_t(patch_dims[2]) * sizeof(float));
            std::memcpy(&p.label[(d * patch_dims[1] + h) * patch_dims[2]], &label[src],
                        size_t(patch_dims[2]) * sizeof(i32));
        }
    return p;
}

namespace detail {

template <class T>
Tensor<T> rot90(const Tensor<T>& t, int axis_a, int axis_b, int k) {
    k = ((k % 4) + 4) % 4;
    if (k == 0) return t;
    Shape in = t.shape();
    Shape out = in;
    if (k % 2 == 1) std::swap(out[size_t(axis_a)], out[size_t(axis_b)]);
    Tensor<T> r(out);
    const i64 D = in[0], H = in[1], W = in[2];
    for (i64 d = 0; d < D; ++d)
        for (i64 h = 0; h < H; ++h)
            for (i64 w = 0; w < W; ++w) {
                i64 c[3] = {d, h, w};
                i64 a = c[axis_a], b = c[axis_b];
                const i64 nb = in[size_t(axis_b)];
                const i64 na = in[size_t(axis_a)];
                i64 ra, rb;
                switch (k) {
                    case 1: ra = nb - 1 - b; rb = a; break;
                    case 2: ra = na - 1 - a; rb = nb - 1 - b; break;
                    default: ra = b; rb = na - 1 - a; break;
                }
                c[axis_a] = ra;
                c[axis_b] = rb;
                r[(c[0] * out[1] + c[1]) * out[2] + c[2]] = t[(d * H + h) * W + w];
            }
    return r;
}

} // namespace detail

struct AugmentConfig {
    double p_rot = 0.2;
    double p_int = 0.1;
    double int_mag = 0.1;
};

// Joint 90-degree rotation of image and label with probability p_rot, then an
// image-only intensity shift with probability p_int. Rotations that would
// change the grid shape are restricted to 180 degrees.
inline Patch augment(const Patch& p, Rng& rng, const AugmentConfig& cfg = {}) {
    Patch out = p;
    if (rng.bernoulli(cfg.p_rot)) {
        static const int planes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
        const int pi = int(rng.uniform_int(0, 2));
        int k = int(rng.uniform_int(1, 3));
        const int a = planes[pi][0], b = planes[pi][1];
        if (out.image.dim(a) != out.image.dim(b) && k % 2 == 1) k = 2;
        out.image = detail::rot90(out.image, a, b, k);
        out.label = detail::rot90(out.label, a, b, k);
    }
    if (rng.bernoulli(cfg.p_int)) {
        const float shift = float(rng.uniform(-cfg.int_mag, cfg.int_mag));
        for (i64 i = 0; i < out.image.numel(); ++i)
            out.image[i] = std::min(1.0f, std::max(0.0f, out.image[i] + shift));
    }
    return out;
}

} // namespace cdpd
