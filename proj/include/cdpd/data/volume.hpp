#pragma once

#include <array>
#include <string>

#include "cdpd/core/tensor.hpp"

namespace cdpd {

enum class VolumeKind { image, label };

// A scalar 3D grid with voxel spacing, ordered (D, H, W). Label volumes keep
// non-negative integer values (validated on load); 0 is background.
struct Volume {
    VolumeKind kind = VolumeKind::image;
    std::array<double, 3> spacing{1.0, 1.0, 1.0}; // mm, (d, h, w)
    Tensor<float> data;                            // {D, H, W}

    i64 dim(int i) const { return data.dim(i); }

    void validate() const {
        CDPD_CHECK(data.rank() == 3, "volume must be rank 3, got ", shape_str(data.shape()));
        for (double s : spacing) CDPD_CHECK(s > 0, "voxel spacing must be positive, got ", s);
        if (kind == VolumeKind::label) {
            for (i64 i = 0; i < data.numel(); ++i) {
                const float v = data[i];
                CDPD_CHECK(v >= 0 && v == float(i64(v)),
                           "label volume contains non-integer or negative value ", v,
                           " at index ", i);
            }
        }
    }

    Tensor<i32> labels_as_int() const {
        CDPD_CHECK(kind == VolumeKind::label, "labels_as_int on an image volume");
        Tensor<i32> out(data.shape());
        for (i64 i = 0; i < data.numel(); ++i) out[i] = i32(data[i]);
        return out;
    }
};

// NIfTI-1 (.nii / .nii.gz) and a small raw format for fixtures:
//   u32 dims[3] (d,h,w), f32 spacing[3] (mm), then f32 voxels, little endian.
Volume read_volume(const std::string& path, VolumeKind kind);
void write_volume(const std::string& path, const Volume& v);

Volume read_raw_volume(const std::string& path, VolumeKind kind);
void write_raw_volume(const std::string& path, const Volume& v);

} // namespace cdpd
