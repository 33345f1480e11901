#include "cdpd/data/volume.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include <zlib.h>

namespace cdpd {

namespace {

#pragma pack(push, 1)
struct NiftiHeader {
    i32 sizeof_hdr;
    char data_type[10];
    char db_name[18];
    i32 extents;
    int16_t session_error;
    char regular;
    char dim_info;
    int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    int16_t intent_code;
    int16_t datatype;
    int16_t bitpix;
    int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    i32 glmax, glmin;
    char descrip[80];
    char aux_file[24];
    int16_t qform_code, sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4], srow_y[4], srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)

static_assert(sizeof(NiftiHeader) == 348, "NIfTI-1 header must be 348 bytes");

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<char> read_file_bytes(const std::string& path) {
    if (ends_with(path, ".gz")) {
        gzFile f = gzopen(path.c_str(), "rb");
        CDPD_CHECK(f != nullptr, "cannot open ", path);
        std::vector<char> out;
        char buf[1 << 16];
        int n;
        while ((n = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + n);
        gzclose(f);
        CDPD_CHECK(n == 0, "gzip read error in ", path);
        return out;
    }
    std::ifstream f(path, std::ios::binary);
    CDPD_CHECK(f.good(), "cannot open ", path);
    return std::vector<char>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, const char* data, size_t n) {
    if (ends_with(path, ".gz")) {
        gzFile f = gzopen(path.c_str(), "wb");
        CDPD_CHECK(f != nullptr, "cannot open ", path, " for writing");
        size_t off = 0;
        while (off < n) {
            const unsigned chunk = unsigned(std::min<size_t>(n - off, 1u << 24));
            CDPD_CHECK(gzwrite(f, data + off, chunk) == int(chunk), "gzip write failed for ", path);
            off += chunk;
        }
        gzclose(f);
        return;
    }
    std::ofstream f(path, std::ios::binary);
    CDPD_CHECK(f.good(), "cannot open ", path, " for writing");
    f.write(data, std::streamsize(n));
    CDPD_CHECK(f.good(), "write failed for ", path);
}

enum NiftiType : int16_t {
    NT_UINT8 = 2,
    NT_INT16 = 4,
    NT_INT32 = 8,
    NT_FLOAT32 = 16,
    NT_FLOAT64 = 64,
    NT_UINT16 = 512,
};

template <class Src>
void copy_voxels(const char* raw, i64 n, float* dst, double slope, double inter) {
    const Src* src = reinterpret_cast<const Src*>(raw);
    for (i64 i = 0; i < n; ++i) dst[i] = float(double(src[i]) * slope + inter);
}

} // namespace

Volume read_volume(const std::string& path, VolumeKind kind) {
    if (ends_with(path, ".raw")) return read_raw_volume(path, kind);
    const std::vector<char> bytes = read_file_bytes(path);
    CDPD_CHECK(bytes.size() >= sizeof(NiftiHeader), path, ": truncated NIfTI header");
    NiftiHeader hdr;
    std::memcpy(&hdr, bytes.data(), sizeof(hdr));
    CDPD_CHECK(hdr.sizeof_hdr == 348, path, ": not a NIfTI-1 file (sizeof_hdr=", hdr.sizeof_hdr, ")");
    CDPD_CHECK(hdr.dim[0] >= 3, path, ": expected a 3D volume, dim[0]=", hdr.dim[0]);
    for (int a = 4; a <= hdr.dim[0]; ++a)
        CDPD_CHECK(hdr.dim[a] <= 1, path, ": higher dimensions are not supported");
    const i64 nx = hdr.dim[1], ny = hdr.dim[2], nz = hdr.dim[3];
    const i64 n = nx * ny * nz;
    const size_t off = size_t(hdr.vox_offset);
    CDPD_CHECK(off >= 348 && off < bytes.size(), path, ": bad vox_offset");
    const double slope = (hdr.scl_slope == 0.0f) ? 1.0 : double(hdr.scl_slope);
    const double inter = double(hdr.scl_inter);

    Volume v;
    v.kind = kind;
    v.spacing = {double(hdr.pixdim[3]), double(hdr.pixdim[2]), double(hdr.pixdim[1])};
    v.data = Tensor<float>({nz, ny, nx});
    const char* raw = bytes.data() + off;
    const size_t need = size_t(n) * size_t(hdr.bitpix / 8);
    CDPD_CHECK(bytes.size() - off >= need, path, ": voxel data truncated");
    switch (hdr.datatype) {
        case NT_UINT8: copy_voxels<u8>(raw, n, v.data.data(), slope, inter); break;
        case NT_INT16: copy_voxels<int16_t>(raw, n, v.data.data(), slope, inter); break;
        case NT_UINT16: copy_voxels<uint16_t>(raw, n, v.data.data(), slope, inter); break;
        case NT_INT32: copy_voxels<i32>(raw, n, v.data.data(), slope, inter); break;
        case NT_FLOAT32: copy_voxels<float>(raw, n, v.data.data(), slope, inter); break;
        case NT_FLOAT64: copy_voxels<double>(raw, n, v.data.data(), slope, inter); break;
        default: fail(path, ": unsupported NIfTI datatype ", hdr.datatype);
    }
    v.validate();
    return v;
}

void write_volume(const std::string& path, const Volume& v) {
    if (ends_with(path, ".raw")) {
        write_raw_volume(path, v);
        return;
    }
    v.validate();
    NiftiHeader hdr;
    std::memset(&hdr, 0, sizeof(hdr));
    hdr.sizeof_hdr = 348;
    hdr.regular = 'r';
    hdr.dim[0] = 3;
    hdr.dim[1] = int16_t(v.dim(2));
    hdr.dim[2] = int16_t(v.dim(1));
    hdr.dim[3] = int16_t(v.dim(0));
    for (int i = 4; i < 8; ++i) hdr.dim[i] = 1;
    hdr.pixdim[0] = 1.0f;
    hdr.pixdim[1] = float(v.spacing[2]);
    hdr.pixdim[2] = float(v.spacing[1]);
    hdr.pixdim[3] = float(v.spacing[0]);
    hdr.vox_offset = 352.0f;
    hdr.scl_slope = 1.0f;
    hdr.xyzt_units = 2; // mm
    std::memcpy(hdr.magic, "n+1", 4);

    std::vector<char> bytes;
    const i64 n = v.data.numel();
    if (v.kind == VolumeKind::label) {
        hdr.datatype = NT_INT16;
        hdr.bitpix = 16;
        bytes.resize(352 + size_t(n) * 2, 0);
        int16_t* dst = reinterpret_cast<int16_t*>(bytes.data() + 352);
        for (i64 i = 0; i < n; ++i) dst[i] = int16_t(v.data[i]);
    } else {
        hdr.datatype = NT_FLOAT32;
        hdr.bitpix = 32;
        bytes.resize(352 + size_t(n) * 4, 0);
        std::memcpy(bytes.data() + 352, v.data.data(), size_t(n) * 4);
    }
    std::memcpy(bytes.data(), &hdr, sizeof(hdr));
    write_file_bytes(path, bytes.data(), bytes.size());
}

Volume read_raw_volume(const std::string& path, VolumeKind kind) {
    const std::vector<char> bytes = read_file_bytes(path);
    CDPD_CHECK(bytes.size() >= 28, path, ": truncated raw volume header");
    u32 dims[3];
    float sp[3];
    std::memcpy(dims, bytes.data(), 12);
    std::memcpy(sp, bytes.data() + 12, 12);
    const i64 n = i64(dims[0]) * dims[1] * dims[2];
    CDPD_CHECK(bytes.size() == 24 + size_t(n) * 4, path, ": raw volume size mismatch");
    Volume v;
    v.kind = kind;
    v.spacing = {double(sp[0]), double(sp[1]), double(sp[2])};
    v.data = Tensor<float>({i64(dims[0]), i64(dims[1]), i64(dims[2])});
    std::memcpy(v.data.data(), bytes.data() + 24, size_t(n) * 4);
    v.validate();
    return v;
}

void write_raw_volume(const std::string& path, const Volume& v) {
    v.validate();
    u32 dims[3] = {u32(v.dim(0)), u32(v.dim(1)), u32(v.dim(2))};
    float sp[3] = {float(v.spacing[0]), float(v.spacing[1]), float(v.spacing[2])};
    std::vector<char> bytes(24 + size_t(v.data.numel()) * 4);
    std::memcpy(bytes.data(), dims, 12);
    std::memcpy(bytes.data() + 12, sp, 12);
    std::memcpy(bytes.data() + 24, v.data.data(), size_t(v.data.numel()) * 4);
    write_file_bytes(path, bytes.data(), bytes.size());
}

} // namespace cdpd
