#pragma once
// SPDX-License-Identifier: Apache-2.0
//
// 3D scalar volumes and binary masks with physical voxel spacing, plus
// file IO. Two on-disk forms are supported:
//
//   * a native container (magic "HYPSVOL1" + version), little-endian,
//     dtype uint8 or float64, x-fastest voxel order; see README for the
//     byte layout,
//   * a read-only subset of NIfTI-1: single-file .nii, datatypes uint8 /
//     int16 / float32, with byte-swapped headers detected via sizeof_hdr.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hyps/binio.hpp"
#include "hyps/errors.hpp"

namespace hyps {

struct Spacing {
    double x = 1.0, y = 1.0, z = 1.0;
    bool operator==(const Spacing&) const = default;
};

namespace detail {
inline std::size_t vol_index(std::size_t x, std::size_t y, std::size_t z,
                             std::size_t nx, std::size_t ny) {
    return (z * ny + y) * nx + x;
}
} // namespace detail

class Volume {
public:
    Volume() = default;
    Volume(std::size_t nx, std::size_t ny, std::size_t nz, Spacing sp = {})
        : nx_(nx), ny_(ny), nz_(nz), spacing_(sp), v_(nx * ny * nz, 0.0) {}

    std::size_t nx() const { return nx_; }
    std::size_t ny() const { return ny_; }
    std::size_t nz() const { return nz_; }
    std::size_t size() const { return v_.size(); }
    const Spacing& spacing() const { return spacing_; }
    void set_spacing(Spacing s) { spacing_ = s; }

    double& at(std::size_t x, std::size_t y, std::size_t z) {
        return v_[detail::vol_index(x, y, z, nx_, ny_)];
    }
    double at(std::size_t x, std::size_t y, std::size_t z) const {
        return v_[detail::vol_index(x, y, z, nx_, ny_)];
    }
    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }

    bool same_grid(const Volume& o) const {
        return nx_ == o.nx_ && ny_ == o.ny_ && nz_ == o.nz_ && spacing_ == o.spacing_;
    }
    bool operator==(const Volume& o) const { return same_grid(o) && v_ == o.v_; }
    std::string shape_str() const {
        std::ostringstream ss;
        ss << nx_ << "x" << ny_ << "x" << nz_;
        return ss.str();
    }

private:
    std::size_t nx_ = 0, ny_ = 0, nz_ = 0;
    Spacing spacing_;
    std::vector<double> v_;
};

class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(std::size_t nx, std::size_t ny, std::size_t nz, Spacing sp = {})
        : nx_(nx), ny_(ny), nz_(nz), spacing_(sp), v_(nx * ny * nz, 0) {}

    std::size_t nx() const { return nx_; }
    std::size_t ny() const { return ny_; }
    std::size_t nz() const { return nz_; }
    std::size_t size() const { return v_.size(); }
    const Spacing& spacing() const { return spacing_; }
    void set_spacing(Spacing s) { spacing_ = s; }

    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t z) {
        return v_[detail::vol_index(x, y, z, nx_, ny_)];
    }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t z) const {
        return v_[detail::vol_index(x, y, z, nx_, ny_)];
    }
    std::uint8_t* data() { return v_.data(); }
    const std::uint8_t* data() const { return v_.data(); }

    std::size_t count() const {
        std::size_t c = 0;
        for (std::uint8_t b : v_) c += (b != 0);
        return c;
    }
    bool same_grid(const BinaryMask& o) const {
        return nx_ == o.nx_ && ny_ == o.ny_ && nz_ == o.nz_ && spacing_ == o.spacing_;
    }
    std::string shape_str() const {
        std::ostringstream ss;
        ss << nx_ << "x" << ny_ << "x" << nz_;
        return ss.str();
    }
    bool operator==(const BinaryMask&) const = default;

private:
    std::size_t nx_ = 0, ny_ = 0, nz_ = 0;
    Spacing spacing_;
    std::vector<std::uint8_t> v_;
};

inline BinaryMask to_mask(const Volume& v, double threshold = 0.5) {
    BinaryMask m(v.nx(), v.ny(), v.nz(), v.spacing());
    for (std::size_t i = 0; i < v.size(); ++i) m.data()[i] = v.data()[i] >= threshold ? 1 : 0;
    return m;
}

inline Volume to_volume(const BinaryMask& m) {
    Volume v(m.nx(), m.ny(), m.nz(), m.spacing());
    for (std::size_t i = 0; i < m.size(); ++i) v.data()[i] = static_cast<double>(m.data()[i]);
    return v;
}

// ---- native container ------------------------------------------------

namespace detail {

constexpr char kVolMagic[8] = {'H', 'Y', 'P', 'S', 'V', 'O', 'L', '1'};
constexpr std::uint32_t kVolVersion = 1;
constexpr std::uint32_t kDtypeU8 = 1;
constexpr std::uint32_t kDtypeF64 = 2;

inline void write_vol_header(std::ostream& os, std::uint32_t dtype, std::size_t nx,
                             std::size_t ny, std::size_t nz, const Spacing& sp) {
    os.write(kVolMagic, 8);
    put_u32(os, kVolVersion);
    put_u32(os, dtype);
    put_u32(os, static_cast<std::uint32_t>(nx));
    put_u32(os, static_cast<std::uint32_t>(ny));
    put_u32(os, static_cast<std::uint32_t>(nz));
    put_f64(os, sp.x);
    put_f64(os, sp.y);
    put_f64(os, sp.z);
}

struct VolHeader {
    std::uint32_t dtype, nx, ny, nz;
    Spacing spacing;
};

inline VolHeader read_vol_header(std::istream& is, const std::string& path) {
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kVolMagic, 8) != 0)
        throw FormatError(path + ": bad magic at offset 0");
    const std::uint32_t version = get_u32(is, path + ": version at offset 8");
    if (version != kVolVersion)
        throw FormatError(path + ": unsupported version " + std::to_string(version) +
                          " at offset 8");
    VolHeader h;
    h.dtype = get_u32(is, path + ": dtype at offset 12");
    if (h.dtype != kDtypeU8 && h.dtype != kDtypeF64)
        throw FormatError(path + ": unknown dtype " + std::to_string(h.dtype) +
                          " at offset 12");
    h.nx = get_u32(is, path + ": nx at offset 16");
    h.ny = get_u32(is, path + ": ny at offset 20");
    h.nz = get_u32(is, path + ": nz at offset 24");
    if (h.nx == 0 || h.ny == 0 || h.nz == 0)
        throw FormatError(path + ": zero dimension at offset 16");
    h.spacing.x = get_f64(is, path + ": spacing at offset 28");
    h.spacing.y = get_f64(is, path + ": spacing at offset 36");
    h.spacing.z = get_f64(is, path + ": spacing at offset 44");
    if (!(h.spacing.x > 0.0) || !(h.spacing.y > 0.0) || !(h.spacing.z > 0.0))
        throw FormatError(path + ": non-positive spacing at offset 28");
    return h;
}

inline std::ifstream open_binary_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError(path + ": cannot open for reading");
    return is;
}

inline std::ofstream open_binary_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError(path + ": cannot open for writing");
    return os;
}

} // namespace detail

inline void write_volume(const Volume& v, const std::string& path) {
    auto os = detail::open_binary_out(path);
    detail::write_vol_header(os, detail::kDtypeF64, v.nx(), v.ny(), v.nz(), v.spacing());
    for (std::size_t i = 0; i < v.size(); ++i) put_f64(os, v.data()[i]);
    if (!os) throw FormatError(path + ": write failed");
}

inline void write_mask(const BinaryMask& m, const std::string& path) {
    auto os = detail::open_binary_out(path);
    detail::write_vol_header(os, detail::kDtypeU8, m.nx(), m.ny(), m.nz(), m.spacing());
    os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size()));
    if (!os) throw FormatError(path + ": write failed");
}

// ---- NIfTI-1 subset --------------------------------------------------

namespace detail {

inline std::int16_t swap16(std::int16_t v) {
    const std::uint16_t u = static_cast<std::uint16_t>(v);
    return static_cast<std::int16_t>(static_cast<std::uint16_t>((u >> 8) | (u << 8)));
}

inline std::int32_t swap32i(std::int32_t v) {
    std::uint32_t u = static_cast<std::uint32_t>(v);
    u = ((u & 0xff000000u) >> 24) | ((u & 0x00ff0000u) >> 8) |
        ((u & 0x0000ff00u) << 8) | ((u & 0x000000ffu) << 24);
    return static_cast<std::int32_t>(u);
}

inline float swapf(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    u = ((u & 0xff000000u) >> 24) | ((u & 0x00ff0000u) >> 8) |
        ((u & 0x0000ff00u) << 8) | ((u & 0x000000ffu) << 24);
    float out;
    std::memcpy(&out, &u, 4);
    return out;
}

template <typename T>
T read_at(const std::vector<unsigned char>& buf, std::size_t offset) {
    T v;
    std::memcpy(&v, buf.data() + offset, sizeof(T));
    return v;
}

inline Volume read_nifti(const std::vector<unsigned char>& buf, const std::string& path) {
    if (buf.size() < 352)
        throw FormatError(path + ": file shorter than the 348-byte header plus extension flag");
    std::int32_t sizeof_hdr = read_at<std::int32_t>(buf, 0);
    bool swap = false;
    if (sizeof_hdr != 348) {
        if (swap32i(sizeof_hdr) == 348) swap = true;
        else throw FormatError(path + ": sizeof_hdr at offset 0 is neither 348 nor byte-swapped 348");
    }
    char magic[4];
    std::memcpy(magic, buf.data() + 344, 4);
    if (std::memcmp(magic, "n+1", 4) != 0) {
        if (std::memcmp(magic, "ni1", 4) == 0)
            throw FormatError(path + ": two-file NIfTI (magic \"ni1\" at offset 344) is not supported");
        throw FormatError(path + ": bad magic at offset 344");
    }

    auto i16 = [&](std::size_t off) {
        std::int16_t v = read_at<std::int16_t>(buf, off);
        return swap ? swap16(v) : v;
    };
    auto f32 = [&](std::size_t off) {
        float v = read_at<float>(buf, off);
        return swap ? swapf(v) : v;
    };

    const std::int16_t ndim = i16(40);
    if (ndim < 1 || ndim > 7)
        throw FormatError(path + ": dim[0]=" + std::to_string(ndim) + " at offset 40 out of range");
    std::size_t dim[3] = {1, 1, 1};
    for (int a = 0; a < 3; ++a) {
        if (a < ndim) {
            const std::int16_t d = i16(40 + 2 * (a + 1));
            if (d < 1)
                throw FormatError(path + ": dim[" + std::to_string(a + 1) + "] at offset " +
                                  std::to_string(40 + 2 * (a + 1)) + " is not positive");
            dim[a] = static_cast<std::size_t>(d);
        }
    }
    for (int a = 3; a < ndim; ++a) {
        const std::int16_t d = i16(40 + 2 * (a + 1));
        if (d > 1)
            throw FormatError(path + ": dim[" + std::to_string(a + 1) +
                              "]>1; only 3D volumes are supported");
    }

    const std::int16_t datatype = i16(70);
    if (datatype != 2 && datatype != 4 && datatype != 16)
        throw FormatError(path + ": datatype " + std::to_string(datatype) +
                          " at offset 70 not in the supported set {2 uint8, 4 int16, 16 float32}");
    const std::size_t elem = datatype == 2 ? 1 : datatype == 4 ? 2 : 4;

    Spacing sp;
    sp.x = static_cast<double>(f32(76 + 4));
    sp.y = static_cast<double>(f32(76 + 8));
    sp.z = static_cast<double>(f32(76 + 12));
    if (!(sp.x > 0.0) || !(sp.y > 0.0) || !(sp.z > 0.0))
        throw FormatError(path + ": non-positive pixdim at offset 80");

    const float vox_offset_f = f32(108);
    if (!(vox_offset_f >= 348.0f))
        throw FormatError(path + ": vox_offset at offset 108 is below the header size");
    const std::size_t vox_offset = static_cast<std::size_t>(vox_offset_f);

    const std::size_t nvox = dim[0] * dim[1] * dim[2];
    if (buf.size() < vox_offset + nvox * elem)
        throw FormatError(path + ": payload truncated at offset " + std::to_string(vox_offset) +
                          " (need " + std::to_string(nvox * elem) + " bytes)");

    Volume out(dim[0], dim[1], dim[2], sp);
    const unsigned char* p = buf.data() + vox_offset;
    for (std::size_t i = 0; i < nvox; ++i) {
        double val = 0.0;
        switch (datatype) {
            case 2:
                val = static_cast<double>(p[i]);
                break;
            case 4: {
                std::int16_t v;
                std::memcpy(&v, p + 2 * i, 2);
                if (swap) v = swap16(v);
                val = static_cast<double>(v);
                break;
            }
            case 16: {
                float v;
                std::memcpy(&v, p + 4 * i, 4);
                if (swap) v = swapf(v);
                val = static_cast<double>(v);
                break;
            }
        }
        out.data()[i] = val;
    }
    return out;
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

} // namespace detail

// Dispatches on file extension: .nii goes through the NIfTI reader,
// everything else through the native container. Values come back as
// doubles regardless of the on-disk dtype.
inline Volume read_volume(const std::string& path) {
    auto is = detail::open_binary_in(path);
    if (detail::has_suffix(path, ".nii")) {
        std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)),
                                       std::istreambuf_iterator<char>());
        return detail::read_nifti(buf, path);
    }
    const detail::VolHeader h = detail::read_vol_header(is, path);
    Volume out(h.nx, h.ny, h.nz, h.spacing);
    if (h.dtype == detail::kDtypeU8) {
        std::vector<unsigned char> raw(out.size());
        if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
            throw FormatError(path + ": payload truncated at offset 52");
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = static_cast<double>(raw[i]);
    } else {
        for (std::size_t i = 0; i < out.size(); ++i)
            out.data()[i] = get_f64(is, path + ": payload at offset 52");
    }
    return out;
}

inline BinaryMask read_mask(const std::string& path, double threshold = 0.5) {
    return to_mask(read_volume(path), threshold);
}

} // namespace hyps
