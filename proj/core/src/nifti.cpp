#include "promptseg/nifti.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace promptseg::nifti {

namespace {

constexpr int kHeaderSize = 348;
constexpr int kDataOffset = 352;

enum NiftiType : std::int16_t {
    kUInt8 = 2,
    kInt16 = 4,
    kInt32 = 8,
    kFloat32 = 16,
    kFloat64 = 64,
    kInt8 = 256,
    kUInt16 = 512,
    kUInt32 = 768,
};

template <class T>
T load(const char* p, bool swap) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    if (swap && sizeof(T) > 1) {
        auto* b = reinterpret_cast<unsigned char*>(&v);
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
    return v;
}

template <class T>
void store(std::string& buf, std::size_t offset, T v) {
    std::memcpy(buf.data() + offset, &v, sizeof(T));
}

Error parse_error(const std::string& msg) { return Error(ErrorCode::Parse, "nifti: " + msg); }

std::array<std::array<double, 3>, 3> quaternion_matrix(double b, double c, double d, double qfac) {
    double a = 1.0 - (b * b + c * c + d * d);
    a = a < 1e-7 ? 0.0 : std::sqrt(a);
    std::array<std::array<double, 3>, 3> r{};
    r[0] = {a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)};
    r[1] = {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)};
    r[2] = {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b};
    for (auto& row : r) row[2] *= qfac;
    return r;
}

bool ends_with_gz(const std::filesystem::path& p) {
    const auto s = p.string();
    return s.size() >= 3 && s.compare(s.size() - 3, 3, ".gz") == 0;
}

}  // namespace

Index3 Reorientation::to_native(const Index3& canonical) const {
    Index3 n{};
    for (int k = 0; k < 3; ++k) {
        const int a = native_axis[static_cast<std::size_t>(k)];
        n[a] = flip[static_cast<std::size_t>(k)] ? native_extent[a] - 1 - canonical[k] : canonical[k];
    }
    return n;
}

Index3 Reorientation::to_canonical(const Index3& native) const {
    Index3 c{};
    for (int k = 0; k < 3; ++k) {
        const int a = native_axis[static_cast<std::size_t>(k)];
        c[k] = flip[static_cast<std::size_t>(k)] ? native_extent[a] - 1 - native[a] : native[a];
    }
    return c;
}

std::string gunzip_if_needed(std::string_view bytes) {
    if (bytes.size() < 2 || static_cast<unsigned char>(bytes[0]) != 0x1f ||
        static_cast<unsigned char>(bytes[1]) != 0x8b) {
        return std::string(bytes);
    }
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw parse_error("inflateInit failed");
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
    zs.avail_in = static_cast<uInt>(bytes.size());
    std::string out;
    char chunk[1 << 16];
    int ret = Z_OK;
    while (ret != Z_STREAM_END) {
        zs.next_out = reinterpret_cast<Bytef*>(chunk);
        zs.avail_out = sizeof(chunk);
        ret = inflate(&zs, Z_NO_FLUSH);
        if (ret != Z_OK && ret != Z_STREAM_END) {
            inflateEnd(&zs);
            throw parse_error("corrupt gzip stream");
        }
        out.append(chunk, sizeof(chunk) - zs.avail_out);
        if (ret == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw parse_error("truncated gzip stream");
        }
    }
    inflateEnd(&zs);
    return out;
}

std::string gzip(std::string_view bytes) {
    z_stream zs{};
    if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 16 + MAX_WBITS, 8, Z_DEFAULT_STRATEGY) !=
        Z_OK) {
        throw Error(ErrorCode::Io, "deflateInit failed");
    }
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
    zs.avail_in = static_cast<uInt>(bytes.size());
    std::string out;
    char chunk[1 << 16];
    int ret = Z_OK;
    while (ret != Z_STREAM_END) {
        zs.next_out = reinterpret_cast<Bytef*>(chunk);
        zs.avail_out = sizeof(chunk);
        ret = deflate(&zs, Z_FINISH);
        out.append(chunk, sizeof(chunk) - zs.avail_out);
    }
    deflateEnd(&zs);
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_nii_bytes(const std::filesystem::path& path, const std::string& nii) {
    write_file(path, ends_with_gz(path) ? gzip(nii) : nii);
}

Image decode(std::string_view compressed) {
    const std::string bytes = gunzip_if_needed(compressed);
    if (bytes.size() < kHeaderSize) throw parse_error("file shorter than a NIfTI-1 header");
    const char* h = bytes.data();
    bool swap = false;
    if (load<std::int32_t>(h, false) != kHeaderSize) {
        if (load<std::int32_t>(h, true) != kHeaderSize) throw parse_error("bad sizeof_hdr");
        swap = true;
    }
    if (std::memcmp(h + 344, "n+1", 3) != 0) throw parse_error("not a single-file NIfTI-1 image");

    std::array<std::int16_t, 8> dim{};
    for (int i = 0; i < 8; ++i) dim[static_cast<std::size_t>(i)] = load<std::int16_t>(h + 40 + 2 * i, swap);
    if (dim[0] < 1 || dim[0] > 7) throw parse_error("invalid dim[0]");
    Extent3 native{1, 1, 1};
    for (int i = 0; i < 3 && i < dim[0]; ++i) native[i] = dim[static_cast<std::size_t>(i) + 1];
    for (int i = 4; i <= dim[0]; ++i) {
        if (dim[static_cast<std::size_t>(i)] > 1) throw parse_error("only 3D images are supported");
    }
    if (native.x < 1 || native.y < 1 || native.z < 1) throw parse_error("non-positive dimension");

    const auto datatype = load<std::int16_t>(h + 70, swap);
    std::array<float, 8> pixdim{};
    for (int i = 0; i < 8; ++i) pixdim[static_cast<std::size_t>(i)] = load<float>(h + 76 + 4 * i, swap);
    const auto vox_offset = static_cast<std::size_t>(load<float>(h + 108, swap));
    float slope = load<float>(h + 112, swap);
    const float inter = load<float>(h + 116, swap);
    if (slope == 0.0f || !std::isfinite(slope)) slope = 1.0f;

    std::size_t elem = 0;
    switch (datatype) {
        case kUInt8: case kInt8: elem = 1; break;
        case kInt16: case kUInt16: elem = 2; break;
        case kInt32: case kUInt32: case kFloat32: elem = 4; break;
        case kFloat64: elem = 8; break;
        default: throw parse_error("unsupported datatype " + std::to_string(datatype));
    }
    const auto n = static_cast<std::size_t>(native.voxels());
    if (vox_offset < kHeaderSize || bytes.size() < vox_offset + n * elem) {
        throw parse_error("voxel data truncated");
    }

    Grid<float> raw(native);
    const char* p = bytes.data() + vox_offset;
    for (std::size_t i = 0; i < n; ++i, p += elem) {
        double v = 0;
        switch (datatype) {
            case kUInt8: v = load<std::uint8_t>(p, swap); break;
            case kInt8: v = load<std::int8_t>(p, swap); break;
            case kInt16: v = load<std::int16_t>(p, swap); break;
            case kUInt16: v = load<std::uint16_t>(p, swap); break;
            case kInt32: v = load<std::int32_t>(p, swap); break;
            case kUInt32: v = load<std::uint32_t>(p, swap); break;
            case kFloat32: v = load<float>(p, swap); break;
            case kFloat64: v = load<double>(p, swap); break;
            default: break;
        }
        raw[i] = static_cast<float>(v * slope + inter);
    }

    // Voxel-to-world direction columns.
    std::array<std::array<double, 3>, 3> m{};
    const auto qform_code = load<std::int16_t>(h + 252, swap);
    const auto sform_code = load<std::int16_t>(h + 254, swap);
    Spacing3 native_spacing{};
    for (int i = 0; i < 3; ++i) {
        native_spacing[static_cast<std::size_t>(i)] = std::abs(pixdim[static_cast<std::size_t>(i) + 1]);
    }
    if (sform_code > 0) {
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
                    load<float>(h + 280 + 16 * r + 4 * c, swap);
    } else if (qform_code > 0) {
        const double qfac = pixdim[0] < 0 ? -1.0 : 1.0;
        m = quaternion_matrix(load<float>(h + 256, swap), load<float>(h + 260, swap),
                              load<float>(h + 264, swap), qfac);
    } else {
        m = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    }

    Reorientation reo;
    reo.native_extent = native;
    std::array<bool, 3> used{};
    for (int c = 0; c < 3; ++c) {
        int best = -1;
        double best_abs = -1;
        for (int r = 0; r < 3; ++r) {
            const double a = std::abs(m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
            if (!used[static_cast<std::size_t>(r)] && a > best_abs) {
                best = r;
                best_abs = a;
            }
        }
        used[static_cast<std::size_t>(best)] = true;
        reo.native_axis[static_cast<std::size_t>(best)] = c;
        reo.flip[static_cast<std::size_t>(best)] =
            m[static_cast<std::size_t>(best)][static_cast<std::size_t>(c)] < 0;
    }

    Image img;
    img.orientation = reo;
    img.header.assign(h, kHeaderSize);
    img.data = reo.is_identity() ? std::move(raw) : reo.canonical_from_native(raw);
    for (int k = 0; k < 3; ++k) {
        const double s = native_spacing[static_cast<std::size_t>(reo.native_axis[static_cast<std::size_t>(k)])];
        img.spacing[static_cast<std::size_t>(k)] = s > 0 ? s : 1.0;
    }
    return img;
}

Image read(const std::filesystem::path& path) { return decode(read_file(path)); }

Volume read_volume(const std::filesystem::path& path) {
    Image img = read(path);
    Volume v;
    v.data = std::move(img.data);
    v.spacing = img.spacing;
    v.unit = IntensityUnit::RawHU;
    return v;
}

LabelMap read_labels(const std::filesystem::path& path) {
    Image img = read(path);
    LabelMap l;
    l.labels = Grid<Label>(img.data.extent());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const float v = img.data[i];
        if (v < 0 || !std::isfinite(v)) throw parse_error("label map contains negative or non-finite values");
        l.labels[i] = static_cast<Label>(std::lround(v));
    }
    return l;
}

namespace {

std::string encode_raw(const Grid<float>& data, DataType type, const std::string* like_header,
                       const Spacing3& spacing) {
    const auto& e = data.extent();
    std::int16_t code = kFloat32;
    std::int16_t bitpix = 32;
    std::size_t elem = 4;
    switch (type) {
        case DataType::UInt8: code = kUInt8; bitpix = 8; elem = 1; break;
        case DataType::Int16: code = kInt16; bitpix = 16; elem = 2; break;
        case DataType::Float32: break;
    }
    std::string buf(kDataOffset + static_cast<std::size_t>(e.voxels()) * elem, '\0');
    if (like_header != nullptr && like_header->size() == kHeaderSize &&
        load<std::int32_t>(like_header->data(), false) == kHeaderSize) {
        std::memcpy(buf.data(), like_header->data(), kHeaderSize);
    } else {
        store<std::int32_t>(buf, 0, kHeaderSize);
        const float sx = static_cast<float>(spacing[0]);
        const float sy = static_cast<float>(spacing[1]);
        const float sz = static_cast<float>(spacing[2]);
        store<float>(buf, 76, 1.0f);  // qfac
        store<float>(buf, 80, sx);
        store<float>(buf, 84, sy);
        store<float>(buf, 88, sz);
        store<std::int16_t>(buf, 252, 1);  // qform_code: scanner
        store<std::int16_t>(buf, 254, 1);  // sform_code
        store<float>(buf, 280, sx);
        store<float>(buf, 300, sy);
        store<float>(buf, 320, sz);
        store<char>(buf, 123, 2);  // xyzt_units: mm
    }
    store<std::int16_t>(buf, 40, 3);
    store<std::int16_t>(buf, 42, static_cast<std::int16_t>(e.x));
    store<std::int16_t>(buf, 44, static_cast<std::int16_t>(e.y));
    store<std::int16_t>(buf, 46, static_cast<std::int16_t>(e.z));
    for (int i = 4; i < 8; ++i) store<std::int16_t>(buf, 40 + 2 * static_cast<std::size_t>(i), 1);
    store<std::int16_t>(buf, 70, code);
    store<std::int16_t>(buf, 72, bitpix);
    store<float>(buf, 108, static_cast<float>(kDataOffset));
    store<float>(buf, 112, 1.0f);
    store<float>(buf, 116, 0.0f);
    std::memcpy(buf.data() + 344, "n+1\0", 4);

    char* p = buf.data() + kDataOffset;
    for (std::size_t i = 0; i < data.size(); ++i, p += elem) {
        const float v = data[i];
        switch (type) {
            case DataType::UInt8: {
                const auto b = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
                std::memcpy(p, &b, 1);
                break;
            }
            case DataType::Int16: {
                const auto s = static_cast<std::int16_t>(std::clamp(std::lround(v), -32768L, 32767L));
                std::memcpy(p, &s, 2);
                break;
            }
            case DataType::Float32: std::memcpy(p, &v, 4); break;
        }
    }
    return buf;
}

}  // namespace

std::string encode(const Grid<float>& data, const Spacing3& spacing, DataType type) {
    for (double s : spacing) {
        if (!(s > 0)) throw Error(ErrorCode::InvalidInput, "nifti: spacing must be positive");
    }
    return encode_raw(data, type, nullptr, spacing);
}

std::string encode_like(const Image& like, const Grid<float>& canonical_data, DataType type) {
    require_same_extent(like.data, canonical_data, "encode_like");
    const Grid<float> native = like.orientation.is_identity()
                                   ? canonical_data
                                   : like.orientation.native_from_canonical(canonical_data);
    if (like.header.size() != kHeaderSize) return encode(native, like.spacing, type);
    return encode_raw(native, type, &like.header, like.spacing);
}

void write(const std::filesystem::path& path, const Grid<float>& data, const Spacing3& spacing,
           DataType type) {
    write_nii_bytes(path, encode(data, spacing, type));
}

void write_volume(const std::filesystem::path& path, const Volume& v) {
    write(path, v.data, v.spacing, DataType::Float32);
}

void write_labels(const std::filesystem::path& path, const Grid<Label>& labels, const Spacing3& spacing) {
    Grid<float> f(labels.extent());
    for (std::size_t i = 0; i < labels.size(); ++i) f[i] = labels[i];
    write(path, f, spacing, DataType::Int16);
}

void write_mask(const std::filesystem::path& path, const Mask& mask, const Spacing3& spacing) {
    Grid<float> f(mask.extent());
    for (std::size_t i = 0; i < mask.size(); ++i) f[i] = mask[i] ? 1.0f : 0.0f;
    write(path, f, spacing, DataType::UInt8);
}

}  // namespace promptseg::nifti
