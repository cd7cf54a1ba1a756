#include "mgbp/tensor.hpp"

#include <cstring>
#include <fstream>

namespace mgbp {

std::string Tensor::shape_str(const std::vector<int64_t>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

namespace {

constexpr char kMagic[4] = {'M', 'G', 'B', 'T'};
constexpr uint8_t kVersion = 1;

void put_u32_le(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

uint32_t get_u32_le(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void put_u64_le(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t get_u64_le(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

void write_mgbt_stream(const Tensor& t, std::string& out, MgbtDtype dtype) {
    out.append(kMagic, 4);
    out.push_back(static_cast<char>(kVersion));
    out.push_back(static_cast<char>(dtype));
    out.push_back(static_cast<char>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) {
        if (t.dim(i) > 0xffffffffll) throw io_error("dimension too large for MGBT shape field");
        put_u32_le(out, static_cast<uint32_t>(t.dim(i)));
    }
    if (dtype == MgbtDtype::f64) {
        for (int64_t i = 0; i < t.numel(); ++i) {
            uint64_t bits;
            const double v = t[i];
            std::memcpy(&bits, &v, 8);
            put_u64_le(out, bits);
        }
    } else {
        for (int64_t i = 0; i < t.numel(); ++i) {
            const float f = static_cast<float>(t[i]);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32_le(out, bits);
        }
    }
}

Tensor read_mgbt_stream(const uint8_t* data, size_t size, size_t& offset) {
    auto need = [&](size_t n) {
        if (offset + n > size) throw io_error("truncated MGBT data");
    };
    need(7);
    if (std::memcmp(data + offset, kMagic, 4) != 0) throw io_error("bad MGBT magic");
    offset += 4;
    const uint8_t version = data[offset++];
    if (version != kVersion) throw io_error("unsupported MGBT version " + std::to_string(version));
    const uint8_t dtype = data[offset++];
    if (dtype > 1) throw io_error("unknown MGBT dtype " + std::to_string(dtype));
    const uint8_t ndim = data[offset++];
    if (ndim < 1) throw io_error("MGBT ndim must be >= 1");
    std::vector<int64_t> shape(ndim);
    need(4u * ndim);
    int64_t numel = 1;
    for (int i = 0; i < ndim; ++i) {
        shape[static_cast<size_t>(i)] = get_u32_le(data + offset);
        offset += 4;
        numel *= shape[static_cast<size_t>(i)];
    }
    std::vector<double> values(static_cast<size_t>(numel));
    if (dtype == static_cast<uint8_t>(MgbtDtype::f64)) {
        need(8u * static_cast<size_t>(numel));
        for (int64_t i = 0; i < numel; ++i) {
            const uint64_t bits = get_u64_le(data + offset);
            offset += 8;
            double v;
            std::memcpy(&v, &bits, 8);
            values[static_cast<size_t>(i)] = v;
        }
    } else {
        need(4u * static_cast<size_t>(numel));
        for (int64_t i = 0; i < numel; ++i) {
            const uint32_t bits = get_u32_le(data + offset);
            offset += 4;
            float f;
            std::memcpy(&f, &bits, 4);
            values[static_cast<size_t>(i)] = static_cast<double>(f);
        }
    }
    return Tensor(std::move(shape), std::move(values));
}

void write_mgbt(const Tensor& t, const std::string& path, MgbtDtype dtype) {
    std::string buf;
    write_mgbt_stream(t, buf, dtype);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open " + path + " for writing");
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw io_error("failed writing " + path);
}

Tensor read_mgbt(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    size_t offset = 0;
    Tensor t = read_mgbt_stream(reinterpret_cast<const uint8_t*>(buf.data()), buf.size(), offset);
    if (offset != buf.size()) throw io_error("trailing bytes after MGBT payload in " + path);
    return t;
}

}  // namespace mgbp
