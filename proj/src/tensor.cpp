#include "vlg/tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace vlg {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::int64_t checked_numel(const std::vector<std::int64_t>& shape) {
    if (shape.empty()) throw IoError("tensor shape must have rank >= 1");
    std::int64_t n = 1;
    for (std::int64_t e : shape) {
        if (e < 0) throw IoError("tensor extent must be non-negative");
        if (e > 0 && n > std::numeric_limits<std::int64_t>::max() / e)
            throw IoError("tensor extents overflow 63 bits");
        n *= e;
    }
    return n;
}

}  // namespace

const char* dtype_name(Dtype dtype) { return dtype == Dtype::F32 ? "f32" : "i32"; }

Dtype dtype_from_name(const std::string& name) {
    if (name == "f32") return Dtype::F32;
    if (name == "i32") return Dtype::I32;
    throw IoError("unknown tensor dtype tag: " + name);
}

std::int64_t Tensor::numel() const { return checked_numel(shape); }

Tensor Tensor::from_f32(std::vector<std::int64_t> shape, std::vector<float> data) {
    Tensor t;
    t.dtype = Dtype::F32;
    t.shape = std::move(shape);
    t.f32 = std::move(data);
    if (t.numel() != static_cast<std::int64_t>(t.f32.size()))
        throw IoError("payload length does not match tensor shape");
    return t;
}

Tensor Tensor::from_i32(std::vector<std::int64_t> shape, std::vector<std::int32_t> data) {
    Tensor t;
    t.dtype = Dtype::I32;
    t.shape = std::move(shape);
    t.i32 = std::move(data);
    if (t.numel() != static_cast<std::int64_t>(t.i32.size()))
        throw IoError("payload length does not match tensor shape");
    return t;
}

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
    const std::int64_t n = tensor.numel();
    const std::size_t count =
        tensor.dtype == Dtype::F32 ? tensor.f32.size() : tensor.i32.size();
    if (static_cast<std::int64_t>(count) != n)
        throw IoError("payload length does not match tensor shape");

    nlohmann::json header;
    header["dtype"] = dtype_name(tensor.dtype);
    header["order"] = "row-major";
    header["shape"] = tensor.shape;
    const std::string header_str = header.dump();

    std::vector<std::uint8_t> out;
    out.reserve(16 + header_str.size() + static_cast<std::size_t>(n) * 4);
    out.insert(out.end(), kTensorMagic, kTensorMagic + 4);
    put_u32(out, kTensorVersion);
    put_u64(out, header_str.size());
    out.insert(out.end(), header_str.begin(), header_str.end());
    for (std::int64_t i = 0; i < n; ++i) {
        std::uint32_t bits;
        if (tensor.dtype == Dtype::F32)
            bits = std::bit_cast<std::uint32_t>(tensor.f32[static_cast<std::size_t>(i)]);
        else
            bits = std::bit_cast<std::uint32_t>(tensor.i32[static_cast<std::size_t>(i)]);
        put_u32(out, bits);
    }
    return out;
}

Tensor decode_tensor(const std::uint8_t* bytes, std::size_t size) {
    if (size < 16) throw IoError("tensor file truncated: no header");
    if (std::memcmp(bytes, kTensorMagic, 4) != 0) throw IoError("bad tensor magic");
    const std::uint32_t version = get_u32(bytes + 4);
    if (version != kTensorVersion)
        throw IoError("unsupported tensor version " + std::to_string(version));
    const std::uint64_t header_len = get_u64(bytes + 8);
    if (header_len > size - 16) throw IoError("tensor file truncated: header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes + 16, bytes + 16 + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad tensor header JSON: ") + e.what());
    }
    if (!header.contains("dtype") || !header.contains("shape"))
        throw IoError("tensor header missing dtype/shape");
    if (header.value("order", "") != std::string("row-major"))
        throw IoError("tensor header order must be row-major");

    Tensor t;
    t.dtype = dtype_from_name(header["dtype"].get<std::string>());
    t.shape = header["shape"].get<std::vector<std::int64_t>>();
    const std::int64_t n = checked_numel(t.shape);

    const std::size_t payload_off = 16 + static_cast<std::size_t>(header_len);
    const std::size_t payload_bytes = size - payload_off;
    if (payload_bytes != static_cast<std::uint64_t>(n) * 4) {
        if (payload_bytes < static_cast<std::uint64_t>(n) * 4)
            throw IoError("tensor payload truncated");
        throw IoError("tensor payload has trailing bytes");
    }

    const std::uint8_t* p = bytes + payload_off;
    if (t.dtype == Dtype::F32) {
        t.f32.resize(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i)
            t.f32[static_cast<std::size_t>(i)] = std::bit_cast<float>(get_u32(p + 4 * i));
    } else {
        t.i32.resize(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i)
            t.i32[static_cast<std::size_t>(i)] = std::bit_cast<std::int32_t>(get_u32(p + 4 * i));
    }
    return t;
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
    const std::vector<std::uint8_t> bytes = encode_tensor(tensor);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open tensor file: " + path.string());
    const std::streamsize size = in.tellg();
    in.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) throw IoError("read failed: " + path.string());
    return decode_tensor(bytes.data(), bytes.size());
}

}  // namespace vlg
