#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vlg/common.hpp"

namespace vlg {

enum class Dtype : std::uint8_t { F32, I32 };

const char* dtype_name(Dtype dtype);
Dtype dtype_from_name(const std::string& name);

// In-memory tensor backed by the on-disk container below. Exactly one of the
// two payload vectors is populated, matching `dtype`.
struct Tensor {
    Dtype dtype = Dtype::F32;
    std::vector<std::int64_t> shape;
    std::vector<float> f32;
    std::vector<std::int32_t> i32;

    std::int64_t numel() const;

    static Tensor from_f32(std::vector<std::int64_t> shape, std::vector<float> data);
    static Tensor from_i32(std::vector<std::int64_t> shape, std::vector<std::int32_t> data);
};

// Container layout, all integers little-endian:
//   magic "TNSR" | u32 version=1 | u64 header_len | JSON header | payload
// JSON header: {"dtype":"f32"|"i32","order":"row-major","shape":[...]}.
// Payload is row-major little-endian, 4 bytes per element.
inline constexpr char kTensorMagic[4] = {'T', 'N', 'S', 'R'};
inline constexpr std::uint32_t kTensorVersion = 1;

void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

// Serialized form, shared by file IO and byte-level tests.
std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(const std::uint8_t* bytes, std::size_t size);

}  // namespace vlg
