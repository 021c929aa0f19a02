#pragma once

// Flat binary artifact framing. All multi-byte fields are little-endian; all
// tensor payloads are row-major f32.
//
//   "SGEM"  u16 version, 32-byte config digest, then per tensor:
//           u16 name length, name bytes, u8 rank, u32 extents, f32 data.
//           Records run to end-of-file; a mid-record EOF is a load error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "sgem/digest.hpp"
#include "sgem/errors.hpp"
#include "sgem/tensor.hpp"

namespace sgem {

inline constexpr std::uint16_t kContainerVersion = 1;

struct TensorContainer {
    std::uint16_t version = kContainerVersion;
    Digest digest{};
    std::map<std::string, TensorXf> tensors; // name-sorted, fixing byte layout
};

void write_tensor_container(const std::filesystem::path& path, const TensorContainer& c);
TensorContainer read_tensor_container(const std::filesystem::path& path);

// Low-level helpers shared by the FLOW / FRMS writers.
namespace bin {

void write_exact(std::ostream& os, const void* data, std::size_t len);
void read_exact(std::istream& is, void* data, std::size_t len, const std::string& what);

inline void write_u16(std::ostream& os, std::uint16_t v) { write_exact(os, &v, 2); }
inline void write_u32(std::ostream& os, std::uint32_t v) { write_exact(os, &v, 4); }
inline void write_f32(std::ostream& os, const float* v, std::size_t n) {
    write_exact(os, v, n * sizeof(float));
}
std::uint16_t read_u16(std::istream& is, const std::string& what);
std::uint32_t read_u32(std::istream& is, const std::string& what);
void read_f32(std::istream& is, float* v, std::size_t n, const std::string& what);

void expect_magic(std::istream& is, const char magic[4], const std::string& what);

} // namespace bin

} // namespace sgem
