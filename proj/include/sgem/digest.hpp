#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace sgem {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(const void* data, std::size_t len);
Digest sha256(std::string_view s);
Digest sha256_file(const std::filesystem::path& path);

std::string to_hex(const Digest& d);

} // namespace sgem
