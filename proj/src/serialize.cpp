#include "sgem/serialize.hpp"

#include <cstring>

namespace sgem {
namespace bin {

void write_exact(std::ostream& os, const void* data, std::size_t len) {
    os.write(static_cast<const char*>(data), std::streamsize(len));
    if (!os) throw IoError("write failed");
}

void read_exact(std::istream& is, void* data, std::size_t len, const std::string& what) {
    is.read(static_cast<char*>(data), std::streamsize(len));
    if (std::size_t(is.gcount()) != len)
        throw ParseError("truncated or unreadable " + what);
}

std::uint16_t read_u16(std::istream& is, const std::string& what) {
    std::uint16_t v;
    read_exact(is, &v, 2, what);
    return v;
}

std::uint32_t read_u32(std::istream& is, const std::string& what) {
    std::uint32_t v;
    read_exact(is, &v, 4, what);
    return v;
}

void read_f32(std::istream& is, float* v, std::size_t n, const std::string& what) {
    read_exact(is, v, n * sizeof(float), what);
}

void expect_magic(std::istream& is, const char magic[4], const std::string& what) {
    char got[4];
    read_exact(is, got, 4, what + " magic");
    if (std::memcmp(got, magic, 4) != 0)
        throw ParseError("bad magic in " + what + ": expected '" +
                         std::string(magic, 4) + "'");
}

} // namespace bin

void write_tensor_container(const std::filesystem::path& path, const TensorContainer& c) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    bin::write_exact(os, "SGEM", 4);
    bin::write_u16(os, c.version);
    bin::write_exact(os, c.digest.data(), c.digest.size());
    for (const auto& [name, t] : c.tensors) {
        require(name.size() <= 0xffff, "tensor name too long: " + name);
        bin::write_u16(os, std::uint16_t(name.size()));
        bin::write_exact(os, name.data(), name.size());
        const std::uint8_t rank = std::uint8_t(t.rank());
        bin::write_exact(os, &rank, 1);
        for (int d = 0; d < t.rank(); ++d) bin::write_u32(os, std::uint32_t(t.extent(d)));
        bin::write_f32(os, t.data(), std::size_t(t.size()));
    }
    os.flush();
    if (!os) throw IoError("write failed: " + path.string());
}

TensorContainer read_tensor_container(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    const std::string what = path.filename().string();

    TensorContainer c;
    bin::expect_magic(is, "SGEM", what);
    c.version = bin::read_u16(is, what + " version");
    if (c.version != kContainerVersion)
        throw ParseError("unsupported container version " + std::to_string(c.version) +
                         " in " + what);
    bin::read_exact(is, c.digest.data(), c.digest.size(), what + " digest");

    while (true) {
        if (is.peek() == std::char_traits<char>::eof()) break;
        const std::uint16_t name_len = bin::read_u16(is, what + " record header");
        std::string name(name_len, '\0');
        bin::read_exact(is, name.data(), name_len, what + " tensor name");
        std::uint8_t rank;
        bin::read_exact(is, &rank, 1, what + " tensor rank");
        std::vector<int> shape(rank);
        for (auto& e : shape) {
            const std::uint32_t ext = bin::read_u32(is, what + " tensor extent");
            if (ext == 0 || ext > (1u << 30))
                throw ParseError("implausible tensor extent in " + what);
            e = int(ext);
        }
        TensorXf t(shape);
        bin::read_f32(is, t.data(), std::size_t(t.size()), what + " tensor '" + name + "'");
        if (c.tensors.contains(name))
            throw ParseError("duplicate tensor name '" + name + "' in " + what);
        c.tensors.emplace(name, std::move(t));
    }
    return c;
}

} // namespace sgem
