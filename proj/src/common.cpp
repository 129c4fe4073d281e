#include "wla/common.hpp"

#include <fstream>

namespace wla::io {

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open for reading: " + path);
    auto size = static_cast<size_t>(f.tellg());
    f.seekg(0);
    std::vector<uint8_t> bytes(size);
    if (size > 0 && !f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
        throw IoError("short read: " + path);
    }
    return bytes;
}

void write_file(const std::string& path, const void* data, size_t size) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    if (size > 0) f.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!f) throw IoError("short write: " + path);
}

}  // namespace wla::io
