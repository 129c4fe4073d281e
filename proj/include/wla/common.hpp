#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace wla {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian and read/written natively");

// ---------------------------------------------------------------- errors

// Shape/dimension disagreement between tensors or configs.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

// Malformed or truncated on-disk data (bad magic, version, byte counts).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

// Filesystem-level failure (open/read/write).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

// Invalid configuration (geometry that admits no tokens, bad schedule, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

// Requested data does not exist (missing variable/level/time, meta mismatch).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error("data error: " + msg) {}
};

// Numerical failure (NaN/Inf where finite values are required).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

// ------------------------------------------------------------------- rng

// Deterministic RNG with a pinned bit stream (splitmix64 core) so that
// seeds reproduce across compilers and standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller, spare cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // integer in [0, n)
    uint64_t below(uint64_t n) { return next_u64() % n; }

    // independent child stream; used to derive per-step / per-shard seeds
    static uint64_t derive(uint64_t seed, uint64_t stream) {
        Rng r(seed ^ (0x6a09e667f3bcc909ULL + stream * 0x9e3779b97f4a7c15ULL));
        return r.next_u64();
    }

private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// ------------------------------------------------------------------ hash

// FNV-1a 64-bit; used for checkpoint fingerprints and shard completeness.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

// --------------------------------------------------------------- byte io

namespace io {

inline void put_bytes(std::vector<uint8_t>& out, const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    out.insert(out.end(), b, b + n);
}

template <typename T>
void put(std::vector<uint8_t>& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    put_bytes(out, &v, sizeof(T));
}

// Cursor over an in-memory byte buffer; throws FormatError on overrun,
// naming expected vs actual byte counts.
class Reader {
public:
    Reader(const uint8_t* data, size_t size) : data_(data), size_(size) {}

    template <typename T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_ + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    void get_bytes(void* out, size_t n) {
        need(n);
        std::memcpy(out, data_ + pos_, n);
        pos_ += n;
    }

    size_t pos() const { return pos_; }
    size_t remaining() const { return size_ - pos_; }

private:
    void need(size_t n) const {
        if (pos_ + n > size_) {
            throw FormatError("truncated input: need " + std::to_string(pos_ + n) +
                              " bytes, have " + std::to_string(size_));
        }
    }
    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
};

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const void* data, size_t size);
inline void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    write_file(path, bytes.data(), bytes.size());
}

}  // namespace io

}  // namespace wla
