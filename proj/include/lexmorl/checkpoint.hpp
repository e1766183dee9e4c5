#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "qfunction.hpp"
#include "rmsprop.hpp"

namespace lexmorl {

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    return fnv1a64(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

struct NetworkRecord {
    std::string name;
    nlohmann::json architecture;
    std::vector<double> params;
    RmsPropState optimizer;
};

/// Versioned binary container:
///   magic "LEXMORL1", u32 version, u64 step, str metadata-json, u32 count,
///   per network { str name, str architecture-json, f64[] params,
///                 f64 lr, f64 rho, f64 eps, f64[] mean-square },
///   u64 FNV-1a of everything before it.
/// Integers and reals are little-endian; str and arrays carry a u64 length.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;
    static constexpr char kMagic[8] = {'L', 'E', 'X', 'M', 'O', 'R', 'L', '1'};

    std::uint64_t step = 0;
    nlohmann::json metadata = nlohmann::json::object();
    std::vector<NetworkRecord> networks;

    void add(std::string name, const QFunction& f, const RmsPropState& opt) {
        networks.push_back({std::move(name), f.architecture(), {f.params().begin(), f.params().end()}, opt});
    }

    const NetworkRecord& network(std::string_view name) const {
        for (const auto& n : networks)
            if (n.name == name) return n;
        throw DataError("checkpoint has no network named '" + std::string(name) + "'");
    }
    bool has(std::string_view name) const {
        for (const auto& n : networks)
            if (n.name == name) return true;
        return false;
    }
};

namespace detail {

class ByteWriter {
public:
    void u32(std::uint32_t v) { put_le(v); }
    void u64(std::uint64_t v) { put_le(v); }
    void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
    void str(std::string_view s) {
        u64(s.size());
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }
    void f64s(std::span<const double> v) {
        u64(v.size());
        for (double x : v) f64(x);
    }
    void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
    std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
    template <typename T>
    void put_le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}
    std::uint32_t u32() { return get_le<std::uint32_t>(); }
    std::uint64_t u64() { return get_le<std::uint64_t>(); }
    double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s(reinterpret_cast<const char*>(b_.data() + pos_), static_cast<std::size_t>(n));
        pos_ += static_cast<std::size_t>(n);
        return s;
    }
    std::vector<double> f64s() {
        const std::uint64_t n = u64();
        if (n > remaining() / 8) throw DataError("checkpoint: array length exceeds file size");
        std::vector<double> v(static_cast<std::size_t>(n));
        for (double& x : v) x = f64();
        return v;
    }
    void raw(char* out, std::size_t n) {
        need(n);
        std::memcpy(out, b_.data() + pos_, n);
        pos_ += n;
    }
    std::size_t remaining() const { return b_.size() - pos_; }

private:
    void need(std::uint64_t n) const {
        if (n > remaining()) throw DataError("checkpoint: truncated");
    }
    template <typename T>
    T get_le() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b_[pos_ + i]) << (8 * i));
        pos_ += sizeof(T);
        return v;
    }
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
    detail::ByteWriter w;
    w.raw(Checkpoint::kMagic, sizeof(Checkpoint::kMagic));
    w.u32(Checkpoint::kVersion);
    w.u64(c.step);
    w.str(c.metadata.dump());
    w.u32(static_cast<std::uint32_t>(c.networks.size()));
    for (const auto& n : c.networks) {
        w.str(n.name);
        w.str(n.architecture.dump());
        w.f64s(n.params);
        w.f64(n.optimizer.learning_rate);
        w.f64(n.optimizer.rho);
        w.f64(n.optimizer.epsilon);
        w.f64s(n.optimizer.mean_square);
    }
    const std::uint64_t sum = fnv1a64(w.bytes());
    w.u64(sum);
    return std::move(w.bytes());
}

inline Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < sizeof(Checkpoint::kMagic) + 12 + 8) throw DataError("checkpoint: file too short");
    const auto body = bytes.first(bytes.size() - 8);
    detail::ByteReader tail(bytes.last(8));
    if (tail.u64() != fnv1a64(body)) throw DataError("checkpoint: checksum mismatch (file is corrupt)");
    detail::ByteReader r(body);
    char magic[8];
    r.raw(magic, sizeof(magic));
    if (std::memcmp(magic, Checkpoint::kMagic, sizeof(magic)) != 0) throw DataError("checkpoint: bad magic");
    const std::uint32_t version = r.u32();
    if (version != Checkpoint::kVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint c;
    c.step = r.u64();
    try {
        c.metadata = nlohmann::json::parse(r.str());
        const std::uint32_t count = r.u32();
        for (std::uint32_t i = 0; i < count; ++i) {
            NetworkRecord n;
            n.name = r.str();
            n.architecture = nlohmann::json::parse(r.str());
            n.params = r.f64s();
            n.optimizer.learning_rate = r.f64();
            n.optimizer.rho = r.f64();
            n.optimizer.epsilon = r.f64();
            n.optimizer.mean_square = r.f64s();
            c.networks.push_back(std::move(n));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: bad embedded json: ") + e.what());
    }
    if (r.remaining() != 0) throw DataError("checkpoint: trailing bytes");
    return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(c);
    // Write-then-rename so a crash never leaves a half-written checkpoint.
    const auto tmp = std::filesystem::path(path).concat(".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write checkpoint " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("failed writing checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes);
}

/// Rebuilds a Q-function from a stored record.
inline std::unique_ptr<QFunction> restore_network(const NetworkRecord& n) {
    auto f = make_qfunction(n.architecture, 0);
    if (f->num_params() != n.params.size()) throw DataError("checkpoint: parameter count does not match architecture");
    std::copy(n.params.begin(), n.params.end(), f->params().begin());
    return f;
}

}  // namespace lexmorl
