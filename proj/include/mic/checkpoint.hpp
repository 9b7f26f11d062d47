#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mic/encoder.hpp"
#include "mic/error.hpp"
#include "mic/param_store.hpp"

namespace mic {

// Little-endian container: magic "MICCKPT1", u32 version, length-prefixed
// config echo, vocab sizes, dim, step, tensor table, trailing CRC32 over
// everything before it.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    std::string config_echo;
    VocabSizes sizes;
    std::uint64_t dim = 0;
    std::int64_t step = 0;
    bool has_adam = false;
    ParamStore params;
};

namespace detail {

inline void put_bytes(std::string& buf, const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
}

template <typename T>
void put_scalar(std::string& buf, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    put_bytes(buf, &v, sizeof(T));
}

inline void put_string(std::string& buf, const std::string& s) {
    put_scalar<std::uint64_t>(buf, s.size());
    put_bytes(buf, s.data(), s.size());
}

inline void put_matrix(std::string& buf, const Matrix& m) {
    put_scalar<std::uint64_t>(buf, m.rows);
    put_scalar<std::uint64_t>(buf, m.cols);
    put_bytes(buf, m.data.data(), m.data.size() * sizeof(double));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw IoError("checkpoint: unexpected end of data");
    }
    void get_bytes(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    template <typename T>
    T get_scalar() {
        T v;
        get_bytes(&v, sizeof(T));
        return v;
    }
    std::string get_string() {
        const auto n = get_scalar<std::uint64_t>();
        need(n);
        std::string s(buf.data() + pos, n);
        pos += n;
        return s;
    }
    Matrix get_matrix() {
        const auto rows = get_scalar<std::uint64_t>();
        const auto cols = get_scalar<std::uint64_t>();
        if (rows == 0 || cols == 0 || rows > (1ULL << 32) || cols > (1ULL << 32))
            throw IoError("checkpoint: implausible tensor shape");
        Matrix m(rows, cols);
        get_bytes(m.data.data(), m.data.size() * sizeof(double));
        return m;
    }
};

inline std::uint32_t crc32_of(const std::string& buf, std::size_t n) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(n)));
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::string buf;
    buf.append("MICCKPT1", 8);
    detail::put_scalar<std::uint32_t>(buf, Checkpoint::kVersion);
    detail::put_string(buf, ckpt.config_echo);
    detail::put_scalar<std::uint64_t>(buf, ckpt.sizes.user);
    detail::put_scalar<std::uint64_t>(buf, ckpt.sizes.item);
    detail::put_scalar<std::uint64_t>(buf, ckpt.sizes.gender);
    detail::put_scalar<std::uint64_t>(buf, ckpt.sizes.age);
    detail::put_scalar<std::uint64_t>(buf, ckpt.sizes.keyword);
    detail::put_scalar<std::uint64_t>(buf, ckpt.dim);
    detail::put_scalar<std::int64_t>(buf, ckpt.step);
    detail::put_scalar<std::uint8_t>(buf, ckpt.has_adam ? 1 : 0);
    detail::put_scalar<std::int64_t>(buf, ckpt.params.step_count);
    detail::put_scalar<std::uint64_t>(buf, ckpt.params.entries.size());
    for (const auto& [name, entry] : ckpt.params.entries) {
        detail::put_string(buf, name);
        detail::put_scalar<std::uint8_t>(buf, entry.freeze_pad_row ? 1 : 0);
        detail::put_matrix(buf, entry.value);
        if (ckpt.has_adam) {
            detail::put_matrix(buf, entry.adam_m);
            detail::put_matrix(buf, entry.adam_v);
        }
    }
    detail::put_scalar<std::uint32_t>(buf, detail::crc32_of(buf, buf.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write on checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < 16) throw IoError("checkpoint too small: " + path);
    if (buf.compare(0, 8, "MICCKPT1") != 0)
        throw IoError("bad checkpoint magic in " + path);
    const std::uint32_t stored_crc = [&] {
        std::uint32_t v;
        std::memcpy(&v, buf.data() + buf.size() - 4, 4);
        return v;
    }();
    if (stored_crc != detail::crc32_of(buf, buf.size() - 4))
        throw IoError("checkpoint CRC mismatch (corrupt or truncated): " + path);

    detail::Reader r{buf, 8};
    const auto version = r.get_scalar<std::uint32_t>();
    if (version != Checkpoint::kVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ckpt;
    ckpt.config_echo = r.get_string();
    ckpt.sizes.user = r.get_scalar<std::uint64_t>();
    ckpt.sizes.item = r.get_scalar<std::uint64_t>();
    ckpt.sizes.gender = r.get_scalar<std::uint64_t>();
    ckpt.sizes.age = r.get_scalar<std::uint64_t>();
    ckpt.sizes.keyword = r.get_scalar<std::uint64_t>();
    ckpt.dim = r.get_scalar<std::uint64_t>();
    ckpt.step = r.get_scalar<std::int64_t>();
    ckpt.has_adam = r.get_scalar<std::uint8_t>() != 0;
    ckpt.params.step_count = r.get_scalar<std::int64_t>();
    const auto count = r.get_scalar<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string name = r.get_string();
        const bool freeze = r.get_scalar<std::uint8_t>() != 0;
        Matrix value = r.get_matrix();
        ckpt.params.add(name, value.rows, value.cols);
        auto& entry = ckpt.params.at(name);
        entry.freeze_pad_row = freeze;
        entry.value = std::move(value);
        if (ckpt.has_adam) {
            entry.adam_m = r.get_matrix();
            entry.adam_v = r.get_matrix();
            if (!entry.adam_m.same_shape(entry.value) || !entry.adam_v.same_shape(entry.value))
                throw IoError("checkpoint: Adam state shape mismatch for " + name);
        }
    }
    if (r.pos != buf.size() - 4) throw IoError("checkpoint: trailing garbage in " + path);
    return ckpt;
}

// Shape compatibility against a freshly initialized store, reporting the
// first offending tensor by name.
inline void check_checkpoint_shapes(const Checkpoint& ckpt, const ParamStore& expected) {
    for (const auto& [name, entry] : expected.entries) {
        auto it = ckpt.params.entries.find(name);
        if (it == ckpt.params.entries.end())
            throw ShapeError("checkpoint is missing tensor " + name);
        if (!it->second.value.same_shape(entry.value))
            throw ShapeError("checkpoint tensor " + name + " has shape " +
                             std::to_string(it->second.value.rows) + "x" +
                             std::to_string(it->second.value.cols) + ", expected " +
                             std::to_string(entry.value.rows) + "x" +
                             std::to_string(entry.value.cols));
    }
    for (const auto& [name, entry] : ckpt.params.entries)
        if (!expected.entries.count(name))
            throw ShapeError("checkpoint has unexpected tensor " + name);
}

}  // namespace mic
