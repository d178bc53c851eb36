#pragma once

// On-disk artifact container: a directory holding one UTF-8 JSON manifest
// (keys in fixed insertion order) plus one binary payload of little-endian
// 64-bit values. All writes are atomic (write temp, then rename).

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trustlora/errors.hpp"
#include "trustlora/hashing.hpp"
#include "trustlora/matrix.hpp"

namespace trustlora {

using Json = nlohmann::ordered_json;

namespace detail {

inline void append_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
    }
}

inline std::uint64_t read_u64_le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    }
    return v;
}

}  // namespace detail

class PayloadWriter {
public:
    void put_f64(double v) { detail::append_u64_le(bytes_, std::bit_cast<std::uint64_t>(v)); }
    void put_i64(std::int64_t v) { detail::append_u64_le(bytes_, static_cast<std::uint64_t>(v)); }

    void put_matrix(const Matrix& m) {
        for (const double v : m.data) {
            put_f64(v);
        }
    }

    void put_labels(const std::vector<int>& labels) {
        for (const int v : labels) {
            put_i64(v);
        }
    }

    const std::vector<std::uint8_t>& bytes() const { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

class PayloadReader {
public:
    explicit PayloadReader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}

    double get_f64() { return std::bit_cast<double>(detail::read_u64_le(next(8))); }
    std::int64_t get_i64() { return static_cast<std::int64_t>(detail::read_u64_le(next(8))); }

    Matrix get_matrix(std::size_t rows, std::size_t cols) {
        Matrix m(rows, cols);
        for (double& v : m.data) {
            v = get_f64();
        }
        return m;
    }

    std::vector<int> get_labels(std::size_t n) {
        std::vector<int> labels(n);
        for (int& v : labels) {
            v = static_cast<int>(get_i64());
        }
        return labels;
    }

    bool exhausted() const { return pos_ == bytes_.size(); }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::uint8_t* next(std::size_t n) {
        if (pos_ + n > bytes_.size()) {
            throw LoadError(LoadErrorKind::truncated_payload,
                            "payload truncated: wanted " + std::to_string(n) + " bytes at offset " +
                                std::to_string(pos_) + " of " + std::to_string(bytes_.size()));
        }
        const std::uint8_t* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    std::vector<std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

inline void atomic_write_bytes(const std::filesystem::path& path, const void* data, std::size_t n) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open for writing: " + tmp.string());
        }
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        if (!out) {
            throw IoError("short write: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("rename failed for " + path.string() + ": " + ec.message());
    }
}

inline void atomic_write_text(const std::filesystem::path& path, const std::string& text) {
    atomic_write_bytes(path, text.data(), text.size());
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open: " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

inline std::string read_text(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

// Serialized with two-space indentation and a trailing newline; the manifest
// is covered by tests that reload it, so the exact layout is pinned.
inline void write_manifest(const std::filesystem::path& dir, const Json& manifest) {
    atomic_write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline Json load_manifest(const std::filesystem::path& dir) {
    const std::filesystem::path path = dir / "manifest.json";
    if (!std::filesystem::exists(path)) {
        throw IoError("missing manifest: " + path.string());
    }
    try {
        return Json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw LoadError(LoadErrorKind::manifest_mismatch, "unparseable manifest " + path.string() + ": " + e.what());
    }
}

inline void expect_format(const Json& manifest, const std::string& expected) {
    if (!manifest.contains("format") || !manifest["format"].is_string()) {
        throw LoadError(LoadErrorKind::manifest_mismatch, "manifest has no format string");
    }
    const std::string got = manifest["format"].get<std::string>();
    if (got != expected) {
        throw LoadError(LoadErrorKind::version_mismatch,
                        "format mismatch: found '" + got + "', expected '" + expected + "'");
    }
}

// Artifact identity: SHA-256 over the canonical structural description plus
// the payload bytes. Provenance fields are deliberately not part of the id.
inline std::string content_id(const Json& structural, const std::vector<std::uint8_t>& payload) {
    Sha256 h;
    h.update(structural.dump());
    h.update("\0", 1);
    h.update(payload.data(), payload.size());
    return h.hex_digest();
}

}  // namespace trustlora
