#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

namespace fcheck {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Error category drives the CLI exit code (2 config, 3 backend, 4 data).
enum class ErrorCategory { config, backend, data, internal };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}
    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

struct UnreadableFile : Error {
    explicit UnreadableFile(const std::string& path)
        : Error(ErrorCategory::data, "unreadable file: " + path) {}
};

// Experiment modes shared by the pipeline, the predictor and the runner.
enum class Mode { tbe1, tbe2, tbe3, ibe1, ibe2, ibe3, ibe4 };

inline std::string to_string(Mode mode) {
    switch (mode) {
        case Mode::tbe1: return "TBE-1";
        case Mode::tbe2: return "TBE-2";
        case Mode::tbe3: return "TBE-3";
        case Mode::ibe1: return "IBE-1";
        case Mode::ibe2: return "IBE-2";
        case Mode::ibe3: return "IBE-3";
        case Mode::ibe4: return "IBE-4";
    }
    throw Error(ErrorCategory::internal, "invalid mode");
}

inline Mode mode_from_string(const std::string& name) {
    if (name == "TBE-1") return Mode::tbe1;
    if (name == "TBE-2") return Mode::tbe2;
    if (name == "TBE-3") return Mode::tbe3;
    if (name == "IBE-1") return Mode::ibe1;
    if (name == "IBE-2") return Mode::ibe2;
    if (name == "IBE-3") return Mode::ibe3;
    if (name == "IBE-4") return Mode::ibe4;
    throw Error(ErrorCategory::config, "unknown mode: " + name);
}

inline bool is_training_mode(Mode mode) {
    return mode == Mode::tbe1 || mode == Mode::tbe2 || mode == Mode::tbe3;
}

// ---------------------------------------------------------------------------
// Hashing

inline std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorCategory::internal, "sha256 computation failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out(static_cast<std::size_t>(len) * 2, '0');
    for (unsigned int i = 0; i < len; ++i) {
        out[2 * i] = hex[digest[i] >> 4];
        out[2 * i + 1] = hex[digest[i] & 0xf];
    }
    return out;
}

// FNV-1a, 64 bit. Fixed here so hashed features are identical on every
// platform; do not swap for std::hash.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Strings

inline std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline std::string_view trim(std::string_view s) {
    const auto* ws = " \t\r\n\f\v";
    auto begin = s.find_first_not_of(ws);
    if (begin == std::string_view::npos) return {};
    auto end = s.find_last_not_of(ws);
    return s.substr(begin, end - begin + 1);
}

// Lowercase + whitespace split; the shared tokenizer for overlap metrics and
// feature hashing.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!current.empty()) {
                tokens.push_back(std::move(current));
                current.clear();
            }
        } else {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

// Alphanumeric runs only; used where punctuation must not glue words together
// (stance keyword matching, rating extraction).
inline std::vector<std::string> alnum_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Deterministic randomness. std::mt19937_64 is bit-exact everywhere; the
// std distributions and std::shuffle are not, so index draws and shuffles
// are spelled out here.

using Rng = std::mt19937_64;

inline std::uint64_t rand_below(Rng& rng, std::uint64_t n) {
    return n == 0 ? 0 : rng() % n;
}

template <typename T>
void deterministic_shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rand_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// ---------------------------------------------------------------------------
// Bounded parallel loop. Results must be written by index so that merge order
// is deterministic regardless of scheduling.

inline void parallel_for(std::size_t n, std::size_t workers,
                         const std::function<void(std::size_t)>& body) {
    if (n == 0) return;
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UnreadableFile(path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    if (in.bad()) throw UnreadableFile(path.string());
    return buffer.str();
}

// Write-temp-then-rename so readers never observe a partial file.
inline void atomic_write_file(const std::filesystem::path& path, std::string_view content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCategory::data, "cannot write: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw Error(ErrorCategory::data, "write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UnreadableFile(path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

inline std::string utc_timestamp() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace fcheck
