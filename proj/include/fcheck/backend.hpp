#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include "fcheck/common.hpp"

namespace fcheck::backend {

struct Transport : Error {
    int status;
    Transport(int status_code, const std::string& reason)
        : Error(ErrorCategory::backend,
                "transport failure (status " + std::to_string(status_code) + "): " + reason),
          status(status_code) {}
};

struct Timeout : Error {
    explicit Timeout(long ms)
        : Error(ErrorCategory::backend, "request timed out after " + std::to_string(ms) + "ms") {}
};

struct MalformedResponse : Error {
    explicit MalformedResponse(const std::string& detail)
        : Error(ErrorCategory::backend, "malformed backend response: " + detail) {}
};

struct CacheCorrupt : Error {
    explicit CacheCorrupt(const std::string& what)
        : Error(ErrorCategory::data, "response cache corrupt: " + what) {}
};

struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& detail)
        : Error(ErrorCategory::backend, "embedding dimension mismatch: " + detail) {}
};

// ---------------------------------------------------------------------------
// Requests

struct BackendParams {
    std::string model_name;
    double temperature = 0.001;
    int max_tokens = 512;
    std::optional<std::int64_t> seed;
};

struct Message {
    std::string role;  // "system" or "user"
    std::string content;
};

struct CompletionRequest {
    std::vector<Message> messages;
    BackendParams params;
};

struct Completion {
    std::string text;
    std::string backend_id;
    bool cache_hit = false;
    double latency_ms = 0.0;
};

// Canonical wire shape; the seed is deliberately left out so reruns with a
// different seed still hit the cache for backend-independent stages.
inline ordered_json canonical_request_json(const CompletionRequest& request) {
    ordered_json body;
    body["model"] = request.params.model_name;
    body["temperature"] = request.params.temperature;
    body["max_tokens"] = request.params.max_tokens;
    body["messages"] = ordered_json::array();
    for (const auto& message : request.messages) {
        ordered_json m;
        m["role"] = message.role;
        m["content"] = message.content;
        body["messages"].push_back(m);
    }
    return body;
}

inline std::string request_digest(const CompletionRequest& request) {
    return sha256_hex(canonical_request_json(request).dump());
}

inline std::string cache_key(const std::string& backend_id, const CompletionRequest& request) {
    return sha256_hex(backend_id + "\n" + request_digest(request));
}

// ---------------------------------------------------------------------------
// Backends

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string id() const = 0;
    virtual Completion complete(const CompletionRequest& request) = 0;
    std::uint64_t calls() const { return calls_.load(); }

protected:
    std::atomic<std::uint64_t> calls_{0};
};

// Deterministic stand-in for a hosted model. Replies come from, in order of
// precedence: the script table (request digest -> text), the responder
// callback, or a synthesized "mock:<digest prefix>" line.
class MockBackend : public Backend {
public:
    using Responder = std::function<std::string(const CompletionRequest&, const std::string&)>;

    explicit MockBackend(std::string backend_id = "mock") : id_(std::move(backend_id)) {}

    std::string id() const override { return id_; }

    Completion complete(const CompletionRequest& request) override {
        calls_.fetch_add(1);
        std::string digest = request_digest(request);
        std::string text;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            auto it = script_.find(digest);
            if (it != script_.end()) {
                text = it->second;
            } else if (responder_) {
                text = responder_(request, digest);
            } else {
                text = "mock:" + digest.substr(0, 16);
            }
        }
        return Completion{text, id_, false, 0.0};
    }

    void add_script(const std::string& digest, const std::string& text) {
        std::lock_guard<std::mutex> lock(mutex_);
        script_[digest] = text;
    }

    void set_responder(Responder responder) {
        std::lock_guard<std::mutex> lock(mutex_);
        responder_ = std::move(responder);
    }

    // Script files are tab-separated: <request digest> TAB <escaped reply>.
    void load_script(const std::filesystem::path& path) {
        for (const auto& line : read_lines(path)) {
            if (line.empty()) continue;
            std::size_t tab = line.find('\t');
            if (tab == std::string::npos)
                throw Error(ErrorCategory::config, "bad script line (no tab): " + line);
            add_script(line.substr(0, tab), unescape_script_text(line.substr(tab + 1)));
        }
    }

    static std::string escape_script_text(std::string_view text) {
        std::string out;
        out.reserve(text.size());
        for (char c : text) {
            switch (c) {
                case '\\': out += "\\\\"; break;
                case '\t': out += "\\t"; break;
                case '\n': out += "\\n"; break;
                case '\r': out += "\\r"; break;
                default: out.push_back(c);
            }
        }
        return out;
    }

    static std::string unescape_script_text(std::string_view text) {
        std::string out;
        out.reserve(text.size());
        for (std::size_t i = 0; i < text.size(); ++i) {
            if (text[i] != '\\' || i + 1 == text.size()) {
                out.push_back(text[i]);
                continue;
            }
            switch (text[++i]) {
                case '\\': out.push_back('\\'); break;
                case 't': out.push_back('\t'); break;
                case 'n': out.push_back('\n'); break;
                case 'r': out.push_back('\r'); break;
                default:
                    out.push_back('\\');
                    out.push_back(text[i]);
            }
        }
        return out;
    }

private:
    std::string id_;
    mutable std::mutex mutex_;
    std::map<std::string, std::string> script_;
    Responder responder_;
};

struct RetryPolicy {
    int max_retries = 2;
    std::vector<std::chrono::milliseconds> backoff = {std::chrono::milliseconds(500),
                                                      std::chrono::milliseconds(2000)};
};

// Chat-completion endpoint client. Reads the reply at
// candidates[0].message.content, falling back to the choices[] spelling.
class HttpBackend : public Backend {
public:
    HttpBackend(std::string url, std::string api_key, RetryPolicy retry = {},
                long timeout_ms = 30000)
        : url_(std::move(url)), api_key_(std::move(api_key)), retry_(retry),
          timeout_ms_(timeout_ms) {
        std::size_t scheme_end = url_.find("://");
        if (scheme_end == std::string::npos)
            throw Error(ErrorCategory::config, "backend url lacks scheme: " + url_);
        std::size_t path_start = url_.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            base_ = url_;
            path_ = "/";
        } else {
            base_ = url_.substr(0, path_start);
            path_ = url_.substr(path_start);
        }
    }

    std::string id() const override { return "http:" + url_; }

    Completion complete(const CompletionRequest& request) override {
        calls_.fetch_add(1);
        std::string body = canonical_request_json_with_seed(request).dump();

        int attempt = 0;
        for (;;) {
            auto started = std::chrono::steady_clock::now();
            try {
                Completion completion = post_once(body);
                completion.latency_ms =
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              started)
                        .count();
                return completion;
            } catch (const MalformedResponse&) {
                throw;  // never retried: the server answered, just unusably
            } catch (const Error& e) {
                if (e.category() != ErrorCategory::backend || attempt >= retry_.max_retries)
                    throw;
                auto delay = attempt < static_cast<int>(retry_.backoff.size())
                                 ? retry_.backoff[attempt]
                                 : retry_.backoff.back();
                std::this_thread::sleep_for(delay);
                ++attempt;
            }
        }
    }

private:
    ordered_json canonical_request_json_with_seed(const CompletionRequest& request) const {
        ordered_json body = canonical_request_json(request);
        if (request.params.seed) body["seed"] = *request.params.seed;
        return body;
    }

    Completion post_once(const std::string& body) {
        httplib::Client client(base_);
        client.set_connection_timeout(std::chrono::milliseconds(timeout_ms_));
        client.set_read_timeout(std::chrono::milliseconds(timeout_ms_));
        client.set_write_timeout(std::chrono::milliseconds(timeout_ms_));
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        auto result = client.Post(path_, headers, body, "application/json");
        if (!result) {
            auto err = result.error();
            if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
                throw Timeout(timeout_ms_);
            throw Transport(0, httplib::to_string(err));
        }
        if (result->status < 200 || result->status >= 300)
            throw Transport(result->status, "endpoint returned " + std::to_string(result->status));

        json reply = json::parse(result->body, nullptr, false);
        if (reply.is_discarded()) throw MalformedResponse("body is not JSON");
        const json* message = nullptr;
        for (const char* field : {"candidates", "choices"}) {
            if (reply.contains(field) && reply[field].is_array() && !reply[field].empty()) {
                message = &reply[field][0];
                break;
            }
        }
        if (!message || !message->contains("message") ||
            !(*message)["message"].contains("content") ||
            !(*message)["message"]["content"].is_string())
            throw MalformedResponse("no candidate message content");
        return Completion{(*message)["message"]["content"].get<std::string>(), id(), false, 0.0};
    }

    std::string url_;
    std::string api_key_;
    RetryPolicy retry_;
    long timeout_ms_;
    std::string base_;
    std::string path_;
};

// ---------------------------------------------------------------------------
// Response cache: an append-only log plus an in-memory index. A corrupt line
// costs only that entry, never the rest of the log.

class ResponseCache {
public:
    explicit ResponseCache(const std::filesystem::path& dir) : dir_(dir) {
        std::filesystem::create_directories(dir_);
        auto version_file = dir_ / "cache-format";
        if (std::filesystem::exists(version_file)) {
            if (trim(read_file_bytes(version_file)) != kFormatVersion)
                throw CacheCorrupt("unsupported cache format in " + version_file.string());
        } else {
            atomic_write_file(version_file, std::string(kFormatVersion) + "\n");
        }
        load_log();
        log_.open(dir_ / "entries.jsonl", std::ios::app | std::ios::binary);
        if (!log_) throw CacheCorrupt("cannot open log for append in " + dir_.string());
    }

    std::optional<std::string> lookup(const std::string& key) const {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = index_.find(key);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    void insert(const std::string& key, const std::string& digest, const std::string& text) {
        ordered_json entry;
        entry["key"] = key;
        entry["request_digest"] = digest;
        entry["text"] = text;
        std::lock_guard<std::mutex> lock(mutex_);
        log_ << entry.dump() << '\n';
        log_.flush();
        index_[key] = text;
    }

    std::size_t size() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return index_.size();
    }
    std::size_t corrupt_entries() const { return corrupt_; }
    const std::filesystem::path& dir() const { return dir_; }

private:
    static constexpr std::string_view kFormatVersion = "1";

    void load_log() {
        auto log_path = dir_ / "entries.jsonl";
        if (!std::filesystem::exists(log_path)) return;
        for (const auto& line : read_lines(log_path)) {
            if (trim(line).empty()) continue;
            json entry = json::parse(line, nullptr, false);
            if (entry.is_discarded() || !entry.contains("key") || !entry.contains("text") ||
                !entry["key"].is_string() || !entry["text"].is_string()) {
                ++corrupt_;
                continue;
            }
            index_[entry["key"].get<std::string>()] = entry["text"].get<std::string>();
        }
    }

    std::filesystem::path dir_;
    mutable std::mutex mutex_;
    std::map<std::string, std::string> index_;
    std::ofstream log_;
    std::size_t corrupt_ = 0;
};

inline Completion cached_complete(Backend& backend, ResponseCache* cache,
                                  const CompletionRequest& request) {
    if (!cache) return backend.complete(request);
    std::string key = cache_key(backend.id(), request);
    if (auto hit = cache->lookup(key))
        return Completion{*hit, backend.id(), true, 0.0};
    Completion completion = backend.complete(request);
    cache->insert(key, request_digest(request), completion.text);
    return completion;
}

// ---------------------------------------------------------------------------
// Embedders

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::string id() const = 0;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;

protected:
    // All vectors leave the client unit-length regardless of what the
    // endpoint returned.
    static void normalize(std::vector<double>& v) {
        double norm = 0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            if (!v.empty()) v[0] = 1.0;
            return;
        }
        for (double& x : v) x /= norm;
    }
};

class MockEmbedder : public Embedder {
public:
    explicit MockEmbedder(std::size_t dim = 64) : dim_(dim) {}

    std::string id() const override { return "mock-embed"; }

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        std::vector<std::vector<double>> out;
        out.reserve(texts.size());
        for (const auto& text : texts) {
            if (auto it = overrides_.find(text); it != overrides_.end()) {
                if (it->second.size() != dim_)
                    throw DimensionMismatch("override has dimension " +
                                            std::to_string(it->second.size()));
                auto v = it->second;
                normalize(v);
                out.push_back(std::move(v));
                continue;
            }
            std::vector<double> v(dim_, 0.0);
            for (const auto& token : tokenize(text)) {
                std::uint64_t h = fnv1a64(token);
                double sign = (h >> 63) ? 1.0 : -1.0;
                v[h % dim_] += sign;
            }
            normalize(v);
            out.push_back(std::move(v));
        }
        return out;
    }

    void set_override(const std::string& text, std::vector<double> vec) {
        overrides_[text] = std::move(vec);
    }

private:
    std::size_t dim_;
    std::map<std::string, std::vector<double>> overrides_;
};

class HttpEmbedder : public Embedder {
public:
    HttpEmbedder(std::string url, std::string api_key, std::string model,
                 long timeout_ms = 30000)
        : url_(std::move(url)), api_key_(std::move(api_key)), model_(std::move(model)),
          timeout_ms_(timeout_ms) {
        std::size_t scheme_end = url_.find("://");
        if (scheme_end == std::string::npos)
            throw Error(ErrorCategory::config, "embed url lacks scheme: " + url_);
        std::size_t path_start = url_.find('/', scheme_end + 3);
        base_ = path_start == std::string::npos ? url_ : url_.substr(0, path_start);
        path_ = path_start == std::string::npos ? "/" : url_.substr(path_start);
    }

    std::string id() const override { return "http-embed:" + url_; }

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        if (texts.empty()) return {};
        ordered_json body;
        body["model"] = model_;
        body["input"] = texts;

        httplib::Client client(base_);
        client.set_connection_timeout(std::chrono::milliseconds(timeout_ms_));
        client.set_read_timeout(std::chrono::milliseconds(timeout_ms_));
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        auto result = client.Post(path_, headers, body.dump(), "application/json");
        if (!result) throw Transport(0, httplib::to_string(result.error()));
        if (result->status < 200 || result->status >= 300)
            throw Transport(result->status, "endpoint returned " + std::to_string(result->status));

        json reply = json::parse(result->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("data") || !reply["data"].is_array())
            throw MalformedResponse("embedding reply lacks data[]");
        std::vector<std::vector<double>> out;
        for (const auto& item : reply["data"]) {
            if (!item.contains("embedding") || !item["embedding"].is_array())
                throw MalformedResponse("embedding entry lacks embedding[]");
            out.push_back(item["embedding"].get<std::vector<double>>());
        }
        if (out.size() != texts.size())
            throw DimensionMismatch("got " + std::to_string(out.size()) + " vectors for " +
                                    std::to_string(texts.size()) + " inputs");
        for (const auto& v : out)
            if (v.size() != out[0].size())
                throw DimensionMismatch("ragged embedding dimensions");
        for (auto& v : out) normalize(v);
        return out;
    }

private:
    std::string url_;
    std::string api_key_;
    std::string model_;
    long timeout_ms_;
    std::string base_;
    std::string path_;
};

}  // namespace fcheck::backend
