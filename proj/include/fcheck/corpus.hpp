#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "fcheck/common.hpp"

namespace fcheck::corpus {

struct SchemaViolation : Error {
    SchemaViolation(std::size_t record_index, const std::string& reason)
        : Error(ErrorCategory::data,
                "schema violation at record " + std::to_string(record_index) + ": " + reason) {}
};

struct UnknownLabel : Error {
    explicit UnknownLabel(const std::string& label)
        : Error(ErrorCategory::data, "unknown label: \"" + label + "\"") {}
};

// Lowercase, trim, and collapse runs of spaces/underscores/hyphens to a
// single hyphen. Idempotent: normalize(normalize(x)) == normalize(x).
inline std::string normalize_label(std::string_view raw) {
    std::string_view trimmed = trim(raw);
    std::string out;
    out.reserve(trimmed.size());
    for (char ch : trimmed) {
        char c = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        if (c == ' ' || c == '_' || c == '-') {
            if (!out.empty() && out.back() != '-') out.push_back('-');
        } else {
            out.push_back(c);
        }
    }
    while (!out.empty() && out.back() == '-') out.pop_back();
    return out;
}

struct LabelScheme {
    std::string name;
    std::vector<std::string> labels;  // canonical (normalized) forms, fixed order

    static LabelScheme liar_raw() {
        return {"liar-raw",
                {"pants-fire", "false", "barely-true", "half-true", "mostly-true", "true"}};
    }

    static LabelScheme raw_fc() { return {"raw-fc", {"false", "half-true", "true"}}; }

    static LabelScheme by_name(const std::string& name) {
        if (name == "liar-raw") return liar_raw();
        if (name == "raw-fc") return raw_fc();
        throw Error(ErrorCategory::config, "unknown label scheme: " + name);
    }

    bool contains(const std::string& label) const {
        return std::find(labels.begin(), labels.end(), label) != labels.end();
    }

    std::size_t index_of(const std::string& label) const {
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == label) return i;
        throw UnknownLabel(label);
    }

    // Ordinal fallback target; half-true for both bundled schemes.
    const std::string& middle_label() const { return labels.at(labels.size() / 2); }

    void validate() const {
        if (labels.empty()) throw Error(ErrorCategory::config, "label scheme has no labels");
        std::unordered_set<std::string> seen;
        for (const auto& label : labels) {
            if (label.empty())
                throw Error(ErrorCategory::config, "label scheme contains an empty label");
            if (label != normalize_label(label))
                throw Error(ErrorCategory::config, "label not in canonical form: " + label);
            if (!seen.insert(label).second)
                throw Error(ErrorCategory::config, "duplicate label: " + label);
        }
    }

    bool operator==(const LabelScheme&) const = default;
};

enum class Split { train, val, test };

inline std::string to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    throw Error(ErrorCategory::internal, "invalid split");
}

inline std::optional<Split> split_from_string(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    return std::nullopt;
}

struct ClaimRecord {
    std::string id;
    std::string claim;
    std::string label;  // canonical form, member of the corpus scheme
    std::vector<std::string> evidences;
    Split split = Split::train;
    std::map<std::string, std::string> source_meta;

    bool operator==(const ClaimRecord&) const = default;
};

struct Corpus {
    LabelScheme scheme;
    std::vector<ClaimRecord> records;
    std::string source_path;
    std::string digest;  // sha-256 over the raw file bytes, hex
};

// ---------------------------------------------------------------------------
// Evidence-count buckets

enum class DatasetKind { liar_raw, raw_fc, custom };

inline std::string to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::liar_raw: return "liar-raw";
        case DatasetKind::raw_fc: return "raw-fc";
        case DatasetKind::custom: return "custom";
    }
    throw Error(ErrorCategory::internal, "invalid dataset kind");
}

inline DatasetKind dataset_kind_from_string(const std::string& name) {
    if (name == "liar-raw") return DatasetKind::liar_raw;
    if (name == "raw-fc") return DatasetKind::raw_fc;
    if (name == "custom") return DatasetKind::custom;
    throw Error(ErrorCategory::config, "unknown dataset kind: " + name);
}

// Total over all counts. The custom kind reuses the liar-raw partition.
inline std::string evidence_bucket(std::size_t count, DatasetKind kind) {
    if (kind == DatasetKind::raw_fc) {
        if (count <= 3) return "0-3";
        if (count <= 5) return "4-5";
        if (count <= 10) return "6-10";
        if (count <= 20) return "11-20";
        if (count <= 50) return "21-50";
        return ">50";
    }
    if (count == 0) return "0";
    if (count == 1) return "1";
    if (count <= 5) return "2-5";
    if (count <= 20) return "6-20";
    if (count <= 50) return "21-50";
    return ">50";
}

inline std::vector<std::string> bucket_order(DatasetKind kind) {
    if (kind == DatasetKind::raw_fc)
        return {"0-3", "4-5", "6-10", "11-20", "21-50", ">50"};
    return {"0", "1", "2-5", "6-20", "21-50", ">50"};
}

// ---------------------------------------------------------------------------
// Canonical one-record-per-line format

namespace detail {

inline ClaimRecord record_from_json(const json& obj, std::size_t index, const LabelScheme& scheme) {
    if (!obj.is_object()) throw SchemaViolation(index, "line is not an object");
    for (const char* field : {"id", "claim", "label", "evidences", "split"})
        if (!obj.contains(field))
            throw SchemaViolation(index, std::string("missing field \"") + field + "\"");

    ClaimRecord record;
    if (!obj["id"].is_string() || obj["id"].get<std::string>().empty())
        throw SchemaViolation(index, "\"id\" must be a non-empty string");
    record.id = obj["id"].get<std::string>();
    if (!obj["claim"].is_string()) throw SchemaViolation(index, "\"claim\" must be a string");
    record.claim = obj["claim"].get<std::string>();

    if (!obj["label"].is_string()) throw SchemaViolation(index, "\"label\" must be a string");
    record.label = normalize_label(obj["label"].get<std::string>());
    if (!scheme.contains(record.label)) throw UnknownLabel(obj["label"].get<std::string>());

    if (!obj["evidences"].is_array())
        throw SchemaViolation(index, "\"evidences\" must be an array");
    for (const auto& item : obj["evidences"]) {
        if (!item.is_string()) throw SchemaViolation(index, "evidence entries must be strings");
        record.evidences.push_back(item.get<std::string>());
    }

    if (!obj["split"].is_string()) throw SchemaViolation(index, "\"split\" must be a string");
    auto split = split_from_string(obj["split"].get<std::string>());
    if (!split)
        throw SchemaViolation(index, "split must be train/val/test, got \"" +
                                         obj["split"].get<std::string>() + "\"");
    record.split = *split;

    if (obj.contains("source_meta")) {
        if (!obj["source_meta"].is_object())
            throw SchemaViolation(index, "\"source_meta\" must be an object");
        for (const auto& [key, value] : obj["source_meta"].items()) {
            if (!value.is_string())
                throw SchemaViolation(index, "source_meta values must be strings");
            record.source_meta[key] = value.get<std::string>();
        }
    }
    return record;
}

inline ordered_json record_to_json(const ClaimRecord& record) {
    ordered_json obj;
    obj["id"] = record.id;
    obj["claim"] = record.claim;
    obj["label"] = record.label;
    obj["evidences"] = record.evidences;
    obj["split"] = to_string(record.split);
    if (!record.source_meta.empty()) obj["source_meta"] = record.source_meta;
    return obj;
}

}  // namespace detail

inline Corpus load_corpus(const std::filesystem::path& path, const LabelScheme& scheme) {
    scheme.validate();
    std::string bytes = read_file_bytes(path);

    Corpus corpus;
    corpus.scheme = scheme;
    corpus.source_path = path.string();
    corpus.digest = sha256_hex(bytes);

    std::unordered_set<std::string> ids;
    std::size_t index = 0;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        std::size_t eol = bytes.find('\n', pos);
        if (eol == std::string::npos) eol = bytes.size();
        std::string_view line = trim(std::string_view(bytes).substr(pos, eol - pos));
        pos = eol + 1;
        if (line.empty()) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded()) throw SchemaViolation(index, "invalid JSON");
        ClaimRecord record = detail::record_from_json(obj, index, scheme);
        if (!ids.insert(record.id).second)
            throw SchemaViolation(index, "duplicate id \"" + record.id + "\"");
        corpus.records.push_back(std::move(record));
        ++index;
    }
    return corpus;
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::string out;
    for (const auto& record : corpus.records) {
        out += detail::record_to_json(record).dump();
        out += '\n';
    }
    atomic_write_file(path, out);
    // Sidecar with the scheme name so the file is self-describing.
    atomic_write_file(path.string() + ".scheme", corpus.scheme.name + "\n");
}

inline std::optional<std::string> read_sidecar_scheme(const std::filesystem::path& corpus_path) {
    std::filesystem::path sidecar = corpus_path.string() + ".scheme";
    if (!std::filesystem::exists(sidecar)) return std::nullopt;
    return std::string(trim(read_file_bytes(sidecar)));
}

inline std::vector<ClaimRecord> split_view(const Corpus& corpus, Split split) {
    std::vector<ClaimRecord> out;
    for (const auto& record : corpus.records)
        if (record.split == split) out.push_back(record);
    return out;
}

}  // namespace fcheck::corpus
