#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fcheck/common.hpp"
#include "fcheck/corpus.hpp"

namespace fcheck::promptkit {

struct UnknownTemplate : Error {
    explicit UnknownTemplate(const std::string& id)
        : Error(ErrorCategory::config, "unknown template: " + id) {}
};

struct MissingPlaceholder : Error {
    explicit MissingPlaceholder(const std::string& name)
        : Error(ErrorCategory::internal, "missing placeholder binding: " + name) {}
};

struct UnparsableVerdict : Error {
    explicit UnparsableVerdict(const std::string& raw)
        : Error(ErrorCategory::data, "no veracity label found in reply: \"" + raw + "\"") {}
};

struct MissingDimension : Error {
    explicit MissingDimension(const std::string& name)
        : Error(ErrorCategory::data, "rating reply lacks dimension: " + name) {}
};

// ---------------------------------------------------------------------------
// Templates

class PromptTemplate {
public:
    PromptTemplate() = default;
    PromptTemplate(std::string id, int version, std::string body)
        : id_(std::move(id)), version_(version), body_(std::move(body)) {
        scan_placeholders();
    }

    const std::string& id() const { return id_; }
    int version() const { return version_; }
    const std::string& body() const { return body_; }
    const std::vector<std::string>& placeholders() const { return placeholders_; }

    std::string digest() const {
        return sha256_hex(id_ + "\n" + std::to_string(version_) + "\n" + body_);
    }

    std::string render(const std::map<std::string, std::string>& bindings) const {
        std::string out;
        out.reserve(body_.size());
        std::size_t pos = 0;
        while (pos < body_.size()) {
            char c = body_[pos];
            if (c != '{') {
                out.push_back(c);
                ++pos;
                continue;
            }
            std::size_t close = body_.find('}', pos);
            std::string name = body_.substr(pos + 1, close - pos - 1);
            auto it = bindings.find(name);
            if (it == bindings.end()) throw MissingPlaceholder(name);
            out += it->second;
            pos = close + 1;
        }
        return out;
    }

private:
    void scan_placeholders() {
        std::size_t pos = 0;
        while ((pos = body_.find('{', pos)) != std::string::npos) {
            std::size_t close = body_.find('}', pos);
            if (close == std::string::npos)
                throw Error(ErrorCategory::config, "unterminated placeholder in template " + id_);
            std::string name = body_.substr(pos + 1, close - pos - 1);
            if (name.empty() ||
                name.find_first_not_of("abcdefghijklmnopqrstuvwxyz0123456789_") !=
                    std::string::npos)
                throw Error(ErrorCategory::config,
                            "bad placeholder name \"" + name + "\" in template " + id_);
            if (std::find(placeholders_.begin(), placeholders_.end(), name) ==
                placeholders_.end())
                placeholders_.push_back(name);
            pos = close + 1;
        }
    }

    std::string id_;
    int version_ = 1;
    std::string body_;
    std::vector<std::string> placeholders_;
};

class TemplateSet {
public:
    void add(PromptTemplate tpl) { templates_[tpl.id()] = std::move(tpl); }

    bool has(const std::string& id) const { return templates_.count(id) != 0; }

    const PromptTemplate& get(const std::string& id) const {
        auto it = templates_.find(id);
        if (it == templates_.end()) throw UnknownTemplate(id);
        return it->second;
    }

    std::string render(const std::string& id,
                       const std::map<std::string, std::string>& bindings) const {
        return get(id).render(bindings);
    }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        for (const auto& [id, tpl] : templates_) out.push_back(id);
        return out;
    }

    // template_id -> digest; folded into run manifests so outputs stay
    // attributable to the exact prompt wording that produced them.
    std::map<std::string, std::string> digests() const {
        std::map<std::string, std::string> out;
        for (const auto& [id, tpl] : templates_) out[id] = tpl.digest();
        return out;
    }

    static TemplateSet builtin();

    void save_dir(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        ordered_json manifest;
        manifest["version"] = 1;
        manifest["templates"] = ordered_json::array();
        for (const auto& [id, tpl] : templates_) {
            std::string file = id + ".txt";
            atomic_write_file(dir / file, tpl.body());
            ordered_json entry;
            entry["template_id"] = id;
            entry["version"] = tpl.version();
            entry["file"] = file;
            entry["sha256"] = sha256_hex(tpl.body());
            manifest["templates"].push_back(entry);
        }
        atomic_write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    }

    static TemplateSet load_dir(const std::filesystem::path& dir) {
        json manifest = json::parse(read_file_bytes(dir / "manifest.json"), nullptr, false);
        if (manifest.is_discarded() || !manifest.contains("templates"))
            throw Error(ErrorCategory::config,
                        "bad template manifest: " + (dir / "manifest.json").string());
        TemplateSet set;
        for (const auto& entry : manifest["templates"]) {
            std::string id = entry.at("template_id").get<std::string>();
            std::string body = read_file_bytes(dir / entry.at("file").get<std::string>());
            if (sha256_hex(body) != entry.at("sha256").get<std::string>())
                throw Error(ErrorCategory::config, "template file hash mismatch: " + id);
            set.add(PromptTemplate(id, entry.at("version").get<int>(), body));
        }
        return set;
    }

private:
    std::map<std::string, PromptTemplate> templates_;
};

inline TemplateSet TemplateSet::builtin() {
    TemplateSet set;
    set.add(PromptTemplate("entailment", 1,
        "You are verifying a factual claim.\n"
        "Claim: {claim}\n"
        "Evidence: {evidence}\n"
        "Does the evidence support or refute the claim? "
        "Answer with exactly one word: supporting or refuting."));
    set.add(PromptTemplate("consolidate-supporting", 1,
        "You are verifying a factual claim.\n"
        "Claim: {claim}\n"
        "These evidence sentences were classified as supporting the claim:\n"
        "{evidence_block}\n"
        "Consolidate them into one concise justification (2-4 sentences) "
        "arguing that the claim is accurate."));
    set.add(PromptTemplate("consolidate-refuting", 1,
        "You are verifying a factual claim.\n"
        "Claim: {claim}\n"
        "These evidence sentences were classified as refuting the claim:\n"
        "{evidence_block}\n"
        "Consolidate them into one concise justification (2-4 sentences) "
        "arguing that the claim is inaccurate."));
    set.add(PromptTemplate("consolidate-embedded", 1,
        "You are verifying a factual claim.\n"
        "Claim: {claim}\n"
        "No evidence sentence was classified as {stance} the claim. "
        "Using only your own background knowledge, write one concise "
        "justification (2-4 sentences) {stance} the claim."));
    set.add(PromptTemplate("understanding", 1,
        "Summarize your understanding of the claim below.\n"
        "Claim: {claim}\n"
        "{evidence_section}"
        "State, in 2-4 sentences, what the claim asserts and what the "
        "available information implies about its accuracy."));
    set.add(PromptTemplate("veracity-ibe1", 1,
        "Decide the veracity of this claim.\n"
        "Claim: {claim}\n"
        "Evidence:\n"
        "{evidence_block}\n"
        "Answer with exactly one of these labels and nothing else: {labels}."));
    set.add(PromptTemplate("veracity-ibe2", 1,
        "Decide the veracity of this claim.\n"
        "Claim: {claim}\n"
        "Analysis of the claim and its evidence:\n"
        "{understanding}\n"
        "Answer with exactly one of these labels and nothing else: {labels}."));
    set.add(PromptTemplate("veracity-ibe3-cot", 1,
        "Decide the veracity of this claim.\n"
        "Claim: {claim}\n"
        "Analysis of the claim and its evidence:\n"
        "{understanding}\n"
        "Think step by step: lay out the key facts, weigh them against each "
        "other, and only then conclude.\n"
        "Finish with a final line of the form \"Verdict: <label>\" where "
        "<label> is exactly one of: {labels}."));
    set.add(PromptTemplate("veracity-ibe4", 1,
        "Decide the veracity of this claim using the two justifications below.\n"
        "Claim: {claim}\n"
        "Justification supporting the claim:\n"
        "{supporting_justification}\n"
        "Justification refuting the claim:\n"
        "{refuting_justification}\n"
        "Weigh both sides. Answer with exactly one of these labels and "
        "nothing else: {labels}."));
    set.add(PromptTemplate("verdict-repair", 1,
        "Your previous answer could not be mapped to a veracity label.\n"
        "Previous answer:\n"
        "{raw}\n"
        "Answer again with exactly one of these labels and nothing else: "
        "{labels}."));
    set.add(PromptTemplate("subjective-eval", 1,
        "Rate the explanation below for the given claim on five dimensions, "
        "each on a 1-5 scale (1 = poor, 5 = excellent).\n"
        "Claim: {claim}\n"
        "Explanation:\n"
        "{explanation}\n"
        "Reply with five lines, one per dimension:\n"
        "informativeness: <rating>\n"
        "logicality: <rating>\n"
        "objectivity: <rating>\n"
        "readability: <rating>\n"
        "accuracy: <rating>"));
    return set;
}

// ---------------------------------------------------------------------------
// Reply parsing

enum class Stance { supporting, refuting, unknown };

inline std::string to_string(Stance stance) {
    switch (stance) {
        case Stance::supporting: return "supporting";
        case Stance::refuting: return "refuting";
        case Stance::unknown: return "unknown";
    }
    throw Error(ErrorCategory::internal, "invalid stance");
}

inline Stance stance_from_string(const std::string& name) {
    if (name == "supporting") return Stance::supporting;
    if (name == "refuting") return Stance::refuting;
    if (name == "unknown") return Stance::unknown;
    throw Error(ErrorCategory::data, "invalid stance: " + name);
}

// Total function: replies that match neither keyword family, or both, come
// back as unknown rather than an error.
inline Stance parse_stance(std::string_view raw) {
    static const std::vector<std::string> support_words = {
        "support", "supports", "supporting", "entails", "confirms"};
    static const std::vector<std::string> refute_words = {
        "refute", "refutes", "refuting", "contradicts", "denies"};
    bool support = false;
    bool refute = false;
    for (const auto& token : alnum_tokens(raw)) {
        if (std::find(support_words.begin(), support_words.end(), token) != support_words.end())
            support = true;
        if (std::find(refute_words.begin(), refute_words.end(), token) != refute_words.end())
            refute = true;
    }
    if (support == refute) return Stance::unknown;
    return support ? Stance::supporting : Stance::refuting;
}

// Longest label string first so that "mostly true" does not fall through to
// the plain "true" label; ties keep scheme order.
inline std::string parse_label(std::string_view raw, const corpus::LabelScheme& scheme) {
    std::string haystack = corpus::normalize_label(raw);
    std::vector<std::string> order = scheme.labels;
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
    for (const auto& label : order)
        if (haystack.find(label) != std::string::npos) return label;
    throw UnparsableVerdict(std::string(raw));
}

struct SubjectiveScores {
    double informativeness = 0;
    double logicality = 0;
    double objectivity = 0;
    double readability = 0;
    double accuracy = 0;
    bool clamped = false;

    static const std::vector<std::string>& dimension_names() {
        static const std::vector<std::string> names = {
            "informativeness", "logicality", "objectivity", "readability", "accuracy"};
        return names;
    }

    double& by_name(const std::string& name) {
        if (name == "informativeness") return informativeness;
        if (name == "logicality") return logicality;
        if (name == "objectivity") return objectivity;
        if (name == "readability") return readability;
        if (name == "accuracy") return accuracy;
        throw Error(ErrorCategory::internal, "unknown dimension: " + name);
    }
    double by_name(const std::string& name) const {
        return const_cast<SubjectiveScores*>(this)->by_name(name);
    }

    bool operator==(const SubjectiveScores&) const = default;
};

// Pulls the first number that follows each dimension name, stopping at the
// next dimension mention so a missing value cannot steal its neighbour's.
inline SubjectiveScores parse_subjective(std::string_view raw) {
    std::string text = to_lower_ascii(raw);
    const auto& names = SubjectiveScores::dimension_names();

    std::vector<std::size_t> starts;
    for (const auto& name : names) {
        std::size_t at = text.find(name);
        if (at == std::string::npos) throw MissingDimension(name);
        starts.push_back(at);
    }

    SubjectiveScores scores;
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::size_t begin = starts[i] + names[i].size();
        std::size_t end = text.size();
        for (std::size_t j = 0; j < names.size(); ++j)
            if (starts[j] > starts[i]) end = std::min(end, starts[j]);

        std::optional<double> value;
        for (std::size_t pos = begin; pos < end; ++pos) {
            if (std::isdigit(static_cast<unsigned char>(text[pos]))) {
                value = std::strtod(text.c_str() + pos, nullptr);
                break;
            }
        }
        if (!value) throw MissingDimension(names[i]);
        if (*value < 1.0) {
            scores.clamped = true;
            value = 1.0;
        } else if (*value > 5.0) {
            scores.clamped = true;
            value = 5.0;
        }
        scores.by_name(names[i]) = *value;
    }
    return scores;
}

}  // namespace fcheck::promptkit
