#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fcheck/backend.hpp"
#include "fcheck/common.hpp"
#include "fcheck/corpus.hpp"
#include "fcheck/promptkit.hpp"

namespace fcheck::entail {

struct EmptyCompletion : Error {
    explicit EmptyCompletion(const std::string& claim_id)
        : Error(ErrorCategory::backend,
                "backend returned empty text for claim " + claim_id) {}
};

// ---------------------------------------------------------------------------
// Stage artifacts

struct StancePartition {
    std::string claim_id;
    std::vector<std::size_t> supporting;
    std::vector<std::size_t> refuting;
    std::vector<std::size_t> unknown;
    std::map<std::size_t, std::string> raw_replies;
    std::map<std::size_t, std::string> errors;  // per-index backend failures

    // Exact disjoint cover of 0..n-1.
    bool is_partition(std::size_t n_evidence) const {
        std::vector<bool> seen(n_evidence, false);
        std::size_t total = 0;
        for (const auto* group : {&supporting, &refuting, &unknown}) {
            for (std::size_t index : *group) {
                if (index >= n_evidence || seen[index]) return false;
                seen[index] = true;
                ++total;
            }
        }
        return total == n_evidence;
    }

    ordered_json to_json() const {
        ordered_json out;
        out["claim_id"] = claim_id;
        out["supporting"] = supporting;
        out["refuting"] = refuting;
        out["unknown"] = unknown;
        out["raw_replies"] = ordered_json::object();
        for (const auto& [index, text] : raw_replies)
            out["raw_replies"][std::to_string(index)] = text;
        if (!errors.empty()) {
            out["errors"] = ordered_json::object();
            for (const auto& [index, text] : errors)
                out["errors"][std::to_string(index)] = text;
        }
        return out;
    }

    static StancePartition from_json(const json& obj) {
        StancePartition partition;
        partition.claim_id = obj.at("claim_id").get<std::string>();
        partition.supporting = obj.at("supporting").get<std::vector<std::size_t>>();
        partition.refuting = obj.at("refuting").get<std::vector<std::size_t>>();
        partition.unknown = obj.at("unknown").get<std::vector<std::size_t>>();
        if (obj.contains("raw_replies"))
            for (const auto& [key, value] : obj.at("raw_replies").items())
                partition.raw_replies[std::stoul(key)] = value.get<std::string>();
        if (obj.contains("errors"))
            for (const auto& [key, value] : obj.at("errors").items())
                partition.errors[std::stoul(key)] = value.get<std::string>();
        return partition;
    }
};

enum class Source { consolidated, embedded_knowledge };

inline std::string to_string(Source source) {
    return source == Source::consolidated ? "consolidated" : "embedded-knowledge";
}

inline Source source_from_string(const std::string& name) {
    if (name == "consolidated") return Source::consolidated;
    if (name == "embedded-knowledge") return Source::embedded_knowledge;
    throw Error(ErrorCategory::data, "invalid justification source: " + name);
}

struct JustificationPair {
    std::string claim_id;
    std::string supporting_justification;
    std::string refuting_justification;
    Source supporting_source = Source::consolidated;
    Source refuting_source = Source::consolidated;
    std::map<std::string, std::string> prompt_versions;  // template id -> digest

    ordered_json to_json() const {
        ordered_json out;
        out["claim_id"] = claim_id;
        out["supporting_justification"] = supporting_justification;
        out["refuting_justification"] = refuting_justification;
        out["supporting_source"] = to_string(supporting_source);
        out["refuting_source"] = to_string(refuting_source);
        out["prompt_versions"] = prompt_versions;
        return out;
    }

    static JustificationPair from_json(const json& obj) {
        JustificationPair pair;
        pair.claim_id = obj.at("claim_id").get<std::string>();
        pair.supporting_justification = obj.at("supporting_justification").get<std::string>();
        pair.refuting_justification = obj.at("refuting_justification").get<std::string>();
        pair.supporting_source = source_from_string(obj.at("supporting_source").get<std::string>());
        pair.refuting_source = source_from_string(obj.at("refuting_source").get<std::string>());
        if (obj.contains("prompt_versions"))
            pair.prompt_versions =
                obj.at("prompt_versions").get<std::map<std::string, std::string>>();
        return pair;
    }
};

struct Understanding {
    std::string claim_id;
    std::string text;

    ordered_json to_json() const {
        return ordered_json{{"claim_id", claim_id}, {"text", text}};
    }
    static Understanding from_json(const json& obj) {
        return {obj.at("claim_id").get<std::string>(), obj.at("text").get<std::string>()};
    }
};

struct PredictionRecord {
    std::string claim_id;
    std::string predicted_label;
    std::string gold_label;
    Mode mode = Mode::ibe1;
    bool parse_fallback_used = false;
    bool repair_used = false;

    ordered_json to_json() const {
        ordered_json out;
        out["claim_id"] = claim_id;
        out["mode"] = fcheck::to_string(mode);
        out["gold_label"] = gold_label;
        out["predicted_label"] = predicted_label;
        out["parse_fallback_used"] = parse_fallback_used;
        out["repair_used"] = repair_used;
        return out;
    }

    static PredictionRecord from_json(const json& obj) {
        PredictionRecord record;
        record.claim_id = obj.at("claim_id").get<std::string>();
        record.mode = mode_from_string(obj.at("mode").get<std::string>());
        record.gold_label = obj.at("gold_label").get<std::string>();
        record.predicted_label = obj.at("predicted_label").get<std::string>();
        record.parse_fallback_used = obj.at("parse_fallback_used").get<bool>();
        if (obj.contains("repair_used")) record.repair_used = obj.at("repair_used").get<bool>();
        return record;
    }
};

// One object per line; the writers keep artifacts byte-stable so reruns can
// be compared with a plain file diff.
template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& items) {
    std::string out;
    for (const auto& item : items) {
        out += item.to_json().dump();
        out += '\n';
    }
    atomic_write_file(path, out);
}

template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
    std::vector<T> items;
    for (const auto& line : read_lines(path)) {
        if (trim(line).empty()) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded())
            throw Error(ErrorCategory::data, "bad line in " + path.string());
        items.push_back(T::from_json(obj));
    }
    return items;
}

// ---------------------------------------------------------------------------
// Pipeline context and shared prompt plumbing

struct Context {
    backend::Backend* backend = nullptr;
    backend::ResponseCache* cache = nullptr;  // optional
    const promptkit::TemplateSet* templates = nullptr;
    backend::BackendParams params;
    std::size_t parallelism = 4;

    void require() const {
        if (!backend || !templates)
            throw Error(ErrorCategory::internal, "pipeline context not fully wired");
    }
};

namespace detail {

inline std::string ask(const Context& ctx, const std::string& prompt) {
    backend::CompletionRequest request;
    request.messages = {{"user", prompt}};
    request.params = ctx.params;
    return backend::cached_complete(*ctx.backend, ctx.cache, request).text;
}

inline std::string numbered_block(const std::vector<std::string>& evidences,
                                  const std::vector<std::size_t>& indices) {
    std::vector<std::string> lines;
    lines.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k)
        lines.push_back(std::to_string(k + 1) + ". " + evidences[indices[k]]);
    return join(lines, "\n");
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> indices(n);
    for (std::size_t i = 0; i < n; ++i) indices[i] = i;
    return indices;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage 1: per-evidence stance assignment. One backend call per evidence
// sentence; a failed call is recorded and its index filed under unknown
// rather than aborting the whole record.

inline StancePartition classify_evidence(const corpus::ClaimRecord& record, const Context& ctx) {
    ctx.require();
    std::size_t n = record.evidences.size();
    std::vector<promptkit::Stance> stances(n, promptkit::Stance::unknown);
    std::vector<std::string> replies(n);
    std::vector<std::optional<std::string>> failures(n);

    parallel_for(n, ctx.parallelism, [&](std::size_t i) {
        std::string prompt = ctx.templates->render(
            "entailment", {{"claim", record.claim}, {"evidence", record.evidences[i]}});
        try {
            replies[i] = detail::ask(ctx, prompt);
            stances[i] = promptkit::parse_stance(replies[i]);
        } catch (const Error& e) {
            if (e.category() != ErrorCategory::backend) throw;
            failures[i] = e.what();
        }
    });

    StancePartition partition;
    partition.claim_id = record.id;
    for (std::size_t i = 0; i < n; ++i) {
        if (failures[i]) {
            partition.unknown.push_back(i);
            partition.errors[i] = *failures[i];
            continue;
        }
        partition.raw_replies[i] = replies[i];
        switch (stances[i]) {
            case promptkit::Stance::supporting: partition.supporting.push_back(i); break;
            case promptkit::Stance::refuting: partition.refuting.push_back(i); break;
            case promptkit::Stance::unknown: partition.unknown.push_back(i); break;
        }
    }
    return partition;
}

// ---------------------------------------------------------------------------
// Stage 2: consolidation into one justification per stance side. An empty
// stance group falls back to the backend's own knowledge; unknown-stance
// evidence is excluded from both sides.

inline JustificationPair consolidate(const corpus::ClaimRecord& record,
                                     const StancePartition& partition, const Context& ctx) {
    ctx.require();
    if (partition.claim_id != record.id)
        throw Error(ErrorCategory::internal, "partition does not belong to record " + record.id);

    JustificationPair pair;
    pair.claim_id = record.id;

    auto one_side = [&](const std::vector<std::size_t>& indices, const std::string& stance,
                        std::string& justification, Source& source) {
        std::string template_id;
        std::string prompt;
        if (indices.empty()) {
            template_id = "consolidate-embedded";
            prompt = ctx.templates->render(template_id,
                                           {{"claim", record.claim}, {"stance", stance}});
            source = Source::embedded_knowledge;
        } else {
            template_id = "consolidate-" + stance;
            prompt = ctx.templates->render(
                template_id, {{"claim", record.claim},
                              {"evidence_block",
                               detail::numbered_block(record.evidences, indices)}});
            source = Source::consolidated;
        }
        justification = detail::ask(ctx, prompt);
        if (trim(justification).empty()) throw EmptyCompletion(record.id);
        pair.prompt_versions[template_id] = ctx.templates->get(template_id).digest();
    };

    one_side(partition.supporting, "supporting", pair.supporting_justification,
             pair.supporting_source);
    one_side(partition.refuting, "refuting", pair.refuting_justification, pair.refuting_source);
    return pair;
}

// ---------------------------------------------------------------------------
// Claim understanding (TBE-2 / IBE-2 / IBE-3): one call over the claim plus
// whatever evidence exists; with none, the prompt carries no evidence section.

inline Understanding generate_understanding(const corpus::ClaimRecord& record,
                                            const Context& ctx) {
    ctx.require();
    std::string evidence_section;
    if (!record.evidences.empty()) {
        evidence_section =
            "Evidence:\n" +
            detail::numbered_block(record.evidences,
                                   detail::all_indices(record.evidences.size())) +
            "\n";
    }
    std::string prompt = ctx.templates->render(
        "understanding", {{"claim", record.claim}, {"evidence_section", evidence_section}});
    Understanding understanding;
    understanding.claim_id = record.id;
    understanding.text = detail::ask(ctx, prompt);
    if (trim(understanding.text).empty()) throw EmptyCompletion(record.id);
    return understanding;
}

// ---------------------------------------------------------------------------
// Inference-based flows. The verdict reply goes through parse_label; an
// unparsable reply earns one repair re-prompt, then the scheme's middle
// label with the fallback flag set.

inline PredictionRecord run_ibe(Mode mode, const corpus::ClaimRecord& record, const Context& ctx,
                                const corpus::LabelScheme& scheme) {
    ctx.require();
    std::string labels = join(scheme.labels, ", ");
    std::string prompt;

    switch (mode) {
        case Mode::ibe1: {
            std::string block =
                record.evidences.empty()
                    ? "(none)"
                    : detail::numbered_block(record.evidences,
                                             detail::all_indices(record.evidences.size()));
            prompt = ctx.templates->render(
                "veracity-ibe1",
                {{"labels", labels}, {"claim", record.claim}, {"evidence_block", block}});
            break;
        }
        case Mode::ibe2:
        case Mode::ibe3: {
            Understanding understanding = generate_understanding(record, ctx);
            prompt = ctx.templates->render(
                mode == Mode::ibe2 ? "veracity-ibe2" : "veracity-ibe3-cot",
                {{"labels", labels},
                 {"claim", record.claim},
                 {"understanding", understanding.text}});
            break;
        }
        case Mode::ibe4: {
            StancePartition partition = classify_evidence(record, ctx);
            JustificationPair pair = consolidate(record, partition, ctx);
            prompt = ctx.templates->render(
                "veracity-ibe4",
                {{"labels", labels},
                 {"claim", record.claim},
                 {"supporting_justification", pair.supporting_justification},
                 {"refuting_justification", pair.refuting_justification}});
            break;
        }
        default:
            throw Error(ErrorCategory::internal,
                        "run_ibe called with mode " + fcheck::to_string(mode));
    }

    PredictionRecord prediction;
    prediction.claim_id = record.id;
    prediction.gold_label = record.label;
    prediction.mode = mode;

    std::string reply = detail::ask(ctx, prompt);
    try {
        prediction.predicted_label = promptkit::parse_label(reply, scheme);
        return prediction;
    } catch (const promptkit::UnparsableVerdict&) {
    }

    prediction.repair_used = true;
    std::string repair = ctx.templates->render("verdict-repair", {{"labels", labels},
                                                                  {"raw", reply}});
    try {
        prediction.predicted_label = promptkit::parse_label(detail::ask(ctx, repair), scheme);
        return prediction;
    } catch (const promptkit::UnparsableVerdict&) {
    }

    prediction.predicted_label = scheme.middle_label();
    prediction.parse_fallback_used = true;
    return prediction;
}

}  // namespace fcheck::entail
