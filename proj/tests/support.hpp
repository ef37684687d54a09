#pragma once

// Shared fixtures for the runner-level tests: a synthetic corpus writer and a
// mock responder that walks every pipeline prompt shape.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "fcheck/backend.hpp"
#include "fcheck/corpus.hpp"

namespace testsupport {

using namespace fcheck;

struct CorpusPlan {
    corpus::LabelScheme scheme = corpus::LabelScheme::raw_fc();
    std::size_t train_per_label = 8;
    std::size_t val_per_label = 3;
    std::size_t test_per_label = 3;
    bool claim_signal = false;  // embed token-<label> into the claim text
    std::vector<std::size_t> trainval_evidence_counts = {1, 2};
    std::vector<std::size_t> test_evidence_counts = {1, 4, 7};
};

// One supporting evidence sentence per slot, each carrying the label keyword,
// so the stage-1/2 pipeline produces label-bearing justifications.
inline std::filesystem::path write_corpus(const std::filesystem::path& file,
                                          const CorpusPlan& plan) {
    std::string out;
    std::size_t k = 0;
    auto add = [&](corpus::Split split, const std::string& label, std::size_t evidence_count) {
        ordered_json obj;
        obj["id"] = "r" + std::to_string(k);
        obj["claim"] = plan.claim_signal
                           ? "claim " + std::to_string(k) + " about token-" + label
                           : "statement number " + std::to_string(k);
        obj["label"] = label;
        std::vector<std::string> evidences;
        for (std::size_t j = 0; j < evidence_count; ++j)
            evidences.push_back("SUPPORTS-MARKER token-" + label + " detail " +
                                std::to_string(k) + "-" + std::to_string(j));
        obj["evidences"] = evidences;
        obj["split"] = corpus::to_string(split);
        out += obj.dump();
        out += '\n';
        ++k;
    };
    auto pick = [](const std::vector<std::size_t>& counts, std::size_t i) {
        return counts[i % counts.size()];
    };
    for (const auto& label : plan.scheme.labels) {
        for (std::size_t i = 0; i < plan.train_per_label; ++i)
            add(corpus::Split::train, label, pick(plan.trainval_evidence_counts, i));
        for (std::size_t i = 0; i < plan.val_per_label; ++i)
            add(corpus::Split::val, label, pick(plan.trainval_evidence_counts, i));
        for (std::size_t i = 0; i < plan.test_per_label; ++i)
            add(corpus::Split::test, label, pick(plan.test_evidence_counts, i));
    }
    atomic_write_file(file, out);
    return file;
}

// Dispatches on the prompt's opening line. Verdict prompts answer with the
// label keyword found anywhere in the prompt (claim, understanding or
// justification); entailment prompts follow the evidence markers;
// consolidations echo their evidence block.
inline backend::MockBackend::Responder pipeline_responder(corpus::LabelScheme scheme) {
    return [scheme](const backend::CompletionRequest& request,
                    const std::string&) -> std::string {
        const std::string& prompt = request.messages.back().content;
        auto starts = [&](std::string_view prefix) { return prompt.rfind(prefix, 0) == 0; };

        if (starts("Your previous answer") || starts("Decide the veracity")) {
            for (const auto& label : scheme.labels)
                if (prompt.find("token-" + label) != std::string::npos) return label;
            return scheme.labels[scheme.labels.size() / 2];
        }
        if (starts("Summarize your understanding")) return "understanding of: " + prompt;
        if (prompt.find("Does the evidence support or refute") != std::string::npos) {
            if (prompt.find("SUPPORTS-MARKER") != std::string::npos) return "supporting";
            if (prompt.find("REFUTES-MARKER") != std::string::npos) return "refuting";
            return "cannot tell";
        }
        if (prompt.find("own background knowledge") != std::string::npos)
            return "judged from embedded knowledge alone";
        auto begin = prompt.find("the claim:\n");
        auto end = prompt.find("\nConsolidate them");
        if (begin != std::string::npos && end != std::string::npos) {
            begin += std::string("the claim:\n").size();
            return "consolidated: " + prompt.substr(begin, end - begin);
        }
        return scheme.labels[scheme.labels.size() / 2];
    };
}

inline std::unique_ptr<backend::MockBackend> make_pipeline_mock(
    const corpus::LabelScheme& scheme, const std::string& id = "mock:pipeline") {
    auto mock = std::make_unique<backend::MockBackend>(id);
    mock->set_responder(pipeline_responder(scheme));
    return mock;
}

}  // namespace testsupport
