// Engine-level acceptance gate. Each numbered check prints one [PASS] or
// [FAIL] line; the binary exits nonzero if any check fails. Unlike the unit
// suites, these checks exercise whole flows end to end with independent
// oracles, golden values, determinism replays and directional comparisons.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fcheck/fcheck.hpp"
#include "support.hpp"

using namespace fcheck;
namespace fs = std::filesystem;

namespace {

// --------------------------------------------------------------------------
// Harness

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
    if (!ok) throw CheckFailure(what);
}

void require_close(double actual, double expected, double tol, const std::string& what) {
    if (!(std::abs(actual - expected) <= tol))
        throw CheckFailure(what + ": got " + std::to_string(actual) + ", want " +
                           std::to_string(expected) + " +/- " + std::to_string(tol));
}

struct Gate {
    int failures = 0;

    void run(int index, const std::string& name, const std::function<void()>& body,
             double budget_seconds = 0) {
        auto start = std::chrono::steady_clock::now();
        try {
            body();
            double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                           start).count();
            if (budget_seconds > 0 && elapsed > budget_seconds)
                throw CheckFailure("finished but took " + std::to_string(elapsed) +
                                   "s against a budget of " + std::to_string(budget_seconds) +
                                   "s");
            std::printf("[PASS] %d. %s (%.2fs)\n", index, name.c_str(), elapsed);
        } catch (const std::exception& e) {
            ++failures;
            std::printf("[FAIL] %d. %s: %s\n", index, name.c_str(), e.what());
        }
        std::fflush(stdout);
    }
};

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("fcheck-acceptance-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path bundled_corpus() { return fs::path(FCHECK_SOURCE_DIR) / "data" / "mini_corpus.jsonl"; }

// --------------------------------------------------------------------------
// 1. Macro precision/recall/F1 against a brute-force confusion-matrix oracle.

struct OracleScores {
    double mp = 0, mr = 0, mf1 = 0;
};

OracleScores brute_force_macro(const std::vector<std::string>& golds,
                               const std::vector<std::string>& preds,
                               const std::vector<std::string>& labels) {
    OracleScores scores;
    for (const auto& label : labels) {
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < golds.size(); ++i) {
            if (preds[i] == label && golds[i] == label) ++tp;
            if (preds[i] == label && golds[i] != label) ++fp;
            if (preds[i] != label && golds[i] == label) ++fn;
        }
        double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
        scores.mp += precision;
        scores.mr += recall;
        scores.mf1 += f1;
    }
    scores.mp /= static_cast<double>(labels.size());
    scores.mr /= static_cast<double>(labels.size());
    scores.mf1 /= static_cast<double>(labels.size());
    return scores;
}

void check_macro_prf_oracle() {
    Rng rng(20260815);
    for (int iteration = 0; iteration < 200; ++iteration) {
        std::size_t n_labels = 2 + rand_below(rng, 6);  // 2..7
        std::vector<std::string> labels;
        for (std::size_t c = 0; c < n_labels; ++c) labels.push_back("l" + std::to_string(c));
        corpus::LabelScheme scheme{"fuzz", labels};

        std::size_t n = 1 + rand_below(rng, 500);
        std::vector<std::string> golds(n), preds(n);
        for (std::size_t i = 0; i < n; ++i) {
            golds[i] = labels[rand_below(rng, n_labels)];
            preds[i] = labels[rand_below(rng, n_labels)];
        }

        auto report = metrics::macro_prf(golds, preds, scheme);
        auto oracle = brute_force_macro(golds, preds, labels);
        std::string tag = "instance " + std::to_string(iteration);
        require_close(report.mp, oracle.mp, 1e-12, tag + " macro precision");
        require_close(report.mr, oracle.mr, 1e-12, tag + " macro recall");
        require_close(report.mf1, oracle.mf1, 1e-12, tag + " macro F1");
    }
}

// --------------------------------------------------------------------------
// 2. Hand-computed golden values for the text and agreement metrics.

void check_golden_metric_values() {
    require_close(metrics::rouge_n("the cat sat", "the cat", 1).f1, 0.8, 1e-9,
                  "unigram overlap F1 on 'the cat sat' vs 'the cat'");
    require_close(metrics::rouge_l("a b c d", "a c d").f1, 0.8571, 1e-3,
                  "LCS overlap F1 on 'a b c d' vs 'a c d'");
    require_close(metrics::fleiss_kappa({{2, 1}, {0, 3}}), 0.25, 1e-9,
                  "two-item three-rater kappa");
    require(metrics::fleiss_kappa({{3, 0}, {0, 3}, {3, 0}}) == 1.0,
            "perfect-agreement kappa must be exactly 1.0");
    std::vector<std::vector<std::optional<double>>> perfect = {{1.0, 1.0},
                                                               {2.0, 2.0},
                                                               {3.0, 3.0}};
    require(metrics::kripp_alpha(perfect, metrics::AgreementLevel::nominal) == 1.0,
            "perfect-agreement nominal alpha must be exactly 1.0");
    require(metrics::kripp_alpha(perfect, metrics::AgreementLevel::ordinal) == 1.0,
            "perfect-agreement ordinal alpha must be exactly 1.0");
}

// --------------------------------------------------------------------------
// 3. Two identical runs over the bundled corpus leave byte-identical
//    artifacts behind.

labrunner::ExperimentConfig determinism_config(const fs::path& output_dir) {
    labrunner::ExperimentConfig config;
    config.mode = Mode::tbe3;
    config.corpus_path = bundled_corpus().string();
    config.scheme_name = "raw-fc";
    config.stage1.model = "demo";
    config.stage2.model = "demo";
    config.verdict_backend.model = "demo";
    config.seeds = {7};
    config.train.learning_rate = 0.1;
    config.train.batch_size = 8;
    config.train.max_epochs = 5;
    config.feature_dim = 1u << 12;
    config.output_dir = output_dir.string();
    config.run_id = "determinism";
    config.parallelism = 3;
    return config;
}

void check_pipeline_determinism() {
    auto dir = fresh_dir("determinism");
    auto first = labrunner::run_experiment(determinism_config(dir / "a"));
    auto second = labrunner::run_experiment(determinism_config(dir / "b"));

    require(first.status == "complete" && second.status == "complete",
            "both runs must complete");
    require(first.config_digest == second.config_digest,
            "output location must not leak into the config digest");
    require(first.artifacts == second.artifacts, "artifact maps must list the same files");
    require(!first.artifacts.empty(), "runs must produce artifacts");
    for (const auto& [name, rel] : first.artifacts) {
        auto a = read_file_bytes(dir / "a" / "determinism" / rel);
        auto b = read_file_bytes(dir / "b" / "determinism" / rel);
        require(a == b, "artifact '" + name + "' differs between identical runs");
    }
}

// --------------------------------------------------------------------------
// 4. Fuzzed stance replies always yield an exact disjoint cover, and
//    unknown-stance evidence text never reaches a consolidation prompt.

void check_partition_invariant() {
    auto templates = promptkit::TemplateSet::builtin();
    Rng rng(404);
    const std::vector<std::string> stance_words = {
        "supporting", "The evidence is clearly supporting the claim.",
        "refuting",   "Refuting, because the numbers disagree.",
        "hard to say", "mock nonsense reply"};

    for (int iteration = 0; iteration < 1000; ++iteration) {
        std::size_t n = rand_below(rng, 9);  // 0..8 evidences
        corpus::ClaimRecord record;
        record.id = "fz" + std::to_string(iteration);
        record.claim = "claim under test " + std::to_string(iteration);
        for (std::size_t j = 0; j < n; ++j)
            record.evidences.push_back("ev-" + std::to_string(iteration) + "-" +
                                       std::to_string(j) + "-marker");

        // Scripted stance replies, keyed off the deterministic request digest.
        backend::MockBackend stage1("mock:fuzz-stage1");
        stage1.set_responder([&](const backend::CompletionRequest&, const std::string& digest) {
            return stance_words[fnv1a64(digest) % stance_words.size()];
        });
        entail::Context ctx1;
        ctx1.backend = &stage1;
        ctx1.templates = &templates;
        ctx1.parallelism = 1 + iteration % 4;
        auto partition = entail::classify_evidence(record, ctx1);

        // Independent disjoint-cover check.
        std::vector<int> hits(n, 0);
        for (const auto* group : {&partition.supporting, &partition.refuting,
                                  &partition.unknown}) {
            for (std::size_t index : *group) {
                require(index < n, "stance index out of range");
                ++hits[index];
            }
        }
        for (std::size_t j = 0; j < n; ++j)
            require(hits[j] == 1, "evidence index " + std::to_string(j) +
                                      " covered " + std::to_string(hits[j]) + " times");

        // Consolidate and capture every prompt the second stage sees.
        std::vector<std::string> prompts;
        backend::MockBackend stage2("mock:fuzz-stage2");
        stage2.set_responder([&](const backend::CompletionRequest& request,
                                 const std::string&) {
            prompts.push_back(request.messages.back().content);
            return std::string("a consolidated justification");
        });
        entail::Context ctx2 = ctx1;
        ctx2.backend = &stage2;
        ctx2.parallelism = 1;
        entail::consolidate(record, partition, ctx2);

        auto appears = [&](std::size_t index) {
            for (const auto& prompt : prompts)
                if (prompt.find(record.evidences[index]) != std::string::npos) return true;
            return false;
        };
        for (std::size_t index : partition.unknown)
            require(!appears(index), "unknown-stance evidence " + std::to_string(index) +
                                         " leaked into a consolidation prompt");
        for (const auto* group : {&partition.supporting, &partition.refuting})
            for (std::size_t index : *group)
                require(appears(index), "classified evidence " + std::to_string(index) +
                                            " missing from consolidation prompts");
    }
}

// --------------------------------------------------------------------------
// 5. Exact backend call counts for the two bracketing verdict flows.

void check_call_count_laws() {
    auto scheme = corpus::LabelScheme::raw_fc();
    auto templates = promptkit::TemplateSet::builtin();
    Rng rng(505);

    auto mock = testsupport::make_pipeline_mock(scheme, "mock:counting");
    entail::Context ctx;
    ctx.backend = mock.get();
    ctx.templates = &templates;
    ctx.parallelism = 1;

    for (int i = 0; i < 100; ++i) {
        corpus::ClaimRecord record;
        record.id = "cc" + std::to_string(i);
        record.claim = "countable claim " + std::to_string(i);
        std::size_t n = rand_below(rng, 7);  // 0..6 evidences
        for (std::size_t j = 0; j < n; ++j) {
            const char* marker = (j % 3 == 0)   ? "SUPPORTS-MARKER"
                                 : (j % 3 == 1) ? "REFUTES-MARKER"
                                                : "ambiguous";
            record.evidences.push_back(std::string(marker) + " fact " + std::to_string(j));
        }

        std::uint64_t before = mock->calls();
        entail::run_ibe(Mode::ibe2, record, ctx, scheme);
        std::uint64_t two_call_flow = mock->calls() - before;
        require(two_call_flow == 2, "understanding-then-verdict flow used " +
                                        std::to_string(two_call_flow) + " calls, want 2");

        before = mock->calls();
        entail::run_ibe(Mode::ibe4, record, ctx, scheme);
        std::uint64_t staged_flow = mock->calls() - before;
        require(staged_flow == n + 3, "staged verdict flow with " + std::to_string(n) +
                                          " evidences used " + std::to_string(staged_flow) +
                                          " calls, want " + std::to_string(n + 3));
    }
}

// --------------------------------------------------------------------------
// 6. Classifier numerics: finite-difference gradients and fast separable
//    convergence, deterministic per seed.

double uniform_pm1(Rng& rng) {
    return (static_cast<double>(rand_below(rng, 2001)) - 1000.0) / 1000.0;
}

void check_classifier_numerics() {
    auto scheme = corpus::LabelScheme::raw_fc();
    const std::uint32_t dim = 64;
    Rng rng(606);

    for (int instance = 0; instance < 20; ++instance) {
        std::size_t n_examples = 3 + rand_below(rng, 5);
        std::vector<verdict::Example> examples;
        for (std::size_t e = 0; e < n_examples; ++e) {
            verdict::FeatureVector features;
            features.dim = dim;
            std::set<std::uint32_t> used;
            std::size_t nnz = 3 + rand_below(rng, 8);
            while (used.size() < nnz)
                used.insert(static_cast<std::uint32_t>(rand_below(rng, dim)));
            for (auto index : used) {
                features.indices.push_back(index);
                features.values.push_back(uniform_pm1(rng));
            }
            examples.push_back({features, scheme.labels[rand_below(rng, 3)]});
        }

        std::size_t k = scheme.labels.size();
        std::vector<double> weights(k * dim), bias(k);
        for (auto& w : weights) w = 0.5 * uniform_pm1(rng);
        for (auto& b : bias) b = 0.5 * uniform_pm1(rng);
        double l2 = 1e-3;

        std::vector<double> grad_w, grad_b;
        verdict::loss_and_gradient(examples, scheme, dim, weights, bias, l2, grad_w, grad_b);

        const double step = 1e-5;
        auto loss_at = [&](const std::vector<double>& w, const std::vector<double>& b) {
            std::vector<double> unused_w, unused_b;
            return verdict::loss_and_gradient(examples, scheme, dim, w, b, l2, unused_w,
                                              unused_b);
        };
        auto check_coordinate = [&](double analytic, double numeric, const std::string& what) {
            double error = std::abs(analytic - numeric) /
                           std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            require(error <= 1e-4, what + " gradient relative error " + std::to_string(error));
        };

        for (int probe = 0; probe < 12; ++probe) {
            std::size_t at = rand_below(rng, weights.size());
            auto up = weights, down = weights;
            up[at] += step;
            down[at] -= step;
            double numeric = (loss_at(up, bias) - loss_at(down, bias)) / (2 * step);
            check_coordinate(grad_w[at], numeric, "weight[" + std::to_string(at) + "]");
        }
        for (std::size_t c = 0; c < k; ++c) {
            auto up = bias, down = bias;
            up[c] += step;
            down[c] -= step;
            double numeric = (loss_at(weights, up) - loss_at(weights, down)) / (2 * step);
            check_coordinate(grad_b[c], numeric, "bias[" + std::to_string(c) + "]");
        }
    }

    // Separable corpus: the label keyword fully determines the class.
    const std::uint32_t train_dim = 1u << 14;
    std::vector<std::string> fillers;
    for (int i = 0; i < 50; ++i) fillers.push_back("filler" + std::to_string(i));
    auto make_doc = [&](const std::string& label, Rng& gen) {
        std::string text = "token-" + label + " token-" + label;
        for (int j = 0; j < 6; ++j) text += " " + fillers[rand_below(gen, fillers.size())];
        return text;
    };
    Rng docs_rng(707);
    std::vector<verdict::Example> train_set, val_set;
    std::size_t per_label[3] = {334, 333, 333};  // 1,000 documents in total
    for (std::size_t c = 0; c < 3; ++c) {
        const auto& label = scheme.labels[c];
        for (std::size_t i = 0; i < per_label[c]; ++i)
            train_set.push_back({verdict::featurize(make_doc(label, docs_rng), train_dim),
                                 label});
        for (std::size_t i = 0; i < 20; ++i)
            val_set.push_back({verdict::featurize(make_doc(label, docs_rng), train_dim),
                               label});
    }
    require(train_set.size() == 1000, "training corpus must hold 1,000 documents");

    verdict::TrainConfig config;
    config.learning_rate = 0.2;
    config.batch_size = 8;
    config.patience = 2;
    config.max_epochs = 3;
    config.seed = 11;
    auto model = verdict::train(train_set, val_set, config, scheme);

    std::size_t correct = 0;
    for (const auto& example : train_set)
        if (verdict::predict(model, example.features).label == example.label) ++correct;
    double accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    require(accuracy >= 0.99, "train accuracy after three epochs is " +
                                  std::to_string(accuracy) + ", want >= 0.99");

    auto replay = verdict::train(train_set, val_set, config, scheme);
    require(replay.weights == model.weights && replay.bias == model.bias,
            "training must be bit-identical for a fixed seed");
}

// --------------------------------------------------------------------------
// 7. Directional ablation: stronger supporting signal, weaker refuting
//    signal, strictly ordered scores with visible gaps.

void check_ablation_ordering() {
    auto dir = fresh_dir("ablation");
    auto scheme = corpus::LabelScheme::raw_fc();
    Rng rng(808);

    // Supporting justifications carry the label keyword 70% of the time,
    // refuting ones 50% of the time; claims carry no signal at all.
    std::string corpus_text;
    std::size_t serial = 0;
    auto add_record = [&](const std::string& label, corpus::Split split) {
        ordered_json obj;
        obj["id"] = "ab" + std::to_string(serial);
        obj["claim"] = "statement number " + std::to_string(serial) + " about subject " +
                       std::to_string(serial % 17);
        obj["label"] = label;
        std::string support_payload =
            rand_below(rng, 100) < 70 ? "token-" + label : "token-none";
        std::string refute_payload =
            rand_below(rng, 100) < 50 ? "token-" + label : "token-none";
        obj["evidences"] = std::vector<std::string>{
            "SUPPORTS-MARKER " + support_payload + " first angle",
            "SUPPORTS-MARKER " + support_payload + " second angle",
            "REFUTES-MARKER " + refute_payload + " first counter",
            "REFUTES-MARKER " + refute_payload + " second counter"};
        obj["split"] = corpus::to_string(split);
        corpus_text += obj.dump() + "\n";
        ++serial;
    };
    for (const auto& label : scheme.labels) {
        for (int i = 0; i < 200; ++i) add_record(label, corpus::Split::train);
        for (int i = 0; i < 50; ++i) add_record(label, corpus::Split::val);
        for (int i = 0; i < 100; ++i) add_record(label, corpus::Split::test);
    }
    atomic_write_file(dir / "corpus.jsonl", corpus_text);

    labrunner::ExperimentConfig config;
    config.mode = Mode::tbe3;
    config.corpus_path = (dir / "corpus.jsonl").string();
    config.scheme_name = "raw-fc";
    config.seeds = {1};
    config.train.learning_rate = 0.2;
    config.train.batch_size = 16;
    config.train.max_epochs = 8;
    config.feature_dim = 1u << 13;
    config.output_dir = (dir / "suite").string();
    config.parallelism = 4;

    auto mock = testsupport::make_pipeline_mock(scheme);
    labrunner::BackendOverrides overrides{mock.get(), mock.get(), mock.get()};
    auto suite = labrunner::run_ablation_suite(config, overrides);

    require(suite.rows.size() == 4, "suite must produce four rows");
    std::map<std::string, double> mf1;
    for (const auto& row : suite.rows) mf1[row.ablation] = row.mean_mf1;
    auto gap = [&](const std::string& high, const std::string& low) {
        require(mf1.at(high) - mf1.at(low) >= 0.05,
                high + " (" + std::to_string(mf1.at(high)) + ") must beat " + low + " (" +
                    std::to_string(mf1.at(low)) + ") by at least 0.05");
    };
    gap("full", "wo-refuting");
    gap("wo-refuting", "wo-supporting");
    gap("wo-supporting", "wo-both");
}

// --------------------------------------------------------------------------
// 8. Evidence-count buckets: brute-force boundary oracle plus per-bucket
//    score equivalence.

std::string oracle_bucket(std::size_t count, corpus::DatasetKind kind) {
    if (kind == corpus::DatasetKind::raw_fc) {
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

void check_segmentation_correctness() {
    for (auto kind : {corpus::DatasetKind::liar_raw, corpus::DatasetKind::raw_fc,
                      corpus::DatasetKind::custom})
        for (std::size_t count = 0; count <= 200; ++count)
            require(corpus::evidence_bucket(count, kind) == oracle_bucket(count, kind),
                    "bucket for count " + std::to_string(count) + " under " +
                        corpus::to_string(kind));

    auto scheme = corpus::LabelScheme::raw_fc();
    Rng rng(909);
    std::vector<std::string> golds, preds;
    std::vector<std::size_t> counts;
    for (int i = 0; i < 400; ++i) {
        golds.push_back(scheme.labels[rand_below(rng, 3)]);
        preds.push_back(scheme.labels[rand_below(rng, 3)]);
        counts.push_back(rand_below(rng, 60));
    }

    for (auto kind : {corpus::DatasetKind::liar_raw, corpus::DatasetKind::raw_fc}) {
        auto report = metrics::segment_report(preds, golds, counts, kind, scheme);
        for (const auto& [bucket, bucket_report] : report.buckets) {
            std::vector<std::string> bucket_golds, bucket_preds;
            for (std::size_t i = 0; i < counts.size(); ++i) {
                if (oracle_bucket(counts[i], kind) != bucket) continue;
                bucket_golds.push_back(golds[i]);
                bucket_preds.push_back(preds[i]);
            }
            require(!bucket_golds.empty(), "reported bucket " + bucket + " must be occupied");
            auto direct = metrics::macro_prf(bucket_golds, bucket_preds, scheme);
            require(direct.n_items == bucket_report.n_items,
                    "item count for bucket " + bucket);
            require_close(bucket_report.mp, direct.mp, 1e-12, bucket + " precision");
            require_close(bucket_report.mr, direct.mr, 1e-12, bucket + " recall");
            require_close(bucket_report.mf1, direct.mf1, 1e-12, bucket + " F1");
        }
    }
}

// --------------------------------------------------------------------------
// 9. Ingestion reports exact split sizes on full-scale synthesized fixtures.

void check_ingestion_fidelity() {
    auto dir = fresh_dir("ingestion");

    auto synthesize = [&](const fs::path& file, const corpus::LabelScheme& scheme,
                          std::size_t n_train, std::size_t n_val, std::size_t n_test) {
        std::string out;
        std::size_t serial = 0;
        auto emit = [&](const char* split, std::size_t count) {
            for (std::size_t i = 0; i < count; ++i) {
                ordered_json obj;
                obj["id"] = "fx" + std::to_string(serial);
                obj["claim"] = "fixture claim " + std::to_string(serial);
                obj["label"] = scheme.labels[serial % scheme.labels.size()];
                obj["evidences"] = std::vector<std::string>{};
                obj["split"] = split;
                out += obj.dump() + "\n";
                ++serial;
            }
        };
        emit("train", n_train);
        emit("val", n_val);
        emit("test", n_test);
        atomic_write_file(file, out);
    };

    struct Expectation {
        const char* name;
        corpus::LabelScheme scheme;
        std::size_t train, val, test;
    };
    std::vector<Expectation> expectations = {
        {"six-label", corpus::LabelScheme::liar_raw(), 10065, 1274, 1251},
        {"three-label", corpus::LabelScheme::raw_fc(), 1612, 200, 200},
    };
    for (const auto& expectation : expectations) {
        fs::path file = dir / (std::string(expectation.name) + ".jsonl");
        synthesize(file, expectation.scheme, expectation.train, expectation.val,
                   expectation.test);
        auto data = corpus::load_corpus(file, expectation.scheme);
        auto summary = labrunner::summarize(data);
        require(summary.n_records == expectation.train + expectation.val + expectation.test,
                std::string(expectation.name) + " total record count");
        require(summary.per_split.at("train") == expectation.train,
                std::string(expectation.name) + " train split size");
        require(summary.per_split.at("val") == expectation.val,
                std::string(expectation.name) + " val split size");
        require(summary.per_split.at("test") == expectation.test,
                std::string(expectation.name) + " test split size");
    }
}

}  // namespace

int main() {
    Gate gate;
    gate.run(1, "macro PRF equals a brute-force confusion-matrix oracle",
             check_macro_prf_oracle, 10.0);
    gate.run(2, "overlap and agreement metrics hit hand-computed golden values",
             check_golden_metric_values);
    gate.run(3, "identical configs reproduce byte-identical run artifacts",
             check_pipeline_determinism, 60.0);
    gate.run(4, "stance partitions cover evidence exactly and unknowns never reach "
                "consolidation", check_partition_invariant);
    gate.run(5, "verdict flows issue exactly their documented backend call counts",
             check_call_count_laws);
    gate.run(6, "classifier gradients match finite differences and separable training "
                "converges deterministically", check_classifier_numerics, 120.0);
    gate.run(7, "justification ablations rank full > wo-refuting > wo-supporting > wo-both",
             check_ablation_ordering, 120.0);
    gate.run(8, "evidence-count buckets match their boundary oracle and per-bucket scores",
             check_segmentation_correctness);
    gate.run(9, "ingestion reports exact split sizes on full-scale fixtures",
             check_ingestion_fidelity);

    if (gate.failures > 0) {
        std::printf("%d of 9 acceptance checks failed\n", gate.failures);
        return 1;
    }
    std::printf("all 9 acceptance checks passed\n");
    return 0;
}
