#pragma once

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fcheck/backend.hpp"
#include "fcheck/common.hpp"
#include "fcheck/corpus.hpp"
#include "fcheck/entail.hpp"
#include "fcheck/metrics.hpp"
#include "fcheck/promptkit.hpp"
#include "fcheck/verdict.hpp"

namespace fcheck::labrunner {

struct ConfigInvalid : Error {
    explicit ConfigInvalid(const std::string& why)
        : Error(ErrorCategory::config, "invalid experiment config: " + why) {}
};

struct RunNotFound : Error {
    explicit RunNotFound(const std::string& where)
        : Error(ErrorCategory::data, "no run manifest under " + where) {}
};

struct AlignmentError : Error {
    explicit AlignmentError(const std::string& claim_id)
        : Error(ErrorCategory::data, "gold explanations lack claim " + claim_id) {}
};

// ---------------------------------------------------------------------------
// Configuration

// One backend slot. API keys are supplied through flags or the environment
// and never serialized, so config files and manifests stay shareable.
struct BackendSpec {
    std::string kind = "mock";  // "mock" or "http"
    std::string model = "mock-model";
    std::string url;     // http only
    std::string api_key; // http only, not serialized
    std::string script;  // mock only: reply script path
    double temperature = 0.001;
    int max_tokens = 512;

    void validate() const {
        if (kind != "mock" && kind != "http")
            throw ConfigInvalid("backend kind must be mock or http, got " + kind);
        if (kind == "http" && url.empty()) throw ConfigInvalid("http backend needs a url");
        if (max_tokens <= 0) throw ConfigInvalid("max_tokens must be positive");
        if (temperature < 0) throw ConfigInvalid("temperature must be >= 0");
    }

    ordered_json to_json() const {
        return ordered_json{{"kind", kind},   {"model", model},
                            {"url", url},     {"script", script},
                            {"temperature", temperature}, {"max_tokens", max_tokens}};
    }

    static BackendSpec from_json(const json& obj) {
        BackendSpec spec;
        if (obj.contains("kind")) spec.kind = obj["kind"];
        if (obj.contains("model")) spec.model = obj["model"];
        if (obj.contains("url")) spec.url = obj["url"];
        if (obj.contains("script")) spec.script = obj["script"];
        if (obj.contains("temperature")) spec.temperature = obj["temperature"];
        if (obj.contains("max_tokens")) spec.max_tokens = obj["max_tokens"];
        return spec;
    }

    backend::BackendParams params() const {
        backend::BackendParams p;
        p.model_name = model;
        p.temperature = temperature;
        p.max_tokens = max_tokens;
        return p;
    }
};

struct ExperimentConfig {
    Mode mode = Mode::tbe3;
    std::string corpus_path;
    std::string scheme_name = "liar-raw";
    std::vector<std::string> scheme_labels;  // empty: resolve scheme_name as builtin
    std::string dataset_kind_name;           // empty: derived from the scheme
    BackendSpec stage1;           // evidence stance calls
    BackendSpec stage2;           // consolidation and understanding calls
    BackendSpec verdict_backend;  // IBE verdict flows (all their calls)
    verdict::AblationMode ablation = verdict::AblationMode::full;
    verdict::TrainConfig train;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::string output_dir = "runs";
    std::string run_id;            // empty: derived from the config digest
    std::string external_command;  // empty: native classifier
    std::uint32_t feature_dim = verdict::kDefaultFeatureDim;
    std::size_t parallelism = 4;
    std::string cache_dir;       // empty: no response cache
    std::string templates_dir;   // empty: builtin templates

    corpus::LabelScheme scheme() const {
        if (scheme_labels.empty()) return corpus::LabelScheme::by_name(scheme_name);
        corpus::LabelScheme custom{scheme_name, scheme_labels};
        custom.validate();
        return custom;
    }

    corpus::DatasetKind kind() const {
        if (!dataset_kind_name.empty()) return corpus::dataset_kind_from_string(dataset_kind_name);
        if (scheme_labels.empty()) return corpus::dataset_kind_from_string(scheme_name);
        return corpus::DatasetKind::custom;
    }

    void validate() const {
        if (corpus_path.empty()) throw ConfigInvalid("corpus path is required");
        if (output_dir.empty()) throw ConfigInvalid("output directory is required");
        if (seeds.empty()) throw ConfigInvalid("at least one seed is required");
        if (ablation != verdict::AblationMode::full && mode != Mode::tbe3)
            throw ConfigInvalid("ablation " + verdict::to_string(ablation) +
                                " requires mode TBE-3, got " + fcheck::to_string(mode));
        if (parallelism == 0) throw ConfigInvalid("parallelism must be at least 1");
        if (feature_dim == 0 || (feature_dim & (feature_dim - 1)) != 0)
            throw ConfigInvalid("feature_dim must be a power of two");
        scheme();  // resolvable scheme name or valid custom labels
        kind();
        stage1.validate();
        stage2.validate();
        verdict_backend.validate();
        train.validate();
    }

    ordered_json to_json() const {
        ordered_json out;
        out["mode"] = fcheck::to_string(mode);
        out["corpus"] = corpus_path;
        out["scheme"] = scheme_name;
        out["scheme_labels"] = scheme_labels;
        out["dataset_kind"] = dataset_kind_name;
        out["backends"] = ordered_json{{"stage1", stage1.to_json()},
                                       {"stage2", stage2.to_json()},
                                       {"verdict", verdict_backend.to_json()}};
        out["ablation"] = verdict::to_string(ablation);
        out["train"] = train.to_json();
        out["seeds"] = seeds;
        out["output_dir"] = output_dir;
        out["run_id"] = run_id;
        out["external_command"] = external_command;
        out["feature_dim"] = feature_dim;
        out["parallelism"] = parallelism;
        out["cache_dir"] = cache_dir;
        out["templates_dir"] = templates_dir;
        return out;
    }

    static ExperimentConfig from_json(const json& obj) {
        ExperimentConfig config;
        if (obj.contains("mode")) config.mode = mode_from_string(obj["mode"]);
        if (obj.contains("corpus")) config.corpus_path = obj["corpus"];
        if (obj.contains("scheme")) config.scheme_name = obj["scheme"];
        if (obj.contains("scheme_labels"))
            config.scheme_labels = obj["scheme_labels"].get<std::vector<std::string>>();
        if (obj.contains("dataset_kind")) config.dataset_kind_name = obj["dataset_kind"];
        if (obj.contains("backend")) {
            config.stage1 = BackendSpec::from_json(obj["backend"]);
            config.stage2 = config.stage1;
            config.verdict_backend = config.stage1;
        }
        if (obj.contains("backends")) {
            const auto& specs = obj["backends"];
            if (specs.contains("stage1")) config.stage1 = BackendSpec::from_json(specs["stage1"]);
            if (specs.contains("stage2")) config.stage2 = BackendSpec::from_json(specs["stage2"]);
            if (specs.contains("verdict"))
                config.verdict_backend = BackendSpec::from_json(specs["verdict"]);
        }
        if (obj.contains("ablation"))
            config.ablation = verdict::ablation_from_string(obj["ablation"]);
        if (obj.contains("train")) config.train = verdict::TrainConfig::from_json(obj["train"]);
        if (obj.contains("seeds")) config.seeds = obj["seeds"].get<std::vector<std::uint64_t>>();
        if (obj.contains("output_dir")) config.output_dir = obj["output_dir"];
        if (obj.contains("run_id")) config.run_id = obj["run_id"];
        if (obj.contains("external_command")) config.external_command = obj["external_command"];
        if (obj.contains("feature_dim")) config.feature_dim = obj["feature_dim"];
        if (obj.contains("parallelism")) config.parallelism = obj["parallelism"];
        if (obj.contains("cache_dir")) config.cache_dir = obj["cache_dir"];
        if (obj.contains("templates_dir")) config.templates_dir = obj["templates_dir"];
        return config;
    }

    static ExperimentConfig load(const std::filesystem::path& path) {
        std::string bytes;
        try {
            bytes = read_file_bytes(path);
        } catch (const UnreadableFile&) {
            throw ConfigInvalid("cannot read config file: " + path.string());
        }
        json obj = json::parse(bytes, nullptr, false);
        if (obj.is_discarded())
            throw ConfigInvalid("config file is not valid JSON: " + path.string());
        return from_json(obj);
    }
};

// Covers everything that can change run outputs: semantic config fields, the
// corpus bytes and the exact template texts. Locations (output dir, cache
// dir), parallelism and the run id itself are deliberately left out.
inline std::string config_digest(const ExperimentConfig& config, const std::string& corpus_digest,
                                 const std::map<std::string, std::string>& template_digests) {
    auto spec_fields = [](const BackendSpec& spec) {
        ordered_json obj = spec.to_json();
        if (!spec.script.empty()) {
            obj["script_digest"] = sha256_hex(read_file_bytes(spec.script));
            obj.erase("script");
        }
        return obj;
    };
    ordered_json body;
    body["mode"] = fcheck::to_string(config.mode);
    body["corpus_digest"] = corpus_digest;
    body["scheme"] = config.scheme_name;
    body["labels"] = config.scheme().labels;
    body["dataset_kind"] = corpus::to_string(config.kind());
    body["backends"] = ordered_json{{"stage1", spec_fields(config.stage1)},
                                    {"stage2", spec_fields(config.stage2)},
                                    {"verdict", spec_fields(config.verdict_backend)}};
    body["ablation"] = verdict::to_string(config.ablation);
    body["train"] = config.train.to_json();
    body["seeds"] = config.seeds;
    body["external_command"] = config.external_command;
    body["feature_dim"] = config.feature_dim;
    body["templates"] = template_digests;
    return sha256_hex(body.dump());
}

// ---------------------------------------------------------------------------
// Manifest

struct SeedSummary {
    std::uint64_t seed = 0;
    std::size_t n_items = 0;
    double mp = 0;
    double mr = 0;
    double mf1 = 0;
};

struct RunManifest {
    std::string run_id;
    std::string status = "running";  // running | complete | aborted
    std::string error;
    std::string config_digest;
    std::string corpus_digest;
    std::string started_at;
    std::string finished_at;
    std::map<std::string, std::string> backend_ids;
    std::map<std::string, std::string> template_digests;
    std::vector<std::uint64_t> seeds;
    ordered_json config = ordered_json::object();
    std::map<std::string, std::string> artifacts;  // name -> path relative to the run dir
    std::vector<SeedSummary> per_seed;
    double mean_mp = 0;
    double mean_mr = 0;
    double mean_mf1 = 0;

    ordered_json to_json() const {
        ordered_json out;
        out["run_id"] = run_id;
        out["status"] = status;
        out["error"] = error;
        out["config_digest"] = config_digest;
        out["corpus_digest"] = corpus_digest;
        out["started_at"] = started_at;
        out["finished_at"] = finished_at;
        out["backend_ids"] = backend_ids;
        out["template_digests"] = template_digests;
        out["seeds"] = seeds;
        out["config"] = config;
        out["artifacts"] = artifacts;
        out["per_seed"] = ordered_json::array();
        for (const auto& row : per_seed)
            out["per_seed"].push_back(ordered_json{{"seed", row.seed},
                                                   {"n_items", row.n_items},
                                                   {"mp", row.mp},
                                                   {"mr", row.mr},
                                                   {"mf1", row.mf1}});
        out["mean"] = ordered_json{{"mp", mean_mp}, {"mr", mean_mr}, {"mf1", mean_mf1}};
        return out;
    }

    static RunManifest from_json(const json& obj) {
        RunManifest manifest;
        manifest.run_id = obj.at("run_id").get<std::string>();
        manifest.status = obj.at("status").get<std::string>();
        if (obj.contains("error")) manifest.error = obj["error"];
        manifest.config_digest = obj.at("config_digest").get<std::string>();
        manifest.corpus_digest = obj.at("corpus_digest").get<std::string>();
        if (obj.contains("started_at")) manifest.started_at = obj["started_at"];
        if (obj.contains("finished_at")) manifest.finished_at = obj["finished_at"];
        if (obj.contains("backend_ids"))
            manifest.backend_ids = obj["backend_ids"].get<std::map<std::string, std::string>>();
        if (obj.contains("template_digests"))
            manifest.template_digests =
                obj["template_digests"].get<std::map<std::string, std::string>>();
        if (obj.contains("seeds")) manifest.seeds = obj["seeds"].get<std::vector<std::uint64_t>>();
        if (obj.contains("config")) manifest.config = ordered_json(obj["config"]);
        if (obj.contains("artifacts"))
            manifest.artifacts = obj["artifacts"].get<std::map<std::string, std::string>>();
        if (obj.contains("per_seed"))
            for (const auto& row : obj["per_seed"])
                manifest.per_seed.push_back({row.at("seed").get<std::uint64_t>(),
                                             row.at("n_items").get<std::size_t>(),
                                             row.at("mp").get<double>(),
                                             row.at("mr").get<double>(),
                                             row.at("mf1").get<double>()});
        if (obj.contains("mean")) {
            manifest.mean_mp = obj["mean"].at("mp").get<double>();
            manifest.mean_mr = obj["mean"].at("mr").get<double>();
            manifest.mean_mf1 = obj["mean"].at("mf1").get<double>();
        }
        return manifest;
    }

    void save(const std::filesystem::path& run_dir) const {
        atomic_write_file(run_dir / "manifest.json", to_json().dump(2) + "\n");
    }

    static RunManifest load(const std::filesystem::path& run_dir) {
        auto path = run_dir / "manifest.json";
        if (!std::filesystem::exists(path)) throw RunNotFound(run_dir.string());
        json obj = json::parse(read_file_bytes(path), nullptr, false);
        if (obj.is_discarded())
            throw Error(ErrorCategory::data, "manifest is not valid JSON: " + path.string());
        return from_json(obj);
    }
};

// ---------------------------------------------------------------------------
// Stage materials

struct MaterialsStore {
    std::vector<entail::StancePartition> partitions;        // corpus order
    std::vector<entail::JustificationPair> justifications;  // corpus order
    std::vector<entail::Understanding> understandings;      // corpus order
    std::map<std::string, std::size_t> index;               // claim id -> position

    verdict::Materials for_record(const corpus::ClaimRecord& record) const {
        verdict::Materials materials;
        auto it = index.find(record.id);
        if (it == index.end()) return materials;
        if (it->second < justifications.size())
            materials.justifications = justifications[it->second];
        if (it->second < understandings.size())
            materials.understanding = understandings[it->second];
        return materials;
    }
};

inline std::vector<entail::StancePartition> compute_partitions(
    const std::vector<corpus::ClaimRecord>& records, const entail::Context& ctx) {
    std::vector<entail::StancePartition> partitions;
    partitions.reserve(records.size());
    for (const auto& record : records) partitions.push_back(entail::classify_evidence(record, ctx));
    return partitions;
}

inline std::vector<entail::JustificationPair> compute_justifications(
    const std::vector<corpus::ClaimRecord>& records,
    const std::vector<entail::StancePartition>& partitions, const entail::Context& ctx) {
    if (records.size() != partitions.size())
        throw Error(ErrorCategory::internal, "partition list does not match record list");
    std::vector<entail::JustificationPair> pairs;
    pairs.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i)
        pairs.push_back(entail::consolidate(records[i], partitions[i], ctx));
    return pairs;
}

inline std::vector<entail::Understanding> compute_understandings(
    const std::vector<corpus::ClaimRecord>& records, const entail::Context& ctx) {
    std::vector<entail::Understanding> understandings;
    understandings.reserve(records.size());
    for (const auto& record : records)
        understandings.push_back(entail::generate_understanding(record, ctx));
    return understandings;
}

// The explanation a run offers for a claim: its supporting and refuting
// justifications, concatenated.
inline std::string explanation_text(const entail::JustificationPair& pair) {
    return pair.supporting_justification + " " + pair.refuting_justification;
}

// ---------------------------------------------------------------------------
// Execution

// Test hooks: non-null entries take the place of the configured specs so
// instrumented fakes can count calls or inject failures.
struct BackendOverrides {
    backend::Backend* stage1 = nullptr;
    backend::Backend* stage2 = nullptr;
    backend::Backend* verdict = nullptr;
};

namespace detail {

inline std::unique_ptr<backend::Backend> make_backend(const BackendSpec& spec) {
    if (spec.kind == "mock") {
        auto mock = std::make_unique<backend::MockBackend>("mock:" + spec.model);
        if (!spec.script.empty()) mock->load_script(spec.script);
        return mock;
    }
    return std::make_unique<backend::HttpBackend>(spec.url, spec.api_key);
}

inline promptkit::TemplateSet load_templates(const ExperimentConfig& config) {
    if (config.templates_dir.empty()) return promptkit::TemplateSet::builtin();
    return promptkit::TemplateSet::load_dir(config.templates_dir);
}

struct Wired {
    std::unique_ptr<backend::Backend> owned_stage1, owned_stage2, owned_verdict;
    backend::Backend* stage1 = nullptr;
    backend::Backend* stage2 = nullptr;
    backend::Backend* verdict = nullptr;
    std::unique_ptr<backend::ResponseCache> cache;
    promptkit::TemplateSet templates;

    entail::Context context(backend::Backend* which, const BackendSpec& spec,
                            std::size_t parallelism) const {
        entail::Context ctx;
        ctx.backend = which;
        ctx.cache = cache.get();
        ctx.templates = &templates;
        ctx.params = spec.params();
        ctx.parallelism = parallelism;
        return ctx;
    }
};

inline Wired wire(const ExperimentConfig& config, const BackendOverrides& overrides) {
    Wired wired;
    if (overrides.stage1) {
        wired.stage1 = overrides.stage1;
    } else {
        wired.owned_stage1 = make_backend(config.stage1);
        wired.stage1 = wired.owned_stage1.get();
    }
    if (overrides.stage2) {
        wired.stage2 = overrides.stage2;
    } else {
        wired.owned_stage2 = make_backend(config.stage2);
        wired.stage2 = wired.owned_stage2.get();
    }
    if (overrides.verdict) {
        wired.verdict = overrides.verdict;
    } else {
        wired.owned_verdict = make_backend(config.verdict_backend);
        wired.verdict = wired.owned_verdict.get();
    }
    if (!config.cache_dir.empty())
        wired.cache = std::make_unique<backend::ResponseCache>(config.cache_dir);
    wired.templates = load_templates(config);
    return wired;
}

inline MaterialsStore compute_materials(const std::vector<corpus::ClaimRecord>& records,
                                        Mode mode, const entail::Context& stage1_ctx,
                                        const entail::Context& stage2_ctx) {
    MaterialsStore store;
    if (mode == Mode::tbe3) {
        store.partitions = compute_partitions(records, stage1_ctx);
        store.justifications = compute_justifications(records, store.partitions, stage2_ctx);
    } else if (mode == Mode::tbe2) {
        store.understandings = compute_understandings(records, stage2_ctx);
    }
    for (std::size_t i = 0; i < records.size(); ++i) store.index[records[i].id] = i;
    return store;
}

inline std::vector<verdict::Example> featurized_examples(
    const std::vector<corpus::ClaimRecord>& records, const MaterialsStore& store,
    const ExperimentConfig& config) {
    std::vector<verdict::Example> examples;
    examples.reserve(records.size());
    for (const auto& record : records) {
        std::string text =
            verdict::build_input(record, store.for_record(record), config.mode, config.ablation);
        examples.push_back({verdict::featurize(text, config.feature_dim), record.label});
    }
    return examples;
}

inline std::vector<verdict::TextExample> text_examples(
    const std::vector<corpus::ClaimRecord>& records, const MaterialsStore& store,
    const ExperimentConfig& config) {
    std::vector<verdict::TextExample> examples;
    examples.reserve(records.size());
    for (const auto& record : records)
        examples.push_back(
            {record.id,
             verdict::build_input(record, store.for_record(record), config.mode, config.ablation),
             record.label});
    return examples;
}

inline metrics::MetricsReport score_predictions(
    const std::vector<entail::PredictionRecord>& predictions,
    const corpus::LabelScheme& scheme) {
    std::vector<std::string> golds, preds;
    golds.reserve(predictions.size());
    preds.reserve(predictions.size());
    for (const auto& prediction : predictions) {
        golds.push_back(prediction.gold_label);
        preds.push_back(prediction.predicted_label);
    }
    return metrics::macro_prf(golds, preds, scheme);
}

// The full per-run pipeline. `shared` carries precomputed stage materials for
// ablation suites; the run still writes its own copy of those artifacts so
// every run directory is self-contained.
inline RunManifest execute_run(const ExperimentConfig& config, Wired& wired,
                               const corpus::Corpus& data, const MaterialsStore* shared) {
    namespace fs = std::filesystem;
    auto scheme = data.scheme;
    auto template_digests = wired.templates.digests();
    std::string digest = config_digest(config, data.digest, template_digests);
    std::string run_id = config.run_id.empty() ? "run-" + digest.substr(0, 12) : config.run_id;
    fs::path run_dir = fs::path(config.output_dir) / run_id;
    fs::create_directories(run_dir);

    RunManifest manifest;
    manifest.run_id = run_id;
    manifest.config_digest = digest;
    manifest.corpus_digest = data.digest;
    manifest.template_digests = template_digests;
    manifest.backend_ids = {{"stage1", wired.stage1->id()},
                            {"stage2", wired.stage2->id()},
                            {"verdict", wired.verdict->id()}};
    manifest.seeds = config.seeds;
    manifest.config = config.to_json();
    manifest.started_at = utc_timestamp();
    manifest.save(run_dir);
    atomic_write_file(run_dir / "config.json", config.to_json().dump(2) + "\n");

    try {
        auto train_split = corpus::split_view(data, corpus::Split::train);
        auto val_split = corpus::split_view(data, corpus::Split::val);
        auto test_split = corpus::split_view(data, corpus::Split::test);
        if (test_split.empty()) throw ConfigInvalid("corpus has no test records");
        if (is_training_mode(config.mode) && (train_split.empty() || val_split.empty()))
            throw ConfigInvalid("training modes need non-empty train and val splits");

        auto stage1_ctx = wired.context(wired.stage1, config.stage1, config.parallelism);
        auto stage2_ctx = wired.context(wired.stage2, config.stage2, config.parallelism);

        MaterialsStore local;
        const MaterialsStore* store = shared;
        if (!store) {
            local = compute_materials(data.records, config.mode, stage1_ctx, stage2_ctx);
            store = &local;
        }
        if (config.mode == Mode::tbe3) {
            entail::write_jsonl(run_dir / "stage1" / "partitions.jsonl", store->partitions);
            entail::write_jsonl(run_dir / "stage2" / "justifications.jsonl",
                                store->justifications);
            manifest.artifacts["stage1.partitions"] = "stage1/partitions.jsonl";
            manifest.artifacts["stage2.justifications"] = "stage2/justifications.jsonl";
        } else if (config.mode == Mode::tbe2) {
            entail::write_jsonl(run_dir / "stage2" / "understandings.jsonl",
                                store->understandings);
            manifest.artifacts["stage2.understandings"] = "stage2/understandings.jsonl";
        }

        std::vector<verdict::Example> train_examples, val_examples, test_examples;
        std::vector<verdict::TextExample> train_texts, val_texts, test_texts;
        if (is_training_mode(config.mode)) {
            if (config.external_command.empty()) {
                train_examples = featurized_examples(train_split, *store, config);
                val_examples = featurized_examples(val_split, *store, config);
                test_examples = featurized_examples(test_split, *store, config);
            } else {
                train_texts = text_examples(train_split, *store, config);
                val_texts = text_examples(val_split, *store, config);
                test_texts = text_examples(test_split, *store, config);
            }
        }

        std::vector<metrics::MetricsReport> seed_reports;
        for (std::uint64_t seed : config.seeds) {
            fs::path seed_dir = run_dir / "seeds" / ("seed-" + std::to_string(seed));
            fs::create_directories(seed_dir);
            std::string seed_prefix = "seeds/seed-" + std::to_string(seed) + "/";

            std::vector<entail::PredictionRecord> predictions;
            predictions.reserve(test_split.size());
            if (is_training_mode(config.mode)) {
                if (config.external_command.empty()) {
                    verdict::TrainConfig train_config = config.train;
                    train_config.seed = seed;
                    auto model =
                        verdict::train(train_examples, val_examples, train_config, scheme);
                    model.train_digest = digest;
                    model.save(seed_dir / "model.bin");
                    manifest.artifacts[seed_prefix + "model"] = seed_prefix + "model.bin";
                    for (std::size_t i = 0; i < test_split.size(); ++i) {
                        entail::PredictionRecord prediction;
                        prediction.claim_id = test_split[i].id;
                        prediction.gold_label = test_split[i].label;
                        prediction.mode = config.mode;
                        prediction.predicted_label =
                            verdict::predict(model, test_examples[i].features).label;
                        predictions.push_back(std::move(prediction));
                    }
                } else {
                    ::setenv("FCHECK_SEED", std::to_string(seed).c_str(), 1);
                    verdict::ExternalPredictor predictor(config.external_command);
                    auto predicted = predictor.run(train_texts, val_texts, test_texts, scheme);
                    for (const auto& record : test_split) {
                        entail::PredictionRecord prediction;
                        prediction.claim_id = record.id;
                        prediction.gold_label = record.label;
                        prediction.mode = config.mode;
                        prediction.predicted_label = predicted.at(record.id);
                        predictions.push_back(std::move(prediction));
                    }
                }
            } else {
                auto ibe_ctx =
                    wired.context(wired.verdict, config.verdict_backend, config.parallelism);
                ibe_ctx.params.seed = static_cast<std::int64_t>(seed);
                for (const auto& record : test_split)
                    predictions.push_back(entail::run_ibe(config.mode, record, ibe_ctx, scheme));
            }

            entail::write_jsonl(seed_dir / "predictions.jsonl", predictions);
            manifest.artifacts[seed_prefix + "predictions"] = seed_prefix + "predictions.jsonl";
            auto report = score_predictions(predictions, scheme);
            atomic_write_file(seed_dir / "metrics.json", report.to_json().dump(2) + "\n");
            manifest.artifacts[seed_prefix + "metrics"] = seed_prefix + "metrics.json";
            manifest.per_seed.push_back(
                {seed, report.n_items, report.mp, report.mr, report.mf1});
            seed_reports.push_back(std::move(report));
        }

        for (const auto& row : manifest.per_seed) {
            manifest.mean_mp += row.mp;
            manifest.mean_mr += row.mr;
            manifest.mean_mf1 += row.mf1;
        }
        manifest.mean_mp /= static_cast<double>(manifest.per_seed.size());
        manifest.mean_mr /= static_cast<double>(manifest.per_seed.size());
        manifest.mean_mf1 /= static_cast<double>(manifest.per_seed.size());

        ordered_json report;
        report["run_id"] = run_id;
        report["mode"] = fcheck::to_string(config.mode);
        report["ablation"] = verdict::to_string(config.ablation);
        report["per_seed"] = ordered_json::array();
        for (const auto& row : manifest.per_seed)
            report["per_seed"].push_back(ordered_json{{"seed", row.seed},
                                                      {"n_items", row.n_items},
                                                      {"mp", row.mp},
                                                      {"mr", row.mr},
                                                      {"mf1", row.mf1}});
        report["mean"] = ordered_json{
            {"mp", manifest.mean_mp}, {"mr", manifest.mean_mr}, {"mf1", manifest.mean_mf1}};
        atomic_write_file(run_dir / "report.json", report.dump(2) + "\n");
        manifest.artifacts["report"] = "report.json";

        metrics::MetricsReport mean_report;
        mean_report.n_items = seed_reports.front().n_items;
        mean_report.mp = manifest.mean_mp;
        mean_report.mr = manifest.mean_mr;
        mean_report.mf1 = manifest.mean_mf1;
        std::vector<std::pair<std::string, const metrics::MetricsReport*>> rows;
        for (std::size_t i = 0; i < seed_reports.size(); ++i)
            rows.emplace_back("seed-" + std::to_string(config.seeds[i]), &seed_reports[i]);
        rows.emplace_back("mean", &mean_report);
        atomic_write_file(run_dir / "report.txt", metrics::metrics_table(rows));
        manifest.artifacts["report.txt"] = "report.txt";

        manifest.status = "complete";
        manifest.finished_at = utc_timestamp();
        manifest.save(run_dir);
        return manifest;
    } catch (const std::exception& e) {
        manifest.status = "aborted";
        manifest.error = e.what();
        manifest.finished_at = utc_timestamp();
        manifest.save(run_dir);
        throw;
    }
}

}  // namespace detail

inline RunManifest run_experiment(const ExperimentConfig& config,
                                  const BackendOverrides& overrides = {}) {
    config.validate();
    auto wired = detail::wire(config, overrides);
    auto data = corpus::load_corpus(config.corpus_path, config.scheme());
    return detail::execute_run(config, wired, data, nullptr);
}

// ---------------------------------------------------------------------------
// Ablation suite

struct AblationSuite {
    std::string suite_dir;
    std::vector<RunManifest> runs;  // full, wo-refuting, wo-supporting, wo-both

    struct Row {
        std::string ablation;
        double mean_mp = 0;
        double mean_mr = 0;
        double mean_mf1 = 0;
    };
    std::vector<Row> rows;

    ordered_json to_json() const {
        ordered_json out;
        out["suite_dir"] = suite_dir;
        out["rows"] = ordered_json::array();
        for (const auto& row : rows)
            out["rows"].push_back(ordered_json{{"ablation", row.ablation},
                                               {"mp", row.mean_mp},
                                               {"mr", row.mean_mr},
                                               {"mf1", row.mean_mf1}});
        return out;
    }

    std::string table_text() const {
        std::ostringstream out;
        out << std::left << std::setw(16) << "ablation" << std::right << std::setw(10) << "MP"
            << std::setw(10) << "MR" << std::setw(10) << "MF1" << '\n';
        out << std::string(46, '-') << '\n';
        out << std::fixed << std::setprecision(4);
        for (const auto& row : rows)
            out << std::left << std::setw(16) << row.ablation << std::right << std::setw(10)
                << row.mean_mp << std::setw(10) << row.mean_mr << std::setw(10) << row.mean_mf1
                << '\n';
        return out.str();
    }
};

// Runs the four TBE-3 variants over one shared set of stage-1/2 artifacts.
// The stages execute exactly once; each run re-serializes the same objects,
// so the justification files agree byte for byte across the suite.
inline AblationSuite run_ablation_suite(const ExperimentConfig& config,
                                        const BackendOverrides& overrides = {}) {
    namespace fs = std::filesystem;
    config.validate();
    if (config.mode != Mode::tbe3)
        throw ConfigInvalid("ablation suite requires mode TBE-3, got " +
                            fcheck::to_string(config.mode));

    auto wired = detail::wire(config, overrides);
    auto data = corpus::load_corpus(config.corpus_path, config.scheme());
    auto digest = config_digest(config, data.digest, wired.templates.digests());
    std::string suite_id =
        config.run_id.empty() ? "suite-" + digest.substr(0, 12) : config.run_id;
    fs::path suite_dir = fs::path(config.output_dir) / suite_id;
    fs::create_directories(suite_dir);

    auto stage1_ctx = wired.context(wired.stage1, config.stage1, config.parallelism);
    auto stage2_ctx = wired.context(wired.stage2, config.stage2, config.parallelism);
    auto materials =
        detail::compute_materials(data.records, config.mode, stage1_ctx, stage2_ctx);

    AblationSuite suite;
    suite.suite_dir = suite_dir.string();
    for (auto ablation : verdict::all_ablations()) {
        ExperimentConfig variant = config;
        variant.ablation = ablation;
        variant.output_dir = suite_dir.string();
        variant.run_id = verdict::to_string(ablation);
        auto manifest = detail::execute_run(variant, wired, data, &materials);
        suite.rows.push_back({verdict::to_string(ablation), manifest.mean_mp, manifest.mean_mr,
                              manifest.mean_mf1});
        suite.runs.push_back(std::move(manifest));
    }

    atomic_write_file(suite_dir / "comparison.json", suite.to_json().dump(2) + "\n");
    atomic_write_file(suite_dir / "comparison.txt", suite.table_text());
    return suite;
}

// ---------------------------------------------------------------------------
// Post-hoc analyses over a finished run

struct SegmentationResult {
    corpus::DatasetKind kind = corpus::DatasetKind::liar_raw;
    std::vector<std::pair<std::uint64_t, metrics::SegmentReport>> per_seed;
    std::vector<std::pair<std::string, double>> mean_mf1;  // bucket order, occupied only

    ordered_json to_json() const {
        ordered_json out;
        out["dataset_kind"] = corpus::to_string(kind);
        out["per_seed"] = ordered_json::array();
        for (const auto& [seed, report] : per_seed)
            out["per_seed"].push_back(ordered_json{{"seed", seed}, {"report", report.to_json()}});
        out["mean_mf1"] = ordered_json::array();
        for (const auto& [bucket, value] : mean_mf1)
            out["mean_mf1"].push_back(ordered_json{{"bucket", bucket}, {"mf1", value}});
        return out;
    }

    std::string table_text() const {
        std::ostringstream out;
        out << std::left << std::setw(12) << "bucket" << std::right << std::setw(10) << "MF1"
            << '\n';
        out << std::string(22, '-') << '\n';
        out << std::fixed << std::setprecision(4);
        for (const auto& [bucket, value] : mean_mf1)
            out << std::left << std::setw(12) << bucket << std::right << std::setw(10) << value
                << '\n';
        return out.str();
    }
};

inline SegmentationResult run_segmentation(const std::filesystem::path& run_dir) {
    auto manifest = RunManifest::load(run_dir);
    auto config = ExperimentConfig::from_json(json(manifest.config));
    auto data = corpus::load_corpus(config.corpus_path, config.scheme());

    std::map<std::string, std::size_t> counts;
    for (const auto& record : data.records) counts[record.id] = record.evidences.size();

    SegmentationResult result;
    result.kind = config.kind();
    std::map<std::string, std::pair<double, std::size_t>> bucket_sums;
    for (std::uint64_t seed : manifest.seeds) {
        auto predictions = entail::read_jsonl<entail::PredictionRecord>(
            run_dir / "seeds" / ("seed-" + std::to_string(seed)) / "predictions.jsonl");
        std::vector<std::string> golds, preds;
        std::vector<std::size_t> evidence_counts;
        for (const auto& prediction : predictions) {
            auto it = counts.find(prediction.claim_id);
            if (it == counts.end())
                throw Error(ErrorCategory::data,
                            "prediction for unknown claim " + prediction.claim_id);
            golds.push_back(prediction.gold_label);
            preds.push_back(prediction.predicted_label);
            evidence_counts.push_back(it->second);
        }
        auto report =
            metrics::segment_report(preds, golds, evidence_counts, result.kind, data.scheme);
        for (const auto& [bucket, bucket_report] : report.buckets) {
            bucket_sums[bucket].first += bucket_report.mf1;
            bucket_sums[bucket].second += 1;
        }
        result.per_seed.emplace_back(seed, std::move(report));
    }

    for (const auto& bucket : corpus::bucket_order(result.kind)) {
        auto it = bucket_sums.find(bucket);
        if (it == bucket_sums.end()) continue;
        result.mean_mf1.emplace_back(bucket,
                                     it->second.first / static_cast<double>(it->second.second));
    }

    atomic_write_file(run_dir / "segmentation.json", result.to_json().dump(2) + "\n");
    atomic_write_file(run_dir / "segmentation.txt", result.table_text());
    return result;
}

struct ExplanationEval {
    std::size_t n_items = 0;
    bool semantic_available = false;
    metrics::ExplanationScores mean;
    std::map<std::string, double> subjective;  // empty without a judge backend

    ordered_json to_json() const {
        ordered_json out;
        out["n_items"] = n_items;
        out["mean"] = ordered_json{{"r1", mean.r1}, {"r2", mean.r2}, {"rl", mean.rl},
                                   {"bleu", mean.bleu}};
        if (semantic_available) out["mean"]["semantic"] = mean.semantic;
        if (!subjective.empty()) out["subjective"] = subjective;
        return out;
    }
};

// Scores every justification pair the run produced against a gold file of
// {"claim_id", "explanation"} lines. Semantic similarity needs an embedder;
// the five subjective dimensions need a judge backend.
inline ExplanationEval run_explanation_eval(const std::filesystem::path& run_dir,
                                            const std::filesystem::path& gold_path,
                                            backend::Embedder* embedder = nullptr,
                                            backend::Backend* judge = nullptr,
                                            backend::BackendParams judge_params = {}) {
    auto manifest = RunManifest::load(run_dir);
    auto justifications_path = run_dir / "stage2" / "justifications.jsonl";
    if (!std::filesystem::exists(justifications_path))
        throw Error(ErrorCategory::data,
                    "run produced no justification artifacts: " + run_dir.string());
    auto pairs = entail::read_jsonl<entail::JustificationPair>(justifications_path);
    if (pairs.empty()) throw Error(ErrorCategory::data, "empty justification artifact");

    std::map<std::string, std::string> gold;
    for (const auto& line : read_lines(gold_path)) {
        if (trim(line).empty()) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.contains("claim_id") || !obj.contains("explanation"))
            throw Error(ErrorCategory::data, "bad gold explanation line: " + line);
        gold[obj["claim_id"].get<std::string>()] = obj["explanation"].get<std::string>();
    }

    auto config = ExperimentConfig::from_json(json(manifest.config));
    std::map<std::string, std::string> claims;
    if (judge) {
        auto data = corpus::load_corpus(config.corpus_path, config.scheme());
        for (const auto& record : data.records) claims[record.id] = record.claim;
    }
    auto templates = detail::load_templates(config);

    ExplanationEval eval;
    eval.n_items = pairs.size();
    eval.semantic_available = embedder != nullptr;
    std::vector<promptkit::SubjectiveScores> ratings;
    for (const auto& pair : pairs) {
        auto it = gold.find(pair.claim_id);
        if (it == gold.end()) throw AlignmentError(pair.claim_id);
        std::string candidate = explanation_text(pair);
        eval.mean.r1 += metrics::rouge_n(candidate, it->second, 1).f1;
        eval.mean.r2 += metrics::rouge_n(candidate, it->second, 2).f1;
        eval.mean.rl += metrics::rouge_l(candidate, it->second).f1;
        eval.mean.bleu += metrics::bleu(candidate, {it->second});
        if (embedder)
            eval.mean.semantic += metrics::semantic_similarity(candidate, it->second, *embedder);
        if (judge) {
            auto claim_it = claims.find(pair.claim_id);
            if (claim_it == claims.end())
                throw Error(ErrorCategory::data, "corpus lacks claim " + pair.claim_id);
            backend::CompletionRequest request;
            request.params = judge_params;
            request.messages = {{"user", templates.render("subjective-eval",
                                                          {{"claim", claim_it->second},
                                                           {"explanation", candidate}})}};
            ratings.push_back(promptkit::parse_subjective(judge->complete(request).text));
        }
    }
    double n = static_cast<double>(pairs.size());
    eval.mean.r1 /= n;
    eval.mean.r2 /= n;
    eval.mean.rl /= n;
    eval.mean.bleu /= n;
    eval.mean.semantic /= n;
    if (judge) eval.subjective = metrics::subjective_aggregate(ratings);

    atomic_write_file(run_dir / "explanation_eval.json", eval.to_json().dump(2) + "\n");
    return eval;
}

// ---------------------------------------------------------------------------
// Corpus summaries (the ingest verb)

struct CorpusSummary {
    std::size_t n_records = 0;
    std::string digest;
    std::map<std::string, std::size_t> per_split;
    std::map<std::string, std::size_t> per_label;

    ordered_json to_json() const {
        return ordered_json{{"n_records", n_records},
                            {"digest", digest},
                            {"per_split", per_split},
                            {"per_label", per_label}};
    }
};

inline CorpusSummary summarize(const corpus::Corpus& data) {
    CorpusSummary summary;
    summary.n_records = data.records.size();
    summary.digest = data.digest;
    for (const auto& record : data.records) {
        ++summary.per_split[corpus::to_string(record.split)];
        ++summary.per_label[record.label];
    }
    return summary;
}

}  // namespace fcheck::labrunner
