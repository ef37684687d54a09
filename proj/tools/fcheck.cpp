// fcheck — command-line front end for the fact-checking experiment engine.
//
// Verbs:
//   ingest        validate a corpus file and print split/label counts
//   stage1        classify evidence stance and persist the partitions
//   stage2        build justifications (TBE-3) or understandings (TBE-2)
//   run           execute a full experiment from a config file
//   ablate        run the four-variant justification ablation suite
//   segment       break a finished run's scores down by evidence count
//   explain-eval  score generated explanations against a gold file
//   report        print a finished run's manifest summary and score table
//
// Exit codes: 0 success, 2 config error, 3 backend error, 4 data error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <fcheck/fcheck.hpp>

namespace fs = std::filesystem;
using namespace fcheck;

namespace {

int exit_code_for(ErrorCategory category) {
    switch (category) {
        case ErrorCategory::config: return 2;
        case ErrorCategory::backend: return 3;
        case ErrorCategory::data: return 4;
        case ErrorCategory::internal: return 1;
    }
    return 1;
}

std::string env_or_empty(const char* name) {
    const char* value = std::getenv(name);
    return value ? value : "";
}

// Settings shared by every verb. Explicit flags beat environment variables,
// which beat whatever the config file says.
struct GlobalOptions {
    std::string config_path;
    std::string cache_dir;
    std::optional<std::size_t> parallelism;
    std::string templates_dir;
    std::string backend_url;
    std::string backend_key;
    std::string embed_url;

    void resolve_env() {
        if (backend_url.empty()) backend_url = env_or_empty("FCHECK_BACKEND_URL");
        if (backend_key.empty()) backend_key = env_or_empty("FCHECK_BACKEND_KEY");
        if (embed_url.empty()) embed_url = env_or_empty("FCHECK_EMBED_URL");
    }

    labrunner::ExperimentConfig load_config() const {
        if (config_path.empty())
            throw labrunner::ConfigInvalid("this command needs --config <file>");
        auto config = labrunner::ExperimentConfig::load(config_path);
        if (!cache_dir.empty()) config.cache_dir = cache_dir;
        if (parallelism) config.parallelism = *parallelism;
        if (!templates_dir.empty()) config.templates_dir = templates_dir;
        for (auto* spec : {&config.stage1, &config.stage2, &config.verdict_backend}) {
            if (spec->kind != "http") continue;  // scripted mocks never go online
            if (!backend_url.empty()) spec->url = backend_url;
            if (!backend_key.empty()) spec->api_key = backend_key;
        }
        return config;
    }
};

// Stage verbs write into the same directory `run` would use, so a later
// full run can share cache hits and humans can inspect partial pipelines.
fs::path stage_dir_for(const labrunner::ExperimentConfig& config,
                       const labrunner::detail::Wired& wired, const corpus::Corpus& data) {
    auto digest = labrunner::config_digest(config, data.digest, wired.templates.digests());
    std::string run_id = config.run_id.empty() ? "run-" + digest.substr(0, 12) : config.run_id;
    return fs::path(config.output_dir) / run_id;
}

int cmd_ingest(const std::string& corpus_path, const std::string& scheme_name,
               const std::vector<std::string>& labels) {
    corpus::LabelScheme scheme =
        labels.empty() ? corpus::LabelScheme::by_name(scheme_name)
                       : corpus::LabelScheme{scheme_name, labels};
    scheme.validate();
    auto data = corpus::load_corpus(corpus_path, scheme);
    auto summary = labrunner::summarize(data);
    std::cout << summary.to_json().dump(2) << '\n';
    return 0;
}

int cmd_stage1(const GlobalOptions& options) {
    auto config = options.load_config();
    config.validate();
    auto wired = labrunner::detail::wire(config, {});
    auto data = corpus::load_corpus(config.corpus_path, config.scheme());
    auto run_dir = stage_dir_for(config, wired, data);

    auto ctx = wired.context(wired.stage1, config.stage1, config.parallelism);
    auto partitions = labrunner::compute_partitions(data.records, ctx);
    entail::write_jsonl(run_dir / "stage1" / "partitions.jsonl", partitions);

    std::size_t supporting = 0, refuting = 0, unknown = 0;
    for (const auto& partition : partitions) {
        supporting += partition.supporting.size();
        refuting += partition.refuting.size();
        unknown += partition.unknown.size();
    }
    std::cout << "wrote " << (run_dir / "stage1" / "partitions.jsonl").string() << '\n'
              << "records: " << partitions.size() << "  supporting: " << supporting
              << "  refuting: " << refuting << "  unknown: " << unknown << '\n';
    return 0;
}

int cmd_stage2(const GlobalOptions& options) {
    auto config = options.load_config();
    config.validate();
    if (config.mode != Mode::tbe2 && config.mode != Mode::tbe3)
        throw labrunner::ConfigInvalid("stage2 applies to TBE-2 or TBE-3 configs, got " +
                                       fcheck::to_string(config.mode));
    auto wired = labrunner::detail::wire(config, {});
    auto data = corpus::load_corpus(config.corpus_path, config.scheme());
    auto run_dir = stage_dir_for(config, wired, data);

    if (config.mode == Mode::tbe2) {
        auto ctx = wired.context(wired.stage2, config.stage2, config.parallelism);
        auto understandings = labrunner::compute_understandings(data.records, ctx);
        entail::write_jsonl(run_dir / "stage2" / "understandings.jsonl", understandings);
        std::cout << "wrote " << (run_dir / "stage2" / "understandings.jsonl").string() << '\n'
                  << "records: " << understandings.size() << '\n';
        return 0;
    }

    // TBE-3: reuse a persisted stage-1 artifact when one is already in place.
    auto partitions_path = run_dir / "stage1" / "partitions.jsonl";
    std::vector<entail::StancePartition> partitions;
    if (fs::exists(partitions_path)) {
        partitions = entail::read_jsonl<entail::StancePartition>(partitions_path);
        if (partitions.size() != data.records.size())
            throw Error(ErrorCategory::data,
                        "stage1 artifact covers " + std::to_string(partitions.size()) +
                            " records but the corpus has " + std::to_string(data.records.size()));
    } else {
        auto ctx = wired.context(wired.stage1, config.stage1, config.parallelism);
        partitions = labrunner::compute_partitions(data.records, ctx);
        entail::write_jsonl(partitions_path, partitions);
    }
    auto ctx = wired.context(wired.stage2, config.stage2, config.parallelism);
    auto justifications = labrunner::compute_justifications(data.records, partitions, ctx);
    entail::write_jsonl(run_dir / "stage2" / "justifications.jsonl", justifications);
    std::cout << "wrote " << (run_dir / "stage2" / "justifications.jsonl").string() << '\n'
              << "records: " << justifications.size() << '\n';
    return 0;
}

int cmd_run(const GlobalOptions& options) {
    auto config = options.load_config();
    auto manifest = labrunner::run_experiment(config);
    fs::path run_dir = fs::path(config.output_dir) / manifest.run_id;
    std::cout << "run " << manifest.run_id << " " << manifest.status << '\n'
              << read_file_bytes(run_dir / "report.txt")
              << "artifacts in " << run_dir.string() << '\n';
    return 0;
}

int cmd_ablate(const GlobalOptions& options) {
    auto config = options.load_config();
    auto suite = labrunner::run_ablation_suite(config);
    std::cout << suite.table_text() << "artifacts in " << suite.suite_dir << '\n';
    return 0;
}

int cmd_segment(const std::string& run_dir) {
    auto result = labrunner::run_segmentation(run_dir);
    std::cout << result.table_text();
    return 0;
}

int cmd_explain_eval(const GlobalOptions& options, const std::string& run_dir,
                     const std::string& gold_path, bool with_judge,
                     const std::string& embed_model) {
    std::unique_ptr<backend::Embedder> embedder;
    if (!options.embed_url.empty())
        embedder = std::make_unique<backend::HttpEmbedder>(options.embed_url,
                                                           options.backend_key, embed_model);

    std::unique_ptr<backend::Backend> judge;
    backend::BackendParams judge_params;
    if (with_judge) {
        auto manifest = labrunner::RunManifest::load(run_dir);
        auto config = labrunner::ExperimentConfig::from_json(json(manifest.config));
        auto spec = config.verdict_backend;
        if (spec.kind == "http") {
            if (!options.backend_url.empty()) spec.url = options.backend_url;
            if (!options.backend_key.empty()) spec.api_key = options.backend_key;
        }
        judge = labrunner::detail::make_backend(spec);
        judge_params = spec.params();
    }

    auto eval = labrunner::run_explanation_eval(run_dir, gold_path, embedder.get(), judge.get(),
                                                judge_params);
    std::cout << eval.to_json().dump(2) << '\n';
    return 0;
}

int cmd_report(const std::string& run_dir) {
    auto manifest = labrunner::RunManifest::load(run_dir);
    std::cout << "run:     " << manifest.run_id << '\n'
              << "status:  " << manifest.status << '\n';
    if (!manifest.error.empty()) std::cout << "error:   " << manifest.error << '\n';
    std::cout << "config:  " << manifest.config_digest << '\n'
              << "corpus:  " << manifest.corpus_digest << '\n'
              << "started: " << manifest.started_at << '\n';
    if (!manifest.finished_at.empty()) std::cout << "finished: " << manifest.finished_at << '\n';
    auto report_path = fs::path(run_dir) / "report.txt";
    if (fs::exists(report_path)) std::cout << read_file_bytes(report_path);
    for (const auto& extra : {"segmentation.txt", "explanation_eval.json"}) {
        auto path = fs::path(run_dir) / extra;
        if (fs::exists(path)) std::cout << extra << ":\n" << read_file_bytes(path);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Automated fact-checking experiment engine"};
    app.require_subcommand(1);

    GlobalOptions options;
    std::size_t parallelism_flag = 0;
    app.add_option("--cache-dir", options.cache_dir,
                   "Response cache directory (overrides the config file)");
    auto* parallelism_opt =
        app.add_option("--parallelism", parallelism_flag, "Worker threads for backend calls");
    app.add_option("--templates", options.templates_dir, "Prompt template directory");
    app.add_option("--backend-url", options.backend_url,
                   "HTTP backend URL (env FCHECK_BACKEND_URL)");
    app.add_option("--backend-key", options.backend_key,
                   "HTTP backend API key (env FCHECK_BACKEND_KEY)");
    app.add_option("--embed-url", options.embed_url,
                   "Embedding endpoint URL (env FCHECK_EMBED_URL)");

    auto* ingest = app.add_subcommand("ingest", "Validate a corpus file and print counts");
    std::string corpus_path, scheme_name = "liar-raw";
    std::vector<std::string> scheme_labels;
    ingest->add_option("corpus", corpus_path, "Corpus JSONL file")->required();
    ingest->add_option("--scheme", scheme_name, "Label scheme name (liar-raw or raw-fc)");
    ingest->add_option("--labels", scheme_labels,
                       "Custom ordered label list (overrides --scheme's builtin labels)");

    auto add_config = [&](CLI::App* verb) {
        verb->add_option("--config", options.config_path, "Experiment config JSON file")
            ->required();
    };
    auto* stage1 = app.add_subcommand("stage1", "Classify evidence stance, persist partitions");
    add_config(stage1);
    auto* stage2 =
        app.add_subcommand("stage2", "Build justifications (TBE-3) or understandings (TBE-2)");
    add_config(stage2);
    auto* run = app.add_subcommand("run", "Execute a full experiment");
    add_config(run);
    auto* ablate = app.add_subcommand("ablate", "Run the four-variant ablation suite");
    add_config(ablate);

    std::string run_dir, gold_path, embed_model = "embed";
    bool with_judge = false;
    auto* segment = app.add_subcommand("segment", "Score a run by evidence-count bucket");
    segment->add_option("--run", run_dir, "Run directory")->required();
    auto* explain =
        app.add_subcommand("explain-eval", "Score generated explanations against gold text");
    explain->add_option("--run", run_dir, "Run directory")->required();
    explain->add_option("--gold", gold_path, "Gold explanations JSONL file")->required();
    explain->add_flag("--judge", with_judge,
                      "Also collect the five subjective ratings from the run's verdict backend");
    explain->add_option("--embed-model", embed_model, "Model name sent to the embed endpoint");
    auto* report = app.add_subcommand("report", "Print a run's manifest summary and scores");
    report->add_option("--run", run_dir, "Run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    options.resolve_env();
    if (parallelism_opt->count() > 0) options.parallelism = parallelism_flag;

    try {
        if (ingest->parsed()) return cmd_ingest(corpus_path, scheme_name, scheme_labels);
        if (stage1->parsed()) return cmd_stage1(options);
        if (stage2->parsed()) return cmd_stage2(options);
        if (run->parsed()) return cmd_run(options);
        if (ablate->parsed()) return cmd_ablate(options);
        if (segment->parsed()) return cmd_segment(run_dir);
        if (explain->parsed())
            return cmd_explain_eval(options, run_dir, gold_path, with_judge, embed_model);
        if (report->parsed()) return cmd_report(run_dir);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.category());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
