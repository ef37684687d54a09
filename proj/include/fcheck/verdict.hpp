#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <unistd.h>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fcheck/common.hpp"
#include "fcheck/corpus.hpp"
#include "fcheck/entail.hpp"
#include "fcheck/metrics.hpp"

namespace fcheck::verdict {

struct MaterialMissing : Error {
    explicit MaterialMissing(Mode mode)
        : Error(ErrorCategory::data,
                "mode " + fcheck::to_string(mode) + " is missing its input materials") {}
};

struct DegenerateData : Error {
    explicit DegenerateData(const std::string& why)
        : Error(ErrorCategory::data, "training data degenerate: " + why) {}
};

struct NonFiniteLoss : Error {
    NonFiniteLoss() : Error(ErrorCategory::internal, "training loss became non-finite") {}
};

// ---------------------------------------------------------------------------
// Ablations and predictor input assembly

enum class AblationMode { full, wo_supporting, wo_refuting, wo_both };

inline std::string to_string(AblationMode mode) {
    switch (mode) {
        case AblationMode::full: return "full";
        case AblationMode::wo_supporting: return "wo-supporting";
        case AblationMode::wo_refuting: return "wo-refuting";
        case AblationMode::wo_both: return "wo-both";
    }
    throw Error(ErrorCategory::internal, "invalid ablation mode");
}

inline AblationMode ablation_from_string(const std::string& name) {
    if (name == "full") return AblationMode::full;
    if (name == "wo-supporting") return AblationMode::wo_supporting;
    if (name == "wo-refuting") return AblationMode::wo_refuting;
    if (name == "wo-both") return AblationMode::wo_both;
    throw Error(ErrorCategory::config, "unknown ablation mode: " + name);
}

inline const std::vector<AblationMode>& all_ablations() {
    static const std::vector<AblationMode> modes = {
        AblationMode::full, AblationMode::wo_refuting, AblationMode::wo_supporting,
        AblationMode::wo_both};
    return modes;
}

struct Materials {
    std::optional<entail::JustificationPair> justifications;  // TBE-3
    std::optional<entail::Understanding> understanding;       // TBE-2
};

// Predictor input text with labeled section separators. The ablation drops
// whole sections, so wo-both reduces to the bare claim section.
inline std::string build_input(const corpus::ClaimRecord& record, const Materials& materials,
                               Mode mode, AblationMode ablation) {
    if (ablation != AblationMode::full && mode != Mode::tbe3)
        throw Error(ErrorCategory::config,
                    "ablation " + to_string(ablation) + " requires TBE-3, got " +
                        fcheck::to_string(mode));

    std::string out = "[CLAIM] " + record.claim;
    switch (mode) {
        case Mode::tbe1:
            for (const auto& evidence : record.evidences) out += "\n[EVIDENCE] " + evidence;
            break;
        case Mode::tbe2:
            if (!materials.understanding) throw MaterialMissing(mode);
            out += "\n[UNDERSTANDING] " + materials.understanding->text;
            break;
        case Mode::tbe3: {
            if (!materials.justifications) throw MaterialMissing(mode);
            bool keep_supporting =
                ablation == AblationMode::full || ablation == AblationMode::wo_refuting;
            bool keep_refuting =
                ablation == AblationMode::full || ablation == AblationMode::wo_supporting;
            if (keep_supporting)
                out += "\n[SUPPORTING] " + materials.justifications->supporting_justification;
            if (keep_refuting)
                out += "\n[REFUTING] " + materials.justifications->refuting_justification;
            break;
        }
        default:
            throw Error(ErrorCategory::internal,
                        "build_input is for training modes, got " + fcheck::to_string(mode));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Hashed features

struct FeatureVector {
    std::uint32_t dim = 0;
    std::vector<std::uint32_t> indices;  // strictly increasing
    std::vector<double> values;

    bool operator==(const FeatureVector&) const = default;
};

inline constexpr std::uint32_t kDefaultFeatureDim = 1u << 18;

// Word unigrams and bigrams, signed 64-bit FNV-1a hash, counts scaled by
// 1/sqrt(token count). The hash is fixed so vectors match across platforms.
inline FeatureVector featurize(std::string_view text, std::uint32_t dim = kDefaultFeatureDim) {
    if (dim == 0 || (dim & (dim - 1)) != 0)
        throw Error(ErrorCategory::config, "feature dimension must be a power of two");

    FeatureVector features;
    features.dim = dim;
    auto tokens = tokenize(text);
    if (tokens.empty()) return features;

    std::map<std::uint32_t, double> buckets;
    auto add = [&](const std::string& term) {
        std::uint64_t h = fnv1a64(term);
        double sign = (h >> 63) ? -1.0 : 1.0;
        buckets[static_cast<std::uint32_t>(h & (dim - 1))] += sign;
    };
    for (const auto& token : tokens) add(token);
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) add(tokens[i] + " " + tokens[i + 1]);

    double scale = 1.0 / std::sqrt(static_cast<double>(tokens.size()));
    for (const auto& [index, value] : buckets) {
        if (value == 0.0) continue;  // opposite-sign collisions cancel out
        features.indices.push_back(index);
        features.values.push_back(value * scale);
    }
    return features;
}

inline std::string feature_spec_digest(std::uint32_t dim) {
    return sha256_hex("fnv1a64 signed unigram+bigram 1/sqrt(len) v1 dim=" + std::to_string(dim));
}

// ---------------------------------------------------------------------------
// Training configuration

struct TrainConfig {
    double learning_rate = 2e-2;
    int batch_size = 16;   // allowed: 8 or 16
    int patience = 2;      // allowed: 2 or 3
    int max_epochs = 30;
    std::uint64_t seed = 0;
    double l2 = 1e-5;

    void validate() const {
        if (learning_rate <= 0) throw Error(ErrorCategory::config, "learning_rate must be > 0");
        if (l2 < 0) throw Error(ErrorCategory::config, "l2 must be >= 0");
        if (batch_size != 8 && batch_size != 16)
            throw Error(ErrorCategory::config, "batch_size must be 8 or 16");
        if (patience != 2 && patience != 3)
            throw Error(ErrorCategory::config, "patience must be 2 or 3");
        if (max_epochs <= patience)
            throw Error(ErrorCategory::config, "max_epochs must exceed patience");
    }

    ordered_json to_json() const {
        return ordered_json{{"learning_rate", learning_rate}, {"batch_size", batch_size},
                            {"patience", patience},           {"max_epochs", max_epochs},
                            {"seed", seed},                   {"l2", l2}};
    }

    static TrainConfig from_json(const json& obj) {
        TrainConfig config;
        if (obj.contains("learning_rate")) config.learning_rate = obj["learning_rate"];
        if (obj.contains("batch_size")) config.batch_size = obj["batch_size"];
        if (obj.contains("patience")) config.patience = obj["patience"];
        if (obj.contains("max_epochs")) config.max_epochs = obj["max_epochs"];
        if (obj.contains("seed")) config.seed = obj["seed"];
        if (obj.contains("l2")) config.l2 = obj["l2"];
        return config;
    }
};

// Encoder fine-tuning grid, passed through to external predictors only; the
// native model's learning rate lives on a different scale.
inline const std::vector<double> kExternalLearningRateGrid = {2e-6, 2e-5, 1e-5};

struct Example {
    FeatureVector features;
    std::string label;
};

// ---------------------------------------------------------------------------
// Model

struct Prediction {
    std::string label;
    std::vector<double> probabilities;
};

struct VeracityModel {
    corpus::LabelScheme scheme;
    std::uint32_t dim = 0;
    std::vector<double> weights;  // row-major [labels x dim]
    std::vector<double> bias;
    std::string feature_digest;
    std::string train_digest;

    std::vector<double> logits(const FeatureVector& features) const {
        std::size_t k = scheme.labels.size();
        std::vector<double> z(bias);
        for (std::size_t c = 0; c < k; ++c) {
            const double* row = weights.data() + c * dim;
            for (std::size_t j = 0; j < features.indices.size(); ++j)
                z[c] += row[features.indices[j]] * features.values[j];
        }
        return z;
    }

    void save(const std::filesystem::path& path) const;
    static VeracityModel load(const std::filesystem::path& path);
};

inline std::vector<double> softmax(std::vector<double> z) {
    double max_z = *std::max_element(z.begin(), z.end());
    double sum = 0;
    for (double& v : z) {
        v = std::exp(v - max_z);
        sum += v;
    }
    for (double& v : z) v /= sum;
    return z;
}

inline Prediction predict(const VeracityModel& model, const FeatureVector& features) {
    Prediction prediction;
    prediction.probabilities = softmax(model.logits(features));
    std::size_t best = 0;
    for (std::size_t c = 1; c < prediction.probabilities.size(); ++c)
        if (prediction.probabilities[c] > prediction.probabilities[best]) best = c;
    prediction.label = model.scheme.labels[best];
    return prediction;
}

// Mean softmax cross-entropy over `examples` plus (l2/2)*||W||^2, with
// analytic gradients. Shared by the trainer and the finite-difference check.
inline double loss_and_gradient(const std::vector<Example>& examples,
                                const corpus::LabelScheme& scheme, std::uint32_t dim,
                                const std::vector<double>& weights,
                                const std::vector<double>& bias, double l2,
                                std::vector<double>& grad_weights,
                                std::vector<double>& grad_bias) {
    std::size_t k = scheme.labels.size();
    grad_weights.assign(k * dim, 0.0);
    grad_bias.assign(k, 0.0);
    double loss = 0;
    double inv_n = 1.0 / static_cast<double>(examples.size());

    for (const auto& example : examples) {
        std::vector<double> z(bias);
        for (std::size_t c = 0; c < k; ++c) {
            const double* row = weights.data() + c * dim;
            for (std::size_t j = 0; j < example.features.indices.size(); ++j)
                z[c] += row[example.features.indices[j]] * example.features.values[j];
        }
        auto p = softmax(z);
        std::size_t gold = scheme.index_of(example.label);
        loss -= std::log(std::max(p[gold], 1e-300)) * inv_n;
        for (std::size_t c = 0; c < k; ++c) {
            double dz = (p[c] - (c == gold ? 1.0 : 0.0)) * inv_n;
            grad_bias[c] += dz;
            double* grow = grad_weights.data() + c * dim;
            for (std::size_t j = 0; j < example.features.indices.size(); ++j)
                grow[example.features.indices[j]] += dz * example.features.values[j];
        }
    }

    if (l2 > 0) {
        double sq = 0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            sq += weights[i] * weights[i];
            grad_weights[i] += l2 * weights[i];
        }
        loss += 0.5 * l2 * sq;
    }
    return loss;
}

// Mini-batch gradient descent on the convex softmax objective. L2 decay is
// applied through a running scale factor, so the per-step cost stays
// proportional to the batch's nonzeros; the bias is left unregularized.
// Everything is single-threaded with a hand-rolled shuffle, which makes the
// result bit-for-bit reproducible per seed on any platform.
inline VeracityModel train(const std::vector<Example>& train_set,
                           const std::vector<Example>& val_set, const TrainConfig& config,
                           const corpus::LabelScheme& scheme) {
    config.validate();
    if (train_set.empty()) throw DegenerateData("empty train split");
    if (val_set.empty()) throw DegenerateData("empty validation split");
    std::uint32_t dim = train_set.front().features.dim;
    for (const auto& example : train_set)
        if (example.features.dim != dim) throw DegenerateData("mixed feature dimensions");
    for (const auto& label : scheme.labels) {
        bool present = false;
        for (const auto& example : train_set)
            if (example.label == label) {
                present = true;
                break;
            }
        if (!present) throw DegenerateData("label never appears in train split: " + label);
    }

    std::size_t k = scheme.labels.size();
    std::vector<double> weights(k * dim, 0.0);
    std::vector<double> bias(k, 0.0);
    double scale = 1.0;

    VeracityModel best;
    best.scheme = scheme;
    best.dim = dim;
    best.feature_digest = feature_spec_digest(dim);
    double best_val = -1.0;
    int epochs_since_improve = 0;

    auto materialize = [&]() {
        std::vector<double> out(weights);
        for (double& w : out) w *= scale;
        return out;
    };

    Rng rng(config.seed);
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        deterministic_shuffle(order, rng);

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            double inv_b = 1.0 / static_cast<double>(stop - start);

            // Weight decay first, then the cross-entropy step: together they
            // are one exact gradient step on CE + (l2/2)||W||^2.
            scale *= 1.0 - config.learning_rate * config.l2;
            if (scale < 1e-12) {
                for (double& w : weights) w *= scale;
                scale = 1.0;
            }

            for (std::size_t b = start; b < stop; ++b) {
                const auto& example = train_set[order[b]];
                std::vector<double> z(bias);
                for (std::size_t c = 0; c < k; ++c) {
                    const double* row = weights.data() + c * dim;
                    double dot = 0;
                    for (std::size_t j = 0; j < example.features.indices.size(); ++j)
                        dot += row[example.features.indices[j]] * example.features.values[j];
                    z[c] += dot * scale;
                }
                auto p = softmax(z);
                std::size_t gold = scheme.index_of(example.label);
                if (!std::isfinite(p[gold])) throw NonFiniteLoss();

                for (std::size_t c = 0; c < k; ++c) {
                    double dz = (p[c] - (c == gold ? 1.0 : 0.0)) * inv_b;
                    bias[c] -= config.learning_rate * dz;
                    double step = config.learning_rate * dz / scale;
                    double* row = weights.data() + c * dim;
                    for (std::size_t j = 0; j < example.features.indices.size(); ++j)
                        row[example.features.indices[j]] -= step * example.features.values[j];
                }
            }
        }

        VeracityModel candidate;
        candidate.scheme = scheme;
        candidate.dim = dim;
        candidate.weights = materialize();
        candidate.bias = bias;
        for (double w : candidate.weights)
            if (!std::isfinite(w)) throw NonFiniteLoss();

        std::vector<std::string> golds, preds;
        golds.reserve(val_set.size());
        for (const auto& example : val_set) {
            golds.push_back(example.label);
            preds.push_back(predict(candidate, example.features).label);
        }
        double val_mf1 = metrics::macro_prf(golds, preds, scheme).mf1;

        if (val_mf1 > best_val) {
            best_val = val_mf1;
            best.weights = std::move(candidate.weights);
            best.bias = candidate.bias;
            epochs_since_improve = 0;
        } else if (++epochs_since_improve >= config.patience) {
            break;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Model container: "FCKM" magic, format version, JSON header, then raw
// little-endian doubles (bias block first, weight matrix after).

inline void VeracityModel::save(const std::filesystem::path& path) const {
    ordered_json header;
    header["scheme_name"] = scheme.name;
    header["labels"] = scheme.labels;
    header["dim"] = dim;
    header["feature_digest"] = feature_digest;
    header["train_digest"] = train_digest;
    std::string header_bytes = header.dump();

    std::string out;
    out.reserve(16 + header_bytes.size() + sizeof(double) * (bias.size() + weights.size()));
    out += "FCKM";
    auto put_u32 = [&](std::uint32_t v) {
        for (int shift = 0; shift < 32; shift += 8)
            out.push_back(static_cast<char>((v >> shift) & 0xff));
    };
    put_u32(1);  // container version
    put_u32(static_cast<std::uint32_t>(header_bytes.size()));
    out += header_bytes;
    auto put_doubles = [&](const std::vector<double>& v) {
        for (double x : v) {
            std::uint64_t bits;
            std::memcpy(&bits, &x, sizeof(bits));
            for (int shift = 0; shift < 64; shift += 8)
                out.push_back(static_cast<char>((bits >> shift) & 0xff));
        }
    };
    put_doubles(bias);
    put_doubles(weights);
    atomic_write_file(path, out);
}

inline VeracityModel VeracityModel::load(const std::filesystem::path& path) {
    std::string bytes = read_file_bytes(path);
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (pos + n > bytes.size())
            throw Error(ErrorCategory::data, "model file truncated: " + path.string());
    };
    need(4);
    if (bytes.compare(0, 4, "FCKM") != 0)
        throw Error(ErrorCategory::data, "not a model file: " + path.string());
    pos = 4;
    auto get_u32 = [&]() {
        need(4);
        std::uint32_t v = 0;
        for (int shift = 0; shift < 32; shift += 8)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos++])) << shift;
        return v;
    };
    std::uint32_t version = get_u32();
    if (version != 1)
        throw Error(ErrorCategory::data, "unsupported model version " + std::to_string(version));
    std::uint32_t header_len = get_u32();
    need(header_len);
    json header = json::parse(bytes.substr(pos, header_len), nullptr, false);
    pos += header_len;
    if (header.is_discarded()) throw Error(ErrorCategory::data, "bad model header");

    VeracityModel model;
    model.scheme.name = header.at("scheme_name").get<std::string>();
    model.scheme.labels = header.at("labels").get<std::vector<std::string>>();
    model.dim = header.at("dim").get<std::uint32_t>();
    model.feature_digest = header.at("feature_digest").get<std::string>();
    model.train_digest = header.at("train_digest").get<std::string>();

    std::size_t k = model.scheme.labels.size();
    auto get_doubles = [&](std::size_t count) {
        need(count * 8);
        std::vector<double> v(count);
        for (std::size_t i = 0; i < count; ++i) {
            std::uint64_t bits = 0;
            for (int shift = 0; shift < 64; shift += 8)
                bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos++]))
                        << shift;
            std::memcpy(&v[i], &bits, sizeof(bits));
        }
        return v;
    };
    model.bias = get_doubles(k);
    model.weights = get_doubles(k * static_cast<std::size_t>(model.dim));
    if (pos != bytes.size())
        throw Error(ErrorCategory::data, "trailing bytes in model file: " + path.string());
    return model;
}

// ---------------------------------------------------------------------------
// External predictor escape hatch: hand the same input texts to an outside
// process (a fine-tuned encoder, say) and read its predictions back.
// Protocol: {dir} in the command expands to a directory holding train.jsonl,
// val.jsonl and test.jsonl ({"id","text","label"}); the process must write
// predictions.jsonl ({"id","label"}) into the same directory.

struct TextExample {
    std::string id;
    std::string text;
    std::string label;
};

class ExternalPredictor {
public:
    explicit ExternalPredictor(std::string command) : command_(std::move(command)) {
        if (command_.find("{dir}") == std::string::npos)
            throw Error(ErrorCategory::config, "external predictor command must contain {dir}");
    }

    std::map<std::string, std::string> run(const std::vector<TextExample>& train_set,
                                           const std::vector<TextExample>& val_set,
                                           const std::vector<TextExample>& test_set,
                                           const corpus::LabelScheme& scheme) const {
        static std::atomic<std::uint64_t> counter{0};
        auto dir = std::filesystem::temp_directory_path() /
                   ("fcheck-external-" + std::to_string(counter.fetch_add(1)) + "-" +
                    std::to_string(::getpid()));
        std::filesystem::create_directories(dir);

        auto write = [&](const char* name, const std::vector<TextExample>& examples) {
            std::string out;
            for (const auto& example : examples) {
                ordered_json obj;
                obj["id"] = example.id;
                obj["text"] = example.text;
                obj["label"] = example.label;
                out += obj.dump();
                out += '\n';
            }
            atomic_write_file(dir / name, out);
        };
        write("train.jsonl", train_set);
        write("val.jsonl", val_set);
        write("test.jsonl", test_set);

        std::string command = command_;
        for (std::size_t at = command.find("{dir}"); at != std::string::npos;
             at = command.find("{dir}", at))
            command.replace(at, 5, dir.string());
        int rc = std::system(command.c_str());
        if (rc != 0)
            throw Error(ErrorCategory::backend,
                        "external predictor exited with status " + std::to_string(rc));

        std::map<std::string, std::string> predictions;
        for (const auto& line : read_lines(dir / "predictions.jsonl")) {
            if (trim(line).empty()) continue;
            json obj = json::parse(line, nullptr, false);
            if (obj.is_discarded())
                throw Error(ErrorCategory::data, "bad external prediction line: " + line);
            std::string label = corpus::normalize_label(obj.at("label").get<std::string>());
            if (!scheme.contains(label)) throw corpus::UnknownLabel(label);
            predictions[obj.at("id").get<std::string>()] = label;
        }
        for (const auto& example : test_set)
            if (!predictions.count(example.id))
                throw Error(ErrorCategory::data,
                            "external predictor returned no label for " + example.id);
        return predictions;
    }

private:
    std::string command_;
};

}  // namespace fcheck::verdict
