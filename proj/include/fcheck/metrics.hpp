#pragma once

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fcheck/backend.hpp"
#include "fcheck/common.hpp"
#include "fcheck/corpus.hpp"
#include "fcheck/promptkit.hpp"

namespace fcheck::metrics {

struct LengthMismatch : Error {
    LengthMismatch(std::size_t a, std::size_t b)
        : Error(ErrorCategory::data, "aligned lists differ in length: " + std::to_string(a) +
                                         " vs " + std::to_string(b)) {}
};

struct UnequalRaterCounts : Error {
    explicit UnequalRaterCounts(std::size_t item)
        : Error(ErrorCategory::data,
                "item " + std::to_string(item) + " has a different rater count") {}
};

struct DegenerateAgreement : Error {
    explicit DegenerateAgreement(const std::string& why)
        : Error(ErrorCategory::data, "agreement statistic undefined: " + why) {}
};

struct NoPairableValues : Error {
    NoPairableValues()
        : Error(ErrorCategory::data, "fewer than two items carry two or more ratings") {}
};

struct EmptyInput : Error {
    explicit EmptyInput(const std::string& what)
        : Error(ErrorCategory::data, "empty input: " + what) {}
};

// ---------------------------------------------------------------------------
// Veracity metrics

struct PRF {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    bool operator==(const PRF&) const = default;
};

struct MetricsReport {
    std::map<std::string, PRF> per_label;
    std::map<std::string, std::size_t> support;  // gold count per label
    double mp = 0;
    double mr = 0;
    double mf1 = 0;
    std::size_t n_items = 0;

    ordered_json to_json() const {
        ordered_json out;
        out["n_items"] = n_items;
        out["mp"] = mp;
        out["mr"] = mr;
        out["mf1"] = mf1;
        out["per_label"] = ordered_json::object();
        for (const auto& [label, prf] : per_label) {
            out["per_label"][label] = {{"precision", prf.precision},
                                       {"recall", prf.recall},
                                       {"f1", prf.f1},
                                       {"support", support.at(label)}};
        }
        return out;
    }
};

// Macro averages run over every scheme label, so a label the gold set never
// uses still drags the mean down with its zero row.
inline MetricsReport macro_prf(const std::vector<std::string>& golds,
                               const std::vector<std::string>& preds,
                               const corpus::LabelScheme& scheme) {
    if (golds.size() != preds.size()) throw LengthMismatch(golds.size(), preds.size());
    if (golds.empty()) throw EmptyInput("macro_prf needs at least one pair");

    std::size_t n_labels = scheme.labels.size();
    std::vector<std::size_t> tp(n_labels, 0), fp(n_labels, 0), fn(n_labels, 0), gold_n(n_labels, 0);
    for (std::size_t i = 0; i < golds.size(); ++i) {
        std::size_t g = scheme.index_of(golds[i]);
        std::size_t p = scheme.index_of(preds[i]);
        ++gold_n[g];
        if (g == p) {
            ++tp[g];
        } else {
            ++fn[g];
            ++fp[p];
        }
    }

    MetricsReport report;
    report.n_items = golds.size();
    for (std::size_t c = 0; c < n_labels; ++c) {
        PRF prf;
        std::size_t p_den = tp[c] + fp[c];
        std::size_t r_den = tp[c] + fn[c];
        prf.precision = p_den == 0 ? 0.0 : static_cast<double>(tp[c]) / p_den;
        prf.recall = r_den == 0 ? 0.0 : static_cast<double>(tp[c]) / r_den;
        prf.f1 = (prf.precision + prf.recall) == 0.0
                     ? 0.0
                     : 2.0 * prf.precision * prf.recall / (prf.precision + prf.recall);
        report.per_label[scheme.labels[c]] = prf;
        report.support[scheme.labels[c]] = gold_n[c];
        report.mp += prf.precision;
        report.mr += prf.recall;
        report.mf1 += prf.f1;
    }
    report.mp /= static_cast<double>(n_labels);
    report.mr /= static_cast<double>(n_labels);
    report.mf1 /= static_cast<double>(n_labels);
    return report;
}

// ---------------------------------------------------------------------------
// Explanation overlap metrics. All of them tokenize the same way: lowercase,
// split on whitespace, no stemming.

namespace detail {

inline std::map<std::string, std::size_t> ngram_counts(const std::vector<std::string>& tokens,
                                                       std::size_t n) {
    std::map<std::string, std::size_t> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t j = 1; j < n; ++j) key += " " + tokens[i + j];
        ++counts[key];
    }
    return counts;
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            if (a[i - 1] == b[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

inline PRF prf_from_counts(double overlap, double cand_total, double ref_total) {
    PRF prf;
    if (cand_total == 0 || ref_total == 0) return prf;
    prf.precision = overlap / cand_total;
    prf.recall = overlap / ref_total;
    if (prf.precision + prf.recall > 0)
        prf.f1 = 2.0 * prf.precision * prf.recall / (prf.precision + prf.recall);
    return prf;
}

}  // namespace detail

inline PRF rouge_n(std::string_view candidate, std::string_view reference, std::size_t n) {
    if (n != 1 && n != 2) throw Error(ErrorCategory::internal, "rouge_n supports n in {1,2}");
    auto cand = detail::ngram_counts(tokenize(candidate), n);
    auto ref = detail::ngram_counts(tokenize(reference), n);
    double overlap = 0, cand_total = 0, ref_total = 0;
    for (const auto& [gram, count] : cand) {
        cand_total += static_cast<double>(count);
        auto it = ref.find(gram);
        if (it != ref.end()) overlap += static_cast<double>(std::min(count, it->second));
    }
    for (const auto& [gram, count] : ref) ref_total += static_cast<double>(count);
    return detail::prf_from_counts(overlap, cand_total, ref_total);
}

inline PRF rouge_l(std::string_view candidate, std::string_view reference) {
    auto cand = tokenize(candidate);
    auto ref = tokenize(reference);
    if (cand.empty() || ref.empty()) return {};
    double lcs = static_cast<double>(detail::lcs_length(cand, ref));
    return detail::prf_from_counts(lcs, static_cast<double>(cand.size()),
                                   static_cast<double>(ref.size()));
}

// Sentence BLEU, n=1..4, epsilon floor instead of a full smoothing scheme.
// With several references the brevity penalty uses the reference length
// closest to the candidate (ties resolved toward the shorter reference).
inline double bleu(std::string_view candidate, const std::vector<std::string>& references) {
    if (references.empty()) throw EmptyInput("bleu needs at least one reference");
    constexpr double kEpsilon = 1e-9;
    auto cand = tokenize(candidate);
    if (cand.empty()) return 0.0;

    std::vector<std::vector<std::string>> refs;
    refs.reserve(references.size());
    for (const auto& r : references) refs.push_back(tokenize(r));

    double log_sum = 0;
    for (std::size_t n = 1; n <= 4; ++n) {
        auto cand_counts = detail::ngram_counts(cand, n);
        std::map<std::string, std::size_t> max_ref;
        for (const auto& ref : refs)
            for (const auto& [gram, count] : detail::ngram_counts(ref, n))
                max_ref[gram] = std::max(max_ref[gram], count);

        double clipped = 0, total = 0;
        for (const auto& [gram, count] : cand_counts) {
            total += static_cast<double>(count);
            auto it = max_ref.find(gram);
            if (it != max_ref.end()) clipped += static_cast<double>(std::min(count, it->second));
        }
        double p = total > 0 ? clipped / total : 0.0;
        log_sum += std::log(std::max(p, kEpsilon));
    }

    std::size_t c = cand.size();
    std::size_t r = refs[0].size();
    for (const auto& ref : refs) {
        auto diff = [&](std::size_t len) {
            return len > c ? len - c : c - len;
        };
        if (diff(ref.size()) < diff(r) || (diff(ref.size()) == diff(r) && ref.size() < r))
            r = ref.size();
    }
    double bp = c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;
    return bp * std::exp(log_sum / 4.0);
}

// Sequence-level cosine stand-in for token-level embedding matching: both
// texts become one unit vector each and the score is their dot product.
inline double semantic_similarity(const std::string& candidate, const std::string& reference,
                                  backend::Embedder& embedder) {
    auto vectors = embedder.embed({candidate, reference});
    if (vectors.size() != 2)
        throw backend::DimensionMismatch("expected 2 vectors, got " +
                                         std::to_string(vectors.size()));
    double dot = 0;
    for (std::size_t i = 0; i < vectors[0].size(); ++i) dot += vectors[0][i] * vectors[1][i];
    return dot;
}

struct ExplanationScores {
    double r1 = 0;
    double r2 = 0;
    double rl = 0;
    double bleu = 0;
    double semantic = 0;

    ordered_json to_json() const {
        return ordered_json{
            {"r1", r1}, {"r2", r2}, {"rl", rl}, {"bleu", bleu}, {"semantic", semantic}};
    }
};

inline ExplanationScores score_explanation(const std::string& candidate,
                                           const std::string& reference,
                                           backend::Embedder& embedder) {
    ExplanationScores scores;
    scores.r1 = rouge_n(candidate, reference, 1).f1;
    scores.r2 = rouge_n(candidate, reference, 2).f1;
    scores.rl = rouge_l(candidate, reference).f1;
    scores.bleu = bleu(candidate, {reference});
    scores.semantic = semantic_similarity(candidate, reference, embedder);
    return scores;
}

// ---------------------------------------------------------------------------
// Agreement statistics

enum class AgreementLevel { nominal, ordinal };

inline std::string to_string(AgreementLevel level) {
    return level == AgreementLevel::nominal ? "nominal" : "ordinal";
}

// ratings: one row per item, one column per category, cell = rater count.
inline double fleiss_kappa(const std::vector<std::vector<std::size_t>>& ratings) {
    if (ratings.size() < 2) throw DegenerateAgreement("needs at least 2 items");
    std::size_t n_categories = ratings[0].size();
    std::size_t n_raters = 0;
    for (const auto& count : ratings[0]) n_raters += count;
    if (n_raters < 2) throw DegenerateAgreement("needs at least 2 raters");

    double p_bar = 0;
    std::vector<double> marginal(n_categories, 0);
    for (std::size_t i = 0; i < ratings.size(); ++i) {
        if (ratings[i].size() != n_categories) throw UnequalRaterCounts(i);
        std::size_t row_sum = 0;
        double agree = 0;
        for (std::size_t c = 0; c < n_categories; ++c) {
            std::size_t count = ratings[i][c];
            row_sum += count;
            agree += static_cast<double>(count) * (static_cast<double>(count) - 1.0);
            marginal[c] += static_cast<double>(count);
        }
        if (row_sum != n_raters) throw UnequalRaterCounts(i);
        p_bar += agree / (static_cast<double>(n_raters) * (static_cast<double>(n_raters) - 1.0));
    }
    p_bar /= static_cast<double>(ratings.size());

    double total = static_cast<double>(ratings.size()) * static_cast<double>(n_raters);
    double pe_bar = 0;
    for (double m : marginal) pe_bar += (m / total) * (m / total);
    if (pe_bar >= 1.0) throw DegenerateAgreement("expected agreement is 1");
    return (p_bar - pe_bar) / (1.0 - pe_bar);
}

// ratings: one row per item, one optional value per rater slot. Values are
// treated as categories; the ordinal distance follows the cumulative-marginal
// definition over the coincidence matrix.
inline double kripp_alpha(const std::vector<std::vector<std::optional<double>>>& ratings,
                          AgreementLevel level) {
    std::vector<double> values;
    std::size_t pairable_items = 0;
    for (const auto& item : ratings) {
        std::size_t m = 0;
        for (const auto& v : item)
            if (v) ++m;
        if (m >= 2) {
            ++pairable_items;
            for (const auto& v : item)
                if (v) values.push_back(*v);
        }
    }
    if (pairable_items < 2) throw NoPairableValues();

    std::vector<double> categories = values;
    std::sort(categories.begin(), categories.end());
    categories.erase(std::unique(categories.begin(), categories.end()), categories.end());
    auto category_of = [&](double v) {
        return static_cast<std::size_t>(
            std::lower_bound(categories.begin(), categories.end(), v) - categories.begin());
    };
    std::size_t k = categories.size();

    std::vector<std::vector<double>> coincidence(k, std::vector<double>(k, 0.0));
    double n = 0;
    for (const auto& item : ratings) {
        std::vector<std::size_t> cats;
        for (const auto& v : item)
            if (v) cats.push_back(category_of(*v));
        if (cats.size() < 2) continue;
        double m = static_cast<double>(cats.size());
        n += m;
        for (std::size_t a = 0; a < cats.size(); ++a)
            for (std::size_t b = 0; b < cats.size(); ++b)
                if (a != b) coincidence[cats[a]][cats[b]] += 1.0 / (m - 1.0);
    }

    std::vector<double> marginal(k, 0.0);
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t g = 0; g < k; ++g) marginal[c] += coincidence[c][g];

    auto delta_sq = [&](std::size_t c, std::size_t g) {
        if (c == g) return 0.0;
        if (level == AgreementLevel::nominal) return 1.0;
        std::size_t lo = std::min(c, g), hi = std::max(c, g);
        double between = 0;
        for (std::size_t x = lo; x <= hi; ++x) between += marginal[x];
        double d = between - (marginal[c] + marginal[g]) / 2.0;
        return d * d;
    };

    double observed = 0, expected = 0;
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t g = 0; g < k; ++g) {
            double d2 = delta_sq(c, g);
            observed += coincidence[c][g] * d2;
            expected += marginal[c] * marginal[g] * d2;
        }
    }
    double d_o = observed / n;
    double d_e = expected / (n * (n - 1.0));
    if (d_e == 0.0) throw DegenerateAgreement("no disagreement is possible in this table");
    return 1.0 - d_o / d_e;
}

struct AgreementReport {
    double fleiss = 0;
    double kripp = 0;
    std::size_t n_items = 0;
    std::size_t n_raters = 0;
    AgreementLevel level = AgreementLevel::ordinal;

    ordered_json to_json() const {
        return ordered_json{{"fleiss_kappa", fleiss},
                            {"kripp_alpha", kripp},
                            {"n_items", n_items},
                            {"n_raters", n_raters},
                            {"level", to_string(level)}};
    }
};

// ratings: item -> rater -> category index (0-based, all raters present).
inline AgreementReport agreement_report(const std::vector<std::vector<std::size_t>>& ratings,
                                        std::size_t n_categories, AgreementLevel level) {
    if (ratings.empty()) throw EmptyInput("agreement needs items");
    AgreementReport report;
    report.n_items = ratings.size();
    report.n_raters = ratings[0].size();
    report.level = level;

    std::vector<std::vector<std::size_t>> table(ratings.size(),
                                                std::vector<std::size_t>(n_categories, 0));
    std::vector<std::vector<std::optional<double>>> values(ratings.size());
    for (std::size_t i = 0; i < ratings.size(); ++i) {
        if (ratings[i].size() != report.n_raters) throw UnequalRaterCounts(i);
        for (std::size_t r = 0; r < ratings[i].size(); ++r) {
            if (ratings[i][r] >= n_categories)
                throw Error(ErrorCategory::data, "category index out of range");
            ++table[i][ratings[i][r]];
            values[i].push_back(static_cast<double>(ratings[i][r]));
        }
    }
    report.fleiss = fleiss_kappa(table);
    report.kripp = kripp_alpha(values, level);
    return report;
}

// ---------------------------------------------------------------------------
// Segmentation by evidence count

struct SegmentReport {
    corpus::DatasetKind kind = corpus::DatasetKind::liar_raw;
    // bucket id -> report, in bucket_order; buckets with no items are listed
    // separately instead of carrying empty reports.
    std::vector<std::pair<std::string, MetricsReport>> buckets;
    std::vector<std::string> empty_buckets;

    ordered_json to_json() const {
        ordered_json out;
        out["dataset_kind"] = corpus::to_string(kind);
        out["buckets"] = ordered_json::array();
        for (const auto& [id, report] : buckets) {
            ordered_json entry;
            entry["bucket"] = id;
            entry["report"] = report.to_json();
            out["buckets"].push_back(entry);
        }
        out["empty_buckets"] = empty_buckets;
        return out;
    }
};

inline SegmentReport segment_report(const std::vector<std::string>& preds,
                                    const std::vector<std::string>& golds,
                                    const std::vector<std::size_t>& evidence_counts,
                                    corpus::DatasetKind kind, const corpus::LabelScheme& scheme) {
    if (preds.size() != golds.size()) throw LengthMismatch(preds.size(), golds.size());
    if (preds.size() != evidence_counts.size())
        throw LengthMismatch(preds.size(), evidence_counts.size());

    std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>> grouped;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        auto& group = grouped[corpus::evidence_bucket(evidence_counts[i], kind)];
        group.first.push_back(golds[i]);
        group.second.push_back(preds[i]);
    }

    SegmentReport report;
    report.kind = kind;
    for (const auto& bucket : corpus::bucket_order(kind)) {
        auto it = grouped.find(bucket);
        if (it == grouped.end()) {
            report.empty_buckets.push_back(bucket);
            continue;
        }
        report.buckets.emplace_back(bucket, macro_prf(it->second.first, it->second.second, scheme));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Subjective aggregation

// Means per dimension, rounded to two decimals as reported.
inline std::map<std::string, double> subjective_aggregate(
    const std::vector<promptkit::SubjectiveScores>& scores) {
    if (scores.empty()) throw EmptyInput("subjective_aggregate needs scores");
    std::map<std::string, double> means;
    for (const auto& name : promptkit::SubjectiveScores::dimension_names()) {
        double sum = 0;
        for (const auto& s : scores) sum += s.by_name(name);
        means[name] = std::round(sum / static_cast<double>(scores.size()) * 100.0) / 100.0;
    }
    return means;
}

// ---------------------------------------------------------------------------
// Plain-text tables

inline std::string metrics_table(
    const std::vector<std::pair<std::string, const MetricsReport*>>& rows) {
    std::size_t name_width = 6;
    for (const auto& [name, report] : rows) name_width = std::max(name_width, name.size());

    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(name_width) + 2) << "system"
        << std::right << std::setw(8) << "N" << std::setw(10) << "MP" << std::setw(10) << "MR"
        << std::setw(10) << "MF1" << '\n';
    out << std::string(name_width + 2 + 38, '-') << '\n';
    out << std::fixed << std::setprecision(4);
    for (const auto& [name, report] : rows) {
        out << std::left << std::setw(static_cast<int>(name_width) + 2) << name << std::right
            << std::setw(8) << report->n_items << std::setw(10) << report->mp << std::setw(10)
            << report->mr << std::setw(10) << report->mf1 << '\n';
    }
    return out.str();
}

}  // namespace fcheck::metrics
