#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "painnet/error.hpp"
#include "painnet/features.hpp"
#include "painnet/model.hpp"

namespace painnet {

struct Prediction {
    std::string video_id;
    std::vector<int> per_set_labels;           // one argmax label per sample set
    int final_label = 0;                       // median of the per-set labels
    std::vector<Eigen::VectorXd> per_set_probs; // n_sets x 11
};

struct IccResult {
    double value = 0.0;
    bool defined = false;
};

// ICC(3,1): two-way mixed model, consistency, single rater, with the
// prediction and ground-truth series as the k=2 raters.
//   ICC = (BMS - EMS) / (BMS + (k-1) EMS)
inline IccResult icc(const std::vector<int>& preds, const std::vector<int>& truths) {
    if (preds.size() != truths.size()) throw Error::data("icc: length mismatch");
    const auto n = static_cast<double>(preds.size());
    if (preds.size() < 2) throw Error::data("icc needs at least 2 pairs");

    double grand = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) grand += preds[i] + truths[i];
    grand /= (2.0 * n);

    double rater_pred = 0.0, rater_truth = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        rater_pred += preds[i];
        rater_truth += truths[i];
    }
    rater_pred /= n;
    rater_truth /= n;

    double ss_between = 0.0, ss_rater = 0.0, ss_total = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double target_mean = (preds[i] + truths[i]) / 2.0;
        ss_between += 2.0 * (target_mean - grand) * (target_mean - grand);
        ss_total += (preds[i] - grand) * (preds[i] - grand);
        ss_total += (truths[i] - grand) * (truths[i] - grand);
    }
    ss_rater = n * ((rater_pred - grand) * (rater_pred - grand) +
                    (rater_truth - grand) * (rater_truth - grand));
    const double ss_error = ss_total - ss_between - ss_rater;

    const double bms = ss_between / (n - 1.0);
    const double ems = ss_error / (n - 1.0); // (n-1)(k-1) with k=2

    IccResult out;
    const double denom = bms + ems;
    if (std::abs(denom) < 1e-12) return out; // undefined, reported as such
    out.value = (bms - ems) / denom;
    out.defined = true;
    return out;
}

inline double mae(const std::vector<int>& preds, const std::vector<int>& truths) {
    if (preds.size() != truths.size() || preds.empty()) throw Error::data("mae: bad input");
    double acc = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) acc += std::abs(preds[i] - truths[i]);
    return acc / static_cast<double>(preds.size());
}

inline double rmse(const std::vector<int>& preds, const std::vector<int>& truths) {
    if (preds.size() != truths.size() || preds.empty()) throw Error::data("rmse: bad input");
    double acc = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double e = preds[i] - truths[i];
        acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(preds.size()));
}

struct MaePerIntensity {
    std::vector<double> per_level = std::vector<double>(kNumClasses, 0.0);
    std::vector<bool> defined = std::vector<bool>(kNumClasses, false);
    double macro = 0.0; // average over populated levels
};

inline MaePerIntensity mae_per_intensity(const std::vector<int>& preds,
                                         const std::vector<int>& truths) {
    if (preds.size() != truths.size() || preds.empty()) {
        throw Error::data("mae_per_intensity: bad input");
    }
    MaePerIntensity out;
    std::vector<double> sums(kNumClasses, 0.0);
    std::vector<int> counts(kNumClasses, 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int level = truths[i];
        sums[static_cast<std::size_t>(level)] += std::abs(preds[i] - truths[i]);
        counts[static_cast<std::size_t>(level)] += 1;
    }
    double macro_sum = 0.0;
    int macro_count = 0;
    for (int level = 0; level < kNumClasses; ++level) {
        if (counts[static_cast<std::size_t>(level)] > 0) {
            out.per_level[static_cast<std::size_t>(level)] =
                sums[static_cast<std::size_t>(level)] / counts[static_cast<std::size_t>(level)];
            out.defined[static_cast<std::size_t>(level)] = true;
            macro_sum += out.per_level[static_cast<std::size_t>(level)];
            macro_count += 1;
        }
    }
    out.macro = macro_count > 0 ? macro_sum / macro_count : 0.0;
    return out;
}

// Eval-mode embeddings of the sample-set videos, reusable across queries.
struct SampleSetEmbeddings {
    std::vector<std::vector<Eigen::VectorXd>> sets; // [set][class]
};

inline SampleSetEmbeddings embed_sample_sets(Model& model, const FeatureStore& store,
                                             const std::vector<std::vector<std::string>>& sets) {
    SampleSetEmbeddings out;
    for (const auto& set : sets) {
        std::vector<Eigen::VectorXd> vecs;
        vecs.reserve(set.size());
        for (const auto& id : set) {
            EmbedTranscript t;
            vecs.push_back(model.embed_video(store.centered(id), Mode::kEval, nullptr, t));
        }
        out.sets.push_back(std::move(vecs));
    }
    return out;
}

// Inference protocol: per sample set take the argmax class (ties to the
// lower label), then the median across the sets' labels.
inline Prediction predict(Model& model, const FrameMatrix& query,
                          const SampleSetEmbeddings& sample_sets, const std::string& video_id) {
    if (sample_sets.sets.empty()) throw Error::data("predict needs at least one sample set");
    if (sample_sets.sets.size() % 2 == 0) throw Error::data("sample set count must be odd");

    EmbedTranscript t;
    const Eigen::VectorXd query_vec = model.embed_video(query, Mode::kEval, nullptr, t);

    Prediction pred;
    pred.video_id = video_id;
    for (const auto& set : sample_sets.sets) {
        std::vector<CompareTranscript> cts;
        std::vector<MlpTranscript> mts;
        const EpisodeProbs probs = model.episode_probs(query_vec, set, cts, mts);
        int best = 0;
        for (int c = 1; c < kNumClasses; ++c) {
            if (probs.p(c) > probs.p(best)) best = c;
        }
        pred.per_set_labels.push_back(best);
        pred.per_set_probs.push_back(probs.p);
    }
    std::vector<int> sorted = pred.per_set_labels;
    std::sort(sorted.begin(), sorted.end());
    pred.final_label = sorted[sorted.size() / 2];
    return pred;
}

struct EvalMetrics {
    IccResult icc;
    double mae = 0.0;
    double rmse = 0.0;
    MaePerIntensity per_intensity;
    std::vector<Prediction> predictions;
    std::vector<int> truths;
};

// Runs the full protocol for a list of query videos against fixed sample
// sets and computes the metric battery.
inline EvalMetrics evaluate_queries(Model& model, const FeatureStore& store,
                                    const std::vector<std::string>& query_ids,
                                    const SampleSetEmbeddings& sample_sets) {
    EvalMetrics out;
    std::vector<int> preds;
    for (const auto& id : query_ids) {
        Prediction p = predict(model, store.centered(id), sample_sets, id);
        preds.push_back(p.final_label);
        out.truths.push_back(store.dataset().by_id(id).vas);
        out.predictions.push_back(std::move(p));
    }
    out.icc = icc(preds, out.truths);
    out.mae = mae(preds, out.truths);
    out.rmse = rmse(preds, out.truths);
    out.per_intensity = mae_per_intensity(preds, out.truths);
    return out;
}

} // namespace painnet
