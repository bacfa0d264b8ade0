#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "painnet/episodic.hpp"
#include "painnet/eval.hpp"

namespace painnet {

struct FoldReport {
    int fold = 0;
    EvalMetrics test;
    double best_val_mae = 0.0;
    double best_val_icc = 0.0;
    int best_episode = 0;
};

// Per-fold metrics plus their unweighted cross-fold means.
struct MetricReport {
    std::vector<FoldReport> folds;
    double mean_icc = 0.0;
    double mean_mae = 0.0;
    double mean_rmse = 0.0;
    // Cross-fold average of per-level MAE, over folds where a level appears.
    std::vector<double> mean_mae_per_intensity = std::vector<double>(kNumClasses, 0.0);
    std::vector<bool> intensity_defined = std::vector<bool>(kNumClasses, false);
    double mean_macro_mae = 0.0;

    void finalize() {
        if (folds.empty()) return;
        double icc_sum = 0.0, mae_sum = 0.0, rmse_sum = 0.0, macro_sum = 0.0;
        std::vector<double> level_sums(kNumClasses, 0.0);
        std::vector<int> level_counts(kNumClasses, 0);
        for (const auto& f : folds) {
            icc_sum += f.test.icc.defined ? f.test.icc.value : 0.0;
            mae_sum += f.test.mae;
            rmse_sum += f.test.rmse;
            macro_sum += f.test.per_intensity.macro;
            for (int level = 0; level < kNumClasses; ++level) {
                if (f.test.per_intensity.defined[static_cast<std::size_t>(level)]) {
                    level_sums[static_cast<std::size_t>(level)] +=
                        f.test.per_intensity.per_level[static_cast<std::size_t>(level)];
                    level_counts[static_cast<std::size_t>(level)] += 1;
                }
            }
        }
        const auto n = static_cast<double>(folds.size());
        mean_icc = icc_sum / n;
        mean_mae = mae_sum / n;
        mean_rmse = rmse_sum / n;
        mean_macro_mae = macro_sum / n;
        for (int level = 0; level < kNumClasses; ++level) {
            if (level_counts[static_cast<std::size_t>(level)] > 0) {
                mean_mae_per_intensity[static_cast<std::size_t>(level)] =
                    level_sums[static_cast<std::size_t>(level)] /
                    level_counts[static_cast<std::size_t>(level)];
                intensity_defined[static_cast<std::size_t>(level)] = true;
            }
        }
    }
};

struct CrossValResult {
    MetricReport report;
    std::vector<TrainResult> trainings; // one per fold
    FoldSplit split;
};

// Subject-wise k-fold protocol: per trial train on 4 folds (minus the
// validation draw), test the held-out fold's queries against sample sets
// from that trial's train pool, and average the fold metrics.
inline CrossValResult cross_validate(const RunConfig& config, const FeatureStore& store) {
    const Dataset& ds = store.dataset();
    const int k = static_cast<int>(config.get_int("folds.k"));
    const int val_count = static_cast<int>(config.get_int("folds.val_count"));

    Rng fold_rng(derive_seed(config.seed(), "folds"));
    CrossValResult result;
    result.split = make_folds(ds, k, val_count, fold_rng);

    const std::string snapshot = config.resolved_text();
    for (int f = 0; f < k; ++f) {
        const TrialSplit& trial = result.split.trials[static_cast<std::size_t>(f)];

        TrainConfig tc = TrainConfig::from_config(config);
        tc.seed = derive_seed(config.seed(), "trial" + std::to_string(f));

        Model model(ModelSpec::from_config(config));
        TrainResult training = run_training(model, store, trial, tc, snapshot);

        // Test with the retained best checkpoint.
        OptimizerState opt = OptimizerState::for_params(model.params());
        training.best.restore(model.params(), opt);
        Rng test_rng(derive_seed(tc.seed, "test_sets"));
        const auto test_sets = sample_eval_sets(
            ds, trial.train, static_cast<int>(config.get_int("eval.sample_sets")), test_rng);
        const auto test_embeds = embed_sample_sets(model, store, test_sets);

        FoldReport fold;
        fold.fold = f;
        fold.test = evaluate_queries(model, store, trial.test, test_embeds);
        fold.best_val_mae = training.best_val_mae;
        fold.best_val_icc = training.best_val_icc;
        fold.best_episode = training.best_episode;
        result.report.folds.push_back(std::move(fold));
        result.trainings.push_back(std::move(training));
    }
    result.report.finalize();
    return result;
}

namespace detail {

inline std::string metric_str(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

} // namespace detail

// One record per fold plus a summary line; ICC variant echoed up front.
inline std::string report_text(const MetricReport& report, const std::string& icc_variant) {
    std::ostringstream out;
    out << "painnet crossval report\n";
    out << "icc_variant=" << icc_variant << "\n";
    for (const auto& f : report.folds) {
        out << "fold=" << f.fold << " n=" << f.test.truths.size() << " icc=";
        if (f.test.icc.defined) {
            out << detail::metric_str(f.test.icc.value);
        } else {
            out << "undefined";
        }
        out << " mae=" << detail::metric_str(f.test.mae)
            << " rmse=" << detail::metric_str(f.test.rmse)
            << " val_mae=" << detail::metric_str(f.best_val_mae)
            << " val_icc=" << detail::metric_str(f.best_val_icc)
            << " best_episode=" << f.best_episode << "\n";
    }
    out << "summary icc=" << detail::metric_str(report.mean_icc)
        << " mae=" << detail::metric_str(report.mean_mae)
        << " rmse=" << detail::metric_str(report.mean_rmse)
        << " macro_mae_per_intensity=" << detail::metric_str(report.mean_macro_mae) << "\n";
    return out.str();
}

// Plot-ready `intensity,mae` table; undefined levels emit `nan`.
inline std::string intensity_table(const MetricReport& report) {
    std::ostringstream out;
    out << "intensity,mae\n";
    for (int level = 0; level < kNumClasses; ++level) {
        out << level << ",";
        if (report.intensity_defined[static_cast<std::size_t>(level)]) {
            out << detail::metric_str(report.mean_mae_per_intensity[static_cast<std::size_t>(level)]);
        } else {
            out << "nan";
        }
        out << "\n";
    }
    return out.str();
}

} // namespace painnet
