#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "painnet/checkpoint.hpp"
#include "painnet/config.hpp"
#include "painnet/episodic.hpp"
#include "painnet/eval.hpp"
#include "painnet/experiment.hpp"
#include "painnet/gradcheck.hpp"
#include "painnet/synth.hpp"

namespace painnet {
namespace cli {

struct ParsedArgs {
    std::string command;
    RunConfig config;
    std::string out_dir;
};

inline ParsedArgs parse_args(const std::vector<std::string>& args) {
    if (args.empty()) throw Error::config("missing command (synth|train|crossval|predict|gradcheck)");
    ParsedArgs parsed;
    parsed.command = args[0];
    const std::vector<std::string> commands = {"synth", "train", "crossval", "predict", "gradcheck"};
    if (std::find(commands.begin(), commands.end(), parsed.command) == commands.end()) {
        throw Error::config("unknown command '" + parsed.command + "'");
    }

    // Config file first, then flag overrides in order.
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw Error::config("--config needs a path");
            parsed.config.load_file(args[i + 1]);
            break;
        }
    }

    for (std::size_t i = 1; i < args.size(); ++i) {
        const std::string& arg = args[i];
        if (arg.rfind("--", 0) != 0) throw Error::config("unexpected argument '" + arg + "'");
        const std::string key = arg.substr(2);
        if (key == "config") {
            ++i; // already applied
            continue;
        }
        if (key == "out") {
            if (i + 1 >= args.size()) throw Error::config("--out needs a path");
            parsed.out_dir = args[++i];
            continue;
        }
        const cfg::KeySpec* spec = RunConfig::find_spec(key);
        if (spec == nullptr) throw Error::config("unknown flag '--" + key + "'");
        if (spec->type == cfg::KeyType::kBool &&
            (i + 1 >= args.size() || args[i + 1].rfind("--", 0) == 0)) {
            parsed.config.set(spec->name, "true"); // bare boolean flag
            continue;
        }
        if (i + 1 >= args.size()) throw Error::config("flag '--" + key + "' needs a value");
        parsed.config.set(spec->name, args[++i]);
    }

    // Validate derived settings before any work starts.
    parsed.config.stat_ops();
    parsed.config.comparison();
    if (parsed.config.au_columns().empty()) throw Error::config("data.au_columns must not be empty");
    if (parsed.config.get_int("eval.sample_sets") % 2 == 0) {
        throw Error::config("eval.sample_sets must be odd (median aggregation)");
    }
    return parsed;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error::io("cannot write '" + path + "'");
    out << content;
    if (!out) throw Error::io("failed writing '" + path + "'");
}

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error::io("cannot create directory '" + dir + "': " + ec.message());
}

inline std::string require_out(const ParsedArgs& parsed) {
    if (parsed.out_dir.empty()) throw Error::config("--out <dir> is required for this command");
    return parsed.out_dir;
}

inline FeatureStore open_store(const RunConfig& config) {
    const std::string manifest = config.get("data.manifest");
    if (manifest.empty()) throw Error::config("data.manifest (or --data) is required");
    return FeatureStore(load_manifest(manifest, config.au_columns()));
}

inline int cmd_synth(const ParsedArgs& parsed, std::ostream& out) {
    const std::string dir = require_out(parsed);
    ensure_dir(dir);
    const SynthSpec spec = SynthSpec::from_config(parsed.config);
    Rng rng(spec.seed);
    const Dataset ds = synth_generate(spec, dir, rng);
    write_file(dir + "/config.resolved", parsed.config.resolved_text());
    out << "wrote " << ds.records.size() << " videos to " << dir << "\n";
    return 0;
}

inline int cmd_train(const ParsedArgs& parsed, std::ostream& out) {
    const std::string dir = require_out(parsed);
    ensure_dir(dir);
    ensure_dir(dir + "/ckpt");
    const RunConfig& config = parsed.config;
    const FeatureStore store = open_store(config);

    Rng fold_rng(derive_seed(config.seed(), "folds"));
    const FoldSplit split =
        make_folds(store.dataset(), static_cast<int>(config.get_int("folds.k")),
                   static_cast<int>(config.get_int("folds.val_count")), fold_rng);
    const int trial_id = static_cast<int>(config.get_int("train.trial"));
    if (trial_id >= static_cast<int>(split.trials.size())) {
        throw Error::config("train.trial " + std::to_string(trial_id) + " out of range (k=" +
                            std::to_string(split.trials.size()) + ")");
    }
    const TrialSplit& trial = split.trials[static_cast<std::size_t>(trial_id)];

    TrainConfig tc = TrainConfig::from_config(config);
    tc.seed = derive_seed(config.seed(), "trial" + std::to_string(trial_id));
    Model model(ModelSpec::from_config(config));
    const TrainResult result = run_training(model, store, trial, tc, config.resolved_text());

    write_file(dir + "/config.resolved", config.resolved_text());
    write_file(dir + "/train.log", result.log);
    save_checkpoint(dir + "/ckpt/best.ckpt", result.best);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "trial %d: %d optimizer steps, best episode %d, val_mae %.4f, val_icc %.4f\n",
                  trial_id, result.optimizer_steps, result.best_episode, result.best_val_mae,
                  result.best_val_icc);
    out << buf;
    return 0;
}

inline int cmd_crossval(const ParsedArgs& parsed, std::ostream& out) {
    const std::string dir = require_out(parsed);
    ensure_dir(dir);
    ensure_dir(dir + "/ckpt");
    ensure_dir(dir + "/report");
    const RunConfig& config = parsed.config;
    const FeatureStore store = open_store(config);

    const CrossValResult result = cross_validate(config, store);

    write_file(dir + "/config.resolved", config.resolved_text());
    std::string combined_log;
    for (std::size_t f = 0; f < result.trainings.size(); ++f) {
        combined_log += "# fold " + std::to_string(f) + "\n";
        combined_log += result.trainings[f].log;
        save_checkpoint(dir + "/ckpt/fold_" + std::to_string(f) + ".ckpt",
                        result.trainings[f].best);
    }
    write_file(dir + "/train.log", combined_log);
    const std::string summary = report_text(result.report, config.get("eval.icc_variant"));
    write_file(dir + "/report/summary.txt", summary);
    write_file(dir + "/report/mae_per_intensity.csv", intensity_table(result.report));
    out << summary;
    return 0;
}

inline int cmd_predict(const ParsedArgs& parsed, std::ostream& out) {
    const RunConfig& config = parsed.config;
    const std::string ckpt_path = config.get("predict.ckpt");
    const std::string video_path = config.get("predict.video");
    if (ckpt_path.empty()) throw Error::config("predict needs --ckpt <checkpoint>");
    if (video_path.empty()) throw Error::config("predict needs --video <feature csv>");
    const FeatureStore store = open_store(config);

    Model model(ModelSpec::from_config(config));
    const CheckpointData ckpt = load_checkpoint(ckpt_path);
    OptimizerState opt = OptimizerState::for_params(model.params());
    ckpt.restore(model.params(), opt);

    const FrameMatrix query = center(load_video_features(video_path, config.au_columns()));

    Rng set_rng(derive_seed(config.seed(), "predict_sets"));
    std::vector<std::string> pool;
    for (const auto& r : store.dataset().records) pool.push_back(r.video_id);
    const auto sets = sample_eval_sets(store.dataset(), pool,
                                       static_cast<int>(config.get_int("eval.sample_sets")), set_rng);
    const auto embeds = embed_sample_sets(model, store, sets);
    const Prediction pred = predict(model, query, embeds, video_path);

    if (config.get_bool("predict.emit_probs")) {
        out << "set";
        for (int c = 0; c < kNumClasses; ++c) out << ",p" << c;
        out << ",label\n";
        for (std::size_t s = 0; s < pred.per_set_probs.size(); ++s) {
            out << s;
            char cell[32];
            for (int c = 0; c < kNumClasses; ++c) {
                std::snprintf(cell, sizeof(cell), "%.6f", pred.per_set_probs[s](c));
                out << "," << cell;
            }
            out << "," << pred.per_set_labels[s] << "\n";
        }
    }
    out << pred.final_label << "\n";

    if (!parsed.out_dir.empty()) {
        ensure_dir(parsed.out_dir);
        write_file(parsed.out_dir + "/config.resolved", config.resolved_text());
        write_file(parsed.out_dir + "/prediction.txt", std::to_string(pred.final_label) + "\n");
    }
    return 0;
}

inline int cmd_gradcheck(const ParsedArgs& parsed, std::ostream& out) {
    const int seeds = static_cast<int>(parsed.config.get_int("gradcheck.seeds"));
    const auto reports = gradcheck::run_all(seeds, 1e-5, 1e-4, parsed.config.seed());
    bool all_pass = true;
    std::string text;
    for (const auto& r : reports) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s %s max_rel_err=%.3e\n", r.pass ? "PASS" : "FAIL",
                      r.name.c_str(), r.max_rel_err());
        text += buf;
        all_pass = all_pass && r.pass;
    }
    out << text;
    out << (all_pass ? "gradcheck: all layers pass\n" : "gradcheck: FAILURES above\n");
    if (!parsed.out_dir.empty()) {
        ensure_dir(parsed.out_dir);
        write_file(parsed.out_dir + "/config.resolved", parsed.config.resolved_text());
        write_file(parsed.out_dir + "/gradcheck.txt", text);
    }
    return all_pass ? 0 : 1;
}

// Entry point shared by the binary and the integration tests.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        const ParsedArgs parsed = parse_args(args);
        if (parsed.command == "synth") return cmd_synth(parsed, out);
        if (parsed.command == "train") return cmd_train(parsed, out);
        if (parsed.command == "crossval") return cmd_crossval(parsed, out);
        if (parsed.command == "predict") return cmd_predict(parsed, out);
        return cmd_gradcheck(parsed, out);
    } catch (const Error& e) {
        err << "error: " << e.category() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: internal: " << e.what() << "\n";
        return 1;
    }
}

} // namespace cli
} // namespace painnet
