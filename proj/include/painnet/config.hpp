#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "painnet/error.hpp"
#include "painnet/features.hpp"
#include "painnet/relation.hpp"
#include "painnet/stats_layer.hpp"

namespace painnet {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace cfg {

enum class KeyType { kInt, kDouble, kString, kEnum, kBool };

struct KeySpec {
    std::string name;
    KeyType type = KeyType::kString;
    std::string default_value;
    std::vector<std::string> enum_values; // for kEnum
    double min = 0.0, max = 0.0;          // for kInt/kDouble
    bool has_range = false;
    std::string alias;                    // optional --alias flag
};

// All known keys, their defaults and ranges. Registration order fixes the
// layout of config.resolved.
inline const std::vector<KeySpec>& key_specs() {
    static const std::vector<KeySpec> specs = [] {
        std::vector<KeySpec> s;
        auto add_int = [&](std::string n, long long def, double lo, double hi,
                           std::string alias = "") {
            s.push_back({std::move(n), KeyType::kInt, std::to_string(def), {}, lo, hi, true,
                         std::move(alias)});
        };
        auto add_double = [&](std::string n, double def, double lo, double hi,
                              std::string alias = "") {
            s.push_back({std::move(n), KeyType::kDouble, format_double(def), {}, lo, hi, true,
                         std::move(alias)});
        };
        auto add_enum = [&](std::string n, std::string def, std::vector<std::string> vals,
                            std::string alias = "") {
            s.push_back({std::move(n), KeyType::kEnum, std::move(def), std::move(vals), 0, 0,
                         false, std::move(alias)});
        };
        auto add_string = [&](std::string n, std::string def, std::string alias = "") {
            s.push_back({std::move(n), KeyType::kString, std::move(def), {}, 0, 0, false,
                         std::move(alias)});
        };
        auto add_bool = [&](std::string n, bool def, std::string alias = "") {
            s.push_back({std::move(n), KeyType::kBool, def ? "true" : "false", {}, 0, 0, false,
                         std::move(alias)});
        };

        add_int("seed", 7, 0, 9e18);
        add_string("data.manifest", "", "data");
        add_string("data.au_columns", "", "au-columns"); // empty = canonical 20
        add_int("segment.length", 16, 1, 1e9);
        add_int("gru.hidden", 16, 1, 4096);
        add_string("stats.operators", "mean,std,lse,median", "operators");
        add_enum("embedding.summarizer", "stats", {"stats", "stacked_gru"});
        add_double("dropout.p", 0.5, 0.0, 0.999);
        add_double("bn.momentum", 0.1, 0.0, 1.0);
        add_double("bn.eps", 1e-5, 1e-300, 1.0);
        add_enum("relation.comparison", "euccos", {"euccos", "subt", "mult", "nn", "submultnn"},
                 "comparison");
        add_int("train.episodes", 1500, 1, 1e9);
        add_int("train.accumulate_every", 5, 1, 1e9);
        add_double("train.lr", 0.005, 0.0, 1e6);
        add_double("train.clip", 1.0, 1e-12, 1e12);
        add_int("train.eval_every", 50, 1, 1e9);
        add_enum("train.loss", "wbce", {"wbce", "bce"}, "loss");
        add_enum("training.mode", "episode", {"episode", "batch"}, "mode");
        add_int("train.batch_size", 16, 1, 1e9);
        add_double("train.noise_sigma", 0.05, 0.0, 10.0);
        add_int("train.trial", 0, 0, 1e9, "trial");
        add_int("eval.sample_sets", 5, 1, 1e9);
        add_enum("eval.icc_variant", "icc_3_1", {"icc_3_1"});
        add_int("folds.k", 5, 1, 1e9);
        add_int("folds.val_count", 10, 1, 1e9);
        add_int("synth.subjects", 25, 1, 1e9);
        add_int("synth.videos_per_class", 12, 1, 1e9, "videos-per-class");
        add_int("synth.min_frames", 48, 1, 1e9);
        add_int("synth.max_frames", 96, 1, 1e9);
        add_double("synth.signal_strength", 1.0, 0.0, 100.0, "signal-strength");
        add_int("synth.seed", -1, -1, 9e18); // -1 = fall back to global seed
        add_int("gradcheck.seeds", 10, 1, 1e6, "seeds");
        add_bool("predict.emit_probs", false, "emit-probs");
        add_string("predict.ckpt", "", "ckpt");
        add_string("predict.video", "", "video");
        return s;
    }();
    return specs;
}

} // namespace cfg

// Flat key=value configuration: defaults, overridden by an optional config
// file, overridden by command-line flags. Every value is validated before
// any work starts; the fully-resolved config is echoed into output dirs.
class RunConfig {
public:
    RunConfig() {
        for (const auto& spec : cfg::key_specs()) values_[spec.name] = spec.default_value;
    }

    // Lines `key = value`; '#' starts a comment.
    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error::io("cannot open config file '" + path + "'");
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            auto trim = [](std::string s) {
                const char* ws = " \t\r";
                auto b = s.find_first_not_of(ws);
                if (b == std::string::npos) return std::string();
                auto e = s.find_last_not_of(ws);
                return s.substr(b, e - b + 1);
            };
            line = trim(line);
            if (line.empty()) continue;
            auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw Error::config("expected 'key = value' at " + path + ":" +
                                    std::to_string(lineno));
            }
            set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }

    void set(const std::string& key, const std::string& value) {
        const cfg::KeySpec* spec = find_spec(key);
        if (spec == nullptr) throw Error::config("unknown config key '" + key + "'");
        validate(*spec, value);
        values_[spec->name] = value;
    }

    static const cfg::KeySpec* find_spec(const std::string& key_or_alias) {
        for (const auto& spec : cfg::key_specs()) {
            if (spec.name == key_or_alias || (!spec.alias.empty() && spec.alias == key_or_alias)) {
                return &spec;
            }
        }
        return nullptr;
    }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw Error::config("unknown config key '" + key + "'");
        return it->second;
    }

    long long get_int(const std::string& key) const { return std::stoll(get(key)); }
    double get_double(const std::string& key) const { return std::strtod(get(key).c_str(), nullptr); }
    bool get_bool(const std::string& key) const { return get(key) == "true"; }

    std::vector<std::string> au_columns() const {
        const std::string& raw = get("data.au_columns");
        if (raw.empty()) return canonical_au_names();
        return split_list(raw);
    }

    std::vector<StatOp> stat_ops() const {
        std::vector<StatOp> ops;
        std::set<std::string> seen;
        for (const auto& name : split_list(get("stats.operators"))) {
            if (!seen.insert(name).second) {
                throw Error::config("duplicate statistical operator '" + name + "'");
            }
            ops.push_back(parse_stat_op(name));
        }
        if (ops.empty()) throw Error::config("stats.operators must not be empty");
        return ops;
    }

    Comparison comparison() const { return parse_comparison(get("relation.comparison")); }

    std::uint64_t seed() const { return static_cast<std::uint64_t>(get_int("seed")); }
    std::uint64_t synth_seed() const {
        const long long s = get_int("synth.seed");
        return s < 0 ? seed() : static_cast<std::uint64_t>(s);
    }

    // Echo of the full resolved configuration, in registry order.
    std::string resolved_text() const {
        std::ostringstream out;
        for (const auto& spec : cfg::key_specs()) {
            out << spec.name << " = " << values_.at(spec.name) << "\n";
        }
        return out.str();
    }

    static std::vector<std::string> split_list(const std::string& raw) {
        std::vector<std::string> items;
        std::string cur;
        for (char c : raw) {
            if (c == ',') {
                if (!cur.empty()) items.push_back(cur);
                cur.clear();
            } else if (c != ' ') {
                cur += c;
            }
        }
        if (!cur.empty()) items.push_back(cur);
        return items;
    }

private:
    static void validate(const cfg::KeySpec& spec, const std::string& value) {
        switch (spec.type) {
            case cfg::KeyType::kInt: {
                char* end = nullptr;
                const long long v = std::strtoll(value.c_str(), &end, 10);
                if (end == value.c_str() || *end != '\0') {
                    throw Error::config("key '" + spec.name + "' expects an integer, got '" +
                                        value + "'");
                }
                if (spec.has_range &&
                    (static_cast<double>(v) < spec.min || static_cast<double>(v) > spec.max)) {
                    throw Error::config("key '" + spec.name + "' value " + value + " out of range");
                }
                break;
            }
            case cfg::KeyType::kDouble: {
                char* end = nullptr;
                const double v = std::strtod(value.c_str(), &end);
                if (end == value.c_str() || *end != '\0') {
                    throw Error::config("key '" + spec.name + "' expects a number, got '" + value +
                                        "'");
                }
                if (spec.has_range && (v < spec.min || v > spec.max)) {
                    throw Error::config("key '" + spec.name + "' value " + value + " out of range");
                }
                break;
            }
            case cfg::KeyType::kEnum: {
                for (const auto& allowed : spec.enum_values) {
                    if (value == allowed) return;
                }
                std::string allowed;
                for (const auto& a : spec.enum_values) allowed += (allowed.empty() ? "" : "|") + a;
                throw Error::config("key '" + spec.name + "' expects one of {" + allowed +
                                    "}, got '" + value + "'");
            }
            case cfg::KeyType::kBool:
                if (value != "true" && value != "false") {
                    throw Error::config("key '" + spec.name + "' expects true|false, got '" +
                                        value + "'");
                }
                break;
            case cfg::KeyType::kString:
                break;
        }
    }

    std::map<std::string, std::string> values_;
};

} // namespace painnet
