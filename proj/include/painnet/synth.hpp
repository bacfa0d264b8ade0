#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "painnet/config.hpp"
#include "painnet/error.hpp"
#include "painnet/features.hpp"
#include "painnet/rng.hpp"

namespace painnet {

struct SynthSpec {
    int subjects = 25;
    int videos_per_class = 12;
    int min_frames = 48;
    int max_frames = 96;
    double signal_strength = 1.0;
    std::uint64_t seed = 7;

    static SynthSpec from_config(const RunConfig& config) {
        SynthSpec spec;
        spec.subjects = static_cast<int>(config.get_int("synth.subjects"));
        spec.videos_per_class = static_cast<int>(config.get_int("synth.videos_per_class"));
        spec.min_frames = static_cast<int>(config.get_int("synth.min_frames"));
        spec.max_frames = static_cast<int>(config.get_int("synth.max_frames"));
        spec.signal_strength = config.get_double("synth.signal_strength");
        spec.seed = config.synth_seed();
        if (spec.min_frames > spec.max_frames) {
            throw Error::config("synth.min_frames exceeds synth.max_frames");
        }
        return spec;
    }
};

namespace detail {

// AU columns that carry the planted pain signal (brow furrow, cheek raiser,
// lid tightener, nose wrinkle, upper lip raiser, eyes closure).
inline const std::vector<std::string>& pain_au_names() {
    static const std::vector<std::string> names = {"AU4", "AU6", "AU7", "AU9", "AU10", "AU43"};
    return names;
}

} // namespace detail

// Generates a labeled synthetic dataset: every VAS class 0..10 receives
// `videos_per_class` videos, assigned to subjects round-robin. Pain columns
// get contiguous activation bursts whose count and amplitude grow with the
// label; all columns carry background noise. Values are clamped to [0,1].
// Deterministic given the seed: the same spec writes identical bytes.
inline Dataset synth_generate(const SynthSpec& spec, const std::string& out_dir, Rng& rng) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "features", ec);
    if (ec) throw Error::io("cannot create output directory '" + out_dir + "': " + ec.message());

    const auto& au_names = canonical_au_names();
    std::vector<Eigen::Index> pain_cols;
    for (const auto& name : detail::pain_au_names()) {
        auto it = std::find(au_names.begin(), au_names.end(), name);
        pain_cols.push_back(static_cast<Eigen::Index>(it - au_names.begin()));
    }

    const std::string manifest_path = out_dir + "/manifest.csv";
    std::ofstream manifest(manifest_path, std::ios::binary);
    if (!manifest) throw Error::io("cannot write manifest '" + manifest_path + "'");
    manifest << "video_id,subject_id,vas,feature_path\n";

    Dataset ds;
    ds.au_names = au_names;
    int video_index = 0;
    for (int vas = 0; vas < 11; ++vas) {
        for (int v = 0; v < spec.videos_per_class; ++v, ++video_index) {
            const int subject = video_index % spec.subjects;
            char id_buf[64], subj_buf[32];
            std::snprintf(id_buf, sizeof(id_buf), "v%02d_%03d", vas, v);
            std::snprintf(subj_buf, sizeof(subj_buf), "s%02d", subject);

            const int frames = spec.min_frames == spec.max_frames
                                   ? spec.min_frames
                                   : rng.uniform_int(spec.min_frames, spec.max_frames);
            Eigen::MatrixXd m(frames, static_cast<Eigen::Index>(au_names.size()));

            // Quiet baseline per column plus background noise everywhere.
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                const double base = rng.uniform(0.05, 0.15);
                for (Eigen::Index i = 0; i < m.rows(); ++i) {
                    m(i, j) = base + rng.gaussian(0.0, 0.02);
                }
            }

            // Pain bursts: count and amplitude increase with the label.
            const int bursts = 1 + vas / 3;
            const double amplitude = spec.signal_strength * (0.10 + 0.07 * vas);
            const int burst_len = 10;
            for (int b = 0; b < bursts; ++b) {
                const int start = rng.uniform_int(0, std::max(0, frames - burst_len));
                for (Eigen::Index col : pain_cols) {
                    for (int i = start; i < std::min(frames, start + burst_len); ++i) {
                        m(i, col) += amplitude * (0.8 + 0.2 * rng.uniform(0.0, 1.0));
                    }
                }
            }
            m = m.cwiseMax(0.0).cwiseMin(1.0);

            const std::string rel_path = std::string("features/") + id_buf + ".csv";
            const std::string feature_path = out_dir + "/" + rel_path;
            std::ofstream feat(feature_path, std::ios::binary);
            if (!feat) throw Error::io("cannot write feature file '" + feature_path + "'");
            for (std::size_t j = 0; j < au_names.size(); ++j) {
                feat << (j == 0 ? "" : ",") << au_names[j];
            }
            feat << "\n";
            char cell[32];
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                for (Eigen::Index j = 0; j < m.cols(); ++j) {
                    std::snprintf(cell, sizeof(cell), "%.6f", m(i, j));
                    feat << (j == 0 ? "" : ",") << cell;
                }
                feat << "\n";
            }
            if (!feat) throw Error::io("failed writing feature file '" + feature_path + "'");

            manifest << id_buf << "," << subj_buf << "," << vas << "," << rel_path << "\n";
            ds.records.push_back({id_buf, subj_buf, vas, feature_path});
        }
    }
    if (!manifest) throw Error::io("failed writing manifest '" + manifest_path + "'");
    return ds;
}

} // namespace painnet
