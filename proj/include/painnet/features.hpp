#pragma once

#include <Eigen/Dense>

#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "painnet/error.hpp"
#include "painnet/rng.hpp"

namespace painnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// The 20 AU occurrence-probability columns every feature file carries.
inline const std::vector<std::string>& canonical_au_names() {
    static const std::vector<std::string> names = {
        "AU1",  "AU2",  "AU4",  "AU5",  "AU6",  "AU7",  "AU9",
        "AU10", "AU12", "AU14", "AU15", "AU17", "AU18", "AU20",
        "AU24", "AU25", "AU26", "AU28", "AU43", "Smirk"};
    return names;
}

// Per-video T x A matrix of per-frame AU values plus the column labels.
// Raw (pre-centering) entries live in [0,1]; after center() each column
// sums to zero.
struct FrameMatrix {
    Matrix values;                     // T x A
    std::vector<std::string> au_names; // A labels, column order

    Eigen::Index frames() const { return values.rows(); }
    Eigen::Index columns() const { return values.cols(); }
};

struct VideoRecord {
    std::string video_id;
    std::string subject_id;
    int vas = 0; // integer in [0,10]
    std::string feature_path;
};

struct Dataset {
    std::vector<VideoRecord> records;
    std::vector<std::string> au_names; // shared column schema

    const VideoRecord& by_id(const std::string& id) const {
        for (const auto& r : records) {
            if (r.video_id == id) return r;
        }
        throw Error::data("unknown video_id '" + id + "'");
    }
};

// One cross-validation trial: disjoint train/validation/test video id lists.
struct TrialSplit {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
};

struct FoldSplit {
    std::vector<std::vector<std::string>> folds; // k lists of subject ids
    std::vector<TrialSplit> trials;              // k trials, test = fold i
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline std::string dirname_of(const std::string& path) {
    auto pos = path.find_last_of('/');
    if (pos == std::string::npos) return ".";
    if (pos == 0) return "/";
    return path.substr(0, pos);
}

inline std::string join_path(const std::string& dir, const std::string& rel) {
    if (!rel.empty() && rel.front() == '/') return rel; // absolute
    if (dir.empty() || dir == ".") return rel;
    return dir + "/" + rel;
}

} // namespace detail

// Reads a manifest (header `video_id,subject_id,vas,feature_path`) into a
// Dataset. Feature files are not opened here; relative feature paths are
// resolved against the manifest directory.
inline Dataset load_manifest(const std::string& path,
                             const std::vector<std::string>& au_columns = canonical_au_names()) {
    std::ifstream in(path);
    if (!in) throw Error::io("cannot open manifest '" + path + "'");
    const std::string dir = detail::dirname_of(path);

    std::string line;
    if (!std::getline(in, line)) throw Error::data("empty manifest '" + path + "'");
    auto header = detail::split_csv_line(line);
    const std::vector<std::string> expected = {"video_id", "subject_id", "vas", "feature_path"};
    if (header != expected) {
        throw Error::data("manifest '" + path + "' has unexpected header '" + line + "'");
    }

    Dataset ds;
    ds.au_names = au_columns;
    std::set<std::string> seen_ids;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        const std::string where = path + ":" + std::to_string(row);
        if (fields.size() != 4) throw Error::data("malformed manifest row at " + where);
        VideoRecord rec;
        rec.video_id = fields[0];
        rec.subject_id = fields[1];
        try {
            std::size_t used = 0;
            rec.vas = std::stoi(fields[2], &used);
            if (used != fields[2].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw Error::data("non-integer vas '" + fields[2] + "' at " + where);
        }
        if (rec.vas < 0 || rec.vas > 10) {
            throw Error::data("vas " + fields[2] + " out of [0,10] at " + where +
                              " (video_id '" + rec.video_id + "')");
        }
        if (rec.video_id.empty() || rec.subject_id.empty() || fields[3].empty()) {
            throw Error::data("malformed manifest row at " + where);
        }
        if (!seen_ids.insert(rec.video_id).second) {
            throw Error::data("duplicate video_id '" + rec.video_id + "' at " + where);
        }
        rec.feature_path = detail::join_path(dir, fields[3]);
        ds.records.push_back(std::move(rec));
    }
    if (ds.records.empty()) throw Error::data("empty dataset in manifest '" + path + "'");
    return ds;
}

// Loads a feature CSV restricted to `au_columns`, in the requested order.
// Values must be numeric and inside [0,1].
inline FrameMatrix load_video_features(const std::string& path,
                                       const std::vector<std::string>& au_columns) {
    std::ifstream in(path);
    if (!in) throw Error::io("cannot open feature file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw Error::data("empty feature file '" + path + "'");
    auto header = detail::split_csv_line(line);

    std::vector<Eigen::Index> col_index;
    col_index.reserve(au_columns.size());
    for (const auto& name : au_columns) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw Error::data("unknown column '" + name + "' in '" + path + "'");
        }
        col_index.push_back(static_cast<Eigen::Index>(it - header.begin()));
    }

    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size()) {
            throw Error::data("row with " + std::to_string(fields.size()) + " cells (expected " +
                              std::to_string(header.size()) + ") at " + path + ":" +
                              std::to_string(lineno));
        }
        std::vector<double> vals(col_index.size());
        for (std::size_t j = 0; j < col_index.size(); ++j) {
            const std::string& cell = fields[static_cast<std::size_t>(col_index[j])];
            char* end = nullptr;
            double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0') {
                throw Error::data("non-numeric cell '" + cell + "' at " + path + ":" +
                                  std::to_string(lineno));
            }
            if (v < 0.0 || v > 1.0) {
                throw Error::data("value " + cell + " outside [0,1] at " + path + ":" +
                                  std::to_string(lineno));
            }
            vals[j] = v;
        }
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw Error::data("feature file '" + path + "' has no frames");

    FrameMatrix fm;
    fm.au_names = au_columns;
    fm.values.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(col_index.size()));
    for (Eigen::Index i = 0; i < fm.values.rows(); ++i) {
        for (Eigen::Index j = 0; j < fm.values.cols(); ++j) {
            fm.values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
    return fm;
}

// Subtracts the per-video column mean from every entry (Eq.-1-style
// centering). Idempotent up to rounding.
inline FrameMatrix center(const FrameMatrix& fm) {
    FrameMatrix out = fm;
    out.values.rowwise() -= fm.values.colwise().mean();
    return out;
}

// Splits into floor(T/seg_len) consecutive non-overlapping segments; the
// trailing partial segment is dropped. T < seg_len is an error.
inline std::vector<Matrix> segment(const FrameMatrix& fm, int seg_len) {
    if (seg_len < 1) throw Error::data("segment length must be >= 1");
    const Eigen::Index t = fm.frames();
    const Eigen::Index m = t / seg_len;
    if (m == 0) {
        throw Error::data("video too short: " + std::to_string(t) + " frames < segment length " +
                          std::to_string(seg_len));
    }
    std::vector<Matrix> segs;
    segs.reserve(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) {
        segs.push_back(fm.values.middleRows(i * seg_len, seg_len));
    }
    return segs;
}

// Adds independent zero-mean Gaussian noise (stddev sigma) to every entry.
inline FrameMatrix add_noise(const FrameMatrix& fm, double sigma, Rng& rng) {
    if (sigma < 0.0) throw Error::data("noise sigma must be >= 0");
    FrameMatrix out = fm;
    if (sigma == 0.0) return out;
    for (Eigen::Index i = 0; i < out.values.rows(); ++i) {
        for (Eigen::Index j = 0; j < out.values.cols(); ++j) {
            out.values(i, j) += rng.gaussian(0.0, sigma);
        }
    }
    return out;
}

// Subject-wise k-fold split. Subjects are shuffled by seed and dealt
// round-robin; per trial, `val_count` validation videos are drawn from the
// combined train pool and removed from it.
inline FoldSplit make_folds(const Dataset& ds, int k, int val_count, Rng& rng) {
    if (k < 1) throw Error::data("fold count must be >= 1");
    std::set<std::string> subject_set;
    for (const auto& r : ds.records) subject_set.insert(r.subject_id);
    std::vector<std::string> subjects(subject_set.begin(), subject_set.end());
    if (static_cast<int>(subjects.size()) < k) {
        throw Error::data("fewer subjects (" + std::to_string(subjects.size()) + ") than folds (" +
                          std::to_string(k) + ")");
    }
    rng.shuffle(subjects);

    FoldSplit split;
    split.folds.assign(static_cast<std::size_t>(k), {});
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        split.folds[i % static_cast<std::size_t>(k)].push_back(subjects[i]);
    }

    for (int f = 0; f < k; ++f) {
        std::set<std::string> test_subjects(split.folds[static_cast<std::size_t>(f)].begin(),
                                            split.folds[static_cast<std::size_t>(f)].end());
        TrialSplit trial;
        std::vector<std::string> pool;
        for (const auto& r : ds.records) {
            if (test_subjects.count(r.subject_id)) {
                trial.test.push_back(r.video_id);
            } else {
                pool.push_back(r.video_id);
            }
        }
        if (val_count >= static_cast<int>(pool.size())) {
            throw Error::data("validation count " + std::to_string(val_count) +
                              " >= remaining video count " + std::to_string(pool.size()));
        }
        std::vector<std::string> shuffled = pool;
        rng.shuffle(shuffled);
        std::set<std::string> val_ids(shuffled.begin(), shuffled.begin() + val_count);
        for (const auto& id : pool) {
            if (val_ids.count(id)) {
                trial.validation.push_back(id);
            } else {
                trial.train.push_back(id);
            }
        }
        split.trials.push_back(std::move(trial));
    }
    return split;
}

// Lazily loads and centers feature files, caching by video id. Safe for
// concurrent readers; a given video is loaded at most once.
class FeatureStore {
public:
    explicit FeatureStore(Dataset ds) : ds_(std::move(ds)) {}

    const Dataset& dataset() const { return ds_; }

    // Centered T x A matrix for a video.
    const FrameMatrix& centered(const std::string& video_id) const {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = cache_.find(video_id);
        if (it != cache_.end()) return it->second;
        const VideoRecord& rec = ds_.by_id(video_id);
        FrameMatrix fm = center(load_video_features(rec.feature_path, ds_.au_names));
        return cache_.emplace(video_id, std::move(fm)).first->second;
    }

private:
    Dataset ds_;
    mutable std::mutex mutex_;
    mutable std::unordered_map<std::string, FrameMatrix> cache_;
};

} // namespace painnet
