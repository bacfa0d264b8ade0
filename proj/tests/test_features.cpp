#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "painnet/features.hpp"
#include "painnet/synth.hpp"
#include "test_util.hpp"

using namespace painnet;
using testutil::TempDir;

namespace {

std::string feature_csv(int frames, int cols = 20, double value = 0.5) {
    std::string text;
    const auto& names = canonical_au_names();
    for (int j = 0; j < cols; ++j) text += (j ? "," : "") + names[static_cast<std::size_t>(j)];
    text += "\n";
    for (int i = 0; i < frames; ++i) {
        for (int j = 0; j < cols; ++j) text += (j ? "," : "") + std::to_string(value);
        text += "\n";
    }
    return text;
}

} // namespace

TEST_CASE("load_manifest reads one record per row", "[features]") {
    TempDir dir("manifest");
    testutil::write_file(dir.file("f.csv"), feature_csv(20));
    std::string manifest = "video_id,subject_id,vas,feature_path\n";
    for (int s = 0; s < 25; ++s) {
        for (int v = 0; v < 8; ++v) {
            manifest += "v" + std::to_string(s) + "_" + std::to_string(v) + ",s" +
                        std::to_string(s) + "," + std::to_string((s + v) % 11) + ",f.csv\n";
        }
    }
    testutil::write_file(dir.file("manifest.csv"), manifest);

    const Dataset ds = load_manifest(dir.file("manifest.csv"));
    CHECK(ds.records.size() == 200);
    std::set<std::string> subjects;
    for (const auto& r : ds.records) subjects.insert(r.subject_id);
    CHECK(subjects.size() == 25);
    // Relative paths resolve against the manifest directory.
    CHECK(ds.records[0].feature_path == dir.file("f.csv"));
}

TEST_CASE("load_manifest rejects bad input", "[features]") {
    TempDir dir("manifest_bad");
    SECTION("missing file") {
        CHECK_THROWS_AS(load_manifest(dir.file("nope.csv")), Error);
    }
    SECTION("empty dataset") {
        testutil::write_file(dir.file("m.csv"), "video_id,subject_id,vas,feature_path\n");
        CHECK_THROWS_WITH(load_manifest(dir.file("m.csv")),
                          Catch::Matchers::ContainsSubstring("empty dataset"));
    }
    SECTION("vas out of range names the row") {
        testutil::write_file(dir.file("m.csv"),
                             "video_id,subject_id,vas,feature_path\nv1,s1,11,f.csv\n");
        CHECK_THROWS_WITH(load_manifest(dir.file("m.csv")),
                          Catch::Matchers::ContainsSubstring("v1"));
    }
    SECTION("duplicate video_id") {
        testutil::write_file(dir.file("m.csv"),
                             "video_id,subject_id,vas,feature_path\n"
                             "v1,s1,3,f.csv\nv1,s2,4,f.csv\n");
        CHECK_THROWS_WITH(load_manifest(dir.file("m.csv")),
                          Catch::Matchers::ContainsSubstring("duplicate"));
    }
    SECTION("malformed row") {
        testutil::write_file(dir.file("m.csv"),
                             "video_id,subject_id,vas,feature_path\nv1,s1,3\n");
        CHECK_THROWS_AS(load_manifest(dir.file("m.csv")), Error);
    }
}

TEST_CASE("load_video_features selects columns by name", "[features]") {
    TempDir dir("features");
    testutil::write_file(dir.file("f.csv"), feature_csv(5));

    const FrameMatrix all = load_video_features(dir.file("f.csv"), canonical_au_names());
    CHECK(all.columns() == 20);
    CHECK(all.frames() == 5);

    const std::vector<std::string> ten = {"AU1",  "AU2",  "AU4",  "AU5", "AU6",
                                          "AU7",  "AU9",  "AU10", "AU12", "AU43"};
    const FrameMatrix subset = load_video_features(dir.file("f.csv"), ten);
    CHECK(subset.columns() == 10);

    SECTION("column-subset consistency: subset equals slicing the full load") {
        for (std::size_t j = 0; j < ten.size(); ++j) {
            const auto& names = canonical_au_names();
            const auto full_col = static_cast<Eigen::Index>(
                std::find(names.begin(), names.end(), ten[j]) - names.begin());
            CHECK(subset.values.col(static_cast<Eigen::Index>(j)) == all.values.col(full_col));
        }
    }
    SECTION("unknown column") {
        CHECK_THROWS_WITH(load_video_features(dir.file("f.csv"), {"AU99"}),
                          Catch::Matchers::ContainsSubstring("unknown column"));
    }
    SECTION("non-numeric cell") {
        testutil::write_file(dir.file("bad.csv"), "AU1,AU2\n0.5,oops\n");
        CHECK_THROWS_WITH(load_video_features(dir.file("bad.csv"), {"AU1", "AU2"}),
                          Catch::Matchers::ContainsSubstring("non-numeric"));
    }
    SECTION("value outside [0,1]") {
        testutil::write_file(dir.file("bad.csv"), "AU1,AU2\n0.5,1.5\n");
        CHECK_THROWS_WITH(load_video_features(dir.file("bad.csv"), {"AU1", "AU2"}),
                          Catch::Matchers::ContainsSubstring("outside [0,1]"));
    }
}

TEST_CASE("center subtracts the per-column mean", "[features]") {
    FrameMatrix fm;
    fm.au_names = {"AU1"};
    fm.values.resize(3, 1);
    fm.values << 0.2, 0.4, 0.6;
    const FrameMatrix c = center(fm);
    CHECK(c.values(0, 0) == Catch::Approx(-0.2));
    CHECK(c.values(1, 0) == Catch::Approx(0.0).margin(1e-15));
    CHECK(c.values(2, 0) == Catch::Approx(0.2));

    SECTION("constant column becomes zero") {
        fm.values.resize(2, 1);
        fm.values << 0.5, 0.5;
        CHECK(center(fm).values.cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("single frame equals its mean") {
        fm.values.resize(1, 1);
        fm.values << 0.7;
        CHECK(center(fm).values(0, 0) == 0.0);
    }
    SECTION("idempotence and zero column sums") {
        Rng rng(11);
        FrameMatrix r;
        r.values.resize(37, 4);
        for (Eigen::Index i = 0; i < r.values.rows(); ++i) {
            for (Eigen::Index j = 0; j < r.values.cols(); ++j) {
                r.values(i, j) = rng.uniform(0.0, 1.0);
            }
        }
        const FrameMatrix once = center(r);
        const FrameMatrix twice = center(once);
        CHECK((twice.values - once.values).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(once.values.colwise().sum().cwiseAbs().maxCoeff() <
              1e-9 * static_cast<double>(r.values.rows()));
    }
}

TEST_CASE("segment splits into non-overlapping 16-frame blocks", "[features]") {
    FrameMatrix fm;
    fm.values = Eigen::MatrixXd::Zero(40, 2);
    for (Eigen::Index i = 0; i < 40; ++i) fm.values(i, 0) = static_cast<double>(i);

    const auto segs = segment(fm, 16);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0](0, 0) == 0.0);
    CHECK(segs[0](15, 0) == 15.0);
    CHECK(segs[1](0, 0) == 16.0);
    CHECK(segs[1](15, 0) == 31.0);

    SECTION("exactly one segment") {
        fm.values = Eigen::MatrixXd::Zero(16, 2);
        CHECK(segment(fm, 16).size() == 1);
    }
    SECTION("too short is an error") {
        fm.values = Eigen::MatrixXd::Zero(15, 2);
        CHECK_THROWS_WITH(segment(fm, 16), Catch::Matchers::ContainsSubstring("too short"));
    }
    SECTION("partition property: concatenation reproduces the first M*16 frames") {
        Rng rng(3);
        fm.values.resize(53, 3);
        for (Eigen::Index i = 0; i < fm.values.rows(); ++i) {
            for (Eigen::Index j = 0; j < fm.values.cols(); ++j) {
                fm.values(i, j) = rng.uniform(0.0, 1.0);
            }
        }
        const auto parts = segment(fm, 16);
        REQUIRE(parts.size() == 3);
        Eigen::MatrixXd cat(48, 3);
        for (std::size_t s = 0; s < parts.size(); ++s) {
            cat.middleRows(static_cast<Eigen::Index>(s) * 16, 16) = parts[s];
        }
        CHECK(cat == fm.values.topRows(48));
    }
}

TEST_CASE("add_noise is seeded and sigma=0 is the identity", "[features]") {
    FrameMatrix fm;
    fm.values = Eigen::MatrixXd::Constant(10, 4, 0.3);

    Rng rng(42);
    CHECK(add_noise(fm, 0.0, rng).values == fm.values);

    Rng a(42), b(42), c(43);
    const FrameMatrix na = add_noise(fm, 0.05, a);
    const FrameMatrix nb = add_noise(fm, 0.05, b);
    const FrameMatrix nc = add_noise(fm, 0.05, c);
    CHECK(na.values == nb.values);            // same seed, bitwise
    CHECK(na.values != nc.values);            // different seed differs somewhere
    CHECK(na.values != fm.values);
}

TEST_CASE("make_folds deals subjects evenly and keeps trials disjoint", "[features]") {
    Dataset ds;
    ds.au_names = canonical_au_names();
    for (int s = 0; s < 25; ++s) {
        for (int v = 0; v < 8; ++v) {
            ds.records.push_back({"v" + std::to_string(s) + "_" + std::to_string(v),
                                  "s" + std::to_string(s), (s + v) % 11, ""});
        }
    }

    Rng rng(7);
    const FoldSplit split = make_folds(ds, 5, 10, rng);
    REQUIRE(split.folds.size() == 5);
    for (const auto& fold : split.folds) CHECK(fold.size() == 5);

    std::set<std::string> all_subjects;
    for (const auto& fold : split.folds) {
        for (const auto& s : fold) CHECK(all_subjects.insert(s).second); // pairwise disjoint
    }
    CHECK(all_subjects.size() == 25);

    auto subject_of = [&](const std::string& vid) { return ds.by_id(vid).subject_id; };
    for (const auto& trial : split.trials) {
        CHECK(trial.validation.size() == 10);
        CHECK(trial.train.size() + trial.validation.size() + trial.test.size() == 200);
        std::set<std::string> test_subjects, train_subjects;
        for (const auto& id : trial.test) test_subjects.insert(subject_of(id));
        for (const auto& id : trial.train) train_subjects.insert(subject_of(id));
        for (const auto& s : train_subjects) CHECK(test_subjects.count(s) == 0);
        std::set<std::string> train_ids(trial.train.begin(), trial.train.end());
        for (const auto& id : trial.validation) CHECK(train_ids.count(id) == 0);
    }

    SECTION("same seed reproduces the split") {
        Rng r1(7), r2(7);
        const FoldSplit a = make_folds(ds, 5, 10, r1);
        const FoldSplit b = make_folds(ds, 5, 10, r2);
        CHECK(a.folds == b.folds);
        for (std::size_t t = 0; t < a.trials.size(); ++t) {
            CHECK(a.trials[t].train == b.trials[t].train);
            CHECK(a.trials[t].validation == b.trials[t].validation);
            CHECK(a.trials[t].test == b.trials[t].test);
        }
    }
    SECTION("fewer subjects than folds") {
        Dataset tiny;
        tiny.records.push_back({"v1", "s1", 3, ""});
        Rng r(1);
        CHECK_THROWS_AS(make_folds(tiny, 5, 1, r), Error);
    }
    SECTION("validation draw larger than the pool") {
        Rng r(1);
        CHECK_THROWS_AS(make_folds(ds, 5, 160, r), Error);
    }
}

TEST_CASE("synth_generate covers all classes deterministically", "[features]") {
    TempDir dir("synth");
    SynthSpec spec;
    spec.subjects = 10;
    spec.videos_per_class = 3;
    spec.min_frames = 32;
    spec.max_frames = 48;
    spec.seed = 7;

    Rng rng(spec.seed);
    const Dataset ds = synth_generate(spec, dir.str(), rng);
    CHECK(ds.records.size() == 33);
    std::vector<int> per_class(11, 0);
    for (const auto& r : ds.records) per_class[static_cast<std::size_t>(r.vas)]++;
    for (int c = 0; c < 11; ++c) CHECK(per_class[static_cast<std::size_t>(c)] == 3);

    // Generated files parse and respect the loader's [0,1] contract.
    const Dataset reloaded = load_manifest(dir.file("manifest.csv"));
    CHECK(reloaded.records.size() == 33);
    const FrameMatrix fm = load_video_features(reloaded.records[0].feature_path, canonical_au_names());
    CHECK(fm.columns() == 20);
    CHECK(fm.frames() >= 32);

    SECTION("same seed writes identical bytes") {
        TempDir dir2("synth_replay");
        Rng rng2(spec.seed);
        synth_generate(spec, dir2.str(), rng2);
        CHECK(testutil::read_file(dir.file("manifest.csv")) ==
              testutil::read_file(dir2.file("manifest.csv")));
        CHECK(testutil::read_file(dir.file("features/v05_001.csv")) ==
              testutil::read_file(dir2.file("features/v05_001.csv")));
    }
    SECTION("unwritable output directory") {
        Rng rng3(1);
        CHECK_THROWS_AS(synth_generate(spec, "/proc/painnet_cannot_write", rng3), Error);
    }
}
