#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "painnet/episodic.hpp"
#include "painnet/synth.hpp"
#include "test_util.hpp"

using namespace painnet;

namespace {

Dataset toy_dataset(int per_class = 3) {
    Dataset ds;
    ds.au_names = canonical_au_names();
    int subject = 0;
    for (int vas = 0; vas <= 10; ++vas) {
        for (int v = 0; v < per_class; ++v) {
            ds.records.push_back({"v" + std::to_string(vas) + "_" + std::to_string(v),
                                  "s" + std::to_string(subject++ % 7), vas, ""});
        }
    }
    return ds;
}

std::vector<std::string> all_ids(const Dataset& ds) {
    std::vector<std::string> ids;
    for (const auto& r : ds.records) ids.push_back(r.video_id);
    return ids;
}

} // namespace

TEST_CASE("sample_episode draws one video per class and never the query", "[episodic]") {
    const Dataset ds = toy_dataset();
    const auto pool = all_ids(ds);
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        const Episode ep = sample_episode(ds, pool, rng);
        CHECK(ep.t_label == ds.by_id(ep.query).vas);
        int positives = 0;
        for (int c = 0; c < kNumClasses; ++c) {
            const auto& id = ep.samples[static_cast<std::size_t>(c)];
            CHECK(id != ep.query);
            CHECK_FALSE(ep.fallback[static_cast<std::size_t>(c)]);
            CHECK(ds.by_id(id).vas == c);
            if (c == ep.t_label) positives++;
        }
        CHECK(positives == 1); // exactly one y_c = 1
    }
}

TEST_CASE("sample_episode falls back to the nearest populated class", "[episodic]") {
    Dataset ds = toy_dataset();
    // Remove every class-9 video; classes 8 and 10 stay populated.
    std::erase_if(ds.records, [](const VideoRecord& r) { return r.vas == 9; });
    const auto pool = all_ids(ds);
    Rng rng(11);
    for (int i = 0; i < 50; ++i) {
        const Episode ep = sample_episode(ds, pool, rng);
        CHECK(ep.fallback[9]);
        CHECK(ds.by_id(ep.samples[9]).vas == 8); // tie between 8 and 10 goes to the lower label
    }
}

TEST_CASE("sample_eval_sets reuses scarce classes and is seeded", "[episodic]") {
    Dataset ds = toy_dataset(1); // a single video per class
    const auto pool = all_ids(ds);
    Rng rng(13);
    const auto sets = sample_eval_sets(ds, pool, 5, rng);
    REQUIRE(sets.size() == 5);
    for (const auto& set : sets) {
        REQUIRE(set.size() == 11);
        CHECK(set[4] == sets[0][4]); // only one eligible video for class 4
    }

    Rng r1(99), r2(99);
    CHECK(sample_eval_sets(ds, pool, 5, r1) == sample_eval_sets(ds, pool, 5, r2));

    SECTION("empty pool is an error") {
        Rng r(1);
        CHECK_THROWS_AS(sample_eval_sets(ds, {}, 5, r), Error);
    }
}

TEST_CASE("wbce loss matches the hand evaluation on uniform probabilities", "[episodic]") {
    EpisodeProbs probs;
    probs.scores = Eigen::VectorXd::Zero(11);
    probs.p = Eigen::VectorXd::Constant(11, 1.0 / 11.0);

    // (ln 11 + 40 ln 1.1)/11: weight 1 on the true class, sum 40 elsewhere.
    const double expected = (std::log(11.0) + 40.0 * std::log(1.1)) / 11.0;
    const LossResult loss = wbce_loss(probs, 5, true);
    CHECK(loss.loss == Catch::Approx(expected).margin(1e-12));
    CHECK(loss.loss == Catch::Approx(0.5645729513610332).margin(1e-10));
}

TEST_CASE("wbce weight vector and symmetry", "[episodic]") {
    const Eigen::VectorXd w5 = wbce_weights(5);
    const std::vector<double> expected = {6, 5, 4, 3, 2, 1, 2, 3, 4, 5, 6};
    for (int c = 0; c < 11; ++c) CHECK(w5(c) == expected[static_cast<std::size_t>(c)]);

    for (int t = 0; t <= 10; ++t) {
        const Eigen::VectorXd a = wbce_weights(t);
        const Eigen::VectorXd b = wbce_weights(10 - t);
        for (int c = 0; c < 11; ++c) CHECK(a(c) == b(10 - c)); // mirror images
    }
}

TEST_CASE("wbce edge behaviour", "[episodic]") {
    SECTION("perfect prediction drives the loss to zero") {
        EpisodeProbs probs;
        probs.p = Eigen::VectorXd::Constant(11, 1e-15);
        probs.p(5) = 1.0 - 1e-14;
        const LossResult loss = wbce_loss(probs, 5, true);
        CHECK(loss.loss >= 0.0);
        CHECK(loss.loss < 1e-10);
    }
    SECTION("exact zeros and ones are clamped, not infinite") {
        EpisodeProbs probs;
        probs.p = Eigen::VectorXd::Zero(11);
        probs.p(0) = 1.0;
        const LossResult loss = wbce_loss(probs, 5, true);
        CHECK(std::isfinite(loss.loss));
        CHECK(loss.loss > 0.0);
    }
    SECTION("bce mode equals wbce with unit weights") {
        Rng rng(3);
        Eigen::VectorXd scores(11);
        for (int c = 0; c < 11; ++c) scores(c) = rng.uniform(-2.0, 2.0);
        const EpisodeProbs probs = softmax_probs(scores);
        const LossResult bce = wbce_loss(probs, 4, false);
        double manual = 0.0;
        for (int c = 0; c < 11; ++c) {
            const double yc = c == 4 ? 1.0 : 0.0;
            manual += -(yc * std::log(probs.p(c)) + (1 - yc) * std::log(1 - probs.p(c)));
        }
        CHECK(bce.loss == Catch::Approx(manual / 11.0));
    }
    SECTION("loss is nonnegative on random distributions") {
        Rng rng(5);
        for (int i = 0; i < 50; ++i) {
            Eigen::VectorXd scores(11);
            for (int c = 0; c < 11; ++c) scores(c) = rng.uniform(-4.0, 4.0);
            const EpisodeProbs probs = softmax_probs(scores);
            REQUIRE(wbce_loss(probs, rng.uniform_int(0, 10), true).loss >= 0.0);
        }
    }
    SECTION("gradient w.r.t. scores matches finite differences") {
        Rng rng(7);
        for (bool weighted : {true, false}) {
            auto problem = gradcheck::make_loss_head_problem(rng, weighted);
            const CheckReport r = fd_check(problem, 1e-5, 1e-4, rng);
            CHECK(r.pass);
        }
    }
}

namespace {

// Small synthetic dataset + store shared by the training-loop tests.
struct TrainFixture {
    testutil::TempDir dir{"episodic_train"};
    std::unique_ptr<FeatureStore> store;
    FoldSplit split;

    TrainFixture() {
        SynthSpec spec;
        spec.subjects = 8;
        spec.videos_per_class = 4;
        spec.min_frames = 32;
        spec.max_frames = 48;
        spec.signal_strength = 1.0;
        spec.seed = 5;
        Rng rng(spec.seed);
        const Dataset ds = synth_generate(spec, dir.str(), rng);
        store = std::make_unique<FeatureStore>(ds);
        Rng fold_rng(3);
        split = make_folds(ds, 3, 6, fold_rng);
    }

    static TrainConfig small_config() {
        TrainConfig tc;
        tc.episodes = 20;
        tc.accumulate_every = 5;
        tc.eval_every = 10;
        tc.eval_sample_sets = 3;
        tc.seed = 17;
        return tc;
    }

    static ModelSpec small_model() {
        ModelSpec spec;
        spec.hidden = 4;
        spec.seg_len = 16;
        return spec;
    }
};

} // namespace

TEST_CASE("train runs the episode loop with the configured cadence", "[episodic]") {
    TrainFixture fx;
    Model model(TrainFixture::small_model());
    const TrainResult result =
        train(model, *fx.store, fx.split.trials[0], TrainFixture::small_config(), "cfg = 1\n");
    CHECK(result.optimizer_steps == 4); // 20 episodes / 5
    CHECK(result.validations == 2);     // 20 episodes / 10
    CHECK(result.best_episode > 0);
    CHECK(result.log.find("val_mae") != std::string::npos);
}

TEST_CASE("training is deterministic given the seed", "[episodic]") {
    TrainFixture fx;
    Model m1(TrainFixture::small_model());
    Model m2(TrainFixture::small_model());
    const TrainConfig tc = TrainFixture::small_config();
    const TrainResult r1 = train(m1, *fx.store, fx.split.trials[0], tc, "cfg = 1\n");
    const TrainResult r2 = train(m2, *fx.store, fx.split.trials[0], tc, "cfg = 1\n");
    CHECK(r1.log == r2.log);
    CHECK(checkpoint_to_string(r1.best) == checkpoint_to_string(r2.best));
}

TEST_CASE("gradient accumulation equals the gradient of the mean loss", "[episodic]") {
    TrainFixture fx;
    const auto& trial = fx.split.trials[0];
    const int n = 5;

    // Route A: accumulate n episode gradients, then average.
    Model ma(TrainFixture::small_model());
    Rng init_a(1);
    ma.init(init_a);
    ma.params().zero_grads();
    Rng rng_a(123);
    std::vector<Episode> episodes;
    for (int i = 0; i < n; ++i) {
        const Episode ep = sample_episode(fx.store->dataset(), trial.train, rng_a);
        episodes.push_back(ep);
        std::vector<FrameMatrix> videos;
        videos.push_back(fx.store->centered(ep.query));
        for (const auto& id : ep.samples) videos.push_back(fx.store->centered(id));
        EmbedTranscript et;
        const auto vecs = ma.embed_batch(videos, Mode::kTrain, &rng_a, et, false);
        std::vector<Eigen::VectorXd> sample_vecs(vecs.begin() + 1, vecs.end());
        std::vector<CompareTranscript> cts;
        std::vector<MlpTranscript> mts;
        const EpisodeProbs probs = ma.episode_probs(vecs[0], sample_vecs, cts, mts);
        const LossResult loss = wbce_loss(probs, ep.t_label, true);
        Eigen::VectorXd dq;
        std::vector<Eigen::VectorXd> dsamps;
        ma.relation_backward(cts, mts, loss.dscores, dq, dsamps);
        std::vector<Eigen::VectorXd> dvecs;
        dvecs.push_back(dq);
        dvecs.insert(dvecs.end(), dsamps.begin(), dsamps.end());
        ma.embed_backward(et, dvecs);
    }
    ma.params().scale_grads(1.0 / n);

    // Route B: same episodes, every upstream gradient pre-divided by n.
    Model mb(TrainFixture::small_model());
    Rng init_b(1);
    mb.init(init_b);
    mb.params().zero_grads();
    Rng rng_b(123);
    for (int i = 0; i < n; ++i) {
        const Episode check = sample_episode(fx.store->dataset(), trial.train, rng_b);
        REQUIRE(check.query == episodes[static_cast<std::size_t>(i)].query);
        std::vector<FrameMatrix> videos;
        videos.push_back(fx.store->centered(check.query));
        for (const auto& id : check.samples) videos.push_back(fx.store->centered(id));
        EmbedTranscript et;
        const auto vecs = mb.embed_batch(videos, Mode::kTrain, &rng_b, et, false);
        std::vector<Eigen::VectorXd> sample_vecs(vecs.begin() + 1, vecs.end());
        std::vector<CompareTranscript> cts;
        std::vector<MlpTranscript> mts;
        const EpisodeProbs probs = mb.episode_probs(vecs[0], sample_vecs, cts, mts);
        const LossResult loss = wbce_loss(probs, check.t_label, true);
        Eigen::VectorXd dq;
        std::vector<Eigen::VectorXd> dsamps;
        mb.relation_backward(cts, mts, (loss.dscores / n).eval(), dq, dsamps);
        std::vector<Eigen::VectorXd> dvecs;
        dvecs.push_back(dq);
        dvecs.insert(dvecs.end(), dsamps.begin(), dsamps.end());
        mb.embed_backward(et, dvecs);
    }

    const auto ta = ma.params().learnable();
    const auto tb = mb.params().learnable();
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
        INFO(ta[i]->name);
        CHECK((ta[i]->grad - tb[i]->grad).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("batch mode takes one step per batch and replays bitwise", "[episodic]") {
    TrainFixture fx;
    TrainConfig tc = TrainFixture::small_config();
    tc.episode_mode = false;
    tc.batch_size = 5;
    Model m1(TrainFixture::small_model());
    const TrainResult r1 = train_batch_mode(m1, *fx.store, fx.split.trials[0], tc, "cfg = 1\n");
    CHECK(r1.optimizer_steps == 4); // episodes / accumulate_every updates

    Model m2(TrainFixture::small_model());
    const TrainResult r2 = train_batch_mode(m2, *fx.store, fx.split.trials[0], tc, "cfg = 1\n");
    CHECK(r1.log == r2.log);
    CHECK(checkpoint_to_string(r1.best) == checkpoint_to_string(r2.best));
}

TEST_CASE("non-finite loss aborts with a diagnostic", "[episodic]") {
    TrainFixture fx;
    Model model(TrainFixture::small_model());
    // Poison a parameter so the forward pass blows up immediately.
    Model poisoned(TrainFixture::small_model());
    Rng rng(1);
    poisoned.init(rng);
    poisoned.gru().wz.value.setConstant(std::numeric_limits<double>::quiet_NaN());
    std::vector<FrameMatrix> videos = {fx.store->centered(fx.split.trials[0].train[0])};
    EmbedTranscript et;
    CHECK_THROWS_AS(poisoned.embed_batch(videos, Mode::kEval, nullptr, et), Error);
}
