#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "painnet/checkpoint.hpp"
#include "painnet/config.hpp"
#include "painnet/diffcore.hpp"
#include "painnet/error.hpp"
#include "painnet/eval.hpp"
#include "painnet/features.hpp"
#include "painnet/loss.hpp"
#include "painnet/model.hpp"
#include "painnet/rng.hpp"

namespace painnet {

// One training unit: a query video plus one sample video per VAS class.
struct Episode {
    std::string query;
    int t_label = 0;
    std::array<std::string, kNumClasses> samples;
    std::array<bool, kNumClasses> fallback{}; // slot filled from a neighbouring class
};

namespace detail {

// Videos of the pool grouped by VAS class, ids in pool order.
inline std::vector<std::vector<std::string>> videos_by_class(const Dataset& ds,
                                                             const std::vector<std::string>& pool) {
    std::vector<std::vector<std::string>> by_class(kNumClasses);
    for (const auto& id : pool) {
        by_class[static_cast<std::size_t>(ds.by_id(id).vas)].push_back(id);
    }
    return by_class;
}

// Draws one video for class c, excluding `exclude`; when the class is not
// populated, falls back to the nearest populated class by label distance
// (ties to the lower label).
inline std::string draw_class_sample(const std::vector<std::vector<std::string>>& by_class, int c,
                                     const std::string& exclude, Rng& rng, bool& used_fallback) {
    auto eligible = [&](int cls) {
        std::vector<std::string> out;
        for (const auto& id : by_class[static_cast<std::size_t>(cls)]) {
            if (id != exclude) out.push_back(id);
        }
        return out;
    };
    used_fallback = false;
    std::vector<std::string> candidates = eligible(c);
    if (candidates.empty()) {
        for (int dist = 1; dist < kNumClasses && candidates.empty(); ++dist) {
            if (c - dist >= 0) candidates = eligible(c - dist);
            if (candidates.empty() && c + dist < kNumClasses) candidates = eligible(c + dist);
        }
        if (candidates.empty()) throw Error::data("no eligible sample video for any class");
        used_fallback = true;
    }
    return candidates[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(candidates.size()) - 1))];
}

} // namespace detail

// Query uniform over the train pool; per class one uniform draw over that
// class's videos excluding the query.
inline Episode sample_episode(const Dataset& ds, const std::vector<std::string>& pool, Rng& rng) {
    if (pool.empty()) throw Error::data("train pool is empty");
    auto by_class = detail::videos_by_class(ds, pool);

    Episode ep;
    ep.query = pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
    ep.t_label = ds.by_id(ep.query).vas;
    for (int c = 0; c < kNumClasses; ++c) {
        bool fb = false;
        ep.samples[static_cast<std::size_t>(c)] =
            detail::draw_class_sample(by_class, c, ep.query, rng, fb);
        ep.fallback[static_cast<std::size_t>(c)] = fb;
    }
    return ep;
}

// Sample sets for validation/testing: queries live elsewhere, so no
// exclusion applies; sets are drawn independently.
inline std::vector<std::vector<std::string>> sample_eval_sets(const Dataset& ds,
                                                              const std::vector<std::string>& pool,
                                                              int n_sets, Rng& rng) {
    if (pool.empty()) throw Error::data("train pool is empty");
    auto by_class = detail::videos_by_class(ds, pool);
    std::vector<std::vector<std::string>> sets;
    for (int s = 0; s < n_sets; ++s) {
        std::vector<std::string> set;
        for (int c = 0; c < kNumClasses; ++c) {
            bool fb = false;
            set.push_back(detail::draw_class_sample(by_class, c, "", rng, fb));
        }
        sets.push_back(std::move(set));
    }
    return sets;
}

struct TrainConfig {
    int episodes = 1500;
    int accumulate_every = 5;
    double lr = 0.005;
    double clip = 1.0;
    int eval_every = 50;
    int eval_sample_sets = 5;
    bool weighted_loss = true;   // wbce vs bce
    bool episode_mode = true;    // episode vs batch training
    int batch_size = 16;
    double noise_sigma = 0.05;
    std::uint64_t seed = 7;

    static TrainConfig from_config(const RunConfig& config) {
        TrainConfig tc;
        tc.episodes = static_cast<int>(config.get_int("train.episodes"));
        tc.accumulate_every = static_cast<int>(config.get_int("train.accumulate_every"));
        tc.lr = config.get_double("train.lr");
        tc.clip = config.get_double("train.clip");
        tc.eval_every = static_cast<int>(config.get_int("train.eval_every"));
        tc.eval_sample_sets = static_cast<int>(config.get_int("eval.sample_sets"));
        tc.weighted_loss = config.get("train.loss") == "wbce";
        tc.episode_mode = config.get("training.mode") == "episode";
        tc.batch_size = static_cast<int>(config.get_int("train.batch_size"));
        tc.noise_sigma = config.get_double("train.noise_sigma");
        tc.seed = config.seed();
        return tc;
    }
};

struct TrainResult {
    CheckpointData best;          // lowest validation MAE (ties: higher ICC, earlier episode)
    std::string log;              // line-delimited {episode, loss, [val_*]} records
    double best_val_mae = 0.0;
    double best_val_icc = 0.0;
    int best_episode = 0;
    double first_update_loss = 0.0;
    double last_update_loss = 0.0;
    int optimizer_steps = 0;
    int validations = 0;
};

namespace detail {

inline std::string log_record(int episode, double loss, const EvalMetrics* val) {
    char buf[256];
    if (val == nullptr) {
        std::snprintf(buf, sizeof(buf), "{\"episode\": %d, \"loss\": %.17g}", episode, loss);
        return buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "{\"episode\": %d, \"loss\": %.17g, \"val_icc\": %.17g, \"val_mae\": %.17g, "
                  "\"val_rmse\": %.17g}",
                  episode, loss, val->icc.defined ? val->icc.value : std::nan(""), val->mae,
                  val->rmse);
    return buf;
}

// Centers are cached in the store; noise is drawn fresh per use.
inline FrameMatrix augmented(const FeatureStore& store, const std::string& id, double sigma,
                             Rng& rng) {
    return add_noise(store.centered(id), sigma, rng);
}

struct BestTracker {
    bool has = false;
    double mae = 0.0;
    double icc = 0.0;
    int episode = 0;

    bool improves(const EvalMetrics& val) const {
        if (!has) return true;
        const double val_icc = val.icc.defined ? val.icc.value : -2.0;
        if (val.mae != mae) return val.mae < mae;
        if (val_icc != icc) return val_icc > icc;
        return false; // earlier episode wins ties
    }

    void update(const EvalMetrics& val, int ep) {
        has = true;
        mae = val.mae;
        icc = val.icc.defined ? val.icc.value : -2.0;
        episode = ep;
    }
};

} // namespace detail

// Episode-based training (the default regime): per episode embed the query
// and the 11 sample videos jointly in train mode, accumulate gradients,
// and every `accumulate_every` episodes average them, clip to the global
// norm bound and take one ADAM step. Validation runs every `eval_every`
// episodes with `eval_sample_sets` fixed sample sets and the median
// protocol; the best checkpoint by validation MAE is retained.
inline TrainResult train(Model& model, const FeatureStore& store, const TrialSplit& trial,
                         const TrainConfig& tc, const std::string& config_snapshot) {
    const Dataset& ds = store.dataset();
    Rng init_rng(derive_seed(tc.seed, "init"));
    model.init(init_rng);
    OptimizerState opt = OptimizerState::for_params(model.params());
    model.params().zero_grads();

    Rng train_rng(derive_seed(tc.seed, "train"));
    Rng val_rng(derive_seed(tc.seed, "val_sets"));
    const auto val_sets = sample_eval_sets(ds, trial.train, tc.eval_sample_sets, val_rng);

    TrainResult result;
    std::ostringstream log;
    detail::BestTracker best;
    double accum_loss = 0.0;
    int accum_count = 0;
    double last_mean_loss = 0.0;

    for (int episode = 1; episode <= tc.episodes; ++episode) {
        const Episode ep = sample_episode(ds, trial.train, train_rng);

        std::vector<FrameMatrix> videos;
        videos.reserve(1 + kNumClasses);
        videos.push_back(detail::augmented(store, ep.query, tc.noise_sigma, train_rng));
        for (const auto& id : ep.samples) {
            videos.push_back(detail::augmented(store, id, tc.noise_sigma, train_rng));
        }

        EmbedTranscript et;
        const auto vecs = model.embed_batch(videos, Mode::kTrain, &train_rng, et);
        std::vector<Eigen::VectorXd> sample_vecs(vecs.begin() + 1, vecs.end());

        std::vector<CompareTranscript> cts;
        std::vector<MlpTranscript> mts;
        const EpisodeProbs probs = model.episode_probs(vecs[0], sample_vecs, cts, mts);
        const LossResult loss = wbce_loss(probs, ep.t_label, tc.weighted_loss);
        if (!std::isfinite(loss.loss)) {
            throw Error::numeric("non-finite loss at episode " + std::to_string(episode));
        }
        accum_loss += loss.loss;
        accum_count += 1;

        Eigen::VectorXd dquery;
        std::vector<Eigen::VectorXd> dsamples;
        model.relation_backward(cts, mts, loss.dscores, dquery, dsamples);
        std::vector<Eigen::VectorXd> dvecs;
        dvecs.push_back(dquery);
        dvecs.insert(dvecs.end(), dsamples.begin(), dsamples.end());
        model.embed_backward(et, dvecs);

        if (episode % tc.accumulate_every == 0) {
            model.params().scale_grads(1.0 / accum_count);
            clip_global_norm(model.params(), tc.clip);
            adam_step(model.params(), opt, tc.lr);
            model.params().zero_grads();
            result.optimizer_steps += 1;
            last_mean_loss = accum_loss / accum_count;
            if (result.optimizer_steps == 1) result.first_update_loss = last_mean_loss;
            result.last_update_loss = last_mean_loss;
            accum_loss = 0.0;
            accum_count = 0;
            if (episode % tc.eval_every != 0) {
                log << detail::log_record(episode, last_mean_loss, nullptr) << "\n";
            }
        }

        if (episode % tc.eval_every == 0) {
            const auto val_embeds = embed_sample_sets(model, store, val_sets);
            const EvalMetrics val = evaluate_queries(model, store, trial.validation, val_embeds);
            result.validations += 1;
            log << detail::log_record(episode, last_mean_loss, &val) << "\n";
            if (best.improves(val)) {
                best.update(val, episode);
                result.best = CheckpointData::capture(model.params(), opt, config_snapshot);
                result.best_val_mae = val.mae;
                result.best_val_icc = val.icc.defined ? val.icc.value : 0.0;
                result.best_episode = episode;
            }
        }
    }

    if (!best.has) {
        // No validation ran (episodes < eval_every); keep the final state.
        result.best = CheckpointData::capture(model.params(), opt, config_snapshot);
        result.best_episode = tc.episodes;
    }
    result.log = log.str();
    return result;
}

// Conventional batch-training baseline: the train videos are shuffled into
// batches of `batch_size` queries; each batch gets one fresh sample set,
// all its videos are embedded jointly, and the mean query loss drives one
// update. Episode/eval counters are scaled so one "episode" equals one
// query, which keeps update counts comparable with episode training.
inline TrainResult train_batch_mode(Model& model, const FeatureStore& store,
                                    const TrialSplit& trial, const TrainConfig& tc,
                                    const std::string& config_snapshot) {
    const Dataset& ds = store.dataset();
    Rng init_rng(derive_seed(tc.seed, "init"));
    model.init(init_rng);
    OptimizerState opt = OptimizerState::for_params(model.params());
    model.params().zero_grads();

    Rng train_rng(derive_seed(tc.seed, "train"));
    Rng val_rng(derive_seed(tc.seed, "val_sets"));
    const auto val_sets = sample_eval_sets(ds, trial.train, tc.eval_sample_sets, val_rng);

    const int updates = std::max(1, tc.episodes / tc.accumulate_every);
    const int eval_every_updates = std::max(1, tc.eval_every / tc.accumulate_every);

    TrainResult result;
    std::ostringstream log;
    detail::BestTracker best;

    std::vector<std::string> queue; // epoch-wise random partition into batches
    std::size_t queue_at = 0;

    for (int update = 1; update <= updates; ++update) {
        std::vector<std::string> queries;
        for (int b = 0; b < tc.batch_size; ++b) {
            if (queue_at >= queue.size()) {
                queue = trial.train;
                train_rng.shuffle(queue);
                queue_at = 0;
            }
            queries.push_back(queue[queue_at++]);
        }
        const auto sets = sample_eval_sets(ds, trial.train, 1, train_rng);
        const auto& sample_ids = sets.front();

        std::vector<FrameMatrix> videos;
        videos.reserve(queries.size() + sample_ids.size());
        for (const auto& id : queries) {
            videos.push_back(detail::augmented(store, id, tc.noise_sigma, train_rng));
        }
        for (const auto& id : sample_ids) {
            videos.push_back(detail::augmented(store, id, tc.noise_sigma, train_rng));
        }

        EmbedTranscript et;
        const auto vecs = model.embed_batch(videos, Mode::kTrain, &train_rng, et);
        std::vector<Eigen::VectorXd> sample_vecs(vecs.begin() + static_cast<long>(queries.size()),
                                                 vecs.end());

        double batch_loss = 0.0;
        std::vector<Eigen::VectorXd> dvecs(videos.size(),
                                           Eigen::VectorXd::Zero(model.spec().vector_dim()));
        for (std::size_t qi = 0; qi < queries.size(); ++qi) {
            std::vector<CompareTranscript> cts;
            std::vector<MlpTranscript> mts;
            const EpisodeProbs probs = model.episode_probs(vecs[qi], sample_vecs, cts, mts);
            const LossResult loss =
                wbce_loss(probs, ds.by_id(queries[qi]).vas, tc.weighted_loss);
            batch_loss += loss.loss;

            Eigen::VectorXd dquery;
            std::vector<Eigen::VectorXd> dsamples;
            // Mean loss over the batch.
            Eigen::VectorXd dscores = loss.dscores / static_cast<double>(queries.size());
            model.relation_backward(cts, mts, dscores, dquery, dsamples);
            dvecs[qi] += dquery;
            for (int c = 0; c < kNumClasses; ++c) {
                dvecs[queries.size() + static_cast<std::size_t>(c)] +=
                    dsamples[static_cast<std::size_t>(c)];
            }
        }
        batch_loss /= static_cast<double>(queries.size());
        if (!std::isfinite(batch_loss)) {
            throw Error::numeric("non-finite loss at update " + std::to_string(update));
        }
        model.embed_backward(et, dvecs);

        clip_global_norm(model.params(), tc.clip);
        adam_step(model.params(), opt, tc.lr);
        model.params().zero_grads();
        result.optimizer_steps += 1;
        if (result.optimizer_steps == 1) result.first_update_loss = batch_loss;
        result.last_update_loss = batch_loss;

        const int episode_equiv = update * tc.accumulate_every;
        if (update % eval_every_updates == 0) {
            const auto val_embeds = embed_sample_sets(model, store, val_sets);
            const EvalMetrics val = evaluate_queries(model, store, trial.validation, val_embeds);
            result.validations += 1;
            log << detail::log_record(episode_equiv, batch_loss, &val) << "\n";
            if (best.improves(val)) {
                best.update(val, episode_equiv);
                result.best = CheckpointData::capture(model.params(), opt, config_snapshot);
                result.best_val_mae = val.mae;
                result.best_val_icc = val.icc.defined ? val.icc.value : 0.0;
                result.best_episode = episode_equiv;
            }
        } else {
            log << detail::log_record(episode_equiv, batch_loss, nullptr) << "\n";
        }
    }

    if (!best.has) {
        result.best = CheckpointData::capture(model.params(), opt, config_snapshot);
        result.best_episode = updates * tc.accumulate_every;
    }
    result.log = log.str();
    return result;
}

// Dispatch on the configured training regime.
inline TrainResult run_training(Model& model, const FeatureStore& store, const TrialSplit& trial,
                                const TrainConfig& tc, const std::string& config_snapshot) {
    return tc.episode_mode ? train(model, store, trial, tc, config_snapshot)
                           : train_batch_mode(model, store, trial, tc, config_snapshot);
}

} // namespace painnet
