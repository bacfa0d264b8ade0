#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "painnet/batchnorm.hpp"
#include "painnet/config.hpp"
#include "painnet/diffcore.hpp"
#include "painnet/features.hpp"
#include "painnet/gru.hpp"
#include "painnet/loss.hpp"
#include "painnet/relation.hpp"
#include "painnet/rng.hpp"
#include "painnet/stats_layer.hpp"

namespace painnet {

enum class Summarizer { kStats, kStackedGru };

// Structural hyperparameters, resolved from a RunConfig.
struct ModelSpec {
    Eigen::Index input_dim = 20;   // number of AU columns
    Eigen::Index hidden = 16;      // GRU size d
    int seg_len = 16;
    std::vector<StatOp> ops = {StatOp::kMean, StatOp::kStd, StatOp::kLse, StatOp::kMedian};
    Summarizer summarizer = Summarizer::kStats;
    double dropout_p = 0.5;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
    Comparison comparison = Comparison::kEucCos;

    static ModelSpec from_config(const RunConfig& config) {
        ModelSpec spec;
        spec.input_dim = static_cast<Eigen::Index>(config.au_columns().size());
        spec.hidden = config.get_int("gru.hidden");
        spec.seg_len = static_cast<int>(config.get_int("segment.length"));
        spec.ops = config.stat_ops();
        spec.summarizer = config.get("embedding.summarizer") == "stacked_gru"
                              ? Summarizer::kStackedGru
                              : Summarizer::kStats;
        spec.dropout_p = config.get_double("dropout.p");
        spec.bn_momentum = config.get_double("bn.momentum");
        spec.bn_eps = config.get_double("bn.eps");
        spec.comparison = config.comparison();
        return spec;
    }

    // Length of the video-level embedding.
    Eigen::Index vector_dim() const {
        return summarizer == Summarizer::kStats
                   ? static_cast<Eigen::Index>(ops.size()) * hidden
                   : hidden;
    }
};

// Per-batch forward transcript of the embedding module.
struct EmbedTranscript {
    std::vector<std::vector<GruTranscript>> gru;   // [video][segment]
    std::vector<Eigen::MatrixXd> dropout_mask;     // per video, M x d (train only)
    BatchNormTranscript bn_seg;
    std::vector<Eigen::Index> rows;                // segments per video
    std::vector<StatTranscript> stats;             // per video (stats summarizer)
    std::vector<GruTranscript> gru2;               // per video (stacked_gru summarizer)
    BatchNormTranscript bn_vec;
    Mode mode = Mode::kEval;
};

struct EpisodeTranscript {
    EmbedTranscript embed;
    std::vector<CompareTranscript> compare;        // one per class
    std::vector<MlpTranscript> mlp;                // one per class
    EpisodeProbs probs;
};

// The full PainNet model: embedding module (GRU over 16-frame segments,
// dropout, batch norm, statistical pooling, batch norm) and relation module
// (comparison layer + two-layer MLP). Parameters are registered in a fixed
// order; gradients accumulate until explicitly zeroed.
class Model {
public:
    explicit Model(const ModelSpec& spec)
        : spec_(spec),
          gru_("gru", spec.input_dim, spec.hidden),
          bn_seg_("bn_seg", spec.hidden, spec.bn_momentum, spec.bn_eps),
          bn_vec_("bn_vec", spec.vector_dim(), spec.bn_momentum, spec.bn_eps),
          mlp_(comparison_dim(spec.comparison, spec.vector_dim())) {
        gru_.register_params(params_);
        if (spec.summarizer == Summarizer::kStackedGru) {
            gru2_ = std::make_unique<GruCell>("gru2", spec.hidden, spec.hidden);
            gru2_->register_params(params_);
        }
        bn_seg_.register_params(params_);
        bn_vec_.register_params(params_);
        if (spec.comparison == Comparison::kNn || spec.comparison == Comparison::kSubMultNn) {
            comp_net_ = std::make_unique<ComparisonNet>("comp", spec.vector_dim());
            comp_net_->register_params(params_);
        }
        mlp_.register_params(params_);
    }

    // The registry points at member tensors; relocation would dangle it.
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = delete;
    Model& operator=(Model&&) = delete;

    const ModelSpec& spec() const { return spec_; }
    ModelParams& params() { return params_; }
    const ModelParams& params() const { return params_; }
    GruCell& gru() { return gru_; }
    GruCell* gru2() { return gru2_.get(); }
    BatchNorm& bn_seg() { return bn_seg_; }
    BatchNorm& bn_vec() { return bn_vec_; }
    ComparisonNet* comp_net() { return comp_net_.get(); }
    RelationMlp& mlp() { return mlp_; }

    void init(Rng& rng) {
        gru_.init(rng);
        if (gru2_) gru2_->init(rng);
        if (comp_net_) comp_net_->init(rng);
        mlp_.init(rng);
    }

    // Embeds a batch of centered (optionally noise-augmented) videos. In
    // train mode dropout is sampled from `rng` and both batch norms use
    // statistics over the whole batch, so the vectors of one episode are
    // normalized jointly; in eval mode each video is a pure function of the
    // parameters and running statistics.
    std::vector<Eigen::VectorXd> embed_batch(const std::vector<FrameMatrix>& videos, Mode mode,
                                             Rng* rng, EmbedTranscript& transcript,
                                             bool update_running = true) {
        if (videos.empty()) throw Error::data("embed_batch needs at least one video");
        transcript.mode = mode;
        transcript.gru.clear();
        transcript.dropout_mask.clear();
        transcript.rows.clear();
        transcript.stats.clear();
        transcript.gru2.clear();

        const Eigen::Index d = spec_.hidden;
        Eigen::Index total_rows = 0;
        std::vector<Eigen::MatrixXd> seg_embeddings; // per video, M x d
        for (const auto& video : videos) {
            auto segs = segment(video, spec_.seg_len);
            Eigen::MatrixXd h(static_cast<Eigen::Index>(segs.size()), d);
            std::vector<GruTranscript> ts(segs.size());
            for (std::size_t s = 0; s < segs.size(); ++s) {
                h.row(static_cast<Eigen::Index>(s)) = gru_forward(gru_, segs[s], ts[s]).transpose();
            }
            transcript.gru.push_back(std::move(ts));
            transcript.rows.push_back(h.rows());
            total_rows += h.rows();
            seg_embeddings.push_back(std::move(h));
        }

        if (mode == Mode::kTrain && spec_.dropout_p > 0.0) {
            if (rng == nullptr) throw Error::data("train-mode embedding needs an rng");
            const double keep = 1.0 - spec_.dropout_p;
            for (auto& h : seg_embeddings) {
                Eigen::MatrixXd mask(h.rows(), h.cols());
                for (Eigen::Index i = 0; i < h.rows(); ++i) {
                    for (Eigen::Index j = 0; j < h.cols(); ++j) {
                        mask(i, j) = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
                    }
                }
                h = h.cwiseProduct(mask);
                transcript.dropout_mask.push_back(std::move(mask));
            }
        }

        // Batch norm over every segment embedding in the batch.
        Eigen::MatrixXd stacked(total_rows, d);
        Eigen::Index at = 0;
        for (const auto& h : seg_embeddings) {
            stacked.middleRows(at, h.rows()) = h;
            at += h.rows();
        }
        stacked = batchnorm_forward(bn_seg_, stacked, mode, transcript.bn_seg, update_running);

        // Summarize each video into one vector.
        Eigen::MatrixXd vecs(static_cast<Eigen::Index>(videos.size()), spec_.vector_dim());
        at = 0;
        for (std::size_t v = 0; v < videos.size(); ++v) {
            const Eigen::MatrixXd q = stacked.middleRows(at, transcript.rows[v]);
            at += transcript.rows[v];
            if (spec_.summarizer == Summarizer::kStats) {
                StatTranscript st;
                const Eigen::MatrixXd s = statistical_layer(q, spec_.ops, st);
                transcript.stats.push_back(std::move(st));
                // Row-major flatten: operator-major blocks of d values.
                Eigen::Index col = 0;
                for (Eigen::Index r = 0; r < s.rows(); ++r) {
                    vecs.block(static_cast<Eigen::Index>(v), col, 1, d) = s.row(r);
                    col += d;
                }
            } else {
                GruTranscript t2;
                vecs.row(static_cast<Eigen::Index>(v)) = gru_forward(*gru2_, q, t2).transpose();
                transcript.gru2.push_back(std::move(t2));
            }
        }

        // Batch norm over the video vectors of the batch.
        vecs = batchnorm_forward(bn_vec_, vecs, mode, transcript.bn_vec, update_running);

        std::vector<Eigen::VectorXd> out;
        out.reserve(videos.size());
        for (std::size_t v = 0; v < videos.size(); ++v) {
            out.push_back(vecs.row(static_cast<Eigen::Index>(v)).transpose());
        }
        return out;
    }

    // Convenience single-video embedding (batch of one).
    Eigen::VectorXd embed_video(const FrameMatrix& video, Mode mode, Rng* rng,
                                EmbedTranscript& transcript) {
        return embed_batch({video}, mode, rng, transcript).front();
    }

    // Backward through the embedding batch; accumulates parameter gradients.
    void embed_backward(const EmbedTranscript& transcript,
                        const std::vector<Eigen::VectorXd>& dvecs) {
        const Eigen::Index d = spec_.hidden;
        const auto batch = static_cast<Eigen::Index>(dvecs.size());

        Eigen::MatrixXd dvec_mat(batch, spec_.vector_dim());
        for (Eigen::Index v = 0; v < batch; ++v) dvec_mat.row(v) = dvecs[static_cast<std::size_t>(v)].transpose();
        dvec_mat = batchnorm_backward(bn_vec_, transcript.bn_vec, dvec_mat);

        Eigen::Index total_rows = 0;
        for (auto r : transcript.rows) total_rows += r;
        Eigen::MatrixXd dstacked(total_rows, d);
        Eigen::Index at = 0;
        for (Eigen::Index v = 0; v < batch; ++v) {
            const Eigen::Index m = transcript.rows[static_cast<std::size_t>(v)];
            if (spec_.summarizer == Summarizer::kStats) {
                // Un-flatten the upstream vector into the k x d stat matrix.
                const auto k = static_cast<Eigen::Index>(spec_.ops.size());
                Eigen::MatrixXd upstream(k, d);
                for (Eigen::Index r = 0; r < k; ++r) {
                    upstream.row(r) = dvec_mat.block(v, r * d, 1, d);
                }
                dstacked.middleRows(at, m) = statistical_layer_backward(
                    transcript.stats[static_cast<std::size_t>(v)], upstream);
            } else {
                Eigen::MatrixXd dq;
                gru_backward(*gru2_, transcript.gru2[static_cast<std::size_t>(v)],
                             dvec_mat.row(v).transpose(), dq);
                dstacked.middleRows(at, m) = dq;
            }
            at += m;
        }

        dstacked = batchnorm_backward(bn_seg_, transcript.bn_seg, dstacked);

        at = 0;
        for (Eigen::Index v = 0; v < batch; ++v) {
            const Eigen::Index m = transcript.rows[static_cast<std::size_t>(v)];
            Eigen::MatrixXd dh = dstacked.middleRows(at, m);
            at += m;
            if (transcript.mode == Mode::kTrain && !transcript.dropout_mask.empty()) {
                dh = dh.cwiseProduct(transcript.dropout_mask[static_cast<std::size_t>(v)]);
            }
            for (Eigen::Index s = 0; s < m; ++s) {
                Eigen::MatrixXd dseq;
                gru_backward(gru_, transcript.gru[static_cast<std::size_t>(v)][static_cast<std::size_t>(s)],
                             dh.row(s).transpose(), dseq);
            }
        }
    }

    // Relation scores + softmax for a query against the 11 class vectors.
    EpisodeProbs episode_probs(const Eigen::VectorXd& query_vec,
                               const std::vector<Eigen::VectorXd>& sample_vecs,
                               std::vector<CompareTranscript>& compare_ts,
                               std::vector<MlpTranscript>& mlp_ts) {
        if (sample_vecs.size() != static_cast<std::size_t>(kNumClasses)) {
            throw Error::data("episode needs exactly 11 sample vectors");
        }
        compare_ts.assign(static_cast<std::size_t>(kNumClasses), {});
        mlp_ts.assign(static_cast<std::size_t>(kNumClasses), {});
        Eigen::VectorXd scores(kNumClasses);
        for (int c = 0; c < kNumClasses; ++c) {
            const Eigen::VectorXd comp =
                compare(query_vec, sample_vecs[static_cast<std::size_t>(c)], spec_.comparison,
                        comp_net_.get(), compare_ts[static_cast<std::size_t>(c)]);
            scores(c) = relation_score(mlp_, comp, mlp_ts[static_cast<std::size_t>(c)]);
        }
        return softmax_probs(scores);
    }

    // Backward of the relation head given d(loss)/d(scores); returns the
    // gradients for the query and sample vectors.
    void relation_backward(const std::vector<CompareTranscript>& compare_ts,
                           const std::vector<MlpTranscript>& mlp_ts,
                           const Eigen::VectorXd& dscores, Eigen::VectorXd& dquery,
                           std::vector<Eigen::VectorXd>& dsamples) {
        dquery.setZero(spec_.vector_dim());
        dsamples.assign(static_cast<std::size_t>(kNumClasses),
                        Eigen::VectorXd::Zero(spec_.vector_dim()));
        for (int c = 0; c < kNumClasses; ++c) {
            const Eigen::VectorXd dcomp = relation_score_backward(
                mlp_, mlp_ts[static_cast<std::size_t>(c)], dscores(c));
            Eigen::VectorXd da, db;
            compare_backward(compare_ts[static_cast<std::size_t>(c)], dcomp, comp_net_.get(), da, db);
            dquery += da;
            dsamples[static_cast<std::size_t>(c)] += db;
        }
    }

private:
    ModelSpec spec_;
    ModelParams params_;
    GruCell gru_;
    std::unique_ptr<GruCell> gru2_;
    BatchNorm bn_seg_;
    BatchNorm bn_vec_;
    std::unique_ptr<ComparisonNet> comp_net_;
    RelationMlp mlp_;
};

} // namespace painnet
