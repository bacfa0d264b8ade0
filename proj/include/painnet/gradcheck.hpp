#pragma once

#include <memory>
#include <string>
#include <vector>

#include "painnet/batchnorm.hpp"
#include "painnet/diffcore.hpp"
#include "painnet/gru.hpp"
#include "painnet/loss.hpp"
#include "painnet/relation.hpp"
#include "painnet/stats_layer.hpp"

namespace painnet {

// FdProblem builders for every differentiable layer. Each problem owns its
// state; `backward` re-runs the forward to populate a fresh transcript,
// zeroes the touched gradient buffers and fills them for the given
// upstream.
namespace gradcheck {

inline Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo,
                                     double hi) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(lo, hi);
    }
    return m;
}

inline void add_tensor(FdProblem& p, ParamTensor& t) {
    detail::collect_matrix(t.value, t.grad, p.param_values, p.param_grads);
}

inline FdProblem make_gru_problem(Rng& rng, const std::string& name, Eigen::Index input,
                                  Eigen::Index hidden, Eigen::Index steps) {
    struct State {
        GruCell cell{"g", 1, 1};
        Eigen::MatrixXd x, dx;
    };
    auto st = std::make_shared<State>();
    st->cell = GruCell("g", input, hidden);
    st->cell.init(rng);
    st->x = random_matrix(rng, steps, input, -1.0, 1.0);
    st->dx = Eigen::MatrixXd::Zero(steps, input);

    FdProblem p;
    p.name = name;
    p.forward = [st]() {
        GruTranscript t;
        return gru_forward(st->cell, st->x, t);
    };
    p.backward = [st](const Eigen::VectorXd& upstream) {
        for (ParamTensor* t : {&st->cell.wz, &st->cell.uz, &st->cell.bz, &st->cell.wr,
                               &st->cell.ur, &st->cell.br, &st->cell.wn, &st->cell.un,
                               &st->cell.bn}) {
            t->zero_grad();
        }
        GruTranscript t;
        gru_forward(st->cell, st->x, t);
        gru_backward(st->cell, t, upstream, st->dx);
    };
    detail::collect_matrix(st->x, st->dx, p.input_values, p.input_grads);
    for (ParamTensor* t : {&st->cell.wz, &st->cell.uz, &st->cell.bz, &st->cell.wr, &st->cell.ur,
                           &st->cell.br, &st->cell.wn, &st->cell.un, &st->cell.bn}) {
        add_tensor(p, *t);
    }
    return p;
}

inline FdProblem make_batchnorm_problem(Rng& rng, Eigen::Index batch, Eigen::Index features) {
    struct State {
        BatchNorm bn{"bn", 1, 0.1, 1e-5};
        Eigen::MatrixXd x, dx;
    };
    auto st = std::make_shared<State>();
    st->bn = BatchNorm("bn", features, 0.1, 1e-5);
    st->bn.gamma.value = random_matrix(rng, features, 1, 0.5, 1.5);
    st->bn.beta.value = random_matrix(rng, features, 1, -0.5, 0.5);
    st->x = random_matrix(rng, batch, features, -2.0, 2.0);
    st->dx = Eigen::MatrixXd::Zero(batch, features);

    FdProblem p;
    p.name = "batchnorm";
    p.forward = [st]() {
        BatchNormTranscript t;
        const Eigen::MatrixXd y =
            batchnorm_forward(st->bn, st->x, Mode::kTrain, t, /*update_running=*/false);
        return Eigen::VectorXd(y.reshaped());
    };
    p.backward = [st](const Eigen::VectorXd& upstream) {
        st->bn.gamma.zero_grad();
        st->bn.beta.zero_grad();
        BatchNormTranscript t;
        batchnorm_forward(st->bn, st->x, Mode::kTrain, t, /*update_running=*/false);
        Eigen::MatrixXd dy = upstream.reshaped(st->x.rows(), st->x.cols());
        st->dx = batchnorm_backward(st->bn, t, dy);
    };
    detail::collect_matrix(st->x, st->dx, p.input_values, p.input_grads);
    add_tensor(p, st->bn.gamma);
    add_tensor(p, st->bn.beta);
    return p;
}

// Random pooling input with degenerate points excluded: each column keeps a
// pairwise value gap above 2e-6 (no order-statistic ties nearby) and a
// standard deviation above 1e-6.
inline Eigen::MatrixXd random_stat_input(Rng& rng, Eigen::Index m, Eigen::Index d) {
    Eigen::MatrixXd q(m, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        while (true) {
            for (Eigen::Index i = 0; i < m; ++i) q(i, j) = rng.uniform(-1.0, 1.0);
            bool ok = true;
            for (Eigen::Index a = 0; a < m && ok; ++a) {
                for (Eigen::Index b = a + 1; b < m && ok; ++b) {
                    if (std::abs(q(a, j) - q(b, j)) < 2e-6) ok = false;
                }
            }
            const double mean = q.col(j).mean();
            const double sd = std::sqrt((q.col(j).array() - mean).square().mean());
            if (ok && sd > 1e-6) break;
        }
    }
    return q;
}

inline FdProblem make_stats_problem(Rng& rng, const std::vector<StatOp>& ops, Eigen::Index m,
                                    Eigen::Index d, const std::string& name = "stat_layer") {
    struct State {
        std::vector<StatOp> ops;
        Eigen::MatrixXd q, dq;
    };
    auto st = std::make_shared<State>();
    st->ops = ops;
    st->q = random_stat_input(rng, m, d);
    st->dq = Eigen::MatrixXd::Zero(m, d);

    FdProblem p;
    p.name = name;
    p.forward = [st]() {
        StatTranscript t;
        const Eigen::MatrixXd s = statistical_layer(st->q, st->ops, t);
        return Eigen::VectorXd(s.reshaped());
    };
    p.backward = [st](const Eigen::VectorXd& upstream) {
        StatTranscript t;
        const Eigen::MatrixXd s = statistical_layer(st->q, st->ops, t);
        const Eigen::MatrixXd up = upstream.reshaped(s.rows(), s.cols());
        st->dq = statistical_layer_backward(t, up);
    };
    detail::collect_matrix(st->q, st->dq, p.input_values, p.input_grads);
    return p;
}

inline FdProblem make_compare_problem(Rng& rng, Comparison variant, Eigen::Index n) {
    struct State {
        Comparison variant;
        std::unique_ptr<ComparisonNet> net;
        Eigen::VectorXd a, b, da, db;
    };
    auto st = std::make_shared<State>();
    st->variant = variant;
    if (variant == Comparison::kNn || variant == Comparison::kSubMultNn) {
        st->net = std::make_unique<ComparisonNet>("comp", n);
        st->net->init(rng);
    }
    st->a = random_matrix(rng, n, 1, -1.0, 1.0).col(0);
    st->b = random_matrix(rng, n, 1, -1.0, 1.0).col(0);
    st->da = Eigen::VectorXd::Zero(n);
    st->db = Eigen::VectorXd::Zero(n);

    FdProblem p;
    p.name = "compare_" + comparison_name(variant);
    p.forward = [st]() {
        CompareTranscript t;
        return compare(st->a, st->b, st->variant, st->net.get(), t);
    };
    p.backward = [st](const Eigen::VectorXd& upstream) {
        if (st->net) {
            st->net->w.zero_grad();
            st->net->b.zero_grad();
        }
        CompareTranscript t;
        compare(st->a, st->b, st->variant, st->net.get(), t);
        compare_backward(t, upstream, st->net.get(), st->da, st->db);
    };
    detail::collect_matrix(st->a, st->da, p.input_values, p.input_grads);
    detail::collect_matrix(st->b, st->db, p.input_values, p.input_grads);
    if (st->net) {
        add_tensor(p, st->net->w);
        add_tensor(p, st->net->b);
    }
    return p;
}

inline FdProblem make_mlp_problem(Rng& rng, Eigen::Index comp_dim) {
    struct State {
        RelationMlp mlp{2};
        Eigen::VectorXd c, dc;
    };
    auto st = std::make_shared<State>();
    st->mlp = RelationMlp(comp_dim);
    st->mlp.init(rng);
    st->c = random_matrix(rng, comp_dim, 1, -1.0, 1.0).col(0);
    st->dc = Eigen::VectorXd::Zero(comp_dim);

    FdProblem p;
    p.name = "relation_mlp";
    p.forward = [st]() {
        MlpTranscript t;
        return Eigen::VectorXd::Constant(1, relation_score(st->mlp, st->c, t));
    };
    p.backward = [st](const Eigen::VectorXd& upstream) {
        for (ParamTensor* t : {&st->mlp.w1, &st->mlp.b1, &st->mlp.w2, &st->mlp.b2}) t->zero_grad();
        MlpTranscript t;
        relation_score(st->mlp, st->c, t);
        st->dc = relation_score_backward(st->mlp, t, upstream(0));
    };
    detail::collect_matrix(st->c, st->dc, p.input_values, p.input_grads);
    for (ParamTensor* t : {&st->mlp.w1, &st->mlp.b1, &st->mlp.w2, &st->mlp.b2}) add_tensor(p, *t);
    return p;
}

// Softmax + weighted BCE head over 11 relation scores.
inline FdProblem make_loss_head_problem(Rng& rng, bool weighted) {
    struct State {
        Eigen::VectorXd scores, dscores;
        int t_label = 0;
        bool weighted = true;
    };
    auto st = std::make_shared<State>();
    st->scores = random_matrix(rng, kNumClasses, 1, -2.0, 2.0).col(0);
    st->dscores = Eigen::VectorXd::Zero(kNumClasses);
    st->t_label = rng.uniform_int(0, kNumClasses - 1);
    st->weighted = weighted;

    FdProblem p;
    p.name = weighted ? "softmax_wbce" : "softmax_bce";
    p.forward = [st]() {
        const EpisodeProbs probs = softmax_probs(st->scores);
        return Eigen::VectorXd::Constant(1, wbce_loss(probs, st->t_label, st->weighted).loss);
    };
    p.backward = [st](const Eigen::VectorXd& upstream) {
        const EpisodeProbs probs = softmax_probs(st->scores);
        st->dscores = upstream(0) * wbce_loss(probs, st->t_label, st->weighted).dscores;
    };
    detail::collect_matrix(st->scores, st->dscores, p.input_values, p.input_grads);
    return p;
}

// Full relation path: compare -> relation MLP -> softmax -> weighted BCE,
// for a query vector against 11 sample vectors.
inline FdProblem make_relation_composite_problem(Rng& rng, Comparison variant, Eigen::Index n) {
    struct State {
        Comparison variant;
        std::unique_ptr<ComparisonNet> net;
        RelationMlp mlp{2};
        Eigen::MatrixXd vecs, dvecs; // row 0 = query, rows 1..11 = samples
        int t_label = 0;

        double run(bool do_backward) {
            std::vector<CompareTranscript> cts(kNumClasses);
            std::vector<MlpTranscript> mts(kNumClasses);
            Eigen::VectorXd scores(kNumClasses);
            const Eigen::VectorXd query = vecs.row(0).transpose();
            for (int c = 0; c < kNumClasses; ++c) {
                const Eigen::VectorXd sample = vecs.row(c + 1).transpose();
                const Eigen::VectorXd comp = compare(query, sample, variant, net.get(),
                                                     cts[static_cast<std::size_t>(c)]);
                scores(c) = relation_score(mlp, comp, mts[static_cast<std::size_t>(c)]);
            }
            const EpisodeProbs probs = softmax_probs(scores);
            const LossResult loss = wbce_loss(probs, t_label, true);
            if (do_backward) {
                dvecs.setZero();
                for (int c = 0; c < kNumClasses; ++c) {
                    const Eigen::VectorXd dcomp = relation_score_backward(
                        mlp, mts[static_cast<std::size_t>(c)], loss.dscores(c));
                    Eigen::VectorXd da, db;
                    compare_backward(cts[static_cast<std::size_t>(c)], dcomp, net.get(), da, db);
                    dvecs.row(0) += da.transpose();
                    dvecs.row(c + 1) += db.transpose();
                }
            }
            return loss.loss;
        }
    };
    auto st = std::make_shared<State>();
    st->variant = variant;
    if (variant == Comparison::kNn || variant == Comparison::kSubMultNn) {
        st->net = std::make_unique<ComparisonNet>("comp", n);
        st->net->init(rng);
    }
    st->mlp = RelationMlp(comparison_dim(variant, n));
    st->mlp.init(rng);
    st->vecs = random_matrix(rng, kNumClasses + 1, n, -1.0, 1.0);
    st->dvecs = Eigen::MatrixXd::Zero(kNumClasses + 1, n);
    st->t_label = rng.uniform_int(0, kNumClasses - 1);

    FdProblem p;
    p.name = "composite_" + comparison_name(variant);
    p.forward = [st]() { return Eigen::VectorXd::Constant(1, st->run(false)); };
    p.backward = [st](const Eigen::VectorXd& upstream) {
        for (ParamTensor* t : {&st->mlp.w1, &st->mlp.b1, &st->mlp.w2, &st->mlp.b2}) t->zero_grad();
        if (st->net) {
            st->net->w.zero_grad();
            st->net->b.zero_grad();
        }
        st->run(true);
        st->dvecs *= upstream(0);
        for (ParamTensor* t : {&st->mlp.w1, &st->mlp.b1, &st->mlp.w2, &st->mlp.b2}) {
            t->grad *= upstream(0);
        }
        if (st->net) {
            st->net->w.grad *= upstream(0);
            st->net->b.grad *= upstream(0);
        }
    };
    detail::collect_matrix(st->vecs, st->dvecs, p.input_values, p.input_grads);
    for (ParamTensor* t : {&st->mlp.w1, &st->mlp.b1, &st->mlp.w2, &st->mlp.b2}) add_tensor(p, *t);
    if (st->net) {
        add_tensor(p, st->net->w);
        add_tensor(p, st->net->b);
    }
    return p;
}

// The full battery, one fresh problem per layer per seed.
inline std::vector<CheckReport> run_all(int seeds, double step, double tol,
                                        std::uint64_t base_seed = 1234) {
    std::vector<CheckReport> reports;
    static const std::vector<StatOp> all_ops = {StatOp::kMean, StatOp::kMedian, StatOp::kStd,
                                                StatOp::kLse, StatOp::kMin, StatOp::kMax};
    for (int s = 0; s < seeds; ++s) {
        Rng rng(derive_seed(base_seed, "gradcheck" + std::to_string(s)));
        std::vector<FdProblem> problems;
        problems.push_back(make_gru_problem(rng, "gru_cell", 6, 5, 7));
        problems.push_back(make_gru_problem(rng, "stacked_gru_summarizer", 5, 5, 4));
        problems.push_back(make_batchnorm_problem(rng, 7, 4));
        problems.push_back(make_stats_problem(rng, all_ops, 6, 4));
        for (Comparison variant : {Comparison::kEucCos, Comparison::kSubt, Comparison::kMult,
                                   Comparison::kNn, Comparison::kSubMultNn}) {
            problems.push_back(make_compare_problem(rng, variant, 8));
        }
        problems.push_back(make_mlp_problem(rng, 8));
        problems.push_back(make_loss_head_problem(rng, true));
        problems.push_back(make_loss_head_problem(rng, false));
        for (Comparison variant : {Comparison::kEucCos, Comparison::kSubt, Comparison::kMult,
                                   Comparison::kNn, Comparison::kSubMultNn}) {
            problems.push_back(make_relation_composite_problem(rng, variant, 6));
        }
        for (auto& p : problems) {
            CheckReport r = fd_check(p, step, tol, rng);
            // Merge across seeds: keep the worst error per layer name.
            auto it = std::find_if(reports.begin(), reports.end(),
                                   [&](const CheckReport& existing) { return existing.name == r.name; });
            if (it == reports.end()) {
                reports.push_back(r);
            } else {
                it->max_rel_err_input = std::max(it->max_rel_err_input, r.max_rel_err_input);
                it->max_rel_err_param = std::max(it->max_rel_err_param, r.max_rel_err_param);
                it->pass = it->pass && r.pass;
            }
        }
    }
    return reports;
}

} // namespace gradcheck
} // namespace painnet
