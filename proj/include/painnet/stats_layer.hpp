#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "painnet/error.hpp"

namespace painnet {

enum class StatOp { kMean, kMedian, kStd, kLse, kMin, kMax };

inline StatOp parse_stat_op(const std::string& name) {
    if (name == "mean") return StatOp::kMean;
    if (name == "median") return StatOp::kMedian;
    if (name == "std") return StatOp::kStd;
    if (name == "lse") return StatOp::kLse;
    if (name == "min") return StatOp::kMin;
    if (name == "max") return StatOp::kMax;
    throw Error::config("unknown statistical operator '" + name + "'");
}

inline std::string stat_op_name(StatOp op) {
    switch (op) {
        case StatOp::kMean: return "mean";
        case StatOp::kMedian: return "median";
        case StatOp::kStd: return "std";
        case StatOp::kLse: return "lse";
        case StatOp::kMin: return "min";
        case StatOp::kMax: return "max";
    }
    return "?";
}

// Everything the backward pass needs: the pooled input and, per column,
// the derived quantities for each operator's subgradient routing.
struct StatTranscript {
    Eigen::MatrixXd q;                        // M x d
    std::vector<StatOp> ops;
    Eigen::RowVectorXd mean;                  // 1 x d
    Eigen::RowVectorXd std_dev;               // 1 x d (population)
    Eigen::RowVectorXd lse;                   // 1 x d
    std::vector<std::vector<Eigen::Index>> order; // per column, stable sort indices
    std::vector<Eigen::Index> argmin;         // first-occurring extrema
    std::vector<Eigen::Index> argmax;
};

// Per-column pooling of the M x d segment-embedding matrix into one row per
// operator. std uses the population divisor M; lse is computed max-shifted;
// the median of an even count averages the two middle order statistics.
inline Eigen::MatrixXd statistical_layer(const Eigen::MatrixXd& q, const std::vector<StatOp>& ops,
                                         StatTranscript& transcript) {
    const Eigen::Index m = q.rows();
    const Eigen::Index d = q.cols();
    if (m < 1) throw Error::data("statistical layer needs at least one segment");
    if (ops.empty()) throw Error::config("statistical layer needs at least one operator");

    transcript.q = q;
    transcript.ops = ops;
    transcript.mean = q.colwise().mean();
    transcript.std_dev =
        ((q.rowwise() - transcript.mean).array().square().colwise().sum() / static_cast<double>(m))
            .sqrt();
    transcript.lse.resize(d);
    transcript.order.assign(static_cast<std::size_t>(d), {});
    transcript.argmin.assign(static_cast<std::size_t>(d), 0);
    transcript.argmax.assign(static_cast<std::size_t>(d), 0);

    for (Eigen::Index i = 0; i < d; ++i) {
        const double column_max = q.col(i).maxCoeff();
        transcript.lse(i) = column_max + std::log((q.col(i).array() - column_max).exp().sum());

        auto& order = transcript.order[static_cast<std::size_t>(i)];
        order.resize(static_cast<std::size_t>(m));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](Eigen::Index a, Eigen::Index b) { return q(a, i) < q(b, i); });

        Eigen::Index lo = 0, hi = 0;
        for (Eigen::Index r = 1; r < m; ++r) {
            if (q(r, i) < q(lo, i)) lo = r;
            if (q(r, i) > q(hi, i)) hi = r;
        }
        transcript.argmin[static_cast<std::size_t>(i)] = lo;
        transcript.argmax[static_cast<std::size_t>(i)] = hi;
    }

    Eigen::MatrixXd s(static_cast<Eigen::Index>(ops.size()), d);
    for (std::size_t k = 0; k < ops.size(); ++k) {
        for (Eigen::Index i = 0; i < d; ++i) {
            const auto& order = transcript.order[static_cast<std::size_t>(i)];
            double v = 0.0;
            switch (ops[k]) {
                case StatOp::kMean: v = transcript.mean(i); break;
                case StatOp::kMedian:
                    if (m % 2 == 1) {
                        v = q(order[static_cast<std::size_t>(m / 2)], i);
                    } else {
                        v = 0.5 * (q(order[static_cast<std::size_t>(m / 2 - 1)], i) +
                                   q(order[static_cast<std::size_t>(m / 2)], i));
                    }
                    break;
                case StatOp::kStd: v = transcript.std_dev(i); break;
                case StatOp::kLse: v = transcript.lse(i); break;
                case StatOp::kMin: v = q(transcript.argmin[static_cast<std::size_t>(i)], i); break;
                case StatOp::kMax: v = q(transcript.argmax[static_cast<std::size_t>(i)], i); break;
            }
            s(static_cast<Eigen::Index>(k), i) = v;
        }
    }
    return s;
}

// Subgradients per operator: mean spreads upstream/M; std scales centered
// values with a 1e-8 floor on the denominator; lse uses the column softmax;
// median/min/max route to their selected order statistics (even-M median
// splits 0.5/0.5; value ties resolve to the lower original index).
inline Eigen::MatrixXd statistical_layer_backward(const StatTranscript& transcript,
                                                  const Eigen::MatrixXd& upstream) {
    const Eigen::Index m = transcript.q.rows();
    const Eigen::Index d = transcript.q.cols();
    const auto ops = transcript.ops;
    if (upstream.rows() != static_cast<Eigen::Index>(ops.size()) || upstream.cols() != d) {
        throw Error::data("statistical layer upstream shape mismatch");
    }

    Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(m, d);
    for (std::size_t k = 0; k < ops.size(); ++k) {
        for (Eigen::Index i = 0; i < d; ++i) {
            const double u = upstream(static_cast<Eigen::Index>(k), i);
            if (u == 0.0) continue;
            const auto& order = transcript.order[static_cast<std::size_t>(i)];
            switch (ops[k]) {
                case StatOp::kMean:
                    dq.col(i).array() += u / static_cast<double>(m);
                    break;
                case StatOp::kMedian:
                    if (m % 2 == 1) {
                        dq(order[static_cast<std::size_t>(m / 2)], i) += u;
                    } else {
                        dq(order[static_cast<std::size_t>(m / 2 - 1)], i) += 0.5 * u;
                        dq(order[static_cast<std::size_t>(m / 2)], i) += 0.5 * u;
                    }
                    break;
                case StatOp::kStd: {
                    const double denom =
                        static_cast<double>(m) * std::max(transcript.std_dev(i), 1e-8);
                    dq.col(i) += (u / denom) * (transcript.q.col(i).array() - transcript.mean(i)).matrix();
                    break;
                }
                case StatOp::kLse:
                    dq.col(i) +=
                        u * (transcript.q.col(i).array() - transcript.lse(i)).exp().matrix();
                    break;
                case StatOp::kMin:
                    dq(transcript.argmin[static_cast<std::size_t>(i)], i) += u;
                    break;
                case StatOp::kMax:
                    dq(transcript.argmax[static_cast<std::size_t>(i)], i) += u;
                    break;
            }
        }
    }
    return dq;
}

} // namespace painnet
