#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "painnet/diffcore.hpp"
#include "painnet/error.hpp"

namespace painnet {

enum class Comparison { kEucCos, kSubt, kMult, kNn, kSubMultNn };

inline Comparison parse_comparison(const std::string& name) {
    if (name == "euccos") return Comparison::kEucCos;
    if (name == "subt") return Comparison::kSubt;
    if (name == "mult") return Comparison::kMult;
    if (name == "nn") return Comparison::kNn;
    if (name == "submultnn") return Comparison::kSubMultNn;
    throw Error::config("unknown comparison variant '" + name + "'");
}

inline std::string comparison_name(Comparison c) {
    switch (c) {
        case Comparison::kEucCos: return "euccos";
        case Comparison::kSubt: return "subt";
        case Comparison::kMult: return "mult";
        case Comparison::kNn: return "nn";
        case Comparison::kSubMultNn: return "submultnn";
    }
    return "?";
}

// Output dimension of a comparison variant for embedding dimension n.
inline Eigen::Index comparison_dim(Comparison c, Eigen::Index n) {
    return c == Comparison::kEucCos ? 2 : n;
}

// Learnable map used by the nn / submultnn variants: ReLU(W u + b) with
// u the concatenation of two n-vectors.
struct ComparisonNet {
    ParamTensor w, b;

    ComparisonNet() = default;
    ComparisonNet(const std::string& prefix, Eigen::Index n)
        : w(prefix + ".w", n, 2 * n), b(prefix + ".b", n, 1) {}

    void register_params(ModelParams& params) {
        params.add(&w);
        params.add(&b);
    }

    void init(Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(w.value.cols()));
        for (Eigen::Index j = 0; j < w.value.cols(); ++j) {
            for (Eigen::Index i = 0; i < w.value.rows(); ++i) {
                w.value(i, j) = rng.uniform(-bound, bound);
            }
        }
        b.value.setZero();
    }
};

struct CompareTranscript {
    Comparison variant = Comparison::kEucCos;
    Eigen::VectorXd a, b;
    double dist = 0.0;     // euccos
    double norm_a = 0.0, norm_b = 0.0;
    Eigen::VectorXd pre;   // nn variants: pre-ReLU activations
    Eigen::VectorXd u;     // nn variants: stacked input
};

constexpr double kNormFloor = 1e-12;

// Comparison layer. euccos -> [||a-b||, cos(a,b)] (cos defined as 0 when
// either norm underflows); subt -> (a-b).^2; mult -> a.*b; nn/submultnn
// feed [a;b] resp. [(a-b).^2; a.*b] through the ComparisonNet.
inline Eigen::VectorXd compare(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                               Comparison variant, const ComparisonNet* net,
                               CompareTranscript& transcript) {
    if (a.size() != b.size()) throw Error::data("compare: dimension mismatch");
    transcript.variant = variant;
    transcript.a = a;
    transcript.b = b;
    switch (variant) {
        case Comparison::kEucCos: {
            transcript.dist = (a - b).norm();
            transcript.norm_a = a.norm();
            transcript.norm_b = b.norm();
            double cos = 0.0;
            if (transcript.norm_a >= kNormFloor && transcript.norm_b >= kNormFloor) {
                cos = a.dot(b) / (transcript.norm_a * transcript.norm_b);
            }
            Eigen::VectorXd out(2);
            out << transcript.dist, cos;
            return out;
        }
        case Comparison::kSubt:
            return (a - b).array().square().matrix();
        case Comparison::kMult:
            return a.cwiseProduct(b);
        case Comparison::kNn:
        case Comparison::kSubMultNn: {
            if (net == nullptr) throw Error::data("comparison net required for nn variants");
            Eigen::VectorXd u(2 * a.size());
            if (variant == Comparison::kNn) {
                u << a, b;
            } else {
                u << (a - b).array().square().matrix(), a.cwiseProduct(b);
            }
            transcript.u = u;
            transcript.pre = net->w.value * u + net->b.value.col(0);
            return transcript.pre.cwiseMax(0.0);
        }
    }
    throw Error::data("unreachable comparison variant");
}

// Backward of compare; accumulates net gradients for the nn variants and
// returns gradients for both inputs.
inline void compare_backward(const CompareTranscript& transcript, const Eigen::VectorXd& dout,
                             ComparisonNet* net, Eigen::VectorXd& da, Eigen::VectorXd& db) {
    const Eigen::VectorXd& a = transcript.a;
    const Eigen::VectorXd& b = transcript.b;
    da.setZero(a.size());
    db.setZero(b.size());
    switch (transcript.variant) {
        case Comparison::kEucCos: {
            if (transcript.dist >= kNormFloor) {
                const Eigen::VectorXd dd = (a - b) / transcript.dist;
                da += dout(0) * dd;
                db -= dout(0) * dd;
            }
            if (transcript.norm_a >= kNormFloor && transcript.norm_b >= kNormFloor) {
                const double na = transcript.norm_a, nb = transcript.norm_b;
                const double cos = a.dot(b) / (na * nb);
                da += dout(1) * (b / (na * nb) - cos * a / (na * na));
                db += dout(1) * (a / (na * nb) - cos * b / (nb * nb));
            }
            return;
        }
        case Comparison::kSubt: {
            const Eigen::VectorXd g = 2.0 * dout.cwiseProduct(a - b);
            da += g;
            db -= g;
            return;
        }
        case Comparison::kMult:
            da += dout.cwiseProduct(b);
            db += dout.cwiseProduct(a);
            return;
        case Comparison::kNn:
        case Comparison::kSubMultNn: {
            const Eigen::VectorXd dpre =
                (transcript.pre.array() > 0.0).select(dout, Eigen::VectorXd::Zero(dout.size()));
            net->w.grad += dpre * transcript.u.transpose();
            net->b.grad.col(0) += dpre;
            const Eigen::VectorXd du = net->w.value.transpose() * dpre;
            const Eigen::Index n = a.size();
            if (transcript.variant == Comparison::kNn) {
                da += du.head(n);
                db += du.tail(n);
            } else {
                const Eigen::VectorXd dsq = du.head(n);
                da += 2.0 * dsq.cwiseProduct(a - b) + du.tail(n).cwiseProduct(b);
                db += -2.0 * dsq.cwiseProduct(a - b) + du.tail(n).cwiseProduct(a);
            }
            return;
        }
    }
}

// Two fully-connected layers of size 2 and 1 with a ReLU in between.
struct RelationMlp {
    ParamTensor w1, b1, w2, b2;

    RelationMlp() = default;
    explicit RelationMlp(Eigen::Index comp_dim)
        : w1("mlp.w1", 2, comp_dim), b1("mlp.b1", 2, 1),
          w2("mlp.w2", 1, 2), b2("mlp.b2", 1, 1) {}

    void register_params(ModelParams& params) {
        for (ParamTensor* t : {&w1, &b1, &w2, &b2}) params.add(t);
    }

    void init(Rng& rng) {
        for (ParamTensor* t : {&w1, &w2}) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(t->value.cols()));
            for (Eigen::Index j = 0; j < t->value.cols(); ++j) {
                for (Eigen::Index i = 0; i < t->value.rows(); ++i) {
                    t->value(i, j) = rng.uniform(-bound, bound);
                }
            }
        }
        b1.value.setZero();
        b2.value.setZero();
    }
};

struct MlpTranscript {
    Eigen::VectorXd input;
    Eigen::VectorXd pre; // pre-ReLU hidden activations (2)
};

inline double relation_score(const RelationMlp& mlp, const Eigen::VectorXd& c,
                             MlpTranscript& transcript) {
    if (c.size() != mlp.w1.value.cols()) {
        throw Error::data("relation mlp input dimension mismatch: " + std::to_string(c.size()) +
                          " vs " + std::to_string(mlp.w1.value.cols()));
    }
    transcript.input = c;
    transcript.pre = mlp.w1.value * c + mlp.b1.value.col(0);
    const Eigen::VectorXd hidden = transcript.pre.cwiseMax(0.0);
    return (mlp.w2.value * hidden + mlp.b2.value.col(0))(0);
}

inline Eigen::VectorXd relation_score_backward(RelationMlp& mlp, const MlpTranscript& transcript,
                                               double dscore) {
    const Eigen::VectorXd hidden = transcript.pre.cwiseMax(0.0);
    mlp.w2.grad += dscore * hidden.transpose();
    mlp.b2.grad(0, 0) += dscore;
    Eigen::VectorXd dhidden = dscore * mlp.w2.value.transpose();
    const Eigen::VectorXd dpre =
        (transcript.pre.array() > 0.0).select(dhidden, Eigen::VectorXd::Zero(dhidden.size()));
    mlp.w1.grad += dpre * transcript.input.transpose();
    mlp.b1.grad.col(0) += dpre;
    return mlp.w1.value.transpose() * dpre;
}

constexpr int kNumClasses = 11; // VAS levels 0..10

struct EpisodeProbs {
    Eigen::VectorXd scores; // raw relation scores, index c <-> VAS level c
    Eigen::VectorXd p;      // softmax probabilities
};

// Max-shifted softmax over the 11 relation scores.
inline EpisodeProbs softmax_probs(const Eigen::VectorXd& scores) {
    if (scores.size() != kNumClasses) {
        throw Error::data("episode expects exactly " + std::to_string(kNumClasses) + " scores");
    }
    EpisodeProbs out;
    out.scores = scores;
    const double shift = scores.maxCoeff();
    Eigen::VectorXd e = (scores.array() - shift).exp();
    out.p = e / e.sum();
    return out;
}

} // namespace painnet
