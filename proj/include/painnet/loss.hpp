#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "painnet/error.hpp"
#include "painnet/relation.hpp"

namespace painnet {

// Ordinal weight vector for ground-truth label t: w_c = |t - c| + 1.
inline Eigen::VectorXd wbce_weights(int t_label) {
    Eigen::VectorXd w(kNumClasses);
    for (int c = 0; c < kNumClasses; ++c) w(c) = std::abs(t_label - c) + 1.0;
    return w;
}

struct LossResult {
    double loss = 0.0;
    Eigen::VectorXd dscores; // d(loss)/d(relation scores), via the softmax coupling
};

// Weighted binary cross-entropy over the 11 class probabilities:
//   loss = (1/C) sum_c w_c * -(y_c log p_c + (1-y_c) log(1-p_c))
// with y_c = [c == t_label]. `weighted=false` forces all weights to 1
// (plain BCE). Probabilities are clamped to [1e-12, 1-1e-12] before logs.
inline LossResult wbce_loss(const EpisodeProbs& probs, int t_label, bool weighted = true) {
    if (t_label < 0 || t_label >= kNumClasses) {
        throw Error::data("ground-truth label out of [0,10]");
    }
    const Eigen::VectorXd w =
        weighted ? wbce_weights(t_label) : Eigen::VectorXd::Ones(kNumClasses);

    LossResult out;
    Eigen::VectorXd dloss_dp(kNumClasses);
    for (int c = 0; c < kNumClasses; ++c) {
        const double pc = std::clamp(probs.p(c), 1e-12, 1.0 - 1e-12);
        const double yc = (c == t_label) ? 1.0 : 0.0;
        out.loss += w(c) * -(yc * std::log(pc) + (1.0 - yc) * std::log(1.0 - pc));
        dloss_dp(c) = w(c) * (-yc / pc + (1.0 - yc) / (1.0 - pc));
    }
    out.loss /= kNumClasses;
    dloss_dp /= kNumClasses;

    // Chain through softmax: dL/dr_j = p_j * (g_j - sum_c g_c p_c).
    const double mix = dloss_dp.dot(probs.p);
    out.dscores = probs.p.cwiseProduct(dloss_dp - Eigen::VectorXd::Constant(kNumClasses, mix));
    if (!std::isfinite(out.loss)) throw Error::numeric("non-finite loss");
    return out;
}

} // namespace painnet
