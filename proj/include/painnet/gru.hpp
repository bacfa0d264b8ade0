#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "painnet/diffcore.hpp"
#include "painnet/error.hpp"
#include "painnet/rng.hpp"

namespace painnet {

// Single-layer GRU cell over an input sequence, zero initial state:
//   z_t = sigmoid(Wz x_t + Uz h_{t-1} + bz)
//   r_t = sigmoid(Wr x_t + Ur h_{t-1} + br)
//   n_t = tanh(Wn x_t + Un (r_t . h_{t-1}) + bn)
//   h_t = (1 - z_t) . n_t + z_t . h_{t-1}
struct GruCell {
    ParamTensor wz, uz, bz;
    ParamTensor wr, ur, br;
    ParamTensor wn, un, bn;

    GruCell() = default;
    GruCell(const std::string& prefix, Eigen::Index input, Eigen::Index hidden)
        : wz(prefix + ".wz", hidden, input), uz(prefix + ".uz", hidden, hidden),
          bz(prefix + ".bz", hidden, 1),
          wr(prefix + ".wr", hidden, input), ur(prefix + ".ur", hidden, hidden),
          br(prefix + ".br", hidden, 1),
          wn(prefix + ".wn", hidden, input), un(prefix + ".un", hidden, hidden),
          bn(prefix + ".bn", hidden, 1) {}

    Eigen::Index hidden() const { return wz.value.rows(); }
    Eigen::Index input() const { return wz.value.cols(); }

    void register_params(ModelParams& params) {
        for (ParamTensor* t : {&wz, &uz, &bz, &wr, &ur, &br, &wn, &un, &bn}) params.add(t);
    }

    // Weights uniform in [-1/sqrt(hidden), +1/sqrt(hidden)], biases zero.
    void init(Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(hidden()));
        for (ParamTensor* t : {&wz, &uz, &wr, &ur, &wn, &un}) {
            for (Eigen::Index j = 0; j < t->value.cols(); ++j) {
                for (Eigen::Index i = 0; i < t->value.rows(); ++i) {
                    t->value(i, j) = rng.uniform(-bound, bound);
                }
            }
        }
        bz.value.setZero();
        br.value.setZero();
        bn.value.setZero();
    }
};

// Cached activations for one sequence, consumed by gru_backward.
struct GruTranscript {
    Eigen::MatrixXd x;  // L x input
    Eigen::MatrixXd h;  // L x hidden, h.row(t) = state after step t
    Eigen::MatrixXd z;  // L x hidden
    Eigen::MatrixXd r;  // L x hidden
    Eigen::MatrixXd n;  // L x hidden (candidate, post-tanh)
};

// Runs the recurrence over seq (L x input) and returns the last hidden state.
inline Eigen::VectorXd gru_forward(const GruCell& cell, const Eigen::MatrixXd& seq,
                                   GruTranscript& transcript) {
    const Eigen::Index steps = seq.rows();
    const Eigen::Index d = cell.hidden();
    if (seq.cols() != cell.input()) {
        throw Error::data("gru input width " + std::to_string(seq.cols()) + " != " +
                          std::to_string(cell.input()));
    }
    if (steps < 1) throw Error::data("gru sequence must have at least one step");

    transcript.x = seq;
    transcript.h.resize(steps, d);
    transcript.z.resize(steps, d);
    transcript.r.resize(steps, d);
    transcript.n.resize(steps, d);

    Eigen::VectorXd h = Eigen::VectorXd::Zero(d);
    for (Eigen::Index t = 0; t < steps; ++t) {
        const Eigen::VectorXd x = seq.row(t).transpose();
        const Eigen::VectorXd az = cell.wz.value * x + cell.uz.value * h + cell.bz.value.col(0);
        const Eigen::VectorXd ar = cell.wr.value * x + cell.ur.value * h + cell.br.value.col(0);
        const Eigen::VectorXd zt = (1.0 / (1.0 + (-az.array()).exp())).matrix();
        const Eigen::VectorXd rt = (1.0 / (1.0 + (-ar.array()).exp())).matrix();
        const Eigen::VectorXd an =
            cell.wn.value * x + cell.un.value * (rt.array() * h.array()).matrix() +
            cell.bn.value.col(0);
        const Eigen::VectorXd nt = an.array().tanh().matrix();
        h = ((1.0 - zt.array()) * nt.array() + zt.array() * h.array()).matrix();
        transcript.z.row(t) = zt.transpose();
        transcript.r.row(t) = rt.transpose();
        transcript.n.row(t) = nt.transpose();
        transcript.h.row(t) = h.transpose();
    }
    if (!h.allFinite()) throw Error::numeric("non-finite GRU activation");
    return h;
}

// Backpropagation through time from an upstream gradient on the final
// hidden state. Parameter gradients accumulate into the cell; the gradient
// w.r.t. the input sequence is returned through dseq.
inline void gru_backward(GruCell& cell, const GruTranscript& transcript,
                         const Eigen::VectorXd& dh_last, Eigen::MatrixXd& dseq) {
    const Eigen::Index steps = transcript.x.rows();
    const Eigen::Index d = cell.hidden();
    dseq.setZero(steps, transcript.x.cols());

    Eigen::VectorXd dh = dh_last;
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
        const Eigen::VectorXd x = transcript.x.row(t).transpose();
        const Eigen::VectorXd zt = transcript.z.row(t).transpose();
        const Eigen::VectorXd rt = transcript.r.row(t).transpose();
        const Eigen::VectorXd nt = transcript.n.row(t).transpose();
        const Eigen::VectorXd h_prev =
            (t == 0) ? Eigen::VectorXd::Zero(d) : Eigen::VectorXd(transcript.h.row(t - 1).transpose());

        const Eigen::VectorXd dz =
            (dh.array() * (h_prev.array() - nt.array()) * zt.array() * (1.0 - zt.array())).matrix();
        const Eigen::VectorXd dn_pre =
            (dh.array() * (1.0 - zt.array()) * (1.0 - nt.array() * nt.array())).matrix();
        const Eigen::VectorXd un_back = cell.un.value.transpose() * dn_pre;
        const Eigen::VectorXd dr =
            (un_back.array() * h_prev.array() * rt.array() * (1.0 - rt.array())).matrix();

        cell.wz.grad += dz * x.transpose();
        cell.uz.grad += dz * h_prev.transpose();
        cell.bz.grad.col(0) += dz;
        cell.wr.grad += dr * x.transpose();
        cell.ur.grad += dr * h_prev.transpose();
        cell.br.grad.col(0) += dr;
        cell.wn.grad += dn_pre * x.transpose();
        cell.un.grad += dn_pre * (rt.array() * h_prev.array()).matrix().transpose();
        cell.bn.grad.col(0) += dn_pre;

        dseq.row(t) = (cell.wz.value.transpose() * dz + cell.wr.value.transpose() * dr +
                       cell.wn.value.transpose() * dn_pre)
                          .transpose();

        dh = (dh.array() * zt.array()).matrix() + cell.uz.value.transpose() * dz +
             cell.ur.value.transpose() * dr + (un_back.array() * rt.array()).matrix();
    }
}

} // namespace painnet
