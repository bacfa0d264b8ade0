#pragma once

#include <Eigen/Dense>

#include <string>

#include "painnet/diffcore.hpp"
#include "painnet/error.hpp"

namespace painnet {

enum class Mode { kTrain, kEval };

// Per-feature batch normalization over rows of an N x F batch. Training
// normalizes with batch statistics (population variance) and updates the
// running statistics; inference uses the running statistics only.
struct BatchNorm {
    ParamTensor gamma, beta;
    ParamTensor running_mean, running_var; // buffers, not optimized
    double momentum = 0.1;
    double eps = 1e-5;

    BatchNorm() = default;
    BatchNorm(const std::string& prefix, Eigen::Index features, double momentum_, double eps_)
        : gamma(prefix + ".gamma", features, 1),
          beta(prefix + ".beta", features, 1),
          running_mean(prefix + ".running_mean", features, 1, /*learn=*/false),
          running_var(prefix + ".running_var", features, 1, /*learn=*/false),
          momentum(momentum_), eps(eps_) {
        gamma.value.setOnes();
        running_var.value.setOnes();
    }

    Eigen::Index features() const { return gamma.value.rows(); }

    void register_params(ModelParams& params) {
        params.add(&gamma);
        params.add(&beta);
        params.add(&running_mean);
        params.add(&running_var);
    }
};

struct BatchNormTranscript {
    Eigen::MatrixXd x_hat;   // N x F
    Eigen::MatrixXd x;       // N x F
    Eigen::RowVectorXd mean; // batch statistics used in the forward pass
    Eigen::RowVectorXd var;
    Mode mode = Mode::kTrain;
};

inline Eigen::MatrixXd batchnorm_forward(BatchNorm& layer, const Eigen::MatrixXd& x, Mode mode,
                                         BatchNormTranscript& transcript,
                                         bool update_running = true) {
    if (x.cols() != layer.features()) {
        throw Error::data("batchnorm feature width mismatch: " + std::to_string(x.cols()) +
                          " vs " + std::to_string(layer.features()));
    }
    const auto n = static_cast<double>(x.rows());
    transcript.mode = mode;
    transcript.x = x;

    Eigen::RowVectorXd mean, var;
    if (mode == Mode::kTrain) {
        mean = x.colwise().mean();
        var = (x.rowwise() - mean).array().square().colwise().sum() / n;
        if (update_running) {
            layer.running_mean.value.col(0) =
                (1.0 - layer.momentum) * layer.running_mean.value.col(0) +
                layer.momentum * mean.transpose();
            layer.running_var.value.col(0) =
                (1.0 - layer.momentum) * layer.running_var.value.col(0) +
                layer.momentum * var.transpose();
        }
    } else {
        mean = layer.running_mean.value.col(0).transpose();
        var = layer.running_var.value.col(0).transpose();
    }
    transcript.mean = mean;
    transcript.var = var;

    const Eigen::RowVectorXd inv_std = (var.array() + layer.eps).sqrt().inverse();
    transcript.x_hat = (x.rowwise() - mean).array().rowwise() * inv_std.array();
    Eigen::MatrixXd y = transcript.x_hat.array().rowwise() * layer.gamma.value.col(0).transpose().array();
    y.array().rowwise() += layer.beta.value.col(0).transpose().array();
    return y;
}

// Training-path backward through the batch-statistic coupling. Accumulates
// gamma/beta gradients and returns d(input).
inline Eigen::MatrixXd batchnorm_backward(BatchNorm& layer, const BatchNormTranscript& transcript,
                                          const Eigen::MatrixXd& dy) {
    if (transcript.mode != Mode::kTrain) {
        throw Error::data("batchnorm backward requires a train-mode transcript");
    }
    const auto n = static_cast<double>(dy.rows());
    const Eigen::RowVectorXd inv_std = (transcript.var.array() + layer.eps).sqrt().inverse();

    layer.gamma.grad.col(0) += (dy.array() * transcript.x_hat.array()).colwise().sum().transpose();
    layer.beta.grad.col(0) += dy.colwise().sum().transpose();

    const Eigen::MatrixXd dx_hat =
        dy.array().rowwise() * layer.gamma.value.col(0).transpose().array();
    const Eigen::RowVectorXd sum_dx_hat = dx_hat.colwise().sum();
    const Eigen::RowVectorXd sum_dx_hat_xhat =
        (dx_hat.array() * transcript.x_hat.array()).colwise().sum();

    // dx = inv_std/n * (n*dx_hat - sum(dx_hat) - x_hat * sum(dx_hat*x_hat))
    Eigen::MatrixXd dx = n * dx_hat;
    dx.array().rowwise() -= sum_dx_hat.array();
    dx.array() -= transcript.x_hat.array().rowwise() * sum_dx_hat_xhat.array();
    dx.array().rowwise() *= (inv_std.array() / n);
    return dx;
}

} // namespace painnet
