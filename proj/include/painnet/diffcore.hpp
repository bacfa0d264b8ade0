#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "painnet/error.hpp"
#include "painnet/rng.hpp"

namespace painnet {

// Named parameter tensor with a shape-congruent gradient buffer. Buffers
// (batch-norm running statistics) set learnable=false: they are saved in
// checkpoints but skipped by the optimizer and the norm clipper.
struct ParamTensor {
    std::string name;
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    bool learnable = true;

    ParamTensor() = default;
    ParamTensor(std::string n, Eigen::Index rows, Eigen::Index cols, bool learn = true)
        : name(std::move(n)),
          value(Eigen::MatrixXd::Zero(rows, cols)),
          grad(Eigen::MatrixXd::Zero(rows, cols)),
          learnable(learn) {}

    void zero_grad() { grad.setZero(); }
};

// Ordered view over a model's tensors. Iteration order is registration
// order, which fixes checkpoint layout and optimizer-state pairing.
class ModelParams {
public:
    void add(ParamTensor* t) {
        for (const auto* existing : tensors_) {
            if (existing->name == t->name) {
                throw Error::data("duplicate parameter name '" + t->name + "'");
            }
        }
        tensors_.push_back(t);
    }

    const std::vector<ParamTensor*>& tensors() const { return tensors_; }

    std::vector<ParamTensor*> learnable() const {
        std::vector<ParamTensor*> out;
        for (auto* t : tensors_) {
            if (t->learnable) out.push_back(t);
        }
        return out;
    }

    ParamTensor* find(const std::string& name) const {
        for (auto* t : tensors_) {
            if (t->name == name) return t;
        }
        return nullptr;
    }

    void zero_grads() {
        for (auto* t : tensors_) t->zero_grad();
    }

    void scale_grads(double s) {
        for (auto* t : tensors_) {
            if (t->learnable) t->grad *= s;
        }
    }

private:
    std::vector<ParamTensor*> tensors_;
};

// ADAM moments, one pair per learnable tensor, plus the step counter.
struct OptimizerState {
    std::vector<Eigen::MatrixXd> m;
    std::vector<Eigen::MatrixXd> v;
    long long step = 0;

    static OptimizerState for_params(const ModelParams& params) {
        OptimizerState st;
        for (const auto* t : params.learnable()) {
            st.m.push_back(Eigen::MatrixXd::Zero(t->value.rows(), t->value.cols()));
            st.v.push_back(Eigen::MatrixXd::Zero(t->value.rows(), t->value.cols()));
        }
        return st;
    }
};

// Global-L2-norm gradient clipping over all learnable tensors. Returns the
// scale factor that was applied (1.0 when the norm is already within bound).
inline double clip_global_norm(ModelParams& params, double max_norm) {
    if (max_norm <= 0.0) throw Error::data("clip max_norm must be > 0");
    double sq = 0.0;
    for (const auto* t : params.learnable()) {
        double s = t->grad.squaredNorm();
        if (!std::isfinite(s)) throw Error::numeric("non-finite gradient in '" + t->name + "'");
        sq += s;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return 1.0;
    const double factor = max_norm / norm;
    for (auto* t : params.learnable()) t->grad *= factor;
    return factor;
}

// Bias-corrected ADAM update on every learnable tensor.
inline void adam_step(ModelParams& params, OptimizerState& state, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    auto learnable = params.learnable();
    if (state.m.size() != learnable.size()) {
        throw Error::data("optimizer state does not match parameter count");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < learnable.size(); ++i) {
        ParamTensor* t = learnable[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * t->grad;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * t->grad.cwiseProduct(t->grad);
        const Eigen::MatrixXd m_hat = state.m[i] / bc1;
        const Eigen::MatrixXd v_hat = state.v[i] / bc2;
        const Eigen::MatrixXd update = lr * (m_hat.array() / (v_hat.array().sqrt() + eps)).matrix();
        if (!update.allFinite()) throw Error::numeric("non-finite ADAM update for '" + t->name + "'");
        t->value -= update;
    }
}

// A differentiable map packaged for finite-difference checking. `forward`
// must be pure given the scalars behind `input_values`/`param_values`;
// `backward` overwrites the listed gradient slots for the given upstream.
struct FdProblem {
    std::string name;
    std::function<Eigen::VectorXd()> forward;
    std::function<void(const Eigen::VectorXd&)> backward;
    std::vector<double*> input_values;
    std::vector<double*> input_grads;
    std::vector<double*> param_values;
    std::vector<double*> param_grads;
};

struct CheckReport {
    std::string name;
    double max_rel_err_input = 0.0;
    double max_rel_err_param = 0.0;
    bool pass = false;

    double max_rel_err() const { return std::max(max_rel_err_input, max_rel_err_param); }
};

// Central finite differences of a random scalar reduction of the output,
// against the analytic input and parameter gradients.
// rel_err = |a - n| / max(|a|, |n|, 1e-7).
inline CheckReport fd_check(FdProblem& problem, double step, double tol, Rng& rng) {
    if (step <= 0.0) throw Error::data("fd step must be > 0");
    CheckReport report;
    report.name = problem.name;

    const Eigen::VectorXd y0 = problem.forward();
    if (!y0.allFinite()) throw Error::numeric("non-finite forward output in '" + problem.name + "'");
    Eigen::VectorXd reduce(y0.size());
    for (Eigen::Index i = 0; i < reduce.size(); ++i) reduce(i) = rng.uniform(-1.0, 1.0);

    problem.backward(reduce);

    auto scalar = [&]() { return reduce.dot(problem.forward()); };

    auto sweep = [&](const std::vector<double*>& values, const std::vector<double*>& grads) {
        double worst = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            double* slot = values[i];
            const double original = *slot;
            *slot = original + step;
            const double fp = scalar();
            *slot = original - step;
            const double fm = scalar();
            *slot = original;
            const double numeric = (fp - fm) / (2.0 * step);
            const double analytic = *grads[i];
            if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
                throw Error::numeric("non-finite gradient encountered in '" + problem.name + "'");
            }
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
            worst = std::max(worst, std::abs(analytic - numeric) / denom);
        }
        return worst;
    };

    report.max_rel_err_input = sweep(problem.input_values, problem.input_grads);
    report.max_rel_err_param = sweep(problem.param_values, problem.param_grads);
    report.pass = report.max_rel_err() <= tol;
    return report;
}

namespace detail {

inline void collect_matrix(Eigen::MatrixXd& value, Eigen::MatrixXd& grad,
                           std::vector<double*>& values, std::vector<double*>& grads) {
    for (Eigen::Index j = 0; j < value.cols(); ++j) {
        for (Eigen::Index i = 0; i < value.rows(); ++i) {
            values.push_back(&value(i, j));
            grads.push_back(&grad(i, j));
        }
    }
}

} // namespace detail

} // namespace painnet
