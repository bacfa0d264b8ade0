#pragma once

#include <Eigen/Dense>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "painnet/config.hpp"
#include "painnet/diffcore.hpp"
#include "painnet/error.hpp"

namespace painnet {

// In-memory image of a checkpoint: every model tensor (parameters and
// buffers), the ADAM moments for the learnable ones, and the resolved
// config snapshot. Round-trips through the text format bit-exactly.
struct CheckpointData {
    struct Tensor {
        std::string name;
        Eigen::MatrixXd value;
    };
    std::vector<Tensor> tensors;
    long long step = 0;
    std::vector<Tensor> moments_m;
    std::vector<Tensor> moments_v;
    std::vector<std::string> config_lines;

    static CheckpointData capture(const ModelParams& params, const OptimizerState& state,
                                  const std::string& config_text) {
        CheckpointData data;
        for (const auto* t : params.tensors()) data.tensors.push_back({t->name, t->value});
        data.step = state.step;
        const auto learnable = params.learnable();
        for (std::size_t i = 0; i < learnable.size(); ++i) {
            data.moments_m.push_back({learnable[i]->name, state.m[i]});
            data.moments_v.push_back({learnable[i]->name, state.v[i]});
        }
        std::istringstream lines(config_text);
        std::string line;
        while (std::getline(lines, line)) data.config_lines.push_back(line);
        return data;
    }

    // Copies values back into a model whose shape must match exactly.
    void restore(ModelParams& params, OptimizerState& state) const {
        if (tensors.size() != params.tensors().size()) {
            throw Error::checkpoint("checkpoint has " + std::to_string(tensors.size()) +
                                    " tensors, model expects " +
                                    std::to_string(params.tensors().size()));
        }
        for (const auto& stored : tensors) {
            ParamTensor* t = params.find(stored.name);
            if (t == nullptr) {
                throw Error::checkpoint("checkpoint tensor '" + stored.name +
                                        "' not present in model");
            }
            if (t->value.rows() != stored.value.rows() || t->value.cols() != stored.value.cols()) {
                throw Error::checkpoint(
                    "shape mismatch for tensor '" + stored.name + "': checkpoint " +
                    std::to_string(stored.value.rows()) + "x" + std::to_string(stored.value.cols()) +
                    " vs model " + std::to_string(t->value.rows()) + "x" +
                    std::to_string(t->value.cols()));
            }
            t->value = stored.value;
        }
        const auto learnable = params.learnable();
        if (moments_m.size() != learnable.size() || moments_v.size() != learnable.size()) {
            throw Error::checkpoint("optimizer section does not match learnable parameter count");
        }
        state = OptimizerState::for_params(params);
        state.step = step;
        for (std::size_t i = 0; i < learnable.size(); ++i) {
            if (moments_m[i].name != learnable[i]->name) {
                throw Error::checkpoint("optimizer moment order mismatch at '" + moments_m[i].name +
                                        "'");
            }
            state.m[i] = moments_m[i].value;
            state.v[i] = moments_v[i].value;
        }
    }
};

namespace detail {

inline void write_tensor(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m,
                         const char* prefix = nullptr) {
    if (prefix != nullptr) out << prefix << " ";
    out << name << " " << m.rows() << " " << m.cols() << "\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (i != 0 || j != 0) out << " ";
            out << format_double(m(i, j));
        }
    }
    out << "\n";
}

inline Eigen::MatrixXd read_tensor_values(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
    std::string line;
    if (!std::getline(in, line)) throw Error::checkpoint("truncated file: missing value line");
    std::istringstream vals(line);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            if (!(vals >> m(i, j))) {
                throw Error::checkpoint("truncated file: too few values for tensor");
            }
        }
    }
    double extra;
    if (vals >> extra) throw Error::checkpoint("malformed file: extra values for tensor");
    return m;
}

} // namespace detail

// Text archive: header `painnet-ckpt v1`; per tensor a `name rows cols`
// line followed by one line of %.17g values (row-major); `---`; optimizer
// section (`step N`, then `m`/`v` tensor pairs); `---`; config snapshot.
inline std::string checkpoint_to_string(const CheckpointData& data) {
    std::ostringstream out;
    out << "painnet-ckpt v1\n";
    for (const auto& t : data.tensors) detail::write_tensor(out, t.name, t.value);
    out << "---\n";
    out << "step " << data.step << "\n";
    for (std::size_t i = 0; i < data.moments_m.size(); ++i) {
        detail::write_tensor(out, data.moments_m[i].name, data.moments_m[i].value, "m");
        detail::write_tensor(out, data.moments_v[i].name, data.moments_v[i].value, "v");
    }
    out << "---\n";
    for (const auto& line : data.config_lines) out << line << "\n";
    return out.str();
}

inline void save_checkpoint(const std::string& path, const CheckpointData& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error::io("cannot write checkpoint '" + path + "'");
    out << checkpoint_to_string(data);
    if (!out) throw Error::io("failed writing checkpoint '" + path + "'");
}

inline CheckpointData checkpoint_from_stream(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error::checkpoint("empty checkpoint file");
    if (line != "painnet-ckpt v1") {
        throw Error::checkpoint("unknown checkpoint format version '" + line + "'");
    }

    CheckpointData data;
    while (std::getline(in, line) && line != "---") {
        std::istringstream head(line);
        std::string name;
        Eigen::Index rows = 0, cols = 0;
        if (!(head >> name >> rows >> cols) || rows < 0 || cols < 0) {
            throw Error::checkpoint("malformed tensor header '" + line + "'");
        }
        data.tensors.push_back({name, detail::read_tensor_values(in, rows, cols)});
    }
    if (line != "---") throw Error::checkpoint("truncated file: missing optimizer section");

    if (!std::getline(in, line)) throw Error::checkpoint("truncated file: missing step line");
    {
        std::istringstream head(line);
        std::string tag;
        if (!(head >> tag >> data.step) || tag != "step") {
            throw Error::checkpoint("malformed step line '" + line + "'");
        }
    }
    while (std::getline(in, line) && line != "---") {
        std::istringstream head(line);
        std::string kind, name;
        Eigen::Index rows = 0, cols = 0;
        if (!(head >> kind >> name >> rows >> cols) || (kind != "m" && kind != "v")) {
            throw Error::checkpoint("malformed moment header '" + line + "'");
        }
        auto& target = (kind == "m") ? data.moments_m : data.moments_v;
        target.push_back({name, detail::read_tensor_values(in, rows, cols)});
    }
    if (line != "---") throw Error::checkpoint("truncated file: missing config section");

    while (std::getline(in, line)) data.config_lines.push_back(line);
    if (data.moments_m.size() != data.moments_v.size()) {
        throw Error::checkpoint("optimizer section has unpaired moments");
    }
    return data;
}

inline CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error::io("cannot open checkpoint '" + path + "'");
    return checkpoint_from_stream(in);
}

} // namespace painnet
