#pragma once

// Plain feed-forward networks recorded onto the autodiff tape. These serve as
// the DNN primal solution, the adversarial test network, and the two
// sub-networks of the XNODE model.

#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "xwan/ad.hpp"
#include "xwan/rng.hpp"

namespace xwan::nets {

enum class Activation { Tanh, Relu };

inline std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }
inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    throw std::invalid_argument("nets: unknown activation '" + s + "'");
}

/// Hidden layers take the activation; the final layer is affine.
struct MlpConfig {
    int input_dim = 1;
    std::vector<int> hidden;
    int output_dim = 1;
    Activation activation = Activation::Tanh;

    int param_count() const {
        int count = 0, fan_in = input_dim;
        for (int w : hidden) {
            count += fan_in * w + w;
            fan_in = w;
        }
        count += fan_in * output_dim + output_dim;
        return count;
    }

    void validate() const {
        if (input_dim < 1 || output_dim < 1) throw std::invalid_argument("nets: dims must be >= 1");
        for (int w : hidden)
            if (w < 1) throw std::invalid_argument("nets: hidden widths must be >= 1");
    }
};

/// Flat parameter storage, layer-major: per layer the weight matrix
/// (out x in, row-major) followed by the bias vector. The same order is used
/// on disk.
struct MlpParams {
    MlpConfig config;
    std::vector<double> values;

    int count() const { return static_cast<int>(values.size()); }
};

/// Xavier-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
inline MlpParams init_params(const MlpConfig& config, std::uint64_t seed) {
    config.validate();
    MlpParams p{config, std::vector<double>(static_cast<std::size_t>(config.param_count()))};
    Rng rng(derive_seed(seed, stream::kInit));
    std::size_t k = 0;
    int fan_in = config.input_dim;
    auto layer = [&](int fan_out) {
        const double a = std::sqrt(6.0 / (fan_in + fan_out));
        for (int i = 0; i < fan_in * fan_out; ++i) p.values[k++] = rng.uniform(-a, a);
        for (int i = 0; i < fan_out; ++i) p.values[k++] = 0.0;
        fan_in = fan_out;
    };
    for (int w : config.hidden) layer(w);
    layer(config.output_dim);
    return p;
}

/// Parameters materialized as tape nodes (leaves for trainable use,
/// constants when frozen).
struct BoundMlp {
    const MlpConfig* config = nullptr;
    std::vector<ad::NodeId> nodes;  // same layout as MlpParams::values
};

inline BoundMlp bind(ad::Tape& tape, const MlpParams& params, bool trainable = true) {
    BoundMlp b;
    b.config = &params.config;
    b.nodes.reserve(params.values.size());
    for (double v : params.values) b.nodes.push_back(trainable ? tape.leaf(v) : tape.constant(v));
    return b;
}

/// Affine-activation composition recorded on the tape.
inline std::vector<ad::NodeId> mlp_forward(ad::Tape& tape, const BoundMlp& net,
                                           std::span<const ad::NodeId> input) {
    const MlpConfig& cfg = *net.config;
    if (static_cast<int>(input.size()) != cfg.input_dim)
        throw std::invalid_argument("nets: input size " + std::to_string(input.size()) +
                                    " does not match input_dim " + std::to_string(cfg.input_dim));
    std::vector<ad::NodeId> cur(input.begin(), input.end());
    std::vector<ad::NodeId> next;
    std::size_t k = 0;
    int fan_in = cfg.input_dim;
    auto affine = [&](int fan_out, bool activate) {
        next.clear();
        next.reserve(static_cast<std::size_t>(fan_out));
        for (int o = 0; o < fan_out; ++o) {
            ad::NodeId acc = ad::kNoNode;
            for (int i = 0; i < fan_in; ++i) {
                ad::NodeId term = tape.mul(net.nodes[k + static_cast<std::size_t>(o * fan_in + i)], cur[static_cast<std::size_t>(i)]);
                acc = (acc == ad::kNoNode) ? term : tape.add(acc, term);
            }
            ad::NodeId bias = net.nodes[k + static_cast<std::size_t>(fan_out * fan_in + o)];
            acc = (acc == ad::kNoNode) ? bias : tape.add(acc, bias);
            if (activate) acc = (cfg.activation == Activation::Tanh) ? tape.tanh(acc) : tape.relu(acc);
            next.push_back(acc);
        }
        k += static_cast<std::size_t>(fan_out * fan_in + fan_out);
        fan_in = fan_out;
        cur.swap(next);
    };
    for (int w : cfg.hidden) affine(w, true);
    affine(cfg.output_dim, false);
    return cur;
}

/// Product over layers of the weight-matrix max row sums; a Lipschitz bound
/// in the max norm for 1-Lipschitz activations.
inline double lipschitz_bound(const MlpParams& params) {
    double bound = 1.0;
    std::size_t k = 0;
    int fan_in = params.config.input_dim;
    auto layer = [&](int fan_out) {
        double max_row = 0.0;
        for (int o = 0; o < fan_out; ++o) {
            double row = 0.0;
            for (int i = 0; i < fan_in; ++i) row += std::abs(params.values[k + static_cast<std::size_t>(o * fan_in + i)]);
            max_row = std::max(max_row, row);
        }
        bound *= max_row;
        k += static_cast<std::size_t>(fan_out * fan_in + fan_out);
        fan_in = fan_out;
    };
    for (int w : params.config.hidden) layer(w);
    layer(params.config.output_dim);
    return bound;
}

// --- serialization -----------------------------------------------------------

inline nlohmann::json to_json(const MlpParams& p) {
    return {{"config",
             {{"input_dim", p.config.input_dim},
              {"hidden", p.config.hidden},
              {"output_dim", p.config.output_dim},
              {"activation", to_string(p.config.activation)}}},
            {"values", p.values}};
}

inline MlpParams mlp_from_json(const nlohmann::json& j) {
    MlpParams p;
    const auto& c = j.at("config");
    p.config.input_dim = c.at("input_dim").get<int>();
    p.config.hidden = c.at("hidden").get<std::vector<int>>();
    p.config.output_dim = c.at("output_dim").get<int>();
    p.config.activation = activation_from_string(c.at("activation").get<std::string>());
    p.values = j.at("values").get<std::vector<double>>();
    if (static_cast<int>(p.values.size()) != p.config.param_count())
        throw std::invalid_argument("nets: value count does not match config");
    return p;
}

inline void save_json(const MlpParams& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("nets: cannot write " + path);
    out << to_json(p).dump(2) << '\n';
}

inline MlpParams load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("nets: cannot read " + path);
    nlohmann::json j;
    in >> j;
    return mlp_from_json(j);
}

}  // namespace xwan::nets
