#pragma once

// The XNODE model: a neural ODE whose vector field also sees the spatial
// coordinate, with a learned lift of the initial datum and a linear readout.
// Gradients flow through the unrolled RK4 steps recorded on the tape
// (discretize-then-optimize), so they are exact for the computed discrete
// model.

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "xwan/domain.hpp"
#include "xwan/nets.hpp"

namespace xwan::xnode {

/// RK4 produced a non-finite state. Carries the index of the failing step.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, int step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

struct XNodeConfig {
    int h_dim = 16;
    int spatial_dim = 1;
    std::vector<int> init_hidden{16};
    std::vector<int> vec_hidden{18, 18};
    nets::Activation activation = nets::Activation::Tanh;
};

/// Theta = (theta1: initial lift, theta2: vector field, readout weights).
/// The readout is weights-only (h_dim of them); dimension chain
/// readout in = vec out = init out = h_dim.
struct XNodeParams {
    nets::MlpParams theta1;        // 1 -> h_dim
    nets::MlpParams theta2;        // h_dim + 1 + d -> h_dim
    std::vector<double> readout;   // h_dim

    int h_dim() const { return static_cast<int>(readout.size()); }
    int spatial_dim() const { return theta2.config.input_dim - h_dim() - 1; }
    int count() const { return theta1.count() + theta2.count() + static_cast<int>(readout.size()); }

    void validate() const {
        if (theta1.config.input_dim != 1 || theta1.config.output_dim != h_dim() ||
            theta2.config.output_dim != h_dim() || theta2.config.input_dim != h_dim() + 1 + spatial_dim() ||
            spatial_dim() < 1)
            throw std::invalid_argument("xnode: parameter dimensions do not chain");
    }
};

inline XNodeParams init_xnode(const XNodeConfig& cfg, std::uint64_t seed) {
    XNodeParams p;
    p.theta1 = nets::init_params({1, cfg.init_hidden, cfg.h_dim, cfg.activation}, derive_seed(seed, 1));
    p.theta2 = nets::init_params({cfg.h_dim + 1 + cfg.spatial_dim, cfg.vec_hidden, cfg.h_dim, cfg.activation},
                                 derive_seed(seed, 2));
    nets::MlpConfig ro{cfg.h_dim, {}, 1, cfg.activation};
    auto tmp = nets::init_params(ro, derive_seed(seed, 3));
    p.readout.assign(tmp.values.begin(), tmp.values.begin() + cfg.h_dim);  // drop bias
    return p;
}

struct BoundXNode {
    nets::BoundMlp init_net, vec_net;
    std::vector<ad::NodeId> readout;
    int h_dim = 0, spatial_dim = 0;
};

inline BoundXNode bind(ad::Tape& tape, const XNodeParams& p, bool trainable = true) {
    BoundXNode b;
    b.init_net = nets::bind(tape, p.theta1, trainable);
    b.vec_net = nets::bind(tape, p.theta2, trainable);
    b.readout.reserve(p.readout.size());
    for (double v : p.readout) b.readout.push_back(trainable ? tape.leaf(v) : tape.constant(v));
    b.h_dim = p.h_dim();
    b.spatial_dim = p.spatial_dim();
    return b;
}

// --- RK4 ------------------------------------------------------------------------

/// Classical RK4 across the given times, each interval split into `substeps`
/// equal steps. `field(tape, state, t)` returns the recorded derivative.
/// Returns the state at every entry of `times` (including the first).
template <class VecField>
std::vector<std::vector<ad::NodeId>> rk4_integrate(ad::Tape& tape, VecField&& field,
                                                   std::span<const ad::NodeId> h0,
                                                   std::span<const double> times, int substeps) {
    if (substeps < 1) throw std::invalid_argument("xnode: substeps must be >= 1");
    const std::size_t n = h0.size();
    std::vector<std::vector<ad::NodeId>> states;
    states.reserve(times.size());
    states.emplace_back(h0.begin(), h0.end());

    auto check_finite = [&](std::span<const ad::NodeId> state, int step) {
        for (ad::NodeId id : state)
            if (!std::isfinite(tape.value(id))) throw DivergenceError("xnode: non-finite state", step);
    };
    check_finite(h0, 0);

    int step_index = 0;
    std::vector<ad::NodeId> h(h0.begin(), h0.end()), tmp(n), acc(n);
    for (std::size_t k = 1; k < times.size(); ++k) {
        const double span_dt = (times[k] - times[k - 1]) / substeps;
        for (int s = 0; s < substeps; ++s) {
            const double t0 = times[k - 1] + s * span_dt;
            ++step_index;
            const ad::NodeId half = tape.constant(0.5 * span_dt);
            const ad::NodeId full = tape.constant(span_dt);

            auto k1 = field(tape, std::span<const ad::NodeId>(h), t0);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = tape.add(h[i], tape.mul(half, k1[i]));
            auto k2 = field(tape, std::span<const ad::NodeId>(tmp), t0 + 0.5 * span_dt);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = tape.add(h[i], tape.mul(half, k2[i]));
            auto k3 = field(tape, std::span<const ad::NodeId>(tmp), t0 + 0.5 * span_dt);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = tape.add(h[i], tape.mul(full, k3[i]));
            auto k4 = field(tape, std::span<const ad::NodeId>(tmp), t0 + span_dt);

            const ad::NodeId sixth = tape.constant(span_dt / 6.0);
            for (std::size_t i = 0; i < n; ++i) {
                acc[i] = tape.add(tape.add(k1[i], k4[i]), tape.add(tape.add(k2[i], k2[i]), tape.add(k3[i], k3[i])));
                h[i] = tape.add(h[i], tape.mul(sixth, acc[i]));
            }
            check_finite(h, step_index);
        }
        states.emplace_back(h.begin(), h.end());
    }
    return states;
}

// --- XNODE forward -----------------------------------------------------------------

inline std::vector<ad::NodeId> vec_field_eval(ad::Tape& tape, const BoundXNode& net,
                                              std::span<const ad::NodeId> h, double t,
                                              std::span<const ad::NodeId> x) {
    std::vector<ad::NodeId> in;
    in.reserve(h.size() + 1 + x.size());
    in.insert(in.end(), h.begin(), h.end());
    in.push_back(tape.constant(t));
    in.insert(in.end(), x.begin(), x.end());
    return nets::mlp_forward(tape, net.vec_net, in);
}

inline ad::NodeId readout_eval(ad::Tape& tape, const BoundXNode& net, std::span<const ad::NodeId> h) {
    ad::NodeId acc = ad::kNoNode;
    for (std::size_t i = 0; i < h.size(); ++i) {
        ad::NodeId term = tape.mul(net.readout[i], h[i]);
        acc = (acc == ad::kNoNode) ? term : tape.add(acc, term);
    }
    return acc;
}

struct XNodeTrajectory {
    std::vector<ad::NodeId> outputs;              // one per time
    std::vector<std::vector<ad::NodeId>> states;  // latent state per time
};

/// Lift the initial value, integrate the latent ODE along the constant path
/// at x, and read out at every listed time. `init_value` is h(x) for paths
/// starting at t=0 and g(x, entry) for later sub-paths.
inline XNodeTrajectory xnode_forward(ad::Tape& tape, const BoundXNode& net, std::span<const ad::NodeId> x,
                                     std::span<const double> times, ad::NodeId init_value, int substeps = 1) {
    if (times.empty()) return {};
    const ad::NodeId iv[] = {init_value};
    std::vector<ad::NodeId> h0 = nets::mlp_forward(tape, net.init_net, iv);
    XNodeTrajectory traj;
    traj.states = rk4_integrate(
        tape,
        [&](ad::Tape& tp, std::span<const ad::NodeId> h, double t) { return vec_field_eval(tp, net, h, t, x); },
        h0, times, substeps);
    traj.outputs.reserve(times.size());
    for (const auto& h : traj.states) traj.outputs.push_back(readout_eval(tape, net, h));
    return traj;
}

/// d/dt of the readout: the readout is linear, so this is exactly
/// readout(vecfield(h, t, x)). No finite differencing in time.
inline ad::NodeId temporal_derivative(ad::Tape& tape, const BoundXNode& net, std::span<const ad::NodeId> h_state,
                                      double t, std::span<const ad::NodeId> x) {
    auto dh = vec_field_eval(tape, net, h_state, t, x);
    return readout_eval(tape, net, dh);
}

// --- prediction APIs -----------------------------------------------------------------

/// Value table over points x partition times, one row per input point, rows
/// concatenated in input order. Time-independent domains only.
inline std::vector<std::vector<double>> predict_grid(const XNodeParams& params,
                                                     std::span<const double> points, int dim,
                                                     std::span<const double> pi_t,
                                                     const std::function<double(const double*)>& h) {
    params.validate();
    std::vector<std::vector<double>> table;
    const std::size_t n_pts = points.size() / static_cast<std::size_t>(dim);
    table.reserve(n_pts);
    ad::Tape tape;
    for (std::size_t j = 0; j < n_pts; ++j) {
        tape.clear();
        auto net = bind(tape, params, false);
        const double* xp = &points[j * static_cast<std::size_t>(dim)];
        std::vector<ad::NodeId> x;
        for (int i = 0; i < dim; ++i) x.push_back(tape.constant(xp[i]));
        auto traj = xnode_forward(tape, net, x, pi_t, tape.constant(h(xp)));
        std::vector<double> row;
        row.reserve(traj.outputs.size());
        for (ad::NodeId id : traj.outputs) row.push_back(tape.value(id));
        table.push_back(std::move(row));
    }
    return table;
}

/// Values along the sub-path schedule of one spatial point. Sub-path i
/// starts from the initial datum when it begins at t=0, otherwise from the
/// boundary datum at its entry time. Times outside every sub-path have no
/// value here by construction.
inline std::vector<std::vector<double>> predict_timevarying(
    const XNodeParams& params, const domain::SubPathSchedule& schedule,
    const std::function<double(const double*)>& h,
    const std::function<double(double, const double*)>& g) {
    params.validate();
    std::vector<std::vector<double>> values;
    if (schedule.empty()) return values;
    ad::Tape tape;
    auto net = bind(tape, params, false);
    std::vector<ad::NodeId> x;
    for (double xi : schedule.x) x.push_back(tape.constant(xi));
    for (std::size_t i = 0; i < schedule.intervals.size(); ++i) {
        const double entry = schedule.intervals[i].entry;
        const double init_value =
            (i == 0 && entry == 0.0) ? h(schedule.x.data()) : g(entry, schedule.x.data());
        auto traj = xnode_forward(tape, net, x, schedule.times[i], tape.constant(init_value));
        std::vector<double> row;
        row.reserve(traj.outputs.size());
        for (ad::NodeId id : traj.outputs) row.push_back(tape.value(id));
        values.push_back(std::move(row));
    }
    return values;
}

// --- serialization ------------------------------------------------------------------

inline nlohmann::json to_json(const XNodeParams& p) {
    return {{"theta1", nets::to_json(p.theta1)}, {"theta2", nets::to_json(p.theta2)}, {"readout", p.readout}};
}

inline XNodeParams xnode_from_json(const nlohmann::json& j) {
    XNodeParams p;
    p.theta1 = nets::mlp_from_json(j.at("theta1"));
    p.theta2 = nets::mlp_from_json(j.at("theta2"));
    p.readout = j.at("readout").get<std::vector<double>>();
    p.validate();
    return p;
}

}  // namespace xwan::xnode
