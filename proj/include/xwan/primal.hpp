#pragma once

// The primal solution models behind one interface: the DNN baseline on the
// joint (t, x) input, the XNODE model integrating along constant spatial
// paths, and the exact-solution oracle used for verification. The loss
// assembler drives them through tape recordings; test-function recordings are
// injected so they share the spatial tangent sessions of the primal.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "xwan/domain.hpp"
#include "xwan/nets.hpp"
#include "xwan/pde.hpp"
#include "xwan/xnode.hpp"

namespace xwan::primal {

/// Records the test function at (t, x-nodes) on the tape; returns its node.
using PhiRecorder = std::function<ad::NodeId(ad::Tape&, double, std::span<const ad::NodeId>)>;

/// Everything the interior integrand needs at one spatial point, aligned per
/// collocation time (sub-paths flattened in order). Zero derivatives are
/// materialized as constant nodes so consumers never see missing ids.
struct InteriorRecord {
    std::vector<double> times;
    std::vector<ad::NodeId> u, u_dt;
    std::vector<ad::NodeId> u_dx;    // direction-major: [dir * n_times + k]
    std::vector<ad::NodeId> phi, phi_dx;

    void clear() {
        times.clear();
        u.clear();
        u_dt.clear();
        u_dx.clear();
        phi.clear();
        phi_dx.clear();
    }
};

class Primal {
public:
    virtual ~Primal() = default;

    virtual std::string kind() const = 0;
    virtual int dim() const = 0;
    virtual int param_count() const = 0;
    virtual std::span<double> params() = 0;

    /// Bind parameters as leaves on this tape. A primal serves one tape at a
    /// time while recording (same ownership rule as the tape itself).
    virtual void bind(ad::Tape& tape) = 0;
    virtual std::span<const ad::NodeId> param_leaves() const = 0;

    /// Record u, its time derivative and spatial tangents, and the injected
    /// test function, at every collocation time of one spatial point.
    virtual void record_interior(ad::Tape& tape, const double* x, const domain::SubPathSchedule& schedule,
                                 const PhiRecorder& phi, InteriorRecord& out) = 0;

    /// u along the constant path at x for the given times (no derivatives).
    virtual std::vector<ad::NodeId> record_path_values(ad::Tape& tape, const double* x,
                                                       std::span<const double> times) = 0;

    /// u at a scattered (t, x); kNoNode when t lies outside every sub-path.
    virtual ad::NodeId record_value_at(ad::Tape& tape, double t, const double* x) = 0;

    /// u(0, x).
    virtual ad::NodeId record_initial_value(ad::Tape& tape, const double* x) = 0;

    /// Plain evaluation on an internal scratch tape.
    virtual double predict(double t, const double* x) = 0;

    virtual nlohmann::json params_to_json() const = 0;
    virtual void params_from_json(const nlohmann::json& j) = 0;
};

namespace detail {

inline ad::NodeId nz(ad::Tape& tape, ad::NodeId id, ad::NodeId& zero) {
    if (id != ad::kNoNode) return id;
    if (zero == ad::kNoNode) zero = tape.constant(0.0);
    return zero;
}

}  // namespace detail

// --- DNN primal -----------------------------------------------------------------

/// Feed-forward network on the concatenated (t, x) input; the baseline primal.
class DnnPrimal : public Primal {
public:
    DnnPrimal(nets::MlpConfig config, std::uint64_t seed) : net_(nets::init_params(config, seed)) {
        if (config.output_dim != 1) throw std::invalid_argument("primal: dnn output_dim must be 1");
    }
    explicit DnnPrimal(nets::MlpParams params) : net_(std::move(params)) {}

    std::string kind() const override { return "dnn"; }
    int dim() const override { return net_.config.input_dim - 1; }
    int param_count() const override { return net_.count(); }
    std::span<double> params() override { return net_.values; }

    void bind(ad::Tape& tape) override { bound_ = nets::bind(tape, net_); }
    std::span<const ad::NodeId> param_leaves() const override { return bound_.nodes; }

    void record_interior(ad::Tape& tape, const double* x, const domain::SubPathSchedule& schedule,
                         const PhiRecorder& phi, InteriorRecord& out) override {
        const int d = dim();
        out.clear();
        for (const auto& list : schedule.times)
            for (double t : list) out.times.push_back(t);
        const std::size_t n = out.times.size();
        out.u_dx.assign(static_cast<std::size_t>(d) * n, ad::kNoNode);
        out.phi_dx.assign(static_cast<std::size_t>(d) * n, ad::kNoNode);
        ad::NodeId zero = ad::kNoNode;

        std::vector<ad::NodeId> in(static_cast<std::size_t>(d) + 1);
        for (std::size_t k = 0; k < n; ++k) {
            const double t = out.times[k];
            // time session: value and du/dt
            tape.begin_tangent();
            in[0] = tape.seeded(t, 1.0);
            for (int i = 0; i < d; ++i) in[static_cast<std::size_t>(i) + 1] = tape.constant(x[i]);
            ad::NodeId uval = nets::mlp_forward(tape, bound_, in)[0];
            out.u.push_back(uval);
            out.u_dt.push_back(detail::nz(tape, tape.tangent_node(uval), zero));
            tape.end_tangent();
            // one spatial session per direction, shared with the test function
            for (int dir = 0; dir < d; ++dir) {
                tape.begin_tangent();
                in[0] = tape.constant(t);
                for (int i = 0; i < d; ++i) in[static_cast<std::size_t>(i) + 1] = tape.seeded(x[i], i == dir ? 1.0 : 0.0);
                ad::NodeId ud = nets::mlp_forward(tape, bound_, in)[0];
                out.u_dx[static_cast<std::size_t>(dir) * n + k] = detail::nz(tape, tape.tangent_node(ud), zero);
                ad::NodeId ph = phi(tape, t, std::span<const ad::NodeId>(in).subspan(1));
                out.phi_dx[static_cast<std::size_t>(dir) * n + k] = detail::nz(tape, tape.tangent_node(ph), zero);
                if (dir == 0) out.phi.push_back(ph);
                tape.end_tangent();
            }
        }
    }

    std::vector<ad::NodeId> record_path_values(ad::Tape& tape, const double* x,
                                               std::span<const double> times) override {
        const int d = dim();
        std::vector<ad::NodeId> in(static_cast<std::size_t>(d) + 1), out;
        out.reserve(times.size());
        for (double t : times) {
            in[0] = tape.constant(t);
            for (int i = 0; i < d; ++i) in[static_cast<std::size_t>(i) + 1] = tape.constant(x[i]);
            out.push_back(nets::mlp_forward(tape, bound_, in)[0]);
        }
        return out;
    }

    ad::NodeId record_value_at(ad::Tape& tape, double t, const double* x) override {
        const int d = dim();
        std::vector<ad::NodeId> in(static_cast<std::size_t>(d) + 1);
        in[0] = tape.constant(t);
        for (int i = 0; i < d; ++i) in[static_cast<std::size_t>(i) + 1] = tape.constant(x[i]);
        return nets::mlp_forward(tape, bound_, in)[0];
    }

    ad::NodeId record_initial_value(ad::Tape& tape, const double* x) override {
        return record_value_at(tape, 0.0, x);
    }

    double predict(double t, const double* x) override {
        scratch_.clear();
        auto bound = nets::bind(scratch_, net_, false);
        const int d = dim();
        std::vector<ad::NodeId> in(static_cast<std::size_t>(d) + 1);
        in[0] = scratch_.constant(t);
        for (int i = 0; i < d; ++i) in[static_cast<std::size_t>(i) + 1] = scratch_.constant(x[i]);
        return scratch_.value(nets::mlp_forward(scratch_, bound, in)[0]);
    }

    nlohmann::json params_to_json() const override { return {{"kind", "dnn"}, {"net", nets::to_json(net_)}}; }
    void params_from_json(const nlohmann::json& j) override { net_ = nets::mlp_from_json(j.at("net")); }

    const nets::MlpParams& net() const { return net_; }

private:
    nets::MlpParams net_;
    nets::BoundMlp bound_;
    ad::Tape scratch_;
};

// --- XNODE primal ----------------------------------------------------------------

/// XNODE model on constant spatial paths; sub-path starts take the initial
/// datum at t=0 and the boundary datum at later entry times. Spatial tangent
/// seeds of those start values come from the problem's analytic gradient when
/// present, otherwise from finite differences.
class XnodePrimal : public Primal {
public:
    XnodePrimal(const xnode::XNodeConfig& cfg, const pde::PdeProblem* problem, const domain::DomainSpec* dom,
                std::uint64_t seed, int eval_grid = 10, int substeps = 1)
        : problem_(problem), domain_(dom), eval_grid_(eval_grid), substeps_(substeps) {
        auto p = xnode::init_xnode(cfg, seed);
        theta1_cfg_ = p.theta1.config;
        theta2_cfg_ = p.theta2.config;
        h_dim_ = cfg.h_dim;
        n1_ = p.theta1.values.size();
        n2_ = p.theta2.values.size();
        flat_ = p.theta1.values;
        flat_.insert(flat_.end(), p.theta2.values.begin(), p.theta2.values.end());
        flat_.insert(flat_.end(), p.readout.begin(), p.readout.end());
    }

    std::string kind() const override { return "xnode"; }
    int dim() const override { return theta2_cfg_.input_dim - h_dim_ - 1; }
    int param_count() const override { return static_cast<int>(flat_.size()); }
    std::span<double> params() override { return flat_; }

    void bind(ad::Tape& tape) override {
        leaves_.clear();
        leaves_.reserve(flat_.size());
        for (double v : flat_) leaves_.push_back(tape.leaf(v));
        bound_.init_net.config = &theta1_cfg_;
        bound_.vec_net.config = &theta2_cfg_;
        bound_.init_net.nodes.assign(leaves_.begin(), leaves_.begin() + static_cast<std::ptrdiff_t>(n1_));
        bound_.vec_net.nodes.assign(leaves_.begin() + static_cast<std::ptrdiff_t>(n1_),
                                    leaves_.begin() + static_cast<std::ptrdiff_t>(n1_ + n2_));
        bound_.readout.assign(leaves_.begin() + static_cast<std::ptrdiff_t>(n1_ + n2_), leaves_.end());
        bound_.h_dim = h_dim_;
        bound_.spatial_dim = dim();
    }
    std::span<const ad::NodeId> param_leaves() const override { return leaves_; }

    void record_interior(ad::Tape& tape, const double* x, const domain::SubPathSchedule& schedule,
                         const PhiRecorder& phi, InteriorRecord& out) override {
        const int d = dim();
        out.clear();
        for (const auto& list : schedule.times)
            for (double t : list) out.times.push_back(t);
        const std::size_t n = out.times.size();
        out.u_dx.assign(static_cast<std::size_t>(d) * n, ad::kNoNode);
        out.phi_dx.assign(static_cast<std::size_t>(d) * n, ad::kNoNode);
        ad::NodeId zero = ad::kNoNode;

        // plain session: values, analytic time derivative, phi values
        {
            std::vector<ad::NodeId> xn(static_cast<std::size_t>(d));
            for (int i = 0; i < d; ++i) xn[static_cast<std::size_t>(i)] = tape.constant(x[i]);
            for (std::size_t sp = 0; sp < schedule.intervals.size(); ++sp) {
                auto traj = xnode::xnode_forward(tape, bound_, xn, schedule.times[sp],
                                                 tape.constant(start_value(sp, schedule, x)), substeps_);
                for (std::size_t k = 0; k < schedule.times[sp].size(); ++k) {
                    const double t = schedule.times[sp][k];
                    out.u.push_back(traj.outputs[k]);
                    out.u_dt.push_back(xnode::temporal_derivative(tape, bound_, traj.states[k], t, xn));
                    out.phi.push_back(phi(tape, t, xn));
                }
            }
        }
        // one tangent session per spatial direction
        std::vector<double> dstart(static_cast<std::size_t>(d));
        for (int dir = 0; dir < d; ++dir) {
            tape.begin_tangent();
            std::vector<ad::NodeId> xn(static_cast<std::size_t>(d));
            for (int i = 0; i < d; ++i) xn[static_cast<std::size_t>(i)] = tape.seeded(x[i], i == dir ? 1.0 : 0.0);
            std::size_t k_flat = 0;
            for (std::size_t sp = 0; sp < schedule.intervals.size(); ++sp) {
                start_gradient(sp, schedule, x, dstart.data());
                ad::NodeId start = tape.seeded(start_value(sp, schedule, x), dstart[static_cast<std::size_t>(dir)]);
                auto traj = xnode::xnode_forward(tape, bound_, xn, schedule.times[sp], start, substeps_);
                for (std::size_t k = 0; k < schedule.times[sp].size(); ++k, ++k_flat) {
                    out.u_dx[static_cast<std::size_t>(dir) * n + k_flat] =
                        detail::nz(tape, tape.tangent_node(traj.outputs[k]), zero);
                    ad::NodeId ph = phi(tape, schedule.times[sp][k], xn);
                    out.phi_dx[static_cast<std::size_t>(dir) * n + k_flat] =
                        detail::nz(tape, tape.tangent_node(ph), zero);
                }
            }
            tape.end_tangent();
        }
    }

    std::vector<ad::NodeId> record_path_values(ad::Tape& tape, const double* x,
                                               std::span<const double> times) override {
        const int d = dim();
        std::vector<ad::NodeId> xn(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) xn[static_cast<std::size_t>(i)] = tape.constant(x[i]);
        auto traj = xnode::xnode_forward(tape, bound_, xn, times, tape.constant(problem_->h(x)), substeps_);
        return traj.outputs;
    }

    ad::NodeId record_value_at(ad::Tape& tape, double t, const double* x) override {
        auto sched = domain::build_subpath_times(*domain_, std::span<const double>(x, static_cast<std::size_t>(dim())),
                                                 eval_partition());
        const double tol = 1e-9;
        for (std::size_t sp = 0; sp < sched.intervals.size(); ++sp) {
            const auto& iv = sched.intervals[sp];
            if (t < iv.entry - tol || t > iv.exit + tol) continue;
            std::vector<double> times{iv.entry};
            for (double tc : sched.times[sp])
                if (tc > iv.entry && tc < t) times.push_back(tc);
            if (t > iv.entry) times.push_back(std::min(t, iv.exit));
            const int d = dim();
            std::vector<ad::NodeId> xn(static_cast<std::size_t>(d));
            for (int i = 0; i < d; ++i) xn[static_cast<std::size_t>(i)] = tape.constant(x[i]);
            auto traj = xnode::xnode_forward(tape, bound_, xn, times, tape.constant(start_value(sp, sched, x)), substeps_);
            return traj.outputs.back();
        }
        return ad::kNoNode;
    }

    ad::NodeId record_initial_value(ad::Tape& tape, const double* x) override {
        const ad::NodeId iv[] = {tape.constant(problem_->h(x))};
        auto h0 = nets::mlp_forward(tape, bound_.init_net, iv);
        return xnode::readout_eval(tape, bound_, h0);
    }

    double predict(double t, const double* x) override {
        scratch_.clear();
        bind(scratch_);
        ad::NodeId v = record_value_at(scratch_, t, x);
        return v == ad::kNoNode ? std::numeric_limits<double>::quiet_NaN() : scratch_.value(v);
    }

    nlohmann::json params_to_json() const override {
        auto j = xnode::to_json(current_params());
        j["kind"] = "xnode";
        return j;
    }
    void params_from_json(const nlohmann::json& j) override {
        auto p = xnode::xnode_from_json(j);
        if (p.theta1.config.param_count() != static_cast<int>(n1_) ||
            p.theta2.config.param_count() != static_cast<int>(n2_))
            throw std::invalid_argument("primal: xnode parameter shape mismatch");
        std::size_t k = 0;
        for (double v : p.theta1.values) flat_[k++] = v;
        for (double v : p.theta2.values) flat_[k++] = v;
        for (double v : p.readout) flat_[k++] = v;
    }

    xnode::XNodeParams current_params() const {
        xnode::XNodeParams p;
        p.theta1.config = theta1_cfg_;
        p.theta1.values.assign(flat_.begin(), flat_.begin() + static_cast<std::ptrdiff_t>(n1_));
        p.theta2.config = theta2_cfg_;
        p.theta2.values.assign(flat_.begin() + static_cast<std::ptrdiff_t>(n1_),
                               flat_.begin() + static_cast<std::ptrdiff_t>(n1_ + n2_));
        p.readout.assign(flat_.begin() + static_cast<std::ptrdiff_t>(n1_ + n2_), flat_.end());
        return p;
    }

private:
    /// Sub-path start value per the initial-condition rule: the initial
    /// datum for the first sub-path entering at t=0, the boundary datum at
    /// the entry time otherwise.
    double start_value(std::size_t sp, const domain::SubPathSchedule& sched, const double* x) const {
        const double entry = sched.intervals[sp].entry;
        if (sp == 0 && entry == 0.0) return problem_->h(x);
        return problem_->g(entry, x);
    }

    void start_gradient(std::size_t sp, const domain::SubPathSchedule& sched, const double* x, double* out) const {
        const double entry = sched.intervals[sp].entry;
        const int d = dim();
        if (problem_->exact && problem_->exact->grad) {
            problem_->exact->grad(sp == 0 && entry == 0.0 ? 0.0 : entry, x, out);
            return;
        }
        if (sp == 0 && entry == 0.0) {
            auto h2 = [this](double, const double* xs) { return problem_->h(xs); };
            pde::fd::grad(h2, 0.0, x, d, out);
        } else {
            pde::fd::grad(problem_->g, entry, x, d, out);
        }
    }

    /// Uniform partition at the training grid density, for scattered
    /// evaluation points.
    std::vector<double> eval_partition() const {
        const int n = std::max(eval_grid_, 2);
        std::vector<double> t(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = domain_->horizon * i / (n - 1);
        return t;
    }

    const pde::PdeProblem* problem_;
    const domain::DomainSpec* domain_;
    nets::MlpConfig theta1_cfg_, theta2_cfg_;
    int h_dim_ = 0, eval_grid_ = 10, substeps_ = 1;
    std::size_t n1_ = 0, n2_ = 0;
    std::vector<double> flat_;
    std::vector<ad::NodeId> leaves_;
    xnode::BoundXNode bound_;
    ad::Tape scratch_;
};

// --- exact-solution oracle ---------------------------------------------------------

/// Plugs the closed-form solution in as the primal; all derivatives enter as
/// constants. Used to sanity-check the weak form and the metrics pipeline.
class ExactPrimal : public Primal {
public:
    ExactPrimal(const pde::PdeProblem* problem, int dim) : problem_(problem), dim_(dim) {
        if (!problem_->exact) throw std::invalid_argument("primal: exact oracle needs exact_u");
    }

    std::string kind() const override { return "exact"; }
    int dim() const override { return dim_; }
    int param_count() const override { return 0; }
    std::span<double> params() override { return {}; }
    void bind(ad::Tape&) override {}
    std::span<const ad::NodeId> param_leaves() const override { return {}; }

    void record_interior(ad::Tape& tape, const double* x, const domain::SubPathSchedule& schedule,
                         const PhiRecorder& phi, InteriorRecord& out) override {
        const int d = dim_;
        out.clear();
        const auto& ex = *problem_->exact;
        std::vector<double> grad(static_cast<std::size_t>(d));
        std::vector<ad::NodeId> xn(static_cast<std::size_t>(d));
        for (const auto& list : schedule.times)
            for (double t : list) out.times.push_back(t);
        const std::size_t n = out.times.size();
        out.u_dx.assign(static_cast<std::size_t>(d) * n, ad::kNoNode);
        out.phi_dx.assign(static_cast<std::size_t>(d) * n, ad::kNoNode);
        ad::NodeId zero = ad::kNoNode;
        for (std::size_t k = 0; k < n; ++k) {
            const double t = out.times[k];
            out.u.push_back(tape.constant(ex.u(t, x)));
            out.u_dt.push_back(tape.constant(ex.ut ? ex.ut(t, x) : pde::fd::ut(ex.u, t, x)));
            if (ex.grad)
                ex.grad(t, x, grad.data());
            else
                pde::fd::grad(ex.u, t, x, d, grad.data());
            for (int i = 0; i < d; ++i)
                out.u_dx[static_cast<std::size_t>(i) * n + k] = tape.constant(grad[static_cast<std::size_t>(i)]);
            // test function still needs its spatial tangents
            for (int dir = 0; dir < d; ++dir) {
                tape.begin_tangent();
                for (int i = 0; i < d; ++i) xn[static_cast<std::size_t>(i)] = tape.seeded(x[i], i == dir ? 1.0 : 0.0);
                ad::NodeId ph = phi(tape, t, xn);
                out.phi_dx[static_cast<std::size_t>(dir) * n + k] = detail::nz(tape, tape.tangent_node(ph), zero);
                if (dir == 0) out.phi.push_back(ph);
                tape.end_tangent();
            }
        }
    }

    std::vector<ad::NodeId> record_path_values(ad::Tape& tape, const double* x,
                                               std::span<const double> times) override {
        std::vector<ad::NodeId> out;
        out.reserve(times.size());
        for (double t : times) out.push_back(tape.constant(problem_->exact->u(t, x)));
        return out;
    }

    ad::NodeId record_value_at(ad::Tape& tape, double t, const double* x) override {
        return tape.constant(problem_->exact->u(t, x));
    }
    ad::NodeId record_initial_value(ad::Tape& tape, const double* x) override {
        return tape.constant(problem_->exact->u(0.0, x));
    }
    double predict(double t, const double* x) override { return problem_->exact->u(t, x); }

    nlohmann::json params_to_json() const override { return {{"kind", "exact"}}; }
    void params_from_json(const nlohmann::json&) override {}

private:
    const pde::PdeProblem* problem_;
    int dim_;
};

}  // namespace xwan::primal
