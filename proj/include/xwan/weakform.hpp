#pragma once

// Weak-form residual and the three-term adversarial loss. The test function
// is an MLP times the boundary-distance cutoff, so it lies in H^1_0 of every
// spatial slice by construction. Monte Carlo estimators are sample means
// times set measures; the interior loss is the log-normalized squared
// residual with a 1e-12 floor against log(0).
//
// Two assembly routes produce identical gradients: everything on one tape
// with a single reverse sweep (the contract), and a per-point route that
// combines small-tape sweeps through the analytic outer derivatives (what the
// trainer's hot loop uses).

#include <span>
#include <stdexcept>
#include <vector>

#include "xwan/domain.hpp"
#include "xwan/nets.hpp"
#include "xwan/pde.hpp"
#include "xwan/primal.hpp"

namespace xwan::weakform {

inline constexpr double kClampFloor = 1e-12;

struct LossBreakdown {
    double l_int = 0.0, l_bdry = 0.0, l_init = 0.0, total = 0.0;
    double residual = 0.0;      // signed MC estimate of B(u, phi) - f(phi)
    double residual_sq = 0.0;   // |B - f(phi)|^2
    double phi_norm_sq = 0.0;   // MC estimate of ||phi||^2_{L^2(D)}
};

/// phi_eta(t, x) * boundary cutoff, recorded on the tape; vanishes on the
/// spatial boundary exactly.
inline ad::NodeId test_function(ad::Tape& tape, const nets::BoundMlp& phi_net, const domain::DomainSpec& dom,
                                double t, std::span<const ad::NodeId> x) {
    std::vector<ad::NodeId> in;
    in.reserve(x.size() + 1);
    in.push_back(tape.constant(t));
    in.insert(in.end(), x.begin(), x.end());
    const ad::NodeId raw = nets::mlp_forward(tape, phi_net, in)[0];
    return tape.mul(domain::boundary_distance_ad(tape, dom, t, x), raw);
}

/// One collocation point's contribution to B(u, phi) - f(phi):
///   du/dt phi + sum_ij a_ij dj(u) di(phi) + sum_i b_i di(u) phi + c(u) phi - f phi.
/// `u_dx`/`phi_dx` are direction-major with stride `n` and offset `k`.
inline ad::NodeId residual_integrand(ad::Tape& tape, const pde::PdeProblem& prob, double t, const double* x,
                                     ad::NodeId u, ad::NodeId u_dt, std::span<const ad::NodeId> u_dx,
                                     ad::NodeId phi, std::span<const ad::NodeId> phi_dx, std::size_t n,
                                     std::size_t k) {
    const int d = prob.dim;
    ad::NodeId acc = tape.mul(u_dt, phi);
    if (prob.identity_diffusion()) {
        for (int i = 0; i < d; ++i)
            acc = tape.add(acc, tape.mul(u_dx[static_cast<std::size_t>(i) * n + k], phi_dx[static_cast<std::size_t>(i) * n + k]));
    } else {
        std::vector<double> a(static_cast<std::size_t>(d * d));
        prob.a(t, x, a.data());
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                const double aij = a[static_cast<std::size_t>(i * d + j)];
                if (aij == 0.0) continue;
                acc = tape.add(acc, tape.mul(tape.constant(aij),
                                             tape.mul(u_dx[static_cast<std::size_t>(j) * n + k],
                                                      phi_dx[static_cast<std::size_t>(i) * n + k])));
            }
    }
    if (!prob.zero_drift()) {
        std::vector<double> b(static_cast<std::size_t>(d));
        prob.b(t, x, b.data());
        for (int i = 0; i < d; ++i) {
            if (b[static_cast<std::size_t>(i)] == 0.0) continue;
            acc = tape.add(acc, tape.mul(tape.constant(b[static_cast<std::size_t>(i)]),
                                         tape.mul(u_dx[static_cast<std::size_t>(i) * n + k], phi)));
        }
    }
    ad::Var cu = prob.c_tape(ad::make_var(tape, u), t, x);
    acc = tape.add(acc, tape.mul(cu.id, phi));
    acc = tape.sub(acc, tape.mul(tape.constant(prob.f(t, x)), phi));
    return acc;
}

struct UEval {
    std::span<const ad::NodeId> values, dt, dx;  // dx direction-major, stride = #points
};
struct PhiEval {
    std::span<const ad::NodeId> values, dx;
};

/// Monte Carlo estimate of B(u, phi) - f(phi) over the given (t, x) rows.
inline ad::Var weak_residual(ad::Tape& tape, const pde::PdeProblem& prob,
                             std::span<const double> points, const UEval& u, const PhiEval& phi,
                             double volume) {
    const std::size_t n = u.values.size();
    const std::size_t row = static_cast<std::size_t>(prob.dim) + 1;
    if (points.size() != n * row || u.dt.size() != n || phi.values.size() != n ||
        u.dx.size() != n * static_cast<std::size_t>(prob.dim) || phi.dx.size() != n * static_cast<std::size_t>(prob.dim))
        throw std::invalid_argument("weakform: mismatched evaluation sizes");
    if (n == 0) throw std::invalid_argument("weakform: no interior points");
    ad::NodeId sum = ad::kNoNode;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = points[k * row];
        const double* x = &points[k * row + 1];
        ad::NodeId term = residual_integrand(tape, prob, t, x, u.values[k], u.dt[k], u.dx, phi.values[k], phi.dx, n, k);
        sum = (sum == ad::kNoNode) ? term : tape.add(sum, term);
    }
    return ad::make_var(tape, tape.mul(tape.constant(volume / static_cast<double>(n)), sum));
}

// --- loss terms -------------------------------------------------------------------

/// log(max(residual^2, floor) / max(phi_norm_sq, floor)).
inline ad::Var loss_int(ad::Var residual, ad::Var phi_norm_sq) {
    ad::Var r2 = residual * residual;
    return ad::log(ad::clamp_below(r2, kClampFloor)) - ad::log(ad::clamp_below(phi_norm_sq, kClampFloor));
}

inline double loss_int_value(double residual, double phi_norm_sq) {
    const double r2 = residual * residual;
    return std::log(std::max(r2, kClampFloor)) - std::log(std::max(phi_norm_sq, kClampFloor));
}

/// Mean squared misfit times the measure of the set the points sample.
inline ad::Var mean_square_misfit(ad::Tape& tape, std::span<const ad::NodeId> values,
                                  std::span<const double> targets, double measure) {
    if (values.empty()) throw std::invalid_argument("weakform: empty evaluation list");
    if (values.size() != targets.size()) throw std::invalid_argument("weakform: misaligned targets");
    ad::NodeId sum = ad::kNoNode;
    for (std::size_t k = 0; k < values.size(); ++k) {
        ad::NodeId diff = tape.sub(values[k], tape.constant(targets[k]));
        ad::NodeId sq = tape.mul(diff, diff);
        sum = (sum == ad::kNoNode) ? sq : tape.add(sum, sq);
    }
    return ad::make_var(tape, tape.mul(tape.constant(measure / static_cast<double>(values.size())), sum));
}

inline ad::Var loss_bdry(ad::Tape& tape, std::span<const ad::NodeId> u_values, std::span<const double> g_values,
                         double boundary_measure) {
    return mean_square_misfit(tape, u_values, g_values, boundary_measure);
}

inline ad::Var loss_init(ad::Tape& tape, std::span<const ad::NodeId> u0_values, std::span<const double> h_values,
                         double initial_measure) {
    return mean_square_misfit(tape, u0_values, h_values, initial_measure);
}

// --- full-loss assembly --------------------------------------------------------------

struct OneTapeLoss {
    LossBreakdown breakdown;
    ad::Var total;
    std::vector<ad::NodeId> primal_leaves, phi_leaves;
};

struct LossGrads {
    LossBreakdown breakdown;
    std::vector<double> d_primal, d_phi;
};

class LossAssembler {
public:
    LossAssembler(const pde::PdeProblem* problem, const domain::DomainSpec* dom, double alpha, double gamma)
        : problem_(problem), domain_(dom), alpha_(alpha), gamma_(gamma) {}

    double alpha() const { return alpha_; }
    double gamma() const { return gamma_; }

    /// Sub-path schedules of every interior spatial point of the plan
    /// (single full-horizon sub-paths on constant domains).
    std::vector<domain::SubPathSchedule> interior_schedules(const domain::SamplePlan& plan) const {
        std::vector<domain::SubPathSchedule> out;
        out.reserve(static_cast<std::size_t>(plan.n_r));
        for (int j = 0; j < plan.n_r; ++j) {
            std::span<const double> x(&plan.s_r[static_cast<std::size_t>(j) * static_cast<std::size_t>(plan.dim)],
                                      static_cast<std::size_t>(plan.dim));
            out.push_back(domain::build_subpath_times(*domain_, x, plan.pi_t));
        }
        return out;
    }

    /// Everything on one tape; one reverse sweep from `total` yields every
    /// parameter gradient.
    OneTapeLoss assemble(ad::Tape& tape, primal::Primal& u, const nets::MlpParams& phi,
                         const domain::SamplePlan& plan,
                         const std::vector<domain::SubPathSchedule>& schedules) {
        u.bind(tape);
        auto phi_bound = nets::bind(tape, phi);
        auto phi_rec = make_phi_recorder(phi_bound);

        ad::NodeId r_sum = ad::kNoNode, p_sum = ad::kNoNode;
        std::size_t m_int = 0;
        primal::InteriorRecord rec;
        for (int j = 0; j < plan.n_r; ++j) {
            const auto& sched = schedules[static_cast<std::size_t>(j)];
            if (sched.empty()) continue;
            const double* x = sched.x.data();
            u.record_interior(tape, x, sched, phi_rec, rec);
            const std::size_t n = rec.times.size();
            for (std::size_t k = 0; k < n; ++k) {
                ad::NodeId term = residual_integrand(tape, *problem_, rec.times[k], x, rec.u[k], rec.u_dt[k],
                                                     rec.u_dx, rec.phi[k], rec.phi_dx, n, k);
                r_sum = (r_sum == ad::kNoNode) ? term : tape.add(r_sum, term);
                ad::NodeId sq = tape.mul(rec.phi[k], rec.phi[k]);
                p_sum = (p_sum == ad::kNoNode) ? sq : tape.add(p_sum, sq);
                ++m_int;
            }
        }
        if (m_int == 0) throw std::invalid_argument("weakform: no interior collocation points");
        const double vol = domain::domain_measure(*domain_);
        ad::Var residual = ad::make_var(tape, tape.mul(tape.constant(vol / static_cast<double>(m_int)), r_sum));
        ad::Var phi_norm = ad::make_var(tape, tape.mul(tape.constant(vol / static_cast<double>(m_int)), p_sum));
        ad::Var li = loss_int(residual, phi_norm);

        auto [bu, bg] = boundary_values(tape, u, plan);
        ad::Var lb = loss_bdry(tape, bu, bg, domain::boundary_measure(*domain_));
        auto [iu, ih] = initial_values(tape, u, plan);
        ad::Var l0 = loss_init(tape, iu, ih, domain::initial_measure(*domain_));

        ad::Var total = li + alpha_ * lb + gamma_ * l0;
        OneTapeLoss out;
        out.breakdown = {li.value(), lb.value(), l0.value(), total.value(),
                         residual.value(), residual.value() * residual.value(), phi_norm.value()};
        out.total = total;
        out.primal_leaves.assign(u.param_leaves().begin(), u.param_leaves().end());
        out.phi_leaves = std::move(phi_bound.nodes);
        return out;
    }

    /// Per-point tapes with the outer log/ratio derivatives applied
    /// analytically; gradients match `assemble` + backward.
    LossGrads assemble_grads(primal::Primal& u, const nets::MlpParams& phi, const domain::SamplePlan& plan,
                             const std::vector<domain::SubPathSchedule>& schedules) {
        const std::size_t np = static_cast<std::size_t>(u.param_count());
        const std::size_t nq = static_cast<std::size_t>(phi.count());
        LossGrads out;
        out.d_primal.assign(np, 0.0);
        out.d_phi.assign(nq, 0.0);
        std::vector<double> g_theta(np, 0.0), g_eta(nq, 0.0), q_eta(nq, 0.0), b_theta(np, 0.0), i_theta(np, 0.0);

        double r_sum = 0.0, p_sum = 0.0;
        std::size_t m_int = 0;
        primal::InteriorRecord rec;
        for (int j = 0; j < plan.n_r; ++j) {
            const auto& sched = schedules[static_cast<std::size_t>(j)];
            if (sched.empty()) continue;
            tape_.clear();
            u.bind(tape_);
            auto phi_bound = nets::bind(tape_, phi);
            auto phi_rec = make_phi_recorder(phi_bound);
            const double* x = sched.x.data();
            u.record_interior(tape_, x, sched, phi_rec, rec);
            const std::size_t n = rec.times.size();
            ad::NodeId rj = ad::kNoNode, pj = ad::kNoNode;
            for (std::size_t k = 0; k < n; ++k) {
                ad::NodeId term = residual_integrand(tape_, *problem_, rec.times[k], x, rec.u[k], rec.u_dt[k],
                                                     rec.u_dx, rec.phi[k], rec.phi_dx, n, k);
                rj = (rj == ad::kNoNode) ? term : tape_.add(rj, term);
                ad::NodeId sq = tape_.mul(rec.phi[k], rec.phi[k]);
                pj = (pj == ad::kNoNode) ? sq : tape_.add(pj, sq);
            }
            m_int += n;
            r_sum += tape_.value(rj);
            p_sum += tape_.value(pj);
            tape_.backward(rj);
            accumulate(tape_, u.param_leaves(), g_theta);
            accumulate(tape_, phi_bound.nodes, g_eta);
            tape_.backward(pj);
            accumulate(tape_, phi_bound.nodes, q_eta);
        }
        if (m_int == 0) throw std::invalid_argument("weakform: no interior collocation points");
        const double vol = domain::domain_measure(*domain_);
        const double scale = vol / static_cast<double>(m_int);
        const double residual = scale * r_sum;
        const double phi_norm = scale * p_sum;

        // boundary, all points on one tape
        double lb;
        {
            tape_.clear();
            u.bind(tape_);
            auto [bu, bg] = boundary_values(tape_, u, plan);
            ad::Var v = loss_bdry(tape_, bu, bg, domain::boundary_measure(*domain_));
            lb = v.value();
            tape_.backward(v.id);
            accumulate(tape_, u.param_leaves(), b_theta);
        }
        double l0;
        {
            tape_.clear();
            u.bind(tape_);
            auto [iu, ih] = initial_values(tape_, u, plan);
            ad::Var v = loss_init(tape_, iu, ih, domain::initial_measure(*domain_));
            l0 = v.value();
            tape_.backward(v.id);
            accumulate(tape_, u.param_leaves(), i_theta);
        }

        const double li = loss_int_value(residual, phi_norm);
        const double w_r = (residual * residual > kClampFloor) ? 2.0 / residual : 0.0;
        const double w_p = (phi_norm > kClampFloor) ? -1.0 / phi_norm : 0.0;
        for (std::size_t i = 0; i < np; ++i)
            out.d_primal[i] = w_r * scale * g_theta[i] + alpha_ * b_theta[i] + gamma_ * i_theta[i];
        for (std::size_t i = 0; i < nq; ++i)
            out.d_phi[i] = w_r * scale * g_eta[i] + w_p * scale * q_eta[i];
        out.breakdown = {li, lb, l0, li + alpha_ * lb + gamma_ * l0, residual, residual * residual, phi_norm};
        return out;
    }

private:
    primal::PhiRecorder make_phi_recorder(const nets::BoundMlp& phi_bound) {
        return [this, &phi_bound](ad::Tape& tape, double t, std::span<const ad::NodeId> x) {
            return test_function(tape, phi_bound, *domain_, t, x);
        };
    }

    std::pair<std::vector<ad::NodeId>, std::vector<double>> boundary_values(ad::Tape& tape, primal::Primal& u,
                                                                            const domain::SamplePlan& plan) {
        std::vector<ad::NodeId> values;
        std::vector<double> targets;
        const int d = plan.dim;
        if (!domain_->time_varying()) {
            for (int j = 0; j < plan.n_b; ++j) {
                const double* x = &plan.s_b[static_cast<std::size_t>(j) * static_cast<std::size_t>(d)];
                auto nodes = u.record_path_values(tape, x, plan.pi_t);
                for (std::size_t k = 0; k < nodes.size(); ++k) {
                    values.push_back(nodes[k]);
                    targets.push_back(problem_->g(plan.pi_t[k], x));
                }
            }
        } else {
            for (int j = 0; j < plan.n_b; ++j) {
                const double* row = &plan.boundary_spacetime[static_cast<std::size_t>(j) * static_cast<std::size_t>(1 + d)];
                ad::NodeId v = u.record_value_at(tape, row[0], row + 1);
                if (v == ad::kNoNode) continue;  // outside every sub-path
                values.push_back(v);
                targets.push_back(problem_->g(row[0], row + 1));
            }
        }
        return {std::move(values), std::move(targets)};
    }

    std::pair<std::vector<ad::NodeId>, std::vector<double>> initial_values(ad::Tape& tape, primal::Primal& u,
                                                                           const domain::SamplePlan& plan) {
        std::vector<ad::NodeId> values;
        std::vector<double> targets;
        const int d = plan.dim;
        const std::size_t n0 = plan.initial_points.size() / static_cast<std::size_t>(d);
        for (std::size_t j = 0; j < n0; ++j) {
            const double* x = &plan.initial_points[j * static_cast<std::size_t>(d)];
            values.push_back(u.record_initial_value(tape, x));
            targets.push_back(problem_->h(x));
        }
        return {std::move(values), std::move(targets)};
    }

    static void accumulate(const ad::Tape& tape, std::span<const ad::NodeId> ids, std::vector<double>& acc) {
        for (std::size_t i = 0; i < ids.size(); ++i) acc[i] += tape.adjoint(ids[i]);
    }

    const pde::PdeProblem* problem_;
    const domain::DomainSpec* domain_;
    double alpha_, gamma_;
    ad::Tape tape_;
};

}  // namespace xwan::weakform
