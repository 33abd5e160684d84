#pragma once

// Alternating min-max training: K_u Adam descent steps on the primal, K_phi
// ascent steps on the test network, fresh collocation plan each epoch.
// Benchmark runs stop on the relative-error estimate (checked every few
// epochs); runs without a closed-form solution fall back to the raw loss
// threshold. Divergence aborts the epoch, halves the primal rate and
// resamples, at most three times per run.

#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xwan/weakform.hpp"

namespace xwan::trainer {

// --- optimizer --------------------------------------------------------------------

struct AdamState {
    std::vector<double> m, v;
    long step_count = 0;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// Standard Adam update; `ascent` flips the step sign for the adversary.
inline void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads, double lr,
                      bool ascent = false) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("trainer: adam shape mismatch");
    ++state.step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step_count));
    const double sign = ascent ? 1.0 : -1.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] += sign * lr * mhat / (std::sqrt(vhat) + eps);
    }
}

// --- relative L2 error ---------------------------------------------------------------

struct RelError {
    double mean = 0.0;
    double se = 0.0;
    int excluded = 0;  // points the predictor could not evaluate (outside sub-paths)
};

/// Mean and standard error over trials of ||u_hat - u|| / ||u||, each trial
/// on fresh uniform points inside D. NaN predictions are excluded and
/// counted.
inline RelError relative_error(const std::function<double(double, const double*)>& predictor,
                               const std::function<double(double, const double*)>& exact_u,
                               const domain::DomainSpec& dom, int n_points, int n_trials, std::uint64_t seed) {
    RelError out;
    std::vector<double> errors;
    errors.reserve(static_cast<std::size_t>(n_trials));
    const int d = dom.dim();
    std::vector<double> x(static_cast<std::size_t>(d));
    for (int trial = 0; trial < n_trials; ++trial) {
        Rng rng(derive_seed(seed, stream::kTrial, static_cast<std::uint64_t>(trial)));
        double num = 0.0, den = 0.0;
        for (int i = 0; i < n_points; ++i) {
            double t;
            domain::sample_spacetime(dom, rng, t, x.data());
            const double pred = predictor(t, x.data());
            if (!std::isfinite(pred)) {
                ++out.excluded;
                continue;
            }
            const double ref = exact_u(t, x.data());
            num += (pred - ref) * (pred - ref);
            den += ref * ref;
        }
        if (den == 0.0) throw std::runtime_error("trainer: exact solution vanishes on the sample");
        errors.push_back(std::sqrt(num / den));
    }
    for (double e : errors) out.mean += e;
    out.mean /= static_cast<double>(errors.size());
    if (errors.size() > 1) {
        double var = 0.0;
        for (double e : errors) var += (e - out.mean) * (e - out.mean);
        var /= static_cast<double>(errors.size() - 1);
        out.se = std::sqrt(var / static_cast<double>(errors.size()));
    }
    return out;
}

// --- configuration -------------------------------------------------------------------

enum class PrimalKind { Dnn, Xnode, Exact };

inline std::string to_string(PrimalKind k) {
    switch (k) {
        case PrimalKind::Dnn: return "dnn";
        case PrimalKind::Xnode: return "xnode";
        case PrimalKind::Exact: return "exact";
    }
    return "?";
}
inline PrimalKind primal_kind_from_string(const std::string& s) {
    if (s == "dnn") return PrimalKind::Dnn;
    if (s == "xnode") return PrimalKind::Xnode;
    if (s == "exact") return PrimalKind::Exact;
    throw std::invalid_argument("trainer: unknown primal kind '" + s + "'");
}

struct TrainConfig {
    std::string preset = "example1";
    int dim = 5;
    int n_r = 400, n_b = 400, n_t = 20;
    int k_u = 2, k_phi = 1;
    double alpha = -1.0, gamma = -1.0;  // negative: use 400000 * d^2
    double tau_primal = -1.0;           // negative: 0.015 (xnode) / 0.00005 (dnn)
    double tau_eta = 0.04;
    int max_epochs = 2000;
    double epsilon = 1e-3;  // stopping tolerance on the relative error
    int eval_points = 2000, eval_trials = 50;
    int eval_every = 10, eval_points_stop = 2000;
    std::uint64_t seed = 42;
    PrimalKind primal_kind = PrimalKind::Xnode;
    std::vector<int> dnn_hidden{40, 40, 40, 40, 40, 40};
    std::vector<int> phi_hidden{40, 40, 40, 40, 40, 40};
    int xnode_h_dim = 16;
    std::vector<int> xnode_vec_hidden{18, 18};
    std::vector<int> xnode_init_hidden{16};
    int substeps = 1;
    int threads = 1;  // concurrency for sweep runs; training itself is sequential

    double resolved_alpha() const { return alpha >= 0.0 ? alpha : 400000.0 * dim * dim; }
    double resolved_gamma() const { return gamma >= 0.0 ? gamma : 400000.0 * dim * dim; }
    double resolved_tau_primal() const {
        if (tau_primal >= 0.0) return tau_primal;
        return primal_kind == PrimalKind::Xnode ? 0.015 : 0.00005;
    }

    void validate() const {
        if (n_r < 1 || n_b < 1 || n_t < 2) throw std::invalid_argument("trainer: sample counts too small");
        if (k_u < 1 || k_phi < 1) throw std::invalid_argument("trainer: inner iteration counts must be >= 1");
        if (max_epochs < 1) throw std::invalid_argument("trainer: max_epochs must be >= 1");
        if (eval_every < 1 || eval_points < 1 || eval_trials < 1 || eval_points_stop < 1)
            throw std::invalid_argument("trainer: evaluation settings must be >= 1");
        if (substeps < 1) throw std::invalid_argument("trainer: substeps must be >= 1");
        if (threads < 1) throw std::invalid_argument("trainer: threads must be >= 1");
    }
};

struct MetricsRecord {
    int epoch = 0;
    double wall_s = 0.0;  // cumulative training time
    weakform::LossBreakdown loss;
    double rel_err = std::numeric_limits<double>::quiet_NaN();
    double rel_err_se = std::numeric_limits<double>::quiet_NaN();
    bool evaluated = false;
};

enum class StopReason { Tolerance, LossTolerance, MaxEpochs, Diverged };

inline std::string to_string(StopReason r) {
    switch (r) {
        case StopReason::Tolerance: return "tolerance";
        case StopReason::LossTolerance: return "loss_tolerance";
        case StopReason::MaxEpochs: return "max_epochs";
        case StopReason::Diverged: return "diverged";
    }
    return "?";
}

struct TrainResult {
    std::unique_ptr<primal::Primal> model;
    nets::MlpParams phi;
    std::vector<MetricsRecord> history;
    StopReason stop = StopReason::MaxEpochs;
    double final_rel_err = std::numeric_limits<double>::quiet_NaN();
    double final_rel_err_se = std::numeric_limits<double>::quiet_NaN();
    int epochs_run = 0;
    double wall_s = 0.0;
    int divergence_retries = 0;
    int excluded_eval_points = 0;

    double time_per_epoch() const { return epochs_run > 0 ? wall_s / epochs_run : 0.0; }
};

/// First evaluated epoch (and its cumulative wall time) with error <= eps.
inline std::pair<std::optional<int>, std::optional<double>> n_epsilon_t_epsilon(
    const std::vector<MetricsRecord>& history, double eps) {
    for (const auto& rec : history)
        if (rec.evaluated && rec.rel_err <= eps) return {rec.epoch, rec.wall_s};
    return {std::nullopt, std::nullopt};
}

// --- training ------------------------------------------------------------------------

inline std::unique_ptr<primal::Primal> make_primal(const TrainConfig& cfg, const pde::Preset& preset) {
    const int d = preset.domain.dim();
    switch (cfg.primal_kind) {
        case PrimalKind::Dnn:
            return std::make_unique<primal::DnnPrimal>(nets::MlpConfig{d + 1, cfg.dnn_hidden, 1},
                                                       derive_seed(cfg.seed, stream::kInit, 1));
        case PrimalKind::Xnode:
            return std::make_unique<primal::XnodePrimal>(
                xnode::XNodeConfig{cfg.xnode_h_dim, d, cfg.xnode_init_hidden, cfg.xnode_vec_hidden},
                &preset.problem, &preset.domain, derive_seed(cfg.seed, stream::kInit, 2), cfg.n_t, cfg.substeps);
        case PrimalKind::Exact:
            return std::make_unique<primal::ExactPrimal>(&preset.problem, d);
    }
    throw std::logic_error("trainer: unreachable");
}

/// Full training run against a prebuilt problem/domain pair.
inline TrainResult train(const TrainConfig& cfg, const pde::Preset& preset) {
    cfg.validate();
    TrainResult result;
    result.model = make_primal(cfg, preset);
    result.phi = nets::init_params({preset.domain.dim() + 1, cfg.phi_hidden, 1},
                                   derive_seed(cfg.seed, stream::kInit, 3));

    weakform::LossAssembler assembler(&preset.problem, &preset.domain, cfg.resolved_alpha(), cfg.resolved_gamma());
    AdamState opt_primal(static_cast<std::size_t>(result.model->param_count()));
    AdamState opt_phi(result.phi.values.size());
    double tau_primal = cfg.resolved_tau_primal();
    const bool benchmark = preset.problem.exact.has_value() && cfg.primal_kind != PrimalKind::Exact;

    auto predictor = [&](double t, const double* x) { return result.model->predict(t, x); };
    double wall = 0.0;
    int retries = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::vector<double> snapshot_primal(result.model->params().begin(), result.model->params().end());
        std::vector<double> snapshot_phi = result.phi.values;
        AdamState snap_opt_primal = opt_primal, snap_opt_phi = opt_phi;

        MetricsRecord rec;
        rec.epoch = epoch;
        bool epoch_ok = false;
        while (!epoch_ok) {
            const auto t0 = std::chrono::steady_clock::now();
            try {
                auto plan = domain::sample_plan(preset.domain, cfg.n_t, cfg.n_r, cfg.n_b,
                                                derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch),
                                                            static_cast<std::uint64_t>(retries)));
                auto schedules = assembler.interior_schedules(plan);
                bool first = true;
                for (int k = 0; k < cfg.k_u; ++k) {
                    auto grads = assembler.assemble_grads(*result.model, result.phi, plan, schedules);
                    if (!std::isfinite(grads.breakdown.total))
                        throw xnode::DivergenceError("trainer: non-finite loss", epoch);
                    if (first) {
                        rec.loss = grads.breakdown;
                        first = false;
                    }
                    if (result.model->param_count() > 0)
                        adam_step(opt_primal, result.model->params(), grads.d_primal, tau_primal, false);
                }
                for (int k = 0; k < cfg.k_phi; ++k) {
                    auto grads = assembler.assemble_grads(*result.model, result.phi, plan, schedules);
                    if (!std::isfinite(grads.breakdown.total))
                        throw xnode::DivergenceError("trainer: non-finite loss", epoch);
                    adam_step(opt_phi, result.phi.values, grads.d_phi, cfg.tau_eta, true);
                }
                epoch_ok = true;
            } catch (const xnode::DivergenceError&) {
                // roll the epoch back, halve the primal rate, resample
                std::copy(snapshot_primal.begin(), snapshot_primal.end(), result.model->params().begin());
                result.phi.values = snapshot_phi;
                opt_primal = snap_opt_primal;
                opt_phi = snap_opt_phi;
                tau_primal *= 0.5;
                ++retries;
                result.divergence_retries = retries;
                if (retries > 3) {
                    result.stop = StopReason::Diverged;
                    result.epochs_run = epoch - 1;
                    result.wall_s = wall;
                    return result;
                }
            }
            wall += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        rec.wall_s = wall;
        result.epochs_run = epoch;

        const bool eval_now = benchmark && (epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs);
        if (eval_now) {
            auto err = relative_error(predictor, preset.problem.exact->u, preset.domain, cfg.eval_points_stop, 1,
                                      derive_seed(cfg.seed, stream::kEval, static_cast<std::uint64_t>(epoch)));
            rec.rel_err = err.mean;
            rec.rel_err_se = err.se;
            rec.evaluated = true;
            result.excluded_eval_points += err.excluded;
        }
        result.history.push_back(rec);
        if (rec.evaluated && rec.rel_err <= cfg.epsilon) {
            result.stop = StopReason::Tolerance;
            break;
        }
        if (!benchmark && cfg.primal_kind != PrimalKind::Exact && rec.loss.total <= cfg.epsilon) {
            result.stop = StopReason::LossTolerance;
            break;
        }
    }
    result.wall_s = wall;

    if (preset.problem.exact) {
        auto err = relative_error(predictor, preset.problem.exact->u, preset.domain, cfg.eval_points,
                                  cfg.eval_trials, derive_seed(cfg.seed, stream::kTrial, 0xF1AAL));
        result.final_rel_err = err.mean;
        result.final_rel_err_se = err.se;
        result.excluded_eval_points += err.excluded;
    }
    return result;
}

inline TrainResult train(const TrainConfig& cfg) {
    auto preset = pde::make_preset(cfg.preset, cfg.dim);
    return train(cfg, preset);
}

}  // namespace xwan::trainer
