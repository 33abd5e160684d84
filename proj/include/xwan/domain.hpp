#pragma once

// Spatio-temporal domain geometry: membership, uniform sampling, the
// boundary-distance cutoff used to pin test functions to H^1_0, entry/exit
// times of constant spatial paths through time-varying domains, and the
// per-path collocation schedules built from them.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "xwan/ad.hpp"
#include "xwan/rng.hpp"

namespace xwan::domain {

class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unit cube [0,1]^d, constant in time.
struct HyperCube {
    int dim = 1;
};

/// Closed ball, constant in time.
struct Ball {
    std::vector<double> center;
    double radius = 1.0;
};

/// The 1-d hourglass on [0,1] x [0,1]: half-width 0.5(1-t) up to t=1/2,
/// then 0.5t, around center 0.5.
struct Hourglass1D {};

/// Arbitrary time-varying domain described by an indicator. The per-x
/// interval solver and cutoff distance are optional; entry/exit fall back to
/// a scan-plus-bisection on the indicator.
struct GeneralTimeVarying {
    int dim = 1;
    std::function<bool(double, std::span<const double>)> inside;
    std::function<std::vector<std::pair<double, double>>(std::span<const double>)> intervals;
    std::vector<double> lo, hi;  // Omega_max box
    std::function<double(double, std::span<const double>)> distance;
    std::function<void(Rng&, double&, double*)> boundary_sample;  // writes (t, x)
    double measure = -1.0, boundary_area = -1.0, initial_measure = -1.0;
};

struct DomainSpec {
    std::variant<HyperCube, Ball, Hourglass1D, GeneralTimeVarying> kind;
    double horizon = 1.0;

    int dim() const {
        if (auto* c = std::get_if<HyperCube>(&kind)) return c->dim;
        if (auto* b = std::get_if<Ball>(&kind)) return static_cast<int>(b->center.size());
        if (std::holds_alternative<Hourglass1D>(kind)) return 1;
        return std::get<GeneralTimeVarying>(kind).dim;
    }

    bool time_varying() const {
        return std::holds_alternative<Hourglass1D>(kind) || std::holds_alternative<GeneralTimeVarying>(kind);
    }
};

inline DomainSpec make_cube(int dim, double horizon = 1.0) { return {HyperCube{dim}, horizon}; }
inline DomainSpec make_ball(std::vector<double> center, double radius, double horizon = 1.0) {
    return {Ball{std::move(center), radius}, horizon};
}
inline DomainSpec make_hourglass() { return {Hourglass1D{}, 1.0}; }

// --- membership -------------------------------------------------------------

inline double hourglass_halfwidth(double t) { return t <= 0.5 ? 0.5 * (1.0 - t) : 0.5 * t; }

inline bool spatial_inside(const DomainSpec& dom, double t, std::span<const double> x) {
    if (auto* c = std::get_if<HyperCube>(&dom.kind)) {
        (void)c;
        for (double xi : x)
            if (xi < 0.0 || xi > 1.0) return false;
        return true;
    }
    if (auto* b = std::get_if<Ball>(&dom.kind)) {
        double r2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) r2 += (x[i] - b->center[i]) * (x[i] - b->center[i]);
        return r2 <= b->radius * b->radius;
    }
    if (std::holds_alternative<Hourglass1D>(dom.kind)) return std::abs(x[0] - 0.5) <= hourglass_halfwidth(t);
    return std::get<GeneralTimeVarying>(dom.kind).inside(t, x);
}

inline bool inside(const DomainSpec& dom, double t, std::span<const double> x) {
    if (t < 0.0 || t > dom.horizon) return false;
    return spatial_inside(dom, t, x);
}

// --- Omega_max ---------------------------------------------------------------

struct Box {
    std::vector<double> lo, hi;
};

/// Union over time of the spatial cross-sections (the smallest constant cover).
inline Box omega_max(const DomainSpec& dom) {
    const int d = dom.dim();
    if (std::holds_alternative<HyperCube>(dom.kind))
        return {std::vector<double>(static_cast<std::size_t>(d), 0.0), std::vector<double>(static_cast<std::size_t>(d), 1.0)};
    if (auto* b = std::get_if<Ball>(&dom.kind)) {
        Box box;
        for (int i = 0; i < d; ++i) {
            box.lo.push_back(b->center[static_cast<std::size_t>(i)] - b->radius);
            box.hi.push_back(b->center[static_cast<std::size_t>(i)] + b->radius);
        }
        return box;
    }
    if (std::holds_alternative<Hourglass1D>(dom.kind)) return {{0.0}, {1.0}};
    const auto& g = std::get<GeneralTimeVarying>(dom.kind);
    return {g.lo, g.hi};
}

// --- entry/exit points --------------------------------------------------------

struct Interval {
    double entry, exit;
};

namespace detail {

inline double bisect_transition(const DomainSpec& dom, std::span<const double> x, double t_in, double t_out) {
    // invariant: inside at t_in, outside at t_out (either order in time)
    for (int it = 0; it < 60 && std::abs(t_out - t_in) > 1e-10; ++it) {
        const double mid = 0.5 * (t_in + t_out);
        if (spatial_inside(dom, mid, x))
            t_in = mid;
        else
            t_out = mid;
    }
    return 0.5 * (t_in + t_out);
}

}  // namespace detail

/// Entry/exit pairs of the constant path at x. A path still inside at the
/// horizon gets its exit clamped to T so the final sub-path is integrable.
inline std::vector<Interval> entry_exit_points(const DomainSpec& dom, std::span<const double> x) {
    const double T = dom.horizon;
    if (std::holds_alternative<HyperCube>(dom.kind) || std::holds_alternative<Ball>(dom.kind)) {
        if (spatial_inside(dom, 0.0, x)) return {{0.0, T}};
        return {};
    }
    if (std::holds_alternative<Hourglass1D>(dom.kind)) {
        const double q = std::abs(x[0] - 0.5);
        if (q > 0.5) return {};
        if (q <= 0.25) return {{0.0, T}};  // the two branches meet or overlap
        return {{0.0, 1.0 - 2.0 * q}, {2.0 * q, T}};
    }
    const auto& g = std::get<GeneralTimeVarying>(dom.kind);
    if (g.intervals) {
        std::vector<Interval> out;
        for (auto [a, b] : g.intervals(x)) out.push_back({a, std::min(b, T)});
        return out;
    }
    // scan for indicator transitions, then refine by bisection
    constexpr int kScan = 4096;
    std::vector<Interval> out;
    bool was_inside = spatial_inside(dom, 0.0, x);
    double t_prev = 0.0, entry = was_inside ? 0.0 : -1.0;
    for (int i = 1; i <= kScan; ++i) {
        const double t = T * static_cast<double>(i) / kScan;
        const bool now = spatial_inside(dom, t, x);
        if (now != was_inside) {
            const double cross = was_inside ? detail::bisect_transition(dom, x, t_prev, t)
                                            : detail::bisect_transition(dom, x, t, t_prev);
            if (was_inside) {
                out.push_back({entry, cross});
            } else {
                entry = cross;
            }
            was_inside = now;
        }
        t_prev = t;
    }
    if (was_inside) out.push_back({entry, T});
    return out;
}

// --- sub-path collocation ------------------------------------------------------

/// Per spatial point: its entry/exit intervals and the collocation times
/// assigned to each sub-path. Each list starts with the entry point, keeps
/// the partition times inside (entry, exit], and appends an exit strictly
/// before the horizon when the partition missed it.
struct SubPathSchedule {
    std::vector<double> x;
    std::vector<Interval> intervals;
    std::vector<std::vector<double>> times;

    std::size_t total_times() const {
        std::size_t n = 0;
        for (const auto& v : times) n += v.size();
        return n;
    }
    bool empty() const { return intervals.empty(); }
};

inline SubPathSchedule build_subpath_times(const DomainSpec& dom, std::span<const double> x,
                                           std::span<const double> pi_t) {
    SubPathSchedule s;
    s.x.assign(x.begin(), x.end());
    for (const Interval& iv : entry_exit_points(dom, x)) {
        std::vector<double> list{iv.entry};
        for (double t : pi_t)
            if (t > iv.entry && t <= iv.exit) list.push_back(t);
        if (list.back() < iv.exit && iv.exit < dom.horizon) list.push_back(iv.exit);
        s.intervals.push_back(iv);
        s.times.push_back(std::move(list));
    }
    return s;
}

// --- boundary-distance cutoff ---------------------------------------------------

/// Zero exactly on the spatial boundary of Omega(t), positive inside,
/// normalized to 1 at the natural center. Cube: prod 4 x_i (1-x_i);
/// ball: (r^2-|x-c|^2)/r^2; hourglass: (w(t)-|x-0.5|)/w(t).
inline double boundary_distance(const DomainSpec& dom, double t, std::span<const double> x) {
    if (std::holds_alternative<HyperCube>(dom.kind)) {
        double p = 1.0;
        for (double xi : x) p *= 4.0 * xi * (1.0 - xi);
        return p;
    }
    if (auto* b = std::get_if<Ball>(&dom.kind)) {
        double r2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) r2 += (x[i] - b->center[i]) * (x[i] - b->center[i]);
        return (b->radius * b->radius - r2) / (b->radius * b->radius);
    }
    if (std::holds_alternative<Hourglass1D>(dom.kind)) {
        const double w = hourglass_halfwidth(t);
        return (w - std::abs(x[0] - 0.5)) / w;
    }
    const auto& g = std::get<GeneralTimeVarying>(dom.kind);
    if (!g.distance) throw GeometryError("domain: general domain lacks a boundary-distance callable");
    return g.distance(t, x);
}

/// Same cutoff recorded on the tape so its spatial tangents exist.
/// |x-c| is built from relu(z)+relu(-z); the kink sits strictly inside.
inline ad::NodeId boundary_distance_ad(ad::Tape& tape, const DomainSpec& dom, double t,
                                       std::span<const ad::NodeId> x) {
    using ad::NodeId;
    if (std::holds_alternative<HyperCube>(dom.kind)) {
        NodeId p = ad::kNoNode;
        for (NodeId xi : x) {
            NodeId f = tape.mul(tape.constant(4.0), tape.mul(xi, tape.sub(tape.constant(1.0), xi)));
            p = (p == ad::kNoNode) ? f : tape.mul(p, f);
        }
        return p;
    }
    if (auto* b = std::get_if<Ball>(&dom.kind)) {
        NodeId r2 = ad::kNoNode;
        for (std::size_t i = 0; i < x.size(); ++i) {
            NodeId dx = tape.sub(x[i], tape.constant(b->center[i]));
            NodeId sq = tape.mul(dx, dx);
            r2 = (r2 == ad::kNoNode) ? sq : tape.add(r2, sq);
        }
        const double rr = b->radius * b->radius;
        return tape.div(tape.sub(tape.constant(rr), r2), tape.constant(rr));
    }
    if (std::holds_alternative<Hourglass1D>(dom.kind)) {
        const double w = hourglass_halfwidth(t);
        NodeId z = tape.sub(x[0], tape.constant(0.5));
        NodeId absz = tape.add(tape.relu(z), tape.relu(tape.neg(z)));
        return tape.div(tape.sub(tape.constant(w), absz), tape.constant(w));
    }
    throw GeometryError("domain: general domain has no tape cutoff");
}

// --- measures (diagnostics) -----------------------------------------------------

inline double unit_ball_volume(int d, double r) {
    return std::pow(3.14159265358979323846, d / 2.0) * std::pow(r, d) / std::tgamma(d / 2.0 + 1.0);
}
inline double sphere_area(int d, double r) {
    return 2.0 * std::pow(3.14159265358979323846, d / 2.0) * std::pow(r, d - 1) / std::tgamma(d / 2.0);
}

/// Space-time volume of D.
inline double domain_measure(const DomainSpec& dom) {
    if (std::holds_alternative<HyperCube>(dom.kind)) return dom.horizon;
    if (auto* b = std::get_if<Ball>(&dom.kind))
        return dom.horizon * unit_ball_volume(static_cast<int>(b->center.size()), b->radius);
    if (std::holds_alternative<Hourglass1D>(dom.kind)) return 0.75;  // two triangles area
    return std::get<GeneralTimeVarying>(dom.kind).measure;
}

/// Measure of the lateral boundary (space-time).
inline double boundary_measure(const DomainSpec& dom) {
    if (auto* c = std::get_if<HyperCube>(&dom.kind)) return dom.horizon * 2.0 * c->dim;
    if (auto* b = std::get_if<Ball>(&dom.kind))
        return dom.horizon * sphere_area(static_cast<int>(b->center.size()), b->radius);
    if (std::holds_alternative<Hourglass1D>(dom.kind)) return std::sqrt(5.0);  // two slanted sides
    return std::get<GeneralTimeVarying>(dom.kind).boundary_area;
}

inline double initial_measure(const DomainSpec& dom) {
    if (std::holds_alternative<HyperCube>(dom.kind)) return 1.0;
    if (auto* b = std::get_if<Ball>(&dom.kind))
        return unit_ball_volume(static_cast<int>(b->center.size()), b->radius);
    if (std::holds_alternative<Hourglass1D>(dom.kind)) return 1.0;  // Omega(0) = [0,1]
    return std::get<GeneralTimeVarying>(dom.kind).initial_measure;
}

// --- sampling --------------------------------------------------------------------

struct SamplePlan {
    std::vector<double> pi_t;                // n_T, endpoints 0 and T
    std::vector<double> s_r;                 // N_r x d interior spatial points
    std::vector<double> s_b;                 // N_b x d boundary spatial points (constant domains)
    std::vector<double> boundary_spacetime;  // N_b x (1+d) as (t, x...) (time-varying domains)
    std::vector<double> initial_points;      // N_r x d inside Omega(0)
    int n_t = 0, n_r = 0, n_b = 0, dim = 0;
};

namespace detail {

inline constexpr std::size_t kRejectionCap = 1000000;

inline void sample_cube_point(Rng& rng, int d, double* out) {
    for (int i = 0; i < d; ++i) out[i] = rng.uniform();
}

inline void sample_ball_interior(Rng& rng, const Ball& b, double* out) {
    const int d = static_cast<int>(b.center.size());
    double norm2 = 0.0;
    for (int i = 0; i < d; ++i) {
        out[i] = rng.normal();
        norm2 += out[i] * out[i];
    }
    const double norm = std::sqrt(norm2);
    const double rad = b.radius * std::pow(rng.uniform(), 1.0 / d);
    for (int i = 0; i < d; ++i) out[i] = b.center[static_cast<std::size_t>(i)] + rad * out[i] / norm;
}

inline void sample_ball_boundary(Rng& rng, const Ball& b, double* out) {
    const int d = static_cast<int>(b.center.size());
    double norm2 = 0.0;
    for (int i = 0; i < d; ++i) {
        out[i] = rng.normal();
        norm2 += out[i] * out[i];
    }
    const double norm = std::sqrt(norm2);
    for (int i = 0; i < d; ++i) out[i] = b.center[static_cast<std::size_t>(i)] + b.radius * out[i] / norm;
}

}  // namespace detail

/// Uniform point in Omega_max (exact for cube/ball, box for the rest).
inline void sample_omega_max(const DomainSpec& dom, Rng& rng, double* out) {
    if (std::holds_alternative<HyperCube>(dom.kind)) {
        detail::sample_cube_point(rng, dom.dim(), out);
    } else if (auto* b = std::get_if<Ball>(&dom.kind)) {
        detail::sample_ball_interior(rng, *b, out);
    } else {
        Box box = omega_max(dom);
        for (std::size_t i = 0; i < box.lo.size(); ++i) out[i] = rng.uniform(box.lo[i], box.hi[i]);
    }
}

/// Uniform point in Omega(0), by rejection when no analytic sampler exists.
inline void sample_initial(const DomainSpec& dom, Rng& rng, double* out) {
    if (!dom.time_varying()) {
        sample_omega_max(dom, rng, out);
        return;
    }
    if (std::holds_alternative<Hourglass1D>(dom.kind)) {
        out[0] = rng.uniform();  // Omega(0) = [0,1]
        return;
    }
    Box box = omega_max(dom);
    const int d = dom.dim();
    for (std::size_t attempt = 0; attempt < detail::kRejectionCap; ++attempt) {
        for (int i = 0; i < d; ++i) out[i] = rng.uniform(box.lo[static_cast<std::size_t>(i)], box.hi[static_cast<std::size_t>(i)]);
        if (spatial_inside(dom, 0.0, std::span<const double>(out, static_cast<std::size_t>(d)))) return;
    }
    throw GeometryError("domain: rejection sampling exhausted for Omega(0)");
}

/// Uniform (t, x) in D, by rejection for time-varying kinds.
inline void sample_spacetime(const DomainSpec& dom, Rng& rng, double& t, double* x) {
    const int d = dom.dim();
    if (!dom.time_varying()) {
        t = rng.uniform(0.0, dom.horizon);
        sample_omega_max(dom, rng, x);
        return;
    }
    Box box = omega_max(dom);
    for (std::size_t attempt = 0; attempt < detail::kRejectionCap; ++attempt) {
        t = rng.uniform(0.0, dom.horizon);
        for (int i = 0; i < d; ++i) x[i] = rng.uniform(box.lo[static_cast<std::size_t>(i)], box.hi[static_cast<std::size_t>(i)]);
        if (spatial_inside(dom, t, std::span<const double>(x, static_cast<std::size_t>(d)))) return;
    }
    throw GeometryError("domain: rejection sampling exhausted for D");
}

/// Uniform (t, x) on the lateral boundary of a time-varying domain.
inline void sample_lateral_boundary(const DomainSpec& dom, Rng& rng, double& t, double* x) {
    if (std::holds_alternative<Hourglass1D>(dom.kind)) {
        // |w'(t)| is constant, so uniform in t is uniform in arclength
        t = rng.uniform(0.0, 1.0);
        const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
        x[0] = 0.5 + side * hourglass_halfwidth(t);
        return;
    }
    const auto& g = std::get<GeneralTimeVarying>(dom.kind);
    if (!g.boundary_sample) throw GeometryError("domain: general domain lacks a boundary sampler");
    g.boundary_sample(rng, t, x);
}

/// One epoch's collocation points. Deterministic per seed.
inline SamplePlan sample_plan(const DomainSpec& dom, int n_t, int n_r, int n_b, std::uint64_t seed) {
    if (n_t < 2 || n_r < 1 || n_b < 1) throw std::invalid_argument("domain: sample counts too small");
    const int d = dom.dim();
    SamplePlan plan;
    plan.n_t = n_t;
    plan.n_r = n_r;
    plan.n_b = n_b;
    plan.dim = d;
    Rng rng(derive_seed(seed, stream::kPlan));

    plan.pi_t.resize(static_cast<std::size_t>(n_t));
    plan.pi_t.front() = 0.0;
    for (int i = 1; i + 1 < n_t; ++i) plan.pi_t[static_cast<std::size_t>(i)] = rng.uniform(0.0, dom.horizon);
    plan.pi_t.back() = dom.horizon;
    std::sort(plan.pi_t.begin() + 1, plan.pi_t.end() - 1);

    plan.s_r.resize(static_cast<std::size_t>(n_r) * static_cast<std::size_t>(d));
    for (int j = 0; j < n_r; ++j) sample_omega_max(dom, rng, &plan.s_r[static_cast<std::size_t>(j) * static_cast<std::size_t>(d)]);

    if (!dom.time_varying()) {
        plan.s_b.resize(static_cast<std::size_t>(n_b) * static_cast<std::size_t>(d));
        for (int j = 0; j < n_b; ++j) {
            double* out = &plan.s_b[static_cast<std::size_t>(j) * static_cast<std::size_t>(d)];
            if (auto* c = std::get_if<HyperCube>(&dom.kind)) {
                detail::sample_cube_point(rng, c->dim, out);
                const std::size_t face = rng.index(static_cast<std::size_t>(2 * c->dim));
                out[face / 2] = (face % 2 == 0) ? 0.0 : 1.0;
            } else {
                detail::sample_ball_boundary(rng, std::get<Ball>(dom.kind), out);
            }
        }
    } else {
        plan.boundary_spacetime.resize(static_cast<std::size_t>(n_b) * static_cast<std::size_t>(1 + d));
        for (int j = 0; j < n_b; ++j) {
            double* row = &plan.boundary_spacetime[static_cast<std::size_t>(j) * static_cast<std::size_t>(1 + d)];
            sample_lateral_boundary(dom, rng, row[0], row + 1);
        }
    }

    plan.initial_points.resize(static_cast<std::size_t>(n_r) * static_cast<std::size_t>(d));
    for (int j = 0; j < n_r; ++j) sample_initial(dom, rng, &plan.initial_points[static_cast<std::size_t>(j) * static_cast<std::size_t>(d)]);
    return plan;
}

}  // namespace xwan::domain
