#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "xwan/xnode.hpp"

using namespace xwan;
using ad::Tape;
using xnode::BoundXNode;
using xnode::XNodeConfig;
using xnode::XNodeParams;

namespace {

// h_dim=1 model computing o(t) = init * e^{-t}: identity lift, vector field
// -h, identity readout.
XNodeParams exponential_model() {
    XNodeParams p;
    p.theta1 = {{1, {}, 1}, {1.0, 0.0}};                       // identity lift
    p.theta2 = {{3, {}, 1}, {-1.0, 0.0, 0.0, 0.0}};            // f(h,t,x) = -h
    p.readout = {1.0};
    return p;
}

std::vector<double> linspace(int n, double lo, double hi) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
    return v;
}

}  // namespace

TEST_CASE("rk4_integrate: elementary fields", "[xnode]") {
    SECTION("zero field keeps the state") {
        Tape t;
        const ad::NodeId h0[] = {t.constant(3.25)};
        const double times[] = {0.0, 0.4, 1.0};
        auto states = xnode::rk4_integrate(
            t, [](Tape& tp, std::span<const ad::NodeId>, double) { return std::vector<ad::NodeId>{tp.constant(0.0)}; },
            h0, times, 1);
        for (const auto& s : states) CHECK(t.value(s[0]) == 3.25);
    }
    SECTION("dh/dt = -h over one step of 0.1 reproduces the hand RK4 value") {
        // k1=-1, k2=-0.95, k3=-0.9525, k4=-0.90475 -> h1 = 1 - 0.1/6 * 5.70975
        const double k1 = -1.0, k2 = -(1.0 + 0.05 * k1), k3 = -(1.0 + 0.05 * k2), k4 = -(1.0 + 0.1 * k3);
        const double by_hand = 1.0 + 0.1 / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);

        Tape t;
        const ad::NodeId h0[] = {t.constant(1.0)};
        const double times[] = {0.0, 0.1};
        auto states = xnode::rk4_integrate(
            t, [](Tape& tp, std::span<const ad::NodeId> h, double) { return std::vector<ad::NodeId>{tp.neg(h[0])}; },
            h0, times, 1);
        const double got = t.value(states[1][0]);
        CHECK(got == Catch::Approx(by_hand).margin(1e-15));
        CHECK(std::abs(got - std::exp(-0.1)) < 1e-7);
    }
    SECTION("dh/dt = 1 is exact") {
        Tape t;
        const ad::NodeId h0[] = {t.constant(0.0)};
        const double times[] = {0.0, 0.5, 1.0};
        auto states = xnode::rk4_integrate(
            t, [](Tape& tp, std::span<const ad::NodeId>, double) { return std::vector<ad::NodeId>{tp.constant(1.0)}; },
            h0, times, 1);
        CHECK(t.value(states[0][0]) == 0.0);
        CHECK(t.value(states[1][0]) == 0.5);
        CHECK(t.value(states[2][0]) == 1.0);
    }
    SECTION("divergent trajectory raises with the step index") {
        Tape t;
        const ad::NodeId h0[] = {t.constant(1e200)};
        const double times[] = {0.0, 0.5, 1.0};
        CHECK_THROWS_AS(xnode::rk4_integrate(
                            t,
                            [](Tape& tp, std::span<const ad::NodeId> h, double) {
                                return std::vector<ad::NodeId>{tp.mul(h[0], h[0])};
                            },
                            h0, times, 1),
                        xnode::DivergenceError);
    }
}

TEST_CASE("rk4 order: log-log error slope is 4 +- 0.2", "[xnode]") {
    const std::vector<int> substeps = {5, 10, 20, 40};  // steps 0.2, 0.1, 0.05, 0.025
    std::vector<double> log_h, log_e;
    for (int s : substeps) {
        Tape t;
        const ad::NodeId h0[] = {t.constant(1.0)};
        const double times[] = {0.0, 1.0};
        auto states = xnode::rk4_integrate(
            t, [](Tape& tp, std::span<const ad::NodeId> h, double) { return std::vector<ad::NodeId>{tp.neg(h[0])}; },
            h0, times, s);
        const double err = std::abs(t.value(states[1][0]) - std::exp(-1.0));
        log_h.push_back(std::log(1.0 / s));
        log_e.push_back(std::log(err));
    }
    // least squares slope
    double mh = 0, me = 0;
    for (std::size_t i = 0; i < log_h.size(); ++i) {
        mh += log_h[i];
        me += log_e[i];
    }
    mh /= static_cast<double>(log_h.size());
    me /= static_cast<double>(log_e.size());
    double num = 0, den = 0;
    for (std::size_t i = 0; i < log_h.size(); ++i) {
        num += (log_h[i] - mh) * (log_e[i] - me);
        den += (log_h[i] - mh) * (log_h[i] - mh);
    }
    const double slope = num / den;
    CHECK(slope == Catch::Approx(4.0).margin(0.2));
}

TEST_CASE("xnode_forward: closed-form configurations", "[xnode]") {
    SECTION("zero vector field gives a constant output") {
        XNodeConfig cfg{2, 1, {3}, {3}};
        auto p = xnode::init_xnode(cfg, 5);
        std::fill(p.theta2.values.begin(), p.theta2.values.end(), 0.0);
        Tape t;
        auto net = xnode::bind(t, p);
        const ad::NodeId x[] = {t.constant(0.4)};
        auto times = linspace(6, 0.0, 1.0);
        auto traj = xnode::xnode_forward(t, net, x, times, t.constant(0.7));
        const double first = t.value(traj.outputs[0]);
        for (auto id : traj.outputs) CHECK(t.value(id) == Catch::Approx(first).margin(1e-15));
    }
    SECTION("exponential configuration tracks init * e^{-t}") {
        auto p = exponential_model();
        Tape t;
        auto net = xnode::bind(t, p);
        const ad::NodeId x[] = {t.constant(0.3)};
        auto times = linspace(11, 0.0, 1.0);
        auto traj = xnode::xnode_forward(t, net, x, times, t.constant(2.0));
        for (std::size_t k = 0; k < times.size(); ++k)
            CHECK(std::abs(t.value(traj.outputs[k]) - 2.0 * std::exp(-times[k])) < 1e-6);
    }
    SECTION("substeps refine the integration between partition points") {
        auto p = exponential_model();
        Tape t;
        auto net = xnode::bind(t, p);
        const ad::NodeId x[] = {t.constant(0.0)};
        const double times[] = {0.0, 1.0};
        auto coarse = xnode::xnode_forward(t, net, x, times, t.constant(1.0), 1);
        auto fine = xnode::xnode_forward(t, net, x, times, t.constant(1.0), 8);
        const double truth = std::exp(-1.0);
        CHECK(std::abs(t.value(fine.outputs[1]) - truth) < std::abs(t.value(coarse.outputs[1]) - truth));
        CHECK(std::abs(t.value(fine.outputs[1]) - truth) < 1e-6);  // O(h^4) at h = 1/8
    }
    SECTION("a single time returns only the initial lift readout") {
        auto p = exponential_model();
        Tape t;
        auto net = xnode::bind(t, p);
        const ad::NodeId x[] = {t.constant(0.0)};
        const double times[] = {0.0};
        auto traj = xnode::xnode_forward(t, net, x, times, t.constant(1.5));
        REQUIRE(traj.outputs.size() == 1);
        CHECK(t.value(traj.outputs[0]) == 1.5);
    }
}

TEST_CASE("temporal_derivative is the readout of the vector field", "[xnode]") {
    SECTION("zero field: zero derivative") {
        XNodeConfig cfg{2, 1, {3}, {3}};
        auto p = xnode::init_xnode(cfg, 6);
        std::fill(p.theta2.values.begin(), p.theta2.values.end(), 0.0);
        Tape t;
        auto net = xnode::bind(t, p);
        const ad::NodeId x[] = {t.constant(0.2)};
        const ad::NodeId h[] = {t.constant(0.5), t.constant(-0.3)};
        CHECK(t.value(xnode::temporal_derivative(t, net, h, 0.4, x)) == 0.0);
    }
    SECTION("exponential configuration: d/dt o = -o") {
        auto p = exponential_model();
        Tape t;
        auto net = xnode::bind(t, p);
        const ad::NodeId x[] = {t.constant(0.0)};
        auto times = linspace(5, 0.0, 1.0);
        auto traj = xnode::xnode_forward(t, net, x, times, t.constant(1.0));
        for (std::size_t k = 0; k < times.size(); ++k) {
            const double o = t.value(traj.outputs[k]);
            const double dt = t.value(xnode::temporal_derivative(t, net, traj.states[k], times[k], x));
            CHECK(std::abs(dt + o) < 1e-6);
        }
    }
    SECTION("zero readout: zero derivative regardless of the field") {
        XNodeConfig cfg{3, 2, {4}, {5}};
        auto p = xnode::init_xnode(cfg, 7);
        std::fill(p.readout.begin(), p.readout.end(), 0.0);
        Tape t;
        auto net = xnode::bind(t, p);
        const ad::NodeId x[] = {t.constant(0.2), t.constant(0.9)};
        const ad::NodeId h[] = {t.constant(0.5), t.constant(-0.3), t.constant(1.1)};
        CHECK(t.value(xnode::temporal_derivative(t, net, h, 0.7, x)) == 0.0);
    }
}

TEST_CASE("predict_grid: value table shape and structure", "[xnode]") {
    SECTION("one point, one time") {
        auto p = exponential_model();
        const double pts[] = {0.7};
        const double times[] = {0.0};
        auto table = xnode::predict_grid(p, pts, 1, times, [](const double* x) { return *x; });
        REQUIRE(table.size() == 1);
        REQUIRE(table[0].size() == 1);
        CHECK(table[0][0] == 0.7);
    }
    SECTION("zero field: rows constant in time") {
        XNodeConfig cfg{2, 2, {3}, {4}};
        auto p = xnode::init_xnode(cfg, 8);
        std::fill(p.theta2.values.begin(), p.theta2.values.end(), 0.0);
        const double pts[] = {0.1, 0.2, 0.8, 0.9};
        auto times = linspace(4, 0.0, 1.0);
        auto table = xnode::predict_grid(p, pts, 2, times, [](const double* x) { return x[0] + x[1]; });
        REQUIRE(table.size() == 2);
        for (const auto& row : table)
            for (double v : row) CHECK(v == Catch::Approx(row[0]).margin(1e-15));
    }
    SECTION("linear flow scales linearly in the initial value") {
        auto p = exponential_model();
        const double pts[] = {1.0, 2.0};
        auto times = linspace(6, 0.0, 1.0);
        auto table = xnode::predict_grid(p, pts, 1, times, [](const double* x) { return *x; });
        REQUIRE(table.size() == 2);
        for (std::size_t k = 0; k < table[0].size(); ++k)
            CHECK(std::abs(table[1][k] - 2.0 * table[0][k]) < 1e-6);
    }
}

TEST_CASE("predict_timevarying: sub-path starts and reduction", "[xnode]") {
    auto p = exponential_model();
    auto h = [](const double* x) { return 10.0 + *x; };
    auto g = [](double t, const double* x) { return 100.0 * t + *x; };

    SECTION("hourglass x=0.9: first sub-path starts from h, second from g(., 0.8)") {
        auto dom = domain::make_hourglass();
        const double x[] = {0.9};
        auto pi = linspace(9, 0.0, 1.0);
        auto sched = domain::build_subpath_times(dom, x, pi);
        auto values = xnode::predict_timevarying(p, sched, h, g);
        REQUIRE(values.size() == 2);
        // identity lift + identity readout: the first output equals the start value
        CHECK(values[0][0] == Catch::Approx(h(x)).margin(1e-12));
        CHECK(values[1][0] == Catch::Approx(g(0.8, x)).margin(1e-9));
    }
    SECTION("never-inside point yields no values") {
        auto dom = domain::make_hourglass();
        const double x[] = {1.9};
        auto pi = linspace(5, 0.0, 1.0);
        auto sched = domain::build_subpath_times(dom, x, pi);
        CHECK(xnode::predict_timevarying(p, sched, h, g).empty());
    }
    SECTION("constant domain reduces to predict_grid bit-exactly") {
        XNodeConfig cfg{3, 2, {4}, {5}};
        auto q = xnode::init_xnode(cfg, 11);
        auto dom = domain::make_cube(2);
        const double x[] = {0.3, 0.6};
        auto pi = linspace(7, 0.0, 1.0);
        auto sched = domain::build_subpath_times(dom, x, pi);
        auto h2 = [](const double* xs) { return xs[0] * xs[1]; };
        auto tv = xnode::predict_timevarying(q, sched, h2, [](double, const double*) { return 0.0; });
        auto grid = xnode::predict_grid(q, x, 2, pi, h2);
        REQUIRE(tv.size() == 1);
        CHECK(tv[0] == grid[0]);
    }
}

TEST_CASE("gradients through the unrolled integration pass grad_check", "[xnode]") {
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 4; ++rep) {
        XNodeConfig cfg;
        cfg.h_dim = 2 + static_cast<int>(rng() % 3);       // <= 4
        cfg.spatial_dim = 1 + static_cast<int>(rng() % 2);
        cfg.init_hidden = {3};
        cfg.vec_hidden = {4};
        auto p = xnode::init_xnode(cfg, rng());
        std::vector<double> flat;
        flat.insert(flat.end(), p.theta1.values.begin(), p.theta1.values.end());
        flat.insert(flat.end(), p.theta2.values.begin(), p.theta2.values.end());
        flat.insert(flat.end(), p.readout.begin(), p.readout.end());
        const std::size_t n1 = p.theta1.values.size(), n2 = p.theta2.values.size();

        std::vector<double> xv(static_cast<std::size_t>(cfg.spatial_dim));
        for (auto& v : xv) v = 0.2 + 0.6 * static_cast<double>(rng() % 100) / 100.0;
        auto times = linspace(4, 0.0, 1.0);  // |Pi_T| <= 5

        auto f = [&](Tape& t, std::span<const ad::Var> params) {
            BoundXNode net;
            net.h_dim = cfg.h_dim;
            net.spatial_dim = cfg.spatial_dim;
            net.init_net.config = &p.theta1.config;
            net.vec_net.config = &p.theta2.config;
            for (std::size_t i = 0; i < n1; ++i) net.init_net.nodes.push_back(params[i].id);
            for (std::size_t i = 0; i < n2; ++i) net.vec_net.nodes.push_back(params[n1 + i].id);
            for (std::size_t i = 0; i < p.readout.size(); ++i) net.readout.push_back(params[n1 + n2 + i].id);
            std::vector<ad::NodeId> x;
            for (double v : xv) x.push_back(t.constant(v));
            auto traj = xnode::xnode_forward(t, net, x, times, t.constant(0.8));
            ad::Var loss = ad::constant(t, 0.0);
            for (auto id : traj.outputs) {
                ad::Var o = ad::make_var(t, id);
                loss = loss + o * o;
            }
            return loss;
        };
        CHECK(ad::grad_check(f, flat, 1e-5) < 1e-6);
    }
}

TEST_CASE("trajectory gap obeys the Gronwall-type stability bound", "[xnode]") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto times = linspace(11, 0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        const double a = 0.2 + std::abs(u(rng));  // Lipschitz constant of V1 in h
        const double b = u(rng);
        const double m = 0.5 * std::abs(u(rng)) + 0.05;  // sup gap
        const double f1 = u(rng), f2 = u(rng);
        const double L = a, M = m;

        Tape t;
        auto field1 = [&](Tape& tp, std::span<const ad::NodeId> h, double) {
            return std::vector<ad::NodeId>{tp.add(tp.mul(tp.constant(a), tp.sin(h[0])), tp.constant(b))};
        };
        auto field2 = [&](Tape& tp, std::span<const ad::NodeId> h, double tt) {
            return std::vector<ad::NodeId>{tp.add(tp.add(tp.mul(tp.constant(a), tp.sin(h[0])), tp.constant(b)),
                                                  tp.constant(m * std::cos(tt)))};
        };
        const ad::NodeId h1[] = {t.constant(f1)};
        const ad::NodeId h2[] = {t.constant(f2)};
        auto s1 = xnode::rk4_integrate(t, field1, h1, times, 20);
        auto s2 = xnode::rk4_integrate(t, field2, h2, times, 20);
        for (std::size_t k = 0; k < times.size(); ++k) {
            const double gap = std::abs(t.value(s1[k][0]) - t.value(s2[k][0]));
            const double bound =
                std::abs(f1 - f2) * std::exp(L * times[k]) + (M / L) * (std::exp(L * times[k]) - 1.0);
            CHECK(gap <= bound + 1e-6);
        }
    }
}

TEST_CASE("xnode parameters round-trip through json", "[xnode]") {
    XNodeConfig cfg{3, 2, {4}, {5, 5}};
    auto p = xnode::init_xnode(cfg, 70);
    auto j = xnode::to_json(p);
    auto q = xnode::xnode_from_json(j);
    CHECK(q.theta1.values == p.theta1.values);
    CHECK(q.theta2.values == p.theta2.values);
    CHECK(q.readout == p.readout);
}
