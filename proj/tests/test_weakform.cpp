#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mc_support.hpp"
#include "oracles.hpp"
#include "xwan/trainer.hpp"
#include "xwan/weakform.hpp"

using namespace xwan;
using ad::Tape;
using Catch::Approx;

namespace {

constexpr double kPi = pde::kPi;

/// phi-net that outputs the constant 1 (zero weights, output bias 1).
nets::MlpParams constant_one_phi(int input_dim) {
    nets::MlpConfig c{input_dim, {}, 1};
    nets::MlpParams p{c, std::vector<double>(static_cast<std::size_t>(c.param_count()), 0.0)};
    p.values.back() = 1.0;
    return p;
}

pde::PdeProblem zero_reaction_problem(int dim) {
    pde::PdeProblem prob;
    prob.dim = dim;
    prob.c_tape = [](ad::Var u, double, const double*) { return ad::constant(*u.tape, 0.0) * u; };
    prob.c_value = [](double, double, const double*) { return 0.0; };
    prob.f = [](double, const double*) { return 0.0; };
    prob.g = [](double, const double*) { return 0.0; };
    prob.h = [](const double*) { return 0.0; };
    return prob;
}

}  // namespace

TEST_CASE("manufacture reproduces the closed-form forcing of the cube example", "[weakform]") {
    auto preset = pde::make_preset("example1", 2);
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const double t = rng.uniform();
        const double x[2] = {rng.uniform(), rng.uniform()};
        const double s1 = std::sin(0.5 * kPi * x[0]), c2 = std::cos(0.5 * kPi * x[1]);
        const double expect = (kPi * kPi - 2.0) * s1 * c2 * std::exp(-t) -
                              4.0 * s1 * s1 * c2 * c2 * std::exp(-2.0 * t);
        CHECK(preset.problem.f(t, x) == Approx(expect).margin(1e-12));
    }
}

TEST_CASE("manufacture handles degenerate solutions", "[weakform]") {
    SECTION("u = 0 gives zero data") {
        pde::ExactSolution e;
        e.u = [](double, const double*) { return 0.0; };
        auto prob = pde::manufacture(e, domain::make_cube(2));
        const double x[2] = {0.3, 0.4};
        CHECK(prob.f(0.5, x) == Approx(0.0).margin(1e-9));
        CHECK(prob.g(0.5, x) == 0.0);
        CHECK(prob.h(x) == 0.0);
    }
    SECTION("u = t gives f = 1 - t^2") {
        pde::ExactSolution e;
        e.u = [](double t, const double*) { return t; };
        auto prob = pde::manufacture(e, domain::make_cube(1));
        const double x[1] = {0.5};
        CHECK(prob.f(0.0, x) == Approx(1.0).margin(1e-8));
        CHECK(prob.f(0.7, x) == Approx(1.0 - 0.49).margin(1e-8));
    }
    SECTION("an inconsistent analytic derivative fails the residual check") {
        pde::ExactSolution e;
        e.u = [](double t, const double* x) { return std::exp(-t) * x[0]; };
        e.ut = [](double, const double* x) { return 7.0 * x[0]; };  // wrong on purpose
        CHECK_THROWS_AS(pde::manufacture(e, domain::make_cube(1)), pde::ManufactureError);
    }
}

TEST_CASE("presets 1-3 pass the independent residual check", "[weakform]") {
    for (const auto& [name, dim] : std::vector<std::pair<std::string, int>>{
             {"example1", 2}, {"example1", 5}, {"example2", 5}, {"example3", 2}, {"example3", 4}, {"example4", 1}}) {
        auto preset = pde::make_preset(name, dim);
        Rng rng(11);
        std::vector<double> x(static_cast<std::size_t>(dim));
        double worst = 0.0;
        for (int i = 0; i < 300; ++i) {
            double t;
            domain::sample_spacetime(preset.domain, rng, t, x.data());
            worst = std::max(worst, std::abs(pde::strong_residual_fd(preset.problem, t, x.data())));
        }
        INFO(name << " d=" << dim);
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("the dimension-scalable preset's norm is measured, not assumed", "[weakform]") {
    // closed form at d=1: ||u||^2 = pi^2 (1 - e^{-2}) / 4
    auto preset = pde::make_preset("example3", 1);
    const double analytic = kPi * kPi * (1.0 - std::exp(-2.0)) / 4.0;
    Rng rng(17);
    double sum = 0.0, sumsq = 0.0;
    const int n = 200000;
    double x;
    for (int i = 0; i < n; ++i) {
        double t;
        domain::sample_spacetime(preset.domain, rng, t, &x);
        const double u = preset.problem.exact->u(t, &x);
        sum += u * u;
        sumsq += u * u * u * u;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sumsq / n - mean * mean) / n);
    CHECK(std::abs(mean - analytic) < 3.0 * se);
    CHECK(std::abs(mean - 2.1336) < 0.01);
    CHECK(std::abs(std::sqrt(mean) - 1.0) > 0.3);  // the unit-norm claim fails for this u
}

TEST_CASE("min_ellipticity reports the smallest diffusion eigenvalue", "[weakform]") {
    auto dom = domain::make_cube(2);
    auto prob = zero_reaction_problem(2);
    CHECK(pde::min_ellipticity(prob, dom) == 1.0);  // identity shortcut
    prob.a = [](double, const double*, double* a) {
        a[0] = 2.0; a[1] = 1.0;
        a[2] = 1.0; a[3] = 2.0;  // eigenvalues 1 and 3
    };
    CHECK(pde::min_ellipticity(prob, dom, 10) == Approx(1.0).margin(1e-9));
}

TEST_CASE("test_function vanishes on the spatial boundary", "[weakform]") {
    SECTION("zero network gives zero everywhere") {
        auto dom = domain::make_cube(2);
        nets::MlpConfig c{3, {4}, 1};
        nets::MlpParams phi{c, std::vector<double>(static_cast<std::size_t>(c.param_count()), 0.0)};
        Tape t;
        auto bound = nets::bind(t, phi);
        const ad::NodeId x[] = {t.constant(0.3), t.constant(0.7)};
        CHECK(t.value(weakform::test_function(t, bound, dom, 0.5, x)) == 0.0);
    }
    SECTION("constant-one network reduces to the cutoff") {
        auto dom = domain::make_cube(1);
        auto phi = constant_one_phi(2);
        Tape t;
        auto bound = nets::bind(t, phi);
        const ad::NodeId x[] = {t.constant(0.5)};
        CHECK(t.value(weakform::test_function(t, bound, dom, 0.2, x)) == 1.0);  // 4 * 0.25
        const ad::NodeId x2[] = {t.constant(0.25)};
        CHECK(t.value(weakform::test_function(t, bound, dom, 0.2, x2)) == Approx(0.75));
    }
    SECTION("machine-precision zero at 1000 sampled boundary points") {
        auto cube = domain::make_cube(3);
        auto ball = domain::make_ball({0.5, 0.5, 0.5}, 0.5);
        auto hour = domain::make_hourglass();
        nets::MlpConfig c4{4, {6}, 1};
        auto phi4 = nets::init_params(c4, 5);
        nets::MlpConfig c2{2, {6}, 1};
        auto phi2 = nets::init_params(c2, 6);
        auto plan_c = domain::sample_plan(cube, 3, 1, 400, 9);
        auto plan_b = domain::sample_plan(ball, 3, 1, 400, 10);
        auto plan_h = domain::sample_plan(hour, 3, 1, 200, 11);
        Tape t;
        for (int j = 0; j < 400; ++j) {
            t.clear();
            auto b4 = nets::bind(t, phi4);
            const double* xc = &plan_c.s_b[static_cast<std::size_t>(j) * 3];
            const ad::NodeId xn[] = {t.constant(xc[0]), t.constant(xc[1]), t.constant(xc[2])};
            CHECK(std::abs(t.value(weakform::test_function(t, b4, cube, 0.37, xn))) < 1e-14);
            const double* xb = &plan_b.s_b[static_cast<std::size_t>(j) * 3];
            const ad::NodeId xn2[] = {t.constant(xb[0]), t.constant(xb[1]), t.constant(xb[2])};
            CHECK(std::abs(t.value(weakform::test_function(t, b4, ball, 0.37, xn2))) < 1e-14);
        }
        for (int j = 0; j < 200; ++j) {
            t.clear();
            auto b2 = nets::bind(t, phi2);
            const double* row = &plan_h.boundary_spacetime[static_cast<std::size_t>(j) * 2];
            const ad::NodeId xn[] = {t.constant(row[1])};
            CHECK(std::abs(t.value(weakform::test_function(t, b2, hour, row[0], xn))) < 1e-13);
        }
    }
}

TEST_CASE("weak_residual: closed-form cases", "[weakform]") {
    auto dom = domain::make_cube(2);
    auto prob = zero_reaction_problem(2);

    SECTION("constant u with zero data has zero residual") {
        Tape t;
        auto phi = nets::init_params({3, {4}, 1}, 21);
        auto bound = nets::bind(t, phi);
        const int n = 20;
        Rng rng(5);
        std::vector<double> pts;
        std::vector<ad::NodeId> u, dt, dx, pv, pdx;
        for (int k = 0; k < n; ++k) {
            const double tt = rng.uniform();
            const double x[2] = {rng.uniform(), rng.uniform()};
            pts.insert(pts.end(), {tt, x[0], x[1]});
            u.push_back(t.constant(3.0));
            dt.push_back(t.constant(0.0));
        }
        dx.assign(2 * n, t.constant(0.0));
        for (int k = 0; k < n; ++k) {
            const double tt = pts[static_cast<std::size_t>(k) * 3];
            t.begin_tangent();
            const ad::NodeId xn[] = {t.seeded(pts[static_cast<std::size_t>(k) * 3 + 1], 1.0),
                                     t.seeded(pts[static_cast<std::size_t>(k) * 3 + 2], 0.0)};
            ad::NodeId ph = weakform::test_function(t, bound, dom, tt, xn);
            pv.push_back(ph);
            t.end_tangent();
        }
        pdx.assign(2 * n, t.constant(0.0));  // unused since du/dx = 0
        auto r = weakform::weak_residual(t, prob, pts, {u, dt, dx}, {pv, pdx}, 1.0);
        CHECK(r.value() == 0.0);
    }

    SECTION("f = 1, u = 0: residual is minus the mean of phi times volume") {
        auto prob1 = zero_reaction_problem(2);
        prob1.f = [](double, const double*) { return 1.0; };
        Tape t;
        auto phi = nets::init_params({3, {5}, 1}, 23);
        auto bound = nets::bind(t, phi);
        const int n = 50;
        Rng rng(6);
        std::vector<double> pts;
        std::vector<ad::NodeId> u, dt, dx, pv, pdx;
        double phi_mean = 0.0;
        for (int k = 0; k < n; ++k) {
            const double tt = rng.uniform();
            const double x[2] = {rng.uniform(), rng.uniform()};
            pts.insert(pts.end(), {tt, x[0], x[1]});
            u.push_back(t.constant(0.0));
            dt.push_back(t.constant(0.0));
            const ad::NodeId xn[] = {t.constant(x[0]), t.constant(x[1])};
            ad::NodeId ph = weakform::test_function(t, bound, dom, tt, xn);
            pv.push_back(ph);
            phi_mean += t.value(ph);
        }
        phi_mean /= n;
        dx.assign(2 * n, t.constant(0.0));
        pdx.assign(2 * n, t.constant(0.0));
        auto r = weakform::weak_residual(t, prob1, pts, {u, dt, dx}, {pv, pdx}, 1.0);
        CHECK(r.value() == Approx(-phi_mean).margin(1e-14));
    }

    SECTION("mismatched sizes are a shape error") {
        Tape t;
        std::vector<ad::NodeId> u{t.constant(0.0)}, none;
        std::vector<double> pts{0.5, 0.5, 0.5};
        CHECK_THROWS_AS(weakform::weak_residual(t, prob, pts, {u, none, none}, {none, none}, 1.0),
                        std::invalid_argument);
    }
}

TEST_CASE("exact solution drives the weak residual into the noise floor", "[weakform]") {
    auto preset = pde::make_preset("example1", 2);
    auto phi = nets::init_params({3, {8, 8}, 1}, 31);
    auto [estimate, se] = mc::mc_residual(preset.problem, preset.domain, phi, 10000, 77);
    INFO("estimate " << estimate << " se " << se);
    CHECK(std::abs(estimate) < 3.0 * se);
}

TEST_CASE("MC residual noise decays like 1/sqrt(N)", "[weakform]") {
    auto preset = pde::make_preset("example1", 2);
    auto phi = nets::init_params({3, {6}, 1}, 37);
    std::vector<double> log_n, log_std;
    for (int n : {100, 1000, 10000}) {
        std::vector<double> estimates;
        for (int s = 0; s < 30; ++s) estimates.push_back(mc::mc_residual(preset.problem, preset.domain, phi, n, 1000 + static_cast<std::uint64_t>(s)).estimate);
        double mean = 0.0;
        for (double e : estimates) mean += e;
        mean /= static_cast<double>(estimates.size());
        double var = 0.0;
        for (double e : estimates) var += (e - mean) * (e - mean);
        var /= static_cast<double>(estimates.size() - 1);
        log_n.push_back(std::log(static_cast<double>(n)));
        log_std.push_back(0.5 * std::log(var));
    }
    const double slope = (log_std[2] - log_std[0]) / (log_n[2] - log_n[0]);
    INFO("slope " << slope);
    CHECK(slope == Approx(-0.5).margin(0.15));
}

TEST_CASE("loss_int: clamping and scaling", "[weakform]") {
    SECTION("unit ratio gives zero") { CHECK(weakform::loss_int_value(1.0, 1.0) == 0.0); }
    SECTION("zero residual hits the floor, stays finite") {
        const double v = weakform::loss_int_value(0.0, 2.0);
        CHECK(v == Approx(std::log(1e-12) - std::log(2.0)));
        CHECK(std::isfinite(v));
    }
    SECTION("residual^2 = e * phi_norm gives one") {
        const double phi_n = 0.7;
        CHECK(weakform::loss_int_value(std::sqrt(std::exp(1.0) * phi_n), phi_n) == Approx(1.0));
    }
    SECTION("tape and scalar versions agree") {
        Tape t;
        for (double r : {0.0, 1e-8, 0.3, -2.0})
            for (double p : {1e-14, 0.5, 3.0}) {
                ad::Var li = weakform::loss_int(ad::constant(t, r), ad::constant(t, p));
                CHECK(li.value() == Approx(weakform::loss_int_value(r, p)).margin(1e-15));
            }
    }
    SECTION("invariant under scaling the test function") {
        for (double lam : {0.5, -3.0, 10.0}) {
            const double r = 0.37, p = 0.82;
            const double a = weakform::loss_int_value(r, p);
            const double b = weakform::loss_int_value(lam * r, lam * lam * p);
            CHECK(a == Approx(b).epsilon(1e-10));
        }
    }
}

TEST_CASE("boundary and initial losses are mean squares times measures", "[weakform]") {
    Tape t;
    SECTION("exact match gives zero") {
        std::vector<ad::NodeId> u{t.constant(1.0), t.constant(2.0)};
        std::vector<double> g{1.0, 2.0};
        CHECK(weakform::loss_bdry(t, u, g, 4.0).value() == 0.0);
    }
    SECTION("constant gap delta gives delta^2 times measure") {
        std::vector<ad::NodeId> u{t.constant(1.5), t.constant(2.5), t.constant(3.5)};
        std::vector<double> g{1.0, 2.0, 3.0};
        CHECK(weakform::loss_init(t, u, g, 6.0).value() == Approx(0.25 * 6.0));
    }
    SECTION("empty lists are a configuration error") {
        std::vector<ad::NodeId> none;
        std::vector<double> g0;
        CHECK_THROWS_AS(weakform::loss_bdry(t, none, g0, 1.0), std::invalid_argument);
    }
}

namespace {

struct TinySetup {
    pde::Preset preset;
    nets::MlpParams phi;
    domain::SamplePlan plan;
    std::vector<domain::SubPathSchedule> schedules;
    weakform::LossAssembler assembler;

    TinySetup(const std::string& name, int dim, double alpha, double gamma, int n_r, int n_b, int n_t,
              std::uint64_t seed)
        : preset(pde::make_preset(name, dim)),
          phi(nets::init_params({dim + 1, {4}, 1}, seed + 1)),
          plan(domain::sample_plan(preset.domain, n_t, n_r, n_b, seed)),
          assembler(&preset.problem, &preset.domain, alpha, gamma) {
        schedules = assembler.interior_schedules(plan);
    }
};

}  // namespace

TEST_CASE("total loss: structure of the three terms", "[weakform]") {
    SECTION("exact oracle: boundary and initial terms vanish, residual is noise") {
        TinySetup s("example1", 2, 1.0, 1.0, 100, 8, 10, 41);
        primal::ExactPrimal oracle(&s.preset.problem, 2);
        Tape tape;
        auto loss = s.assembler.assemble(tape, oracle, s.phi, s.plan, s.schedules);
        CHECK(loss.breakdown.l_bdry < 1e-12);
        CHECK(loss.breakdown.l_init < 1e-12);
        // grid sampling correlates the 1000 points across the 100 spatial
        // locations, so the noise scale is ~vol*sigma/sqrt(100)
        CHECK(std::abs(loss.breakdown.residual) < 1.0);
        CHECK(std::isfinite(loss.breakdown.l_int));
    }
    SECTION("alpha = gamma = 0 leaves only the interior term") {
        TinySetup s("example1", 2, 0.0, 0.0, 6, 4, 4, 43);
        primal::DnnPrimal u({3, {5}, 1}, 99);
        Tape tape;
        auto loss = s.assembler.assemble(tape, u, s.phi, s.plan, s.schedules);
        CHECK(loss.breakdown.total == loss.breakdown.l_int);
    }
    SECTION("doubling alpha doubles the boundary contribution") {
        TinySetup s1("example1", 2, 2.0, 1.0, 6, 4, 4, 47);
        TinySetup s2("example1", 2, 4.0, 1.0, 6, 4, 4, 47);
        primal::DnnPrimal u({3, {5}, 1}, 99);
        Tape t1, t2;
        auto a = s1.assembler.assemble(t1, u, s1.phi, s1.plan, s1.schedules);
        auto b = s2.assembler.assemble(t2, u, s2.phi, s2.plan, s2.schedules);
        CHECK(b.breakdown.total - a.breakdown.total == Approx(2.0 * a.breakdown.l_bdry).epsilon(1e-12));
    }
}

TEST_CASE("one-tape and per-point gradient routes agree", "[weakform]") {
    auto run = [](const std::string& name, int dim, auto&& make_primal) {
        TinySetup s(name, dim, 3.0, 5.0, 8, 6, 4, 53);
        auto u = make_primal(s);
        Tape tape;
        auto one = s.assembler.assemble(tape, *u, s.phi, s.plan, s.schedules);
        tape.backward(one.total.id);
        std::vector<double> d_primal, d_phi;
        for (auto id : one.primal_leaves) d_primal.push_back(tape.adjoint(id));
        for (auto id : one.phi_leaves) d_phi.push_back(tape.adjoint(id));

        auto fast = s.assembler.assemble_grads(*u, s.phi, s.plan, s.schedules);
        CHECK(fast.breakdown.total == Approx(one.breakdown.total).epsilon(1e-12));
        REQUIRE(fast.d_primal.size() == d_primal.size());
        for (std::size_t i = 0; i < d_primal.size(); ++i) {
            CHECK(fast.d_primal[i] == Approx(d_primal[i]).epsilon(1e-11).margin(1e-13));
        }
        REQUIRE(fast.d_phi.size() == d_phi.size());
        for (std::size_t i = 0; i < d_phi.size(); ++i) {
            CHECK(fast.d_phi[i] == Approx(d_phi[i]).epsilon(1e-11).margin(1e-13));
        }
    };
    SECTION("dnn on the cube") {
        run("example1", 2, [](TinySetup&) { return std::make_unique<primal::DnnPrimal>(nets::MlpConfig{3, {5}, 1}, 61); });
    }
    SECTION("xnode on the cube") {
        run("example1", 2, [](TinySetup& s) {
            return std::make_unique<primal::XnodePrimal>(xnode::XNodeConfig{3, 2, {3}, {4}}, &s.preset.problem,
                                                         &s.preset.domain, 62);
        });
    }
    SECTION("xnode on the hourglass") {
        run("example4", 1, [](TinySetup& s) {
            return std::make_unique<primal::XnodePrimal>(xnode::XNodeConfig{3, 1, {3}, {4}}, &s.preset.problem,
                                                         &s.preset.domain, 63);
        });
    }
}

TEST_CASE("total-loss parameter gradients pass a finite-difference check", "[weakform]") {
    auto run = [](const std::string& name, int dim, auto&& make_primal, double tol) {
        TinySetup s(name, dim, 2.0, 3.0, 4, 3, 4, 59);
        auto u = make_primal(s);
        auto grads = s.assembler.assemble_grads(*u, s.phi, s.plan, s.schedules);

        auto loss_value = [&]() {
            Tape tape;
            return s.assembler.assemble(tape, *u, s.phi, s.plan, s.schedules).breakdown.total;
        };
        const double step = 1e-6;
        auto p = u->params();
        double worst = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double orig = p[i];
            p[i] = orig + step;
            const double up = loss_value();
            p[i] = orig - step;
            const double dn = loss_value();
            p[i] = orig;
            const double fd = (up - dn) / (2.0 * step);
            worst = std::max(worst, std::abs(fd - grads.d_primal[i]) / std::max(1.0, std::abs(grads.d_primal[i])));
        }
        for (std::size_t i = 0; i < s.phi.values.size(); ++i) {
            const double orig = s.phi.values[i];
            s.phi.values[i] = orig + step;
            const double up = loss_value();
            s.phi.values[i] = orig - step;
            const double dn = loss_value();
            s.phi.values[i] = orig;
            const double fd = (up - dn) / (2.0 * step);
            worst = std::max(worst, std::abs(fd - grads.d_phi[i]) / std::max(1.0, std::abs(grads.d_phi[i])));
        }
        INFO("worst rel discrepancy " << worst);
        CHECK(worst < tol);
    };
    SECTION("dnn") {
        run("example1", 2, [](TinySetup&) { return std::make_unique<primal::DnnPrimal>(nets::MlpConfig{3, {4}, 1}, 71); },
            1e-5);
    }
    SECTION("xnode, time-varying") {
        run("example4", 1, [](TinySetup& s) {
            return std::make_unique<primal::XnodePrimal>(xnode::XNodeConfig{2, 1, {3}, {3}}, &s.preset.problem,
                                                         &s.preset.domain, 72);
        }, 1e-5);
    }
}

TEST_CASE("an identity-fitted initial lift drives the initial loss below 1e-4", "[weakform]") {
    // fit readout(init_net(v)) ~ v over the range of the cube example's
    // initial datum, then measure the initial loss of the resulting model
    auto preset = pde::make_preset("example1", 2);
    nets::MlpConfig init_cfg{1, {8}, 4};
    auto theta1 = nets::init_params(init_cfg, 7);
    std::vector<double> readout{0.5, 0.5, 0.5, 0.5};

    std::vector<double> flat(theta1.values);
    flat.insert(flat.end(), readout.begin(), readout.end());
    trainer::AdamState opt(flat.size());
    Rng rng(21);
    ad::Tape tape;
    for (int step = 0; step < 1500; ++step) {
        tape.clear();
        nets::BoundMlp bound;
        bound.config = &init_cfg;
        std::vector<ad::NodeId> leaves;
        for (double v : flat) leaves.push_back(tape.leaf(v));
        bound.nodes.assign(leaves.begin(), leaves.begin() + theta1.count());
        ad::Var loss = ad::constant(tape, 0.0);
        for (int k = 0; k < 16; ++k) {
            const double v = rng.uniform(0.0, 2.0);
            const ad::NodeId in[] = {tape.constant(v)};
            auto hid = nets::mlp_forward(tape, bound, in);
            ad::Var out = ad::constant(tape, 0.0);
            for (int i = 0; i < 4; ++i)
                out = out + ad::make_var(tape, leaves[static_cast<std::size_t>(theta1.count() + i)]) *
                                ad::make_var(tape, hid[static_cast<std::size_t>(i)]);
            loss = loss + (out - v) * (out - v);
        }
        tape.backward(loss.id);
        std::vector<double> g(flat.size());
        for (std::size_t i = 0; i < flat.size(); ++i) g[i] = tape.adjoint(leaves[i]);
        trainer::adam_step(opt, flat, g, 0.01);
    }

    // evaluate with the fitted lift as an XNODE initial stage: u(0,x) = readout(init(h(x)))
    std::copy(flat.begin(), flat.begin() + theta1.count(), theta1.values.begin());
    std::copy(flat.begin() + theta1.count(), flat.end(), readout.begin());
    auto plan = domain::sample_plan(preset.domain, 4, 200, 4, 31);
    ad::Tape t2;
    auto bound = nets::bind(t2, theta1);
    std::vector<ad::NodeId> values;
    std::vector<double> targets;
    for (int j = 0; j < 200; ++j) {
        const double* x = &plan.initial_points[static_cast<std::size_t>(j) * 2];
        const double hv = preset.problem.h(x);
        const ad::NodeId in[] = {t2.constant(hv)};
        auto hid = nets::mlp_forward(t2, bound, in);
        ad::NodeId out = ad::kNoNode;
        for (int i = 0; i < 4; ++i) {
            ad::NodeId term = t2.mul(t2.constant(readout[static_cast<std::size_t>(i)]), hid[static_cast<std::size_t>(i)]);
            out = out == ad::kNoNode ? term : t2.add(out, term);
        }
        values.push_back(out);
        targets.push_back(hv);
    }
    auto li = weakform::loss_init(t2, values, targets, domain::initial_measure(preset.domain));
    INFO("loss_init " << li.value());
    CHECK(li.value() < 1e-4);
}

TEST_CASE("interior loss is invariant under scaling the test network output", "[weakform]") {
    TinySetup s("example1", 2, 1.0, 1.0, 6, 4, 4, 67);
    primal::DnnPrimal u({3, {4}, 1}, 73);
    Tape t1;
    auto a = s.assembler.assemble(t1, u, s.phi, s.plan, s.schedules);
    // scale the output layer (last weights + bias) by lambda
    auto phi2 = s.phi;
    for (std::size_t i = phi2.values.size() - 5; i < phi2.values.size(); ++i) phi2.values[i] *= 37.5;
    Tape t2;
    auto b = s.assembler.assemble(t2, u, phi2, s.plan, s.schedules);
    CHECK(a.breakdown.l_int == Approx(b.breakdown.l_int).epsilon(1e-10));
}
