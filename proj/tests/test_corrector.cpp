#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "hjlab/corrector.hpp"
#include "hjlab/env.hpp"
#include "hjlab/gclass.hpp"
#include "oracles.hpp"

using namespace hjlab;
using corrector::SolverOptions;
using gclass::BranchSide;

namespace {

gclass::NonlinearitySpec g_std() {
    return gclass::NonlinearitySpec::power_plus_linear(2.0, 1.0, 1.0, 2.0);
}

env::EnvironmentSample constant_env(double a0, double v0, double x0, double x_end, double dx) {
    env::EnvConfig c;
    c.kind = env::Kind::Constant;
    c.params["a0"] = a0;
    c.params["v0"] = v0;
    return env::generate_env(c, 1, x0, x_end, dx);
}

env::EnvironmentSample sine_env(double a_const, double x0, double x_end, double dx) {
    env::EnvConfig c;
    c.kind = env::Kind::Sinusoidal;
    c.params["sa_mid"] = std::sqrt(a_const);
    c.params["sa_amp"] = 0.0;
    c.params["v_mid"] = 0.5;
    c.params["v_amp"] = 0.5;
    c.kappa = 8.0;
    c.periodic = true;
    c.period = 1.0;
    return env::generate_env(c, 1, x0, x_end, dx);
}

env::EnvironmentSample degenerate_env(double x0, double x_end, double dx) {
    env::EnvConfig c;
    c.kind = env::Kind::PiecewiseDegenerate;
    c.params["a_int_lo"] = 0.0;
    c.params["a_int_hi"] = 1.0;
    c.params["v_int_lo"] = 0.2;
    c.params["v_int_hi"] = 0.8;
    c.params["v_lo"] = 0.3;
    c.params["v_hi"] = 0.9;
    c.kappa = 1.0;
    return env::generate_env(c, 1, x0, x_end, dx);
}

}  // namespace

TEST_CASE("constant environment: the constant branch value solves the equation") {
    const auto g = g_std();
    const auto s = constant_env(0.7, 0.5, 0.0, 20.0, 1e-3);
    const double beta = 1.0, lambda = 2.0;
    const auto p = corrector::solve_branch(s, g, beta, lambda, BranchSide::Plus);
    const double want = oracles::gplus_inv_std(lambda - beta * 0.5);
    REQUIRE(p.retained_lo < p.retained_hi);
    for (std::size_t i = p.retained_lo; i < p.retained_hi; ++i)
        CHECK(p.f[i] == doctest::Approx(want).epsilon(1e-10));
    CHECK(p.u.front() == 0.0);
    const auto m = corrector::solve_branch(s, g, beta, lambda, BranchSide::Minus);
    REQUIRE(m.retained_lo < m.retained_hi);
    for (std::size_t i = m.retained_lo; i < m.retained_hi; ++i)
        CHECK(m.f[i] == doctest::Approx(-want).epsilon(1e-10));
}

TEST_CASE("vanishing diffusion: the pinned formula holds pointwise") {
    const auto g = g_std();
    const auto s = sine_env(0.0, 0.0, 2.0, 1e-3);
    const double beta = 1.0, lambda = 2.0;
    const auto p = corrector::solve_branch(s, g, beta, lambda, BranchSide::Plus);
    for (std::size_t i = 0; i < s.grid.n; ++i) {
        CHECK(p.pinned[i] == 1);
        CHECK(p.f[i] ==
              doctest::Approx(oracles::gplus_inv_std(lambda - beta * s.v[i])).epsilon(1e-11));
        CHECK(std::abs(g(p.f[i]) + beta * s.v[i] - lambda) <= 1e-8);
    }
    CHECK(p.diag.max_pin_residual <= 1e-8);
}

TEST_CASE("viscous sine environment matches an adaptive high-order oracle to 1e-6") {
    const auto g = g_std();
    const double beta = 1.0, lambda = 2.0, dx = 1e-4;
    const auto s = sine_env(1.0, 0.0, 4.0, dx);
    const auto p = corrector::solve_branch(s, g, beta, lambda, BranchSide::Plus);

    auto vfun = [](double x) { return 0.5 * (1.0 + std::sin(2.0 * M_PI * x)); };
    auto rhs = [&](double x, double f) { return lambda - beta * vfun(x) - oracles::g_std(f); };
    std::vector<double> grid(s.grid.n);
    for (std::size_t i = 0; i < s.grid.n; ++i) grid[i] = s.grid.x(i);
    const auto want = oracles::rk45_on_grid(rhs, grid, p.f.front(), 1e-12);

    double sup = 0.0;
    for (std::size_t i = 0; i < s.grid.n; ++i) sup = std::max(sup, std::abs(p.f[i] - want[i]));
    INFO("sup distance to oracle ", sup);
    CHECK(sup <= 1e-6);

    // minus branch, swept right to left, against the mirrored oracle
    const auto m = corrector::solve_branch(s, g, beta, lambda, BranchSide::Minus);
    auto rhs_rev = [&](double t, double f) {
        return -(lambda - beta * vfun(4.0 - t) - oracles::g_std(f));
    };
    const auto want_rev = oracles::rk45_on_grid(rhs_rev, grid, m.f.back(), 1e-12);
    sup = 0.0;
    for (std::size_t i = 0; i < s.grid.n; ++i)
        sup = std::max(sup, std::abs(m.f[s.grid.n - 1 - i] - want_rev[i]));
    INFO("minus-branch sup distance ", sup);
    CHECK(sup <= 1e-6);
}

TEST_CASE("confinement and residual bounds on a resolved grid") {
    const auto g = g_std();
    const double beta = 1.0;
    const auto s = sine_env(1.0, 0.0, 26.0, 1e-3);
    SolverOptions opts;
    for (double lambda : {1.0, 1.7, 2.5}) {
        for (auto side : {BranchSide::Plus, BranchSide::Minus}) {
            const auto p = corrector::solve_branch(s, g, beta, lambda, side, opts);
            for (std::size_t i = 0; i < s.grid.n; ++i) {
                CHECK(p.f[i] >= p.diag.branch_lo - 1e-12);
                CHECK(p.f[i] <= p.diag.branch_hi + 1e-12);
            }
            CHECK(p.diag.max_residual <= 10.0 * opts.solver_tol);
        }
    }
}

TEST_CASE("uniqueness surrogate: initialization is forgotten outside burn-in") {
    const auto g = g_std();
    const auto s = sine_env(1.0, 0.0, 26.0, 1e-3);
    SolverOptions lo_opts, hi_opts;
    lo_opts.init = SolverOptions::Init::Low;
    hi_opts.init = SolverOptions::Init::High;
    const auto plo = corrector::solve_branch(s, g, 1.0, 2.0, BranchSide::Plus, lo_opts);
    const auto phi = corrector::solve_branch(s, g, 1.0, 2.0, BranchSide::Plus, hi_opts);
    REQUIRE(plo.retained_lo < plo.retained_hi);
    double gap = 0.0;
    for (std::size_t i = plo.retained_lo; i < plo.retained_hi; ++i)
        gap = std::max(gap, std::abs(plo.f[i] - phi.f[i]));
    CHECK(gap <= 1e-8);
    CHECK(plo.diag.contraction_factor <= 1e-8);
}

TEST_CASE("stationarity surrogate: translate commutes with the solve") {
    const auto g = g_std();
    const auto s = sine_env(1.0, 0.0, 26.0, 1e-3);
    const double z = 0.25;  // quarter period, grid aligned
    const auto shifted = env::translate(s, z);
    const auto p = corrector::solve_branch(s, g, 1.0, 2.0, BranchSide::Plus);
    const auto q = corrector::solve_branch(shifted, g, 1.0, 2.0, BranchSide::Plus);
    const auto k = static_cast<std::size_t>(std::llround(z / s.grid.dx));
    double gap = 0.0;
    for (std::size_t i = p.retained_lo; i + k < p.retained_hi; ++i)
        gap = std::max(gap, std::abs(q.f[i] - p.f[i + k]));
    CHECK(gap <= 1e-10);
}

TEST_CASE("monotone sandwich: pointwise derivative comparison between levels") {
    const auto g = g_std();
    const auto s = sine_env(1.0, 0.0, 26.0, 1e-3);
    const double beta = 1.0, l1 = 1.5, l2 = 2.0;
    const double big_r = std::max(-oracles::gminus_inv_std(l2), oracles::gplus_inv_std(l2));
    const double c_r = 2.0 * big_r + 1.0;
    const double eta = 1.0;
    const auto p1 = corrector::solve_branch(s, g, beta, l1, BranchSide::Plus);
    const auto p2 = corrector::solve_branch(s, g, beta, l2, BranchSide::Plus);
    const auto m1 = corrector::solve_branch(s, g, beta, l1, BranchSide::Minus);
    const auto m2 = corrector::solve_branch(s, g, beta, l2, BranchSide::Minus);
    const std::size_t lo = std::max(p1.retained_lo, p2.retained_lo);
    const std::size_t hi = std::min(p1.retained_hi, p2.retained_hi);
    REQUIRE(lo < hi);
    for (std::size_t i = lo; i < hi; ++i) {
        const double d = p2.f[i] - p1.f[i];
        CHECK(d >= (l2 - l1) / c_r - 1e-6);
        CHECK(d <= (l2 - l1) / eta + 1e-6);
    }
    const std::size_t mlo = std::max(m1.retained_lo, m2.retained_lo);
    const std::size_t mhi = std::min(m1.retained_hi, m2.retained_hi);
    REQUIRE(mlo < mhi);
    for (std::size_t i = mlo; i < mhi; ++i) {
        const double d = m1.f[i] - m2.f[i];
        CHECK(d >= (l2 - l1) / c_r - 1e-6);
        CHECK(d <= (l2 - l1) / eta + 1e-6);
    }
}

TEST_CASE("gronwall_gap: certified envelope on unit diffusion windows") {
    const auto g = g_std();
    const double beta = 1.0, lambda = 2.0;
    for (double len : {2.0, 5.0, 10.0}) {
        const auto s = constant_env(1.0, 0.5, 0.0, len, 1e-4);
        const double flo = oracles::gplus_inv_std(lambda - beta);
        const double fhi = oracles::gplus_inv_std(lambda);
        const auto tr = corrector::gronwall_gap(s, g, beta, lambda, BranchSide::Plus, flo, fhi);
        CHECK_FALSE(tr.infinite_contraction);
        CHECK(tr.within_envelope);
        CHECK(tr.gap_ratio <= std::exp(-len) * (1.0 + 1e-2));
        for (std::size_t i = 1; i < tr.gap.size(); ++i) CHECK(tr.gap[i] <= tr.gap[i - 1] + 1e-15);
    }
}

TEST_CASE("gronwall_gap: equal seeds stay equal; zeros of a give infinite contraction") {
    const auto g = g_std();
    const auto s = constant_env(1.0, 0.5, 0.0, 2.0, 1e-3);
    const auto tr = corrector::gronwall_gap(s, g, 1.0, 2.0, BranchSide::Plus, 0.8, 0.8);
    for (double gp : tr.gap) CHECK(gp == 0.0);

    const auto sd = degenerate_env(-1.0, 2.0, 1e-3);
    const auto trd = corrector::gronwall_gap(sd, g, 1.0, 2.0, BranchSide::Plus,
                                             oracles::gplus_inv_std(1.0),
                                             oracles::gplus_inv_std(2.0));
    CHECK(trd.infinite_contraction);
    CHECK(trd.gap.back() == 0.0);
}

TEST_CASE("regularized family: inactive when a is already above 1/n") {
    const auto g = g_std();
    const auto s = constant_env(0.9, 0.5, 0.0, 3.0, 1e-3);
    corrector::RegularizationSchedule sched;
    sched.ns = {2, 4, 8};
    const auto fam = corrector::regularized_family(s, g, 1.0, 2.0, BranchSide::Plus, sched);
    for (double d : fam.sup_distances) CHECK(d <= 1e-12);
    CHECK(fam.distance_to_limit <= 1e-12);
}

TEST_CASE("regularized family: converges to the pinned formula as n grows") {
    const auto g = g_std();
    const auto s = sine_env(0.0, 0.0, 30.0, 2e-3);
    corrector::RegularizationSchedule sched;
    sched.ns = {1, 2, 4, 8, 16, 32};
    const auto fam = corrector::regularized_family(s, g, 1.0, 2.0, BranchSide::Plus, sched);
    // non-increasing beyond a threshold schedule index (the asymptotic regime)
    for (std::size_t k = 2; k < fam.sup_distances.size(); ++k)
        CHECK(fam.sup_distances[k] < fam.sup_distances[k - 1]);
    CHECK(fam.distance_to_limit <= 3.0 * fam.sup_distances.back());
}

TEST_CASE("pinned_set") {
    const auto s1 = constant_env(1.0, 0.5, 0.0, 1.0, 0.01);
    for (char c : corrector::pinned_set(s1, 1e-12)) CHECK(c == 0);
    for (char c : corrector::pinned_set(s1, 1.0)) CHECK(c == 1);  // a <= 1 always
    const auto sd = degenerate_env(-1.0, 2.0, 1e-3);
    const auto mask = corrector::pinned_set(sd, 1e-12);
    for (std::size_t i = 0; i < sd.grid.n; ++i) {
        const double x = sd.grid.x(i);
        if (x >= 0.0 && x <= 1.0) CHECK(mask[i] == 1);
        if (x < -0.05 || x > 1.05) CHECK(mask[i] == 0);
    }
}

TEST_CASE("degenerate interior zero: the solver restarts from the pinned value") {
    const auto g = g_std();
    const auto s = degenerate_env(-1.0, 2.0, 1e-3);
    const double beta = 1.0;
    for (double lambda : {1.5, 2.0}) {
        const auto p = corrector::solve_branch(s, g, beta, lambda, BranchSide::Plus);
        double worst = 0.0;
        for (std::size_t i = 0; i < s.grid.n; ++i) {
            if (!p.pinned[i]) continue;
            worst = std::max(worst, std::abs(g(p.f[i]) + beta * s.v[i] - lambda));
        }
        CHECK(worst <= 1e-8);
        for (std::size_t i = 0; i < s.grid.n; ++i) {
            CHECK(p.f[i] >= p.diag.branch_lo - 1e-12);
            CHECK(p.f[i] <= p.diag.branch_hi + 1e-12);
        }
    }
}

TEST_CASE("scattered zeros: pinning restarts hold the invariants across kinds") {
    const auto g = g_std();
    env::EnvConfig pb;
    pb.kind = env::Kind::PoissonBumps;
    pb.params["intensity"] = 1.0;
    pb.params["width"] = 1.0;
    pb.params["v0"] = 0.6;
    pb.kappa = 2.0;
    env::EnvConfig rf;
    rf.kind = env::Kind::RandomFourier;
    rf.params["modes"] = 6.0;
    rf.params["s_base"] = 0.6;
    rf.params["s_amp"] = 0.3;
    rf.kappa = 40.0;
    rf.periodic = true;
    rf.period = 2.0;
    SolverOptions opts;
    for (std::uint64_t seed : {3u, 17u}) {
        for (const auto& cfg : {pb, rf}) {
            const auto s = env::generate_env(cfg, seed, 0.0, 30.0, 2.5e-4);
            for (double lambda : {1.2, 2.0}) {
                for (auto side : {BranchSide::Plus, BranchSide::Minus}) {
                    const auto p = corrector::solve_branch(s, g, 1.0, lambda, side, opts);
                    CHECK(p.u.front() == 0.0);
                    for (std::size_t i = 0; i < s.grid.n; ++i) {
                        REQUIRE(p.f[i] >= p.diag.branch_lo - 1e-12);
                        REQUIRE(p.f[i] <= p.diag.branch_hi + 1e-12);
                    }
                    CHECK(p.diag.max_pin_residual <= opts.pin_tol);
                    CHECK(p.diag.max_residual <= 10.0 * opts.solver_tol);
                }
            }
        }
    }
}

TEST_CASE("lambda below beta is rejected as an empty branch interval") {
    const auto g = g_std();
    const auto s = constant_env(1.0, 0.5, 0.0, 1.0, 0.01);
    CHECK_THROWS_AS(corrector::solve_branch(s, g, 1.0, 0.5, BranchSide::Plus), std::domain_error);
}
