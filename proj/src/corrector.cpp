#include "hjlab/corrector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace hjlab::corrector {

namespace {

using gclass::BranchSide;
using gclass::NonlinearitySpec;

struct BranchInterval {
    double lo = 0.0, hi = 0.0;
};

BranchInterval branch_interval(const NonlinearitySpec& g, double beta, double lambda,
                               BranchSide side) {
    if (lambda < beta)
        throw std::domain_error("corrector: lambda < beta leaves the branch interval empty");
    if (!g.normalized() || !g.in_sqc)
        throw std::invalid_argument("corrector: nonlinearity must be normalized and strictly "
                                    "quasiconvex (run reduce/perturb first)");
    if (side == BranchSide::Plus)
        return {gclass::branch_inverse(g, side, lambda - beta),
                gclass::branch_inverse(g, side, lambda)};
    return {gclass::branch_inverse(g, side, lambda),
            gclass::branch_inverse(g, side, lambda - beta)};
}

// One implicit step: solve a*(c1*f + c0)/(s*dx) + G(f) + beta*v = lambda for f
// restricted to [lo, hi]; the step is clamped at the interval endpoints and the
// violation it causes is reported through *clamp.
double implicit_step(const NonlinearitySpec& g, double a, double v, double beta, double lambda,
                     double c1, double c0, double sdx, double lo, double hi, double guess,
                     double* clamp) {
    auto phi = [&](double f) { return a * (c1 * f + c0) / sdx + g(f) + beta * v - lambda; };
    double plo = phi(lo), phi_hi = phi(hi);
    const bool increasing = plo <= phi_hi;
    if (!increasing) std::swap(plo, phi_hi);
    // root outside the branch interval: clamp and record the equation violation
    if (plo >= 0.0) {
        const double at = increasing ? lo : hi;
        *clamp = std::max(*clamp, std::abs(phi(at)));
        return at;
    }
    if (phi_hi <= 0.0) {
        const double at = increasing ? hi : lo;
        *clamp = std::max(*clamp, std::abs(phi(at)));
        return at;
    }
    double blo = lo, bhi = hi;  // phi has opposite signs at blo, bhi
    double f = std::clamp(guess, lo, hi);
    const double tol = 1e-13 * (1.0 + std::abs(lambda));
    for (int it = 0; it < 80; ++it) {
        const double val = phi(f);
        if (std::abs(val) <= tol) return f;
        const bool below = increasing ? (val < 0.0) : (val > 0.0);
        (below ? blo : bhi) = f;
        const double dphi = a * c1 / sdx +
                            g.branch_derivative(lo >= 0.0 ? BranchSide::Plus : BranchSide::Minus, f);
        double next = (dphi != 0.0) ? f - val / dphi : 0.5 * (blo + bhi);
        if (!(next > blo && next < bhi)) next = 0.5 * (blo + bhi);
        f = next;
    }
    return f;
}

struct Sweep {
    std::vector<double> f;
    std::vector<char> pinned;
};

Sweep sweep_branch(const env::EnvironmentSample& s, const NonlinearitySpec& g, double beta,
                   double lambda, BranchSide side, double f_init, const SolverOptions& opts,
                   double* max_clamp) {
    const std::size_t n = s.grid.n;
    const auto iv = branch_interval(g, beta, lambda, side);
    const bool forward = (side == BranchSide::Plus);
    const double sdx = forward ? s.grid.dx : -s.grid.dx;

    Sweep out;
    out.f.assign(n, 0.0);
    out.pinned.assign(n, 0);

    double f1 = std::clamp(f_init, iv.lo, iv.hi);
    double f2 = 0.0;
    int history = -1;  // -1: nothing yet, 0: one value, >=1: two values usable

    auto idx = [&](std::size_t k) { return forward ? k : n - 1 - k; };
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = idx(k);
        if (s.a[i] <= opts.a_floor) {
            out.f[i] = gclass::branch_inverse(g, side, lambda - beta * s.v[i]);
            out.pinned[i] = 1;
            f2 = f1 = out.f[i];
            history = 0;
            continue;
        }
        if (history < 0) {
            // inflow boundary: the sweep starts from the configured interior value
            out.f[i] = f1;
            history = 0;
            continue;
        }
        double f;
        if (history == 0) {
            f = implicit_step(g, s.a[i], s.v[i], beta, lambda, 1.0, -f1, sdx, iv.lo, iv.hi, f1,
                              max_clamp);
        } else {
            f = implicit_step(g, s.a[i], s.v[i], beta, lambda, 1.5, -2.0 * f1 + 0.5 * f2, sdx,
                              iv.lo, iv.hi, f1, max_clamp);
        }
        out.f[i] = f;
        f2 = f1;
        f1 = f;
        history = std::min(history + 1, 2);
    }
    return out;
}

}  // namespace

CorrectorProfile solve_branch(const env::EnvironmentSample& sample, const NonlinearitySpec& g,
                              double beta, double lambda, BranchSide branch,
                              const SolverOptions& opts) {
    const std::size_t n = sample.grid.n;
    if (n < 3) throw std::invalid_argument("corrector: sample too small");
    const auto iv = branch_interval(g, beta, lambda, branch);
    const bool forward = (branch == BranchSide::Plus);
    const double dx = sample.grid.dx;

    double init = 0.5 * (iv.lo + iv.hi);
    if (opts.init == SolverOptions::Init::Low) init = iv.lo;
    if (opts.init == SolverOptions::Init::High) init = iv.hi;

    CorrectorProfile p;
    p.branch = branch;
    p.lambda = lambda;
    p.beta = beta;
    p.grid = sample.grid;
    p.diag.branch_lo = iv.lo;
    p.diag.branch_hi = iv.hi;
    p.diag.lipschitz_bound =
        std::max(-gclass::branch_inverse(g, BranchSide::Minus, lambda),
                 gclass::branch_inverse(g, BranchSide::Plus, lambda));

    auto main = sweep_branch(sample, g, beta, lambda, branch, init, opts, &p.diag.max_clamp);
    p.f = std::move(main.f);
    p.pinned = std::move(main.pinned);

    // burn-in: discard the inflow prefix until the Gronwall envelope has dropped
    // below target; a pinned point resets the state exactly and ends it early
    const double width = iv.hi - iv.lo;
    const double eta = g.eta_rate();
    const double budget = width > opts.burn_in_target
                              ? std::log(width / opts.burn_in_target) / eta
                              : 0.0;
    std::size_t burn_len = n;  // grid steps consumed by burn-in, measured from inflow
    {
        double cum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t i = forward ? k : n - 1 - k;
            if (p.pinned[i]) { burn_len = k; break; }
            if (cum >= budget) { burn_len = k; break; }
            if (k + 1 < n) {
                const std::size_t inext = forward ? i + 1 : i - 1;
                cum += 0.5 * dx * (1.0 / std::max(sample.a[i], opts.a_floor) +
                                   1.0 / std::max(sample.a[inext], opts.a_floor));
            }
        }
        if (burn_len == n && budget == 0.0) burn_len = 0;
    }
    if (forward) {
        p.retained_lo = std::min(burn_len, n);
        p.retained_hi = n;
    } else {
        p.retained_lo = 0;
        p.retained_hi = n - std::min(burn_len, n);
    }
    if (p.retained_lo >= p.retained_hi) { p.retained_lo = p.retained_hi = forward ? n : 0; }

    // endpoint-seeded contraction across the burn-in region
    if (width > 0.0 && burn_len > 0 && burn_len < n) {
        double dummy = 0.0;
        auto lo_tr = sweep_branch(sample, g, beta, lambda, branch, iv.lo, opts, &dummy);
        auto hi_tr = sweep_branch(sample, g, beta, lambda, branch, iv.hi, opts, &dummy);
        const std::size_t edge = forward ? p.retained_lo : p.retained_hi - 1;
        p.diag.contraction_factor = (hi_tr.f[edge] - lo_tr.f[edge]) / width;
    }

    // cumulative integral and residuals
    p.u.assign(n, 0.0);
    for (std::size_t i = 1; i < n; ++i)
        p.u[i] = p.u[i - 1] + 0.5 * dx * (p.f[i - 1] + p.f[i]);

    p.residual.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double fp;
        const bool left_ok = i > 0 && p.pinned[i - 1] == p.pinned[i];
        const bool right_ok = i + 1 < n && p.pinned[i + 1] == p.pinned[i];
        if (left_ok && right_ok) fp = (p.f[i + 1] - p.f[i - 1]) / (2.0 * dx);
        else if (right_ok) fp = (p.f[i + 1] - p.f[i]) / dx;
        else if (left_ok) fp = (p.f[i] - p.f[i - 1]) / dx;
        else fp = 0.0;
        p.residual[i] = std::abs(sample.a[i] * fp + g(p.f[i]) + beta * sample.v[i] - lambda);
        if (p.pinned[i]) {
            p.diag.max_pin_residual = std::max(
                p.diag.max_pin_residual, std::abs(g(p.f[i]) + beta * sample.v[i] - lambda));
        } else if (i > 0 && i + 1 < n && i >= p.retained_lo && i < p.retained_hi) {
            p.diag.max_residual = std::max(p.diag.max_residual, p.residual[i]);
        }
    }
    return p;
}

GronwallTrace gronwall_gap(const env::EnvironmentSample& sample, const NonlinearitySpec& g,
                           double beta, double lambda, BranchSide branch, double f_low,
                           double f_high, double slack, const SolverOptions& opts) {
    const auto iv = branch_interval(g, beta, lambda, branch);
    if (!(f_low >= iv.lo - 1e-12 && f_high <= iv.hi + 1e-12 && f_low <= f_high))
        throw std::invalid_argument("gronwall_gap: seeds must lie in the branch interval");
    const std::size_t n = sample.grid.n;
    const double dx = sample.grid.dx;
    const bool forward = (branch == BranchSide::Plus);
    const double sdx = forward ? dx : -dx;
    const double eta = g.eta_rate();

    GronwallTrace tr;
    tr.x.reserve(n);
    tr.gap.reserve(n);
    tr.envelope.reserve(n);

    double lo_f = f_low, hi_f = f_high;
    double cum = 0.0;
    double clamp = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = forward ? k : n - 1 - k;
        if (k > 0) {
            const std::size_t iprev = forward ? i - 1 : i + 1;
            if (sample.a[i] <= opts.a_floor) {
                tr.infinite_contraction = true;
                const double pinv = gclass::branch_inverse(g, branch, lambda - beta * sample.v[i]);
                lo_f = hi_f = pinv;
                cum = std::numeric_limits<double>::infinity();
            } else {
                cum += 0.5 * dx * (1.0 / std::max(sample.a[iprev], opts.a_floor) +
                                   1.0 / std::max(sample.a[i], opts.a_floor));
                lo_f = implicit_step(g, sample.a[i], sample.v[i], beta, lambda, 1.0, -lo_f, sdx,
                                     iv.lo, iv.hi, lo_f, &clamp);
                hi_f = implicit_step(g, sample.a[i], sample.v[i], beta, lambda, 1.0, -hi_f, sdx,
                                     iv.lo, iv.hi, hi_f, &clamp);
            }
        }
        tr.x.push_back(sample.grid.x(i));
        tr.gap.push_back(hi_f - lo_f);
        tr.envelope.push_back((f_high - f_low) * std::exp(-eta * cum));
    }
    const double g0 = tr.gap.front();
    tr.gap_ratio = g0 > 0.0 ? tr.gap.back() / g0 : 0.0;
    tr.envelope_ratio = (f_high > f_low) ? tr.envelope.back() / (f_high - f_low) : 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (tr.gap[k] > tr.envelope[k] * (1.0 + slack) + 1e-300) {
            tr.within_envelope = false;
            break;
        }
    }
    return tr;
}

RegularizedFamily regularized_family(const env::EnvironmentSample& sample,
                                     const NonlinearitySpec& g, double beta, double lambda,
                                     BranchSide branch, const RegularizationSchedule& schedule,
                                     const SolverOptions& opts) {
    if (schedule.ns.empty()) throw std::invalid_argument("regularized_family: empty schedule");
    for (std::size_t k = 0; k < schedule.ns.size(); ++k) {
        if (schedule.ns[k] < 1 || (k > 0 && schedule.ns[k] <= schedule.ns[k - 1]))
            throw std::invalid_argument("regularized_family: schedule must be increasing, n >= 1");
    }
    RegularizedFamily out;
    for (int nreg : schedule.ns) {
        env::EnvironmentSample mod = sample;
        const double floor_a = 1.0 / nreg;
        for (auto& av : mod.a) av = std::max(av, floor_a);
        out.profiles.push_back(solve_branch(mod, g, beta, lambda, branch, opts));
    }
    const auto limit = solve_branch(sample, g, beta, lambda, branch, opts);
    // distances measured past every profile's burn-in, so the inflow boundary
    // layers (whose width shrinks with n but whose height does not) drop out
    std::size_t lo = limit.retained_lo, hi = limit.retained_hi;
    for (const auto& p : out.profiles) {
        if (p.retained_lo >= p.retained_hi) continue;
        lo = std::max(lo, p.retained_lo);
        hi = std::min(hi, p.retained_hi);
    }
    if (lo >= hi) { lo = 0; hi = sample.grid.n; }
    for (std::size_t k = 1; k < out.profiles.size(); ++k) {
        double d = 0.0;
        for (std::size_t i = lo; i < hi; ++i)
            d = std::max(d, std::abs(out.profiles[k].f[i] - out.profiles[k - 1].f[i]));
        out.sup_distances.push_back(d);
    }
    double d = 0.0;
    for (std::size_t i = lo; i < hi; ++i)
        d = std::max(d, std::abs(out.profiles.back().f[i] - limit.f[i]));
    out.distance_to_limit = d;
    return out;
}

std::vector<char> pinned_set(const env::EnvironmentSample& sample, double a_floor) {
    if (a_floor < 0.0) throw std::invalid_argument("pinned_set: a_floor must be >= 0");
    std::vector<char> mask(sample.grid.n, 0);
    for (std::size_t i = 0; i < sample.grid.n; ++i) mask[i] = sample.a[i] <= a_floor ? 1 : 0;
    return mask;
}

void write_profile(const CorrectorProfile& p, const env::EnvironmentSample& sample,
                   const std::string& csv_path, const std::string& json_path,
                   const SolverOptions& opts) {
    std::ofstream f(csv_path);
    if (!f) throw std::runtime_error("cannot open " + csv_path);
    f << "x,a,v,f,u,residual,pinned\n";
    for (std::size_t i = 0; i < p.grid.n; ++i) {
        f << fmt17(p.grid.x(i)) << "," << fmt17(sample.a[i]) << "," << fmt17(sample.v[i]) << ","
          << fmt17(p.f[i]) << "," << fmt17(p.u[i]) << "," << fmt17(p.residual[i]) << ","
          << int(p.pinned[i]) << "\n";
    }
    nlohmann::json j;
    j["branch"] = p.branch == BranchSide::Plus ? "plus" : "minus";
    j["lambda"] = p.lambda;
    j["beta"] = p.beta;
    j["retained_lo"] = p.retained_lo;
    j["retained_hi"] = p.retained_hi;
    j["solver"] = {{"a_floor", opts.a_floor},
                   {"solver_tol", opts.solver_tol},
                   {"pin_tol", opts.pin_tol},
                   {"burn_in_target", opts.burn_in_target}};
    j["diagnostics"] = {{"max_residual", p.diag.max_residual},
                        {"max_pin_residual", p.diag.max_pin_residual},
                        {"max_clamp", p.diag.max_clamp},
                        {"contraction_factor", p.diag.contraction_factor},
                        {"lipschitz_bound", p.diag.lipschitz_bound},
                        {"branch_lo", p.diag.branch_lo},
                        {"branch_hi", p.diag.branch_hi}};
    std::ofstream jf(json_path);
    if (!jf) throw std::runtime_error("cannot open " + json_path);
    jf << j.dump(2) << "\n";
}

}  // namespace hjlab::corrector
