#include "hjlab/pde.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace hjlab::pde {

const char* flux_name(Flux f) {
    return f == Flux::GodunovQuasiconvex ? "godunov-quasiconvex" : "lax-friedrichs";
}

Flux flux_from_name(const std::string& name) {
    if (name == "godunov-quasiconvex") return Flux::GodunovQuasiconvex;
    if (name == "lax-friedrichs") return Flux::LaxFriedrichs;
    throw std::invalid_argument("unknown flux kind: " + name);
}

double default_gradient_bound(const gclass::NonlinearitySpec& g, double beta, double theta) {
    const double level = g(theta) + beta;
    const double reach = std::max(gclass::branch_inverse(g, gclass::BranchSide::Plus, level),
                                  -gclass::branch_inverse(g, gclass::BranchSide::Minus, level));
    return 1.5 * std::max(std::abs(theta), reach);
}

double stable_dt(double max_a, double dx, double cfl, double l_g) {
    if (!(cfl > 0.0 && cfl <= 1.0)) throw std::invalid_argument("cfl must be in (0, 1]");
    const double denom = 2.0 * max_a / (dx * dx) + l_g / dx;
    if (!(denom > 0.0)) throw std::invalid_argument("degenerate scheme: zero stiffness bound");
    return cfl / denom;
}

namespace {

struct Prepared {
    std::vector<double> a, pot;  // state-sized coefficient arrays
    std::size_t center = 0;      // state index of x = 0
    double dt = 0.0;
    double sigma = 0.0;          // LF artificial viscosity = gradient Lipschitz bound
    double gradient_bound = 0.0;
    bool periodic = false;
    double theta = 0.0, x0 = 0.0, dx = 0.0;
};

Prepared prepare(const env::EnvironmentSample& s, const gclass::NonlinearitySpec& g, double beta,
                 double theta, const SchemeConfig& cfg) {
    if (!g.normalized())
        throw std::invalid_argument("pde: nonlinearity must be normalized (reduce first)");
    Prepared p;
    p.theta = theta;
    p.dx = s.grid.dx;
    p.x0 = s.grid.x0;
    p.gradient_bound =
        cfg.gradient_bound > 0.0 ? cfg.gradient_bound : default_gradient_bound(g, beta, theta);
    const double l_g = g.lipschitz_on(p.gradient_bound);
    p.sigma = l_g;
    p.dt = stable_dt(s.max_a(), s.grid.dx, cfg.cfl, l_g);

    if (cfg.boundary == Boundary::PeriodicPerturbation) {
        if (!s.grid.periodic)
            throw std::invalid_argument("periodic-perturbation mode requires a periodic sample");
        const std::size_t pp = s.grid.period_points;
        if ((s.grid.n - 1) % pp != 0)
            throw std::invalid_argument(
                "periodic-perturbation mode requires an integer number of periods");
        p.periodic = true;
        p.a.assign(s.a.begin(), s.a.begin() + pp);
        p.pot.assign(s.v.begin(), s.v.begin() + pp);
        p.center = s.grid.index_of(0.0) % pp;
    } else {
        p.a = s.a;
        p.pot = s.v;
        p.center = s.grid.index_of(0.0);
    }
    return p;
}

// The pinned-boundary mode is valid only until the finite-speed cone can reach
// the center; enforced before any stepping happens.
void check_cone(const env::EnvironmentSample& s, const Prepared& p, double horizon) {
    if (p.periodic) return;
    const double halfwidth = std::min(-s.grid.x0, s.grid.x(s.grid.n - 1));
    if (!(halfwidth > p.sigma * horizon + 1.0))
        throw std::invalid_argument(
            "large-domain mode: window half-width must exceed speed_bound*T + margin (need > " +
            std::to_string(p.sigma * horizon + 1.0) + ")");
}

SimulationTrace evolve(const Prepared& p, const gclass::NonlinearitySpec& g, double beta,
                       const SchemeConfig& cfg, std::size_t n_steps) {
    const std::size_t m = p.a.size();
    SimulationTrace tr;
    tr.theta = p.theta;
    tr.dt = p.dt;
    tr.steps = n_steps;
    tr.gradient_bound = p.gradient_bound;
    tr.flux = cfg.flux;
    tr.boundary = cfg.boundary;
    tr.dx = p.dx;
    tr.cfl = cfg.cfl;

    std::vector<double> v(m), w(m);
    if (p.periodic) {
        std::fill(v.begin(), v.end(), 0.0);
    } else {
        for (std::size_t i = 0; i < m; ++i) v[i] = p.theta * (p.x0 + double(i) * p.dx);
    }

    const std::size_t stride = std::max<std::size_t>(1, n_steps / std::max<std::size_t>(cfg.max_records, 1));
    // u(t,0): the periodic state stores v = u - theta*x and theta*0 = 0
    auto center_u = [&](const std::vector<double>& state) { return state[p.center]; };
    tr.times.push_back(0.0);
    tr.center.push_back(center_u(v));

    std::vector<std::size_t> snap_steps;
    for (double t : cfg.record_times)
        snap_steps.push_back(static_cast<std::size_t>(std::llround(t / p.dt)));

    for (std::size_t step = 1; step <= n_steps; ++step) {
        if (p.periodic) {
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t im = i == 0 ? m - 1 : i - 1;
                const std::size_t ip = i + 1 == m ? 0 : i + 1;
                w[i] = node_update(g, cfg.flux, p.sigma, p.a[i], p.dt, p.dx, p.theta, beta,
                                   p.pot[i], v[im], v[i], v[ip]);
            }
        } else {
            w[0] = v[0];
            w[m - 1] = v[m - 1];
            for (std::size_t i = 1; i + 1 < m; ++i)
                w[i] = node_update(g, cfg.flux, p.sigma, p.a[i], p.dt, p.dx, 0.0, beta, p.pot[i],
                                   v[i - 1], v[i], v[i + 1]);
        }
        v.swap(w);
        if (step % stride == 0 || step == n_steps) {
            tr.times.push_back(double(step) * p.dt);
            tr.center.push_back(center_u(v));
        }
        for (std::size_t si = 0; si < snap_steps.size(); ++si) {
            if (snap_steps[si] == step) {
                tr.snapshot_times.push_back(double(step) * p.dt);
                tr.snapshots.push_back(v);
            }
        }
    }
    tr.final_state = std::move(v);
    return tr;
}

}  // namespace

SimulationTrace run(const env::EnvironmentSample& sample, const gclass::NonlinearitySpec& g,
                    double beta, double theta, const SchemeConfig& scheme) {
    if (scheme.t_final <= 0.0) throw std::invalid_argument("t_final must be > 0");
    const Prepared p = prepare(sample, g, beta, theta, scheme);
    check_cone(sample, p, scheme.t_final);
    const auto n_steps = static_cast<std::size_t>(std::ceil(scheme.t_final / p.dt));
    return evolve(p, g, beta, scheme, n_steps);
}

SimulationTrace run_steps(const env::EnvironmentSample& sample, const gclass::NonlinearitySpec& g,
                          double beta, double theta, const SchemeConfig& scheme,
                          std::size_t n_steps) {
    const Prepared p = prepare(sample, g, beta, theta, scheme);
    check_cone(sample, p, double(n_steps) * p.dt);
    return evolve(p, g, beta, scheme, n_steps);
}

SlopeEstimate estimate_slope(const SimulationTrace& trace, double tail_fraction) {
    if (!(tail_fraction > 0.0 && tail_fraction < 1.0))
        throw std::invalid_argument("estimate_slope: tail_fraction must be in (0, 1)");
    const double t_end = trace.times.back();

    // least squares through the origin: the slope is a t^2-weighted average of
    // the samples u/t, so h_lower <= fitted <= h_upper holds by construction
    auto fit = [&](double lo, double hi, double& h_lo, double& h_hi, std::size_t& count) {
        double num = 0.0, den = 0.0;
        std::size_t n = 0;
        h_lo = std::numeric_limits<double>::infinity();
        h_hi = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < trace.times.size(); ++k) {
            const double t = trace.times[k];
            if (t < lo || t > hi || t <= 0.0) continue;
            ++n;
            num += t * trace.center[k];
            den += t * t;
            const double slope = trace.center[k] / t;
            h_lo = std::min(h_lo, slope);
            h_hi = std::max(h_hi, slope);
        }
        count = n;
        return den > 0.0 ? num / den : 0.0;
    };

    SlopeEstimate est;
    est.tail_start = tail_fraction * t_end;
    est.fitted = fit(est.tail_start, t_end, est.h_lower, est.h_upper, est.tail_count);
    if (est.tail_count < 10) throw std::invalid_argument("estimate_slope: tail has fewer than 10 samples");
    double dlo, dhi;
    std::size_t dummy;
    const double fitted_half = fit(0.5 * est.tail_start, 0.5 * t_end, dlo, dhi, dummy);
    est.richardson = 2.0 * est.fitted - fitted_half;
    return est;
}

RescaleReport epsilon_rescale_check(const env::EnvironmentSample& sample,
                                    const gclass::NonlinearitySpec& g, double beta, double theta,
                                    const SchemeConfig& scheme, double eps, std::size_t steps,
                                    bool allow_nondyadic) {
    if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("eps must be in (0, 1]");
    int e2 = 0;
    const double mant = std::frexp(eps, &e2);
    if (mant != 0.5 && eps != 1.0 && !allow_nondyadic)
        throw std::invalid_argument("eps must be dyadic (2^-k); pass allow_nondyadic to override");

    SchemeConfig base_cfg = scheme;
    if (base_cfg.gradient_bound <= 0.0)
        base_cfg.gradient_bound = default_gradient_bound(g, beta, theta);
    base_cfg.record_times.clear();
    base_cfg.max_records = steps;  // record every step

    const SimulationTrace base = run_steps(sample, g, beta, theta, base_cfg, steps);

    env::EnvironmentSample scaled = sample;
    scaled.grid.x0 = eps * sample.grid.x0;
    scaled.grid.dx = eps * sample.grid.dx;
    for (auto& av : scaled.a) av *= eps;
    SchemeConfig scaled_cfg = base_cfg;
    scaled_cfg.dx = scaled.grid.dx;

    const SimulationTrace sc = run_steps(scaled, g, beta, theta, scaled_cfg, steps);

    RescaleReport rep;
    rep.eps = eps;
    rep.steps = steps;
    double worst = 0.0;
    for (std::size_t i = 0; i < base.final_state.size(); ++i) {
        const double want = eps * base.final_state[i];
        const double got = sc.final_state[i];
        worst = std::max(worst, std::abs(got - want) / (std::abs(want) + 1e-300));
    }
    for (std::size_t k = 0; k < base.center.size(); ++k) {
        const double want = eps * base.center[k];
        const double got = sc.center[k];
        worst = std::max(worst, std::abs(got - want) / (std::abs(want) + 1e-300));
    }
    rep.max_rel_diff = worst;
    rep.pass = worst <= 1e-12;
    return rep;
}

void write_trace(const SimulationTrace& trace, const std::string& csv_path,
                 const std::string& json_path) {
    std::ofstream f(csv_path);
    if (!f) throw std::runtime_error("cannot open " + csv_path);
    f << "t,u_center,slope\n";
    for (std::size_t k = 0; k < trace.times.size(); ++k) {
        const double t = trace.times[k];
        f << fmt17(t) << "," << fmt17(trace.center[k]) << ","
          << fmt17(t > 0.0 ? trace.center[k] / t : 0.0) << "\n";
    }
    nlohmann::json j;
    j["theta"] = trace.theta;
    j["dt"] = trace.dt;
    j["steps"] = trace.steps;
    j["dx"] = trace.dx;
    j["cfl"] = trace.cfl;
    j["flux"] = flux_name(trace.flux);
    j["boundary"] =
        trace.boundary == Boundary::PeriodicPerturbation ? "periodic-perturbation" : "large-domain";
    j["gradient_bound"] = trace.gradient_bound;
    std::ofstream jf(json_path);
    if (!jf) throw std::runtime_error("cannot open " + json_path);
    jf << j.dump(2) << "\n";
}

}  // namespace hjlab::pde
