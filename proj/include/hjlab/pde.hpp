#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hjlab/common.hpp"
#include "hjlab/env.hpp"
#include "hjlab/gclass.hpp"

namespace hjlab::pde {

enum class Flux { GodunovQuasiconvex, LaxFriedrichs };
enum class Boundary { PeriodicPerturbation, LargeDomain };

const char* flux_name(Flux f);
Flux flux_from_name(const std::string& name);

struct SchemeConfig {
    double dx = 0.01;
    double cfl = 0.9;  // in (0, 1]
    Flux flux = Flux::GodunovQuasiconvex;
    Boundary boundary = Boundary::PeriodicPerturbation;
    double t_final = 10.0;
    double tail_fraction = 0.5;
    double gradient_bound = 0.0;  // 0: derive from theta, G and beta
    std::size_t max_records = 2000;
    std::vector<double> record_times;  // full snapshots at these times
};

struct SimulationTrace {
    double theta = 0.0;
    double dt = 0.0;
    std::size_t steps = 0;
    double gradient_bound = 0.0;
    std::vector<double> times;
    std::vector<double> center;  // u(t, 0)
    std::vector<double> snapshot_times;
    std::vector<std::vector<double>> snapshots;  // state (v or u) at snapshot times
    std::vector<double> final_state;
    Flux flux = Flux::GodunovQuasiconvex;
    Boundary boundary = Boundary::PeriodicPerturbation;
    double dx = 0.0, cfl = 0.0;
};

// liminf/limsup surrogates over the tail window [tail_fraction*T, T]:
// h_lower/h_upper are min/max of u(t,0)/t, fitted the least-squares slope.
struct SlopeEstimate {
    double h_lower = 0.0;
    double h_upper = 0.0;
    double fitted = 0.0;
    double richardson = 0.0;  // 2*fitted(T) - fitted(T/2)
    double tail_start = 0.0;
    std::size_t tail_count = 0;
};

// A-priori gradient range for the CFL bound and the large-domain speed cone.
double default_gradient_bound(const gclass::NonlinearitySpec& g, double beta, double theta);

// Monotone time step: dt = cfl / (2 max(a)/dx^2 + L_G/dx).
double stable_dt(double max_a, double dx, double cfl, double l_g);

// Godunov numerical Hamiltonian for quasiconvex G minimized at 0, oriented for
// du/dt = G(du/dx): nondecreasing in the forward quotient, nonincreasing in the
// backward one, and exact when both arguments agree.
inline double godunov_flux(const gclass::NonlinearitySpec& g, double pm, double pp) {
    const double up = pp > 0.0 ? pp : 0.0;
    const double dn = pm < 0.0 ? pm : 0.0;
    const double a = g(up), b = g(dn);
    return a > b ? a : b;
}

inline double lax_friedrichs_flux(const gclass::NonlinearitySpec& g, double pm, double pp,
                                  double sigma) {
    return g(0.5 * (pm + pp)) + 0.5 * sigma * (pp - pm);
}

// Single-node explicit update on the perturbation v = u - theta*x; the tests
// drive this exact function, and run() loops over it.
inline double node_update(const gclass::NonlinearitySpec& g, Flux flux, double sigma, double a,
                          double dt, double dx, double theta, double beta, double pot, double vm,
                          double v0, double vp) {
    const double dplus = vp - v0;
    const double dminus = v0 - vm;
    const double diff = a * ((dplus - dminus) / (dx * dx));
    const double pm = theta + dminus / dx;
    const double pp = theta + dplus / dx;
    const double fl = flux == Flux::GodunovQuasiconvex ? godunov_flux(g, pm, pp)
                                                       : lax_friedrichs_flux(g, pm, pp, sigma);
    return v0 + dt * (diff + (fl + beta * pot));
}

// Explicit monotone evolution of du/dt = a u_xx + G(u_x) + beta V from u(0,x) = theta x.
SimulationTrace run(const env::EnvironmentSample& sample, const gclass::NonlinearitySpec& g,
                    double beta, double theta, const SchemeConfig& scheme);

// Same, but for an exact step count (the rescaling check needs both runs to
// perform identical arithmetic).
SimulationTrace run_steps(const env::EnvironmentSample& sample,
                          const gclass::NonlinearitySpec& g, double beta, double theta,
                          const SchemeConfig& scheme, std::size_t n_steps);

SlopeEstimate estimate_slope(const SimulationTrace& trace, double tail_fraction);

struct RescaleReport {
    double eps = 0.0;
    std::size_t steps = 0;
    double max_rel_diff = 0.0;
    bool pass = false;
};

// Dyadic eps: the eps-scaled run must equal eps times the base run node-by-node
// within 1e-12 relative (the two iterations perform identical arithmetic up to
// the scalar factor). Non-dyadic eps is rejected unless allow_nondyadic is set.
RescaleReport epsilon_rescale_check(const env::EnvironmentSample& sample,
                                    const gclass::NonlinearitySpec& g, double beta, double theta,
                                    const SchemeConfig& scheme, double eps,
                                    std::size_t steps = 100, bool allow_nondyadic = false);

// Trace files: CSV t,u_center,slope plus a JSON metadata sidecar.
void write_trace(const SimulationTrace& trace, const std::string& csv_path,
                 const std::string& json_path);

}  // namespace hjlab::pde
