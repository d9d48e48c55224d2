#pragma once

#include <cstddef>
#include <vector>

#include "hjlab/common.hpp"
#include "hjlab/env.hpp"
#include "hjlab/gclass.hpp"

namespace hjlab::corrector {

using gclass::BranchSide;

struct SolverOptions {
    double a_floor = 1e-12;       // below this the ODE step becomes the pinned formula
    double solver_tol = 1e-6;     // target for the interior equation residual
    double pin_tol = 1e-8;        // target for |G(f)+beta*v-lambda| at pinned points
    double burn_in_target = 1e-10;  // Gronwall envelope level that ends the burn-in
    enum class Init { Mid, Low, High } init = Init::Mid;
};

struct Diagnostics {
    double max_residual = 0.0;      // interior, non-pinned, outside burn-in
    double max_pin_residual = 0.0;  // |G(f)+beta*v-lambda| over pinned points
    double max_clamp = 0.0;         // worst equation violation caused by interval clamping
    double contraction_factor = 0.0;  // endpoint-seeded gap ratio across the burn-in
    double lipschitz_bound = 0.0;   // max(-Gminus^{-1}(lambda), Gplus^{-1}(lambda))
    double branch_lo = 0.0;         // confinement interval for f
    double branch_hi = 0.0;
};

// Branch corrector derivative f on the environment grid, with u the cumulative
// trapezoidal integral anchored at u[0] = 0. retained_[lo,hi) excludes the
// burn-in region; residuals hold |a f' + G(f) + beta v - lambda| (centered
// differences, one-sided at pinned-region boundaries and window edges).
struct CorrectorProfile {
    BranchSide branch = BranchSide::Plus;
    double lambda = 0.0;
    double beta = 0.0;
    GridInfo grid;
    std::vector<double> f;
    std::vector<double> u;
    std::vector<double> residual;
    std::vector<char> pinned;
    std::size_t retained_lo = 0;
    std::size_t retained_hi = 0;
    Diagnostics diag;
};

// Solves a f' + G(f) + beta V = lambda along the branch-stable direction
// (plus: left to right, minus: right to left), pinning f where a <= a_floor.
// Requires a normalized strictly quasiconvex G and lambda >= beta.
CorrectorProfile solve_branch(const env::EnvironmentSample& sample,
                              const gclass::NonlinearitySpec& g, double beta, double lambda,
                              BranchSide branch, const SolverOptions& opts = {});

struct GronwallTrace {
    std::vector<double> x;
    std::vector<double> gap;       // difference of the two evolutions
    std::vector<double> envelope;  // (f_high-f_low)*exp(-eta*cum int dx/a)
    bool infinite_contraction = false;  // a vanished inside the window
    double gap_ratio = 0.0;        // gap(end)/gap(start)
    double envelope_ratio = 0.0;   // envelope(end)/envelope(start)
    bool within_envelope = true;   // gap <= envelope*(1+slack) pointwise
};

// Evolves two trajectories seeded at f_low, f_high and certifies the measured
// gap against the exp(-eta int dx/a) envelope.
GronwallTrace gronwall_gap(const env::EnvironmentSample& sample,
                           const gclass::NonlinearitySpec& g, double beta, double lambda,
                           BranchSide branch, double f_low, double f_high,
                           double slack = 1e-2, const SolverOptions& opts = {});

struct RegularizationSchedule {
    std::vector<int> ns;  // strictly increasing, each >= 1
    double tol = 1e-6;
};

struct RegularizedFamily {
    std::vector<CorrectorProfile> profiles;   // one per n, solving with a replaced by a v 1/n
    std::vector<double> sup_distances;        // between consecutive f arrays
    double distance_to_limit = 0.0;           // sup |f_last - f(solve_branch on a)|
};

RegularizedFamily regularized_family(const env::EnvironmentSample& sample,
                                     const gclass::NonlinearitySpec& g, double beta,
                                     double lambda, BranchSide branch,
                                     const RegularizationSchedule& schedule,
                                     const SolverOptions& opts = {});

// Mask of grid points with a <= a_floor.
std::vector<char> pinned_set(const env::EnvironmentSample& sample, double a_floor);

// Profile files: CSV columns x,a,v,f,u,residual,pinned plus a JSON sidecar
// with diagnostics and solver settings.
void write_profile(const CorrectorProfile& p, const env::EnvironmentSample& sample,
                   const std::string& csv_path, const std::string& json_path,
                   const SolverOptions& opts = {});

}  // namespace hjlab::corrector
