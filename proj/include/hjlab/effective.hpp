#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hjlab/corrector.hpp"
#include "hjlab/env.hpp"
#include "hjlab/gclass.hpp"

namespace hjlab::effective {

using gclass::BranchSide;

// One (lambda, theta+-) measurement; stderr fields carry the across-seed spread.
struct ThetaSample {
    double lambda = 0.0;
    double theta_minus = 0.0;
    double theta_plus = 0.0;
    double stderr_minus = 0.0;
    double stderr_plus = 0.0;
    double window_length = 0.0;
};

// Trapezoidal spatial mean of f over the profile's retained window; periodic
// samples average over exactly an integer number of periods (error if the
// retained window holds less than one).
double theta_of_lambda(const corrector::CorrectorProfile& profile);

struct EffectiveCurve {
    std::vector<ThetaSample> samples;  // sorted by lambda, first one at lambda = beta
    double beta = 0.0;
    double flat_lo = 0.0;  // theta_minus(beta)
    double flat_hi = 0.0;  // theta_plus(beta)
    gclass::Relabeling relabel;
};

// Monotone piecewise-linear branch interpolants plus the flat piece at level
// beta; throws when the theta samples break strict branch monotonicity.
EffectiveCurve build_curve(std::vector<ThetaSample> samples, double beta,
                           const gclass::Relabeling& relabel, double monotone_tol = 1e-9);

// Inverse of the branch maps at theta (original coordinates via the curve's
// relabeling); beta on the flat interval; extrapolation outside the sampled
// theta range is refused.
double evaluate(const EffectiveCurve& curve, double theta);

struct SandwichRow {
    double lambda1 = 0.0, lambda2 = 0.0;
    BranchSide branch = BranchSide::Plus;
    double dtheta = 0.0;
    double lower = 0.0, upper = 0.0;  // (l2-l1)/C_R and (l2-l1)/eta
    bool ok = true;
};

struct SandwichReport {
    std::vector<SandwichRow> rows;
    bool pass = true;
    double worst_margin = 0.0;  // most negative slack across rows
};

// Per consecutive lambda pair: (l2-l1)/C_R - tol <= |dtheta| <= (l2-l1)/eta + tol,
// with C_R recomputed per pair.
SandwichReport sandwich_check(const EffectiveCurve& curve, double eta,
                              const gclass::NonlinearitySpec& g, double tol = 1e-3);

enum class GlueMode { Mollified, PinnedCrossing };

struct GlueConstruction {
    GlueMode mode = GlueMode::Mollified;
    double beta = 0.0;
    double epsilon = 0.0;
    double y0 = 0.0;
    double ell1 = 0.0, L1 = 0.0, L2 = 0.0, ell2 = 0.0;
    double r = 0.0;
    std::int64_t mollifier_n = 0;
    std::vector<double> xi;
    std::vector<double> f_eps;
    std::vector<double> residual;  // signed a f_eps' + G(f_eps) + beta v
    double c_r = 0.0;
    double k_const = 0.0;  // 2*(C_R + 2)
    double max_residual = 0.0;
    double max_a_xi_prime = 0.0;
    double window_gap = 0.0;  // max profile gap on [L1, L2]
    bool residual_ok = false;
};

struct GlueResult {
    std::optional<GlueConstruction> glue;
    // best rejected candidate, for the failure value
    double best_window_lo = 0.0, best_window_hi = 0.0, best_gap = 0.0;
    std::string failure;
};

struct GlueOptions {
    double a_floor = 1e-12;
    double residual_tol = 1e-3;
};

// Interpolates the two lambda = beta branch profiles across a window where
// they nearly agree, producing a supersolution up to K*epsilon. Falls back to
// a crossing at a pinned point (zero of a with maximal V) when the sample has
// a fat zero set and no admissible elliptic window.
GlueResult build_glue(const env::EnvironmentSample& sample, const gclass::NonlinearitySpec& g,
                      double beta, double epsilon, double y0,
                      const corrector::CorrectorProfile& profile_minus,
                      const corrector::CorrectorProfile& profile_plus,
                      const GlueOptions& opts = {});

struct FlatPieceReport {
    double theta = 0.0;
    double slope = 0.0;
    double lower = 0.0;  // beta - scheme_tol
    double upper = 0.0;  // beta + K*epsilon + scheme_tol
    bool pass = false;
};

// Compares a long-time slope measurement at theta (supplied by the caller,
// normally a pde run) against the glue bound beta + K*epsilon.
FlatPieceReport flat_piece_certificate(const GlueConstruction& glue,
                                       const std::function<double(double)>& slope_at_theta,
                                       double theta, double scheme_tol);

void write_curve(const EffectiveCurve& curve, const std::string& csv_path,
                 const std::string& json_path);
void write_glue(const GlueConstruction& glue, const std::string& json_path);

}  // namespace hjlab::effective
