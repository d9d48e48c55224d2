#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace hjlab::gclass {

enum class Family { PowerPlusLinear, ShiftedPower, Tabulated };
enum class BranchSide { Plus, Minus };

const char* family_name(Family f);
Family family_from_name(const std::string& name);

// Coordinate relabeling produced by reduce(): H(G)(theta) = H(G~)(theta - p_min) + min_value.
struct Relabeling {
    double p_min = 0.0;
    double min_value = 0.0;
};

// A quasiconvex nonlinearity from a closed-form family (exact evaluation) or a
// tabulated monotone-branch pair (linear interpolation, documented loss of exactness).
//
// PowerPlusLinear:  G(p) = |p|^gamma + c|p|
// ShiftedPower:     G(p) = |p-p_star|^gamma + c|p-p_star| + offset
// Tabulated:        piecewise-linear through (knots_p, knots_g)
//
// linear_bump adds bump*|p - p_min|; it is how perturb() stays inside the family.
struct NonlinearitySpec {
    Family family = Family::PowerPlusLinear;
    double gamma = 2.0;
    double c = 1.0;
    double p_star = 0.0;   // ShiftedPower only
    double offset = 0.0;   // ShiftedPower only
    std::vector<double> knots_p, knots_g;  // Tabulated only, knots_p strictly increasing

    double linear_bump = 0.0;

    // class constants and metadata
    double alpha0 = 1.0;
    double alpha1 = 2.0;
    std::optional<double> eta;  // (G4) monotonicity rate when known
    double p_min = 0.0;
    double min_value = 0.0;
    bool in_sqc = false;

    double operator()(double p) const { return value(p); }
    double value(double p) const;

    // One-sided derivative along the given branch (right derivative for Plus,
    // left derivative for Minus); defined for normalized specs on the branch domain.
    double branch_derivative(BranchSide side, double p) const;

    // Sup of |G'| over [-R, R]; for these quasiconvex families the sup sits at +-R.
    double lipschitz_on(double R) const;

    bool normalized() const { return p_min == 0.0 && min_value == 0.0; }

    // (G4) rate available for this spec: exact for closed forms, empirical
    // (minimum difference quotient over the knots) for tabulated ones.
    double eta_rate() const;
    bool eta_is_empirical() const { return family == Family::Tabulated && !eta.has_value(); }

    static NonlinearitySpec power_plus_linear(double gamma, double c,
                                              double alpha0, double alpha1);
    static NonlinearitySpec shifted_power(double gamma, double c, double p_star, double offset,
                                          double alpha0, double alpha1);
    static NonlinearitySpec tabulated(std::vector<double> knots_p, std::vector<double> knots_g,
                                      double alpha0, double alpha1, double gamma);
};

struct ClassViolation {
    std::string inequality;  // "G1-lower", "G1-upper", "G2"
    double p = 0.0, q = 0.0;
    double lhs = 0.0, rhs = 0.0;
    double margin = 0.0;  // lhs - rhs (positive = violated)
};

struct ValidationReport {
    bool pass = true;
    std::vector<ClassViolation> violations;
    std::optional<ClassViolation> worst;  // densest violated inequality
    std::optional<double> empirical_eta;  // reported for tabulated specs
};

struct QuasiconvexReport {
    bool quasiconvex = true;
    std::optional<double> first_violation_p;
};

struct ReduceResult {
    NonlinearitySpec g_tilde;
    Relabeling relabel;
};

// Grid check of (G1)-(G2) with the given constants. Total: never throws.
ValidationReport validate_class(const NonlinearitySpec& g, double alpha0, double alpha1,
                                double gamma, const std::vector<double>& p_grid);

// Grid form of (qC): sampled values must descend (ties allowed) then ascend.
QuasiconvexReport check_quasiconvex(const NonlinearitySpec& g, const std::vector<double>& p_grid);

// Normalization G~(p) = G(p + p_min) - min G, with the relabeling needed to
// report effective quantities in original coordinates.
ReduceResult reduce(const NonlinearitySpec& g);

// G_n(p) = G(p) + |p|/n^2; requires a normalized spec. Result is strictly
// quasiconvex with rate (existing rate) + 1/n^2.
NonlinearitySpec perturb(const NonlinearitySpec& g, int n);

// Monotone-branch inverse by bisection: |G(result) - lambda| <= 1e-12*(1+lambda).
// Plus branch returns p >= 0, minus branch p <= 0. Requires normalized spec, lambda >= 0.
double branch_inverse(const NonlinearitySpec& g, BranchSide side, double lambda);

// Callable wrapper around branch_inverse.
struct BranchInverse {
    BranchSide side;
    const NonlinearitySpec* g;
    double operator()(double lambda) const { return branch_inverse(*g, side, lambda); }
};

}  // namespace hjlab::gclass
