#include "hjlab/gclass.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hjlab::gclass {

const char* family_name(Family f) {
    switch (f) {
        case Family::PowerPlusLinear: return "power-plus-linear";
        case Family::ShiftedPower: return "shifted-power";
        case Family::Tabulated: return "tabulated";
    }
    return "?";
}

Family family_from_name(const std::string& name) {
    if (name == "power-plus-linear") return Family::PowerPlusLinear;
    if (name == "shifted-power") return Family::ShiftedPower;
    if (name == "tabulated") return Family::Tabulated;
    throw std::invalid_argument("unknown nonlinearity family: " + name);
}

namespace {

inline double pow_abs(double s, double gamma) {
    if (gamma == 2.0) return s * s;
    return std::pow(s, gamma);
}

inline double pow_abs_deriv(double s, double gamma) {
    if (gamma == 2.0) return 2.0 * s;
    return gamma * std::pow(s, gamma - 1.0);
}

double tab_value(const NonlinearitySpec& g, double p) {
    const auto& xs = g.knots_p;
    const auto& ys = g.knots_g;
    if (p <= xs.front()) {
        const double m = (ys[1] - ys[0]) / (xs[1] - xs[0]);
        return ys.front() + m * (p - xs.front());
    }
    if (p >= xs.back()) {
        const std::size_t k = xs.size();
        const double m = (ys[k - 1] - ys[k - 2]) / (xs[k - 1] - xs[k - 2]);
        return ys.back() + m * (p - xs.back());
    }
    const auto it = std::upper_bound(xs.begin(), xs.end(), p);
    const std::size_t j = static_cast<std::size_t>(it - xs.begin());
    const double t = (p - xs[j - 1]) / (xs[j] - xs[j - 1]);
    return ys[j - 1] + t * (ys[j] - ys[j - 1]);
}

}  // namespace

double NonlinearitySpec::value(double p) const {
    switch (family) {
        case Family::PowerPlusLinear: {
            const double s = std::abs(p);
            return pow_abs(s, gamma) + c * s + linear_bump * std::abs(p - p_min);
        }
        case Family::ShiftedPower: {
            const double s = std::abs(p - p_star);
            return pow_abs(s, gamma) + c * s + offset + linear_bump * std::abs(p - p_min);
        }
        case Family::Tabulated:
            return tab_value(*this, p) + linear_bump * std::abs(p - p_min);
    }
    return 0.0;
}

double NonlinearitySpec::branch_derivative(BranchSide side, double p) const {
    const double sign = (side == BranchSide::Plus) ? 1.0 : -1.0;
    switch (family) {
        case Family::PowerPlusLinear:
            return sign * (pow_abs_deriv(std::abs(p), gamma) + c + linear_bump);
        case Family::ShiftedPower: {
            const double s = std::abs(p - p_star);
            return sign * (pow_abs_deriv(s, gamma) + c + linear_bump);
        }
        case Family::Tabulated: {
            // secant slope, one-sided toward the branch
            const double h = std::max(1e-9 * (1.0 + std::abs(p)), 1e-12);
            const double pb = p + sign * h;
            return (value(pb) - value(p)) / (pb - p);
        }
    }
    return 0.0;
}

double NonlinearitySpec::lipschitz_on(double R) const {
    if (R < 0.0) throw std::invalid_argument("lipschitz_on: R must be >= 0");
    switch (family) {
        case Family::PowerPlusLinear:
            return pow_abs_deriv(R, gamma) + c + linear_bump;
        case Family::ShiftedPower:
            return pow_abs_deriv(R + std::abs(p_star), gamma) + c + linear_bump;
        case Family::Tabulated: {
            double m = linear_bump;
            for (std::size_t j = 1; j < knots_p.size(); ++j) {
                if (knots_p[j] < -R || knots_p[j - 1] > R) continue;
                m = std::max(m, std::abs((knots_g[j] - knots_g[j - 1]) /
                                         (knots_p[j] - knots_p[j - 1])) + linear_bump);
            }
            return m;
        }
    }
    return 0.0;
}

double NonlinearitySpec::eta_rate() const {
    if (eta) return *eta + linear_bump;
    if (family == Family::PowerPlusLinear || family == Family::ShiftedPower)
        return c + linear_bump;
    // empirical lower bound: minimum |difference quotient| over knot cells on each branch
    double rate = std::numeric_limits<double>::infinity();
    for (std::size_t j = 1; j < knots_p.size(); ++j) {
        if (knots_p[j - 1] >= p_min || knots_p[j] <= p_min) {
            const double q = std::abs((knots_g[j] - knots_g[j - 1]) / (knots_p[j] - knots_p[j - 1]));
            rate = std::min(rate, q);
        }
    }
    if (!std::isfinite(rate)) rate = 0.0;
    return rate + linear_bump;
}

NonlinearitySpec NonlinearitySpec::power_plus_linear(double gamma, double c,
                                                     double alpha0, double alpha1) {
    if (gamma <= 1.0) throw std::invalid_argument("gamma must exceed 1");
    if (c < 0.0) throw std::invalid_argument("linear coefficient must be >= 0");
    NonlinearitySpec g;
    g.family = Family::PowerPlusLinear;
    g.gamma = gamma;
    g.c = c;
    g.alpha0 = alpha0;
    g.alpha1 = alpha1;
    g.p_min = 0.0;
    g.min_value = 0.0;
    if (c > 0.0) g.eta = c;
    g.in_sqc = c > 0.0;
    return g;
}

NonlinearitySpec NonlinearitySpec::shifted_power(double gamma, double c, double p_star,
                                                 double offset, double alpha0, double alpha1) {
    if (gamma <= 1.0) throw std::invalid_argument("gamma must exceed 1");
    if (c < 0.0) throw std::invalid_argument("linear coefficient must be >= 0");
    NonlinearitySpec g;
    g.family = Family::ShiftedPower;
    g.gamma = gamma;
    g.c = c;
    g.p_star = p_star;
    g.offset = offset;
    g.alpha0 = alpha0;
    g.alpha1 = alpha1;
    g.p_min = p_star;
    g.min_value = offset;
    if (c > 0.0) g.eta = c;
    g.in_sqc = (c > 0.0 && p_star == 0.0 && offset == 0.0);
    return g;
}

NonlinearitySpec NonlinearitySpec::tabulated(std::vector<double> knots_p,
                                             std::vector<double> knots_g,
                                             double alpha0, double alpha1, double gamma) {
    if (knots_p.size() < 3 || knots_p.size() != knots_g.size())
        throw std::invalid_argument("tabulated spec needs >= 3 matching knots");
    for (std::size_t j = 1; j < knots_p.size(); ++j)
        if (knots_p[j] <= knots_p[j - 1])
            throw std::invalid_argument("tabulated knots must be strictly increasing");
    NonlinearitySpec g;
    g.family = Family::Tabulated;
    g.knots_p = std::move(knots_p);
    g.knots_g = std::move(knots_g);
    g.alpha0 = alpha0;
    g.alpha1 = alpha1;
    g.gamma = gamma;
    const auto it = std::min_element(g.knots_g.begin(), g.knots_g.end());
    g.min_value = *it;
    g.p_min = g.knots_p[static_cast<std::size_t>(it - g.knots_g.begin())];
    g.in_sqc = false;
    return g;
}

ValidationReport validate_class(const NonlinearitySpec& g, double alpha0, double alpha1,
                                double gamma, const std::vector<double>& p_grid) {
    if (alpha0 <= 0.0 || alpha1 <= 0.0) throw std::invalid_argument("alpha0, alpha1 must be > 0");
    if (gamma <= 1.0) throw std::invalid_argument("gamma must exceed 1");
    ValidationReport rep;
    auto record = [&rep](ClassViolation v) {
        v.margin = v.lhs - v.rhs;
        if (!rep.worst || v.margin > rep.worst->margin) rep.worst = v;
        rep.violations.push_back(std::move(v));
        rep.pass = false;
    };
    for (double p : p_grid) {
        const double gp = g(p);
        const double lo = alpha0 * std::pow(std::abs(p), gamma) - 1.0 / alpha0;
        const double hi = alpha1 * (std::pow(std::abs(p), gamma) + 1.0);
        const double tol = 1e-12 * (1.0 + std::abs(gp));
        if (gp < lo - tol) record({"G1-lower", p, 0.0, lo, gp, 0.0});
        if (gp > hi + tol) record({"G1-upper", p, 0.0, gp, hi, 0.0});
    }
    for (std::size_t i = 0; i < p_grid.size(); ++i) {
        const double p = p_grid[i];
        const double gp = g(p);
        for (std::size_t j = i + 1; j < p_grid.size(); ++j) {
            const double q = p_grid[j];
            const double bound = alpha1 * std::pow(std::abs(p) + std::abs(q) + 1.0, gamma - 1.0) *
                                 std::abs(p - q);
            const double diff = std::abs(gp - g(q));
            if (diff > bound + 1e-12 * (1.0 + diff)) record({"G2", p, q, diff, bound, 0.0});
        }
    }
    if (g.eta_is_empirical()) rep.empirical_eta = g.eta_rate();
    return rep;
}

QuasiconvexReport check_quasiconvex(const NonlinearitySpec& g, const std::vector<double>& p_grid) {
    QuasiconvexReport rep;
    bool ascending = false;
    double prev = g(p_grid.front());
    for (std::size_t i = 1; i < p_grid.size(); ++i) {
        const double cur = g(p_grid[i]);
        if (cur > prev) ascending = true;
        if (cur < prev && ascending) {
            rep.quasiconvex = false;
            rep.first_violation_p = p_grid[i];
            return rep;
        }
        prev = cur;
    }
    return rep;
}

namespace {

// Bracket [lo, hi] with G(lo), G(hi) on opposite sides of target along a coercive branch.
double coercive_reach(const NonlinearitySpec& g, double target, double sign) {
    double p = sign;
    for (int k = 0; k < 1200; ++k) {
        if (g(p) > target) return p;
        p *= 2.0;
    }
    throw std::domain_error("nonlinearity is not coercive: cannot bracket level " +
                            std::to_string(target));
}

}  // namespace

ReduceResult reduce(const NonlinearitySpec& g) {
    ReduceResult out;
    switch (g.family) {
        case Family::PowerPlusLinear:
            out.g_tilde = g;
            out.relabel = {0.0, 0.0};
            return out;
        case Family::ShiftedPower: {
            out.g_tilde = NonlinearitySpec::power_plus_linear(g.gamma, g.c, g.alpha0, g.alpha1);
            out.g_tilde.linear_bump = g.linear_bump;
            out.relabel = {g.p_star, g.offset};
            return out;
        }
        case Family::Tabulated: {
            // bracket the minimizer, ternary-search, then take the midpoint of the flat set
            const double ref = g(0.0);
            double left = coercive_reach(g, ref + 1.0, -1.0);
            double right = coercive_reach(g, ref + 1.0, 1.0);
            double a = left, b = right;
            for (int it = 0; it < 300; ++it) {
                const double m1 = a + (b - a) / 3.0, m2 = b - (b - a) / 3.0;
                if (g(m1) <= g(m2)) b = m2; else a = m1;
            }
            double pm = 0.5 * (a + b);
            const double vm = g(pm);
            const double flat_tol = 1e-13 * (1.0 + std::abs(vm));
            auto edge = [&](double dir) {
                double lo = pm, hi = dir > 0 ? right : left;
                for (int it = 0; it < 200; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    if (g(mid) <= vm + flat_tol) lo = mid; else hi = mid;
                }
                return lo;
            };
            pm = 0.5 * (edge(-1.0) + edge(+1.0));
            NonlinearitySpec gt = g;
            gt.p_min = 0.0;
            gt.min_value = 0.0;
            for (auto& x : gt.knots_p) x -= pm;
            for (auto& y : gt.knots_g) y -= vm;
            out.g_tilde = gt;
            out.relabel = {pm, vm};
            return out;
        }
    }
    throw std::logic_error("unreachable");
}

NonlinearitySpec perturb(const NonlinearitySpec& g, int n) {
    if (n < 1) throw std::invalid_argument("perturb: n must be >= 1");
    if (!g.normalized())
        throw std::invalid_argument("perturb requires a normalized spec (reduce first)");
    NonlinearitySpec out = g;
    const double bump = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
    // eta_rate() reports eta + linear_bump, so keep the base rate in eta and
    // fold the new term into linear_bump.
    out.eta = g.eta_rate() - g.linear_bump;
    out.linear_bump = g.linear_bump + bump;
    out.in_sqc = true;
    return out;
}

double branch_inverse(const NonlinearitySpec& g, BranchSide side, double lambda) {
    if (lambda < 0.0) throw std::domain_error("branch_inverse: lambda must be >= 0");
    if (!g.normalized())
        throw std::invalid_argument("branch_inverse requires a normalized spec (reduce first)");
    const double tol = 1e-12 * (1.0 + lambda);
    if (std::abs(g(0.0) - lambda) <= tol) return 0.0;
    const double sign = (side == BranchSide::Plus) ? 1.0 : -1.0;
    // (G1) lower bound gives a coercive cap; expand from it if needed
    double hi = std::pow((lambda + 1.0 / g.alpha0 + 1.0) / g.alpha0, 1.0 / g.gamma) + 1.0;
    while (g(sign * hi) < lambda) hi *= 2.0;
    double lo = 0.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double v = g(sign * mid);
        if (std::abs(v - lambda) <= tol) return sign * mid;
        (v < lambda ? lo : hi) = mid;
    }
    return sign * 0.5 * (lo + hi);
}

}  // namespace hjlab::gclass
