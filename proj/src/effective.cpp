#include "hjlab/effective.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace hjlab::effective {

double theta_of_lambda(const corrector::CorrectorProfile& p) {
    const auto& grid = p.grid;
    if (p.retained_lo >= p.retained_hi)
        throw std::invalid_argument("theta_of_lambda: retained window is empty");
    std::size_t i1 = p.retained_hi - 1;
    std::size_t i0 = p.retained_lo;
    if (grid.periodic) {
        const std::size_t pp = grid.period_points;
        const std::size_t m = (i1 - i0) / pp;
        if (m < 1)
            throw std::invalid_argument(
                "theta_of_lambda: retained window shorter than one period");
        i0 = i1 - m * pp;
    }
    return trapz_mean(p.f, i0, i1, grid.dx);
}

EffectiveCurve build_curve(std::vector<ThetaSample> samples, double beta,
                           const gclass::Relabeling& relabel, double monotone_tol) {
    if (samples.empty()) throw std::invalid_argument("build_curve: no samples");
    std::sort(samples.begin(), samples.end(),
              [](const ThetaSample& a, const ThetaSample& b) { return a.lambda < b.lambda; });
    for (std::size_t k = 1; k < samples.size(); ++k)
        if (samples[k].lambda <= samples[k - 1].lambda)
            throw std::invalid_argument("build_curve: lambda values must be distinct");
    if (std::abs(samples.front().lambda - beta) > 1e-12 * (1.0 + std::abs(beta)))
        throw std::invalid_argument("build_curve: samples must include lambda = beta");
    for (std::size_t k = 1; k < samples.size(); ++k) {
        if (samples[k].theta_plus <= samples[k - 1].theta_plus + monotone_tol ||
            samples[k].theta_minus >= samples[k - 1].theta_minus - monotone_tol)
            throw std::invalid_argument(
                "build_curve: theta samples are not strictly monotone in lambda; the "
                "derivative-comparison sandwich bound is violated at lambda = " +
                std::to_string(samples[k].lambda));
    }
    EffectiveCurve c;
    c.beta = beta;
    c.flat_lo = samples.front().theta_minus;
    c.flat_hi = samples.front().theta_plus;
    c.relabel = relabel;
    c.samples = std::move(samples);
    return c;
}

double evaluate(const EffectiveCurve& curve, double theta) {
    const double t = theta - curve.relabel.p_min;
    if (t >= curve.flat_lo && t <= curve.flat_hi) return curve.beta + curve.relabel.min_value;
    const auto& s = curve.samples;
    if (t > curve.flat_hi) {
        if (t > s.back().theta_plus + 1e-12)
            throw std::domain_error("evaluate: theta above the sampled range; extrapolation refused");
        for (std::size_t k = 1; k < s.size(); ++k) {
            if (t <= s[k].theta_plus + 1e-15) {
                const double w = (t - s[k - 1].theta_plus) /
                                 (s[k].theta_plus - s[k - 1].theta_plus);
                return s[k - 1].lambda + w * (s[k].lambda - s[k - 1].lambda) +
                       curve.relabel.min_value;
            }
        }
    }
    if (t < s.back().theta_minus - 1e-12)
        throw std::domain_error("evaluate: theta below the sampled range; extrapolation refused");
    for (std::size_t k = 1; k < s.size(); ++k) {
        if (t >= s[k].theta_minus - 1e-15) {
            const double w = (t - s[k - 1].theta_minus) /
                             (s[k].theta_minus - s[k - 1].theta_minus);
            return s[k - 1].lambda + w * (s[k].lambda - s[k - 1].lambda) +
                   curve.relabel.min_value;
        }
    }
    throw std::domain_error("evaluate: theta outside the sampled range");
}

SandwichReport sandwich_check(const EffectiveCurve& curve, double eta,
                              const gclass::NonlinearitySpec& g, double tol) {
    if (curve.samples.size() < 2)
        throw std::invalid_argument("sandwich_check: need at least two samples per branch");
    SandwichReport rep;
    rep.worst_margin = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < curve.samples.size(); ++k) {
        const auto& s1 = curve.samples[k - 1];
        const auto& s2 = curve.samples[k];
        const double dl = s2.lambda - s1.lambda;
        const double big_r = std::max(-gclass::branch_inverse(g, BranchSide::Minus, s2.lambda),
                                      gclass::branch_inverse(g, BranchSide::Plus, s2.lambda));
        const double c_r = g.lipschitz_on(big_r);
        const double lower = dl / c_r, upper = dl / eta;
        for (BranchSide side : {BranchSide::Plus, BranchSide::Minus}) {
            SandwichRow row;
            row.lambda1 = s1.lambda;
            row.lambda2 = s2.lambda;
            row.branch = side;
            row.dtheta = side == BranchSide::Plus ? s2.theta_plus - s1.theta_plus
                                                  : s1.theta_minus - s2.theta_minus;
            row.lower = lower;
            row.upper = upper;
            row.ok = row.dtheta >= lower - tol && row.dtheta <= upper + tol;
            rep.worst_margin = std::min({rep.worst_margin, row.dtheta - (lower - tol),
                                         (upper + tol) - row.dtheta});
            rep.pass = rep.pass && row.ok;
            rep.rows.push_back(row);
        }
    }
    return rep;
}

namespace {

// signed residual a f' + G(f) + beta v with centered differences; one-sided at
// window edges and where the pinned mask changes
std::vector<double> signed_residual(const env::EnvironmentSample& s,
                                    const gclass::NonlinearitySpec& g, double beta,
                                    const std::vector<double>& f, const std::vector<char>& pinned) {
    const std::size_t n = s.grid.n;
    const double dx = s.grid.dx;
    std::vector<double> res(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double fp;
        const bool left_ok = i > 0 && pinned[i - 1] == pinned[i];
        const bool right_ok = i + 1 < n && pinned[i + 1] == pinned[i];
        if (left_ok && right_ok) fp = (f[i + 1] - f[i - 1]) / (2.0 * dx);
        else if (right_ok) fp = (f[i + 1] - f[i]) / dx;
        else if (left_ok) fp = (f[i] - f[i - 1]) / dx;
        else fp = 0.0;
        res[i] = s.a[i] * fp + g(f[i]) + beta * s.v[i];
    }
    return res;
}

}  // namespace

GlueResult build_glue(const env::EnvironmentSample& sample, const gclass::NonlinearitySpec& g,
                      double beta, double epsilon, double y0,
                      const corrector::CorrectorProfile& profile_minus,
                      const corrector::CorrectorProfile& profile_plus, const GlueOptions& opts) {
    if (beta <= 0.0) throw std::invalid_argument("build_glue: beta must be > 0");
    if (epsilon <= 0.0) throw std::invalid_argument("build_glue: epsilon must be > 0");
    if (y0 < 2.0) throw std::invalid_argument("build_glue: y0 must be >= 2");
    const std::size_t n = sample.grid.n;
    const double dx = sample.grid.dx;
    const auto& fm = profile_minus.f;
    const auto& fp = profile_plus.f;
    if (fm.size() != n || fp.size() != n)
        throw std::invalid_argument("build_glue: profiles must live on the sample grid");

    const double big_r = std::max(-gclass::branch_inverse(g, BranchSide::Minus, beta),
                                  gclass::branch_inverse(g, BranchSide::Plus, beta));
    const double c_r = g.lipschitz_on(big_r);
    const double k_const = 2.0 * (c_r + 2.0);

    std::vector<double> gap(n);
    for (std::size_t i = 0; i < n; ++i) gap[i] = fp[i] - fm[i];

    GlueResult result;
    result.best_gap = std::numeric_limits<double>::infinity();

    auto inv_a = [&](std::size_t i) { return 1.0 / sample.a[i]; };

    // scan connected components of {a > a_floor}
    std::size_t c0 = 0;
    while (c0 < n) {
        if (sample.a[c0] <= opts.a_floor) { ++c0; continue; }
        std::size_t c1 = c0;
        while (c1 + 1 < n && sample.a[c1 + 1] > opts.a_floor) ++c1;

        if (c1 > c0 + 4) {
            std::vector<double> cum(c1 - c0 + 1, 0.0);
            for (std::size_t i = c0 + 1; i <= c1; ++i)
                cum[i - c0] = cum[i - c0 - 1] + 0.5 * dx * (inv_a(i - 1) + inv_a(i));
            const double total = cum.back();

            double comp_min_gap = std::numeric_limits<double>::infinity();
            for (std::size_t i = c0; i <= c1; ++i) comp_min_gap = std::min(comp_min_gap, gap[i]);
            if (comp_min_gap < result.best_gap) {
                result.best_gap = comp_min_gap;
                result.best_window_lo = sample.grid.x(c0);
                result.best_window_hi = sample.grid.x(c1);
            }

            // maximal runs where the profile gap stays below epsilon
            std::size_t s0 = c0;
            while (s0 <= c1) {
                if (gap[s0] > epsilon) { ++s0; continue; }
                std::size_t s1 = s0;
                while (s1 + 1 <= c1 && gap[s1 + 1] <= epsilon) ++s1;

                // L1/L2: y0 of mass on each side and y0 in the middle (thirds)
                std::size_t L1 = s0;
                while (L1 <= s1 && cum[L1 - c0] < y0) ++L1;
                std::size_t L2 = s1;
                while (L2 > L1 && total - cum[L2 - c0] < y0) --L2;
                const bool mass_ok = L1 < L2 && cum[L2 - c0] - cum[L1 - c0] >= y0;

                double run_gap = 0.0;
                for (std::size_t i = s0; i <= s1; ++i) run_gap = std::max(run_gap, gap[i]);
                if (run_gap < result.best_gap) {
                    result.best_gap = run_gap;
                    result.best_window_lo = sample.grid.x(s0);
                    result.best_window_hi = sample.grid.x(s1);
                }
                if (!mass_ok) { s0 = s1 + 1; continue; }

                // margin r: keep [L1-2r, L2+2r] inside the component and the
                // gap below 4*epsilon on [L1-r, L2+r]
                std::size_t r_cells = std::min(L1 - c0, c1 - L2) / 2;
                auto ext_gap_ok = [&](std::size_t rc) {
                    for (std::size_t i = L1 - rc; i <= L2 + rc; ++i)
                        if (gap[i] > 4.0 * epsilon) return false;
                    return true;
                };
                while (r_cells >= 1 && !ext_gap_ok(r_cells)) r_cells /= 2;
                if (r_cells < 1) { s0 = s1 + 1; continue; }
                const double r_len = static_cast<double>(r_cells) * dx;

                double a_min_ext = std::numeric_limits<double>::infinity();
                for (std::size_t i = L1 - 2 * r_cells; i <= L2 + 2 * r_cells; ++i)
                    a_min_ext = std::min(a_min_ext, sample.a[i]);

                const double n_moll_f =
                    std::ceil(2.0 * std::max(1.0 / r_len, 2.0 * sample.kappa / a_min_ext));
                const std::int64_t n_moll =
                    n_moll_f > 4e18 ? std::int64_t{4000000000000000000}
                                    : static_cast<std::int64_t>(n_moll_f);

                // zeta = 1/(Z a) on (L1, L2): unit mass, a*zeta = 1/Z <= 1/y0 <= 1/2
                const double mass = cum[L2 - c0] - cum[L1 - c0];
                std::vector<double> zeta(n, 0.0);
                for (std::size_t i = L1; i <= L2; ++i) zeta[i] = inv_a(i) / mass;

                // compactly supported even polynomial bump, discretely normalized
                const std::size_t rad =
                    static_cast<std::size_t>(std::floor(1.0 / (n_moll_f * dx)));
                std::vector<double> zm;
                if (rad >= 1) {
                    std::vector<double> w(2 * rad + 1);
                    double wsum = 0.0;
                    for (std::size_t j = 0; j < w.size(); ++j) {
                        const double sarg = (static_cast<double>(j) - static_cast<double>(rad)) *
                                            dx * n_moll_f;
                        const double t = std::max(0.0, 1.0 - sarg * sarg);
                        w[j] = t * t;
                        wsum += w[j];
                    }
                    for (auto& ww : w) ww /= wsum;
                    zm.assign(n, 0.0);
                    for (std::size_t i = L1 - rad; i <= L2 + rad; ++i) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < w.size(); ++j) {
                            const std::size_t src = i + j - rad;
                            acc += w[j] * zeta[src];
                        }
                        zm[i] = acc;
                    }
                } else {
                    zm = zeta;  // mollifier support below grid resolution
                }

                GlueConstruction glue;
                glue.mode = GlueMode::Mollified;
                glue.beta = beta;
                glue.epsilon = epsilon;
                glue.y0 = y0;
                glue.ell1 = sample.grid.x(c0);
                glue.L1 = sample.grid.x(L1);
                glue.L2 = sample.grid.x(L2);
                glue.ell2 = sample.grid.x(c1);
                glue.r = r_len;
                glue.mollifier_n = n_moll;
                glue.c_r = c_r;
                glue.k_const = k_const;
                glue.window_gap = run_gap;

                glue.xi.assign(n, 0.0);
                for (std::size_t i = 1; i < n; ++i)
                    glue.xi[i] = glue.xi[i - 1] + 0.5 * dx * (zm[i - 1] + zm[i]);
                const double xi_end = glue.xi.back();
                if (xi_end <= 0.0) { s0 = s1 + 1; continue; }
                for (auto& x : glue.xi) x = std::min(1.0, std::max(0.0, x / xi_end));

                glue.f_eps.assign(n, 0.0);
                for (std::size_t i = 0; i < n; ++i)
                    glue.f_eps[i] = (1.0 - glue.xi[i]) * fm[i] + glue.xi[i] * fp[i];

                std::vector<char> pinned = corrector::pinned_set(sample, opts.a_floor);
                glue.residual = signed_residual(sample, g, beta, glue.f_eps, pinned);
                glue.max_residual = *std::max_element(glue.residual.begin(), glue.residual.end());
                for (std::size_t i = 0; i < n; ++i)
                    glue.max_a_xi_prime =
                        std::max(glue.max_a_xi_prime, sample.a[i] * zm[i] / xi_end);
                glue.residual_ok =
                    glue.max_residual <= beta + k_const * epsilon + opts.residual_tol;
                result.glue = std::move(glue);
                return result;
            }
        }
        c0 = c1 + 1;
    }

    // degenerate fallback: cross the branches at a pinned point, taking the
    // zero of a with maximal V
    const auto pinned = corrector::pinned_set(sample, opts.a_floor);
    std::size_t i0 = n;
    for (std::size_t i = 0; i < n; ++i)
        if (pinned[i] && (i0 == n || sample.v[i] > sample.v[i0])) i0 = i;
    if (i0 < n) {
        GlueConstruction glue;
        glue.mode = GlueMode::PinnedCrossing;
        glue.beta = beta;
        glue.epsilon = epsilon;
        glue.y0 = y0;
        glue.ell1 = sample.grid.x(i0 > 0 ? i0 - 1 : i0);
        glue.L1 = glue.L2 = sample.grid.x(i0);
        glue.ell2 = sample.grid.x(i0 + 1 < n ? i0 + 1 : i0);
        glue.r = 0.0;
        glue.mollifier_n = 0;
        glue.c_r = c_r;
        glue.k_const = k_const;
        glue.xi.assign(n, 0.0);
        for (std::size_t i = i0; i < n; ++i) glue.xi[i] = 1.0;
        glue.f_eps.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) glue.f_eps[i] = i < i0 ? fm[i] : fp[i];
        // differencing must not straddle the crossing
        std::vector<char> sides(n, 0);
        for (std::size_t i = i0; i < n; ++i) sides[i] = 1;
        for (std::size_t i = 0; i < n; ++i) sides[i] = static_cast<char>(sides[i] + 2 * pinned[i]);
        glue.residual = signed_residual(sample, g, beta, glue.f_eps, sides);
        glue.max_residual = *std::max_element(glue.residual.begin(), glue.residual.end());
        glue.window_gap = gap[i0];
        glue.residual_ok = glue.max_residual <= beta + k_const * epsilon + opts.residual_tol;
        result.glue = std::move(glue);
        return result;
    }

    result.failure = "no admissible window: every candidate fails the mass or gap requirement";
    return result;
}

FlatPieceReport flat_piece_certificate(const GlueConstruction& glue,
                                       const std::function<double(double)>& slope_at_theta,
                                       double theta, double scheme_tol) {
    FlatPieceReport rep;
    rep.theta = theta;
    rep.slope = slope_at_theta(theta);
    rep.lower = glue.beta - scheme_tol;
    rep.upper = glue.beta + glue.k_const * glue.epsilon + scheme_tol;
    rep.pass = rep.slope >= rep.lower && rep.slope <= rep.upper;
    return rep;
}

void write_curve(const EffectiveCurve& curve, const std::string& csv_path,
                 const std::string& json_path) {
    std::ofstream f(csv_path);
    if (!f) throw std::runtime_error("cannot open " + csv_path);
    f << "lambda,theta_minus,theta_plus,stderr_minus,stderr_plus\n";
    for (const auto& s : curve.samples)
        f << fmt17(s.lambda) << "," << fmt17(s.theta_minus) << "," << fmt17(s.theta_plus) << ","
          << fmt17(s.stderr_minus) << "," << fmt17(s.stderr_plus) << "\n";
    nlohmann::json j;
    j["beta"] = curve.beta;
    j["flat_interval"] = {curve.flat_lo, curve.flat_hi};
    j["relabeling"] = {{"p_min", curve.relabel.p_min}, {"min_value", curve.relabel.min_value}};
    std::ofstream jf(json_path);
    if (!jf) throw std::runtime_error("cannot open " + json_path);
    jf << j.dump(2) << "\n";
}

void write_glue(const GlueConstruction& glue, const std::string& json_path) {
    nlohmann::json j;
    j["mode"] = glue.mode == GlueMode::Mollified ? "mollified" : "pinned-crossing";
    j["beta"] = glue.beta;
    j["epsilon"] = glue.epsilon;
    j["y0"] = glue.y0;
    j["ell1"] = glue.ell1;
    j["L1"] = glue.L1;
    j["L2"] = glue.L2;
    j["ell2"] = glue.ell2;
    j["r"] = glue.r;
    j["mollifier_n"] = glue.mollifier_n;
    j["C_R"] = glue.c_r;
    j["K"] = glue.k_const;
    j["max_residual"] = glue.max_residual;
    j["max_a_xi_prime"] = glue.max_a_xi_prime;
    j["window_gap"] = glue.window_gap;
    j["residual_ok"] = glue.residual_ok;
    std::ofstream jf(json_path);
    if (!jf) throw std::runtime_error("cannot open " + json_path);
    jf << j.dump(2) << "\n";
}

}  // namespace hjlab::effective
