#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace hjlab {

// Uniform 1-D grid: points x_i = x0 + i*dx, i = 0..n-1.
struct GridInfo {
    double x0 = 0.0;
    double dx = 1.0;
    std::size_t n = 0;
    bool periodic = false;
    std::size_t period_points = 0;  // grid points per period when periodic

    double x(std::size_t i) const { return x0 + static_cast<double>(i) * dx; }
    double length() const { return n > 1 ? (static_cast<double>(n - 1)) * dx : 0.0; }
    double period_length() const { return static_cast<double>(period_points) * dx; }

    // Index of the grid point nearest to x; throws if x is not grid-aligned.
    std::size_t index_of(double xq, double tol_cells = 1e-9) const {
        const double s = (xq - x0) / dx;
        const double r = std::round(s);
        if (std::abs(s - r) > tol_cells)
            throw std::invalid_argument("point " + std::to_string(xq) + " is not grid-aligned");
        if (r < 0.0 || r > static_cast<double>(n - 1))
            throw std::invalid_argument("point " + std::to_string(xq) + " outside grid window");
        return static_cast<std::size_t>(r);
    }
};

// Trapezoidal integral of samples f over [i0, i1] (inclusive indices).
inline double trapz(const std::vector<double>& f, std::size_t i0, std::size_t i1, double dx) {
    if (i1 <= i0) return 0.0;
    double s = 0.5 * (f[i0] + f[i1]);
    for (std::size_t i = i0 + 1; i < i1; ++i) s += f[i];
    return s * dx;
}

// Mean of f over [i0, i1] via the trapezoidal rule.
inline double trapz_mean(const std::vector<double>& f, std::size_t i0, std::size_t i1, double dx) {
    if (i1 <= i0) throw std::invalid_argument("trapz_mean: empty index range");
    return trapz(f, i0, i1, dx) / (static_cast<double>(i1 - i0) * dx);
}

// 17 significant digits: round-trips IEEE doubles exactly.
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

inline bool nearly_equal(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace hjlab
