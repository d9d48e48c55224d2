#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hjlab/common.hpp"

namespace hjlab::env {

enum class Kind { Constant, Sinusoidal, PoissonBumps, RandomFourier, PiecewiseDegenerate };

const char* kind_name(Kind k);
Kind kind_from_name(const std::string& name);

struct Interval {
    double lo = 0.0, hi = 0.0;
};

// Generator recipe. `params` holds kind-specific scalars (see env.cpp for the
// per-kind defaults); interval lists are used by the piecewise-degenerate kind.
struct EnvConfig {
    Kind kind = Kind::Constant;
    std::map<std::string, double> params;
    std::vector<Interval> a_intervals;  // piecewise: a == a_low exactly on these
    std::vector<Interval> v_intervals;  // piecewise: v == v_hi exactly on these
    double kappa = 8.0;                 // target Lipschitz constant (piecewise ramp slope)
    double beta = 0.0;                  // potential magnitude, carried to file headers
    bool periodic = false;
    double period = 1.0;

    double param(const std::string& key, double fallback) const {
        auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    }
};

// One seeded grid realization of the coefficient pair (a, V).
// Invariants: a,v in [0,1]; |sqrt(a_{i+1})-sqrt(a_i)| <= kappa*dx;
// |v_{i+1}-v_i| <= kappa*dx; periodic samples tile exactly.
struct EnvironmentSample {
    GridInfo grid;
    std::vector<double> a;
    std::vector<double> v;
    double kappa = 0.0;
    std::uint64_t seed = 0;
    Kind generator_id = Kind::Constant;

    double max_a() const;
};

struct HillWitness {
    double ell1 = 0.0;
    double ell2 = 0.0;
    double delta = 0.0;
    double h = 0.0;
    double y = 0.0;
    double achieved_integral = 0.0;
};

// Deterministic per (config, seed, domain, dx); throws std::invalid_argument with
// the violated invariant named when parameters cannot produce a valid sample.
EnvironmentSample generate_env(const EnvConfig& config, std::uint64_t seed,
                               double x0, double x_end, double dx);

// Exact scans of the sample invariants; empty result means all hold.
std::vector<std::string> check_invariants(const EnvironmentSample& sample);

// Finite-window search for the hill witness: V >= h on [ell1, ell2] and
// trapezoidal integral of 1/(a v delta) at least y. Failure is a value.
std::optional<HillWitness> verify_hill(const EnvironmentSample& sample, double h, double y);

// Window shift by a grid-aligned offset z: x0 moves by z and values re-index.
// Periodic samples rotate; non-periodic ones shrink and require z >= 0.
EnvironmentSample translate(const EnvironmentSample& sample, double z);

// Environment files: one JSON header line, then "a,v" and one row per grid
// point with 17 significant digits (bit-exact round trip).
void write_env(const EnvironmentSample& sample, double beta, const std::string& path);
struct EnvFile {
    EnvironmentSample sample;
    double beta = 0.0;
};
EnvFile read_env(const std::string& path);

}  // namespace hjlab::env
