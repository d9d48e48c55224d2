#include "hjlab/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace hjlab::env {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kKappaHeadroom = 1.0 + 1e-9;  // absorbs pointwise rounding in the scan

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }
}  // namespace

const char* kind_name(Kind k) {
    switch (k) {
        case Kind::Constant: return "constant";
        case Kind::Sinusoidal: return "sinusoidal";
        case Kind::PoissonBumps: return "poisson-bumps";
        case Kind::RandomFourier: return "random-fourier";
        case Kind::PiecewiseDegenerate: return "piecewise-degenerate";
    }
    return "?";
}

Kind kind_from_name(const std::string& name) {
    if (name == "constant") return Kind::Constant;
    if (name == "sinusoidal") return Kind::Sinusoidal;
    if (name == "poisson-bumps") return Kind::PoissonBumps;
    if (name == "random-fourier") return Kind::RandomFourier;
    if (name == "piecewise-degenerate") return Kind::PiecewiseDegenerate;
    throw std::invalid_argument("unknown environment kind: " + name);
}

double EnvironmentSample::max_a() const {
    double m = 0.0;
    for (double x : a) m = std::max(m, x);
    return m;
}

namespace {

struct FieldFns {
    std::function<double(double)> sqrt_a;  // evaluated pointwise, then squared
    std::function<double(double)> v;
    double kappa_exact = 0.0;
};

double dist_to_intervals(double x, const std::vector<Interval>& ivs, bool periodic, double period) {
    if (ivs.empty()) return std::numeric_limits<double>::infinity();
    double d = std::numeric_limits<double>::infinity();
    for (const auto& iv : ivs) {
        for (int s = periodic ? -1 : 0; s <= (periodic ? 1 : 0); ++s) {
            const double lo = iv.lo + s * period, hi = iv.hi + s * period;
            if (x < lo) d = std::min(d, lo - x);
            else if (x > hi) d = std::min(d, x - hi);
            else return 0.0;
        }
    }
    return d;
}

FieldFns make_fields(const EnvConfig& cfg, std::uint64_t seed) {
    FieldFns f;
    switch (cfg.kind) {
        case Kind::Constant: {
            const double a0 = cfg.param("a0", 0.5);
            const double v0 = cfg.param("v0", 1.0);
            if (a0 < 0.0 || a0 > 1.0)
                throw std::invalid_argument("constant kind: a0 violates range [0,1]");
            if (v0 < 0.0 || v0 > 1.0)
                throw std::invalid_argument("constant kind: v0 violates range [0,1]");
            const double s0 = std::sqrt(a0);
            f.sqrt_a = [s0](double) { return s0; };
            f.v = [v0](double) { return v0; };
            f.kappa_exact = 0.0;
            return f;
        }
        case Kind::Sinusoidal: {
            const double sa_mid = cfg.param("sa_mid", 0.0), sa_amp = cfg.param("sa_amp", 0.0);
            const double sa_per = cfg.param("sa_period", 1.0), sa_ph = cfg.param("sa_phase", 0.0);
            const double v_mid = cfg.param("v_mid", 0.5), v_amp = cfg.param("v_amp", 0.5);
            const double v_per = cfg.param("v_period", 1.0), v_ph = cfg.param("v_phase", 0.0);
            if (sa_per <= 0.0 || v_per <= 0.0)
                throw std::invalid_argument("sinusoidal kind: periods must be positive");
            f.sqrt_a = [=](double x) {
                return clamp01(sa_mid + sa_amp * std::sin(kTwoPi * (x - sa_ph) / sa_per));
            };
            f.v = [=](double x) {
                return clamp01(v_mid + v_amp * std::sin(kTwoPi * (x - v_ph) / v_per));
            };
            f.kappa_exact = std::max(std::abs(sa_amp) * kTwoPi / sa_per,
                                     std::abs(v_amp) * kTwoPi / v_per);
            return f;
        }
        case Kind::PoissonBumps: {
            const double intensity = cfg.param("intensity", 1.0);
            const double width = cfg.param("width", 1.0);
            const double v0 = cfg.param("v0", 0.5);
            const double v_height = cfg.param("v_height", 0.0);
            const double lo = cfg.param("_x0", 0.0), hi = cfg.param("_x_end", 1.0);
            if (intensity < 0.0 || width <= 0.0)
                throw std::invalid_argument("poisson-bumps kind: need intensity >= 0, width > 0");
            if (v0 < 0.0 || v0 + v_height > 1.0 || v_height < 0.0)
                throw std::invalid_argument("poisson-bumps kind: v0/v_height violate range [0,1]");
            // centers drawn on the window extended by width/2 so edge statistics are unbiased
            std::mt19937_64 rng(seed);
            const double ext_lo = lo - 0.5 * width, ext_hi = hi + 0.5 * width;
            std::poisson_distribution<int> pois(intensity * (ext_hi - ext_lo));
            std::uniform_real_distribution<double> uni(ext_lo, ext_hi);
            const int count = pois(rng);
            auto centers = std::make_shared<std::vector<double>>();
            for (int j = 0; j < count; ++j) centers->push_back(uni(rng));
            std::sort(centers->begin(), centers->end());
            auto peak = [centers, width](double x) {
                double m = 0.0;
                auto it = std::lower_bound(centers->begin(), centers->end(), x - 0.5 * width);
                for (; it != centers->end() && *it <= x + 0.5 * width; ++it)
                    m = std::max(m, 1.0 - std::abs(2.0 * (x - *it) / width));
                return std::max(0.0, m);
            };
            f.sqrt_a = peak;
            f.v = [=](double x) { return clamp01(v0 + v_height * peak(x)); };
            f.kappa_exact = (2.0 / width) * std::max(1.0, v_height);
            return f;
        }
        case Kind::RandomFourier: {
            const int modes = static_cast<int>(cfg.param("modes", 8.0));
            const double per = cfg.param("period", 1.0);
            const double s_base = cfg.param("s_base", 0.5), s_amp = cfg.param("s_amp", 0.5);
            const double v_base = cfg.param("v_base", 0.5), v_amp = cfg.param("v_amp", 0.5);
            if (modes < 1 || per <= 0.0)
                throw std::invalid_argument("random-fourier kind: need modes >= 1, period > 0");
            std::mt19937_64 rng(seed);
            std::uniform_real_distribution<double> uni(0.0, kTwoPi);
            auto phases_s = std::make_shared<std::vector<double>>();
            auto phases_v = std::make_shared<std::vector<double>>();
            double norm = 0.0, slope = 0.0;
            for (int k = 1; k <= modes; ++k) {
                phases_s->push_back(uni(rng));
                phases_v->push_back(uni(rng));
                norm += 1.0 / (k * static_cast<double>(k));
                slope += 1.0 / k;
            }
            auto series = [per, modes, norm](const std::vector<double>& ph, double x) {
                double s = 0.0;
                for (int k = 1; k <= modes; ++k)
                    s += std::sin(kTwoPi * k * x / per + ph[static_cast<std::size_t>(k - 1)]) /
                         (k * static_cast<double>(k));
                return s / norm;
            };
            f.sqrt_a = [=](double x) { return clamp01(s_base + s_amp * series(*phases_s, x)); };
            f.v = [=](double x) { return clamp01(v_base + v_amp * series(*phases_v, x)); };
            f.kappa_exact = std::max(std::abs(s_amp), std::abs(v_amp)) * (kTwoPi / per) * slope / norm;
            return f;
        }
        case Kind::PiecewiseDegenerate: {
            const double a_low = cfg.param("a_low", 0.0), a_high = cfg.param("a_high", 1.0);
            const double v_lo = cfg.param("v_lo", 0.3), v_hi = cfg.param("v_hi", 0.9);
            const double kap = cfg.kappa;
            if (!(a_low >= 0.0 && a_low <= a_high && a_high <= 1.0))
                throw std::invalid_argument("piecewise kind: need 0 <= a_low <= a_high <= 1");
            if (!(v_lo >= 0.0 && v_lo <= v_hi && v_hi <= 1.0))
                throw std::invalid_argument("piecewise kind: need 0 <= v_lo <= v_hi <= 1");
            if (kap <= 0.0) throw std::invalid_argument("piecewise kind: kappa must be > 0");
            auto a_ivs = cfg.a_intervals;
            auto v_ivs = cfg.v_intervals;
            if (a_ivs.empty()) a_ivs.push_back({cfg.param("a_int_lo", 0.0), cfg.param("a_int_hi", 1.0)});
            if (v_ivs.empty() && (cfg.params.count("v_int_lo") || cfg.params.count("v_int_hi")))
                v_ivs.push_back({cfg.param("v_int_lo", 0.0), cfg.param("v_int_hi", 1.0)});
            const bool periodic = cfg.periodic;
            const double period = cfg.period;
            const double s_low = std::sqrt(a_low), s_high = std::sqrt(a_high);
            f.sqrt_a = [=](double x) {
                const double d = dist_to_intervals(x, a_ivs, periodic, period);
                return std::min(s_high, std::max(s_low, kap * d));
            };
            f.v = [=](double x) {
                if (v_ivs.empty()) return v_hi;
                const double d = dist_to_intervals(x, v_ivs, periodic, period);
                return std::max(v_lo, v_hi - kap * d);
            };
            f.kappa_exact = kap;
            return f;
        }
    }
    throw std::logic_error("unreachable");
}

}  // namespace

EnvironmentSample generate_env(const EnvConfig& config, std::uint64_t seed,
                               double x0, double x_end, double dx) {
    if (dx <= 0.0) throw std::invalid_argument("generate_env: dx must be > 0");
    if (x_end <= x0) throw std::invalid_argument("generate_env: empty domain");
    const double count = (x_end - x0) / dx;
    const double rounded = std::round(count);
    if (std::abs(count - rounded) > 1e-8)
        throw std::invalid_argument("generate_env: domain length must be a multiple of dx");
    const std::size_t n = static_cast<std::size_t>(rounded) + 1;

    EnvConfig cfg = config;
    cfg.params["_x0"] = x0;
    cfg.params["_x_end"] = x_end;

    EnvironmentSample s;
    s.grid.x0 = x0;
    s.grid.dx = dx;
    s.grid.n = n;
    s.seed = seed;
    s.generator_id = config.kind;

    std::size_t pp = 0;
    if (config.periodic) {
        const double ppf = config.period / dx;
        if (config.period <= 0.0 || std::abs(ppf - std::round(ppf)) > 1e-8)
            throw std::invalid_argument("generate_env: period must be a positive multiple of dx");
        pp = static_cast<std::size_t>(std::round(ppf));
        s.grid.periodic = true;
        s.grid.period_points = pp;
    }

    const FieldFns fns = make_fields(cfg, seed);
    s.a.resize(n);
    s.v.resize(n);
    if (config.periodic) {
        // evaluate one period and tile, so periodicity is exact in floating point
        std::vector<double> sa(pp), vv(pp);
        for (std::size_t i = 0; i < pp; ++i) {
            const double x = s.grid.x(i);
            sa[i] = fns.sqrt_a(x);
            vv[i] = fns.v(x);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = i % pp;
            s.a[i] = sa[j] * sa[j];
            s.v[i] = vv[j];
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const double x = s.grid.x(i);
            const double sq = fns.sqrt_a(x);
            s.a[i] = sq * sq;
            s.v[i] = fns.v(x);
        }
    }

    if (config.kappa > 0.0 && fns.kappa_exact > config.kappa * (1.0 + 1e-12) &&
        config.kind != Kind::PiecewiseDegenerate)
        throw std::invalid_argument(
            "generate_env: generator parameters violate the target Lipschitz bound (kappa " +
            std::to_string(fns.kappa_exact) + " > " + std::to_string(config.kappa) + ")");
    s.kappa = std::max(fns.kappa_exact * kKappaHeadroom + 1e-15, 1e-12);

    auto bad = check_invariants(s);
    if (!bad.empty())
        throw std::invalid_argument("generate_env: sample violates invariant: " + bad.front());
    return s;
}

std::vector<std::string> check_invariants(const EnvironmentSample& s) {
    std::vector<std::string> out;
    const std::size_t n = s.grid.n;
    const double step = s.kappa * s.grid.dx;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(s.a[i] >= 0.0 && s.a[i] <= 1.0)) { out.push_back("a range [0,1] at i=" + std::to_string(i)); break; }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!(s.v[i] >= 0.0 && s.v[i] <= 1.0)) { out.push_back("v range [0,1] at i=" + std::to_string(i)); break; }
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (std::abs(std::sqrt(s.a[i + 1]) - std::sqrt(s.a[i])) > step) {
            out.push_back("sqrt(a) Lipschitz bound at i=" + std::to_string(i));
            break;
        }
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (std::abs(s.v[i + 1] - s.v[i]) > step) {
            out.push_back("v Lipschitz bound at i=" + std::to_string(i));
            break;
        }
    }
    if (s.grid.periodic) {
        const std::size_t pp = s.grid.period_points;
        if (pp == 0 || pp >= n) {
            out.push_back("periodic sample must span more than one period");
        } else {
            for (std::size_t i = 0; i + pp < n; ++i) {
                if (s.a[i] != s.a[i + pp] || s.v[i] != s.v[i + pp]) {
                    out.push_back("periodic tiling not exact at i=" + std::to_string(i));
                    break;
                }
            }
        }
    }
    return out;
}

std::optional<HillWitness> verify_hill(const EnvironmentSample& s, double h, double y) {
    if (!(h > 0.0 && h < 1.0)) throw std::invalid_argument("verify_hill: need 0 < h < 1");
    if (!(y > 0.0)) throw std::invalid_argument("verify_hill: need y > 0");
    const std::size_t n = s.grid.n;
    const double dx = s.grid.dx;
    constexpr double kDeltaMin = 1e-13;

    auto integral = [&](std::size_t i0, std::size_t i1, double delta) {
        double acc = 0.0;
        for (std::size_t i = i0; i < i1; ++i)
            acc += 0.5 * (1.0 / std::max(s.a[i], delta) + 1.0 / std::max(s.a[i + 1], delta)) * dx;
        return acc;
    };

    std::size_t i = 0;
    while (i < n) {
        if (s.v[i] < h) { ++i; continue; }
        std::size_t j = i;
        while (j + 1 < n && s.v[j + 1] >= h) ++j;
        if (j > i) {
            // largest delta in (0, 1] whose integral still reaches y
            double delta = 1.0;
            if (integral(i, j, 1.0) < y) {
                if (integral(i, j, kDeltaMin) >= y) {
                    double ok = kDeltaMin, bad = 1.0;
                    for (int it = 0; it < 60; ++it) {
                        const double mid = 0.5 * (ok + bad);
                        (integral(i, j, mid) >= y ? ok : bad) = mid;
                    }
                    delta = ok;
                } else {
                    delta = 0.0;  // this hill cannot carry mass y
                }
            }
            if (delta > 0.0) {
                // shrink the right endpoint to the first grid point reaching y
                double acc = 0.0;
                std::size_t jstar = j;
                for (std::size_t k = i; k < j; ++k) {
                    acc += 0.5 * (1.0 / std::max(s.a[k], delta) + 1.0 / std::max(s.a[k + 1], delta)) * dx;
                    if (acc >= y) { jstar = k + 1; break; }
                }
                HillWitness w;
                w.ell1 = s.grid.x(i);
                w.ell2 = s.grid.x(jstar);
                w.delta = delta;
                w.h = h;
                w.y = y;
                w.achieved_integral = integral(i, jstar, delta);
                return w;
            }
        }
        i = j + 1;
    }
    return std::nullopt;
}

EnvironmentSample translate(const EnvironmentSample& s, double z) {
    const double kf = z / s.grid.dx;
    const double kr = std::round(kf);
    if (std::abs(kf - kr) > 1e-9)
        throw std::invalid_argument("translate: offset is not an integer multiple of dx");
    const long long k = static_cast<long long>(kr);

    EnvironmentSample out = s;
    out.grid.x0 = s.grid.x0 + z;
    if (s.grid.periodic) {
        const long long pp = static_cast<long long>(s.grid.period_points);
        const std::size_t shift = static_cast<std::size_t>(((k % pp) + pp) % pp);
        for (std::size_t i = 0; i < s.grid.n; ++i) {
            const std::size_t base = (i + shift) % s.grid.period_points;
            out.a[i] = s.a[base];
            out.v[i] = s.v[base];
        }
        return out;
    }
    if (k < 0)
        throw std::invalid_argument("translate: negative offsets leave the sampled window "
                                    "(non-periodic sample)");
    if (static_cast<std::size_t>(k) >= s.grid.n)
        throw std::invalid_argument("translate: shifted window leaves the sampled window");
    const std::size_t nk = s.grid.n - static_cast<std::size_t>(k);
    out.grid.n = nk;
    out.a.assign(s.a.begin() + k, s.a.end());
    out.v.assign(s.v.begin() + k, s.v.end());
    return out;
}

void write_env(const EnvironmentSample& s, double beta, const std::string& path) {
    nlohmann::json hdr;
    hdr["format"] = "hjlab-env-1";
    hdr["generator_id"] = kind_name(s.generator_id);
    hdr["seed"] = s.seed;
    hdr["kappa"] = s.kappa;
    hdr["beta"] = beta;
    hdr["x0"] = s.grid.x0;
    hdr["dx"] = s.grid.dx;
    hdr["n"] = s.grid.n;
    hdr["periodic"] = s.grid.periodic;
    hdr["period_points"] = s.grid.period_points;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << hdr.dump() << "\n";
    f << "a,v\n";
    for (std::size_t i = 0; i < s.grid.n; ++i)
        f << fmt17(s.a[i]) << "," << fmt17(s.v[i]) << "\n";
}

EnvFile read_env(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("empty environment file " + path);
    const auto hdr = nlohmann::json::parse(line);
    EnvFile out;
    out.beta = hdr.at("beta").get<double>();
    EnvironmentSample& s = out.sample;
    s.generator_id = kind_from_name(hdr.at("generator_id").get<std::string>());
    s.seed = hdr.at("seed").get<std::uint64_t>();
    s.kappa = hdr.at("kappa").get<double>();
    s.grid.x0 = hdr.at("x0").get<double>();
    s.grid.dx = hdr.at("dx").get<double>();
    s.grid.n = hdr.at("n").get<std::size_t>();
    s.grid.periodic = hdr.at("periodic").get<bool>();
    s.grid.period_points = hdr.at("period_points").get<std::size_t>();
    if (!std::getline(f, line) || line != "a,v")
        throw std::runtime_error("bad column header in " + path);
    s.a.reserve(s.grid.n);
    s.v.reserve(s.grid.n);
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("bad row in " + path);
        s.a.push_back(std::strtod(line.c_str(), nullptr));
        s.v.push_back(std::strtod(line.c_str() + comma + 1, nullptr));
    }
    if (s.a.size() != s.grid.n)
        throw std::runtime_error("row count mismatch in " + path);
    return out;
}

}  // namespace hjlab::env
