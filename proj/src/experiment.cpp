#include "hjlab/experiment.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "hjlab/corrector.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hjlab::experiment {

namespace {

void apply_override(json& j, const std::string& entry) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override must be key.path=value: " + entry);
    std::string path = entry.substr(0, eq);
    const std::string value = entry.substr(eq + 1);
    json* node = &j;
    std::size_t pos = 0;
    while (true) {
        const auto dot = path.find('.', pos);
        const std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (dot == std::string::npos) {
            json parsed;
            try {
                parsed = json::parse(value);
            } catch (...) {
                parsed = value;  // bare strings allowed
            }
            (*node)[key] = parsed;
            return;
        }
        node = &(*node)[key];
        pos = dot + 1;
    }
}

gclass::NonlinearitySpec parse_nonlinearity(const json& j) {
    const std::string family = j.value("family", "power-plus-linear");
    const double alpha0 = j.value("alpha0", 1.0);
    const double alpha1 = j.value("alpha1", 2.0);
    const double gamma = j.value("gamma", 2.0);
    gclass::NonlinearitySpec g;
    if (family == "power-plus-linear") {
        g = gclass::NonlinearitySpec::power_plus_linear(gamma, j.value("c", 1.0), alpha0, alpha1);
    } else if (family == "shifted-power") {
        g = gclass::NonlinearitySpec::shifted_power(gamma, j.value("c", 1.0),
                                                    j.value("p_star", 0.0),
                                                    j.value("offset", 0.0), alpha0, alpha1);
    } else if (family == "tabulated") {
        g = gclass::NonlinearitySpec::tabulated(j.at("knots_p").get<std::vector<double>>(),
                                                j.at("knots_g").get<std::vector<double>>(),
                                                alpha0, alpha1, gamma);
    } else {
        throw std::invalid_argument("unknown nonlinearity family: " + family);
    }
    if (j.contains("eta")) g.eta = j.at("eta").get<double>();
    return g;
}

env::EnvConfig parse_env(const json& j) {
    env::EnvConfig cfg;
    cfg.kind = env::kind_from_name(j.value("kind", "constant"));
    if (j.contains("params"))
        for (auto it = j.at("params").begin(); it != j.at("params").end(); ++it)
            cfg.params[it.key()] = it.value().get<double>();
    if (j.contains("a_intervals"))
        for (const auto& iv : j.at("a_intervals"))
            cfg.a_intervals.push_back({iv.at(0).get<double>(), iv.at(1).get<double>()});
    if (j.contains("v_intervals"))
        for (const auto& iv : j.at("v_intervals"))
            cfg.v_intervals.push_back({iv.at(0).get<double>(), iv.at(1).get<double>()});
    cfg.kappa = j.value("kappa", 8.0);
    cfg.periodic = j.value("periodic", false);
    cfg.period = j.value("period", 1.0);
    return cfg;
}

template <typename F>
void parallel_for(std::size_t count, int threads, F&& fn) {
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int spawn = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(threads), count));
    std::atomic<bool> failed{false};
    std::string error;
    std::mutex err_mtx;
    for (int t = 0; t < spawn; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count || failed.load()) return;
                try {
                    fn(i);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lk(err_mtx);
                    failed.store(true);
                    if (error.empty()) error = e.what();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failed.load()) throw std::runtime_error(error);
}

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double stderr_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - m) * (x - m);
    return std::sqrt(acc / (static_cast<double>(xs.size() - 1) * static_cast<double>(xs.size())));
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
    json j = json::parse(text);
    for (const auto& ov : overrides) apply_override(j, ov);

    ExperimentConfig c;
    c.environment = parse_env(j.at("environment"));
    const auto& dom = j.at("domain");
    c.domain_x0 = dom.at("x0").get<double>();
    c.domain_x_end = dom.at("x_end").get<double>();
    c.env_dx = dom.at("dx").get<double>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.nonlinearity = parse_nonlinearity(j.at("nonlinearity"));
    c.beta = j.value("beta", 0.0);
    c.environment.beta = c.beta;
    c.lambda_grid = j.value("lambda_grid", std::vector<double>{});
    c.theta_grid = j.value("theta_grid", std::vector<double>{});
    if (j.contains("scheme")) {
        const auto& s = j.at("scheme");
        c.scheme.dx = s.value("dx", c.scheme.dx);
        c.scheme.cfl = s.value("cfl", c.scheme.cfl);
        if (s.contains("flux")) c.scheme.flux = pde::flux_from_name(s.at("flux").get<std::string>());
        if (s.contains("boundary")) {
            const std::string b = s.at("boundary").get<std::string>();
            if (b == "periodic-perturbation") c.scheme.boundary = pde::Boundary::PeriodicPerturbation;
            else if (b == "large-domain") c.scheme.boundary = pde::Boundary::LargeDomain;
            else throw std::invalid_argument("unknown boundary mode: " + b);
        }
        c.scheme.t_final = s.value("t_final", c.scheme.t_final);
        c.scheme.tail_fraction = s.value("tail_fraction", c.scheme.tail_fraction);
        c.scheme.gradient_bound = s.value("gradient_bound", 0.0);
    }
    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        c.solver.a_floor = s.value("a_floor", c.solver.a_floor);
        c.solver.solver_tol = s.value("solver_tol", c.solver.solver_tol);
        c.solver.pin_tol = s.value("pin_tol", c.solver.pin_tol);
    }
    if (j.contains("tolerances")) {
        const auto& s = j.at("tolerances");
        c.tolerances.solver_tol = s.value("solver_tol", c.tolerances.solver_tol);
        c.tolerances.pin_tol = s.value("pin_tol", c.tolerances.pin_tol);
        c.tolerances.cross_route_tol = s.value("cross_route_tol", c.tolerances.cross_route_tol);
        c.tolerances.stderr_max = s.value("stderr_max", c.tolerances.stderr_max);
    }
    if (j.contains("hill")) {
        c.hill_h = j.at("hill").value("h", c.hill_h);
        c.hill_y = j.at("hill").value("y", c.hill_y);
    }
    if (j.contains("glue")) {
        c.glue_epsilon = j.at("glue").value("epsilon", c.glue_epsilon);
        c.glue_y0 = j.at("glue").value("y0", c.glue_y0);
    }
    c.output_dir = j.value("output_dir", c.output_dir);
    c.parallelism = j.value("parallelism", 0);

    if (c.lambda_grid.empty()) throw std::invalid_argument("config: lambda_grid must be nonempty");
    for (double l : c.lambda_grid)
        if (l < c.beta - 1e-12)
            throw std::invalid_argument("config: lambda grid must lie in [beta, infinity)");
    bool has_beta = false;
    for (double l : c.lambda_grid) has_beta = has_beta || std::abs(l - c.beta) <= 1e-12;
    if (!has_beta) throw std::invalid_argument("config: lambda grid must include lambda = beta");
    return c;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), overrides);
}

ComparisonReport run_experiment(const ExperimentConfig& config) {
    const fs::path out(config.output_dir);
    fs::create_directories(out / "envs");
    fs::create_directories(out / "profiles");
    fs::create_directories(out / "traces");

    json manifest;
    manifest["config"] = {{"beta", config.beta},
                          {"seeds", config.seeds},
                          {"lambda_grid", config.lambda_grid},
                          {"theta_grid", config.theta_grid},
                          {"output_dir", config.output_dir}};
    manifest["incomplete_stage"] = nullptr;
    std::string stage = "env";
    auto flush_manifest = [&] {
        std::ofstream mf(out / "manifest.json");
        mf << manifest.dump(2) << "\n";
    };

    ComparisonReport report;
    try {
        // environments, one per seed
        const std::size_t nseeds = config.seeds.size();
        std::vector<env::EnvironmentSample> envs(nseeds);
        for (std::size_t si = 0; si < nseeds; ++si) {
            envs[si] = env::generate_env(config.environment, config.seeds[si], config.domain_x0,
                                         config.domain_x_end, config.env_dx);
            const std::string p = (out / "envs" / ("env_seed" + std::to_string(si) + ".env.csv")).string();
            env::write_env(envs[si], config.beta, p);
            manifest["artifacts"]["envs"].push_back(p);
        }

        stage = "g-validate";
        const auto red = gclass::reduce(config.nonlinearity);
        gclass::NonlinearitySpec g = red.g_tilde;
        if (!g.in_sqc) g = gclass::perturb(g, 1000);
        {
            std::vector<double> grid;
            for (double p = -10.0; p <= 10.0 + 1e-12; p += 0.1) grid.push_back(p);
            const auto rep = gclass::validate_class(g, g.alpha0, g.alpha1, g.gamma, grid);
            const auto qc = gclass::check_quasiconvex(g, grid);
            json gj;
            gj["class_pass"] = rep.pass;
            gj["quasiconvex"] = qc.quasiconvex;
            gj["relabeling"] = {{"p_min", red.relabel.p_min}, {"min_value", red.relabel.min_value}};
            if (rep.empirical_eta) gj["empirical_eta"] = *rep.empirical_eta;
            std::ofstream gf(out / "g_report.json");
            gf << gj.dump(2) << "\n";
            manifest["artifacts"]["g_report"] = (out / "g_report.json").string();
        }

        stage = "hill";
        {
            const auto w = env::verify_hill(envs.front(), config.hill_h, config.hill_y);
            report.hill_found = w.has_value();
            if (w) report.hill = *w;
            json hj;
            hj["found"] = report.hill_found;
            hj["window_relative"] = true;
            if (w) {
                hj["ell1"] = w->ell1;
                hj["ell2"] = w->ell2;
                hj["delta"] = w->delta;
                hj["achieved_integral"] = w->achieved_integral;
            }
            std::ofstream hf(out / "hill.json");
            hf << hj.dump(2) << "\n";
            manifest["artifacts"]["hill"] = (out / "hill.json").string();
        }

        stage = "corrector";
        const std::size_t nl = config.lambda_grid.size();
        std::vector<effective::ThetaSample> samples(nl);
        std::vector<corrector::CorrectorProfile> beta_minus(nseeds), beta_plus(nseeds);
        {
            struct Job { std::size_t li, si; };
            std::vector<Job> jobs;
            for (std::size_t li = 0; li < nl; ++li)
                for (std::size_t si = 0; si < nseeds; ++si) jobs.push_back({li, si});
            std::vector<double> th_plus(jobs.size()), th_minus(jobs.size()), wlen(jobs.size());
            std::vector<corrector::CorrectorProfile> plus_profiles(jobs.size()),
                minus_profiles(jobs.size());
            parallel_for(jobs.size(), config.parallelism, [&](std::size_t k) {
                const auto [li, si] = jobs[k];
                const double lam = config.lambda_grid[li];
                auto pl = corrector::solve_branch(envs[si], g, config.beta, lam,
                                                  gclass::BranchSide::Plus, config.solver);
                auto mi = corrector::solve_branch(envs[si], g, config.beta, lam,
                                                  gclass::BranchSide::Minus, config.solver);
                th_plus[k] = effective::theta_of_lambda(pl);
                th_minus[k] = effective::theta_of_lambda(mi);
                wlen[k] = double(pl.retained_hi - pl.retained_lo) * envs[si].grid.dx;
                plus_profiles[k] = std::move(pl);
                minus_profiles[k] = std::move(mi);
            });
            for (std::size_t k = 0; k < jobs.size(); ++k) {
                const auto [li, si] = jobs[k];
                const std::string base = "lam" + std::to_string(li) + "_seed" + std::to_string(si);
                const std::string pp = (out / "profiles" / (base + "_plus.csv")).string();
                const std::string mp = (out / "profiles" / (base + "_minus.csv")).string();
                corrector::write_profile(plus_profiles[k], envs[si], pp, pp + ".json",
                                          config.solver);
                corrector::write_profile(minus_profiles[k], envs[si], mp, mp + ".json",
                                          config.solver);
                manifest["artifacts"]["profiles"].push_back(pp);
                manifest["artifacts"]["profiles"].push_back(mp);
                if (std::abs(config.lambda_grid[li] - config.beta) <= 1e-12) {
                    beta_plus[si] = plus_profiles[k];
                    beta_minus[si] = minus_profiles[k];
                }
            }
            for (std::size_t li = 0; li < nl; ++li) {
                std::vector<double> tp, tm;
                double wl = 0.0;
                for (std::size_t k = 0; k < jobs.size(); ++k) {
                    if (jobs[k].li != li) continue;
                    tp.push_back(th_plus[k]);
                    tm.push_back(th_minus[k]);
                    wl = wlen[k];
                }
                effective::ThetaSample ts;
                ts.lambda = config.lambda_grid[li];
                ts.theta_plus = mean_of(tp);
                ts.theta_minus = mean_of(tm);
                ts.stderr_plus = stderr_of(tp);
                ts.stderr_minus = stderr_of(tm);
                ts.window_length = wl;
                if (ts.stderr_plus > config.tolerances.stderr_max ||
                    ts.stderr_minus > config.tolerances.stderr_max)
                    throw std::runtime_error("theta sample at lambda " + std::to_string(ts.lambda) +
                                             " exceeds the across-seed stderr gate");
                samples[li] = ts;
            }
        }

        stage = "curve";
        const auto curve = effective::build_curve(samples, config.beta, red.relabel);
        effective::write_curve(curve, (out / "curve.csv").string(), (out / "curve.json").string());
        manifest["artifacts"]["curve"] = (out / "curve.csv").string();
        report.flat_lo = curve.flat_lo;
        report.flat_hi = curve.flat_hi;
        if (curve.samples.size() >= 2) {
            const auto sw = effective::sandwich_check(curve, g.eta_rate(), g);
            report.sandwich_pass = sw.pass;
            report.sandwich_worst_margin = sw.worst_margin;
        }

        stage = "pde";
        // the time-dependent route runs on its own grid resolution; same
        // generator, same seed, sampled at scheme.dx
        std::vector<env::EnvironmentSample> pde_envs(nseeds);
        for (std::size_t si = 0; si < nseeds; ++si)
            pde_envs[si] = env::generate_env(config.environment, config.seeds[si],
                                             config.domain_x0, config.domain_x_end,
                                             config.scheme.dx);
        const std::size_t nt = config.theta_grid.size();
        std::vector<double> fit(nt * nseeds), lob(nt * nseeds), upb(nt * nseeds);
        std::vector<pde::SimulationTrace> traces(nt * nseeds);
        parallel_for(nt * nseeds, config.parallelism, [&](std::size_t k) {
            const std::size_t ti = k / nseeds, si = k % nseeds;
            auto tr = pde::run(pde_envs[si], g, config.beta, config.theta_grid[ti], config.scheme);
            const auto est = pde::estimate_slope(tr, config.scheme.tail_fraction);
            fit[k] = est.fitted;
            lob[k] = est.h_lower;
            upb[k] = est.h_upper;
            traces[k] = std::move(tr);
        });
        for (std::size_t k = 0; k < nt * nseeds; ++k) {
            const std::size_t ti = k / nseeds, si = k % nseeds;
            const std::string tp = (out / "traces" /
                                    ("theta" + std::to_string(ti) + "_seed" + std::to_string(si) +
                                     ".csv")).string();
            pde::write_trace(traces[k], tp, tp + ".json");
            manifest["artifacts"]["traces"].push_back(tp);
        }

        stage = "glue";
        if (config.beta > 0.0 && curve.flat_hi - curve.flat_lo > 1e-9) {
            const auto glue = effective::build_glue(envs.front(), g, config.beta,
                                                    config.glue_epsilon, config.glue_y0,
                                                    beta_minus.front(), beta_plus.front());
            json gj;
            gj["ok"] = glue.glue.has_value();
            if (glue.glue) {
                effective::write_glue(*glue.glue, (out / "glue.json").string());
                manifest["artifacts"]["glue"] = (out / "glue.json").string();
            } else {
                gj["failure"] = glue.failure;
                gj["best_gap"] = glue.best_gap;
                gj["best_window"] = {glue.best_window_lo, glue.best_window_hi};
                std::ofstream gf(out / "glue.json");
                gf << gj.dump(2) << "\n";
            }
        }

        stage = "report";
        for (std::size_t ti = 0; ti < nt; ++ti) {
            ReportRow row;
            row.theta = config.theta_grid[ti];
            row.h_corrector = effective::evaluate(curve, config.theta_grid[ti]);
            std::vector<double> fs, los, ups;
            for (std::size_t si = 0; si < nseeds; ++si) {
                fs.push_back(fit[ti * nseeds + si]);
                los.push_back(lob[ti * nseeds + si]);
                ups.push_back(upb[ti * nseeds + si]);
            }
            row.h_pde_fitted = mean_of(fs);
            row.h_pde_lower = *std::min_element(los.begin(), los.end());
            row.h_pde_upper = *std::max_element(ups.begin(), ups.end());
            row.abs_gap = std::abs(row.h_corrector - row.h_pde_fitted);
            row.pass = row.abs_gap <= config.tolerances.cross_route_tol &&
                       row.h_pde_lower <= row.h_corrector + 1e-9 &&
                       row.h_corrector <= row.h_pde_upper + config.tolerances.cross_route_tol;
            row.profile_path = (out / "profiles").string();
            row.trace_path = (out / "traces" / ("theta" + std::to_string(ti) + "_seed0.csv")).string();
            report.max_gap = std::max(report.max_gap, row.abs_gap);
            report.pass = report.pass && row.pass;
            report.rows.push_back(row);
        }
        report.pass = report.pass && report.sandwich_pass;

        {
            std::ofstream rf(out / "report.csv");
            rf << "theta,H_corrector,H_pde_fitted,H_pde_lower,H_pde_upper,abs_gap,pass\n";
            for (const auto& r : report.rows)
                rf << fmt17(r.theta) << "," << fmt17(r.h_corrector) << "," << fmt17(r.h_pde_fitted)
                   << "," << fmt17(r.h_pde_lower) << "," << fmt17(r.h_pde_upper) << ","
                   << fmt17(r.abs_gap) << "," << (r.pass ? 1 : 0) << "\n";
            json rj;
            rj["max_gap"] = report.max_gap;
            rj["flat_interval"] = {report.flat_lo, report.flat_hi};
            rj["sandwich_pass"] = report.sandwich_pass;
            rj["sandwich_worst_margin"] = report.sandwich_worst_margin;
            rj["hill_found"] = report.hill_found;
            rj["pass"] = report.pass;
            std::ofstream rjf(out / "report.json");
            rjf << rj.dump(2) << "\n";
            manifest["artifacts"]["report"] = (out / "report.csv").string();
        }
        flush_manifest();
    } catch (const std::exception& e) {
        manifest["incomplete_stage"] = stage;
        manifest["error"] = e.what();
        flush_manifest();
        throw std::runtime_error("experiment stage '" + stage + "' failed: " + e.what());
    }
    return report;
}

}  // namespace hjlab::experiment
