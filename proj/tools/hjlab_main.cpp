// hjlab: numerical laboratory for effective Hamiltonians of 1-D viscous
// Hamilton-Jacobi equations in random environments. Each subcommand wraps one
// library operation; exit codes: 0 success, 1 domain error, 2 usage error.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hjlab/corrector.hpp"
#include "hjlab/effective.hpp"
#include "hjlab/env.hpp"
#include "hjlab/experiment.hpp"
#include "hjlab/gclass.hpp"
#include "hjlab/pde.hpp"

using nlohmann::json;

namespace {

hjlab::env::EnvConfig env_config_from_flags(const std::string& kind,
                                            const std::vector<std::string>& params, double kappa,
                                            double beta, bool periodic, double period) {
    hjlab::env::EnvConfig cfg;
    cfg.kind = hjlab::env::kind_from_name(kind);
    cfg.kappa = kappa;
    cfg.beta = beta;
    cfg.periodic = periodic;
    cfg.period = period;
    for (const auto& kv : params) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("--param expects key=value, got: " + kv);
        cfg.params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    }
    return cfg;
}

hjlab::gclass::NonlinearitySpec load_g(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open nonlinearity config " + path);
    json j;
    f >> j;
    const std::string family = j.value("family", "power-plus-linear");
    hjlab::gclass::NonlinearitySpec g;
    if (family == "power-plus-linear")
        g = hjlab::gclass::NonlinearitySpec::power_plus_linear(
            j.value("gamma", 2.0), j.value("c", 1.0), j.value("alpha0", 1.0), j.value("alpha1", 2.0));
    else if (family == "shifted-power")
        g = hjlab::gclass::NonlinearitySpec::shifted_power(
            j.value("gamma", 2.0), j.value("c", 1.0), j.value("p_star", 0.0),
            j.value("offset", 0.0), j.value("alpha0", 1.0), j.value("alpha1", 2.0));
    else if (family == "tabulated")
        g = hjlab::gclass::NonlinearitySpec::tabulated(
            j.at("knots_p").get<std::vector<double>>(), j.at("knots_g").get<std::vector<double>>(),
            j.value("alpha0", 1.0), j.value("alpha1", 2.0), j.value("gamma", 2.0));
    else
        throw std::runtime_error("unknown family " + family);
    if (j.contains("eta")) g.eta = j.at("eta").get<double>();
    return g;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"effective Hamiltonians of 1-D viscous HJ equations: corrector and PDE routes"};
    app.require_subcommand(1);

    // env-gen
    auto* env_gen = app.add_subcommand("env-gen", "generate an environment realization");
    std::string eg_kind = "constant", eg_out = "env.env.csv";
    std::vector<std::string> eg_params;
    double eg_x0 = 0.0, eg_xend = 1.0, eg_dx = 1e-3, eg_kappa = 8.0, eg_beta = 0.0, eg_period = 1.0;
    std::uint64_t eg_seed = 1;
    bool eg_periodic = false;
    std::string eg_domain;
    env_gen->add_option("--env-kind", eg_kind, "constant|sinusoidal|poisson-bumps|random-fourier|piecewise-degenerate");
    env_gen->add_option("--seed", eg_seed);
    env_gen->add_option("--domain", eg_domain, "window as lo:hi (alternative to --x0/--x-end)");
    env_gen->add_option("--x0", eg_x0);
    env_gen->add_option("--x-end", eg_xend);
    env_gen->add_option("--dx", eg_dx);
    env_gen->add_option("--kappa", eg_kappa);
    env_gen->add_option("--beta", eg_beta);
    env_gen->add_option("--param", eg_params, "kind-specific key=value, repeatable");
    env_gen->add_flag("--periodic", eg_periodic);
    env_gen->add_option("--period", eg_period);
    env_gen->add_option("-o,--out", eg_out);

    // env-hill
    auto* env_hill = app.add_subcommand("env-hill", "search a hill witness on an environment file");
    std::string eh_env, eh_out = "hill.json";
    double eh_h = 0.5, eh_y = 1.0;
    env_hill->add_option("--env", eh_env)->required();
    env_hill->add_option("--hill-h", eh_h)->required();
    env_hill->add_option("--hill-y", eh_y)->required();
    env_hill->add_option("-o,--out", eh_out);

    // g-validate
    auto* gval = app.add_subcommand("g-validate", "check class and quasiconvexity of a nonlinearity");
    std::string gv_g, gv_out = "g_report.json";
    double gv_lo = -10.0, gv_hi = 10.0, gv_step = 0.1;
    gval->add_option("--g", gv_g)->required();
    gval->add_option("--grid-lo", gv_lo);
    gval->add_option("--grid-hi", gv_hi);
    gval->add_option("--grid-step", gv_step);
    gval->add_option("-o,--out", gv_out);

    // corrector-solve
    auto* csolve = app.add_subcommand("corrector-solve", "solve the stationary branch equation");
    std::string cs_env, cs_g, cs_branch = "plus", cs_out = "profile.csv";
    double cs_beta = 0.0, cs_lambda = 1.0;
    csolve->add_option("--env", cs_env)->required();
    csolve->add_option("--g", cs_g)->required();
    csolve->add_option("--beta", cs_beta);
    csolve->add_option("--lambda", cs_lambda)->required();
    csolve->add_option("--branch", cs_branch, "plus|minus");
    csolve->add_option("-o,--out", cs_out);

    // effective-curve
    auto* curve_cmd = app.add_subcommand("effective-curve", "assemble theta maps over a lambda grid");
    std::string ec_env, ec_g, ec_out = "curve.csv";
    double ec_beta = 0.0;
    std::vector<double> ec_lambdas;
    curve_cmd->add_option("--env", ec_env)->required();
    curve_cmd->add_option("--g", ec_g)->required();
    curve_cmd->add_option("--beta", ec_beta);
    curve_cmd->add_option("--lambdas", ec_lambdas)->required()->expected(-1);
    curve_cmd->add_option("-o,--out", ec_out);

    // pde-run
    auto* prun = app.add_subcommand("pde-run", "evolve the time-dependent equation from theta*x");
    std::string pr_env, pr_g, pr_flux = "godunov-quasiconvex", pr_mode = "periodic-perturbation",
                pr_out = "trace.csv";
    double pr_beta = 0.0, pr_theta = 0.0, pr_T = 10.0, pr_cfl = 0.9;
    prun->add_option("--env", pr_env)->required();
    prun->add_option("--g", pr_g)->required();
    prun->add_option("--beta", pr_beta);
    prun->add_option("--theta", pr_theta)->required();
    prun->add_option("--T", pr_T);
    prun->add_option("--cfl", pr_cfl);
    prun->add_option("--flux", pr_flux);
    prun->add_option("--mode", pr_mode);
    prun->add_option("-o,--out", pr_out);

    // glue-check
    auto* gluec = app.add_subcommand("glue-check", "build the flat-piece glue supersolution");
    std::string gc_env, gc_g, gc_out = "glue.json";
    double gc_beta = 1.0, gc_eps = 0.1, gc_y0 = 2.0;
    gluec->add_option("--env", gc_env)->required();
    gluec->add_option("--g", gc_g)->required();
    gluec->add_option("--beta", gc_beta);
    gluec->add_option("--epsilon", gc_eps);
    gluec->add_option("--y0", gc_y0);
    gluec->add_option("-o,--out", gc_out);

    // compare
    auto* cmp = app.add_subcommand("compare", "run a declarative experiment and compare routes");
    std::string cp_config;
    std::vector<std::string> cp_sets;
    cmp->add_option("--config", cp_config)->required();
    cmp->add_option("--set", cp_sets, "dotted-path override key.path=value, repeatable");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*env_gen) {
            const auto cfg = env_config_from_flags(eg_kind, eg_params, eg_kappa, eg_beta,
                                                   eg_periodic, eg_period);
            if (!eg_domain.empty()) {
                const auto colon = eg_domain.find(':');
                if (colon == std::string::npos)
                    throw std::invalid_argument("--domain expects lo:hi");
                eg_x0 = std::stod(eg_domain.substr(0, colon));
                eg_xend = std::stod(eg_domain.substr(colon + 1));
            }
            const auto sample = hjlab::env::generate_env(cfg, eg_seed, eg_x0, eg_xend, eg_dx);
            hjlab::env::write_env(sample, eg_beta, eg_out);
            std::cout << "wrote " << eg_out << " (" << sample.grid.n << " points)\n";
        } else if (*env_hill) {
            const auto ef = hjlab::env::read_env(eh_env);
            const auto w = hjlab::env::verify_hill(ef.sample, eh_h, eh_y);
            json j;
            j["found"] = w.has_value();
            j["window_relative"] = true;
            if (w) {
                j["ell1"] = w->ell1;
                j["ell2"] = w->ell2;
                j["delta"] = w->delta;
                j["h"] = w->h;
                j["y"] = w->y;
                j["achieved_integral"] = w->achieved_integral;
            }
            std::ofstream f(eh_out);
            f << j.dump(2) << "\n";
            if (!w) {
                std::cerr << "no hill witness on this window (window-relative result)\n";
                return 1;
            }
            std::cout << "witness on [" << w->ell1 << ", " << w->ell2 << "], delta " << w->delta
                      << "\n";
        } else if (*gval) {
            const auto g = load_g(gv_g);
            std::vector<double> grid;
            for (double p = gv_lo; p <= gv_hi + 1e-12; p += gv_step) grid.push_back(p);
            const auto rep = hjlab::gclass::validate_class(g, g.alpha0, g.alpha1, g.gamma, grid);
            const auto qc = hjlab::gclass::check_quasiconvex(g, grid);
            json j;
            j["class_pass"] = rep.pass;
            j["quasiconvex"] = qc.quasiconvex;
            if (qc.first_violation_p) j["first_violation_p"] = *qc.first_violation_p;
            if (rep.worst)
                j["worst"] = {{"inequality", rep.worst->inequality},
                              {"p", rep.worst->p},
                              {"q", rep.worst->q},
                              {"margin", rep.worst->margin}};
            if (rep.empirical_eta) j["empirical_eta"] = *rep.empirical_eta;
            std::ofstream f(gv_out);
            f << j.dump(2) << "\n";
            std::cout << (rep.pass && qc.quasiconvex ? "pass" : "fail") << "\n";
            if (!rep.pass || !qc.quasiconvex) return 1;
        } else if (*csolve) {
            const auto ef = hjlab::env::read_env(cs_env);
            const auto red = hjlab::gclass::reduce(load_g(cs_g));
            auto g = red.g_tilde;
            if (!g.in_sqc) g = hjlab::gclass::perturb(g, 1000);
            const auto side = cs_branch == "minus" ? hjlab::gclass::BranchSide::Minus
                                                   : hjlab::gclass::BranchSide::Plus;
            const auto prof = hjlab::corrector::solve_branch(ef.sample, g, cs_beta, cs_lambda, side);
            hjlab::corrector::write_profile(prof, ef.sample, cs_out, cs_out + ".json");
            std::cout << "max residual " << prof.diag.max_residual << ", pinned residual "
                      << prof.diag.max_pin_residual << "\n";
        } else if (*curve_cmd) {
            const auto ef = hjlab::env::read_env(ec_env);
            const auto red = hjlab::gclass::reduce(load_g(ec_g));
            auto g = red.g_tilde;
            if (!g.in_sqc) g = hjlab::gclass::perturb(g, 1000);
            std::vector<hjlab::effective::ThetaSample> samples;
            for (double lam : ec_lambdas) {
                const auto pl = hjlab::corrector::solve_branch(ef.sample, g, ec_beta, lam,
                                                               hjlab::gclass::BranchSide::Plus);
                const auto mi = hjlab::corrector::solve_branch(ef.sample, g, ec_beta, lam,
                                                               hjlab::gclass::BranchSide::Minus);
                hjlab::effective::ThetaSample ts;
                ts.lambda = lam;
                ts.theta_plus = hjlab::effective::theta_of_lambda(pl);
                ts.theta_minus = hjlab::effective::theta_of_lambda(mi);
                samples.push_back(ts);
            }
            const auto curve = hjlab::effective::build_curve(samples, ec_beta, red.relabel);
            hjlab::effective::write_curve(curve, ec_out, ec_out + ".json");
            std::cout << "flat interval [" << curve.flat_lo << ", " << curve.flat_hi << "]\n";
        } else if (*prun) {
            const auto ef = hjlab::env::read_env(pr_env);
            const auto red = hjlab::gclass::reduce(load_g(pr_g));
            auto g = red.g_tilde;
            if (!g.in_sqc) g = hjlab::gclass::perturb(g, 1000);
            hjlab::pde::SchemeConfig cfg;
            cfg.dx = ef.sample.grid.dx;
            cfg.cfl = pr_cfl;
            cfg.t_final = pr_T;
            cfg.flux = hjlab::pde::flux_from_name(pr_flux);
            cfg.boundary = pr_mode == "large-domain" ? hjlab::pde::Boundary::LargeDomain
                                                     : hjlab::pde::Boundary::PeriodicPerturbation;
            const auto tr = hjlab::pde::run(ef.sample, g, pr_beta, pr_theta, cfg);
            hjlab::pde::write_trace(tr, pr_out, pr_out + ".json");
            const auto est = hjlab::pde::estimate_slope(tr, cfg.tail_fraction);
            std::cout << "fitted slope " << est.fitted << " in [" << est.h_lower << ", "
                      << est.h_upper << "]\n";
        } else if (*gluec) {
            const auto ef = hjlab::env::read_env(gc_env);
            const auto red = hjlab::gclass::reduce(load_g(gc_g));
            auto g = red.g_tilde;
            if (!g.in_sqc) g = hjlab::gclass::perturb(g, 1000);
            const auto pm = hjlab::corrector::solve_branch(ef.sample, g, gc_beta, gc_beta,
                                                           hjlab::gclass::BranchSide::Minus);
            const auto pp = hjlab::corrector::solve_branch(ef.sample, g, gc_beta, gc_beta,
                                                           hjlab::gclass::BranchSide::Plus);
            const auto res = hjlab::effective::build_glue(ef.sample, g, gc_beta, gc_eps, gc_y0,
                                                          pm, pp);
            if (!res.glue) {
                json j;
                j["ok"] = false;
                j["failure"] = res.failure;
                j["best_gap"] = res.best_gap;
                j["best_window"] = {res.best_window_lo, res.best_window_hi};
                std::ofstream f(gc_out);
                f << j.dump(2) << "\n";
                std::cerr << "no admissible glue window: " << res.failure << "\n";
                return 1;
            }
            hjlab::effective::write_glue(*res.glue, gc_out);
            std::cout << "glue residual max " << res.glue->max_residual << " (bound "
                      << gc_beta + res.glue->k_const * gc_eps << ")\n";
        } else if (*cmp) {
            const auto cfg = hjlab::experiment::load_config(cp_config, cp_sets);
            const auto rep = hjlab::experiment::run_experiment(cfg);
            std::cout << "max cross-route gap " << rep.max_gap << ", flat [" << rep.flat_lo << ", "
                      << rep.flat_hi << "], " << (rep.pass ? "pass" : "fail") << "\n";
            return rep.pass ? 0 : 1;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
