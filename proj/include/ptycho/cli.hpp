#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ptycho/analysis.hpp"
#include "ptycho/config.hpp"
#include "ptycho/experiments.hpp"
#include "ptycho/io.hpp"

namespace ptycho::cli {

namespace fs = std::filesystem;

struct Options {
    std::string config_path;
    std::string out_dir;     ///< overrides config.out_dir when set
    int jobs = 0;            ///< 0 = PTYCHO_JOBS env or 1
    bool dump = false;
    std::optional<std::uint64_t> master_seed;
    std::vector<std::string> overrides;
    std::string gamma_method = "auto";
};

inline std::string config_keys_help() {
    return "Config file keys (JSON, version 1; unknown keys are rejected):\n"
           "  version               must be 1\n"
           "  object.n              object side length, >= 8 (required)\n"
           "  object.angle_range    phase range in radians, [0, 2pi] (default 2pi)\n"
           "  object.seed           phase RNG seed (default 0)\n"
           "  mask.kind             iid | correlated | fresnel | plain (required)\n"
           "  mask.m                mask side; must equal 2n/q (default 2n/q)\n"
           "  mask.ell              correlation length, 1 <= ell <= m (default 1)\n"
           "  mask.rho              Fresnel parameter (default 0)\n"
           "  mask.beta             Fresnel center [b1, b2] (default [0, 0])\n"
           "  mask.seed             mask RNG seed (default 0)\n"
           "  scheme.n              must equal object.n (required)\n"
           "  scheme.q              shifts per direction; 2n/q even (required)\n"
           "  scheme.overlap        half | three_quarter (default half)\n"
           "  noise.nsr_target      target realized NSR, >= 0 (optional)\n"
           "  noise.seed            noise RNG seed (default 0)\n"
           "  solver.dr_iters       DR iterations (default 300)\n"
           "  solver.ap_iters       AP iterations (default 100)\n"
           "  solver.init_seed      initialization seed (default 0)\n"
           "  solver.stop_rr        early-stop residual threshold (optional)\n"
           "  sweep.parameter       rho | q | nsr | angle_range (optional)\n"
           "  sweep.values          nonempty value list\n"
           "  sweep.repeats         noise repeats per point (default 1)\n"
           "  out_dir               output directory (default \"out\")\n"
           "Overrides: trailing key=value args with dotted paths, e.g. scheme.q=4.";
}

namespace detail {

inline ExperimentConfig load_config(const Options& opt, json* resolved) {
    std::ifstream is(opt.config_path);
    if (!is) throw ValidationError("cannot open config file \"" + opt.config_path + "\"");
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ValidationError("config parse error: " + std::string(e.what()));
    }
    apply_overrides(j, opt.overrides);
    if (opt.master_seed) {
        // One master seed fans out to decorrelated per-module streams.
        j["object"]["seed"] = mix_seed(*opt.master_seed, 1);
        j["mask"]["seed"] = mix_seed(*opt.master_seed, 2);
        if (j.contains("noise")) j["noise"]["seed"] = mix_seed(*opt.master_seed, 3);
        j["solver"]["init_seed"] = mix_seed(*opt.master_seed, 4);
    }
    ExperimentConfig cfg = parse_config(j);
    if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
    if (resolved) *resolved = to_json(cfg);
    return cfg;
}

inline void write_json(const fs::path& path, const json& j) {
    atomic_write(path, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

inline void write_resolved_config(const ExperimentConfig& cfg) {
    write_json(fs::path(cfg.out_dir) / "config.json", to_json(cfg));
}

inline void require_sweep(const ExperimentConfig& cfg, SweepParam param) {
    if (!cfg.sweep || cfg.sweep->parameter != param)
        throw ValidationError("field \"sweep.parameter\" must be \"" + to_string(param) +
                              "\" for this subcommand");
}

inline MeasurementOperator operator_from(const ExperimentConfig& cfg, int jobs,
                                         const ComplexImage& mask) {
    return make_operator(build_scheme(cfg.scheme.n, cfg.scheme.q, cfg.scheme.overlap),
                         mask, jobs);
}

inline int cmd_simulate(const ExperimentConfig& cfg, const Options& opt, int jobs) {
    ComplexImage f = make_rpp(cfg.object);
    ComplexImage mask = make_mask(cfg.mask);
    MeasurementOperator op = operator_from(cfg, jobs, mask);
    DataStack b = measure(op, f, cfg.noise);
    fs::path dir(cfg.out_dir);
    write_resolved_config(cfg);
    write_data_stack(dir / "data.cptystk", b);
    if (opt.dump) {
        write_complex_image(dir / "object.cpty", f);
        write_complex_image(dir / "mask.cpty", mask);
    }
    std::cout << "wrote " << (dir / "data.cptystk").string() << " (" << b.blocks.size()
              << " blocks)\n";
    return 0;
}

inline int cmd_reconstruct(const ExperimentConfig& cfg, const Options& opt, int jobs) {
    PipelineResult res = run_pipeline(cfg, jobs);
    fs::path dir(cfg.out_dir);
    write_resolved_config(cfg);
    write_trace_csv(dir / "trace.csv", res.trace);
    json metrics{{"final_re", res.re},
                 {"final_rr", res.rr},
                 {"iterations", res.trace.size()},
                 {"norm_b", norm(res.b)}};
    write_json(dir / "metrics.json", metrics);
    if (opt.dump) {
        write_complex_image(dir / "object.cpty", res.f);
        write_complex_image(dir / "mask.cpty", res.mask);
        write_complex_image(dir / "recon.cpty", res.f_hat);
    }
    std::cout << "final RE " << res.re << ", RR " << res.rr << "\n";
    return 0;
}

inline json to_json(const SpectralReport& rep) {
    return json{{"gamma", rep.gamma},
                {"sigma", rep.sigma},
                {"method", rep.method == SpectralMethod::DenseSVD ? "dense_svd"
                                                                  : "power_iteration"},
                {"residual", rep.residual}};
}

inline int cmd_gamma(const ExperimentConfig& cfg, const Options& opt, int jobs) {
    ComplexImage f = make_rpp(cfg.object);
    ComplexImage mask = make_mask(cfg.mask);
    MeasurementOperator op = operator_from(cfg, jobs, mask);
    bool dense_ok = (cfg.scheme.overlap == Overlap::Half && cfg.scheme.n <= 32) ||
                    (cfg.scheme.overlap == Overlap::ThreeQuarter && cfg.scheme.n <= 16);
    SpectralReport rep;
    if (opt.gamma_method == "dense" || (opt.gamma_method == "auto" && dense_ok))
        rep = compute_gamma_dense(op, f);
    else
        rep = compute_gamma_power(op, f);
    write_resolved_config(cfg);
    write_json(fs::path(cfg.out_dir) / "gamma.json", to_json(rep));
    std::cout << "gamma " << rep.gamma << " (" << (rep.method == SpectralMethod::DenseSVD
                                                       ? "dense"
                                                       : "power")
              << ", residual " << rep.residual << ")\n";
    return 0;
}

inline int cmd_bound_check(const ExperimentConfig& cfg, const Options&, int jobs) {
    ComplexImage f = make_rpp(cfg.object);
    ComplexImage mask = make_mask(cfg.mask);
    MeasurementOperator op = operator_from(cfg, jobs, mask);
    BoundCertificate cert = certify_rate_bound(op, f, cfg.scheme.q);
    json j{{"q", cert.q},
           {"degenerate", cert.degenerate},
           {"c_f", cert.c_f},
           {"root_c", cert.root_c},
           {"a", cert.a},
           {"lhs", cert.lhs},
           {"rhs", cert.rhs},
           {"gamma_lower", cert.gamma_lower}};
    bool dense_ok = (cfg.scheme.overlap == Overlap::Half && cfg.scheme.n <= 32) ||
                    (cfg.scheme.overlap == Overlap::ThreeQuarter && cfg.scheme.n <= 16);
    if (dense_ok && !cert.degenerate) {
        SpectralReport rep = compute_gamma_dense(op, f);
        j["gamma_dense"] = rep.gamma;
    }
    write_resolved_config(cfg);
    write_json(fs::path(cfg.out_dir) / "bound.json", j);
    std::cout << "gamma_lower " << cert.gamma_lower
              << (cert.degenerate ? " (degenerate)" : "") << "\n";
    return 0;
}

inline int cmd_twin_check(const ExperimentConfig& cfg, const Options&, int jobs) {
    if (cfg.scheme.q != 2)
        throw ValidationError("field \"scheme.q\" must be 2 for twin-check");
    if (cfg.mask.kind != MaskKind::Fresnel)
        throw ValidationError("field \"mask.kind\" must be \"fresnel\" for twin-check");
    if (std::abs(cfg.mask.rho - std::round(cfg.mask.rho)) > 1e-9)
        throw ValidationError(
            "field \"mask.rho\" must be an integer for twin-check (the quadrant symmetry "
            "of conj(Q mu) .* mu requires rho in Z)");
    ComplexImage f = make_rpp(cfg.object);
    ComplexImage mask = make_mask(cfg.mask);
    MeasurementOperator op = operator_from(cfg, jobs, mask);
    TwinSymmetry sym = fresnel_h_symmetry(mask, cfg.mask.rho);
    ComplexImage twin = twin_image(f, mask, cfg.mask.rho);
    DataStack b_f = measure(op, f);
    DataStack b_twin = measure(op, twin);
    double acc = 0.0;
    for (std::size_t t = 0; t < b_f.blocks.size(); ++t)
        for (std::size_t i = 0; i < b_f.blocks[t].size(); ++i) {
            double d = b_f.blocks[t][i].real() - b_twin.blocks[t][i].real();
            acc += d * d;
        }
    double data_reldiff = std::sqrt(acc) / norm(b_f);
    double re = relative_error(f, twin);
    json j{{"twin_sign", sym.twin_sign},
           {"symmetry_residual", sym.symmetry_residual},
           {"data_reldiff", data_reldiff},
           {"re_object_vs_twin", re}};
    write_resolved_config(cfg);
    write_json(fs::path(cfg.out_dir) / "twin.json", j);
    std::cout << "twin data reldiff " << data_reldiff << ", object RE " << re << "\n";
    return 0;
}

inline int cmd_rho_sweep(const ExperimentConfig& cfg, const Options&, int jobs) {
    auto rows = run_rho_sweep(cfg, jobs);
    std::vector<std::vector<std::string>> cells;
    cells.reserve(rows.size());
    for (const auto& r : rows)
        cells.push_back({ptycho::detail::f64_to_string(r.rho),
                         ptycho::detail::f64_to_string(r.re),
                         ptycho::detail::f64_to_string(r.rr)});
    write_resolved_config(cfg);
    write_csv(fs::path(cfg.out_dir) / "rho_sweep.csv", "rho,re,rr", cells);
    std::cout << "wrote rho_sweep.csv (" << rows.size() << " points)\n";
    return 0;
}

inline int cmd_q_sweep(const ExperimentConfig& cfg, const Options&, int jobs) {
    auto rows = run_q_sweep(cfg, jobs);
    std::vector<std::vector<std::string>> cells;
    cells.reserve(rows.size());
    for (const auto& r : rows)
        cells.push_back({std::to_string(r.q), std::to_string(r.iter),
                         ptycho::detail::f64_to_string(r.re)});
    write_resolved_config(cfg);
    write_csv(fs::path(cfg.out_dir) / "q_sweep.csv", "q,iter,re", cells);
    std::cout << "wrote q_sweep.csv (" << rows.size() << " rows)\n";
    return 0;
}

inline int cmd_noise_sweep(const ExperimentConfig& cfg, const Options&, int jobs) {
    auto rows = run_nsr_sweep(cfg, jobs);
    std::vector<std::vector<std::string>> cells;
    cells.reserve(rows.size());
    for (const auto& r : rows)
        cells.push_back({ptycho::detail::f64_to_string(r.nsr),
                         ptycho::detail::f64_to_string(r.re)});
    write_resolved_config(cfg);
    write_csv(fs::path(cfg.out_dir) / "nsr_sweep.csv", "nsr,re", cells);
    std::cout << "wrote nsr_sweep.csv (" << rows.size() << " rows)\n";
    return 0;
}

}  // namespace detail

/// Entry point shared by the binary and the tests. Exit codes: 0 success,
/// 1 validation failure (message names the field), 2 numerical failure.
inline int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Coded-aperture ptychography: simulation, reconstruction and "
                 "spectral diagnostics"};
    app.require_subcommand(1);
    app.footer(config_keys_help());

    Options opt;
    std::string subcommand;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config_path, "JSON config file")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", opt.out_dir, "output directory (overrides out_dir)");
        sub->add_option("--jobs", opt.jobs,
                        "worker threads (default: PTYCHO_JOBS env or 1)");
        sub->add_flag("--dump", opt.dump, "also write CPTY0001 image dumps");
        sub->add_option("--seed", opt.master_seed,
                        "master seed; derives object/mask/noise/solver seeds");
        sub->add_option("overrides", opt.overrides,
                        "config overrides as dotted key=value paths");
        sub->footer(config_keys_help());
        sub->parse_complete_callback([&, sub] { subcommand = sub->get_name(); });
        return sub;
    };

    add_common(app.add_subcommand("simulate", "synthesize masked diffraction data"));
    add_common(app.add_subcommand("reconstruct", "run the DR-initialized AP pipeline"));
    auto* gamma_sub =
        add_common(app.add_subcommand("gamma", "compute the spectral gap gamma"));
    gamma_sub->add_option("--method", opt.gamma_method, "auto | dense | power")
        ->check(CLI::IsMember({"auto", "dense", "power"}));
    add_common(app.add_subcommand("bound-check", "rate-bound certificate (Prop. gap)"));
    add_common(app.add_subcommand("twin-check", "Fresnel twin-image data equality"));
    add_common(app.add_subcommand("rho-sweep", "RE/RR vs Fresnel rho"));
    add_common(app.add_subcommand("q-sweep", "RE traces vs q"));
    add_common(app.add_subcommand("noise-sweep", "RE vs target NSR"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        ExperimentConfig cfg = detail::load_config(opt, nullptr);
        int jobs = resolve_jobs(opt.jobs);
        if (subcommand == "simulate") return detail::cmd_simulate(cfg, opt, jobs);
        if (subcommand == "reconstruct") return detail::cmd_reconstruct(cfg, opt, jobs);
        if (subcommand == "gamma") return detail::cmd_gamma(cfg, opt, jobs);
        if (subcommand == "bound-check") return detail::cmd_bound_check(cfg, opt, jobs);
        if (subcommand == "twin-check") return detail::cmd_twin_check(cfg, opt, jobs);
        if (subcommand == "rho-sweep") {
            detail::require_sweep(cfg, SweepParam::Rho);
            return detail::cmd_rho_sweep(cfg, opt, jobs);
        }
        if (subcommand == "q-sweep") {
            detail::require_sweep(cfg, SweepParam::Q);
            return detail::cmd_q_sweep(cfg, opt, jobs);
        }
        if (subcommand == "noise-sweep") {
            detail::require_sweep(cfg, SweepParam::Nsr);
            return detail::cmd_noise_sweep(cfg, opt, jobs);
        }
        std::cerr << "error: unknown subcommand\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const ParameterError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const DimensionError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace ptycho::cli
