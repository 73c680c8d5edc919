// solve: command-line driver for the cavity, MMS and convergence-study cases.

#include "nanoflow/app.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <thread>

namespace {

template <class T>
CLI::Option* env_option(CLI::App& app, const std::string& flag, T& target, const std::string& help,
                        const std::string& env) {
    return app.add_option(flag, target, help)->envname("NANOFLOW_" + env);
}

}  // namespace

int main(int argc, char** argv) {
    using namespace nanoflow;
    CLI::App app{"Stationary nanofluid solver (concentration, temperature, velocity, pressure)"};
    app.name("solve");

    RunConfig cfg;
    ModelParams& p = cfg.params;
    p.Re = 100.0;
    p.Pr = 1.0;
    p.Sc = 1.0;
    p.Sc_f = 1e4;
    p.Le = 1e4;
    p.N_BT = 0.586;
    p.T0 = 1.0;
    p.phi_m = 0.1;
    cfg.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

    std::string case_name;
    std::string param_file;
    std::optional<double> Re, Pr, Sc, Scf, Le, Nbt, T0, beta, phi_m, cutoff_R;
    std::string eoc_reference = "fine";
    std::string mms_flavor = "trig";
    std::string laws;
    bool no_thermo = false, sequential = false, quiet = false, no_vtk = false;
    std::string out_dir = ".";

    const std::map<std::string, RunCase> cases{{"cavity", RunCase::cavity}, {"mms", RunCase::mms}, {"eoc", RunCase::eoc}};
    env_option(app, "--case", case_name, "cavity | mms | eoc", "CASE")
        ->check(CLI::IsMember({"cavity", "mms", "eoc"}));
    env_option(app, "--nx", cfg.nx, "cells in x of the initial grid", "NX");
    env_option(app, "--ny", cfg.ny, "cells in y of the initial grid", "NY");
    env_option(app, "--refine", cfg.refine, "uniform refinements of the initial grid", "REFINE");
    env_option(app, "--param-file", param_file, "key = value parameter file", "PARAM_FILE")->check(CLI::ExistingFile);
    env_option(app, "--Re", Re, "Reynolds number", "RE");
    env_option(app, "--Pr", Pr, "Prandtl number", "PR");
    env_option(app, "--Sc", Sc, "Schmidt number", "SC");
    env_option(app, "--Scf", Scf, "Schmidt number of the momentum flux", "SCF");
    env_option(app, "--Le", Le, "Lewis number (nonzero)", "LE");
    env_option(app, "--Nbt", Nbt, "Brownian / thermophoretic diffusivity ratio", "NBT");
    env_option(app, "--T0", T0, "ambient temperature", "T0");
    env_option(app, "--beta", beta, "buoyancy coefficient (required for the cavity)", "BETA");
    env_option(app, "--phi-m", phi_m, "mean concentration", "PHI_M");
    env_option(app, "--cutoff-R", cutoff_R, "cut-off radius for the thermophoretic flux", "CUTOFF_R");
    app.add_flag("--no-thermophoresis", no_thermo, "switch the thermophoretic coupling off")
        ->envname("NANOFLOW_NO_THERMOPHORESIS");
    env_option(app, "--newton-tol", cfg.newton.abs_tol, "absolute Newton tolerance", "NEWTON_TOL");
    env_option(app, "--max-newton", cfg.newton.max_iters, "maximum Newton iterations", "MAX_NEWTON");
    env_option(app, "--out", out_dir, "output directory", "OUT");
    app.add_flag("--sequential", sequential, "single-threaded, bitwise reproducible assembly")
        ->envname("NANOFLOW_SEQUENTIAL");
    env_option(app, "--threads", cfg.threads, "assembly threads", "THREADS");
    env_option(app, "--scalar-degree", cfg.scalar_degree, "Lagrange degree of phi and T (1 or 2)", "SCALAR_DEGREE");
    env_option(app, "--levels", cfg.levels, "levels of the convergence study", "LEVELS");
    env_option(app, "--eoc-reference", eoc_reference, "fine (cavity, fine-grid reference) | exact (MMS)",
               "EOC_REFERENCE")
        ->check(CLI::IsMember({"fine", "exact"}));
    env_option(app, "--reference-levels", cfg.reference_extra_levels,
               "refinements of the finest study mesh for the fine-grid reference", "REFERENCE_LEVELS");
    env_option(app, "--mms", mms_flavor, "manufactured solution: trig | poly", "MMS")
        ->check(CLI::IsMember({"trig", "poly"}));
    env_option(app, "--laws", laws, "coefficient laws: alumina | unit", "LAWS")->check(CLI::IsMember({"alumina", "unit"}));
    env_option(app, "--continuation-steps", cfg.continuation_steps, "Reynolds ramp stages (cavity)",
               "CONTINUATION_STEPS");
    env_option(app, "--ramp-start-Re", cfg.ramp_start_Re, "first Reynolds number of the ramp", "RAMP_START_RE");
    app.add_flag("--compare-thermophoresis", cfg.compare_thermophoresis,
                 "cavity: also solve without thermophoresis and compare");
    app.add_flag("--vtk-refined", cfg.vtk_refined, "write VTK on the once-refined mesh (exact P2 midpoints)");
    app.add_flag("--no-vtk", no_vtk, "skip fields.vtk");
    app.add_flag("--quiet", quiet, "no Newton log on stderr");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!param_file.empty()) {
            std::ifstream is(param_file);
            const ParamFile pf = read_param_file(is, p);
            p = pf.params;
            for (const auto& k : pf.keys_set) {
                if (k == "beta") cfg.beta_given = true;
            }
            if (pf.case_name && case_name.empty()) case_name = *pf.case_name;
        }
        if (case_name.empty()) case_name = "cavity";
        const auto it = cases.find(case_name);
        if (it == cases.end()) throw std::invalid_argument("unknown case '" + case_name + "'");
        cfg.run_case = it->second;

        auto apply = [](const std::optional<double>& v, double& dst) {
            if (v) dst = *v;
        };
        apply(Re, p.Re);
        apply(Pr, p.Pr);
        apply(Sc, p.Sc);
        apply(Scf, p.Sc_f);
        apply(Le, p.Le);
        apply(Nbt, p.N_BT);
        apply(T0, p.T0);
        apply(beta, p.beta);
        apply(phi_m, p.phi_m);
        if (beta) cfg.beta_given = true;
        if (cutoff_R) p.cutoff_radius = *cutoff_R;
        if (no_thermo) p.thermophoresis = false;
        if (sequential) cfg.threads = 1;
        if (!laws.empty()) cfg.laws = laws == "alumina" ? LawsKind::alumina : LawsKind::unit;
        cfg.eoc_reference = eoc_reference == "exact" ? ReferenceKind::exact : ReferenceKind::fine_grid;
        cfg.mms_flavor = mms_flavor == "poly" ? MmsFlavor::polynomial : MmsFlavor::trigonometric;
        cfg.emit_vtk = !no_vtk;
        cfg.out_dir = out_dir;
        cfg.validate();
    } catch (const std::exception& e) {
        std::cerr << "solve: " << e.what() << '\n';
        return 2;
    }

    try {
        const RunOutcome out = run(cfg, quiet ? nullptr : &std::cerr);
        for (const auto& f : out.files) std::cout << f.string() << '\n';
        if (cfg.emit_report) std::cout << (cfg.out_dir / "report.txt").string() << '\n';
        if (out.exit_code != 0) std::cerr << "solve: run did not converge; see report.txt\n";
        return out.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "solve: " << e.what() << '\n';
        return 1;
    }
}
