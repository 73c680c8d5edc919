#include "nanoflow/app.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace nanoflow {

std::string_view to_string(RunCase c) {
    switch (c) {
        case RunCase::cavity: return "cavity";
        case RunCase::mms: return "mms";
        case RunCase::eoc: return "eoc";
    }
    return "unknown";
}

bool RunConfig::uses_mms() const {
    return run_case == RunCase::mms || (run_case == RunCase::eoc && eoc_reference == ReferenceKind::exact);
}

void RunConfig::validate() const {
    if (nx < 1 || ny < 1) throw std::invalid_argument("nx and ny must be positive");
    if (refine < 0) throw std::invalid_argument("refine must be >= 0");
    if (scalar_degree != 1 && scalar_degree != 2) throw std::invalid_argument("scalar degree must be 1 or 2");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
    if (continuation_steps < 0) throw std::invalid_argument("continuation steps must be >= 0");
    if (!(ramp_start_Re > 0.0)) throw std::invalid_argument("ramp start Re must be positive");
    if (run_case == RunCase::eoc && levels < 2) throw std::invalid_argument("levels ≥ 2 required");
    if (reference_extra_levels < 1) throw std::invalid_argument("reference levels must be >= 1");
    if (!uses_mms() && !beta_given) throw std::invalid_argument("the cavity case requires an explicit beta");
    resolved_params().validate();
    newton.validate();
}

CoefficientLaws RunConfig::resolved_laws() const {
    const LawsKind kind = laws.value_or(uses_mms() ? LawsKind::unit : LawsKind::alumina);
    return kind == LawsKind::alumina ? CoefficientLaws::alumina() : CoefficientLaws::unit();
}

ModelParams RunConfig::resolved_params() const {
    ModelParams p = params;
    if (uses_mms()) p.constants_one = true;
    return p;
}

std::shared_ptr<const Mesh> cavity_mesh(int nx, int ny, int refine) {
    auto mesh = std::make_shared<const Mesh>(build_rectangle(2.0, 1.0, nx, ny));
    for (int i = 0; i < refine; ++i) mesh = std::make_shared<const Mesh>(refine_uniform(*mesh));
    return mesh;
}

namespace {

std::shared_ptr<const Mesh> unit_square_mesh(int nx, int ny, int refine) {
    auto mesh = std::make_shared<const Mesh>(build_rectangle(1.0, 1.0, nx, ny));
    for (int i = 0; i < refine; ++i) mesh = std::make_shared<const Mesh>(refine_uniform(*mesh));
    return mesh;
}

std::string format(const char* fmt, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

}  // namespace

CavitySolve solve_cavity(std::shared_ptr<const Mesh> mesh, int scalar_degree, const ModelParams& params,
                         const CoefficientLaws& laws, const NewtonConfig& newton, int continuation_steps,
                         double ramp_start_Re, AssemblyOptions options) {
    CavitySolve out;
    out.disc = std::make_shared<const Discretization>(std::move(mesh), scalar_degree, true);
    ModelParams start = params;
    if (continuation_steps > 0) start.Re = std::min(ramp_start_Re, params.Re);
    out.assembler = std::make_unique<Assembler>(out.disc, start, laws, cavity_case(), options);
    SolveResult first = solve_coupled(*out.assembler, out.assembler->initial_state(), newton);
    out.state = std::move(first.state);
    out.report = std::move(first.report);
    out.reached = start;
    out.converged = out.report.converged;
    if (!out.converged || continuation_steps == 0) return out;

    ContinuationResult cont = continuation_solve(*out.assembler, out.state, params, continuation_steps, newton);
    out.state = std::move(cont.state);
    out.report = std::move(cont.report);
    out.reached = cont.reached;
    out.converged = cont.converged();
    return out;
}

CavityMetrics cavity_metrics(const Assembler& as, const Eigen::VectorXd& x) {
    const Discretization& d = as.discretization();
    const Layout& L = d.layout;
    const Space& V = d.flow.velocity;
    const int nv = V.scalar_dof_count();
    CavityMetrics m;

    auto speed = [&](int i) { return std::hypot(x[L.u + i], x[L.u + nv + i]); };
    for (int i = 0; i < nv; ++i) m.max_speed = std::max(m.max_speed, speed(i));
    const std::array<BoundaryTag, 1> top{BoundaryTag::top};
    for (int i : V.boundary_dofs(top)) m.top_wall_max_speed = std::max(m.top_wall_max_speed, speed(i));

    const auto phi = x.segment(L.phi, L.n_scalar);
    Eigen::Index imin = 0, imax = 0;
    m.phi_min = phi.minCoeff(&imin);
    m.phi_max = phi.maxCoeff(&imax);
    m.phi_argmin = d.scalar.dof_coord(static_cast<int>(imin));
    m.phi_argmax = d.scalar.dof_coord(static_cast<int>(imax));
    m.phi_mean = as.scalar_mass().dot(phi) / as.domain_area();
    m.pressure_integral = as.pressure_mass().dot(x.segment(L.p, L.n_pressure));

    const SparseSystem raw = as.assemble_raw(x, false);
    m.divergence_residual = raw.rhs.segment(L.p, L.n_pressure).lpNorm<Eigen::Infinity>();
    const auto u = x.segment(L.u, L.n_velocity);
    m.velocity_H1 = norm_W1p(V, std::span<const double>(u.data(), static_cast<std::size_t>(u.size())), 2);
    return m;
}

void write_vtk(const std::filesystem::path& path, const Discretization& disc, const Eigen::VectorXd& x,
               bool refined) {
    const Layout& L = disc.layout;
    if (x.size() != L.size) throw std::invalid_argument("write_vtk: state size does not match the layout");
    const Mesh& coarse = *disc.mesh;
    std::optional<Mesh> fine;
    if (refined) fine = refine_uniform(coarse);
    const Mesh& out = refined ? *fine : coarse;
    const int nvert = coarse.num_vertices();
    const int npts = out.num_vertices();
    const int nvel = disc.flow.velocity.scalar_dof_count();

    // Point values. Refined points V + e are edge midpoints of the coarse mesh.
    auto scalar_at = [&](const Space& s, int off, int pt) {
        if (pt < nvert) return x[off + pt];
        if (s.degree() == 2) return x[off + pt];
        const auto& e = coarse.edge(pt - nvert);
        return 0.5 * (x[off + e.v[0]] + x[off + e.v[1]]);
    };

    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os.precision(17);
    os << "# vtk DataFile Version 3.0\nnanoflow fields\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << npts << " double\n";
    for (int i = 0; i < npts; ++i) os << out.vertex(i).x() << ' ' << out.vertex(i).y() << " 0\n";
    os << "CELLS " << out.num_triangles() << ' ' << 4 * out.num_triangles() << '\n';
    for (int t = 0; t < out.num_triangles(); ++t) {
        const auto& tri = out.triangle(t);
        os << "3 " << tri[0] << ' ' << tri[1] << ' ' << tri[2] << '\n';
    }
    os << "CELL_TYPES " << out.num_triangles() << '\n';
    for (int t = 0; t < out.num_triangles(); ++t) os << "5\n";
    os << "POINT_DATA " << npts << '\n';
    auto scalars = [&](const char* name, auto&& value) {
        os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
        for (int i = 0; i < npts; ++i) os << value(i) << '\n';
    };
    scalars("phi", [&](int i) { return scalar_at(disc.scalar, L.phi, i); });
    scalars("T", [&](int i) { return scalar_at(disc.scalar, L.T, i); });
    scalars("p", [&](int i) { return scalar_at(disc.flow.pressure, L.p, i); });
    scalars("speed", [&](int i) { return std::hypot(x[L.u + i], x[L.u + nvel + i]); });
    os << "VECTORS velocity double\n";
    for (int i = 0; i < npts; ++i) os << x[L.u + i] << ' ' << x[L.u + nvel + i] << " 0\n";
    os.flush();
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::uint64_t file_hash(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    std::uint64_t h = 14695981039346656037ull;
    char buf[1 << 16];
    while (is.read(buf, sizeof buf) || is.gcount() > 0) {
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h = (h ^ static_cast<unsigned char>(buf[i])) * 1099511628211ull;
        }
    }
    return h;
}

void Report::set(std::string key, std::string value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = std::move(value);
            return;
        }
    }
    entries_.emplace_back(std::move(key), std::move(value));
}

void Report::set_number(std::string key, double value) { set(std::move(key), format("%.10g", value)); }
void Report::set_int(std::string key, long long value) { set(std::move(key), std::to_string(value)); }
void Report::set_flag(std::string key, bool value) { set(std::move(key), value ? "true" : "false"); }

std::optional<std::string> Report::get(const std::string& key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return v;
    }
    return std::nullopt;
}

void Report::add_solve(const std::string& prefix, const SolveReport& r) {
    set_flag(prefix + ".converged", r.converged);
    set_int(prefix + ".iterations", r.iterations);
    std::string hist;
    for (double v : r.residual_history) hist += (hist.empty() ? "" : " ") + format("%.6e", v);
    set(prefix + ".residuals", hist);
    set_number(prefix + ".phi_min", r.phi_min);
    set_number(prefix + ".phi_max", r.phi_max);
    if (!r.message.empty()) set(prefix + ".message", r.message);
}

void Report::add_params(const ModelParams& p) {
    set_number("param.Re", p.Re);
    set_number("param.Pr", p.Pr);
    set_number("param.Sc", p.Sc);
    set_number("param.Scf", p.Sc_f);
    set_number("param.Le", p.Le);
    set_number("param.Nbt", p.N_BT);
    set_number("param.T0", p.T0);
    set_number("param.beta", p.beta);
    set_number("param.phi_m", p.phi_m);
    set("param.cutoff_R", p.cutoff_radius ? format("%.10g", *p.cutoff_radius) : "none");
    set_flag("param.constants_one", p.constants_one);
    set_flag("param.thermophoresis", p.thermophoresis);
    if (p.Le < 0.0) set("warning.negative_Le", "Lewis number is negative; accepted as given");
}

void Report::write(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    for (const auto& [k, v] : entries_) os << k << " = " << v << '\n';
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

namespace {

void start_report(Report& rep, const RunConfig& cfg) {
    rep.set("case", std::string(to_string(cfg.run_case)));
    rep.add_params(cfg.resolved_params());
    rep.set("laws", cfg.laws.value_or(cfg.uses_mms() ? LawsKind::unit : LawsKind::alumina) == LawsKind::alumina
                        ? "alumina"
                        : "unit");
    rep.set_int("mesh.nx", cfg.nx);
    rep.set_int("mesh.ny", cfg.ny);
    rep.set_int("mesh.refine", cfg.refine);
    rep.set_int("scalar_degree", cfg.scalar_degree);
    rep.set_number("newton.abs_tol", cfg.newton.abs_tol);
    rep.set_int("newton.max_iters", cfg.newton.max_iters);
    rep.set("linear_solver", LinearSolver::backend());
}

void add_mesh(Report& rep, const Discretization& d) {
    rep.set_int("mesh.triangles", d.mesh->num_triangles());
    rep.set_int("mesh.vertices", d.mesh->num_vertices());
    rep.set_int("unknowns", d.layout.size);
}

void add_metrics(Report& rep, const std::string& prefix, const CavityMetrics& m) {
    rep.set_number(prefix + ".top_wall_max_speed", m.top_wall_max_speed);
    rep.set_number(prefix + ".max_speed", m.max_speed);
    rep.set_number(prefix + ".phi_min", m.phi_min);
    rep.set_number(prefix + ".phi_max", m.phi_max);
    rep.set(prefix + ".phi_argmin", format("%.6g", m.phi_argmin.x()) + " " + format("%.6g", m.phi_argmin.y()));
    rep.set(prefix + ".phi_argmax", format("%.6g", m.phi_argmax.x()) + " " + format("%.6g", m.phi_argmax.y()));
    rep.set_number(prefix + ".phi_mean", m.phi_mean);
    rep.set_number(prefix + ".pressure_integral", m.pressure_integral);
    rep.set_number(prefix + ".divergence_residual", m.divergence_residual);
}

void finish(RunOutcome& out, const RunConfig& cfg) {
    for (const auto& f : out.files) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(file_hash(f)));
        out.report.set("hash." + f.filename().string(), buf);
    }
    out.report.set_int("exit_code", out.exit_code);
    if (cfg.emit_report) out.report.write(cfg.out_dir / "report.txt");
}

}  // namespace

RunOutcome run_cavity(const RunConfig& cfg, std::ostream* log) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);
    RunOutcome out;
    start_report(out.report, cfg);
    const ModelParams params = cfg.resolved_params();
    const CoefficientLaws laws = cfg.resolved_laws();
    NewtonConfig newton = cfg.newton;
    newton.log = log;
    const AssemblyOptions opts{kDefaultQuadratureOrder, cfg.threads};
    auto mesh = cavity_mesh(cfg.nx, cfg.ny, cfg.refine);

    CavitySolve on = solve_cavity(mesh, cfg.scalar_degree, params, laws, newton, cfg.continuation_steps,
                                  cfg.ramp_start_Re, opts);
    add_mesh(out.report, *on.disc);
    out.report.add_solve("newton", on.report);
    out.report.set_number("reached.Re", on.reached.Re);
    const CavityMetrics m = cavity_metrics(*on.assembler, on.state);
    add_metrics(out.report, "cavity", m);
    out.exit_code = on.converged ? 0 : 1;
    if (cfg.emit_vtk) {
        out.files.push_back(cfg.out_dir / "fields.vtk");
        write_vtk(out.files.back(), *on.disc, on.state, cfg.vtk_refined);
    }

    if (cfg.compare_thermophoresis) {
        ModelParams off = on.reached;
        off.thermophoresis = false;
        CavitySolve ref = solve_cavity(mesh, cfg.scalar_degree, off, laws, newton, cfg.continuation_steps,
                                       cfg.ramp_start_Re, opts);
        out.report.add_solve("newton_off", ref.report);
        const CavityMetrics moff = cavity_metrics(*ref.assembler, ref.state);
        add_metrics(out.report, "cavity_off", moff);
        out.report.set_flag("compare.top_wall_speed_enhanced", m.top_wall_max_speed > moff.top_wall_max_speed);
        if (!ref.converged) out.exit_code = 1;
        if (cfg.emit_vtk) {
            out.files.push_back(cfg.out_dir / "fields_off.vtk");
            write_vtk(out.files.back(), *ref.disc, ref.state, cfg.vtk_refined);
        }
    }
    finish(out, cfg);
    return out;
}

RunOutcome run_mms(const RunConfig& cfg, std::ostream* log) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);
    RunOutcome out;
    start_report(out.report, cfg);
    const ModelParams params = cfg.resolved_params();
    const CoefficientLaws laws = cfg.resolved_laws();
    const MMSCase mms = make_mms(cfg.mms_flavor);
    NewtonConfig newton = cfg.newton;
    newton.log = log;

    auto disc = std::make_shared<const Discretization>(unit_square_mesh(cfg.nx, cfg.ny, cfg.refine),
                                                       cfg.scalar_degree, false);
    Assembler as(disc, params, laws, mms.case_setup(params, laws), {kDefaultQuadratureOrder, cfg.threads});
    const SolveResult r = solve_coupled(as, as.initial_state(), newton);
    add_mesh(out.report, *disc);
    out.report.set("mms.flavor", cfg.mms_flavor == MmsFlavor::trigonometric ? "trigonometric" : "polynomial");
    out.report.add_solve("newton", r.report);
    const ErrorRecord e = measure_errors(*disc, r.state, mms.phi_field(), mms.T_field(), mms.u_field(), mms.p_field());
    for (const auto& [k, v] : e.errors) out.report.set("error." + k, format("%.4e", v));
    out.exit_code = r.report.converged ? 0 : 1;
    if (cfg.emit_vtk) {
        out.files.push_back(cfg.out_dir / "fields.vtk");
        write_vtk(out.files.back(), *disc, r.state, cfg.vtk_refined);
    }
    finish(out, cfg);
    return out;
}

RunOutcome run_eoc(const RunConfig& cfg, std::ostream* log) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);
    RunOutcome out;
    start_report(out.report, cfg);

    StudyConfig sc;
    sc.levels = cfg.levels;
    sc.scalar_degree = cfg.scalar_degree;
    sc.params = cfg.resolved_params();
    sc.laws = cfg.resolved_laws();
    sc.newton = cfg.newton;
    sc.newton.log = log;
    sc.assembly = {kDefaultQuadratureOrder, cfg.threads};
    sc.reference = cfg.eoc_reference;
    sc.reference_extra_levels = cfg.reference_extra_levels;
    sc.log = log;
    if (cfg.eoc_reference == ReferenceKind::exact) {
        const MMSCase mms = make_mms(cfg.mms_flavor);
        sc.coarse = unit_square_mesh(cfg.nx, cfg.ny, cfg.refine);
        sc.setup = mms.case_setup(sc.params, sc.laws);
        sc.exact = mms;
        out.report.set("eoc.reference", "exact");
    } else {
        sc.coarse = cavity_mesh(cfg.nx, cfg.ny, cfg.refine);
        sc.setup = cavity_case();
        out.report.set("eoc.reference", "fine-grid");
        out.report.set_int("eoc.reference_extra_levels", cfg.reference_extra_levels);
    }
    const StudyResult res = eoc_study(sc);
    for (std::size_t i = 0; i < res.reports.size(); ++i) {
        out.report.add_solve("level" + std::to_string(i), res.reports[i]);
    }
    if (res.reference_report) out.report.add_solve("reference", *res.reference_report);
    for (std::size_t i = 0; i < res.records.size(); ++i) {
        const auto& r = res.records[i];
        const std::string pre = "level" + std::to_string(i);
        out.report.set_int(pre + ".nt", r.nt);
        for (const auto& [k, v] : r.errors) {
            out.report.set(pre + ".error." + k, format("%.4e", v));
            const auto it = r.eoc.find(k);
            if (it != r.eoc.end() && it->second) out.report.set(pre + ".eoc." + k, format("%.2f", *it->second));
        }
    }
    out.report.set_flag("eoc.complete", res.complete);
    if (!res.message.empty()) out.report.set("eoc.message", res.message);
    out.exit_code = res.complete ? 0 : 1;
    if (cfg.emit_csv) {
        out.files.push_back(cfg.out_dir / "eoc.csv");
        std::ofstream os(out.files.back());
        if (!os) throw std::runtime_error("cannot open " + out.files.back().string() + " for writing");
        write_eoc_csv(os, res.records);
    }
    finish(out, cfg);
    return out;
}

RunOutcome run(const RunConfig& cfg, std::ostream* log) {
    switch (cfg.run_case) {
        case RunCase::cavity: return run_cavity(cfg, log);
        case RunCase::mms: return run_mms(cfg, log);
        case RunCase::eoc: return run_eoc(cfg, log);
    }
    throw std::invalid_argument("unknown case");
}

}  // namespace nanoflow
