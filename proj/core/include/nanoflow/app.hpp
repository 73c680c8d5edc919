#pragma once

/// @file app.hpp
/// @brief Case drivers behind the `solve` tool: cavity and MMS solves,
/// convergence studies, VTK and report output.

#include "nanoflow/analysis.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace nanoflow {

enum class RunCase { cavity, mms, eoc };
enum class LawsKind { alumina, unit };

std::string_view to_string(RunCase c);

struct RunConfig {
    RunCase run_case = RunCase::cavity;
    int nx = 32;
    int ny = 16;
    int refine = 0;
    int scalar_degree = 2;
    ModelParams params;
    /// The cavity problem has no canonical beta, so it must be supplied.
    bool beta_given = false;
    std::optional<LawsKind> laws;  // default: alumina for the cavity, unit for MMS
    NewtonConfig newton;
    int threads = 1;

    /// Cavity: solve first at ramp_start_Re, then ramp to params in this many stages.
    int continuation_steps = 0;
    double ramp_start_Re = 100.0;
    /// Cavity: also solve with thermophoresis switched off and compare.
    bool compare_thermophoresis = false;

    /// Convergence study.
    int levels = 4;
    ReferenceKind eoc_reference = ReferenceKind::fine_grid;
    int reference_extra_levels = 1;
    MmsFlavor mms_flavor = MmsFlavor::trigonometric;

    std::filesystem::path out_dir = ".";
    bool emit_vtk = true;
    bool emit_csv = true;
    bool emit_report = true;
    bool vtk_refined = false;

    /// Throws std::invalid_argument for values outside their documented ranges.
    void validate() const;
    [[nodiscard]] CoefficientLaws resolved_laws() const;
    /// Parameters actually used: constants-one mode for MMS-based runs.
    [[nodiscard]] ModelParams resolved_params() const;
    [[nodiscard]] bool uses_mms() const;
};

/// Scalar diagnostics of a solved cavity state.
struct CavityMetrics {
    double top_wall_max_speed = 0.0;
    double max_speed = 0.0;
    double phi_min = 0.0;
    double phi_max = 0.0;
    Vec2 phi_argmin = Vec2::Zero();
    Vec2 phi_argmax = Vec2::Zero();
    double phi_mean = 0.0;
    double pressure_integral = 0.0;
    /// max over pressure basis functions q of |int q div u_h|
    double divergence_residual = 0.0;
    double velocity_H1 = 0.0;
};

CavityMetrics cavity_metrics(const Assembler& assembler, const Eigen::VectorXd& x);

/// Legacy ASCII VTK with SCALARS phi, T, p, speed and VECTORS velocity at the
/// mesh vertices. With `refined`, the output mesh is the once-refined mesh and
/// P2 values at edge midpoints are written exactly. Throws std::runtime_error
/// when the file cannot be written.
void write_vtk(const std::filesystem::path& path, const Discretization& disc, const Eigen::VectorXd& x,
               bool refined = false);

/// 64-bit FNV-1a of a file's bytes.
std::uint64_t file_hash(const std::filesystem::path& path);

/// Ordered key = value lines.
class Report {
public:
    void set(std::string key, std::string value);
    void set_number(std::string key, double value);  // %.10g
    void set_int(std::string key, long long value);
    void set_flag(std::string key, bool value);
    void add_solve(const std::string& prefix, const SolveReport& report);
    void add_params(const ModelParams& params);
    [[nodiscard]] const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
    [[nodiscard]] std::optional<std::string> get(const std::string& key) const;
    void write(const std::filesystem::path& path) const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

struct RunOutcome {
    int exit_code = 0;
    Report report;
    std::vector<std::filesystem::path> files;
};

RunOutcome run_cavity(const RunConfig& config, std::ostream* log = nullptr);
RunOutcome run_mms(const RunConfig& config, std::ostream* log = nullptr);
RunOutcome run_eoc(const RunConfig& config, std::ostream* log = nullptr);
RunOutcome run(const RunConfig& config, std::ostream* log = nullptr);

/// Solves the cavity for `params`, optionally via a Reynolds ramp starting at
/// `ramp_start_Re`. Returns the final (or last converged) state.
struct CavitySolve {
    std::shared_ptr<const Discretization> disc;
    std::unique_ptr<Assembler> assembler;
    Eigen::VectorXd state;
    SolveReport report;
    ModelParams reached;
    bool converged = false;
};
CavitySolve solve_cavity(std::shared_ptr<const Mesh> mesh, int scalar_degree, const ModelParams& params,
                         const CoefficientLaws& laws, const NewtonConfig& newton, int continuation_steps = 0,
                         double ramp_start_Re = 100.0, AssemblyOptions options = {});

/// The cavity domain (0,2) x (0,1) with nx x ny cells refined `refine` times.
std::shared_ptr<const Mesh> cavity_mesh(int nx, int ny, int refine = 0);

}  // namespace nanoflow
