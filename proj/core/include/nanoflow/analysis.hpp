#pragma once

/// @file analysis.hpp
/// @brief Lp / W1p norms, errors against exact or fine-grid reference
/// fields, manufactured solutions and convergence studies.

#include "nanoflow/assembly.hpp"
#include "nanoflow/solver.hpp"

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nanoflow {

/// Value and gradient of a field with up to two components at one point.
/// Row a of `grad` is the gradient of component a.
struct FieldSample {
    Vec2 value = Vec2::Zero();
    Mat2 grad = Mat2::Zero();
};
using ReferenceField = std::function<FieldSample(const Vec2&)>;

struct ErrorNorms {
    double Lp = 0.0;
    double W1p = 0.0;  // (||e||_p^p + ||grad e||_p^p)^(1/p), Euclidean / Frobenius pointwise
};

/// Norms of (u_h - reference) with the element quadrature of the given order.
/// A null reference measures u_h itself. Only p = 2 and p = 6 are supported.
ErrorNorms error_norms(const Space& space, std::span<const double> coeffs, const ReferenceField& reference, int p,
                       int quadrature_order = kDefaultQuadratureOrder);

double norm_Lp(const Space& space, std::span<const double> coeffs, int p);
double norm_W1p(const Space& space, std::span<const double> coeffs, int p);

/// Samples a finite element function at arbitrary points of its mesh.
/// Points outside the mesh raise std::out_of_range.
class FieldProbe {
public:
    FieldProbe(const Space& space, Eigen::VectorXd coeffs);
    [[nodiscard]] FieldSample operator()(const Vec2& x) const;
    [[nodiscard]] ReferenceField as_reference() const;

private:
    const Space* space_;
    Eigen::VectorXd coeffs_;
    std::shared_ptr<const PointLocator> locator_;
};

/// Interpolates a state between discretizations of the same domain (nodal
/// evaluation; exact for nested meshes). Multipliers are copied.
Eigen::VectorXd transfer_state(const Discretization& from, const Eigen::VectorXd& x, const Discretization& to);

/// Value, gradient and Hessian of a scalar function at one point.
struct Jet {
    double v = 0.0;
    Vec2 g = Vec2::Zero();
    Mat2 H = Mat2::Zero();
};
using JetFn = std::function<Jet(const Vec2&)>;

enum class MmsFlavor { trigonometric, polynomial };

/// Manufactured solution on the unit square. The velocity comes from a
/// stream function, so it is exactly divergence free; the pressure has zero
/// mean and phi stays inside (0,1).
struct MMSCase {
    MmsFlavor flavor = MmsFlavor::trigonometric;
    JetFn phi;
    JetFn T;
    JetFn ux;
    JetFn uy;
    JetFn p;

    /// Dirichlet data for phi, T and u on the whole boundary plus the sources
    /// that make the exact fields solve the system for these parameters and
    /// laws. Throws when a cut-off radius is set.
    [[nodiscard]] CaseSetup case_setup(const ModelParams& params, const CoefficientLaws& laws) const;

    [[nodiscard]] ReferenceField phi_field() const;
    [[nodiscard]] ReferenceField T_field() const;
    [[nodiscard]] ReferenceField u_field() const;
    [[nodiscard]] ReferenceField p_field() const;
};

MMSCase make_mms(MmsFlavor flavor);

/// Error keys of an ErrorRecord.
inline constexpr const char* kErrorKeys[] = {"phi_L6", "T_L6", "u_L2", "phi_W16", "T_W16", "u_H1", "p_L2"};

struct ErrorRecord {
    int nt = 0;
    std::map<std::string, double> errors;
    std::map<std::string, std::optional<double>> eoc;
};

/// log(e_coarse / e_fine) / log 2
double eoc(double e_coarse, double e_fine);
void fill_eoc(std::vector<ErrorRecord>& records);

/// Errors of a solved state against reference fields for phi, T, u, p.
ErrorRecord measure_errors(const Discretization& disc, const Eigen::VectorXd& x, const ReferenceField& phi,
                           const ReferenceField& T, const ReferenceField& u, const ReferenceField& p);

enum class ReferenceKind { exact, fine_grid };

struct StudyConfig {
    std::shared_ptr<const Mesh> coarse;
    int levels = 0;
    int scalar_degree = 2;
    ModelParams params;
    CoefficientLaws laws = CoefficientLaws::unit();
    CaseSetup setup;
    NewtonConfig newton;
    AssemblyOptions assembly;
    ReferenceKind reference = ReferenceKind::exact;
    /// Exact fields, required for ReferenceKind::exact.
    std::optional<MMSCase> exact;
    /// Refinements of the finest study mesh used for the fine-grid reference.
    int reference_extra_levels = 2;
    std::ostream* log = nullptr;
    /// Called after every converged solve, including the reference solve.
    std::function<void(const Assembler&, const Eigen::VectorXd&)> on_solve;
};

struct StudyResult {
    std::vector<ErrorRecord> records;
    std::vector<SolveReport> reports;
    std::optional<SolveReport> reference_report;
    bool complete = false;
    std::string message;
};

/// Solves on `levels` uniformly refined meshes and measures errors. Each level
/// starts from the previous solution; the first one from a decoupled warm
/// start. A non-converged solve stops the study and returns the partial table.
StudyResult eoc_study(const StudyConfig& config);

/// Convergence table: nt,phi_L6,phi_eoc,T_L6,T_eoc,u_L2,u_eoc with errors in
/// %.4e and rates in %.2f; rates of the first row are empty.
void write_eoc_csv(std::ostream& os, const std::vector<ErrorRecord>& records);

}  // namespace nanoflow
