#pragma once

/// @file model.hpp
/// @brief Nondimensional nanofluid model: parameters, coefficient laws,
/// particle flux, flux cut-off, and boundary-condition cases.
///
/// The particle flux is
///
///     j = -(grad(phi) + h(phi) / (N_BT * T0) * grad(T)),   h(phi) = phi (1 - phi),
///
/// with a Brownian part and a thermophoretic part that drives particles from
/// hot to cold.

#include "nanoflow/mesh.hpp"
#include "nanoflow/types.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace nanoflow {

/// Polynomial in one variable, c[0] + c[1] s + c[2] s^2 + ...
class Polynomial {
public:
    Polynomial() = default;
    explicit Polynomial(std::vector<double> coeffs) : c_(std::move(coeffs)) {}

    [[nodiscard]] double operator()(double s) const;
    [[nodiscard]] double derivative(double s) const;
    [[nodiscard]] const std::vector<double>& coefficients() const { return c_; }

private:
    std::vector<double> c_;
};

/// Concentration-dependent coefficient laws. The laws are evaluated on the raw
/// discrete concentration; they are global polynomials, so no clamping to
/// [0,1] takes place.
struct CoefficientLaws {
    Polynomial k;    // thermal conductivity
    Polynomial mu;   // viscosity
    Polynomial h;    // thermophoretic mobility phi (1 - phi)
    Polynomial eta;  // 1 + phi, heat capacity factor
    Polynomial rho;  // 1 + phi, density factor

    /// k = mu = 1.
    static CoefficientLaws unit();
    /// mu = 1 + 39.11 phi + 533.9 phi^2, k = 1 + 4.5503 phi (Al2O3 fits).
    static CoefficientLaws alumina();
};

Polynomial standard_mobility();

/// Scalar weights multiplying each term of the weak operator.
struct Prefactors {
    double phi_diffusion = 1.0;  // 1/(Re Sc)
    double thermophoresis = 1.0; // 1/(N_BT T0), zero when switched off
    double heat_diffusion = 1.0; // 1/(Re Pr)
    double heat_flux = 1.0;      // 1/(Re Pr Le), weight of j in the heat equation
    double viscosity = 1.0;      // 1/Re
    double momentum_flux = 1.0;  // 1/(Re Sc_f), weight of j in the momentum equation
    double buoyancy = 1.0;       // beta
};

struct ModelParams {
    double Re = 1.0;
    double Pr = 1.0;
    double Sc = 1.0;
    double Sc_f = 1.0;
    double Le = 1.0;
    double N_BT = 1.0;
    double T0 = 1.0;
    double beta = 1.0;
    Vec2 e_g{0.0, -1.0};
    double phi_m = 0.1;
    std::optional<double> cutoff_radius;
    /// All nondimensional prefactors (including beta) set to one.
    bool constants_one = false;
    /// When false the thermophoretic part of j is dropped.
    bool thermophoresis = true;

    /// Throws std::invalid_argument on out-of-range values.
    void validate() const;
    [[nodiscard]] Prefactors prefactors() const;
};

/// Particle flux j with the standard mobility h(phi) = phi (1 - phi).
Vec2 flux_j(const Vec2& grad_phi, double phi, const Vec2& grad_T, const ModelParams& params);

/// Radial truncation to the ball of radius R.
Vec2 cutoff(const Vec2& y, double R);
/// Jacobian of cutoff. At |y| == R the inner (identity) branch is used.
Mat2 cutoff_jacobian(const Vec2& y, double R);

/// Parses `key = value` lines. Recognized keys: Re, Pr, Sc, Scf, Le, Nbt,
/// T0, beta, phi_m, cutoff_R, case. Blank lines and `#` comments are skipped.
struct ParamFile {
    ModelParams params;
    std::optional<std::string> case_name;
    std::vector<std::string> keys_set;
};
ParamFile read_param_file(std::istream& is, ModelParams base = {});

using ScalarFn = std::function<double(const Vec2&)>;
using VectorFn = std::function<Vec2(const Vec2&)>;

enum class CaseKind { mms, cavity, custom };

struct ScalarDirichlet {
    std::vector<BoundaryTag> tags;
    ScalarFn value;
};

/// Boundary conditions and sources for one problem.
///
/// Velocity: full Dirichlet on `velocity_dirichlet_tags` with `velocity_value`
/// (zero when unset); slip on `slip_tags` (normal component zero, zero
/// tangential stress). Full Dirichlet wins at shared corner dofs.
struct CaseSetup {
    CaseKind kind = CaseKind::custom;
    std::vector<ScalarDirichlet> phi_dirichlet;
    std::vector<ScalarDirichlet> T_dirichlet;
    std::vector<BoundaryTag> velocity_dirichlet_tags;
    VectorFn velocity_value;
    std::vector<BoundaryTag> slip_tags;
    /// Append the constraint mean(phi) = phi_m via a Lagrange multiplier.
    bool mean_phi_constraint = false;
    ScalarFn phi_source;
    ScalarFn heat_source;
    VectorFn momentum_source;
};

/// Differentially heated cavity: T = 1 on the left wall, T = 0 on the right,
/// insulated top and bottom; phi with zero-flux walls and prescribed mean;
/// no-slip walls except a slip top wall.
CaseSetup cavity_case();

}  // namespace nanoflow
