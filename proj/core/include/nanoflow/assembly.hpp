#pragma once

/// @file assembly.hpp
/// @brief Nonlinear residual and exact Jacobian of the coupled
/// concentration / temperature / velocity / pressure system.
///
/// With weights A (see Prefactors), j = -(grad phi + c h(phi) grad T) and test
/// functions (psi, theta, v, q) the residual reads
///
///   A_phi  int (grad phi + c h(phi) grad T) . grad psi + int (u . grad phi - s) psi
///   A_heat int k(phi) grad T . grad theta + int ((A_hj j + eta u) . grad T - f) theta
///   A_visc int mu(phi)/2 D(u):D(v) + int ((A_mj j + rho u) . grad) u . v
///          - int p div v + beta int T e_g . v - int g . v
///   int q div u
///
/// plus the multiplier rows int p = 0 and, for the cavity, int phi = phi_m |Omega|.
/// The Jacobian is the exact derivative of this residual; every term is
/// differentiated with its weight.

#include "nanoflow/fespace.hpp"
#include "nanoflow/model.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <memory>
#include <string_view>
#include <vector>

namespace nanoflow {

enum class Block { phi, T, u, p, lambda_p, lambda_phi };
std::string_view to_string(Block block);

/// Global unknown ordering: [phi | T | u_x u_y | p | lambda_p | lambda_phi?].
struct Layout {
    int n_scalar = 0;
    int n_velocity = 0;  // both components
    int n_pressure = 0;
    int phi = 0;
    int T = 0;
    int u = 0;
    int p = 0;
    int lambda_p = 0;
    int lambda_phi = -1;  // -1 when there is no mean-concentration constraint
    int size = 0;

    [[nodiscard]] Block block_of(int row) const;
};

/// Taylor-Hood velocity/pressure pair: continuous P2 vector velocity and P1
/// pressure with a zero-mean multiplier.
struct TaylorHoodPair {
    Space velocity;
    Space pressure;
};

/// Spaces for one mesh: scalar Lagrange space for phi and T (degree 1 or 2)
/// and the Taylor-Hood pair.
struct Discretization {
    Discretization(std::shared_ptr<const Mesh> mesh, int scalar_degree, bool mean_phi_constraint);

    std::shared_ptr<const Mesh> mesh;
    Space scalar;
    TaylorHoodPair flow;
    Layout layout;
};

struct FieldState {
    Eigen::VectorXd phi;
    Eigen::VectorXd T;
    Eigen::VectorXd u;
    Eigen::VectorXd p;
    double lambda_p = 0.0;
    double lambda_phi = 0.0;

    [[nodiscard]] Eigen::VectorXd pack(const Layout& layout) const;
    static FieldState unpack(const Layout& layout, const Eigen::VectorXd& x);
};

/// Assembled linearization. `rhs` holds the residual F(U); a Newton update
/// solves matrix * dU = -rhs.
struct SparseSystem {
    Eigen::SparseMatrix<double> matrix;
    Eigen::VectorXd rhs;
    Layout layout;
};

/// Bit set of fields held fixed (identity rows, zero residual).
enum FieldMask : unsigned {
    kFreezeNone = 0,
    kFreezePhi = 1u << 0,
    kFreezeT = 1u << 1,
    kFreezeFlow = 1u << 2,  // u, p and lambda_p
};

struct AssemblyOptions {
    int quadrature_order = kDefaultQuadratureOrder;
    /// Number of worker threads; 1 means the strictly sequential element loop.
    /// Results for a fixed thread count are deterministic.
    int threads = 1;
};

class Assembler {
public:
    Assembler(std::shared_ptr<const Discretization> disc, ModelParams params, CoefficientLaws laws,
              CaseSetup setup, AssemblyOptions options = {});

    [[nodiscard]] const Discretization& discretization() const { return *disc_; }
    [[nodiscard]] const Layout& layout() const { return disc_->layout; }
    [[nodiscard]] const ModelParams& params() const { return params_; }
    [[nodiscard]] const CoefficientLaws& laws() const { return laws_; }
    [[nodiscard]] const CaseSetup& setup() const { return setup_; }
    void set_params(const ModelParams& params);
    void set_frozen(unsigned mask) { frozen_ = mask; }
    [[nodiscard]] unsigned frozen() const { return frozen_; }

    /// Zero fields, phi = phi_m when the mean is constrained, Dirichlet data
    /// written into constrained dofs.
    [[nodiscard]] Eigen::VectorXd initial_state() const;
    [[nodiscard]] Eigen::VectorXd apply_dirichlet(Eigen::VectorXd x) const;

    /// Residual with all constraint rows.
    [[nodiscard]] Eigen::VectorXd assemble_residual(const Eigen::VectorXd& x) const;
    /// Jacobian and residual with all constraint rows.
    [[nodiscard]] SparseSystem assemble_jacobian(const Eigen::VectorXd& x) const;

    /// Element integrals only: no Dirichlet rows, no multiplier rows/columns.
    [[nodiscard]] SparseSystem assemble_raw(const Eigen::VectorXd& x, bool with_matrix) const;
    /// Element integrals over a subset of triangles (raw, no constraints).
    [[nodiscard]] SparseSystem assemble_raw_subset(const Eigen::VectorXd& x, std::span<const int> triangles,
                                                   bool with_matrix) const;
    /// Identity rows for Dirichlet and frozen dofs, multiplier rows/columns.
    void apply_constraints(SparseSystem& system, const Eigen::VectorXd& x) const;

    [[nodiscard]] const std::vector<int>& dirichlet_dofs() const { return dirichlet_dofs_; }
    [[nodiscard]] const std::vector<double>& dirichlet_values() const { return dirichlet_values_; }
    /// int of each pressure / scalar basis function over the domain.
    [[nodiscard]] const Eigen::VectorXd& pressure_mass() const { return pressure_mass_; }
    [[nodiscard]] const Eigen::VectorXd& scalar_mass() const { return scalar_mass_; }
    [[nodiscard]] double domain_area() const { return area_; }

private:
    struct Tables;
    void build_constraints();
    void build_pattern();
    [[nodiscard]] std::vector<char> row_mask(bool with_dirichlet = true) const;
    void assemble_range(const Eigen::VectorXd& x, std::span<const int> tris, Eigen::VectorXd& res,
                        double* values) const;

    std::shared_ptr<const Discretization> disc_;
    ModelParams params_;
    CoefficientLaws laws_;
    CaseSetup setup_;
    AssemblyOptions options_;
    unsigned frozen_ = kFreezeNone;

    std::vector<int> dirichlet_dofs_;
    std::vector<double> dirichlet_values_;
    Eigen::VectorXd pressure_mass_;
    Eigen::VectorXd scalar_mass_;
    double area_ = 0.0;
    Eigen::SparseMatrix<double> pattern_;
    std::shared_ptr<const Tables> tables_;
};

}  // namespace nanoflow
