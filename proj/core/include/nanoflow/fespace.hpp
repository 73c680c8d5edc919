#pragma once

/// @file fespace.hpp
/// @brief Lagrange P1/P2 spaces, reference basis, and triangle quadrature.

#include "nanoflow/mesh.hpp"
#include "nanoflow/types.hpp"

#include <Eigen/Core>

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace nanoflow {

/// Triangle rule on the reference triangle (0,0),(1,0),(0,1).
/// Points are barycentric; weights sum to 1/2.
struct Quadrature {
    int order = 0;
    std::vector<Vec3> points;
    std::vector<double> weights;

    [[nodiscard]] int size() const { return static_cast<int>(weights.size()); }
};

/// Symmetric Dunavant rules exact to degree 2 (3 points), 4 (6 points) and
/// 6 (12 points). Other orders throw std::invalid_argument.
const Quadrature& element_quadrature(int order);

inline constexpr int kDefaultQuadratureOrder = 6;

/// Basis values and gradients at one point.
///
/// Ordering: P1 = vertex 0,1,2. P2 = vertex 0,1,2, then edge (0,1), (1,2), (2,0).
/// `ref_grads` are derivatives with respect to the reference coordinates
/// (xi, eta) = (lambda_1, lambda_2); `bary_grads` are partial derivatives with
/// respect to (lambda_0, lambda_1, lambda_2) treated as independent.
struct BasisEval {
    int count = 0;
    std::array<double, 6> values{};
    std::array<Vec2, 6> ref_grads{};
    std::array<Vec3, 6> bary_grads{};
};

BasisEval eval_basis(int degree, const Vec3& bary);

inline int basis_count(int degree) { return degree == 1 ? 3 : 6; }

/// Affine element map data.
struct ElementGeometry {
    double area = 0.0;
    std::array<Vec2, 3> grad_lambda;  // physical gradients of barycentric coordinates
    std::array<Vec2, 3> corners;

    ElementGeometry(const Mesh& mesh, int t);
    [[nodiscard]] Vec2 map(const Vec3& bary) const {
        return bary[0] * corners[0] + bary[1] * corners[1] + bary[2] * corners[2];
    }
    [[nodiscard]] Vec2 physical_grad(const Vec3& bary_grad) const {
        return bary_grad[0] * grad_lambda[0] + bary_grad[1] * grad_lambda[1] +
               bary_grad[2] * grad_lambda[2];
    }
};

/// Continuous Lagrange space with 1 (scalar) or 2 (vector) components.
///
/// Scalar dof numbering: vertices first, then (P2) one dof per edge at
/// index num_vertices + edge. Vector spaces use blocked numbering: component
/// c of scalar dof i has index c * scalar_dof_count + i.
class Space {
public:
    Space(std::shared_ptr<const Mesh> mesh, int degree, int components = 1);

    [[nodiscard]] const Mesh& mesh() const { return *mesh_; }
    [[nodiscard]] const std::shared_ptr<const Mesh>& mesh_ptr() const { return mesh_; }
    [[nodiscard]] int degree() const { return degree_; }
    [[nodiscard]] int components() const { return components_; }
    [[nodiscard]] int scalar_dof_count() const { return scalar_dofs_; }
    [[nodiscard]] int dof_count() const { return components_ * scalar_dofs_; }
    [[nodiscard]] int dofs_per_cell() const { return basis_count(degree_); }

    /// Scalar dofs of triangle t in basis order.
    [[nodiscard]] std::array<int, 6> cell_dofs(int t) const;
    [[nodiscard]] Vec2 dof_coord(int scalar_dof) const;

    /// Scalar dofs lying on boundary edges with any of the given tags.
    [[nodiscard]] std::vector<int> boundary_dofs(std::span<const BoundaryTag> tags) const;

private:
    std::shared_ptr<const Mesh> mesh_;
    int degree_;
    int components_;
    int scalar_dofs_;
};

/// Nodal interpolation of a scalar function.
Eigen::VectorXd interpolate(const Space& space, const std::function<double(const Vec2&)>& f);
/// Nodal interpolation of a 2D vector function into a 2-component space.
Eigen::VectorXd interpolate_vector(const Space& space, const std::function<Vec2(const Vec2&)>& f);

/// Finite element function: a space and a coefficient view.
class FeFunction {
public:
    FeFunction(const Space& space, std::span<const double> coeffs);

    [[nodiscard]] const Space& space() const { return *space_; }

    /// Value and gradient of component `comp` at barycentric point of triangle t.
    [[nodiscard]] double value(int t, const Vec3& bary, int comp = 0) const;
    [[nodiscard]] Vec2 gradient(int t, const Vec3& bary, int comp = 0) const;

private:
    const Space* space_;
    std::span<const double> coeffs_;
};

}  // namespace nanoflow
