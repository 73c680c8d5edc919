#include "nanoflow/fespace.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nanoflow {

namespace {

void add_s3(Quadrature& q, double a, double w) {
    const double b = 1.0 - 2.0 * a;
    q.points.emplace_back(a, a, b);
    q.points.emplace_back(a, b, a);
    q.points.emplace_back(b, a, a);
    q.weights.insert(q.weights.end(), 3, w);
}

void add_s6(Quadrature& q, double a, double b, double w) {
    const double c = 1.0 - a - b;
    q.points.emplace_back(a, b, c);
    q.points.emplace_back(a, c, b);
    q.points.emplace_back(b, a, c);
    q.points.emplace_back(b, c, a);
    q.points.emplace_back(c, a, b);
    q.points.emplace_back(c, b, a);
    q.weights.insert(q.weights.end(), 6, w);
}

Quadrature make_rule(int order) {
    Quadrature q;
    q.order = order;
    switch (order) {
        case 2:
            add_s3(q, 1.0 / 6.0, 1.0 / 6.0);
            break;
        case 4:
            add_s3(q, 0.44594849091596488632, 0.11169079483900573285);
            add_s3(q, 0.09157621350977074346, 0.054975871827660933819);
            break;
        case 6:
            add_s3(q, 0.24928674517091042129, 0.058393137863189683013);
            add_s3(q, 0.06308901449150222834, 0.02542245318510340846);
            add_s6(q, 0.053145049844816947353, 0.31035245103378440542, 0.041425537809186787597);
            break;
        default:
            throw std::invalid_argument("element_quadrature: unsupported order " + std::to_string(order));
    }
    return q;
}

}  // namespace

const Quadrature& element_quadrature(int order) {
    static const Quadrature q2 = make_rule(2);
    static const Quadrature q4 = make_rule(4);
    static const Quadrature q6 = make_rule(6);
    switch (order) {
        case 2: return q2;
        case 4: return q4;
        case 6: return q6;
        default: break;
    }
    throw std::invalid_argument("element_quadrature: unsupported order " + std::to_string(order));
}

BasisEval eval_basis(int degree, const Vec3& l) {
    if (degree != 1 && degree != 2) throw std::invalid_argument("eval_basis: degree must be 1 or 2");
    constexpr double tol = 1e-12;
    if (l.minCoeff() < -tol || std::abs(l.sum() - 1.0) > tol || !l.allFinite()) {
        throw std::invalid_argument("eval_basis: point is not a valid barycentric coordinate");
    }

    BasisEval out;
    if (degree == 1) {
        out.count = 3;
        for (int i = 0; i < 3; ++i) {
            out.values[static_cast<std::size_t>(i)] = l[i];
            out.bary_grads[static_cast<std::size_t>(i)] = Vec3::Unit(i);
        }
    } else {
        out.count = 6;
        for (int i = 0; i < 3; ++i) {
            out.values[static_cast<std::size_t>(i)] = l[i] * (2.0 * l[i] - 1.0);
            out.bary_grads[static_cast<std::size_t>(i)] = (4.0 * l[i] - 1.0) * Vec3::Unit(i);
        }
        for (int e = 0; e < 3; ++e) {
            const int a = e;
            const int b = (e + 1) % 3;
            auto k = static_cast<std::size_t>(3 + e);
            out.values[k] = 4.0 * l[a] * l[b];
            Vec3 g = Vec3::Zero();
            g[a] = 4.0 * l[b];
            g[b] = 4.0 * l[a];
            out.bary_grads[k] = g;
        }
    }
    for (int i = 0; i < out.count; ++i) {
        const Vec3& g = out.bary_grads[static_cast<std::size_t>(i)];
        out.ref_grads[static_cast<std::size_t>(i)] = Vec2(g[1] - g[0], g[2] - g[0]);
    }
    return out;
}

ElementGeometry::ElementGeometry(const Mesh& mesh, int t) {
    const auto& tri = mesh.triangle(t);
    for (int k = 0; k < 3; ++k) corners[static_cast<std::size_t>(k)] = mesh.vertex(tri[k]);
    const Vec2 b = corners[1] - corners[0];
    const Vec2 c = corners[2] - corners[0];
    const double det = b.x() * c.y() - b.y() * c.x();
    area = 0.5 * det;
    // rows of the inverse Jacobian are the gradients of lambda_1, lambda_2
    grad_lambda[1] = Vec2(c.y(), -c.x()) / det;
    grad_lambda[2] = Vec2(-b.y(), b.x()) / det;
    grad_lambda[0] = -grad_lambda[1] - grad_lambda[2];
}

Space::Space(std::shared_ptr<const Mesh> mesh, int degree, int components)
    : mesh_(std::move(mesh)), degree_(degree), components_(components) {
    if (!mesh_) throw std::invalid_argument("Space: null mesh");
    if (degree_ != 1 && degree_ != 2) throw std::invalid_argument("Space: degree must be 1 or 2");
    if (components_ != 1 && components_ != 2) throw std::invalid_argument("Space: components must be 1 or 2");
    scalar_dofs_ = mesh_->num_vertices() + (degree_ == 2 ? mesh_->num_edges() : 0);
}

std::array<int, 6> Space::cell_dofs(int t) const {
    const auto& v = mesh_->triangle(t);
    std::array<int, 6> d{v[0], v[1], v[2], -1, -1, -1};
    if (degree_ == 2) {
        const auto& e = mesh_->triangle_edges(t);
        const int nv = mesh_->num_vertices();
        d[3] = nv + e[0];
        d[4] = nv + e[1];
        d[5] = nv + e[2];
    }
    return d;
}

Vec2 Space::dof_coord(int i) const {
    const int nv = mesh_->num_vertices();
    if (i < nv) return mesh_->vertex(i);
    const auto& e = mesh_->edge(i - nv);
    return 0.5 * (mesh_->vertex(e.v[0]) + mesh_->vertex(e.v[1]));
}

std::vector<int> Space::boundary_dofs(std::span<const BoundaryTag> tags) const {
    std::vector<int> out;
    const int nv = mesh_->num_vertices();
    for (int i = 0; i < mesh_->num_edges(); ++i) {
        const auto& e = mesh_->edge(i);
        if (!e.tag || std::find(tags.begin(), tags.end(), *e.tag) == tags.end()) continue;
        out.push_back(e.v[0]);
        out.push_back(e.v[1]);
        if (degree_ == 2) out.push_back(nv + i);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

Eigen::VectorXd interpolate(const Space& space, const std::function<double(const Vec2&)>& f) {
    if (space.components() != 1) throw std::invalid_argument("interpolate: scalar space expected");
    Eigen::VectorXd out(space.dof_count());
    for (int i = 0; i < space.scalar_dof_count(); ++i) out[i] = f(space.dof_coord(i));
    return out;
}

Eigen::VectorXd interpolate_vector(const Space& space, const std::function<Vec2(const Vec2&)>& f) {
    if (space.components() != 2) throw std::invalid_argument("interpolate_vector: vector space expected");
    const int n = space.scalar_dof_count();
    Eigen::VectorXd out(space.dof_count());
    for (int i = 0; i < n; ++i) {
        const Vec2 v = f(space.dof_coord(i));
        out[i] = v.x();
        out[n + i] = v.y();
    }
    return out;
}

FeFunction::FeFunction(const Space& space, std::span<const double> coeffs)
    : space_(&space), coeffs_(coeffs) {
    if (static_cast<int>(coeffs_.size()) != space.dof_count()) {
        throw std::invalid_argument("FeFunction: coefficient count does not match space");
    }
}

double FeFunction::value(int t, const Vec3& bary, int comp) const {
    const auto b = eval_basis(space_->degree(), bary);
    const auto dofs = space_->cell_dofs(t);
    const std::size_t off = static_cast<std::size_t>(comp) * static_cast<std::size_t>(space_->scalar_dof_count());
    double v = 0.0;
    for (int i = 0; i < b.count; ++i) {
        v += b.values[static_cast<std::size_t>(i)] * coeffs_[off + static_cast<std::size_t>(dofs[static_cast<std::size_t>(i)])];
    }
    return v;
}

Vec2 FeFunction::gradient(int t, const Vec3& bary, int comp) const {
    const auto b = eval_basis(space_->degree(), bary);
    const auto dofs = space_->cell_dofs(t);
    const ElementGeometry geo(space_->mesh(), t);
    const std::size_t off = static_cast<std::size_t>(comp) * static_cast<std::size_t>(space_->scalar_dof_count());
    Vec2 g = Vec2::Zero();
    for (int i = 0; i < b.count; ++i) {
        g += coeffs_[off + static_cast<std::size_t>(dofs[static_cast<std::size_t>(i)])] *
             geo.physical_grad(b.bary_grads[static_cast<std::size_t>(i)]);
    }
    return g;
}

}  // namespace nanoflow
