#include "nanoflow/model.hpp"

#include <cmath>
#include <istream>
#include <sstream>
#include <stdexcept>

namespace nanoflow {

double Polynomial::operator()(double s) const {
    double v = 0.0;
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) v = v * s + *it;
    return v;
}

double Polynomial::derivative(double s) const {
    double v = 0.0;
    for (std::size_t i = c_.size(); i-- > 1;) v = v * s + static_cast<double>(i) * c_[i];
    return v;
}

Polynomial standard_mobility() { return Polynomial({0.0, 1.0, -1.0}); }

CoefficientLaws CoefficientLaws::unit() {
    return {Polynomial({1.0}), Polynomial({1.0}), standard_mobility(), Polynomial({1.0, 1.0}),
            Polynomial({1.0, 1.0})};
}

CoefficientLaws CoefficientLaws::alumina() {
    return {Polynomial({1.0, 4.5503}), Polynomial({1.0, 39.11, 533.9}), standard_mobility(),
            Polynomial({1.0, 1.0}), Polynomial({1.0, 1.0})};
}

void ModelParams::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument(std::string("ModelParams: ") + name + " must be positive");
        }
    };
    positive(Re, "Re");
    positive(Pr, "Pr");
    positive(Sc, "Sc");
    positive(Sc_f, "Sc_f");
    positive(N_BT, "N_BT");
    positive(T0, "T0");
    // Le enters only through 1/Le; negative values are accepted.
    if (Le == 0.0 || !std::isfinite(Le)) throw std::invalid_argument("ModelParams: Le must be nonzero");
    if (!(beta >= 0.0)) throw std::invalid_argument("ModelParams: beta must be >= 0");
    if (std::abs(e_g.norm() - 1.0) > 1e-12) throw std::invalid_argument("ModelParams: |e_g| must be 1");
    if (!(phi_m >= 0.0 && phi_m <= 1.0)) throw std::invalid_argument("ModelParams: phi_m must lie in [0,1]");
    if (cutoff_radius && !(*cutoff_radius > 0.0)) {
        throw std::invalid_argument("ModelParams: cutoff radius must be positive");
    }
}

Prefactors ModelParams::prefactors() const {
    Prefactors p;
    if (!constants_one) {
        p.phi_diffusion = 1.0 / (Re * Sc);
        p.thermophoresis = 1.0 / (N_BT * T0);
        p.heat_diffusion = 1.0 / (Re * Pr);
        p.heat_flux = 1.0 / (Re * Pr * Le);
        p.viscosity = 1.0 / Re;
        p.momentum_flux = 1.0 / (Re * Sc_f);
        p.buoyancy = beta;
    }
    if (!thermophoresis) p.thermophoresis = 0.0;
    return p;
}

Vec2 flux_j(const Vec2& grad_phi, double phi, const Vec2& grad_T, const ModelParams& params) {
    const double c = params.prefactors().thermophoresis;
    return -(grad_phi + phi * (1.0 - phi) * c * grad_T);
}

Vec2 cutoff(const Vec2& y, double R) {
    if (!(R > 0.0)) throw std::invalid_argument("cutoff: R must be positive");
    const double n = y.norm();
    if (n <= R) return y;
    return y * (R / n);
}

Mat2 cutoff_jacobian(const Vec2& y, double R) {
    if (!(R > 0.0)) throw std::invalid_argument("cutoff_jacobian: R must be positive");
    const double n = y.norm();
    if (n <= R) return Mat2::Identity();
    return (R / n) * (Mat2::Identity() - y * y.transpose() / (n * n));
}

ParamFile read_param_file(std::istream& is, ModelParams base) {
    ParamFile out;
    out.params = std::move(base);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("parameter file line " + std::to_string(lineno) + ": expected key = value");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "case") {
            out.case_name = value;
            out.keys_set.push_back(key);
            continue;
        }
        double v = 0.0;
        try {
            std::size_t used = 0;
            v = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw std::runtime_error("parameter file line " + std::to_string(lineno) + ": bad number '" + value + "'");
        }
        auto& p = out.params;
        if (key == "Re") p.Re = v;
        else if (key == "Pr") p.Pr = v;
        else if (key == "Sc") p.Sc = v;
        else if (key == "Scf") p.Sc_f = v;
        else if (key == "Le") p.Le = v;
        else if (key == "Nbt") p.N_BT = v;
        else if (key == "T0") p.T0 = v;
        else if (key == "beta") p.beta = v;
        else if (key == "phi_m") p.phi_m = v;
        else if (key == "cutoff_R") p.cutoff_radius = v;
        else throw std::runtime_error("parameter file line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        out.keys_set.push_back(key);
    }
    return out;
}

CaseSetup cavity_case() {
    CaseSetup c;
    c.kind = CaseKind::cavity;
    c.T_dirichlet.push_back({{BoundaryTag::left}, [](const Vec2&) { return 1.0; }});
    c.T_dirichlet.push_back({{BoundaryTag::right}, [](const Vec2&) { return 0.0; }});
    c.velocity_dirichlet_tags = {BoundaryTag::left, BoundaryTag::right, BoundaryTag::bottom};
    c.slip_tags = {BoundaryTag::top};
    c.mean_phi_constraint = true;
    return c;
}

}  // namespace nanoflow
