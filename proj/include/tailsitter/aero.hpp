#ifndef TAILSITTER_AERO_HPP
#define TAILSITTER_AERO_HPP

#include "tailsitter/so3.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

namespace tailsitter {

// Longitudinal coefficient slice at beta = 0 plus the lateral slope
// dCY/dbeta, all C^2 in alpha.
struct CoeffSample
{
    double CL = 0.0, dCL = 0.0, d2CL = 0.0;
    double CD = 0.0, dCD = 0.0, d2CD = 0.0;
    double CY_beta = 0.0;   // dCY/dbeta at beta = 0
    double dCY_beta = 0.0;  // d/dalpha of the above
};

class CoeffProvider
{
public:
    virtual ~CoeffProvider() = default;
    virtual CoeffSample eval(double alpha) const = 0;
    virtual const char *kind() const = 0;
};

// Analytic test airfoil: CL = 2 sin(a)cos(a), CD = 2 sin^2(a),
// dCY/dbeta = -0.5. Collapses the body-frame coefficient vector to
// c = [0, 0, -2 sin(a)], handy for closed-form checks.
class FlatPlateCoeffs final : public CoeffProvider
{
public:
    CoeffSample eval(double alpha) const override
    {
        CoeffSample s;
        s.CL = std::sin(2.0 * alpha);
        s.dCL = 2.0 * std::cos(2.0 * alpha);
        s.d2CL = -4.0 * std::sin(2.0 * alpha);
        s.CD = 2.0 * std::sin(alpha) * std::sin(alpha);
        s.dCD = 2.0 * std::sin(2.0 * alpha);
        s.d2CD = 4.0 * std::cos(2.0 * alpha);
        s.CY_beta = -0.5;
        s.dCY_beta = 0.0;
        return s;
    }
    const char *kind() const override { return "flat_plate"; }
};

// Natural cubic spline on a uniform grid; C^2 with analytic first and
// second derivatives taken from the spline itself.
class CubicSpline
{
public:
    CubicSpline() = default;

    CubicSpline(std::vector<double> x, std::vector<double> y)
        : x_(std::move(x)), y_(std::move(y))
    {
        const int n = static_cast<int>(x_.size());
        if (n < 3 || y_.size() != x_.size())
            throw std::invalid_argument("CubicSpline: need >= 3 samples");
        m_.assign(n, 0.0);
        // Tridiagonal solve for interior second derivatives, natural ends.
        std::vector<double> a(n, 0.0), b(n, 0.0), c(n, 0.0), d(n, 0.0);
        for (int i = 1; i < n - 1; ++i)
        {
            const double h0 = x_[i] - x_[i - 1];
            const double h1 = x_[i + 1] - x_[i];
            a[i] = h0;
            b[i] = 2.0 * (h0 + h1);
            c[i] = h1;
            d[i] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
        }
        for (int i = 2; i < n - 1; ++i)
        {
            const double w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            d[i] -= w * d[i - 1];
        }
        for (int i = n - 2; i >= 1; --i)
        {
            m_[i] = (d[i] - c[i] * m_[i + 1]) / b[i];
        }
    }

    // value, first and second derivative at x
    void eval(double x, double &f, double &df, double &d2f) const
    {
        const int n = static_cast<int>(x_.size());
        x = std::clamp(x, x_.front(), x_.back());
        int i = static_cast<int>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin()) - 1;
        i = std::clamp(i, 0, n - 2);
        const double h = x_[i + 1] - x_[i];
        const double t0 = x_[i + 1] - x, t1 = x - x_[i];
        f = m_[i] * t0 * t0 * t0 / (6.0 * h) + m_[i + 1] * t1 * t1 * t1 / (6.0 * h) +
            (y_[i] / h - m_[i] * h / 6.0) * t0 + (y_[i + 1] / h - m_[i + 1] * h / 6.0) * t1;
        df = -m_[i] * t0 * t0 / (2.0 * h) + m_[i + 1] * t1 * t1 / (2.0 * h) -
             (y_[i] / h - m_[i] * h / 6.0) + (y_[i + 1] / h - m_[i + 1] * h / 6.0);
        d2f = (m_[i] * t0 + m_[i + 1] * t1) / h;
    }

private:
    std::vector<double> x_, y_;
    std::vector<double> m_;  // second derivatives at knots
};

// Tabulated coefficients on a uniform alpha grid over [-pi, pi].
class TableCoeffs final : public CoeffProvider
{
public:
    TableCoeffs(std::vector<double> alpha_grid,
                std::vector<double> CL,
                std::vector<double> CD,
                std::vector<double> dCY_dbeta)
        : grid_(alpha_grid),
          cl_(alpha_grid, std::move(CL)),
          cd_(alpha_grid, std::move(CD)),
          cyb_(std::move(alpha_grid), std::move(dCY_dbeta))
    {
    }

    CoeffSample eval(double alpha) const override
    {
        // coefficients are 2*pi periodic in alpha
        alpha = std::remainder(alpha, 2.0 * M_PI);
        CoeffSample s;
        cl_.eval(alpha, s.CL, s.dCL, s.d2CL);
        cd_.eval(alpha, s.CD, s.dCD, s.d2CD);
        double unused;
        cyb_.eval(alpha, s.CY_beta, s.dCY_beta, unused);
        return s;
    }
    const char *kind() const override { return "table"; }

    const std::vector<double> &grid() const { return grid_; }

private:
    std::vector<double> grid_;
    CubicSpline cl_, cd_, cyb_;
};

// Moment coefficients [Cl, Cm, Cn](alpha) at beta = 0; default is zero.
using MomentProvider = std::function<Eigen::Vector3d(double alpha)>;

struct AeroModel
{
    double rho = 1.225;   // air density [kg/m^3]
    double S = 0.5;       // reference area [m^2]
    double c_bar = 0.25;  // mean chord [m]
    double mass = 2.4;    // [kg]
    Eigen::Matrix3d J = Eigen::Matrix3d::Identity() * 0.05;  // inertia [kg m^2]
    std::shared_ptr<const CoeffProvider> coeffs = std::make_shared<FlatPlateCoeffs>();
    MomentProvider moments;  // empty -> zero aerodynamic moment

    double qbar(double V) const { return 0.5 * rho * V * V * S; }
};

struct AirflowState
{
    double V = 0.0;      // airspeed magnitude [m/s]
    double alpha = 0.0;  // angle of attack [rad]
    double beta = 0.0;   // sideslip [rad]
    Eigen::Vector3d v_aB = Eigen::Vector3d::Zero();
    bool degenerate = false;  // V == 0
};

inline AirflowState airflow_angles(const Eigen::Vector3d &v_aB)
{
    AirflowState s;
    s.v_aB = v_aB;
    s.V = v_aB.norm();
    if (s.V < 1e-12)
    {
        s.degenerate = true;
        return s;
    }
    s.alpha = std::atan2(v_aB.z(), v_aB.x());
    s.beta = std::asin(std::clamp(v_aB.y() / s.V, -1.0, 1.0));
    return s;
}

// Body-frame force coefficient vector at beta = 0 and its alpha derivatives.
//   c_x = -CD cos(a) + CL sin(a),  c_y = 0,  c_z = -CD sin(a) - CL cos(a)
struct CoeffVector
{
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    Eigen::Vector3d dc_dalpha = Eigen::Vector3d::Zero();
    Eigen::Vector3d d2c_dalpha2 = Eigen::Vector3d::Zero();
    double dcy_dbeta = 0.0;
    double d_dcy_dbeta_dalpha = 0.0;
};

inline CoeffVector coeff_vector(double alpha, const AeroModel &model)
{
    const CoeffSample cs = model.coeffs->eval(alpha);
    const double sa = std::sin(alpha), ca = std::cos(alpha);
    CoeffVector out;
    out.c.x() = -cs.CD * ca + cs.CL * sa;
    out.c.y() = 0.0;
    out.c.z() = -cs.CD * sa - cs.CL * ca;
    out.dc_dalpha.x() = -cs.dCD * ca + cs.CD * sa + cs.dCL * sa + cs.CL * ca;
    out.dc_dalpha.y() = 0.0;
    out.dc_dalpha.z() = -cs.dCD * sa - cs.CD * ca - cs.dCL * ca + cs.CL * sa;
    out.d2c_dalpha2.x() =
        -cs.d2CD * ca + 2.0 * cs.dCD * sa + cs.CD * ca + cs.d2CL * sa + 2.0 * cs.dCL * ca - cs.CL * sa;
    out.d2c_dalpha2.y() = 0.0;
    out.d2c_dalpha2.z() =
        -cs.d2CD * sa - 2.0 * cs.dCD * ca + cs.CD * sa - cs.d2CL * ca + 2.0 * cs.dCL * sa + cs.CL * ca;
    out.dcy_dbeta = cs.CY_beta;
    out.d_dcy_dbeta_dalpha = cs.dCY_beta;
    return out;
}

// Aerodynamic force in the body frame, f_a = 1/2 rho V^2 S c(alpha, beta).
// Coordinated evaluation drops the side force (beta treated as 0); the full
// evaluation models the side force linearly in beta via dCY/dbeta.
inline Eigen::Vector3d aero_force_body(const Eigen::Vector3d &v_aB, const AeroModel &model,
                                       bool coordinated = true)
{
    const AirflowState flow = airflow_angles(v_aB);
    if (flow.degenerate) return Eigen::Vector3d::Zero();
    const CoeffVector cv = coeff_vector(flow.alpha, model);
    Eigen::Vector3d c = cv.c;
    if (!coordinated) c.y() = cv.dcy_dbeta * flow.beta;
    return model.qbar(flow.V) * c;
}

// World-frame wrapper used by the rigid-body model: R f_a with
// v_a given in the world frame.
inline Eigen::Vector3d aero_force_world(const Eigen::Matrix3d &R, const Eigen::Vector3d &v_a,
                                        const AeroModel &model, bool coordinated = true)
{
    return R * aero_force_body(R.transpose() * v_a, model, coordinated);
}

// d f_a / d v_a^B at beta = 0:
//   rho S / 2 (2 c v^T + dc/dalpha v^T skew(e2) + V dc/dbeta e2^T)
// The lateral component of v_aB is ignored; returns zero when V < 1e-9,
// the correct limit of the quadratic force.
inline Eigen::Matrix3d aero_force_jacobian(const Eigen::Vector3d &v_aB, const AeroModel &model)
{
    Eigen::Vector3d v = v_aB;
    v.y() = 0.0;
    const double V = v.norm();
    if (V < 1e-9) return Eigen::Matrix3d::Zero();
    const double alpha = std::atan2(v.z(), v.x());
    const CoeffVector cv = coeff_vector(alpha, model);
    const Eigen::Vector3d e2 = Eigen::Vector3d::UnitY();
    const Eigen::Vector3d c_beta(0.0, cv.dcy_dbeta, 0.0);
    return 0.5 * model.rho * model.S *
           (2.0 * cv.c * v.transpose() +
            cv.dc_dalpha * (v.transpose() * skew(e2)) +
            V * c_beta * e2.transpose());
}

// M_a = 1/2 rho V^2 S c_bar [Cl, Cm, Cn](alpha, 0)
inline Eigen::Vector3d aero_moment(const AirflowState &flow, const AeroModel &model)
{
    if (!model.moments || flow.degenerate) return Eigen::Vector3d::Zero();
    return model.qbar(flow.V) * model.c_bar * model.moments(flow.alpha);
}

// ---- model file I/O ----------------------------------------------------
//
// {"rho":..,"S":..,"c_bar":..,"m":..,"J":[9 row-major],
//  "kind":"flat_plate"}  or
//  "kind":"table","alpha_grid":[..],"CL":[..],"CD":[..],"dCY_dbeta":[..]}

inline AeroModel aero_model_from_json(const nlohmann::json &j)
{
    AeroModel m;
    m.rho = j.value("rho", m.rho);
    m.S = j.value("S", m.S);
    m.c_bar = j.value("c_bar", m.c_bar);
    m.mass = j.value("m", m.mass);
    if (j.contains("J"))
    {
        const auto v = j.at("J").get<std::vector<double>>();
        if (v.size() != 9) throw std::invalid_argument("aero model: J needs 9 entries");
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) m.J(r, c) = v[3 * r + c];
    }
    const std::string kind = j.value("kind", "flat_plate");
    if (kind == "flat_plate")
    {
        m.coeffs = std::make_shared<FlatPlateCoeffs>();
    }
    else if (kind == "table")
    {
        m.coeffs = std::make_shared<TableCoeffs>(
            j.at("alpha_grid").get<std::vector<double>>(),
            j.at("CL").get<std::vector<double>>(),
            j.at("CD").get<std::vector<double>>(),
            j.at("dCY_dbeta").get<std::vector<double>>());
    }
    else
    {
        throw std::invalid_argument("aero model: unknown kind " + kind);
    }
    return m;
}

inline nlohmann::json aero_model_to_json(const AeroModel &m)
{
    nlohmann::json j;
    j["rho"] = m.rho;
    j["S"] = m.S;
    j["c_bar"] = m.c_bar;
    j["m"] = m.mass;
    std::vector<double> J(9);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) J[3 * r + c] = m.J(r, c);
    j["J"] = J;
    j["kind"] = m.coeffs->kind();
    return j;
}

} // namespace tailsitter

#endif // TAILSITTER_AERO_HPP
