#ifndef TAILSITTER_FLATNESS_GRADIENTS_HPP
#define TAILSITTER_FLATNESS_GRADIENTS_HPP

#include "tailsitter/flatness.hpp"

#include <Eigen/Dense>

namespace tailsitter {

// Analytic gradient of the input flatness function u = (a_T, omega) with
// respect to P = (v, vdot, vddot) stacked as a 9-vector. Row 0 is
// d a_T / dP, rows 1..3 are d omega / dP.
//
// The work struct must come from build_flatness_work and the rates b from
// solve_rates on the same sample.

namespace detail {

using Mat39 = Eigen::Matrix<double, 3, 9>;
using Mat19 = Eigen::Matrix<double, 1, 9>;

inline Mat39 block_v()
{
    Mat39 m = Mat39::Zero();
    m.block<3, 3>(0, 0).setIdentity();
    return m;
}
inline Mat39 block_vdot()
{
    Mat39 m = Mat39::Zero();
    m.block<3, 3>(0, 3).setIdentity();
    return m;
}
inline Mat39 block_vddot()
{
    Mat39 m = Mat39::Zero();
    m.block<3, 3>(0, 6).setIdentity();
    return m;
}

// d/dy of Exp(alpha y) xi for unit y (alpha held fixed)
inline Eigen::Matrix3d dexp_axis(double alpha, const Eigen::Vector3d &y, const Eigen::Vector3d &xi)
{
    const double sa = std::sin(alpha), ca = std::cos(alpha);
    return -skew(xi) * sa + (-skew(skew(y) * xi) - skew(y) * skew(xi)) * (1.0 - ca);
}

// gradient of the normalization map u -> u/|u|
inline Eigen::Matrix3d normalize_jacobian(const Eigen::Vector3d &u)
{
    const double n = u.norm();
    return (Eigen::Matrix3d::Identity() * (n * n) - u * u.transpose()) / (n * n * n);
}

struct GradWork
{
    Mat19 a_T = Mat19::Zero();
    Mat19 alpha = Mat19::Zero();
    Mat39 x_b = Mat39::Zero(), y_b = Mat39::Zero(), z_b = Mat39::Zero();
    Mat39 v_aB = Mat39::Zero();
    Mat39 f_a = Mat39::Zero();
};

// columns of R are functions of P; derivative of R xi for constant xi
inline Mat39 dR_xi(const GradWork &g, const Eigen::Vector3d &xi)
{
    return xi.x() * g.x_b + xi.y() * g.y_b + xi.z() * g.z_b;
}

// derivative of R^T xi for constant xi
inline Mat39 dRt_xi(const GradWork &g, const Eigen::Vector3d &xi)
{
    Mat39 out;
    out.row(0) = xi.transpose() * g.x_b;
    out.row(1) = xi.transpose() * g.y_b;
    out.row(2) = xi.transpose() * g.z_b;
    return out;
}

// derivative of G xi for constant xi (G the aero force Jacobian)
inline Mat39 dG_xi(const FlatnessWork &w, const GradWork &g, const AeroModel &model,
                   const Eigen::Vector3d &xi)
{
    const Eigen::Vector3d e2 = Eigen::Vector3d::UnitY();
    const Eigen::Vector3d c_beta(0.0, w.cv.dcy_dbeta, 0.0);
    const Eigen::Vector3d c_beta_alpha(0.0, w.cv.d_dcy_dbeta_dalpha, 0.0);
    const double rs2 = 0.5 * model.rho * model.S;
    Mat39 out = Mat39::Zero();
    for (int i = 0; i < 3; ++i)
    {
        if (xi(i) == 0.0) continue;
        const Eigen::Vector3d ei = Eigen::Vector3d::Unit(i);
        const Eigen::Vector3d dGei_dalpha =
            rs2 * ((2.0 * w.cv.dc_dalpha * w.v_aB.transpose() +
                    w.cv.d2c_dalpha2 * (w.v_aB.transpose() * skew(e2)) +
                    w.V * c_beta_alpha * e2.transpose()) *
                   ei);
        const Eigen::Matrix3d dGei_dvB =
            rs2 * (2.0 * w.cv.c * ei.transpose() -
                   w.cv.dc_dalpha * (ei.transpose() * skew(e2)) +
                   c_beta * (e2.dot(ei)) * (w.v_aB.transpose() / w.V));
        out += xi(i) * (dGei_dalpha * g.alpha + dGei_dvB * g.v_aB);
    }
    return out;
}

} // namespace detail

inline Eigen::Matrix<double, 4, 9> flatness_gradients(const FlatnessWork &w,
                                                      const Eigen::Vector4d &b,
                                                      const AeroModel &model)
{
    using detail::Mat19;
    using detail::Mat39;
    const Mat39 Jv = detail::block_v();
    const Mat39 Jvd = detail::block_vdot();
    const Mat39 Jvdd = detail::block_vddot();
    const Eigen::Vector3d e1 = Eigen::Vector3d::UnitX();
    const Eigen::Vector3d e2 = Eigen::Vector3d::UnitY();
    const double m = model.mass;

    detail::GradWork g;
    const Mat19 d_sp_norm = (w.sp.transpose() / w.sp_norm) * Jvd;

    Eigen::Matrix<double, 4, 9> dNb_rows = Eigen::Matrix<double, 4, 9>::Zero();
    Eigen::Matrix<double, 4, 9> dh = Eigen::Matrix<double, 4, 9>::Zero();

    if (w.branch == FlatnessBranch::LowAirspeed)
    {
        g.a_T = d_sp_norm;
        g.x_b = detail::normalize_jacobian(w.sp) * Jvd;
        const Eigen::Vector3d u = w.z_b_fix.cross(w.sp);
        g.y_b = detail::normalize_jacobian(u) * skew(w.z_b_fix) * Jvd;
        g.z_b = skew(w.x_b) * g.y_b - skew(w.y_b) * g.x_b;

        const Eigen::Vector3d zxvdd = skew(w.z_b_fix) * w.sample.j;
        dh.row(0) = zxvdd.transpose() * g.z_b +
                    w.z_b.transpose() * skew(w.z_b_fix) * Jvdd;
        dh.bottomRows<3>() = Jvdd;

        const Mat19 d_u_norm = (u.transpose() * skew(w.z_b_fix) / u.norm()) * Jvd;
        dNb_rows.row(0) = b(1) * d_u_norm;  // N1 b = |u| omega_x
        Mat39 rows = b(0) * g.x_b;
        for (int jcol = 0; jcol < 3; ++jcol)
        {
            const Eigen::Vector3d ej = Eigen::Vector3d::Unit(jcol);
            const Eigen::Vector3d xi = skew(e1) * ej;
            // N22 ej = -a_T R skew(e1) ej
            rows += b(jcol + 1) *
                    (-(w.R * xi) * g.a_T - w.a_T * detail::dR_xi(g, xi));
        }
        dNb_rows.bottomRows<3>() = rows;
    }
    else
    {
        const double cga = std::cos(w.gamma - w.alpha);
        const double sga = std::sin(w.gamma - w.alpha);
        const double V = w.V, V2 = V * V;

        // gamma, h, alpha chain
        const double singam = std::sin(w.gamma);
        const Mat19 d_gamma =
            (w.r / std::max(std::abs(singam), 1e-12)) *
            ((std::cos(w.gamma) * w.sp.transpose() / (w.sp_norm * w.sp_norm) -
              w.v_a.transpose() / (w.sp_norm * V)) *
                 Jvd +
             (std::cos(w.gamma) * w.v_a.transpose() / V2 -
              w.sp.transpose() / (w.sp_norm * V)) *
                 Jv);
        const Mat19 d_h = (2.0 * m / (model.rho * model.S)) *
                          ((w.sp.transpose() / (w.sp_norm * V2)) * Jvd -
                           (2.0 * w.sp_norm / (V2 * V2)) * w.v_a.transpose() * Jv);
        g.alpha = (sga * d_h + w.h_coef * cga * d_gamma) /
                  (w.h_coef * cga - w.cv.dc_dalpha.z());

        // f_a(alpha, V) in the body frame
        g.f_a = model.rho * V * model.S *
                ((V / 2.0) * w.cv.dc_dalpha * g.alpha +
                 w.cv.c * (w.v_a.transpose() / V) * Jv);

        g.a_T = cga * d_sp_norm - w.sp_norm * sga * (d_gamma - g.alpha) -
                (e1.transpose() / m) * g.f_a;

        // body axes
        if (w.branch == FlatnessBranch::Coordinated)
        {
            const Eigen::Vector3d u = w.v_a.cross(w.sp);
            const Mat39 du = -skew(w.sp) * Jv + skew(w.v_a) * Jvd;
            g.y_b = w.r * detail::normalize_jacobian(u) * du;
        }
        else
        {
            const Eigen::Vector3d u = w.z_b_fix.cross(w.sp);
            g.y_b = detail::normalize_jacobian(u) * skew(w.z_b_fix) * Jvd;
        }
        const Eigen::Vector3d v_hat = w.v_a / V;
        const Eigen::Matrix3d E = exp_so3(w.alpha * w.y_b);
        g.x_b = (skew(w.y_b) * E * v_hat) * g.alpha +
                detail::dexp_axis(w.alpha, w.y_b, v_hat) * g.y_b +
                E * detail::normalize_jacobian(w.v_a) * Jv;
        g.z_b = skew(w.x_b) * g.y_b - skew(w.y_b) * g.x_b;
        g.v_aB = detail::dRt_xi(g, w.v_a) + w.R.transpose() * Jv;

        // h rows
        const Eigen::Vector3d vdot_a = w.sample.a;
        if (w.branch == FlatnessBranch::Coordinated)
        {
            dh.row(0) = vdot_a.transpose() * g.y_b + w.y_b.transpose() * Jvd;
        }
        else
        {
            const Eigen::Vector3d zxvdd = skew(w.z_b_fix) * w.sample.j;
            dh.row(0) = zxvdd.transpose() * g.z_b +
                        w.z_b.transpose() * skew(w.z_b_fix) * Jvdd;
        }
        const Eigen::Vector3d GRtvd = w.G * w.R.transpose() * vdot_a;
        dh.bottomRows<3>() =
            Jvdd - (1.0 / m) * (detail::dR_xi(g, GRtvd) +
                                w.R * detail::dG_xi(w, g, model, w.R.transpose() * vdot_a) +
                                w.R * w.G * (detail::dRt_xi(g, vdot_a) + w.R.transpose() * Jvd));

        // (d N / d P) b rows
        const Eigen::Vector3d omega = b.tail<3>();
        if (w.branch == FlatnessBranch::Coordinated)
        {
            dNb_rows.row(0) = -omega.transpose() * skew(e2) * g.v_aB;
        }
        else
        {
            const Eigen::Vector3d u = w.z_b_fix.cross(w.sp);
            const Mat19 d_u_norm = (u.transpose() * skew(w.z_b_fix) / u.norm()) * Jvd;
            dNb_rows.row(0) = b(1) * d_u_norm;
        }
        const Eigen::Matrix3d Psi =
            -skew(w.a_T * e1 + w.f_a / m) + (1.0 / m) * w.G * skew(w.v_aB);
        Mat39 rows = b(0) * g.x_b;
        for (int jcol = 0; jcol < 3; ++jcol)
        {
            const Eigen::Vector3d ej = Eigen::Vector3d::Unit(jcol);
            const Mat39 dPsi_ej =
                (skew(ej) * e1) * g.a_T +
                (1.0 / m) * (skew(ej) * g.f_a +
                             detail::dG_xi(w, g, model, skew(w.v_aB) * ej) -
                             w.G * skew(ej) * g.v_aB);
            rows += b(jcol + 1) * (detail::dR_xi(g, Psi * ej) + w.R * dPsi_ej);
        }
        dNb_rows.bottomRows<3>() = rows;
    }

    const RateBlocks rb = build_rate_blocks(w, model);
    const Eigen::Matrix<double, 4, 9> db = rb.N.partialPivLu().solve((dh - dNb_rows).eval());

    Eigen::Matrix<double, 4, 9> out;
    out.row(0) = g.a_T;
    out.bottomRows<3>() = db.bottomRows<3>();
    return out;
}

// convenience overload evaluating work and rates internally
inline Eigen::Matrix<double, 4, 9> flatness_gradients(const FlatSample &sample,
                                                      const Eigen::Vector3d &w_bar,
                                                      const FlatnessCache &cache,
                                                      const AeroModel &model,
                                                      const FlatnessOptions &opts = {})
{
    const FlatnessWork w = build_flatness_work(sample, w_bar, cache, model, opts);
    const RateBlocks rb = build_rate_blocks(w, model);
    const Eigen::Vector4d b = solve_rates(rb, opts);
    return flatness_gradients(w, b, model);
}

} // namespace tailsitter

#endif // TAILSITTER_FLATNESS_GRADIENTS_HPP
