#ifndef TAILSITTER_FLATNESS_HPP
#define TAILSITTER_FLATNESS_HPP

#include "tailsitter/aero.hpp"
#include "tailsitter/dynamics.hpp"
#include "tailsitter/so3.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace tailsitter {

// Flat output p(t) and its derivatives up to snap.
struct FlatSample
{
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    Eigen::Vector3d v = Eigen::Vector3d::Zero();
    Eigen::Vector3d a = Eigen::Vector3d::Zero();
    Eigen::Vector3d j = Eigen::Vector3d::Zero();
    Eigen::Vector3d s = Eigen::Vector3d::Zero();
};

enum class FlatnessBranch
{
    Coordinated,
    LowAirspeed,  // |v_a| < v_min
    SmallGamma    // |gamma| < gamma_min
};

inline const char *to_string(FlatnessBranch b)
{
    switch (b)
    {
    case FlatnessBranch::Coordinated: return "coordinated";
    case FlatnessBranch::LowAirspeed: return "low_airspeed";
    default: return "small_gamma";
    }
}

// State carried between consecutive transform calls of one trajectory.
struct FlatnessCache
{
    Eigen::Vector3d y_b_prev = Eigen::Vector3d::UnitY();
    Eigen::Vector3d z_b_fix = Eigen::Vector3d::UnitZ();
    double alpha_prev = 0.0;
    FlatnessBranch branch_prev = FlatnessBranch::Coordinated;

    static FlatnessCache from_initial_attitude(const Eigen::Matrix3d &R0)
    {
        FlatnessCache c;
        c.y_b_prev = R0.col(1);
        c.z_b_fix = R0.col(2);
        return c;
    }
};

struct FlatnessOptions
{
    double v_min = 0.5;                    // [m/s]
    double gamma_min = 5.0 * M_PI / 180.0; // [rad]
    double det_tol = 1e-8;                 // rank(N) = 4 check
    double freefall_tol = 1e-6;            // |vdot - g| lower bound
};

struct FlatnessError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};
struct FreeFallError : FlatnessError
{
    FreeFallError() : FlatnessError("flatness: |vdot - g| ~ 0 (free fall)") {}
};
struct NoRootError : FlatnessError
{
    double gap;  // min |F(alpha)| over the scan grid
    explicit NoRootError(double g)
        : FlatnessError("flatness: F(alpha) = 0 has no root (gap " + std::to_string(g) + ")"),
          gap(g)
    {
    }
};
struct SingularNError : FlatnessError
{
    double det;
    explicit SingularNError(double d)
        : FlatnessError("flatness: N is rank deficient (det " + std::to_string(d) + ")"), det(d)
    {
    }
};
struct DegenerateFixError : FlatnessError
{
    DegenerateFixError() : FlatnessError("flatness: z_b_fix parallel to vdot - g") {}
};

// One point of the reference state-input trajectory.
struct ReferenceSample
{
    double t = 0.0;
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    Eigen::Vector3d v = Eigen::Vector3d::Zero();
    Eigen::Vector3d a = Eigen::Vector3d::Zero();
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    double a_T = 0.0;
    Eigen::Vector3d omega = Eigen::Vector3d::Zero();
    double aT_dot = 0.0;
    double aT_ddot = 0.0;
    Eigen::Vector3d omega_dot = Eigen::Vector3d::Zero();
    Eigen::Vector3d tau = Eigen::Vector3d::Zero();
    double alpha = 0.0;
    double gamma = 0.0;
    FlatnessBranch branch = FlatnessBranch::Coordinated;
    bool thrust_negative = false;  // a_T < 0 kept but flagged
};

// gamma: signed angle rotating v_a onto vdot - g about the body Y axis.
inline double compute_gamma(const Eigen::Vector3d &v_a, const Eigen::Vector3d &sp_acc, double r)
{
    if (v_a.norm() <= 0.0)
        throw FlatnessError("compute_gamma: zero airspeed");
    return r * std::atan2(sp_acc.cross(v_a).norm(), sp_acc.dot(v_a));
}

// Body Y axis in coordinated flight, oriented for continuity against the
// previous one; ties broken toward r = +1.
inline std::pair<Eigen::Vector3d, double> select_yb(const Eigen::Vector3d &v_a,
                                                    const Eigen::Vector3d &sp_acc,
                                                    const Eigen::Vector3d &y_b_prev)
{
    const Eigen::Vector3d cr = v_a.cross(sp_acc);
    const double n = cr.norm();
    if (n <= 0.0)
        throw FlatnessError("select_yb: v_a parallel to vdot - g");
    const double r = (cr.dot(y_b_prev) < 0.0) ? -1.0 : 1.0;
    return {r * cr / n, r};
}

// Direction sign for gamma consistent with select_yb, usable before the
// branch is known (returns +1 when the cross product vanishes).
inline double yb_direction_sign(const Eigen::Vector3d &v_a, const Eigen::Vector3d &sp_acc,
                                const Eigen::Vector3d &y_b_prev)
{
    return (v_a.cross(sp_acc).dot(y_b_prev) < 0.0) ? -1.0 : 1.0;
}

// F(alpha) = h sin(gamma - alpha) + c_z(alpha, 0)
inline double alpha_residual(double alpha, double h, double gamma, const AeroModel &model)
{
    return h * std::sin(gamma - alpha) + coeff_vector(alpha, model).c.z();
}

inline double alpha_residual_slope(double alpha, double h, double gamma, const AeroModel &model)
{
    return -h * std::cos(gamma - alpha) + coeff_vector(alpha, model).dc_dalpha.z();
}

// Newton-Raphson from alpha_prev with a bisection fallback on the sign
// change bracket nearest alpha_prev (1 deg scan of [-pi, pi]).
inline double solve_alpha(double h, double gamma, double alpha_prev, const AeroModel &model)
{
    const double tol = 1e-12 * std::max(1.0, h);
    double alpha = alpha_prev;
    for (int it = 0; it < 50; ++it)
    {
        const double F = alpha_residual(alpha, h, gamma, model);
        if (std::abs(F) < tol) return alpha;
        const double dF = alpha_residual_slope(alpha, h, gamma, model);
        if (std::abs(dF) < 1e-14) break;
        const double next = alpha - F / dF;
        if (!std::isfinite(next) || std::abs(next) > M_PI + 0.5) break;
        if (std::abs(next - alpha) < 1e-15)
        {
            alpha = next;
            break;
        }
        alpha = next;
    }
    if (std::abs(alpha_residual(alpha, h, gamma, model)) < 1e-10) return alpha;

    // grid scan for sign changes, keep the bracket nearest alpha_prev
    constexpr int kGrid = 360;
    double best_lo = 0.0, best_hi = 0.0, best_dist = 1e30;
    double min_abs = 1e30;
    double prev_a = -M_PI, prev_F = alpha_residual(prev_a, h, gamma, model);
    for (int i = 1; i <= kGrid; ++i)
    {
        const double a = -M_PI + 2.0 * M_PI * i / kGrid;
        const double F = alpha_residual(a, h, gamma, model);
        min_abs = std::min(min_abs, std::abs(F));
        if (prev_F == 0.0 || prev_F * F < 0.0)
        {
            const double mid = 0.5 * (prev_a + a);
            const double dist = std::abs(std::remainder(mid - alpha_prev, 2.0 * M_PI));
            if (dist < best_dist)
            {
                best_dist = dist;
                best_lo = prev_a;
                best_hi = a;
            }
        }
        prev_a = a;
        prev_F = F;
    }
    if (best_dist > 1e29) throw NoRootError(min_abs);

    double lo = best_lo, hi = best_hi;
    double Flo = alpha_residual(lo, h, gamma, model);
    for (int it = 0; it < 200; ++it)
    {
        const double mid = 0.5 * (lo + hi);
        const double Fm = alpha_residual(mid, h, gamma, model);
        if (std::abs(Fm) < tol) return mid;
        if (Flo * Fm <= 0.0)
            hi = mid;
        else
        {
            lo = mid;
            Flo = Fm;
        }
    }
    return 0.5 * (lo + hi);
}

// Everything evaluated at one sample, shared by the rate, acceleration and
// gradient computations.
struct FlatnessWork
{
    FlatSample sample;
    Eigen::Vector3d w_bar = Eigen::Vector3d::Zero();
    FlatnessBranch branch = FlatnessBranch::Coordinated;

    Eigen::Vector3d v_a = Eigen::Vector3d::Zero();  // world air velocity
    double V = 0.0;
    Eigen::Vector3d sp = Eigen::Vector3d::Zero();   // vdot - g
    double sp_norm = 0.0;

    double r = 1.0;        // angle direction
    double gamma = 0.0;
    double alpha = 0.0;
    double h_coef = 0.0;   // 2 m |sp| / (rho V^2 S)

    Eigen::Vector3d x_b, y_b, z_b;
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    double a_T = 0.0;

    Eigen::Vector3d v_aB = Eigen::Vector3d::Zero();
    Eigen::Vector3d f_a = Eigen::Vector3d::Zero();   // body frame
    Eigen::Matrix3d G = Eigen::Matrix3d::Zero();     // d f_a / d v_a^B
    CoeffVector cv;

    Eigen::Vector3d z_b_fix = Eigen::Vector3d::UnitZ();  // singular branches
};

// Branch dispatch and attitude/thrust solve (no rates yet).
inline FlatnessWork build_flatness_work(const FlatSample &sample, const Eigen::Vector3d &w_bar,
                                        const FlatnessCache &cache, const AeroModel &model,
                                        const FlatnessOptions &opts = {})
{
    FlatnessWork w;
    w.sample = sample;
    w.w_bar = w_bar;
    w.v_a = sample.v - w_bar;
    w.V = w.v_a.norm();
    w.sp = sample.a - gravity();
    w.sp_norm = w.sp.norm();
    w.z_b_fix = cache.z_b_fix;
    if (w.sp_norm < opts.freefall_tol) throw FreeFallError();

    if (w.V < opts.v_min)
    {
        w.branch = FlatnessBranch::LowAirspeed;
        w.x_b = w.sp / w.sp_norm;
        w.a_T = w.sp_norm;
        const Eigen::Vector3d cr = cache.z_b_fix.cross(w.sp);
        if (cr.norm() < 1e-6 * w.sp_norm) throw DegenerateFixError();
        w.y_b = cr / cr.norm();
        w.z_b = w.x_b.cross(w.y_b);
        w.R << w.x_b, w.y_b, w.z_b;
        w.alpha = cache.alpha_prev;
        w.gamma = 0.0;
        w.v_aB = w.R.transpose() * w.v_a;
        // aero deliberately neglected in this branch
        return w;
    }

    w.r = yb_direction_sign(w.v_a, w.sp, cache.y_b_prev);
    w.gamma = compute_gamma(w.v_a, w.sp, w.r);
    w.h_coef = 2.0 * model.mass * w.sp_norm / (model.rho * w.V * w.V * model.S);
    w.alpha = solve_alpha(w.h_coef, w.gamma, cache.alpha_prev, model);
    w.cv = coeff_vector(w.alpha, model);
    w.f_a = model.qbar(w.V) * w.cv.c;
    w.a_T = w.sp_norm * std::cos(w.gamma - w.alpha) - w.f_a.x() / model.mass;

    if (std::abs(w.gamma) < opts.gamma_min)
    {
        w.branch = FlatnessBranch::SmallGamma;
        const Eigen::Vector3d cr = cache.z_b_fix.cross(w.sp);
        if (cr.norm() < 1e-6 * w.sp_norm) throw DegenerateFixError();
        w.y_b = cr / cr.norm();
        // keep R orthonormal: rotate the projection of v_a into the plane
        // normal to y_b (exact when gamma = 0)
        Eigen::Vector3d v_plane = w.v_a - w.v_a.dot(w.y_b) * w.y_b;
        if (v_plane.norm() < 1e-12) throw DegenerateFixError();
        w.x_b = exp_so3(w.alpha * w.y_b) * v_plane.normalized();
    }
    else
    {
        w.branch = FlatnessBranch::Coordinated;
        auto [yb, r] = select_yb(w.v_a, w.sp, cache.y_b_prev);
        w.y_b = yb;
        w.r = r;
        w.x_b = exp_so3(w.alpha * w.y_b) * (w.v_a / w.V);
    }
    w.z_b = w.x_b.cross(w.y_b);
    w.R << w.x_b, w.y_b, w.z_b;
    w.v_aB = w.R.transpose() * w.v_a;
    w.G = aero_force_jacobian(w.v_aB, model);
    return w;
}

// Four linear equations for [aT_dot; omega].
struct RateBlocks
{
    Eigen::Matrix4d N = Eigen::Matrix4d::Zero();
    Eigen::Vector4d h = Eigen::Vector4d::Zero();
    double det_closed = 0.0;  // closed-form determinant for the rank check
};

inline RateBlocks build_rate_blocks(const FlatnessWork &w, const AeroModel &model)
{
    RateBlocks rb;
    const Eigen::Vector3d e1 = Eigen::Vector3d::UnitX();
    const Eigen::Vector3d e2 = Eigen::Vector3d::UnitY();
    const Eigen::Vector3d vdot_a = w.sample.a;   // d v_a / dt, constant w_bar
    const Eigen::Vector3d vddot = w.sample.j;

    if (w.branch == FlatnessBranch::LowAirspeed)
    {
        const double cr_norm = w.z_b_fix.cross(w.sp).norm();
        rb.h(0) = (skew(w.z_b_fix) * vddot).dot(w.z_b);
        rb.h.tail<3>() = vddot;
        rb.N(0, 0) = 0.0;
        rb.N.block<1, 3>(0, 1) = cr_norm * e1.transpose();
        rb.N.block<3, 1>(1, 0) = w.R * e1;
        rb.N.block<3, 3>(1, 1) = -w.a_T * w.R * skew(e1);
        rb.det_closed = -w.a_T * w.a_T * cr_norm;
        return rb;
    }

    const Eigen::Matrix3d Psi = -skew(w.a_T * e1 + w.f_a / model.mass) +
                                (1.0 / model.mass) * w.G * skew(w.v_aB);
    rb.h.tail<3>() =
        vddot - (1.0 / model.mass) * w.R * w.G * w.R.transpose() * vdot_a;
    rb.N.block<3, 1>(1, 0) = w.R * e1;
    rb.N.block<3, 3>(1, 1) = w.R * Psi;

    const double dF = alpha_residual_slope(w.alpha, w.h_coef, w.gamma, model);
    const double qm = model.qbar(w.V) / model.mass;  // rho S V^2 / (2 m)

    if (w.branch == FlatnessBranch::SmallGamma)
    {
        const double cr_norm = w.z_b_fix.cross(w.sp).norm();
        rb.h(0) = (skew(w.z_b_fix) * vddot).dot(w.z_b);
        rb.N.block<1, 3>(0, 1) = cr_norm * e1.transpose();
        const double psi23 = w.sp_norm * std::cos(w.gamma - w.alpha) -
                             qm * w.cv.dcy_dbeta * std::cos(w.alpha);
        if (std::abs(psi23) < 1e-8) throw SingularNError(0.0);
        rb.det_closed = qm * dF * cr_norm * psi23;
    }
    else
    {
        rb.h(0) = w.y_b.dot(vdot_a);
        rb.N.block<1, 3>(0, 1) = w.v_a.transpose() * w.R * skew(e2);
        rb.det_closed = -qm * dF * w.v_a.cross(w.sp).norm();
    }
    return rb;
}

// [aT_dot; omega] = N^-1 h with the rank condition checked on the
// closed-form determinant.
inline Eigen::Vector4d solve_rates(const RateBlocks &rb, const FlatnessOptions &opts = {})
{
    if (std::abs(rb.det_closed) < opts.det_tol) throw SingularNError(rb.det_closed);
    return rb.N.partialPivLu().solve(rb.h);
}

// Time derivatives of N and h along the trajectory, given the already
// solved rates b = [aT_dot; omega].
struct RateDerivativeBlocks
{
    Eigen::Matrix4d dN = Eigen::Matrix4d::Zero();
    Eigen::Vector4d dh = Eigen::Vector4d::Zero();
};

inline RateDerivativeBlocks build_rate_derivative_blocks(const FlatnessWork &w,
                                                         const Eigen::Vector4d &b,
                                                         const AeroModel &model)
{
    RateDerivativeBlocks d;
    const Eigen::Vector3d e1 = Eigen::Vector3d::UnitX();
    const Eigen::Vector3d e2 = Eigen::Vector3d::UnitY();
    const double aT_dot = b(0);
    const Eigen::Vector3d omega = b.tail<3>();
    const Eigen::Vector3d vdot_a = w.sample.a;
    const Eigen::Vector3d vddot_a = w.sample.j;
    const Eigen::Vector3d vddot = w.sample.j;
    const Eigen::Vector3d vdddot = w.sample.s;

    if (w.branch != FlatnessBranch::Coordinated)
    {
        // z_b_fix rows (both singular branches share them)
        const Eigen::Vector3d u = w.z_b_fix.cross(w.sp);
        d.dh(0) = (skew(w.z_b_fix) * vdddot).dot(w.z_b) +
                  (skew(w.z_b_fix) * vddot).dot(w.R * skew(omega) * Eigen::Vector3d::UnitZ());
        const double dn12 =
            -(w.sp.transpose() * skew(w.z_b_fix) * skew(w.z_b_fix) * vddot)(0) / u.norm();
        d.dN.block<1, 3>(0, 1) = dn12 * e1.transpose();
    }

    if (w.branch == FlatnessBranch::LowAirspeed)
    {
        d.dh.tail<3>() = vdddot;
        d.dN.block<3, 1>(1, 0) = w.R * skew(omega) * e1;
        d.dN.block<3, 3>(1, 1) =
            -((w.sp.dot(vddot) / w.a_T) * w.R + w.a_T * w.R * skew(omega)) * skew(e1);
        return d;
    }

    // coordinated h2/N2 blocks (also used by the small-gamma branch)
    const Eigen::Matrix3d Rt = w.R.transpose();
    const Eigen::Vector3d vdot_aB = -skew(omega) * w.v_aB + Rt * vdot_a;
    const double V2 = w.V * w.V;
    const double alpha_dot = w.v_aB.dot(skew(e2) * vdot_aB) / V2;
    const double V_dot = w.v_aB.dot(vdot_aB) / w.V;

    const Eigen::Vector3d c_beta(0.0, w.cv.dcy_dbeta, 0.0);
    const Eigen::Vector3d c_beta_alpha(0.0, w.cv.d_dcy_dbeta_dalpha, 0.0);
    const double rs2 = 0.5 * model.rho * model.S;
    const Eigen::Matrix3d G_dot =
        rs2 * (2.0 * (alpha_dot * w.cv.dc_dalpha * w.v_aB.transpose() +
                      w.cv.c * vdot_aB.transpose()) +
               (alpha_dot * w.cv.d2c_dalpha2 * w.v_aB.transpose() +
                w.cv.dc_dalpha * vdot_aB.transpose()) *
                   skew(e2) +
               (V_dot * c_beta + w.V * alpha_dot * c_beta_alpha) * e2.transpose());

    const double m = model.mass;
    d.dh.tail<3>() = vdddot - (1.0 / m) * w.R *
                                  (skew(omega) * w.G * Rt * vdot_a + G_dot * Rt * vdot_a -
                                   w.G * skew(omega) * Rt * vdot_a + w.G * Rt * vddot_a);

    if (w.branch == FlatnessBranch::Coordinated)
    {
        d.dh(0) = e2.dot(-skew(omega) * Rt * vdot_a + Rt * vddot_a);
        d.dN.block<1, 3>(0, 1) =
            (vdot_a.transpose() * w.R + w.v_a.transpose() * w.R * skew(omega)) * skew(e2);
    }

    const Eigen::Matrix3d Psi =
        -skew(w.a_T * e1 + w.f_a / m) + (1.0 / m) * w.G * skew(w.v_aB);
    const Eigen::Vector3d df_dV = model.rho * w.V * model.S * w.cv.c;
    const Eigen::Vector3d df_dalpha = model.qbar(w.V) * w.cv.dc_dalpha;
    const Eigen::Vector3d f_dot = df_dV * V_dot + df_dalpha * alpha_dot;

    d.dN.block<3, 1>(1, 0) = w.R * skew(omega) * e1;
    d.dN.block<3, 3>(1, 1) =
        w.R * skew(omega) * Psi +
        w.R * (-skew(aT_dot * e1 + f_dot / m) +
               (1.0 / m) * (G_dot * skew(w.v_aB) + w.G * skew(vdot_aB)));
    return d;
}

// [aT_ddot; omega_dot] = N^-1 (dh - dN b)
inline Eigen::Vector4d solve_accelerations(const FlatnessWork &w, const RateBlocks &rb,
                                           const Eigen::Vector4d &b, const AeroModel &model)
{
    const RateDerivativeBlocks d = build_rate_derivative_blocks(w, b, model);
    return rb.N.partialPivLu().solve(d.dh - d.dN * b);
}

// y_b_prev always; alpha_prev only where alpha was solved; z_b_fix only in
// the coordinated branch.
inline void update_cache(FlatnessCache &cache, const FlatnessWork &w)
{
    cache.y_b_prev = w.y_b;
    cache.branch_prev = w.branch;
    if (w.branch != FlatnessBranch::LowAirspeed) cache.alpha_prev = w.alpha;
    if (w.branch == FlatnessBranch::Coordinated) cache.z_b_fix = w.z_b;
}

// Complete transform of Algorithm-style branch structure; updates the cache
// (y_b_prev always, z_b_fix only in the coordinated branch).
inline ReferenceSample flatness_transform(const FlatSample &sample, const Eigen::Vector3d &w_bar,
                                          FlatnessCache &cache, const AeroModel &model,
                                          const FlatnessOptions &opts = {})
{
    const FlatnessWork w = build_flatness_work(sample, w_bar, cache, model, opts);
    const RateBlocks rb = build_rate_blocks(w, model);
    const Eigen::Vector4d b = solve_rates(rb, opts);
    const Eigen::Vector4d bd = solve_accelerations(w, rb, b, model);

    ReferenceSample out;
    out.p = sample.p;
    out.v = sample.v;
    out.a = sample.a;
    out.R = w.R;
    out.a_T = w.a_T;
    out.omega = b.tail<3>();
    out.aT_dot = b(0);
    out.aT_ddot = bd(0);
    out.omega_dot = bd.tail<3>();
    out.alpha = w.alpha;
    out.gamma = w.gamma;
    out.branch = w.branch;
    out.thrust_negative = w.a_T < 0.0;

    const Eigen::Vector3d M_a = aero_moment(airflow_angles(w.v_aB), model);
    out.tau = model.J * out.omega_dot - M_a + out.omega.cross(model.J * out.omega);

    update_cache(cache, w);
    return out;
}

} // namespace tailsitter

#endif // TAILSITTER_FLATNESS_HPP
