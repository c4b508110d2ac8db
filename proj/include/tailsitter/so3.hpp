#ifndef TAILSITTER_SO3_HPP
#define TAILSITTER_SO3_HPP

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace tailsitter {

inline Eigen::Matrix3d skew(const Eigen::Vector3d &v)
{
    Eigen::Matrix3d m;
    m << 0.0, -v(2), v(1),
        v(2), 0.0, -v(0),
        -v(1), v(0), 0.0;
    return m;
}

inline Eigen::Vector3d vee(const Eigen::Matrix3d &m)
{
    return Eigen::Vector3d(m(2, 1), m(0, 2), m(1, 0));
}

// Rodrigues formula with a second-order Taylor fallback below 1e-8 rad.
inline Eigen::Matrix3d exp_so3(const Eigen::Vector3d &theta)
{
    const double angle = theta.norm();
    const Eigen::Matrix3d K = skew(theta);
    if (angle < 1e-8)
    {
        return Eigen::Matrix3d::Identity() + K + 0.5 * K * K;
    }
    const double s = std::sin(angle) / angle;
    const double c = (1.0 - std::cos(angle)) / (angle * angle);
    return Eigen::Matrix3d::Identity() + s * K + c * K * K;
}

inline bool is_rotation(const Eigen::Matrix3d &R, double tol = 1e-6)
{
    const double ortho = (R.transpose() * R - Eigen::Matrix3d::Identity()).norm();
    return ortho < tol && std::abs(R.determinant() - 1.0) < tol;
}

// Logarithmic map; the returned vector satisfies norm(theta) <= pi.
// Angles near pi are recovered from the symmetric part of R. At exactly pi
// the axis sign is fixed so its first nonzero component is nonnegative.
inline Eigen::Vector3d log_so3(const Eigen::Matrix3d &R)
{
    if (!is_rotation(R))
    {
        throw std::invalid_argument("log_so3: input is not a rotation matrix");
    }
    const double cos_angle = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
    const double angle = std::acos(cos_angle);

    if (angle < 1e-7)
    {
        // theta ~ vee(R - R^T)/2 * (1 + angle^2/6)
        return 0.5 * (1.0 + angle * angle / 6.0) * vee(R - R.transpose());
    }
    if (angle > M_PI - 1e-4)
    {
        // The vee-part formula loses precision as sin(angle) -> 0; recover
        // the axis from the dominant diagonal (the symmetric part stays
        // well conditioned at pi) with the antisymmetric part fixing signs.
        int k = 0;
        R.diagonal().maxCoeff(&k);
        const int i1 = (k + 1) % 3, i2 = (k + 2) % 3;
        Eigen::Vector3d q;  // vector part of the unit quaternion
        q(k) = 0.5 * std::sqrt(std::max(1.0 + R(k, k) - R(i1, i1) - R(i2, i2), 0.0));
        q(i1) = (R(i1, k) + R(k, i1)) / (4.0 * q(k));
        q(i2) = (R(i2, k) + R(k, i2)) / (4.0 * q(k));
        double qw = (R(i2, i1) - R(i1, i2)) / (4.0 * q(k));
        if (qw < 0.0)
        {
            qw = -qw;
            q = -q;
        }
        const double half = std::atan2(q.norm(), qw);
        Eigen::Vector3d axis = q.normalized();
        if (qw < 1e-12)
        {
            // angle is pi: pick the axis with nonnegative first nonzero entry
            for (int i = 0; i < 3; ++i)
            {
                if (std::abs(axis(i)) > 1e-12)
                {
                    if (axis(i) < 0.0) axis = -axis;
                    break;
                }
            }
        }
        return 2.0 * half * axis;
    }
    return 0.5 * angle / std::sin(angle) * vee(R - R.transpose());
}

// Jacobian of the exponential coordinates:
//   A(theta) = I + (1-cos|t|)/|t|^2 skew(t) + (1 - sin|t|/|t|) skew(t)^2/|t|^2
// so that d/dt Log(R(t)) = A(theta)^T omega with omega = vee(R^T dR/dt).
inline Eigen::Matrix3d jacobian_A(const Eigen::Vector3d &theta)
{
    const double angle = theta.norm();
    const Eigen::Matrix3d K = skew(theta);
    if (angle < 1e-6)
    {
        return Eigen::Matrix3d::Identity() + 0.5 * K + (1.0 / 6.0) * K * K;
    }
    const double a2 = angle * angle;
    const double c1 = (1.0 - std::cos(angle)) / a2;
    const double c2 = (1.0 - std::sin(angle) / angle) / a2;
    return Eigen::Matrix3d::Identity() + c1 * K + c2 * K * K;
}

// Nearest rotation in Frobenius norm (polar projection via SVD).
inline Eigen::Matrix3d project_so3(const Eigen::Matrix3d &M)
{
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d R = svd.matrixU() * svd.matrixV().transpose();
    if (R.determinant() < 0.0)
    {
        Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
        D(2, 2) = -1.0;
        R = svd.matrixU() * D * svd.matrixV().transpose();
    }
    return R;
}

} // namespace tailsitter

#endif // TAILSITTER_SO3_HPP
