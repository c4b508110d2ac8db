#ifndef TAILSITTER_TEST_HELPERS_HPP
#define TAILSITTER_TEST_HELPERS_HPP

#include "tailsitter/flatness.hpp"
#include "tailsitter/so3.hpp"

#include <Eigen/Dense>

#include <functional>
#include <random>

namespace ts_test {

using tailsitter::FlatSample;

inline Eigen::Vector3d random_vec(std::mt19937 &rng, double scale = 1.0)
{
    std::uniform_real_distribution<double> d(-scale, scale);
    return Eigen::Vector3d(d(rng), d(rng), d(rng));
}

inline Eigen::Matrix3d random_rotation(std::mt19937 &rng)
{
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    Eigen::Vector3d axis(d(rng), d(rng), d(rng));
    if (axis.norm() < 1e-6) axis = Eigen::Vector3d::UnitX();
    axis.normalize();
    std::uniform_real_distribution<double> ang(-M_PI + 1e-3, M_PI - 1e-3);
    return tailsitter::exp_so3(ang(rng) * axis);
}

// direct cofactor-expansion determinant, independent of any closed form
inline double det3_cofactor(const Eigen::Matrix3d &m)
{
    return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
           m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
           m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

inline double det4_cofactor(const Eigen::Matrix4d &m)
{
    double det = 0.0;
    for (int c = 0; c < 4; ++c)
    {
        Eigen::Matrix3d minor;
        for (int r = 1; r < 4; ++r)
        {
            int cc = 0;
            for (int k = 0; k < 4; ++k)
            {
                if (k == c) continue;
                minor(r - 1, cc++) = m(r, k);
            }
        }
        det += ((c % 2 == 0) ? 1.0 : -1.0) * m(0, c) * det3_cofactor(minor);
    }
    return det;
}

// analytic flat-output trajectories with exact derivatives up to snap
struct AnalyticFlat
{
    std::function<FlatSample(double)> at;
};

// constant-altitude circle; acceleration is always perpendicular to the
// velocity so gamma = +-pi/2 (firmly coordinated)
inline AnalyticFlat loiter(double radius, double speed,
                           const Eigen::Vector3d &center = Eigen::Vector3d::Zero())
{
    const double om = speed / radius;
    AnalyticFlat f;
    f.at = [=](double t) {
        FlatSample s;
        const double c = std::cos(om * t), sn = std::sin(om * t);
        s.p = center + radius * Eigen::Vector3d(c, sn, 0.0);
        s.v = radius * om * Eigen::Vector3d(-sn, c, 0.0);
        s.a = radius * om * om * Eigen::Vector3d(-c, -sn, 0.0);
        s.j = radius * om * om * om * Eigen::Vector3d(sn, -c, 0.0);
        s.s = radius * om * om * om * om * Eigen::Vector3d(c, sn, 0.0);
        return s;
    };
    return f;
}

// smooth polynomial-in-sin blend useful for branch-crossing profiles:
// straight line along dir with speed v0 + amp*sin(w t)
inline AnalyticFlat wavy_line(const Eigen::Vector3d &dir, double v0, double amp, double w)
{
    AnalyticFlat f;
    f.at = [=](double t) {
        FlatSample s;
        const double c = std::cos(w * t), sn = std::sin(w * t);
        s.p = dir * (v0 * t - amp / w * (c - 1.0));
        s.v = dir * (v0 + amp * sn);
        s.a = dir * (amp * w * c);
        s.j = dir * (-amp * w * w * sn);
        s.s = dir * (-amp * w * w * w * c);
        return s;
    };
    return f;
}

} // namespace ts_test

#endif
