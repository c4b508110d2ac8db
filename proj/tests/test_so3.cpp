#include "tailsitter/so3.hpp"

#include "helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace tailsitter;

TEST_CASE("skew matches the cross product componentwise")
{
    CHECK(skew(Eigen::Vector3d::Zero()).isZero(0.0));

    Eigen::Matrix3d expect;
    expect << 0, -1, 0, 1, 0, 0, 0, 0, 0;
    CHECK(skew(Eigen::Vector3d(0, 0, 1)).isApprox(expect, 1e-15));

    std::mt19937 rng(42);
    for (int i = 0; i < 100; ++i)
    {
        const Eigen::Vector3d v = ts_test::random_vec(rng, 5.0);
        const Eigen::Vector3d w = ts_test::random_vec(rng, 5.0);
        const Eigen::Vector3d cross(v.y() * w.z() - v.z() * w.y(),
                                    v.z() * w.x() - v.x() * w.z(),
                                    v.x() * w.y() - v.y() * w.x());
        CHECK((skew(v) * w - cross).norm() < 1e-14);
        CHECK((skew(v).transpose() + skew(v)).norm() == 0.0);
    }
}

TEST_CASE("exp_so3 basics")
{
    CHECK(exp_so3(Eigen::Vector3d::Zero()).isIdentity(0.0));

    // quarter turn about x maps e2 to e3
    const Eigen::Matrix3d R = exp_so3(Eigen::Vector3d(M_PI / 2, 0, 0));
    CHECK((R * Eigen::Vector3d::UnitY() - Eigen::Vector3d::UnitZ()).norm() < 1e-12);
}

TEST_CASE("exp/log round trip")
{
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> ang(0.0, M_PI - 1e-3);
    for (int i = 0; i < 500; ++i)
    {
        Eigen::Vector3d axis = ts_test::random_vec(rng);
        if (axis.norm() < 1e-9) continue;
        axis.normalize();
        const Eigen::Vector3d theta = ang(rng) * axis;
        const Eigen::Matrix3d R = exp_so3(theta);
        CHECK((R.transpose() * R - Eigen::Matrix3d::Identity()).norm() < 1e-12);
        CHECK((log_so3(R) - theta).norm() < 1e-9);
    }
}

TEST_CASE("log_so3 at and near angle pi")
{
    const Eigen::Matrix3d R = exp_so3(Eigen::Vector3d(M_PI, 0, 0));
    const Eigen::Vector3d t = log_so3(R);
    CHECK(std::abs(t.norm() - M_PI) < 1e-9);
    CHECK(std::abs(std::abs(t.x()) - M_PI) < 1e-9);
    CHECK(t.x() > 0.0);  // tie-break: nonnegative first nonzero component

    std::mt19937 rng(7);
    for (int i = 0; i < 50; ++i)
    {
        Eigen::Vector3d axis = ts_test::random_vec(rng);
        axis.normalize();
        const Eigen::Vector3d theta = (M_PI - 1e-6) * axis;
        const Eigen::Matrix3d Rn = exp_so3(theta);
        CHECK((exp_so3(log_so3(Rn)) - Rn).norm() < 1e-9);
    }
}

TEST_CASE("log_so3 rejects non-rotations")
{
    Eigen::Matrix3d M = Eigen::Matrix3d::Identity();
    M(0, 0) = 1.1;
    CHECK_THROWS_AS(log_so3(M), std::invalid_argument);
}

TEST_CASE("jacobian_A identity at zero and continuity at the Taylor switch")
{
    CHECK(jacobian_A(Eigen::Vector3d::Zero()).isIdentity(0.0));

    // both branches evaluated at the switch norm agree
    const Eigen::Vector3d dir = Eigen::Vector3d(1, 2, -0.5).normalized();
    const Eigen::Matrix3d below = jacobian_A((1e-6 - 1e-12) * dir);
    const Eigen::Matrix3d above = jacobian_A((1e-6 + 1e-12) * dir);
    CHECK((below - above).norm() < 1e-10);
}

TEST_CASE("jacobian_A and the exponential-coordinate kinematics")
{
    // The finite-difference oracle on theta(t) = Log(R(t)) shows the exact
    // identity is omega = A(theta)^T theta_dot, i.e. theta_dot = A^-T omega
    // with A as implemented (A^T is the right Jacobian of SO(3)). At theta
    // -> 0 this coincides with theta_dot = A^T omega.
    std::mt19937 rng(77);
    const double h = 1e-6;
    for (int i = 0; i < 20; ++i)
    {
        const Eigen::Vector3d theta0 = ts_test::random_vec(rng, 0.8);
        const Eigen::Vector3d omega = ts_test::random_vec(rng, 1.0);
        const Eigen::Matrix3d R0 = exp_so3(theta0);
        const Eigen::Matrix3d Rp = R0 * exp_so3(omega * h);
        const Eigen::Matrix3d Rm = R0 * exp_so3(-omega * h);
        const Eigen::Vector3d fd = (log_so3(Rp) - log_so3(Rm)) / (2.0 * h);
        CHECK((jacobian_A(theta0).transpose() * fd - omega).norm() < 1e-7);
    }

    // pinned case from the oracle at theta = [0.3, 0, 0]
    const Eigen::Vector3d theta0(0.3, 0.0, 0.0);
    const Eigen::Vector3d omega(0.2, -0.4, 0.15);
    const Eigen::Matrix3d R0 = exp_so3(theta0);
    const Eigen::Vector3d fd =
        (log_so3(R0 * exp_so3(omega * h)) - log_so3(R0 * exp_so3(-omega * h))) / (2.0 * h);
    const Eigen::Vector3d analytic =
        jacobian_A(theta0).transpose().inverse() * omega;
    CHECK((fd - analytic).norm() < 1e-7);
}

TEST_CASE("exp_so3 orthonormality over the full range")
{
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> ang(0.0, M_PI);
    for (int i = 0; i < 200; ++i)
    {
        Eigen::Vector3d axis = ts_test::random_vec(rng);
        if (axis.norm() < 1e-9) continue;
        axis.normalize();
        const Eigen::Matrix3d R = exp_so3(ang(rng) * axis);
        CHECK((R.transpose() * R - Eigen::Matrix3d::Identity()).norm() < 1e-12);
        CHECK(std::abs(R.determinant() - 1.0) < 1e-12);
    }
}

TEST_CASE("project_so3 restores a drifted rotation")
{
    std::mt19937 rng(9);
    const Eigen::Matrix3d R = ts_test::random_rotation(rng);
    Eigen::Matrix3d drifted = R;
    drifted(0, 1) += 1e-4;
    const Eigen::Matrix3d fixed = project_so3(drifted);
    CHECK(is_rotation(fixed, 1e-12));
    CHECK((fixed - R).norm() < 1e-3);
}
