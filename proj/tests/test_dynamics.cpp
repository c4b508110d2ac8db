#include "tailsitter/dynamics.hpp"

#include "helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace tailsitter;

namespace {

// hover attitude: body x pointing up (-z in NED), yaw along world x
Eigen::Matrix3d hover_attitude()
{
    Eigen::Matrix3d R;
    R.col(0) = -Eigen::Vector3d::UnitZ();
    R.col(1) = Eigen::Vector3d::UnitY();
    R.col(2) = R.col(0).cross(R.col(1));
    return R;
}

AeroModel test_model()
{
    AeroModel m;
    m.rho = 1.225;
    m.S = 0.4;
    m.mass = 2.4;
    m.J = Eigen::Vector3d(0.05, 0.06, 0.08).asDiagonal();
    return m;
}

AeroModel no_aero_model()
{
    AeroModel m = test_model();
    m.S = 0.0;
    return m;
}

} // namespace

TEST_CASE("hover force balance")
{
    const AeroModel m = test_model();
    VehicleState x;
    x.R = hover_attitude();
    ControlInput u;
    u.a_T = 9.8;
    const StateDerivative d = full_derivative(x, u, Eigen::Vector3d::Zero(), m);
    CHECK(d.dv.norm() < 1e-12);
    CHECK(d.dp.norm() == 0.0);
    CHECK(d.domega.norm() < 1e-12);
}

TEST_CASE("free fall")
{
    const AeroModel m = test_model();
    VehicleState x;  // zero airspeed, zero thrust
    ControlInput u;
    const StateDerivative d = full_derivative(x, u, Eigen::Vector3d::Zero(), m);
    CHECK((d.dv - Eigen::Vector3d(0, 0, 9.8)).norm() < 1e-14);
}

TEST_CASE("translational dynamics against a scalar re-implementation")
{
    const AeroModel m = test_model();
    std::mt19937 rng(23);
    for (int i = 0; i < 100; ++i)
    {
        VehicleState x;
        x.v = ts_test::random_vec(rng, 15.0);
        x.R = ts_test::random_rotation(rng);
        x.omega = ts_test::random_vec(rng, 3.0);
        ControlInput u;
        u.a_T = std::abs(ts_test::random_vec(rng, 10.0).x());
        u.tau = ts_test::random_vec(rng, 0.2);
        const Eigen::Vector3d wind = ts_test::random_vec(rng, 4.0);

        const StateDerivative d = full_derivative(x, u, wind, m);

        // componentwise: vdot = g + a_T R e1 + R f_a / m
        const Eigen::Vector3d vab = x.R.transpose() * (x.v - wind);
        const double V = vab.norm();
        const double alpha = std::atan2(vab.z(), vab.x());
        const double beta = (V > 0) ? std::asin(vab.y() / V) : 0.0;
        const double CL = std::sin(2 * alpha), CD = 2 * std::sin(alpha) * std::sin(alpha);
        const double q = 0.5 * m.rho * V * V * m.S;
        const Eigen::Vector3d fa(q * (-CD * std::cos(alpha) + CL * std::sin(alpha)),
                                 q * (-0.5 * beta),
                                 q * (-CD * std::sin(alpha) - CL * std::cos(alpha)));
        Eigen::Vector3d expect = Eigen::Vector3d(0, 0, 9.8);
        for (int k = 0; k < 3; ++k)
        {
            expect(k) += u.a_T * x.R(k, 0);
            for (int l = 0; l < 3; ++l) expect(k) += x.R(k, l) * fa(l) / m.mass;
        }
        CHECK((d.dv - expect).norm() < 1e-10 * std::max(1.0, expect.norm()));

        // omega dot row
        const Eigen::Vector3d wexp =
            m.J.inverse() * (u.tau - x.omega.cross(m.J * x.omega));
        CHECK((d.domega - wexp).norm() < 1e-10 * std::max(1.0, wexp.norm()));
    }
}

TEST_CASE("reduced derivative equals the translational rows of the full model")
{
    const AeroModel m = test_model();
    std::mt19937 rng(29);
    for (int i = 0; i < 50; ++i)
    {
        VehicleState x;
        x.v = ts_test::random_vec(rng, 12.0);
        x.R = ts_test::random_rotation(rng);
        x.omega = ts_test::random_vec(rng, 2.0);
        ControlInput u;
        u.a_T = 5.0;
        const Eigen::Vector3d wind = ts_test::random_vec(rng, 3.0);
        const StateDerivative full = full_derivative(x, u, wind, m);
        const StateDerivative red = reduced_derivative(x.v, x.R, u.a_T, x.omega, wind, m);
        CHECK((full.dp - red.dp).norm() == 0.0);
        CHECK((full.dv - red.dv).norm() == 0.0);
        CHECK((full.dR - red.dR).norm() == 0.0);
    }
}

TEST_CASE("rk4 hover for one second stays put")
{
    const AeroModel m = test_model();
    VehicleState x;
    x.R = hover_attitude();
    ControlInput u;
    u.a_T = 9.8;
    const auto traj = integrate_rk4(
        x, [&](double) { return u; }, WindField::constant({0, 0, 0}), m, 1e-3, 1000);
    CHECK(traj.back().p.norm() < 1e-9);
    CHECK(is_rotation(traj.back().R, 1e-9));
}

TEST_CASE("ballistic velocity gain is exact")
{
    const AeroModel m = no_aero_model();
    VehicleState x;
    const auto traj = integrate_rk4(
        x, [](double) { return ControlInput{}; }, WindField::constant({0, 0, 0}), m, 1e-3, 1000);
    CHECK((traj.back().v - Eigen::Vector3d(0, 0, 9.8)).norm() < 1e-9);
}

TEST_CASE("integrator is fourth order on a smooth maneuver")
{
    const AeroModel m = test_model();
    VehicleState x0;
    x0.v = Eigen::Vector3d(6.0, 0.0, -2.0);
    x0.R = hover_attitude();
    x0.omega = Eigen::Vector3d(1.0, -2.0, 0.5);
    auto u_of_t = [](double t) {
        ControlInput u;
        u.a_T = 9.8 + 6.0 * std::sin(5.0 * t);
        u.tau = Eigen::Vector3d(0.6 * std::sin(4.0 * t), 0.5 * std::cos(3.0 * t),
                                0.4 * std::sin(2.0 * t));
        return u;
    };
    const WindField wind = WindField::constant({0.5, -0.3, 0.0});

    auto run = [&](double dt) {
        VehicleState x = x0;
        const int n = static_cast<int>(std::round(2.0 / dt));
        for (int i = 0; i < n; ++i) x = rk4_step_continuous(x, u_of_t, i * dt, wind, m, dt);
        return x;
    };
    const VehicleState ref = run(1e-3);
    auto err = [&](double dt) {
        const VehicleState x = run(dt);
        return (x.p - ref.p).norm() + (x.v - ref.v).norm();
    };
    // halving dt should reduce the error by ~16x; 8x is the pass line
    CHECK(err(8e-3) / err(4e-3) >= 8.0);
}

TEST_CASE("energy conservation without aero and thrust")
{
    const AeroModel m = no_aero_model();
    VehicleState x;
    x.v = Eigen::Vector3d(3.0, -1.0, 0.5);
    x.omega = Eigen::Vector3d(1.0, 2.0, -0.5);
    x.R = hover_attitude();

    auto energy = [&](const VehicleState &s) {
        return 0.5 * m.mass * s.v.squaredNorm() - m.mass * 9.8 * s.p.z() +
               0.5 * s.omega.dot(m.J * s.omega);
    };
    const double E0 = energy(x);
    const auto traj = integrate_rk4(
        x, [](double) { return ControlInput{}; }, WindField::constant({0, 0, 0}), m, 1e-3, 1000);
    CHECK(std::abs(energy(traj.back()) - E0) < 1e-8 * std::abs(E0));
}

TEST_CASE("rate actuator")
{
    RateActuator act;
    act.time_constant = 0.03;

    // fixed point
    const Eigen::Vector3d w0(0.4, -0.2, 0.1);
    CHECK((rate_actuator_step(w0, w0, 1e-3, act) - w0).norm() == 0.0);

    // first-order step response reaches ~63.2% after one time constant
    Eigen::Vector3d w = Eigen::Vector3d::Zero();
    const Eigen::Vector3d cmd(1.0, 0.0, 0.0);
    const double dt = 1e-3;
    for (int i = 0; i < 30; ++i) w = rate_actuator_step(w, cmd, dt, act);
    CHECK(w.x() == Catch::Approx(1.0 - std::exp(-1.0)).epsilon(0.01));

    // clamp limits the per-step change
    act.accel_limit = 50.0;
    const Eigen::Vector3d big = rate_actuator_step({0, 0, 0}, {100.0, 0, 0}, dt, act);
    CHECK(big.x() == Catch::Approx(50.0 * dt));
}

TEST_CASE("wind schedule")
{
    const WindField f = WindField::schedule({0.0, 1.0, 2.0},
                                            {Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 2, 0),
                                             Eigen::Vector3d(0, 0, 3)});
    CHECK(f.w(0.5).x() == 1.0);
    CHECK(f.w(1.5).y() == 2.0);
    CHECK(f.w(5.0).z() == 3.0);
    CHECK(f.dw(0.5).norm() == 0.0);
}

TEST_CASE("non-finite state aborts with a diagnostic")
{
    const AeroModel m = test_model();
    VehicleState x;
    x.v = Eigen::Vector3d(1e308, 0, 0);
    ControlInput u;
    u.a_T = 1e308;
    CHECK_THROWS_AS(rk4_step(x, u, Eigen::Vector3d::Zero(), m, 1.0), std::runtime_error);
}
