#ifndef TAILSITTER_DYNAMICS_HPP
#define TAILSITTER_DYNAMICS_HPP

#include "tailsitter/aero.hpp"
#include "tailsitter/so3.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace tailsitter {

// NED world frame; gravity is +z with magnitude 9.8 m/s^2 exactly.
inline const Eigen::Vector3d &gravity()
{
    static const Eigen::Vector3d g(0.0, 0.0, 9.8);
    return g;
}

struct VehicleState
{
    Eigen::Vector3d p = Eigen::Vector3d::Zero();   // position, world [m]
    Eigen::Vector3d v = Eigen::Vector3d::Zero();   // velocity, world [m/s]
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d omega = Eigen::Vector3d::Zero();  // body rates [rad/s]
};

struct ControlInput
{
    double a_T = 0.0;  // thrust acceleration along body x [m/s^2]
    Eigen::Vector3d omega_cmd = Eigen::Vector3d::Zero();  // [rad/s]
    Eigen::Vector3d tau = Eigen::Vector3d::Zero();        // torque [N m], full model only
};

// Wind as a function of time with consistent first/second derivatives
// (zero for constant and piecewise-constant winds).
struct WindField
{
    std::function<Eigen::Vector3d(double)> w = [](double) { return Eigen::Vector3d::Zero(); };
    std::function<Eigen::Vector3d(double)> dw = [](double) { return Eigen::Vector3d::Zero(); };
    std::function<Eigen::Vector3d(double)> ddw = [](double) { return Eigen::Vector3d::Zero(); };

    static WindField constant(const Eigen::Vector3d &w0)
    {
        WindField f;
        f.w = [w0](double) { return w0; };
        return f;
    }

    // piecewise-constant schedule: value of the last switch time <= t
    static WindField schedule(std::vector<double> times, std::vector<Eigen::Vector3d> values)
    {
        if (times.empty() || times.size() != values.size())
            throw std::invalid_argument("WindField::schedule: times/values mismatch");
        WindField f;
        f.w = [times = std::move(times), values = std::move(values)](double t) {
            size_t i = 0;
            while (i + 1 < times.size() && times[i + 1] <= t) ++i;
            return (t < times.front()) ? values.front() : values[i];
        };
        return f;
    }
};

struct StateDerivative
{
    Eigen::Vector3d dp = Eigen::Vector3d::Zero();
    Eigen::Vector3d dv = Eigen::Vector3d::Zero();
    Eigen::Matrix3d dR = Eigen::Matrix3d::Zero();
    Eigen::Vector3d domega = Eigen::Vector3d::Zero();
};

// Full rigid-body model:
//   dp = v
//   dv = g + a_T R e1 + (1/m) R f_a
//   dR = R skew(omega)
//   J domega = tau + M_a - omega x J omega
inline StateDerivative full_derivative(const VehicleState &x, const ControlInput &u,
                                       const Eigen::Vector3d &wind, const AeroModel &model)
{
    StateDerivative d;
    const Eigen::Vector3d v_aB = x.R.transpose() * (x.v - wind);
    const AirflowState flow = airflow_angles(v_aB);
    const Eigen::Vector3d f_a = aero_force_body(v_aB, model, /*coordinated=*/false);
    d.dp = x.v;
    d.dv = gravity() + u.a_T * x.R.col(0) + x.R * f_a / model.mass;
    d.dR = x.R * skew(x.omega);
    d.domega = model.J.inverse() *
               (u.tau + aero_moment(flow, model) - x.omega.cross(model.J * x.omega));
    return d;
}

// Reduced model: omega is an input, the rotational dynamics row is dropped.
inline StateDerivative reduced_derivative(const Eigen::Vector3d &v, const Eigen::Matrix3d &R,
                                          double a_T, const Eigen::Vector3d &omega,
                                          const Eigen::Vector3d &wind, const AeroModel &model)
{
    StateDerivative d;
    const Eigen::Vector3d v_aB = R.transpose() * (v - wind);
    const Eigen::Vector3d f_a = aero_force_body(v_aB, model, /*coordinated=*/false);
    d.dp = v;
    d.dv = gravity() + a_T * R.col(0) + R * f_a / model.mass;
    d.dR = R * skew(omega);
    return d;
}

namespace detail {

inline VehicleState state_add(const VehicleState &x, const StateDerivative &d, double h)
{
    VehicleState y;
    y.p = x.p + h * d.dp;
    y.v = x.v + h * d.dv;
    y.R = x.R + h * d.dR;  // chart lift; re-projected after the full step
    y.omega = x.omega + h * d.domega;
    return y;
}

inline StateDerivative deriv_sum(const StateDerivative &k1, const StateDerivative &k2,
                                 const StateDerivative &k3, const StateDerivative &k4)
{
    StateDerivative d;
    d.dp = (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp) / 6.0;
    d.dv = (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv) / 6.0;
    d.dR = (k1.dR + 2.0 * k2.dR + 2.0 * k3.dR + k4.dR) / 6.0;
    d.domega = (k1.domega + 2.0 * k2.domega + 2.0 * k3.domega + k4.domega) / 6.0;
    return d;
}

} // namespace detail

// One classical RK4 step of the full model with u held constant; the
// rotation is integrated in the ambient space and polar-projected back.
inline VehicleState rk4_step(const VehicleState &x, const ControlInput &u,
                             const Eigen::Vector3d &wind, const AeroModel &model, double dt)
{
    const StateDerivative k1 = full_derivative(x, u, wind, model);
    const StateDerivative k2 = full_derivative(detail::state_add(x, k1, 0.5 * dt), u, wind, model);
    const StateDerivative k3 = full_derivative(detail::state_add(x, k2, 0.5 * dt), u, wind, model);
    const StateDerivative k4 = full_derivative(detail::state_add(x, k3, dt), u, wind, model);
    VehicleState y = detail::state_add(x, detail::deriv_sum(k1, k2, k3, k4), dt);
    y.R = project_so3(y.R);
    if (!y.p.allFinite() || !y.v.allFinite() || !y.omega.allFinite())
        throw std::runtime_error("rk4_step: state diverged to non-finite values");
    return y;
}

// Fixed-step RK4 trajectory; u_of_t is sampled once per step (zero-order
// hold within the step).
inline std::vector<VehicleState> integrate_rk4(const VehicleState &x0,
                                               const std::function<ControlInput(double)> &u_of_t,
                                               const WindField &wind, const AeroModel &model,
                                               double dt, int steps)
{
    if (dt <= 0.0) throw std::invalid_argument("integrate_rk4: dt must be positive");
    std::vector<VehicleState> out;
    out.reserve(static_cast<size_t>(steps) + 1);
    out.push_back(x0);
    double t = 0.0;
    for (int i = 0; i < steps; ++i)
    {
        out.push_back(rk4_step(out.back(), u_of_t(t), wind.w(t), model, dt));
        t += dt;
    }
    return out;
}

// Reduced (high-level) state: omega is an input, not a state.
struct ReducedState
{
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    Eigen::Vector3d v = Eigen::Vector3d::Zero();
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
};

// (a_T, omega) as a function of time
using ReducedInput = std::function<std::pair<double, Eigen::Vector3d>(double)>;

// RK4 step of the reduced model with inputs and wind sampled at the stage
// times, so smooth inputs integrate at full fourth order.
inline ReducedState rk4_step_reduced(const ReducedState &x, const ReducedInput &u_of_t, double t,
                                     const WindField &wind, const AeroModel &model, double dt)
{
    auto f = [&](const ReducedState &s, double tq) {
        const auto [a_T, omega] = u_of_t(tq);
        return reduced_derivative(s.v, s.R, a_T, omega, wind.w(tq), model);
    };
    auto add = [](const ReducedState &s, const StateDerivative &d, double h) {
        ReducedState y;
        y.p = s.p + h * d.dp;
        y.v = s.v + h * d.dv;
        y.R = s.R + h * d.dR;
        return y;
    };
    const StateDerivative k1 = f(x, t);
    const StateDerivative k2 = f(add(x, k1, 0.5 * dt), t + 0.5 * dt);
    const StateDerivative k3 = f(add(x, k2, 0.5 * dt), t + 0.5 * dt);
    const StateDerivative k4 = f(add(x, k3, dt), t + dt);
    StateDerivative sum;
    sum.dp = (k1.dp + 2 * k2.dp + 2 * k3.dp + k4.dp) / 6.0;
    sum.dv = (k1.dv + 2 * k2.dv + 2 * k3.dv + k4.dv) / 6.0;
    sum.dR = (k1.dR + 2 * k2.dR + 2 * k3.dR + k4.dR) / 6.0;
    ReducedState y = add(x, sum, dt);
    y.R = project_so3(y.R);
    if (!y.p.allFinite() || !y.v.allFinite())
        throw std::runtime_error("rk4_step_reduced: state diverged to non-finite values");
    return y;
}

// Full-model RK4 step with u and wind sampled at the stage times.
inline VehicleState rk4_step_continuous(const VehicleState &x,
                                        const std::function<ControlInput(double)> &u_of_t,
                                        double t, const WindField &wind, const AeroModel &model,
                                        double dt)
{
    auto f = [&](const VehicleState &s, double tq) {
        return full_derivative(s, u_of_t(tq), wind.w(tq), model);
    };
    const StateDerivative k1 = f(x, t);
    const StateDerivative k2 = f(detail::state_add(x, k1, 0.5 * dt), t + 0.5 * dt);
    const StateDerivative k3 = f(detail::state_add(x, k2, 0.5 * dt), t + 0.5 * dt);
    const StateDerivative k4 = f(detail::state_add(x, k3, dt), t + dt);
    VehicleState y = detail::state_add(x, detail::deriv_sum(k1, k2, k3, k4), dt);
    y.R = project_so3(y.R);
    if (!y.p.allFinite() || !y.v.allFinite() || !y.omega.allFinite())
        throw std::runtime_error("rk4_step_continuous: state diverged to non-finite values");
    return y;
}

// Simplified low-level rate loop: first-order lag toward omega_cmd with a
// per-axis angular-acceleration clamp. Stands in for the onboard rate PIDs.
struct RateActuator
{
    double time_constant = 0.03;    // [s]
    double accel_limit = 300.0;     // [rad/s^2], per axis
};

inline Eigen::Vector3d rate_actuator_step(const Eigen::Vector3d &omega,
                                          const Eigen::Vector3d &omega_cmd, double dt,
                                          const RateActuator &act = {})
{
    Eigen::Vector3d delta = (dt / act.time_constant) * (omega_cmd - omega);
    const double max_step = act.accel_limit * dt;
    delta = delta.cwiseMax(-max_step).cwiseMin(max_step);
    return omega + delta;
}

} // namespace tailsitter

#endif // TAILSITTER_DYNAMICS_HPP
