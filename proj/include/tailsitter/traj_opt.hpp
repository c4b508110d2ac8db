#ifndef TAILSITTER_TRAJ_OPT_HPP
#define TAILSITTER_TRAJ_OPT_HPP

#include "tailsitter/flatness.hpp"
#include "tailsitter/flatness_gradients.hpp"
#include "tailsitter/lbfgs.hpp"
#include "tailsitter/poly_traj.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace tailsitter {

struct PlanningProblem
{
    BoundaryState s0, sf;
    std::vector<Eigen::Vector3d> waypoints;
    int ctrl_points_per_gap = 3;

    Eigen::Vector4d W = Eigen::Vector4d(0.01, 1.0, 1.0, 1.0);  // control-effort weight
    double rho = 100.0;                                        // time penalty

    double v_max = 12.0;
    Eigen::Vector4d u_min = Eigen::Vector4d(6.0, -3.49, -3.49, -3.49);
    Eigen::Vector4d u_max = Eigen::Vector4d(16.0, 3.49, 3.49, 3.49);
    double sing_eps = 0.1;  // |vdot - g| >= eps

    double w_input = 1e3;
    double w_vel = 1e3;
    double w_sing = 1e4;

    Eigen::Vector3d w_bar = Eigen::Vector3d::Zero();
    AeroModel model;
    FlatnessOptions flat_opts;
    Eigen::Matrix3d R0 = (Eigen::Matrix3d() << 0, 0, 1, 0, 1, 0, -1, 0, 0).finished();

    int num_gaps() const { return static_cast<int>(waypoints.size()) + 1; }
    int num_segments() const { return num_gaps() * (ctrl_points_per_gap + 1); }
    int num_interior() const { return num_segments() - 1; }
    int num_free_points() const { return num_gaps() * ctrl_points_per_gap; }
};

namespace detail {

// C^2 one-sided cubic hinge on the relative violation
inline double hinge(double violation, double scale, double &dpen_dviolation)
{
    if (violation <= 0.0)
    {
        dpen_dviolation = 0.0;
        return 0.0;
    }
    const double y = violation / scale;
    dpen_dviolation = 3.0 * y * y / scale;
    return y * y * y;
}

// interleave control points and fixed waypoints into the interior sequence
inline void scatter_interior(const PlanningProblem &prob, const Eigen::Matrix3Xd &free_points,
                             Eigen::Matrix3Xd &interior, std::vector<int> &free_index)
{
    const int N = prob.ctrl_points_per_gap;
    interior.resize(3, prob.num_interior());
    free_index.assign(prob.num_interior(), -1);
    int col = 0, free_col = 0;
    for (int gap = 0; gap < prob.num_gaps(); ++gap)
    {
        for (int k = 0; k < N; ++k)
        {
            interior.col(col) = free_points.col(free_col);
            free_index[col] = free_col;
            ++col;
            ++free_col;
        }
        if (gap < static_cast<int>(prob.waypoints.size()))
        {
            interior.col(col) = prob.waypoints[gap];
            ++col;
        }
    }
}

} // namespace detail

struct ObjectiveReport
{
    double J = 0.0;
    double effort = 0.0, time_cost = 0.0, penalty = 0.0;
    int transform_failures = 0;
};

// Objective of the soft-constrained planning problem and its gradient
// with respect to the free control points and the segment durations.
inline ObjectiveReport objective_and_gradient(const PlanningProblem &prob,
                                              const Eigen::Matrix3Xd &free_points,
                                              const Eigen::VectorXd &durations,
                                              Eigen::Matrix3Xd *grad_points,
                                              Eigen::VectorXd *grad_times,
                                              SplineBuilder *reuse_builder = nullptr)
{
    static constexpr int kNodes = 16;  // trapezoid intervals per segment

    SplineBuilder local_builder;
    SplineBuilder &builder = reuse_builder ? *reuse_builder : local_builder;
    if (builder.num_segments() != prob.num_segments())
        builder.setup(prob.s0, prob.sf, prob.num_segments());

    Eigen::Matrix3Xd interior;
    std::vector<int> free_index;
    detail::scatter_interior(prob, free_points, interior, free_index);
    builder.set_points_and_times(interior, durations);
    const FlatTrajectory &traj = builder.trajectory();

    const int K = prob.num_segments();
    Eigen::MatrixXd grad_by_coeffs = Eigen::MatrixXd::Zero(8 * K, 3);
    Eigen::VectorXd grad_by_times = Eigen::VectorXd::Constant(K, prob.rho);

    ObjectiveReport rep;
    rep.time_cost = prob.rho * durations.sum();
    rep.J = rep.time_cost;

    FlatnessCache cache = FlatnessCache::from_initial_attitude(prob.R0);
    const Eigen::Matrix<double, 1, 9> zero19 = Eigen::Matrix<double, 1, 9>::Zero();
    const double eps2 = prob.sing_eps * prob.sing_eps;

    for (int i = 0; i < K; ++i)
    {
        const double T = durations(i);
        for (int k = 0; k <= kNodes; ++k)
        {
            const double sigma = static_cast<double>(k) / kNodes;
            const double tau = sigma * T;
            const double wq = (k == 0 || k == kNodes) ? 0.5 * T / kNodes : T / kNodes;

            FlatSample s;
            s.p = traj.derivative(i, tau, 0);
            s.v = traj.derivative(i, tau, 1);
            s.a = traj.derivative(i, tau, 2);
            s.j = traj.derivative(i, tau, 3);
            const Eigen::Vector3d snap = traj.derivative(i, tau, 4);

            double L = 0.0;                                      // integrand
            Eigen::Matrix<double, 1, 9> dL_dP = zero19;          // d L / d (v, vdot, vddot)

            // velocity bound penalty
            {
                double dpen;
                const double pen =
                    detail::hinge(s.v.squaredNorm() - prob.v_max * prob.v_max,
                                  prob.v_max * prob.v_max, dpen);
                L += prob.w_vel * pen;
                dL_dP.block<1, 3>(0, 0) += prob.w_vel * dpen * 2.0 * s.v.transpose();
            }
            // singularity margin penalty: |vdot - g|^2 >= eps^2
            const Eigen::Vector3d sp = s.a - gravity();
            {
                double dpen;
                const double pen = detail::hinge(eps2 - sp.squaredNorm(), eps2, dpen);
                L += prob.w_sing * pen;
                dL_dP.block<1, 3>(0, 3) += prob.w_sing * dpen * (-2.0) * sp.transpose();
            }

            // control effort and input bound penalties through the flatness map
            bool have_u = false;
            Eigen::Vector4d u;
            Eigen::Matrix<double, 4, 9> du_dP;
            try
            {
                const FlatnessWork w =
                    build_flatness_work(s, prob.w_bar, cache, prob.model, prob.flat_opts);
                const RateBlocks rb = build_rate_blocks(w, prob.model);
                const Eigen::Vector4d b = solve_rates(rb, prob.flat_opts);
                u << w.a_T, b.tail<3>();
                du_dP = flatness_gradients(w, b, prob.model);
                have_u = true;
                update_cache(cache, w);
            }
            catch (const NoRootError &)
            {
                // finite penalty with a subgradient pushing F(alpha) toward
                // a sign change (gradient of min |F| over alpha)
                ++rep.transform_failures;
                const Eigen::Vector3d v_a = s.v - prob.w_bar;
                const double V = v_a.norm(), spn = sp.norm();
                const double hc = 2.0 * prob.model.mass * spn /
                                  (prob.model.rho * V * V * prob.model.S);
                const double r = (v_a.cross(sp).dot(cache.y_b_prev) < 0.0) ? -1.0 : 1.0;
                const double gamma = compute_gamma(v_a, sp, r);
                double gap = 1e30, alpha_star = 0.0;
                for (int a = -180; a <= 180; ++a)
                {
                    const double al = a * M_PI / 180.0;
                    const double F = std::abs(alpha_residual(al, hc, gamma, prob.model));
                    if (F < gap)
                    {
                        gap = F;
                        alpha_star = al;
                    }
                }
                const double Fs = alpha_residual(alpha_star, hc, gamma, prob.model);
                const double sgn = (Fs >= 0.0) ? 1.0 : -1.0;
                // dF/dh and dF/dgamma at alpha*
                const double dF_dh = std::sin(gamma - alpha_star);
                const double dF_dgamma = hc * std::cos(gamma - alpha_star);
                Eigen::Matrix<double, 1, 9> dh_dP = zero19, dgamma_dP = zero19;
                dh_dP.block<1, 3>(0, 3) =
                    (2.0 * prob.model.mass / (prob.model.rho * prob.model.S)) *
                    sp.transpose() / (spn * V * V);
                dh_dP.block<1, 3>(0, 0) =
                    (2.0 * prob.model.mass / (prob.model.rho * prob.model.S)) *
                    (-2.0 * spn / (V * V * V * V)) * v_a.transpose();
                const double singam = std::max(std::abs(std::sin(gamma)), 1e-9);
                dgamma_dP.block<1, 3>(0, 3) =
                    (r / singam) * (std::cos(gamma) * sp.transpose() / (spn * spn) -
                                    v_a.transpose() / (spn * V));
                dgamma_dP.block<1, 3>(0, 0) =
                    (r / singam) * (std::cos(gamma) * v_a.transpose() / (V * V) -
                                    sp.transpose() / (spn * V));
                L += 1e6 * gap;
                dL_dP += 1e6 * sgn * (dF_dh * dh_dP + dF_dgamma * dgamma_dP);
            }
            catch (const FlatnessError &)
            {
                // free fall / singular N at this node: flat cliff, the
                // singularity hinge supplies the restoring gradient
                ++rep.transform_failures;
                L += 1e6;
            }

            if (have_u)
            {
                const Eigen::Vector4d Wu = prob.W.asDiagonal() * u;
                rep.effort += wq * u.dot(Wu);
                L += u.dot(Wu);
                dL_dP += 2.0 * Wu.transpose() * du_dP;
                for (int c = 0; c < 4; ++c)
                {
                    const double range = std::max(1e-6, prob.u_max(c) - prob.u_min(c));
                    double dpen;
                    double pen = detail::hinge(u(c) - prob.u_max(c), range, dpen);
                    L += prob.w_input * pen;
                    dL_dP += prob.w_input * dpen * du_dP.row(c);
                    pen = detail::hinge(prob.u_min(c) - u(c), range, dpen);
                    L += prob.w_input * pen;
                    dL_dP -= prob.w_input * dpen * du_dP.row(c);
                }
            }

            rep.J += wq * L;
            rep.penalty += wq * L - ((have_u) ? wq * u.dot(prob.W.asDiagonal() * u) : 0.0);

            if (grad_points || grad_times)
            {
                // chain into the segment coefficients
                for (int r = 1; r <= 3; ++r)
                {
                    const Eigen::Matrix<double, 8, 1> beta = poly_basis(tau, r);
                    grad_by_coeffs.block<8, 3>(8 * i, 0) +=
                        wq * beta * dL_dP.block<1, 3>(0, 3 * (r - 1));
                }
                // explicit time dependence: node weight and node position
                Eigen::Matrix<double, 9, 1> Pdot;
                Pdot << s.a, s.j, snap;
                grad_by_times(i) += (wq / T) * L + wq * sigma * (dL_dP * Pdot)(0, 0);
            }
        }
    }

    if (grad_points || grad_times)
    {
        Eigen::Matrix3Xd grad_interior;
        Eigen::VectorXd gt;
        builder.propagate_gradient(grad_by_coeffs, grad_by_times, grad_interior, gt);
        if (grad_times) *grad_times = gt;
        if (grad_points)
        {
            grad_points->setZero(3, prob.num_free_points());
            for (int col = 0; col < prob.num_interior(); ++col)
            {
                if (free_index[col] >= 0) grad_points->col(free_index[col]) = grad_interior.col(col);
            }
        }
    }
    return rep;
}

struct OptimizeResult
{
    FlatTrajectory trajectory;
    bool converged = false;
    int iterations = 0;
    double objective = 0.0;
    double grad_norm = 0.0;
    // post-hoc residuals from dense resampling
    double max_speed = 0.0;
    double min_sp_norm = 0.0;
    Eigen::Vector4d max_input = Eigen::Vector4d::Zero();
    Eigen::Vector4d min_input = Eigen::Vector4d::Zero();
};

// straight-line seed through the waypoint polyline
inline void seed_problem(const PlanningProblem &prob, Eigen::Matrix3Xd &free_points,
                         Eigen::VectorXd &durations)
{
    const int N = prob.ctrl_points_per_gap;
    std::vector<Eigen::Vector3d> anchors;
    anchors.push_back(prob.s0.p);
    for (const auto &q : prob.waypoints) anchors.push_back(q);
    anchors.push_back(prob.sf.p);

    free_points.resize(3, prob.num_free_points());
    durations.resize(prob.num_segments());
    const double v_seed = std::max(0.4 * prob.v_max, 0.5);
    int fp = 0, seg = 0;
    for (int gap = 0; gap < prob.num_gaps(); ++gap)
    {
        const Eigen::Vector3d A = anchors[gap], B = anchors[gap + 1];
        for (int k = 0; k < N; ++k)
            free_points.col(fp++) = A + (B - A) * (k + 1.0) / (N + 1.0);
        const double T_gap = std::max((B - A).norm() / v_seed, 0.6 * (N + 1));
        for (int k = 0; k < N + 1; ++k) durations(seg++) = T_gap / (N + 1);
    }
}

inline double softplus(double x) { return (x > 30.0) ? x : std::log1p(std::exp(x)); }
inline double softplus_inv(double y) { return (y > 30.0) ? y : std::log(std::expm1(y)); }

inline OptimizeResult optimize(const PlanningProblem &prob, const Eigen::Matrix3Xd &seed_points,
                               const Eigen::VectorXd &seed_T)
{
    const int nP = prob.num_free_points();
    const int K = prob.num_segments();
    Eigen::VectorXd x0(3 * nP + K);
    for (int c = 0; c < nP; ++c) x0.segment<3>(3 * c) = seed_points.col(c);
    for (int i = 0; i < K; ++i) x0(3 * nP + i) = softplus_inv(std::max(seed_T(i), 0.05));

    SplineBuilder builder;
    builder.setup(prob.s0, prob.sf, K);

    auto objective = [&](const Eigen::VectorXd &x, Eigen::VectorXd &grad) {
        Eigen::Matrix3Xd pts(3, nP);
        for (int c = 0; c < nP; ++c) pts.col(c) = x.segment<3>(3 * c);
        Eigen::VectorXd T(K), dTdx(K);
        for (int i = 0; i < K; ++i)
        {
            const double tau = x(3 * nP + i);
            T(i) = std::max(softplus(tau), 1e-4);
            dTdx(i) = 1.0 / (1.0 + std::exp(-tau));
        }
        Eigen::Matrix3Xd gP;
        Eigen::VectorXd gT;
        const ObjectiveReport rep = objective_and_gradient(prob, pts, T, &gP, &gT, &builder);
        grad.resize(x.size());
        for (int c = 0; c < nP; ++c) grad.segment<3>(3 * c) = gP.col(c);
        for (int i = 0; i < K; ++i) grad(3 * nP + i) = gT(i) * dTdx(i);
        return rep.J;
    };

    LbfgsParams params;
    params.max_iterations = 3000;
    params.grad_tol = 1e-5;
    const LbfgsResult lr = lbfgs_minimize(objective, x0, params);

    OptimizeResult out;
    out.converged = lr.converged;
    out.iterations = lr.iterations;
    out.objective = lr.f;
    out.grad_norm = lr.grad_norm;

    Eigen::Matrix3Xd pts(3, nP);
    for (int c = 0; c < nP; ++c) pts.col(c) = lr.x.segment<3>(3 * c);
    Eigen::VectorXd T(K);
    for (int i = 0; i < K; ++i) T(i) = std::max(softplus(lr.x(3 * nP + i)), 1e-4);
    Eigen::Matrix3Xd interior;
    std::vector<int> free_index;
    detail::scatter_interior(prob, pts, interior, free_index);
    out.trajectory = build_trajectory(interior, T, prob.s0, prob.sf);

    // dense post-hoc residuals
    out.min_sp_norm = 1e30;
    out.max_input = Eigen::Vector4d::Constant(-1e30);
    out.min_input = Eigen::Vector4d::Constant(1e30);
    FlatnessCache cache = FlatnessCache::from_initial_attitude(prob.R0);
    const double Tf = out.trajectory.total_duration();
    for (double t = 0.0; t <= Tf; t += 1e-3)
    {
        const FlatSample s = out.trajectory.eval(t);
        out.max_speed = std::max(out.max_speed, s.v.norm());
        out.min_sp_norm = std::min(out.min_sp_norm, (s.a - gravity()).norm());
        try
        {
            const ReferenceSample r =
                flatness_transform(s, prob.w_bar, cache, prob.model, prob.flat_opts);
            Eigen::Vector4d u;
            u << r.a_T, r.omega;
            out.max_input = out.max_input.cwiseMax(u);
            out.min_input = out.min_input.cwiseMin(u);
        }
        catch (const FlatnessError &)
        {
        }
    }
    return out;
}

inline OptimizeResult optimize(const PlanningProblem &prob)
{
    Eigen::Matrix3Xd seed_points;
    Eigen::VectorXd seed_T;
    seed_problem(prob, seed_points, seed_T);
    return optimize(prob, seed_points, seed_T);
}

// ---- window-traverse boundary state (fixed attitude, thrust from a
// clamped 1-D minimization of the traverse acceleration) ------------------

struct TraverseSpec
{
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Vector3d long_edge = Eigen::Vector3d::UnitY();  // body y at traverse
    Eigen::Vector3d normal = Eigen::Vector3d::UnitX();     // traverse direction
    double speed = 10.0;                                   // [m/s]
    double aoa = 30.0 * M_PI / 180.0;                      // [rad]
};

struct TraverseState
{
    BoundaryState boundary;
    Eigen::Matrix3d R;
    double a_T = 0.0;
};

inline TraverseState traverse_boundary_state(const TraverseSpec &spec, const AeroModel &model,
                                             double a_T_min, double a_T_max,
                                             const Eigen::Vector3d &w_bar = Eigen::Vector3d::Zero())
{
    TraverseState out;
    const Eigen::Vector3d n = spec.normal.normalized();
    Eigen::Vector3d y_b = spec.long_edge - spec.long_edge.dot(n) * n;
    y_b.normalize();
    const Eigen::Vector3d x_b = exp_so3(spec.aoa * y_b) * n;
    const Eigen::Vector3d z_b = x_b.cross(y_b);
    out.R << x_b, y_b, z_b;

    const Eigen::Vector3d v_t = spec.speed * n;
    const Eigen::Vector3d v_aB = out.R.transpose() * (v_t - w_bar);
    const Eigen::Vector3d f_a = aero_force_body(v_aB, model);

    const double unconstrained =
        -Eigen::Vector3d::UnitX().dot(out.R.transpose() * gravity() + f_a / model.mass);
    out.a_T = std::clamp(unconstrained, a_T_min, a_T_max);

    out.boundary.p = spec.center;
    out.boundary.v = v_t;
    out.boundary.a = gravity() + out.a_T * x_b + out.R * f_a / model.mass;
    out.boundary.j = Eigen::Vector3d::Zero();
    return out;
}

// ---- problem file I/O ----------------------------------------------------

inline nlohmann::json boundary_to_json(const BoundaryState &b)
{
    auto vec = [](const Eigen::Vector3d &v) { return std::vector<double>{v.x(), v.y(), v.z()}; };
    return {{"p", vec(b.p)}, {"v", vec(b.v)}, {"a", vec(b.a)}, {"j", vec(b.j)}};
}

inline BoundaryState boundary_from_json(const nlohmann::json &j)
{
    auto vec = [&](const char *key, const Eigen::Vector3d &def) {
        if (!j.contains(key)) return def;
        const auto v = j.at(key).get<std::vector<double>>();
        return Eigen::Vector3d(v.at(0), v.at(1), v.at(2));
    };
    BoundaryState b;
    b.p = vec("p", Eigen::Vector3d::Zero());
    b.v = vec("v", Eigen::Vector3d::Zero());
    b.a = vec("a", Eigen::Vector3d::Zero());
    b.j = vec("j", Eigen::Vector3d::Zero());
    return b;
}

} // namespace tailsitter

#endif // TAILSITTER_TRAJ_OPT_HPP
