#ifndef TAILSITTER_POLY_TRAJ_HPP
#define TAILSITTER_POLY_TRAJ_HPP

#include "tailsitter/flatness.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace tailsitter {

struct BoundaryState
{
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    Eigen::Vector3d v = Eigen::Vector3d::Zero();
    Eigen::Vector3d a = Eigen::Vector3d::Zero();
    Eigen::Vector3d j = Eigen::Vector3d::Zero();
};

// Banded linear system with in-place LU (no pivoting); the row ordering
// used by the spline assembly keeps the diagonal nonzero.
class BandedSystem
{
public:
    void create(int n, int lower, int upper)
    {
        N = n;
        lo = lower;
        up = upper;
        data.assign(static_cast<size_t>(N) * (lo + up + 1), 0.0);
    }
    void reset() { std::fill(data.begin(), data.end(), 0.0); }

    double &operator()(int i, int j) { return data[static_cast<size_t>(i - j + up) * N + j]; }
    double operator()(int i, int j) const
    {
        return data[static_cast<size_t>(i - j + up) * N + j];
    }

    void factorize()
    {
        for (int k = 0; k <= N - 2; ++k)
        {
            const int iM = std::min(k + lo, N - 1);
            const double piv = operator()(k, k);
            if (std::abs(piv) < 1e-14)
                throw std::runtime_error("BandedSystem: near-zero pivot (degenerate durations?)");
            for (int i = k + 1; i <= iM; ++i)
            {
                if (operator()(i, k) != 0.0) operator()(i, k) /= piv;
            }
            const int jM = std::min(k + up, N - 1);
            for (int j = k + 1; j <= jM; ++j)
            {
                const double c = operator()(k, j);
                if (c == 0.0) continue;
                for (int i = k + 1; i <= iM; ++i)
                {
                    if (operator()(i, k) != 0.0) operator()(i, j) -= operator()(i, k) * c;
                }
            }
        }
    }

    // solve A x = b in place (b: N x m)
    void solve(Eigen::MatrixXd &b) const
    {
        for (int j = 0; j <= N - 1; ++j)
        {
            const int iM = std::min(j + lo, N - 1);
            for (int i = j + 1; i <= iM; ++i)
            {
                if (operator()(i, j) != 0.0) b.row(i) -= operator()(i, j) * b.row(j);
            }
        }
        for (int j = N - 1; j >= 0; --j)
        {
            b.row(j) /= operator()(j, j);
            const int iM = std::max(0, j - up);
            for (int i = iM; i <= j - 1; ++i)
            {
                if (operator()(i, j) != 0.0) b.row(i) -= operator()(i, j) * b.row(j);
            }
        }
    }

    // solve A^T x = b in place
    void solve_transposed(Eigen::MatrixXd &b) const
    {
        for (int j = 0; j <= N - 1; ++j)
        {
            b.row(j) /= operator()(j, j);
            const int iM = std::min(j + up, N - 1);
            for (int i = j + 1; i <= iM; ++i)
            {
                if (operator()(j, i) != 0.0) b.row(i) -= operator()(j, i) * b.row(j);
            }
        }
        for (int j = N - 1; j >= 0; --j)
        {
            const int iM = std::max(0, j - lo);
            for (int i = iM; i <= j - 1; ++i)
            {
                if (operator()(j, i) != 0.0) b.row(i) -= operator()(j, i) * b.row(j);
            }
        }
    }

    int size() const { return N; }

private:
    int N = 0, lo = 0, up = 0;
    std::vector<double> data;
};

// power basis [1 t ... t^7] and derivatives
inline Eigen::Matrix<double, 8, 1> poly_basis(double t, int order)
{
    Eigen::Matrix<double, 8, 1> b = Eigen::Matrix<double, 8, 1>::Zero();
    double tn = 1.0;
    for (int i = order; i < 8; ++i)
    {
        double coef = 1.0;
        for (int k = 0; k < order; ++k) coef *= (i - k);
        b(i) = coef * tn;
        tn *= t;
    }
    return b;
}

// Piecewise 7th-order polynomial flat output with C^4 joints.
struct FlatTrajectory
{
    std::vector<Eigen::Matrix<double, 3, 8>> coeffs;  // per segment, power basis
    std::vector<double> durations;
    BoundaryState head, tail;
    mutable long clamp_events = 0;

    int num_segments() const { return static_cast<int>(coeffs.size()); }

    double total_duration() const
    {
        double T = 0.0;
        for (double d : durations) T += d;
        return T;
    }

    Eigen::Vector3d derivative(int seg, double tau, int order) const
    {
        return coeffs[seg] * poly_basis(tau, order);
    }

    // locate the active segment; out-of-range t clamps (counted)
    std::pair<int, double> locate(double t) const
    {
        if (t < 0.0)
        {
            ++clamp_events;
            return {0, 0.0};
        }
        double acc = 0.0;
        for (int i = 0; i < num_segments(); ++i)
        {
            if (t <= acc + durations[i] || i == num_segments() - 1)
            {
                const double tau = std::min(t - acc, durations[i]);
                if (t - acc > durations[i]) ++clamp_events;
                return {i, std::max(0.0, tau)};
            }
            acc += durations[i];
        }
        ++clamp_events;
        return {num_segments() - 1, durations.back()};
    }

    FlatSample eval(double t) const
    {
        const auto [seg, tau] = locate(t);
        FlatSample s;
        s.p = derivative(seg, tau, 0);
        s.v = derivative(seg, tau, 1);
        s.a = derivative(seg, tau, 2);
        s.j = derivative(seg, tau, 3);
        s.s = derivative(seg, tau, 4);
        return s;
    }
};

inline FlatSample eval_flat(const FlatTrajectory &traj, double t) { return traj.eval(t); }

// Minimum-snap spline through interior points under full boundary
// conditions: per interior joint, derivative continuity up to order 6 plus
// interpolation, giving the unique banded 8K x 8K system.
class SplineBuilder
{
public:
    void setup(const BoundaryState &head, const BoundaryState &tail, int num_segments)
    {
        if (num_segments < 1) throw std::invalid_argument("SplineBuilder: need >= 1 segment");
        head_ = head;
        tail_ = tail;
        K_ = num_segments;
        A_.create(8 * K_, 8, 8);
        b_.resize(8 * K_, 3);
        traj_.coeffs.assign(K_, Eigen::Matrix<double, 3, 8>::Zero());
        traj_.durations.assign(K_, 0.0);
        traj_.head = head;
        traj_.tail = tail;
    }

    int num_segments() const { return K_; }
    int num_interior() const { return K_ - 1; }

    // interior: 3 x (K-1) interior point positions; T: per-segment durations
    void set_points_and_times(const Eigen::Matrix3Xd &interior, const Eigen::VectorXd &T)
    {
        if (interior.cols() != K_ - 1 || T.size() != K_)
            throw std::invalid_argument("SplineBuilder: size mismatch");
        for (int i = 0; i < K_; ++i)
        {
            if (!(T(i) > 1e-9)) throw std::invalid_argument("SplineBuilder: nonpositive duration");
            traj_.durations[i] = T(i);
        }

        A_.reset();
        b_.setZero();

        A_(0, 0) = 1.0;
        A_(1, 1) = 1.0;
        A_(2, 2) = 2.0;
        A_(3, 3) = 6.0;
        b_.row(0) = head_.p.transpose();
        b_.row(1) = head_.v.transpose();
        b_.row(2) = head_.a.transpose();
        b_.row(3) = head_.j.transpose();

        for (int i = 0; i < K_ - 1; ++i)
        {
            const double Ti = T(i);
            const int r = 8 * i + 4;
            // continuity of derivatives 4..6 first (keeps pivots nonzero)
            for (int d = 4; d <= 6; ++d)
            {
                const auto beta = poly_basis(Ti, d);
                for (int c = 0; c < 8; ++c) A_(r + d - 4, 8 * i + c) = beta(c);
                A_(r + d - 4, 8 * (i + 1) + d) = -poly_basis(0.0, d)(d);
            }
            // interpolation of the interior point by the left segment
            {
                const auto beta = poly_basis(Ti, 0);
                for (int c = 0; c < 8; ++c) A_(r + 3, 8 * i + c) = beta(c);
                b_.row(r + 3) = interior.col(i).transpose();
            }
            // continuity of derivatives 0..3
            for (int d = 0; d <= 3; ++d)
            {
                const auto beta = poly_basis(Ti, d);
                for (int c = 0; c < 8; ++c) A_(r + 4 + d, 8 * i + c) = beta(c);
                A_(r + 4 + d, 8 * (i + 1) + d) = -poly_basis(0.0, d)(d);
            }
        }

        const double Tl = T(K_ - 1);
        for (int d = 0; d <= 3; ++d)
        {
            const auto beta = poly_basis(Tl, d);
            for (int c = 0; c < 8; ++c) A_(8 * K_ - 4 + d, 8 * (K_ - 1) + c) = beta(c);
        }
        b_.row(8 * K_ - 4) = tail_.p.transpose();
        b_.row(8 * K_ - 3) = tail_.v.transpose();
        b_.row(8 * K_ - 2) = tail_.a.transpose();
        b_.row(8 * K_ - 1) = tail_.j.transpose();

        A_.factorize();
        coeffs_ = b_;
        A_.solve(coeffs_);
        for (int i = 0; i < K_; ++i)
            traj_.coeffs[i] = coeffs_.block<8, 3>(8 * i, 0).transpose();
    }

    const FlatTrajectory &trajectory() const { return traj_; }

    // Adjoint of the banded solve: maps a gradient w.r.t. the stacked
    // coefficients (8K x 3) plus explicit duration gradients to gradients
    // w.r.t. interior points and durations.
    void propagate_gradient(const Eigen::MatrixXd &grad_by_coeffs,
                            const Eigen::VectorXd &grad_by_times_explicit,
                            Eigen::Matrix3Xd &grad_points, Eigen::VectorXd &grad_times) const
    {
        Eigen::MatrixXd G = grad_by_coeffs;
        A_.solve_transposed(G);

        grad_points.resize(3, std::max(K_ - 1, 0));
        for (int i = 0; i < K_ - 1; ++i)
            grad_points.col(i) = G.row(8 * i + 4 + 3).transpose();

        grad_times = grad_by_times_explicit;
        for (int i = 0; i < K_; ++i)
        {
            const double Ti = traj_.durations[i];
            // rows of A that evaluate segment i at tau = Ti and their
            // derivative w.r.t. Ti (one order higher at the same point)
            double acc = 0.0;
            if (i < K_ - 1)
            {
                const int r = 8 * i + 4;
                const int orders[8] = {5, 6, 7, 1, 1, 2, 3, 4};
                for (int k = 0; k < 8; ++k)
                {
                    const Eigen::Vector3d d = traj_.derivative(i, Ti, orders[k]);
                    acc += G.row(r + k).dot(d.transpose());
                }
            }
            else
            {
                const int r = 8 * K_ - 4;
                for (int k = 0; k < 4; ++k)
                {
                    const Eigen::Vector3d d = traj_.derivative(i, Ti, k + 1);
                    acc += G.row(r + k).dot(d.transpose());
                }
            }
            grad_times(i) -= acc;
        }
    }

private:
    BoundaryState head_, tail_;
    int K_ = 0;
    BandedSystem A_;
    Eigen::MatrixXd b_, coeffs_;
    FlatTrajectory traj_;
};

// one-call build from a full point sequence (interior points + times)
inline FlatTrajectory build_trajectory(const Eigen::Matrix3Xd &interior,
                                       const Eigen::VectorXd &durations,
                                       const BoundaryState &head, const BoundaryState &tail)
{
    SplineBuilder builder;
    builder.setup(head, tail, static_cast<int>(durations.size()));
    builder.set_points_and_times(interior, durations);
    return builder.trajectory();
}

// ---- trajectory file I/O ------------------------------------------------

inline nlohmann::json trajectory_to_json(const FlatTrajectory &traj)
{
    nlohmann::json j;
    j["segments"] = nlohmann::json::array();
    for (int i = 0; i < traj.num_segments(); ++i)
    {
        nlohmann::json seg;
        seg["duration"] = traj.durations[i];
        std::vector<double> c(24);
        for (int r = 0; r < 8; ++r)
            for (int d = 0; d < 3; ++d) c[3 * r + d] = traj.coeffs[i](d, r);
        seg["coeffs"] = c;  // row-major 8x3, power basis
        j["segments"].push_back(seg);
    }
    return j;
}

inline FlatTrajectory trajectory_from_json(const nlohmann::json &j)
{
    FlatTrajectory traj;
    for (const auto &seg : j.at("segments"))
    {
        Eigen::Matrix<double, 3, 8> c;
        const auto v = seg.at("coeffs").get<std::vector<double>>();
        if (v.size() != 24) throw std::invalid_argument("trajectory: coeffs must be 8x3");
        for (int r = 0; r < 8; ++r)
            for (int d = 0; d < 3; ++d) c(d, r) = v[3 * r + d];
        traj.coeffs.push_back(c);
        traj.durations.push_back(seg.at("duration").get<double>());
    }
    if (traj.coeffs.empty()) throw std::invalid_argument("trajectory: no segments");
    const auto s0 = traj.eval(0.0);
    traj.head = {s0.p, s0.v, s0.a, s0.j};
    const auto sf = traj.eval(traj.total_duration());
    traj.tail = {sf.p, sf.v, sf.a, sf.j};
    traj.clamp_events = 0;
    return traj;
}

} // namespace tailsitter

#endif // TAILSITTER_POLY_TRAJ_HPP
