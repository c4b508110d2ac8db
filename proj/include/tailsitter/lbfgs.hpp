#ifndef TAILSITTER_LBFGS_HPP
#define TAILSITTER_LBFGS_HPP

#include <Eigen/Dense>

#include <deque>
#include <functional>

namespace tailsitter {

// Limited-memory BFGS with Armijo backtracking. The objective callback
// returns the value and fills the gradient.
struct LbfgsParams
{
    int memory = 8;
    int max_iterations = 3000;
    int max_linesearch = 40;
    double grad_tol = 1e-5;  // stop when |g| < grad_tol * max(1, |f|)
    double armijo_c = 1e-4;
    double step_shrink = 0.5;
};

struct LbfgsResult
{
    Eigen::VectorXd x;
    double f = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    bool line_search_failed = false;
};

inline LbfgsResult lbfgs_minimize(
    const std::function<double(const Eigen::VectorXd &, Eigen::VectorXd &)> &objective,
    const Eigen::VectorXd &x0, const LbfgsParams &params = {})
{
    const int n = static_cast<int>(x0.size());
    LbfgsResult res;
    res.x = x0;

    Eigen::VectorXd g(n), g_new(n);
    res.f = objective(res.x, g);
    res.grad_norm = g.norm();

    Eigen::VectorXd best_x = res.x;
    double best_f = res.f;

    std::deque<Eigen::VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;

    for (int iter = 0; iter < params.max_iterations; ++iter)
    {
        res.iterations = iter;
        if (g.norm() < params.grad_tol * std::max(1.0, std::abs(res.f)))
        {
            res.converged = true;
            break;
        }

        // two-loop recursion
        Eigen::VectorXd q = g;
        std::vector<double> alpha(s_hist.size());
        for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i)
        {
            alpha[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha[i] * y_hist[i];
        }
        if (!s_hist.empty())
        {
            const double gamma =
                s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
            q *= gamma;
        }
        for (size_t i = 0; i < s_hist.size(); ++i)
        {
            const double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alpha[i] - beta) * s_hist[i];
        }
        Eigen::VectorXd dir = -q;
        double dg = dir.dot(g);
        if (dg >= 0.0)
        {
            dir = -g;  // fall back to steepest descent
            dg = -g.squaredNorm();
        }

        // Armijo backtracking
        double step = (iter == 0) ? 1.0 / std::max(1.0, g.norm()) : 1.0;
        double f_new = res.f;
        Eigen::VectorXd x_new;
        bool ok = false;
        for (int ls = 0; ls < params.max_linesearch; ++ls)
        {
            x_new = res.x + step * dir;
            f_new = objective(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= res.f + params.armijo_c * step * dg)
            {
                ok = true;
                break;
            }
            step *= params.step_shrink;
        }
        if (!ok)
        {
            res.line_search_failed = true;
            break;
        }

        const Eigen::VectorXd s = x_new - res.x;
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm())
        {
            s_hist.push_back(s);
            y_hist.push_back(y);
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > params.memory)
            {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }

        res.x = x_new;
        res.f = f_new;
        g = g_new;
        if (res.f < best_f)
        {
            best_f = res.f;
            best_x = res.x;
        }
    }

    if (res.f > best_f)
    {
        res.f = best_f;
        res.x = best_x;
        Eigen::VectorXd gtmp(n);
        objective(res.x, gtmp);
        g = gtmp;
    }
    res.grad_norm = g.norm();
    return res;
}

} // namespace tailsitter

#endif // TAILSITTER_LBFGS_HPP
