#ifndef PREFSHAPE_LBFGS_HPP
#define PREFSHAPE_LBFGS_HPP

// Box-constrained limited-memory BFGS (projected two-loop recursion with a
// backtracking Armijo search along the projection arc).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace prefshape::lbfgs {

struct Params
{
    int memory = 10;
    int max_iterations = 200;
    double grad_tolerance = 1e-6;
    double armijo = 1e-4;
    double backtrack = 0.5;
    int max_line_search = 40;
};

struct NonFiniteObjective : std::runtime_error
{
    NonFiniteObjective() : std::runtime_error("objective or gradient is not finite") {}
};

struct Result
{
    Eigen::VectorXd x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

namespace detail {

inline Eigen::VectorXd project(const Eigen::VectorXd &x, const Eigen::VectorXd &lo, const Eigen::VectorXd &hi)
{
    return x.cwiseMax(lo).cwiseMin(hi);
}

// Zero the components whose descent direction would leave the box.
inline Eigen::VectorXd projected_gradient(const Eigen::VectorXd &x, const Eigen::VectorXd &g, const Eigen::VectorXd &lo,
                                          const Eigen::VectorXd &hi)
{
    Eigen::VectorXd pg = g;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if ((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0))
            pg[i] = 0.0;
    return pg;
}

template <class F>
double evaluate(F &f, const Eigen::VectorXd &x, Eigen::VectorXd &g)
{
    const double v = f(x, g);
    if (!std::isfinite(v) || !g.allFinite())
        throw NonFiniteObjective();
    return v;
}

} // namespace detail

/// Minimizes f over lo <= x <= hi. `f(x, grad)` returns the value and writes the gradient.
/// Throws NonFiniteObjective if f produces a non-finite value or gradient.
template <class F>
Result minimize(F &&f, Eigen::VectorXd x0, const Eigen::VectorXd &lo, const Eigen::VectorXd &hi, const Params &p = {})
{
    Result r;
    r.x = detail::project(x0, lo, hi);
    Eigen::VectorXd g(r.x.size());
    r.value = detail::evaluate(f, r.x, g);

    std::deque<Eigen::VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;
    Eigen::VectorXd g_new(r.x.size());

    for (r.iterations = 0; r.iterations < p.max_iterations; ++r.iterations) {
        const Eigen::VectorXd pg = detail::projected_gradient(r.x, g, lo, hi);
        if (pg.lpNorm<Eigen::Infinity>() <= p.grad_tolerance) {
            r.converged = true;
            break;
        }

        // two-loop recursion on the free variables
        const Eigen::ArrayXd free = (pg.array() != 0.0).cast<double>();
        Eigen::VectorXd q = pg;
        std::vector<double> alpha(s_hist.size());
        for (std::size_t i = s_hist.size(); i-- > 0;) {
            alpha[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha[i] * y_hist[i];
        }
        if (!s_hist.empty())
            q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alpha[i] - beta) * s_hist[i];
        }
        Eigen::VectorXd dir = -(q.array() * free).matrix();
        if (g.dot(dir) >= 0.0)
            dir = -pg;

        double step = s_hist.empty() ? std::min(1.0, 1.0 / pg.norm()) : 1.0;
        bool accepted = false;
        Eigen::VectorXd x_new;
        double f_new = 0.0;
        for (int ls = 0; ls < p.max_line_search; ++ls, step *= p.backtrack) {
            x_new = detail::project(r.x + step * dir, lo, hi);
            const double decrease = g.dot(x_new - r.x);
            if (decrease >= 0.0)
                continue;
            f_new = detail::evaluate(f, x_new, g_new);
            if (f_new <= r.value + p.armijo * decrease) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (s_hist.empty())
                break;
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            continue;
        }

        Eigen::VectorXd s = x_new - r.x;
        Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > p.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        r.x = std::move(x_new);
        r.value = f_new;
        g = g_new;
    }
    return r;
}

} // namespace prefshape::lbfgs

#endif
