#ifndef PREFSHAPE_NADAM_HPP
#define PREFSHAPE_NADAM_HPP

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace prefshape {

struct NadamConfig
{
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Nesterov-accelerated Adam with a constant momentum coefficient:
///   m_t = b1 m + (1-b1) g,   v_t = b2 v + (1-b2) g^2
///   m^  = b1 m_t / (1 - b1^(t+1)) + (1-b1) g / (1 - b1^t)
///   v^  = v_t / (1 - b2^t)
///   x  -= lr m^ / (sqrt(v^) + eps)
struct NadamState
{
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    int t = 0;

    explicit NadamState(Eigen::Index n = 0) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}

    void step(Eigen::VectorXd &params, const Eigen::VectorXd &grad, const NadamConfig &cfg)
    {
        if (params.size() != grad.size() || m.size() != grad.size())
            throw std::invalid_argument("NADAM state, parameters and gradient differ in size");
        ++t;
        const double b1 = cfg.beta1, b2 = cfg.beta2;
        m = b1 * m + (1.0 - b1) * grad;
        v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
        const double c1_next = 1.0 - std::pow(b1, t + 1);
        const double c1 = 1.0 - std::pow(b1, t);
        const double c2 = 1.0 - std::pow(b2, t);
        const Eigen::ArrayXd m_hat = b1 * m.array() / c1_next + (1.0 - b1) * grad.array() / c1;
        const Eigen::ArrayXd v_hat = v.array() / c2;
        params.array() -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
};

} // namespace prefshape

#endif
