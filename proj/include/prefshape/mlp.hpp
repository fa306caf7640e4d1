#ifndef PREFSHAPE_MLP_HPP
#define PREFSHAPE_MLP_HPP

#include "prefshape/dynamics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace prefshape {

inline constexpr int kHiddenUnits = 100;

/// One hidden ReLU layer, a single tanh output neuron.
struct MlpParams
{
    Eigen::MatrixXd W1;    // hidden x n_in
    Eigen::VectorXd b1;    // hidden
    Eigen::RowVectorXd W2; // 1 x hidden
    double b2 = 0.0;

    int n_in() const { return static_cast<int>(W1.cols()); }
    int hidden() const { return static_cast<int>(W1.rows()); }

    static MlpParams zeros(int n_in, int hidden = kHiddenUnits)
    {
        return {Eigen::MatrixXd::Zero(hidden, n_in), Eigen::VectorXd::Zero(hidden), Eigen::RowVectorXd::Zero(hidden),
                0.0};
    }

    /// Uniform Glorot-style init for the weights, zero biases.
    template <class Rng>
    static MlpParams glorot(int n_in, Rng &rng, int hidden = kHiddenUnits)
    {
        MlpParams p = zeros(n_in, hidden);
        std::uniform_real_distribution<double> u1(-1.0, 1.0);
        const double a1 = std::sqrt(6.0 / (n_in + hidden));
        const double a2 = std::sqrt(6.0 / (hidden + 1));
        for (Eigen::Index i = 0; i < p.W1.size(); ++i)
            p.W1.data()[i] = a1 * u1(rng);
        for (Eigen::Index i = 0; i < p.W2.size(); ++i)
            p.W2[i] = a2 * u1(rng);
        return p;
    }

    Eigen::Index size() const { return W1.size() + b1.size() + W2.size() + 1; }

    bool all_finite() const { return W1.allFinite() && b1.allFinite() && W2.allFinite() && std::isfinite(b2); }

    // Flat view [W1 (column-major), b1, W2, b2]; used by the optimizer and gradient checks.
    Eigen::VectorXd flatten() const
    {
        Eigen::VectorXd out(size());
        Eigen::Index o = 0;
        out.segment(o, W1.size()) = Eigen::Map<const Eigen::VectorXd>(W1.data(), W1.size());
        o += W1.size();
        out.segment(o, b1.size()) = b1;
        o += b1.size();
        out.segment(o, W2.size()) = W2.transpose();
        o += W2.size();
        out[o] = b2;
        return out;
    }

    void unflatten(const Eigen::VectorXd &flat)
    {
        if (flat.size() != size())
            throw Error("flat parameter vector has the wrong size");
        Eigen::Index o = 0;
        W1 = Eigen::Map<const Eigen::MatrixXd>(flat.data(), W1.rows(), W1.cols());
        o += W1.size();
        b1 = flat.segment(o, b1.size());
        o += b1.size();
        W2 = flat.segment(o, W2.size()).transpose();
        o += W2.size();
        b2 = flat[o];
    }
};

inline double mlp_forward(const MlpParams &p, const Eigen::Ref<const Eigen::VectorXd> &input)
{
    if (input.size() != p.n_in())
        throw Error("network expects " + std::to_string(p.n_in()) + " inputs, got " + std::to_string(input.size()));
    const Eigen::VectorXd hidden = (p.W1 * input + p.b1).cwiseMax(0.0);
    return std::tanh(p.W2.dot(hidden) + p.b2);
}

/// Forward pass over a batch, one input per column.
inline Eigen::RowVectorXd mlp_forward_batch(const MlpParams &p, const Eigen::MatrixXd &inputs)
{
    if (inputs.rows() != p.n_in())
        throw Error("network expects " + std::to_string(p.n_in()) + " inputs, got " + std::to_string(inputs.rows()));
    const Eigen::MatrixXd hidden = ((p.W1 * inputs).colwise() + p.b1).cwiseMax(0.0);
    return ((p.W2 * hidden).array() + p.b2).tanh().matrix();
}

} // namespace prefshape

#endif
