#pragma once

#include <cmath>
#include <utility>

#include "mic/error.hpp"
#include "mic/matrix.hpp"

namespace mic {

enum class Activation { Identity, Relu, Tanh };

// Everything the exact backward pass needs, copied at forward time.
struct AffineCache {
    Matrix input;
    Matrix weights;
    Matrix pre_activation;
    Activation act = Activation::Identity;
};

struct AffineGrads {
    Matrix d_input;
    Matrix d_weights;
    Matrix d_bias;
};

// output = act(input * weights + bias); bias is 1 x out, broadcast per row.
inline std::pair<Matrix, AffineCache> affine_forward(const Matrix& input, const Matrix& weights,
                                                     const Matrix& bias, Activation act) {
    check_shape(input.cols == weights.rows, "affine_forward input/weights");
    check_shape(bias.rows == 1 && bias.cols == weights.cols, "affine_forward bias");
    Matrix pre = matmul(input, weights);
    for (std::size_t i = 0; i < pre.rows; ++i)
        for (std::size_t j = 0; j < pre.cols; ++j) pre(i, j) += bias(0, j);

    Matrix out = pre;
    switch (act) {
        case Activation::Identity:
            break;
        case Activation::Relu:
            for (double& x : out.data) x = x > 0.0 ? x : 0.0;
            break;
        case Activation::Tanh:
            for (double& x : out.data) x = std::tanh(x);
            break;
    }
    AffineCache cache{input, weights, std::move(pre), act};
    return {std::move(out), std::move(cache)};
}

inline AffineGrads affine_backward(const AffineCache& cache, const Matrix& upstream) {
    if (!upstream.same_shape(cache.pre_activation))
        throw InvalidStateError("affine_backward: upstream shape does not match cached forward");

    // d pre = upstream * act'(pre)
    Matrix d_pre = upstream;
    switch (cache.act) {
        case Activation::Identity:
            break;
        case Activation::Relu:
            for (std::size_t i = 0; i < d_pre.data.size(); ++i)
                if (cache.pre_activation.data[i] <= 0.0) d_pre.data[i] = 0.0;
            break;
        case Activation::Tanh:
            for (std::size_t i = 0; i < d_pre.data.size(); ++i) {
                const double t = std::tanh(cache.pre_activation.data[i]);
                d_pre.data[i] *= 1.0 - t * t;
            }
            break;
    }

    AffineGrads g;
    g.d_input = matmul(d_pre, transpose(cache.weights));
    g.d_weights = matmul(transpose(cache.input), d_pre);
    g.d_bias = Matrix(1, cache.weights.cols);
    for (std::size_t i = 0; i < d_pre.rows; ++i)
        for (std::size_t j = 0; j < d_pre.cols; ++j) g.d_bias(0, j) += d_pre(i, j);
    return g;
}

}  // namespace mic
