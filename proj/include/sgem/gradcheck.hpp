#pragma once

// Exhaustive central-difference gradient verification for the individual
// layer types. The scalar objective is J = <cot, f(x)> with a fixed random
// cotangent, so one backward pass yields every analytic partial at once.
// Analytic gradients come from the f32 layer path (the one training uses);
// the finite-difference reference runs the same layer templates in double at
// the exact same point, so FD truncation noise stays far below the layer
// tolerances.

#include <algorithm>
#include <functional>

#include "sgem/layers.hpp"
#include "sgem/rng.hpp"

namespace sgem {

enum class LayerKind { Conv2d, FullyConnected, Relu, MseLoss };

struct GradCheckSpec {
    LayerKind kind = LayerKind::FullyConnected;
    std::vector<int> input_shape; // conv: [Cin,H,W]; others: [n]
    int out_channels = 4;         // conv
    int kernel = 3;               // conv
    int stride = 1;               // conv
    int pad = 0;                  // conv
    int out_features = 4;         // fully connected
    std::uint64_t seed = 1;
};

namespace detail {

template <typename S>
Tensor<S> random_tensor(std::vector<int> shape, Rng& rng, S lo, S hi) {
    Tensor<S> t(std::move(shape));
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = S(rng.uniform(float(lo), float(hi)));
    return t;
}

// Uniform magnitude in [0.15, 2] with random sign; keeps ReLU inputs away
// from the kink where finite differences are invalid.
template <typename S>
Tensor<S> random_tensor_offzero(std::vector<int> shape, Rng& rng) {
    Tensor<S> t(std::move(shape));
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        float mag = rng.uniform(0.15f, 2.0f);
        t[i] = S(rng.next_float() < 0.5f ? mag : -mag);
    }
    return t;
}

inline Tensor<double> widen(const TensorXf& t) {
    Tensor<double> d(t.shape());
    for (Eigen::Index i = 0; i < t.size(); ++i) d[i] = double(t[i]);
    return d;
}

inline double rel_error(double analytic, double numeric) {
    double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / denom;
}

// Worst relative error over all coordinates of one tensor: perturbs the
// double-precision copy, compares against the f32 analytic gradient.
inline double max_rel_error(const std::function<double()>& objective,
                            Tensor<double>& primal, const TensorXf& analytic,
                            double eps) {
    double worst = 0;
    for (Eigen::Index i = 0; i < primal.size(); ++i) {
        const double saved = primal[i];
        primal[i] = saved + eps;
        const double jp = objective();
        primal[i] = saved - eps;
        const double jm = objective();
        primal[i] = saved;
        const double numeric = (jp - jm) / (2.0 * eps);
        worst = std::max(worst, rel_error(double(analytic[i]), numeric));
    }
    return worst;
}

inline double dot(const Tensor<double>& cot, const Tensor<double>& out) {
    double j = 0;
    for (Eigen::Index i = 0; i < out.size(); ++i) j += cot[i] * out[i];
    return j;
}

} // namespace detail

/// Compares analytic gradients of the designated layer against central finite
/// differences over every input and parameter coordinate at a seeded random
/// point. Returns the worst relative error; the caller asserts on it.
inline float grad_check(const GradCheckSpec& spec, float epsilon) {
    require(epsilon >= 1e-4f && epsilon <= 1e-2f, "grad_check: epsilon outside [1e-4, 1e-2]");
    Rng rng(spec.seed);
    const double eps = double(epsilon);
    double worst = 0;

    switch (spec.kind) {
    case LayerKind::Conv2d: {
        require(spec.input_shape.size() == 3, "grad_check: conv input must be [C,H,W]");
        auto x = detail::random_tensor<float>(spec.input_shape, rng, -2.f, 2.f);
        auto w = detail::random_tensor<float>(
            {spec.out_channels, spec.input_shape[0], spec.kernel, spec.kernel}, rng, -1.f, 1.f);
        auto b = detail::random_tensor<float>({spec.out_channels}, rng, -1.f, 1.f);
        auto probe = conv2d_forward(x, w, b, spec.stride, spec.pad);
        auto cot = detail::random_tensor<float>(probe.shape(), rng, -1.f, 1.f);

        auto xd = detail::widen(x), wd = detail::widen(w), bd = detail::widen(b);
        auto cotd = detail::widen(cot);
        auto objective = [&]() {
            return detail::dot(cotd, conv2d_forward(xd, wd, bd, spec.stride, spec.pad));
        };
        auto grads = conv2d_backward(x, w, spec.stride, spec.pad, cot);
        worst = std::max(worst, detail::max_rel_error(objective, xd, grads.input, eps));
        worst = std::max(worst, detail::max_rel_error(objective, wd, grads.weights, eps));
        worst = std::max(worst, detail::max_rel_error(objective, bd, grads.bias, eps));
        break;
    }
    case LayerKind::FullyConnected: {
        require(spec.input_shape.size() == 1, "grad_check: fc input must be [n]");
        auto x = detail::random_tensor<float>(spec.input_shape, rng, -2.f, 2.f);
        auto w = detail::random_tensor<float>({spec.out_features, spec.input_shape[0]}, rng,
                                              -1.f, 1.f);
        auto b = detail::random_tensor<float>({spec.out_features}, rng, -1.f, 1.f);
        auto cot = detail::random_tensor<float>({spec.out_features}, rng, -1.f, 1.f);

        auto xd = detail::widen(x), wd = detail::widen(w), bd = detail::widen(b);
        auto cotd = detail::widen(cot);
        auto objective = [&]() { return detail::dot(cotd, fc_forward(xd, wd, bd)); };
        auto grads = fc_backward(x, w, cot);
        worst = std::max(worst, detail::max_rel_error(objective, xd, grads.input, eps));
        worst = std::max(worst, detail::max_rel_error(objective, wd, grads.weights, eps));
        worst = std::max(worst, detail::max_rel_error(objective, bd, grads.bias, eps));
        break;
    }
    case LayerKind::Relu: {
        auto x = detail::random_tensor_offzero<float>(spec.input_shape, rng);
        auto cot = detail::random_tensor<float>(spec.input_shape, rng, -1.f, 1.f);
        auto xd = detail::widen(x);
        auto cotd = detail::widen(cot);
        auto objective = [&]() { return detail::dot(cotd, relu_forward(xd)); };
        auto g = relu_backward(x, cot);
        worst = detail::max_rel_error(objective, xd, g, eps);
        break;
    }
    case LayerKind::MseLoss: {
        auto pred = detail::random_tensor<float>(spec.input_shape, rng, -2.f, 2.f);
        auto target = detail::random_tensor<float>(spec.input_shape, rng, -2.f, 2.f);
        auto predd = detail::widen(pred), targetd = detail::widen(target);
        auto objective = [&]() { return mse_loss(predd, targetd).loss; };
        auto analytic = mse_loss(pred, target).grad_pred;
        worst = detail::max_rel_error(objective, predd, analytic, eps);
        break;
    }
    }
    return float(worst);
}

} // namespace sgem
