#pragma once

// The three layer types behind the encoder/decoder network (2-D convolution,
// fully connected, ReLU) plus the MSE loss, each with an exact reverse-mode
// backward pass. Convolution is computed directly (no im2col); the k=3,
// stride=2, pad=1 configuration used by every encoder block gets a fused
// fast path whose inner loops read contiguous even/odd phase rows, which is
// what makes single-core training viable.

#include <cmath>

#include "sgem/tensor.hpp"

namespace sgem {

namespace detail {
inline int conv_out_extent(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}
// First/last output index whose receptive field stays inside the unpadded
// input for a given kernel offset.
inline int first_valid(int pad, int koff, int stride) {
    int num = pad - koff;
    return num > 0 ? (num + stride - 1) / stride : 0;
}
inline int last_valid(int in, int pad, int koff, int stride, int out) {
    int num = in - 1 + pad - koff;
    if (num < 0) return -1;
    int v = num / stride;
    return v < out ? v : out - 1;
}
} // namespace detail

template <typename S>
struct Conv2dGrads {
    Tensor<S> input;
    Tensor<S> weights;
    Tensor<S> bias;
};

namespace detail {

template <typename S>
void check_conv_args(const Tensor<S>& input, const Tensor<S>& weights,
                     const Tensor<S>& bias, int stride, int pad) {
    require(input.rank() == 3, "conv2d: input must be [C,H,W]");
    require(weights.rank() == 4, "conv2d: weights must be [Cout,Cin,k,k]");
    require(bias.rank() == 1 && bias.extent(0) == weights.extent(0),
            "conv2d: bias extent must equal Cout");
    require(weights.extent(2) == weights.extent(3), "conv2d: kernel must be square");
    require(input.extent(0) == weights.extent(1),
            "conv2d: input channels do not match weight Cin (" + input.shape_str() +
                " vs " + weights.shape_str() + ")");
    require(stride >= 1 && pad >= 0, "conv2d: stride must be >= 1, pad >= 0");
    require(weights.extent(2) <= input.extent(1) + 2 * pad &&
                weights.extent(2) <= input.extent(2) + 2 * pad,
            "conv2d: kernel larger than padded input");
}

template <typename S>
Tensor<S> conv2d_forward_generic(const Tensor<S>& input, const Tensor<S>& weights,
                                 const Tensor<S>& bias, int stride, int pad) {
    const int cin = input.extent(0), h = input.extent(1), w = input.extent(2);
    const int cout = weights.extent(0), k = weights.extent(2);
    const int ho = conv_out_extent(h, k, stride, pad);
    const int wo = conv_out_extent(w, k, stride, pad);

    Tensor<S> out({cout, ho, wo});
    for (int co = 0; co < cout; ++co) {
        S* out_ch = out.data() + Eigen::Index(co) * ho * wo;
        const S b = bias[co];
        for (Eigen::Index i = 0; i < Eigen::Index(ho) * wo; ++i) out_ch[i] = b;
        for (int ci = 0; ci < cin; ++ci) {
            const S* in_ch = input.data() + Eigen::Index(ci) * h * w;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const S wv = weights(co, ci, ky, kx);
                    const int ox0 = first_valid(pad, kx, stride);
                    const int ox1 = last_valid(w, pad, kx, stride, wo);
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        const S* __restrict in_row = in_ch + Eigen::Index(iy) * w + kx - pad;
                        S* __restrict out_row = out_ch + Eigen::Index(oy) * wo;
                        for (int ox = ox0; ox <= ox1; ++ox)
                            out_row[ox] += wv * in_row[ox * stride];
                    }
                }
            }
        }
    }
    return out;
}

template <typename S>
Conv2dGrads<S> conv2d_backward_generic(const Tensor<S>& input, const Tensor<S>& weights,
                                       int stride, int pad, const Tensor<S>& grad_out) {
    const int cin = input.extent(0), h = input.extent(1), w = input.extent(2);
    const int cout = weights.extent(0), k = weights.extent(2);
    const int ho = conv_out_extent(h, k, stride, pad);
    const int wo = conv_out_extent(w, k, stride, pad);

    Conv2dGrads<S> g{Tensor<S>({cin, h, w}), Tensor<S>({cout, cin, k, k}),
                     Tensor<S>({cout})};
    for (int co = 0; co < cout; ++co) {
        const S* go_ch = grad_out.data() + Eigen::Index(co) * ho * wo;
        double gb = 0;
        for (Eigen::Index i = 0; i < Eigen::Index(ho) * wo; ++i) gb += double(go_ch[i]);
        g.bias[co] = S(gb);

        for (int ci = 0; ci < cin; ++ci) {
            const S* in_ch = input.data() + Eigen::Index(ci) * h * w;
            S* gin_ch = g.input.data() + Eigen::Index(ci) * h * w;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const int ox0 = first_valid(pad, kx, stride);
                    const int ox1 = last_valid(w, pad, kx, stride, wo);
                    const S wv = weights(co, ci, ky, kx);
                    double gw = 0;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        const S* __restrict in_row = in_ch + Eigen::Index(iy) * w + kx - pad;
                        S* __restrict gin_row = gin_ch + Eigen::Index(iy) * w + kx - pad;
                        const S* __restrict go_row = go_ch + Eigen::Index(oy) * wo;
                        for (int ox = ox0; ox <= ox1; ++ox) {
                            gw += double(go_row[ox]) * double(in_row[ox * stride]);
                            gin_row[ox * stride] += wv * go_row[ox];
                        }
                    }
                    g.weights(co, ci, ky, kx) = S(gw);
                }
            }
        }
    }
    return g;
}

// ---- k=3 / stride=2 / pad=1 fast path (even extents >= 4) ------------------
//
// With ix = 2*ox - 1 + kx the three taps hit odd[ox-1], even[ox], odd[ox]
// where even/odd are the two phases of the input row. Splitting phases once
// per call turns every inner loop into a contiguous stream.

template <typename S>
bool fast3x3s2p1_applicable(const Tensor<S>& input, const Tensor<S>& weights,
                            int stride, int pad) {
    return weights.extent(2) == 3 && stride == 2 && pad == 1 &&
           input.extent(1) >= 4 && input.extent(2) >= 4 &&
           input.extent(1) % 2 == 0 && input.extent(2) % 2 == 0;
}

template <typename S>
void split_phases(const Tensor<S>& input, Tensor<S>& even, Tensor<S>& odd) {
    const int cin = input.extent(0), h = input.extent(1), w = input.extent(2);
    const int wh = w / 2;
    for (int ci = 0; ci < cin; ++ci)
        for (int iy = 0; iy < h; ++iy) {
            const S* __restrict r = input.data() + (Eigen::Index(ci) * h + iy) * w;
            S* __restrict e = even.data() + (Eigen::Index(ci) * h + iy) * wh;
            S* __restrict o = odd.data() + (Eigen::Index(ci) * h + iy) * wh;
            for (int j = 0; j < wh; ++j) {
                e[j] = r[2 * j];
                o[j] = r[2 * j + 1];
            }
        }
}

template <typename S>
Tensor<S> conv2d_forward_fast(const Tensor<S>& input, const Tensor<S>& weights,
                              const Tensor<S>& bias) {
    const int cin = input.extent(0), h = input.extent(1), w = input.extent(2);
    const int cout = weights.extent(0);
    const int ho = h / 2, wo = w / 2;

    Tensor<S> even({cin, h, wo}), odd({cin, h, wo});
    split_phases(input, even, odd);

    Tensor<S> out({cout, ho, wo});
    for (int co = 0; co < cout; ++co) {
        S* out_ch = out.data() + Eigen::Index(co) * ho * wo;
        const S b = bias[co];
        for (Eigen::Index i = 0; i < Eigen::Index(ho) * wo; ++i) out_ch[i] = b;
        for (int ci = 0; ci < cin; ++ci) {
            for (int ky = 0; ky < 3; ++ky) {
                const S* wrow = weights.data() +
                                ((Eigen::Index(co) * cin + ci) * 3 + ky) * 3;
                const S w0 = wrow[0], w1 = wrow[1], w2 = wrow[2];
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = 2 * oy - 1 + ky;
                    if (iy < 0) continue; // only oy=0, ky=0; iy<h always holds
                    const S* __restrict e =
                        even.data() + (Eigen::Index(ci) * h + iy) * wo;
                    const S* __restrict o =
                        odd.data() + (Eigen::Index(ci) * h + iy) * wo;
                    S* __restrict orow = out_ch + Eigen::Index(oy) * wo;
                    orow[0] += w1 * e[0] + w2 * o[0];
                    for (int ox = 1; ox < wo; ++ox)
                        orow[ox] += w0 * o[ox - 1] + w1 * e[ox] + w2 * o[ox];
                }
            }
        }
    }
    return out;
}

template <typename S>
Conv2dGrads<S> conv2d_backward_fast(const Tensor<S>& input, const Tensor<S>& weights,
                                    const Tensor<S>& grad_out) {
    const int cin = input.extent(0), h = input.extent(1), w = input.extent(2);
    const int cout = weights.extent(0);
    const int ho = h / 2, wo = w / 2;

    Tensor<S> even({cin, h, wo}), odd({cin, h, wo});
    split_phases(input, even, odd);
    // phase accumulators for the input gradient, interleaved back at the end
    Tensor<S> ge({cin, h, wo}), go({cin, h, wo});

    Conv2dGrads<S> g{Tensor<S>({cin, h, w}), Tensor<S>({cout, cin, 3, 3}),
                     Tensor<S>({cout})};
    for (int co = 0; co < cout; ++co) {
        const S* go_ch = grad_out.data() + Eigen::Index(co) * ho * wo;
        double gb = 0;
        for (Eigen::Index i = 0; i < Eigen::Index(ho) * wo; ++i) gb += double(go_ch[i]);
        g.bias[co] = S(gb);

        for (int ci = 0; ci < cin; ++ci) {
            for (int ky = 0; ky < 3; ++ky) {
                const S* wrow = weights.data() +
                                ((Eigen::Index(co) * cin + ci) * 3 + ky) * 3;
                const S w0 = wrow[0], w1 = wrow[1], w2 = wrow[2];
                double gw0 = 0, gw1 = 0, gw2 = 0;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = 2 * oy - 1 + ky;
                    if (iy < 0) continue;
                    const Eigen::Index row = (Eigen::Index(ci) * h + iy) * wo;
                    const S* __restrict e = even.data() + row;
                    const S* __restrict o = odd.data() + row;
                    S* __restrict ge_row = ge.data() + row;
                    S* __restrict go_row = go.data() + row;
                    const S* __restrict gr = go_ch + Eigen::Index(oy) * wo;

                    S acc0 = 0, acc1 = 0, acc2 = 0;
                    acc1 += gr[0] * e[0];
                    acc2 += gr[0] * o[0];
                    ge_row[0] += w1 * gr[0];
                    go_row[0] += w2 * gr[0];
                    for (int ox = 1; ox < wo; ++ox) {
                        const S gv = gr[ox];
                        acc0 += gv * o[ox - 1];
                        acc1 += gv * e[ox];
                        acc2 += gv * o[ox];
                        go_row[ox - 1] += w0 * gv;
                        ge_row[ox] += w1 * gv;
                        go_row[ox] += w2 * gv;
                    }
                    gw0 += double(acc0);
                    gw1 += double(acc1);
                    gw2 += double(acc2);
                }
                S* gw_row =
                    g.weights.data() + ((Eigen::Index(co) * cin + ci) * 3 + ky) * 3;
                gw_row[0] = S(gw0);
                gw_row[1] = S(gw1);
                gw_row[2] = S(gw2);
            }
        }
    }

    // interleave phase gradients back to [cin,h,w]
    for (int ci = 0; ci < cin; ++ci)
        for (int iy = 0; iy < h; ++iy) {
            const Eigen::Index row = (Eigen::Index(ci) * h + iy) * wo;
            const S* __restrict e = ge.data() + row;
            const S* __restrict o = go.data() + row;
            S* __restrict r = g.input.data() + (Eigen::Index(ci) * h + iy) * w;
            for (int j = 0; j < wo; ++j) {
                r[2 * j] = e[j];
                r[2 * j + 1] = o[j];
            }
        }
    return g;
}

} // namespace detail

/// input [Cin,H,W], weights [Cout,Cin,k,k], bias [Cout] -> [Cout,H',W'] with
/// H' = floor((H + 2*pad - k)/stride) + 1 (same for W'). Zero padding.
template <typename S>
Tensor<S> conv2d_forward(const Tensor<S>& input, const Tensor<S>& weights,
                         const Tensor<S>& bias, int stride, int pad) {
    detail::check_conv_args(input, weights, bias, stride, pad);
    if (detail::fast3x3s2p1_applicable(input, weights, stride, pad))
        return detail::conv2d_forward_fast(input, weights, bias);
    return detail::conv2d_forward_generic(input, weights, bias, stride, pad);
}

template <typename S>
Conv2dGrads<S> conv2d_backward(const Tensor<S>& input, const Tensor<S>& weights,
                               int stride, int pad, const Tensor<S>& grad_out) {
    const int k = weights.extent(2);
    const int ho = detail::conv_out_extent(input.extent(1), k, stride, pad);
    const int wo = detail::conv_out_extent(input.extent(2), k, stride, pad);
    require(grad_out.rank() == 3 && grad_out.extent(0) == weights.extent(0) &&
                grad_out.extent(1) == ho && grad_out.extent(2) == wo,
            "conv2d backward: grad_out shape mismatch");
    if (detail::fast3x3s2p1_applicable(input, weights, stride, pad))
        return detail::conv2d_backward_fast(input, weights, grad_out);
    return detail::conv2d_backward_generic(input, weights, stride, pad, grad_out);
}

template <typename S>
struct FcGrads {
    Tensor<S> input;
    Tensor<S> weights;
    Tensor<S> bias;
};

/// input [n_in], weights [n_out,n_in], bias [n_out] -> [n_out].
template <typename S>
Tensor<S> fc_forward(const Tensor<S>& input, const Tensor<S>& weights,
                     const Tensor<S>& bias) {
    require(input.rank() == 1 && weights.rank() == 2 && bias.rank() == 1,
            "fully_connected: expected vector input, matrix weights, vector bias");
    require(weights.extent(1) == input.extent(0),
            "fully_connected: weight inner extent " + weights.shape_str() +
                " does not match input length " + input.shape_str());
    require(bias.extent(0) == weights.extent(0),
            "fully_connected: bias extent must equal n_out");

    const Eigen::Index n_out = weights.extent(0), n_in = weights.extent(1);
    Tensor<S> out({int(n_out)});
    out.vector() = weights.matrix(n_out, n_in) * input.vector() + bias.vector();
    return out;
}

template <typename S>
FcGrads<S> fc_backward(const Tensor<S>& input, const Tensor<S>& weights,
                       const Tensor<S>& grad_out) {
    const Eigen::Index n_out = weights.extent(0), n_in = weights.extent(1);
    require(grad_out.rank() == 1 && grad_out.extent(0) == int(n_out),
            "fully_connected backward: grad_out shape mismatch");

    FcGrads<S> g{Tensor<S>({int(n_in)}), Tensor<S>({int(n_out), int(n_in)}),
                 Tensor<S>({int(n_out)})};
    g.input.vector() = weights.matrix(n_out, n_in).transpose() * grad_out.vector();
    g.weights.matrix(n_out, n_in) = grad_out.vector() * input.vector().transpose();
    g.bias.vector() = grad_out.vector();
    return g;
}

/// Elementwise max(x, 0).
template <typename S>
Tensor<S> relu_forward(const Tensor<S>& input) {
    Tensor<S> out(input.shape());
    out.array() = input.array().max(S(0));
    return out;
}

/// Subgradient at 0 is 0: upstream gradient passes only where x > 0.
template <typename S>
Tensor<S> relu_backward(const Tensor<S>& input, const Tensor<S>& grad_out) {
    require(input.same_shape(grad_out), "relu backward: shape mismatch");
    Tensor<S> g(input.shape());
    g.array() = (input.array() > S(0)).select(grad_out.array(), S(0));
    return g;
}

template <typename S>
struct MseResult {
    S loss;
    Tensor<S> grad_pred;
};

/// loss = (1/N) sum (pred - target)^2, grad = (2/N)(pred - target).
template <typename S>
MseResult<S> mse_loss(const Tensor<S>& pred, const Tensor<S>& target) {
    require(pred.same_shape(target),
            "mse_loss: shape mismatch " + pred.shape_str() + " vs " + target.shape_str());
    const Eigen::Index n = pred.size();
    MseResult<S> r{S(0), Tensor<S>(pred.shape())};
    double acc = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = double(pred[i]) - double(target[i]);
        acc += d * d;
        r.grad_pred[i] = S(2.0 / double(n) * d);
    }
    r.loss = S(acc / double(n));
    return r;
}

} // namespace sgem
