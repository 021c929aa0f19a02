#include "sgem/model.hpp"

#include <cmath>

#include "sgem/layers.hpp"
#include "sgem/rng.hpp"

namespace sgem {

namespace {

TensorXf kaiming_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
    TensorXf t(std::move(shape));
    const float bound = std::sqrt(6.0f / float(fan_in));
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

// global average pool over the spatial map: [C,H,W] -> [C]
TensorXf channel_mean(const TensorXf& x) {
    const int c = x.extent(0);
    const Eigen::Index hw = Eigen::Index(x.extent(1)) * x.extent(2);
    TensorXf out({c});
    for (int i = 0; i < c; ++i) {
        double acc = 0;
        const float* p = x.data() + Eigen::Index(i) * hw;
        for (Eigen::Index j = 0; j < hw; ++j) acc += double(p[j]);
        out[i] = float(acc / double(hw));
    }
    return out;
}

TensorXf channel_mean_backward(const std::vector<int>& in_shape, const TensorXf& grad_out) {
    TensorXf g(in_shape);
    const Eigen::Index hw = Eigen::Index(in_shape[1]) * in_shape[2];
    for (int i = 0; i < in_shape[0]; ++i) {
        const float v = grad_out[i] / float(hw);
        float* p = g.data() + Eigen::Index(i) * hw;
        for (Eigen::Index j = 0; j < hw; ++j) p[j] = v;
    }
    return g;
}

void check_flow_shape(const TensorXf& flow, const ModelConfig& cfg) {
    require(flow.rank() == 3 && flow.extent(0) == cfg.in_channels &&
                flow.extent(1) == cfg.input_size && flow.extent(2) == cfg.input_size,
            "encode: flow stack must be [" + std::to_string(cfg.in_channels) + "," +
                std::to_string(cfg.input_size) + "," + std::to_string(cfg.input_size) +
                "], got " + flow.shape_str());
}

} // namespace

std::pair<EncoderParams, DecoderParams> init_params(std::uint64_t seed,
                                                    const ModelConfig& cfg) {
    Rng rng(derive_seed(seed, "model-init"));

    EncoderParams enc{cfg, {}};
    int cin = cfg.in_channels;
    for (int i = 0; i < 4; ++i) {
        const int cout = cfg.conv_channels[std::size_t(i)];
        const std::string base = "enc.conv" + std::to_string(i + 1);
        enc.p.add(base + ".w", kaiming_uniform({cout, cin, 3, 3}, cin * 9, rng));
        enc.p.add(base + ".b", TensorXf::zeros({cout}));
        cin = cout;
    }
    enc.p.add("enc.fc.w", kaiming_uniform({cfg.embed_dim, cin}, cin, rng));
    enc.p.add("enc.fc.b", TensorXf::zeros({cfg.embed_dim}));

    DecoderParams dec{cfg, {}};
    dec.p.add("dec.fc1.w",
              kaiming_uniform({cfg.decoder_hidden, cfg.embed_dim}, cfg.embed_dim, rng));
    dec.p.add("dec.fc1.b", TensorXf::zeros({cfg.decoder_hidden}));
    dec.p.add("dec.fc2.w",
              kaiming_uniform({cfg.decoder_out(), cfg.decoder_hidden}, cfg.decoder_hidden, rng));
    dec.p.add("dec.fc2.b", TensorXf::zeros({cfg.decoder_out()}));
    return {std::move(enc), std::move(dec)};
}

TensorXf encode_cached(const TensorXf& flow_stack, const EncoderParams& enc,
                       EncoderCache& cache) {
    check_flow_shape(flow_stack, enc.cfg);
    const auto& p = enc.p;
    cache.input = flow_stack;
    cache.pre1 = conv2d_forward(cache.input, p.value("enc.conv1.w"), p.value("enc.conv1.b"), 2, 1);
    cache.act1 = relu_forward(cache.pre1);
    cache.pre2 = conv2d_forward(cache.act1, p.value("enc.conv2.w"), p.value("enc.conv2.b"), 2, 1);
    cache.act2 = relu_forward(cache.pre2);
    cache.pre3 = conv2d_forward(cache.act2, p.value("enc.conv3.w"), p.value("enc.conv3.b"), 2, 1);
    cache.act3 = relu_forward(cache.pre3);
    cache.pre4 = conv2d_forward(cache.act3, p.value("enc.conv4.w"), p.value("enc.conv4.b"), 2, 1);
    cache.act4 = relu_forward(cache.pre4);
    cache.pooled = channel_mean(cache.act4);
    return fc_forward(cache.pooled, p.value("enc.fc.w"), p.value("enc.fc.b"));
}

TensorXf encode(const TensorXf& flow_stack, const EncoderParams& enc) {
    EncoderCache cache;
    return encode_cached(flow_stack, enc, cache);
}

TensorXf decode_cached(const TensorXf& rep, const DecoderParams& dec, DecoderCache& cache) {
    require(rep.rank() == 1 && rep.extent(0) == dec.cfg.embed_dim,
            "decode: representation must be [" + std::to_string(dec.cfg.embed_dim) +
                "], got " + rep.shape_str());
    const auto& p = dec.p;
    cache.rep = rep;
    cache.pre_hidden = fc_forward(rep, p.value("dec.fc1.w"), p.value("dec.fc1.b"));
    cache.hidden = relu_forward(cache.pre_hidden);
    TensorXf flat = fc_forward(cache.hidden, p.value("dec.fc2.w"), p.value("dec.fc2.b"));
    return TensorXf({dec.cfg.kin_rows, dec.cfg.kin_dims}, std::move(flat.array()));
}

TensorXf decode(const TensorXf& rep, const DecoderParams& dec) {
    DecoderCache cache;
    return decode_cached(rep, dec, cache);
}

void ModelGrads::init_like(const EncoderParams& enc, const DecoderParams& dec) {
    g.clear();
    for (const auto& [name, param] : enc.p) g.emplace(name, TensorXf(param.value.shape()));
    for (const auto& [name, param] : dec.p) g.emplace(name, TensorXf(param.value.shape()));
}

void ModelGrads::set_zero() {
    for (auto& [_, t] : g) t.set_zero();
}

TensorXf decode_backward(const DecoderCache& cache, const DecoderParams& dec,
                         const TensorXf& grad_out, ModelGrads& grads) {
    require(grad_out.size() == Eigen::Index(dec.cfg.decoder_out()),
            "decode_backward: grad size mismatch");
    TensorXf flat({dec.cfg.decoder_out()}, ArrayX<float>(grad_out.array()));

    auto g2 = fc_backward(cache.hidden, dec.p.value("dec.fc2.w"), flat);
    grads.g.at("dec.fc2.w").array() += g2.weights.array();
    grads.g.at("dec.fc2.b").array() += g2.bias.array();

    TensorXf grad_pre = relu_backward(cache.pre_hidden, g2.input);
    auto g1 = fc_backward(cache.rep, dec.p.value("dec.fc1.w"), grad_pre);
    grads.g.at("dec.fc1.w").array() += g1.weights.array();
    grads.g.at("dec.fc1.b").array() += g1.bias.array();
    return g1.input;
}

void encode_backward(const EncoderCache& cache, const EncoderParams& enc,
                     const TensorXf& grad_rep, ModelGrads& grads, TensorXf* grad_input) {
    const auto& p = enc.p;
    auto gf = fc_backward(cache.pooled, p.value("enc.fc.w"), grad_rep);
    grads.g.at("enc.fc.w").array() += gf.weights.array();
    grads.g.at("enc.fc.b").array() += gf.bias.array();

    TensorXf grad = channel_mean_backward(cache.act4.shape(), gf.input);
    grad = relu_backward(cache.pre4, grad);
    {
        auto gc = conv2d_backward(cache.act3, p.value("enc.conv4.w"), 2, 1, grad);
        grads.g.at("enc.conv4.w").array() += gc.weights.array();
        grads.g.at("enc.conv4.b").array() += gc.bias.array();
        grad = std::move(gc.input);
    }
    grad = relu_backward(cache.pre3, grad);
    {
        auto gc = conv2d_backward(cache.act2, p.value("enc.conv3.w"), 2, 1, grad);
        grads.g.at("enc.conv3.w").array() += gc.weights.array();
        grads.g.at("enc.conv3.b").array() += gc.bias.array();
        grad = std::move(gc.input);
    }
    grad = relu_backward(cache.pre2, grad);
    {
        auto gc = conv2d_backward(cache.act1, p.value("enc.conv2.w"), 2, 1, grad);
        grads.g.at("enc.conv2.w").array() += gc.weights.array();
        grads.g.at("enc.conv2.b").array() += gc.bias.array();
        grad = std::move(gc.input);
    }
    grad = relu_backward(cache.pre1, grad);
    {
        auto gc = conv2d_backward(cache.input, p.value("enc.conv1.w"), 2, 1, grad);
        grads.g.at("enc.conv1.w").array() += gc.weights.array();
        grads.g.at("enc.conv1.b").array() += gc.bias.array();
        if (grad_input) *grad_input = std::move(gc.input);
    }
}

float composite_grad_check(std::uint64_t seed, int probes, float epsilon,
                           const ModelConfig& cfg) {
    require(epsilon >= 1e-4f && epsilon <= 1e-2f, "epsilon outside [1e-4, 1e-2]");
    Rng rng(derive_seed(seed, "composite-check"));

    auto [enc, dec] = init_params(seed, cfg);
    TensorXf x({cfg.in_channels, cfg.input_size, cfg.input_size});
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.5f, 1.5f);
    TensorXf target({cfg.kin_rows, cfg.kin_dims});
    for (Eigen::Index i = 0; i < target.size(); ++i) target[i] = rng.uniform(-1.f, 1.f);

    auto objective = [&]() {
        EncoderCache ec;
        DecoderCache dc;
        auto rep = encode_cached(x, enc, ec);
        auto out = decode_cached(rep, dec, dc);
        return double(mse_loss(out, target).loss);
    };

    // analytic gradients for every parameter in one backward sweep
    ModelGrads grads;
    grads.init_like(enc, dec);
    {
        EncoderCache ec;
        DecoderCache dc;
        auto rep = encode_cached(x, enc, ec);
        auto out = decode_cached(rep, dec, dc);
        auto mse = mse_loss(out, target);
        auto grad_rep = decode_backward(dc, dec, mse.grad_pred, grads);
        encode_backward(ec, enc, grad_rep, grads);
    }

    double worst = 0;
    auto probe_tensor = [&](TensorXf& t, const TensorXf& analytic) {
        for (int k = 0; k < probes; ++k) {
            const Eigen::Index i = Eigen::Index(rng.next_below(std::uint64_t(t.size())));
            const float saved = t[i];
            t[i] = saved + epsilon;
            const double jp = objective();
            t[i] = saved - epsilon;
            const double jm = objective();
            t[i] = saved;
            const double numeric = (jp - jm) / (2.0 * double(epsilon));
            const double a = double(analytic[i]);
            const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    };
    for (auto& [name, param] : enc.p) probe_tensor(param.value, grads.g.at(name));
    for (auto& [name, param] : dec.p) probe_tensor(param.value, grads.g.at(name));
    return float(worst);
}

} // namespace sgem
