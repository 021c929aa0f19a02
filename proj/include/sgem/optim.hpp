#pragma once

#include <cmath>
#include <map>
#include <string>

#include "sgem/tensor.hpp"

namespace sgem {

/// value/gradient pair plus Adam moment state, all shape-locked together.
template <typename S = float>
struct Param {
    Tensor<S> value;
    Tensor<S> grad;
    Tensor<S> m; // first moment
    Tensor<S> v; // second moment
};

/// Named parameter map. std::map keeps iteration order stable by name, which
/// fixes both the update order and the checkpoint serialization order.
template <typename S = float>
class ParamSet {
public:
    void add(const std::string& name, Tensor<S> init) {
        require(!params_.contains(name), "duplicate parameter name: " + name);
        Param<S> p;
        p.grad = Tensor<S>(init.shape());
        p.m = Tensor<S>(init.shape());
        p.v = Tensor<S>(init.shape());
        p.value = std::move(init);
        params_.emplace(name, std::move(p));
    }

    Param<S>& at(const std::string& name) {
        auto it = params_.find(name);
        require(it != params_.end(), "unknown parameter: " + name);
        return it->second;
    }
    const Param<S>& at(const std::string& name) const {
        auto it = params_.find(name);
        require(it != params_.end(), "unknown parameter: " + name);
        return it->second;
    }

    Tensor<S>& value(const std::string& name) { return at(name).value; }
    const Tensor<S>& value(const std::string& name) const { return at(name).value; }
    Tensor<S>& grad(const std::string& name) { return at(name).grad; }

    void zero_grads() {
        for (auto& [_, p] : params_) p.grad.set_zero();
    }

    std::size_t size() const { return params_.size(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    Eigen::Index scalar_count() const {
        Eigen::Index n = 0;
        for (const auto& [_, p] : params_) n += p.value.size();
        return n;
    }

private:
    std::map<std::string, Param<S>> params_;
};

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// One bias-corrected Adam update over every parameter; gradients are zeroed
/// afterward. t is the 1-based step index.
template <typename S>
void adam_step(ParamSet<S>& params, const AdamConfig& cfg, long t) {
    require(t >= 1, "adam_step: step index must be >= 1");
    const double bc1 = 1.0 - std::pow(double(cfg.beta1), double(t));
    const double bc2 = 1.0 - std::pow(double(cfg.beta2), double(t));
    for (auto& [name, p] : params) {
        if (!p.grad.all_finite())
            throw TrainingError("non-finite gradient in parameter '" + name + "'");
        auto& g = p.grad.array();
        auto& m = p.m.array();
        auto& v = p.v.array();
        m = S(cfg.beta1) * m + S(1 - cfg.beta1) * g;
        v = S(cfg.beta2) * v + S(1 - cfg.beta2) * g.square();
        p.value.array() -=
            S(cfg.lr) * (m / S(bc1)) / ((v / S(bc2)).sqrt() + S(cfg.eps));
        g.setZero();
    }
}

} // namespace sgem
