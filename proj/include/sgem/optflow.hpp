#pragma once

// Dense two-frame optical flow via Farneback polynomial expansion: each
// neighborhood is fit with a quadratic f(x) ~ x'Ax + b'x + c under Gaussian
// weighting, and displacements solve A d = -(b2 - b1)/2, averaged over a
// Gaussian window and refined coarse-to-fine over an image pyramid.

#include <filesystem>
#include <utility>
#include <vector>

#include "sgem/tensor.hpp"

namespace sgem {

/// Grayscale frame, values in [0,1], row-major.
struct FrameGray {
    int height = 0;
    int width = 0;
    ArrayX<float> values;

    FrameGray() = default;
    FrameGray(int h, int w) : height(h), width(w) { values.setZero(Eigen::Index(h) * w); }

    float at(int y, int x) const { return values[Eigen::Index(y) * width + x]; }
    float& at(int y, int x) { return values[Eigen::Index(y) * width + x]; }

    void clamp01() { values = values.min(1.0f).max(0.0f); }
    void validate() const;
};

/// Per-pixel displacement in pixels per frame step, u rightward, v downward.
struct FlowField {
    int height = 0;
    int width = 0;
    ArrayX<float> u, v;

    FlowField() = default;
    FlowField(int h, int w) : height(h), width(w) {
        u.setZero(Eigen::Index(h) * w);
        v.setZero(Eigen::Index(h) * w);
    }
};

struct FarnebackParams {
    int pyramid_levels = 3;
    float pyramid_scale = 0.5f;
    int window = 15; // Gaussian averaging window for the flow equations
    int iterations = 3;
    int poly_n = 5; // polynomial expansion neighborhood (odd)
    float poly_sigma = 1.1f;

    void validate() const;
};

/// Per-pixel quadratic coefficients: f(p + d) ~ c + b.d + d'Ad with
/// A = [[a11, a12], [a12, a22]], b = (b1, b2), x rightward / y downward.
struct PolyExpansion {
    int height = 0;
    int width = 0;
    ArrayX<float> a11, a12, a22, b1, b2, c;
};

/// Gaussian-weighted least-squares quadratic fit on every pixel neighborhood;
/// borders use clamped extension.
PolyExpansion poly_expansion(const FrameGray& frame, int poly_n, float poly_sigma);

FlowField farneback_flow(const FrameGray& prev, const FrameGray& next,
                         const FarnebackParams& params);

/// Stacks per-pair flow fields as channels [u0,v0,u1,v1,...] -> [2P,H,W].
/// Values pass through unchanged. Pairs may be computed in parallel.
TensorXf flow_stack(const std::vector<FrameGray>& frames,
                    const std::vector<std::pair<int, int>>& pairs,
                    const FarnebackParams& params, int threads = 1);

/// Area-average resampling (anti-aliased; used for pyramids and ingestion).
FrameGray resize_area(const FrameGray& src, int out_h, int out_w);

// Debug dump: "FLOW", u16 height, u16 width, u then v as little-endian f32.
void write_flow_field(const std::filesystem::path& path, const FlowField& f);
FlowField read_flow_field(const std::filesystem::path& path);

} // namespace sgem
