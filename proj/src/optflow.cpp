#include "sgem/optflow.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "sgem/parallel.hpp"
#include "sgem/serialize.hpp"

namespace sgem {

void FrameGray::validate() const {
    require(height >= 16 && width >= 16, "frame extents must be >= 16");
    require(values.size() == Eigen::Index(height) * width, "frame buffer size mismatch");
    require((values >= 0.0f).all() && (values <= 1.0f).all(),
            "frame values must lie in [0,1]");
}

void FarnebackParams::validate() const {
    require(pyramid_scale > 0.0f && pyramid_scale < 1.0f,
            "pyramid_scale must be in (0,1)");
    require(pyramid_levels >= 1, "pyramid_levels must be >= 1");
    require(window >= 3 && window % 2 == 1, "window must be odd and >= 3");
    require(poly_n >= 3 && poly_n % 2 == 1, "poly_n must be odd and >= 3");
    require(iterations >= 1, "iterations must be >= 1");
    require(poly_sigma > 0.0f, "poly_sigma must be positive");
}

namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

std::vector<float> gaussian_kernel(int radius, float sigma) {
    std::vector<float> k(std::size_t(2 * radius + 1));
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * double(i) * double(i) / (double(sigma) * sigma));
        k[std::size_t(i + radius)] = float(v);
        sum += v;
    }
    for (auto& v : k) v = float(double(v) / sum);
    return k;
}

// 1-D area resample of one line (gather with fractional source coverage).
void resample_line_area(const float* src, int n_src, float* dst, int n_dst,
                        Eigen::Index src_stride, Eigen::Index dst_stride) {
    const double scale = double(n_src) / double(n_dst);
    for (int j = 0; j < n_dst; ++j) {
        const double lo = j * scale;
        const double hi = (j + 1) * scale;
        double acc = 0;
        int i0 = int(std::floor(lo));
        int i1 = int(std::ceil(hi));
        if (i1 > n_src) i1 = n_src;
        for (int i = i0; i < i1; ++i) {
            const double cover = std::min(hi, double(i + 1)) - std::max(lo, double(i));
            if (cover > 0) acc += cover * double(src[Eigen::Index(i) * src_stride]);
        }
        dst[Eigen::Index(j) * dst_stride] = float(acc / scale);
    }
}

// Bilinear resize of a flat field, used when upsampling flow between levels.
ArrayX<float> resize_bilinear(const ArrayX<float>& src, int h1, int w1, int h2, int w2) {
    ArrayX<float> dst(Eigen::Index(h2) * w2);
    for (int y = 0; y < h2; ++y) {
        double sy = (y + 0.5) * double(h1) / h2 - 0.5;
        sy = std::min(std::max(sy, 0.0), double(h1 - 1));
        const int y0 = int(sy);
        const int y1 = std::min(y0 + 1, h1 - 1);
        const float fy = float(sy - y0);
        for (int x = 0; x < w2; ++x) {
            double sx = (x + 0.5) * double(w1) / w2 - 0.5;
            sx = std::min(std::max(sx, 0.0), double(w1 - 1));
            const int x0 = int(sx);
            const int x1 = std::min(x0 + 1, w1 - 1);
            const float fx = float(sx - x0);
            const float top = src[Eigen::Index(y0) * w1 + x0] * (1 - fx) +
                              src[Eigen::Index(y0) * w1 + x1] * fx;
            const float bot = src[Eigen::Index(y1) * w1 + x0] * (1 - fx) +
                              src[Eigen::Index(y1) * w1 + x1] * fx;
            dst[Eigen::Index(y) * w2 + x] = top * (1 - fy) + bot * fy;
        }
    }
    return dst;
}

// Separable Gaussian blur with clamped borders, in place via scratch.
void gaussian_blur(ArrayX<float>& f, int h, int w, const std::vector<float>& kernel) {
    const int r = int(kernel.size() / 2);
    ArrayX<float> tmp(Eigen::Index(h) * w);
    for (int y = 0; y < h; ++y) {
        const float* row = f.data() + Eigen::Index(y) * w;
        float* out = tmp.data() + Eigen::Index(y) * w;
        for (int x = 0; x < w; ++x) {
            float acc = 0;
            for (int i = -r; i <= r; ++i)
                acc += kernel[std::size_t(i + r)] * row[clampi(x + i, 0, w - 1)];
            out[x] = acc;
        }
    }
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            float acc = 0;
            for (int i = -r; i <= r; ++i)
                acc += kernel[std::size_t(i + r)] *
                       tmp[Eigen::Index(clampi(y + i, 0, h - 1)) * w + x];
            f[Eigen::Index(y) * w + x] = acc;
        }
    }
}

struct BilinearSample {
    int x0, x1, y0, y1;
    float wx, wy;
};

inline BilinearSample bilinear_at(float sx, float sy, int h, int w) {
    sx = std::min(std::max(sx, 0.0f), float(w - 1));
    sy = std::min(std::max(sy, 0.0f), float(h - 1));
    BilinearSample s;
    s.x0 = int(sx);
    s.y0 = int(sy);
    s.x1 = std::min(s.x0 + 1, w - 1);
    s.y1 = std::min(s.y0 + 1, h - 1);
    s.wx = sx - float(s.x0);
    s.wy = sy - float(s.y0);
    return s;
}

inline float sample(const ArrayX<float>& f, const BilinearSample& s, int w) {
    const float top = f[Eigen::Index(s.y0) * w + s.x0] * (1 - s.wx) +
                      f[Eigen::Index(s.y0) * w + s.x1] * s.wx;
    const float bot = f[Eigen::Index(s.y1) * w + s.x0] * (1 - s.wx) +
                      f[Eigen::Index(s.y1) * w + s.x1] * s.wx;
    return top * (1 - s.wy) + bot * s.wy;
}

// One Gauss-Seidel-style displacement refinement at a fixed pyramid level.
void update_flow(const PolyExpansion& e1, const PolyExpansion& e2, FlowField& flow,
                 const std::vector<float>& win_kernel) {
    const int h = e1.height, w = e1.width;
    ArrayX<float> m11(Eigen::Index(h) * w), m12(m11.size()), m22(m11.size()),
        h1(m11.size()), h2(m11.size());

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Eigen::Index i = Eigen::Index(y) * w + x;
            const float du = flow.u[i], dv = flow.v[i];
            const auto s = bilinear_at(float(x) + du, float(y) + dv, h, w);

            const float a11 = 0.5f * (e1.a11[i] + sample(e2.a11, s, w));
            const float a12 = 0.5f * (e1.a12[i] + sample(e2.a12, s, w));
            const float a22 = 0.5f * (e1.a22[i] + sample(e2.a22, s, w));
            const float db1 =
                -0.5f * (sample(e2.b1, s, w) - e1.b1[i]) + a11 * du + a12 * dv;
            const float db2 =
                -0.5f * (sample(e2.b2, s, w) - e1.b2[i]) + a12 * du + a22 * dv;

            // normal equations A'A d = A'db (A symmetric)
            m11[i] = a11 * a11 + a12 * a12;
            m12[i] = a12 * (a11 + a22);
            m22[i] = a12 * a12 + a22 * a22;
            h1[i] = a11 * db1 + a12 * db2;
            h2[i] = a12 * db1 + a22 * db2;
        }
    }

    gaussian_blur(m11, h, w, win_kernel);
    gaussian_blur(m12, h, w, win_kernel);
    gaussian_blur(m22, h, w, win_kernel);
    gaussian_blur(h1, h, w, win_kernel);
    gaussian_blur(h2, h, w, win_kernel);

    for (Eigen::Index i = 0; i < m11.size(); ++i) {
        const float det = m11[i] * m22[i] - m12[i] * m12[i];
        if (det < 1e-9f) continue; // singular neighborhood: keep prior flow
        flow.u[i] = (m22[i] * h1[i] - m12[i] * h2[i]) / det;
        flow.v[i] = (m11[i] * h2[i] - m12[i] * h1[i]) / det;
    }
}

} // namespace

PolyExpansion poly_expansion(const FrameGray& frame, int poly_n, float poly_sigma) {
    require(poly_n >= 3 && poly_n % 2 == 1, "poly_n must be odd and >= 3");
    require(poly_sigma > 0.0f, "poly_sigma must be positive");
    require(frame.height >= poly_n && frame.width >= poly_n,
            "frame extents must be >= poly_n");

    const int h = frame.height, w = frame.width;
    const int r = poly_n / 2;
    const auto g = gaussian_kernel(r, poly_sigma);

    // 1-D moments of the normalized applicability; the 2-D Gram matrix of the
    // basis (1, x, y, x^2, y^2, xy) is separable in these.
    double s2 = 0, s4 = 0;
    for (int i = -r; i <= r; ++i) {
        s2 += double(g[std::size_t(i + r)]) * i * i;
        s4 += double(g[std::size_t(i + r)]) * i * i * i * i;
    }

    // inverse of the coupled (1, x^2, y^2) block
    Eigen::Matrix3d G;
    G << 1, s2, s2, s2, s4, s2 * s2, s2, s2 * s2, s4;
    const Eigen::Matrix3d Gi = G.inverse();
    const double inv_s2 = 1.0 / s2;
    const double inv_s22 = 1.0 / (s2 * s2);

    // horizontal pass: m0/m1/m2 = sum_k g[k] * f(x+k) * {1, k, k^2}
    ArrayX<float> m0(Eigen::Index(h) * w), m1(m0.size()), m2(m0.size());
    for (int y = 0; y < h; ++y) {
        const float* row = frame.values.data() + Eigen::Index(y) * w;
        for (int x = 0; x < w; ++x) {
            float a0 = 0, a1 = 0, a2 = 0;
            for (int k = -r; k <= r; ++k) {
                const float gv = g[std::size_t(k + r)];
                const float fv = row[clampi(x + k, 0, w - 1)];
                a0 += gv * fv;
                a1 += gv * float(k) * fv;
                a2 += gv * float(k * k) * fv;
            }
            const Eigen::Index i = Eigen::Index(y) * w + x;
            m0[i] = a0;
            m1[i] = a1;
            m2[i] = a2;
        }
    }

    PolyExpansion e;
    e.height = h;
    e.width = w;
    e.a11.resize(m0.size());
    e.a12.resize(m0.size());
    e.a22.resize(m0.size());
    e.b1.resize(m0.size());
    e.b2.resize(m0.size());
    e.c.resize(m0.size());

    // vertical pass combines the row moments into the six weighted sums
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s1 = 0, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
            for (int j = -r; j <= r; ++j) {
                const double gv = g[std::size_t(j + r)];
                const Eigen::Index i = Eigen::Index(clampi(y + j, 0, h - 1)) * w + x;
                s1 += gv * m0[i];
                sx += gv * m1[i];
                sy += gv * j * m0[i];
                sxx += gv * m2[i];
                syy += gv * j * j * m0[i];
                sxy += gv * j * m1[i];
            }
            const Eigen::Index i = Eigen::Index(y) * w + x;
            const double c0 = Gi(0, 0) * s1 + Gi(0, 1) * sxx + Gi(0, 2) * syy;
            const double cxx = Gi(1, 0) * s1 + Gi(1, 1) * sxx + Gi(1, 2) * syy;
            const double cyy = Gi(2, 0) * s1 + Gi(2, 1) * sxx + Gi(2, 2) * syy;
            e.c[i] = float(c0);
            e.a11[i] = float(cxx);
            e.a22[i] = float(cyy);
            e.a12[i] = float(0.5 * sxy * inv_s22);
            e.b1[i] = float(sx * inv_s2);
            e.b2[i] = float(sy * inv_s2);
        }
    }
    return e;
}

FrameGray resize_area(const FrameGray& src, int out_h, int out_w) {
    require(out_h >= 1 && out_w >= 1, "resize target must be positive");
    if (out_h == src.height && out_w == src.width) return src;

    // rows first, then columns
    FrameGray mid(src.height, out_w);
    for (int y = 0; y < src.height; ++y)
        resample_line_area(src.values.data() + Eigen::Index(y) * src.width, src.width,
                           mid.values.data() + Eigen::Index(y) * out_w, out_w, 1, 1);
    FrameGray out(out_h, out_w);
    for (int x = 0; x < out_w; ++x)
        resample_line_area(mid.values.data() + x, src.height, out.values.data() + x,
                           out_h, out_w, out_w);
    out.clamp01();
    return out;
}

FlowField farneback_flow(const FrameGray& prev, const FrameGray& next,
                         const FarnebackParams& params) {
    params.validate();
    prev.validate();
    next.validate();
    require(prev.height == next.height && prev.width == next.width,
            "farneback_flow: frame extents must match");

    const int h = prev.height, w = prev.width;

    // level sizes, finest first; levels below 16 px are dropped
    std::vector<std::pair<int, int>> sizes;
    for (int l = 0; l < params.pyramid_levels; ++l) {
        const double s = std::pow(double(params.pyramid_scale), l);
        const int lh = int(std::lround(h * s)), lw = int(std::lround(w * s));
        if (lh < 16 || lw < 16) break;
        sizes.emplace_back(lh, lw);
    }
    if (sizes.empty()) sizes.emplace_back(h, w);

    const float win_sigma = 0.3f * ((float(params.window) - 1.0f) * 0.5f - 1.0f) + 0.8f;
    const auto win_kernel = gaussian_kernel(params.window / 2, win_sigma);

    FlowField flow;
    for (int l = int(sizes.size()) - 1; l >= 0; --l) {
        const auto [lh, lw] = sizes[std::size_t(l)];
        const FrameGray p1 = resize_area(prev, lh, lw);
        const FrameGray p2 = resize_area(next, lh, lw);

        if (flow.height == 0) {
            flow = FlowField(lh, lw);
        } else {
            FlowField up(lh, lw);
            up.u = resize_bilinear(flow.u, flow.height, flow.width, lh, lw) *
                   (float(lw) / float(flow.width));
            up.v = resize_bilinear(flow.v, flow.height, flow.width, lh, lw) *
                   (float(lh) / float(flow.height));
            flow = std::move(up);
        }

        const PolyExpansion e1 = poly_expansion(p1, params.poly_n, params.poly_sigma);
        const PolyExpansion e2 = poly_expansion(p2, params.poly_n, params.poly_sigma);
        for (int it = 0; it < params.iterations; ++it)
            update_flow(e1, e2, flow, win_kernel);
    }

    // sanity bound from the FlowField invariant
    const float bound = float(w);
    flow.u = flow.u.min(bound).max(-bound);
    flow.v = flow.v.min(bound).max(-bound);
    return flow;
}

TensorXf flow_stack(const std::vector<FrameGray>& frames,
                    const std::vector<std::pair<int, int>>& pairs,
                    const FarnebackParams& params, int threads) {
    require(!frames.empty() && !pairs.empty(), "flow_stack: empty input");
    const int h = frames.front().height, w = frames.front().width;
    const int n = int(frames.size());
    for (const auto& [i, j] : pairs)
        require(i >= 0 && i < n && j >= 0 && j < n,
                "flow_stack: pair index out of range (" + std::to_string(i) + "," +
                    std::to_string(j) + ")");

    TensorXf out({2 * int(pairs.size()), h, w});
    parallel_for(int(pairs.size()), threads, [&](int p) {
        const auto [i, j] = pairs[std::size_t(p)];
        const FlowField f = farneback_flow(frames[std::size_t(i)], frames[std::size_t(j)], params);
        std::copy_n(f.u.data(), Eigen::Index(h) * w,
                    out.data() + Eigen::Index(2 * p) * h * w);
        std::copy_n(f.v.data(), Eigen::Index(h) * w,
                    out.data() + Eigen::Index(2 * p + 1) * h * w);
    });
    return out;
}

void write_flow_field(const std::filesystem::path& path, const FlowField& f) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    bin::write_exact(os, "FLOW", 4);
    bin::write_u16(os, std::uint16_t(f.height));
    bin::write_u16(os, std::uint16_t(f.width));
    bin::write_f32(os, f.u.data(), std::size_t(f.u.size()));
    bin::write_f32(os, f.v.data(), std::size_t(f.v.size()));
    os.flush();
    if (!os) throw IoError("write failed: " + path.string());
}

FlowField read_flow_field(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    const std::string what = path.filename().string();
    bin::expect_magic(is, "FLOW", what);
    const int h = bin::read_u16(is, what + " height");
    const int w = bin::read_u16(is, what + " width");
    FlowField f(h, w);
    bin::read_f32(is, f.u.data(), std::size_t(f.u.size()), what + " u plane");
    bin::read_f32(is, f.v.data(), std::size_t(f.v.size()), what + " v plane");
    return f;
}

} // namespace sgem
