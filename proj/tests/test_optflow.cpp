#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sgem/optflow.hpp"
#include "sgem/rng.hpp"

using namespace sgem;

namespace {

// Test-side texture: white noise blurred with a separable Gaussian (sigma 2),
// generated on a larger canvas so translated crops never invent content.
struct NoiseCanvas {
    int size;
    std::vector<float> values;

    NoiseCanvas(int n, std::uint64_t seed) : size(n), values(std::size_t(n) * n) {
        Rng rng(seed);
        std::vector<float> raw(values.size());
        for (auto& v : raw) v = rng.next_float();

        const double sigma = 2.0;
        const int r = 6;
        std::vector<double> k(std::size_t(2 * r + 1));
        double sum = 0;
        for (int i = -r; i <= r; ++i) {
            k[std::size_t(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
            sum += k[std::size_t(i + r)];
        }
        for (auto& v : k) v /= sum;

        std::vector<float> tmp(values.size());
        auto clampi = [n](int v) { return v < 0 ? 0 : (v >= n ? n - 1 : v); };
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                double acc = 0;
                for (int i = -r; i <= r; ++i)
                    acc += k[std::size_t(i + r)] * raw[std::size_t(y) * n + clampi(x + i)];
                tmp[std::size_t(y) * n + x] = float(acc);
            }
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                double acc = 0;
                for (int i = -r; i <= r; ++i)
                    acc += k[std::size_t(i + r)] * tmp[std::size_t(clampi(y + i)) * n + x];
                values[std::size_t(y) * n + x] = float(acc);
            }
        // stretch contrast into [0.1, 0.9]
        float lo = 1e9f, hi = -1e9f;
        for (float v : values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        for (auto& v : values) v = 0.1f + 0.8f * (v - lo) / (hi - lo);
    }

    FrameGray crop(int oy, int ox, int h, int w) const {
        FrameGray f(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) f.at(y, x) = values[std::size_t(oy + y) * size + ox + x];
        return f;
    }
};

double central_epe(const FlowField& f, double tu, double tv) {
    const int x0 = int(0.2 * f.width), x1 = int(0.8 * f.width);
    const int y0 = int(0.2 * f.height), y1 = int(0.8 * f.height);
    double acc = 0;
    int n = 0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            const Eigen::Index i = Eigen::Index(y) * f.width + x;
            const double du = double(f.u[i]) - tu;
            const double dv = double(f.v[i]) - tv;
            acc += std::sqrt(du * du + dv * dv);
            ++n;
        }
    return acc / n;
}

} // namespace

TEST_CASE("poly_expansion fits a constant frame exactly") {
    FrameGray f(20, 20);
    f.values.setConstant(0.37f);
    auto e = poly_expansion(f, 5, 1.1f);
    for (int y = 4; y < 16; ++y)
        for (int x = 4; x < 16; ++x) {
            const Eigen::Index i = Eigen::Index(y) * 20 + x;
            CHECK(std::abs(e.a11[i]) < 1e-5f);
            CHECK(std::abs(e.a12[i]) < 1e-5f);
            CHECK(std::abs(e.a22[i]) < 1e-5f);
            CHECK(std::abs(e.b1[i]) < 1e-5f);
            CHECK(std::abs(e.b2[i]) < 1e-5f);
            CHECK(e.c[i] == doctest::Approx(0.37f).epsilon(1e-4));
        }
}

TEST_CASE("poly_expansion recovers a planar ramp") {
    FrameGray f(24, 24);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) f.at(y, x) = 0.5f + 0.01f * float(x);
    auto e = poly_expansion(f, 5, 1.1f);
    for (int y = 4; y < 20; ++y)
        for (int x = 4; x < 20; ++x) {
            const Eigen::Index i = Eigen::Index(y) * 24 + x;
            CHECK(std::abs(e.a11[i]) < 1e-3f);
            CHECK(std::abs(e.a22[i]) < 1e-3f);
            CHECK(e.b1[i] == doctest::Approx(0.01f).epsilon(0.05));
            CHECK(std::abs(e.b2[i]) < 1e-3f);
        }
}

TEST_CASE("poly_expansion recovers a quadratic bowl") {
    // f = alpha*((x-cx)^2 + (y-cy)^2)/s: the analytic fit has A = diag(alpha/s)
    const float alpha = 0.5f, s = 800.0f, cx = 12.0f, cy = 12.0f;
    FrameGray f(24, 24);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x)
            f.at(y, x) = alpha * ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / s;
    f.clamp01();
    auto e = poly_expansion(f, 5, 1.1f);
    const float expected = alpha / s;
    for (int y = 6; y < 18; ++y)
        for (int x = 6; x < 18; ++x) {
            const Eigen::Index i = Eigen::Index(y) * 24 + x;
            CHECK(e.a11[i] == doctest::Approx(expected).epsilon(0.02));
            CHECK(e.a22[i] == doctest::Approx(expected).epsilon(0.02));
            CHECK(std::abs(e.a12[i]) < 1e-4f);
        }
}

TEST_CASE("farneback zero-motion identity") {
    NoiseCanvas canvas(96, 5);
    auto f = canvas.crop(16, 16, 64, 64);
    auto flow = farneback_flow(f, f, FarnebackParams{});
    CHECK(flow.u.abs().maxCoeff() < 1e-3f);
    CHECK(flow.v.abs().maxCoeff() < 1e-3f);
}

TEST_CASE("farneback recovers integer translations of blurred noise") {
    NoiseCanvas canvas(96, 42);
    const FarnebackParams params;
    for (auto [tx, ty] : {std::pair{2, 0}, std::pair{-1, 1}, std::pair{3, -2}}) {
        auto prev = canvas.crop(16, 16, 64, 64);
        auto next = canvas.crop(16 - ty, 16 - tx, 64, 64); // content moves by (tx,ty)
        auto flow = farneback_flow(prev, next, params);
        const double epe = central_epe(flow, tx, ty);
        CAPTURE(tx);
        CAPTURE(ty);
        CHECK(epe < 0.3);
    }
}

TEST_CASE("farneback flow is approximately antisymmetric") {
    NoiseCanvas canvas(96, 99);
    auto a = canvas.crop(16, 16, 64, 64);
    auto b = canvas.crop(14, 17, 64, 64);
    auto fab = farneback_flow(a, b, FarnebackParams{});
    auto fba = farneback_flow(b, a, FarnebackParams{});
    const int x0 = 12, x1 = 52;
    double acc = 0;
    int n = 0;
    for (int y = x0; y < x1; ++y)
        for (int x = x0; x < x1; ++x) {
            const Eigen::Index i = Eigen::Index(y) * 64 + x;
            const double du = double(fab.u[i]) + double(fba.u[i]);
            const double dv = double(fab.v[i]) + double(fba.v[i]);
            acc += std::sqrt(du * du + dv * dv);
            ++n;
        }
    CHECK(acc / n < 0.5);
}

TEST_CASE("farneback output is deterministic") {
    NoiseCanvas canvas(96, 7);
    auto a = canvas.crop(16, 16, 64, 64);
    auto b = canvas.crop(15, 18, 64, 64);
    auto f1 = farneback_flow(a, b, FarnebackParams{});
    auto f2 = farneback_flow(a, b, FarnebackParams{});
    CHECK((f1.u == f2.u).all());
    CHECK((f1.v == f2.v).all());
}

TEST_CASE("flow_stack layout, pairing and trivial zero case") {
    std::vector<FrameGray> frames(50, FrameGray(64, 64));
    NoiseCanvas canvas(64, 3);
    for (auto& f : frames) f = canvas.crop(0, 0, 64, 64);

    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < 50; i += 2) pairs.emplace_back(i, i + 1);
    CHECK(pairs.size() == 25);

    auto stack = flow_stack(frames, pairs, FarnebackParams{}, 2);
    CHECK(stack.shape() == std::vector<int>({50, 64, 64}));
    CHECK(stack.array().abs().maxCoeff() < 1e-3f); // identical frames: zero flow

    CHECK_THROWS_AS(flow_stack(frames, {{0, 50}}, FarnebackParams{}), ContractError);
}

TEST_CASE("flow field binary dump round-trips") {
    NoiseCanvas canvas(96, 21);
    auto a = canvas.crop(16, 16, 64, 64);
    auto b = canvas.crop(16, 14, 64, 64);
    auto f = farneback_flow(a, b, FarnebackParams{});

    auto path = std::filesystem::temp_directory_path() / "sgem_test_flow.bin";
    write_flow_field(path, f);
    auto f2 = read_flow_field(path);
    CHECK(f2.height == f.height);
    CHECK(f2.width == f.width);
    CHECK((f2.u == f.u).all());
    CHECK((f2.v == f.v).all());

    // truncated file is a parse error
    std::filesystem::resize_file(path, 100);
    CHECK_THROWS_AS(read_flow_field(path), ParseError);
    std::filesystem::remove(path);
}
