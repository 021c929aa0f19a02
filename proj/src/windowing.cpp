#include <cmath>

#include "sgem/dataio.hpp"
#include "sgem/parallel.hpp"

namespace sgem {

WindowingResult window_and_sample(const Trial& trial, const FarnebackParams& flow_params,
                                  int threads) {
    trial.validate();

    struct Block {
        int start;
        const GestureSegment* seg;
    };
    std::vector<Block> blocks;
    WindowingResult result;

    for (const auto& seg : trial.transcript) {
        const int len = seg.end_frame - seg.start_frame + 1;
        if (len < kWindowFrames) {
            ++result.skipped_segments;
            result.discarded_frames += len;
            continue;
        }
        int start = seg.start_frame;
        while (start + kWindowFrames - 1 <= seg.end_frame) {
            blocks.push_back({start, &seg});
            start += kWindowFrames;
        }
        result.discarded_frames += seg.end_frame - start + 1;
    }

    result.windows.resize(blocks.size());
    parallel_for(int(blocks.size()), threads, [&](int b) {
        const auto& blk = blocks[std::size_t(b)];
        GestureWindow w;
        w.gesture = blk.seg->gesture;
        w.skill = trial.skill;
        w.trial_id = trial.trial_id;
        w.task = trial.task;

        std::vector<std::pair<int, int>> pairs;
        pairs.reserve(kSampledFrames);
        for (int i = 0; i < kSampledFrames; ++i) {
            const int abs_idx = blk.start + 2 * i;
            w.sampled_indices[std::size_t(i)] = abs_idx;
            pairs.emplace_back(abs_idx, abs_idx + 1);
        }
        w.flow = flow_stack(trial.frames, pairs, flow_params, 1);

        w.kinematics = TensorXf({kSampledFrames, kKinDims});
        for (int i = 0; i < kSampledFrames; ++i) {
            const auto& kv = trial.kinematics[std::size_t(w.sampled_indices[std::size_t(i)])];
            for (int d = 0; d < kKinDims; ++d) w.kinematics(i, d) = kv.values[std::size_t(d)];
        }
        result.windows[std::size_t(b)] = std::move(w);
    });
    return result;
}

Normalizer::Normalizer(TensorXf mean, TensorXf stddev) {
    require(mean.rank() == 1 && mean.extent(0) == kKinDims &&
                stddev.rank() == 1 && stddev.extent(0) == kKinDims,
            "normalizer tensors must be [76]");
    mean_ = std::move(mean);
    std_ = std::move(stddev);
    for (int d = 0; d < kKinDims; ++d) std_[d] = std::max(std_[d], 1e-6f);
}

Normalizer Normalizer::fit(const std::vector<GestureWindow>& windows) {
    require(!windows.empty() && windows.size() * kSampledFrames >= 2,
            "normalizer fit needs at least 2 kinematics rows");
    double sum[kKinDims] = {};
    double sum_sq[kKinDims] = {};
    long n = 0;
    for (const auto& w : windows) {
        require(w.kinematics.rank() == 2 && w.kinematics.extent(1) == kKinDims,
                "window kinematics must be [n,76]");
        for (int r = 0; r < w.kinematics.extent(0); ++r, ++n)
            for (int d = 0; d < kKinDims; ++d) {
                const double v = double(w.kinematics(r, d));
                sum[d] += v;
                sum_sq[d] += v * v;
            }
    }
    Normalizer norm;
    for (int d = 0; d < kKinDims; ++d) {
        const double mean = sum[d] / double(n);
        const double var = std::max(0.0, sum_sq[d] / double(n) - mean * mean);
        norm.mean_[d] = float(mean);
        norm.std_[d] = std::max(float(std::sqrt(var)), 1e-6f);
    }
    return norm;
}

void Normalizer::transform(TensorXf& kin) const {
    require(kin.rank() == 2 && kin.extent(1) == kKinDims, "normalizer: tensor must be [n,76]");
    for (int r = 0; r < kin.extent(0); ++r)
        for (int d = 0; d < kKinDims; ++d)
            kin(r, d) = (kin(r, d) - mean_[d]) / std_[d];
}

void Normalizer::inverse(TensorXf& kin) const {
    require(kin.rank() == 2 && kin.extent(1) == kKinDims, "normalizer: tensor must be [n,76]");
    for (int r = 0; r < kin.extent(0); ++r)
        for (int d = 0; d < kKinDims; ++d) kin(r, d) = kin(r, d) * std_[d] + mean_[d];
}

void apply_normalizer(const Normalizer& norm, std::vector<GestureWindow>& windows) {
    for (auto& w : windows) norm.transform(w.kinematics);
}

} // namespace sgem
