#pragma once

// Aligned (flow, kinematics, labels) training windows, produced either by the
// synthetic surgical-trial generator or from user-supplied JIGSAWS-format
// directories. Windowing tiles each gesture segment into non-overlapping
// 50-frame blocks and samples every alternate frame (25 of 50, ~1.67 s at
// 30 Hz).

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sgem/optflow.hpp"
#include "sgem/tensor.hpp"

namespace sgem {

// 76 kinematics dims = 4 manipulator blocks of 19:
//   [0..2]   tool-tip position xyz (m)
//   [3..11]  rotation matrix, row-major
//   [12..14] linear velocity xyz (m/s)
//   [15..17] angular velocity xyz (rad/s)
//   [18]     gripper angle (rad)
// Block order: master-left, master-right, slave-left, slave-right.
inline constexpr int kKinDims = 76;
inline constexpr int kBlockDims = 19;
inline constexpr int kWindowFrames = 50;
inline constexpr int kSampledFrames = 25;
inline constexpr double kFrameHz = 30.0;
inline constexpr int kFrameSize = 64; // working resolution, both axes

enum class Manipulator { MasterLeft = 0, MasterRight = 1, SlaveLeft = 2, SlaveRight = 3 };

struct KinematicsVector {
    std::array<float, kKinDims> values{};

    float* block(Manipulator m) { return values.data() + int(m) * kBlockDims; }
    const float* block(Manipulator m) const { return values.data() + int(m) * kBlockDims; }

    /// Max deviation of any embedded rotation block from orthonormality.
    float rotation_error() const;
};

enum class Skill { Beginner, Intermediate, Expert };

std::string to_string(Skill s);
char skill_letter(Skill s);                 // E / I / N (JIGSAWS meta convention)
Skill skill_from_letter(char c);            // throws ParseError on unknown letter
Skill skill_from_string(const std::string&); // throws ConfigError on unknown name

struct GestureSegment {
    int start_frame = 0;
    int end_frame = 0; // inclusive
    std::string gesture;
};

struct Trial {
    std::string trial_id;
    std::string task;
    Skill skill = Skill::Intermediate;
    std::vector<FrameGray> frames; // 30 Hz
    std::vector<KinematicsVector> kinematics;
    std::vector<GestureSegment> transcript;

    void validate() const;
};

struct GestureWindow {
    std::array<int, kSampledFrames> sampled_indices{}; // absolute frame indices
    TensorXf flow;       // [50,H,W], channels [u0,v0,u1,v1,...]
    TensorXf kinematics; // [25,76]
    std::string gesture;
    Skill skill = Skill::Intermediate;
    std::string trial_id;
    std::string task;
};

// ---- synthetic trials --------------------------------------------------

struct SyntheticSpec {
    std::string task = "synthA"; // synthA / synthB / synthC
    Skill skill = Skill::Expert;
    int duration_frames = 600; // >= 150
};

/// Deterministic per (spec, seed): two tool-tip trajectories composed from a
/// 4-primitive gesture grammar, rendered as Gaussian blobs at 64x64, with
/// analytic kinematics. Skill modulates additive tremor.
Trial generate_synthetic_trial(const SyntheticSpec& spec, std::uint64_t seed);

const std::vector<std::string>& synthetic_tasks();
/// Gesture vocabulary of one synthetic task (disjoint across tasks).
std::vector<std::string> synthetic_gestures(const std::string& task);

// ---- JIGSAWS-format ingestion -------------------------------------------
//
// Expects under task_dir:
//   kinematics/AllGestures/<stem>.txt   rows of 76 reals
//   transcriptions/<stem>.txt           rows "start end G<k>"
//   meta_file_<task>.txt                maps stem -> skill letter E/I/N
//   video/<stem>_capture1.frms          raw frame dump (see FRMS below)
Trial load_jigsaws_trial(const std::filesystem::path& task_dir, const std::string& stem);

/// Trial stems listed in the task directory's meta file, in file order.
std::vector<std::string> list_jigsaws_stems(const std::filesystem::path& task_dir);

// FRMS raw frame dump: "FRMS", u16 height, u16 width, u32 frame count, then
// frames as little-endian f32 luminance arrays.
void write_frames(const std::filesystem::path& path, const std::vector<FrameGray>& frames);
std::vector<FrameGray> read_frames(const std::filesystem::path& path);

// ---- windowing -----------------------------------------------------------

struct WindowingResult {
    std::vector<GestureWindow> windows;
    int skipped_segments = 0; // segments shorter than one 50-frame block
    int discarded_frames = 0; // tail frames that did not fill a block
};

/// Tiles every transcript segment into non-overlapping 50-frame blocks,
/// samples relative indices {0,2,...,48}, computes the 25 paired flows
/// (frame i -> i+1 at each sampled i) and gathers kinematics targets.
WindowingResult window_and_sample(const Trial& trial, const FarnebackParams& flow_params,
                                  int threads = 1);

// ---- kinematics normalizer ------------------------------------------------

/// Per-dimension z-scoring over the 76 kinematics dims, fit on training
/// windows only. Stds are floored at 1e-6.
class Normalizer {
public:
    Normalizer() = default;
    Normalizer(TensorXf mean, TensorXf stddev);

    static Normalizer fit(const std::vector<GestureWindow>& windows);

    /// In-place z-score of an [n,76] tensor.
    void transform(TensorXf& kin) const;
    void inverse(TensorXf& kin) const;

    const TensorXf& mean() const { return mean_; }
    const TensorXf& stddev() const { return std_; }

private:
    TensorXf mean_{std::vector<int>{kKinDims}};
    TensorXf std_{std::vector<int>{kKinDims}};
};

void apply_normalizer(const Normalizer& norm, std::vector<GestureWindow>& windows);

} // namespace sgem
