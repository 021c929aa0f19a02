#pragma once

// Encoder r(.; theta): 50-channel flow stack -> d-dim representation, four
// stride-2 3x3 conv blocks with ReLU, global average pool, linear projection.
// Decoder D(.; phi): representation -> 25 kinematics vectors through one
// hidden fully connected layer. No normalization layers anywhere.

#include <array>
#include <filesystem>
#include <map>

#include "sgem/dataio.hpp"
#include "sgem/digest.hpp"
#include "sgem/optim.hpp"

namespace sgem {

struct ModelConfig {
    int in_channels = 2 * kSampledFrames; // 50
    int input_size = kFrameSize;          // 64
    std::array<int, 4> conv_channels = {32, 64, 128, 128};
    int embed_dim = 128;
    int decoder_hidden = 512;
    int kin_rows = kSampledFrames; // 25
    int kin_dims = kKinDims;       // 76

    int decoder_out() const { return kin_rows * kin_dims; } // 1900
    bool operator==(const ModelConfig&) const = default;
};

struct EncoderParams {
    ModelConfig cfg;
    ParamSet<float> p; // enc.conv{1..4}.{w,b}, enc.fc.{w,b}
};

struct DecoderParams {
    ModelConfig cfg;
    ParamSet<float> p; // dec.fc1.{w,b}, dec.fc2.{w,b}
};

/// Kaiming-uniform fan-in init for all weights, zero biases; deterministic
/// per seed.
std::pair<EncoderParams, DecoderParams> init_params(std::uint64_t seed,
                                                    const ModelConfig& cfg = {});

/// flow stack [50,64,64] -> representation [d].
TensorXf encode(const TensorXf& flow_stack, const EncoderParams& enc);

/// representation [d] -> kinematics [25,76] in normalized target space.
TensorXf decode(const TensorXf& rep, const DecoderParams& dec);

// ---- training-path forward/backward ----------------------------------------

/// Per-parameter gradient contributions, keyed like the ParamSet names.
struct ModelGrads {
    std::map<std::string, TensorXf> g;

    void init_like(const EncoderParams& enc, const DecoderParams& dec);
    void set_zero();
};

struct EncoderCache {
    TensorXf input;
    TensorXf pre1, act1, pre2, act2, pre3, act3, pre4, act4;
    TensorXf pooled; // [C4]
};

struct DecoderCache {
    TensorXf rep;
    TensorXf pre_hidden, hidden;
};

TensorXf encode_cached(const TensorXf& flow_stack, const EncoderParams& enc,
                       EncoderCache& cache);
TensorXf decode_cached(const TensorXf& rep, const DecoderParams& dec,
                       DecoderCache& cache);

/// Backward through the decoder; returns the representation gradient [d].
TensorXf decode_backward(const DecoderCache& cache, const DecoderParams& dec,
                         const TensorXf& grad_out, ModelGrads& grads);

/// Backward through the encoder; optionally emits the input gradient.
void encode_backward(const EncoderCache& cache, const EncoderParams& enc,
                     const TensorXf& grad_rep, ModelGrads& grads,
                     TensorXf* grad_input = nullptr);

/// Finite-difference check of the full decode(encode(x)) chain against the
/// analytic backward at `probes` seeded coordinates per parameter tensor.
/// Returns the worst relative error.
float composite_grad_check(std::uint64_t seed, int probes, float epsilon,
                           const ModelConfig& cfg = {});

// ---- checkpoints -----------------------------------------------------------

struct Checkpoint {
    EncoderParams encoder;
    DecoderParams decoder;
    Normalizer normalizer;
    Digest config_digest{};
};

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& enc,
                     const DecoderParams& dec, const Normalizer& norm,
                     const Digest& config_digest);

/// Round-trip is bit-exact. Throws ParseError on bad magic/version/truncation;
/// digest mismatches are the caller's concern (transfer crosses configs).
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace sgem
