#include "sgem/model.hpp"
#include "sgem/serialize.hpp"

namespace sgem {

namespace {

// model dimensions as a tensor record so a checkpoint is self-describing
TensorXf config_tensor(const ModelConfig& c) {
    return TensorXf::from({10}, {float(c.in_channels), float(c.input_size),
                                 float(c.conv_channels[0]), float(c.conv_channels[1]),
                                 float(c.conv_channels[2]), float(c.conv_channels[3]),
                                 float(c.embed_dim), float(c.decoder_hidden),
                                 float(c.kin_rows), float(c.kin_dims)});
}

ModelConfig config_from_tensor(const TensorXf& t) {
    if (t.rank() != 1 || t.extent(0) != 10)
        throw ParseError("checkpoint meta.config record has wrong shape");
    ModelConfig c;
    c.in_channels = int(t[0]);
    c.input_size = int(t[1]);
    c.conv_channels = {int(t[2]), int(t[3]), int(t[4]), int(t[5])};
    c.embed_dim = int(t[6]);
    c.decoder_hidden = int(t[7]);
    c.kin_rows = int(t[8]);
    c.kin_dims = int(t[9]);
    return c;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& enc,
                     const DecoderParams& dec, const Normalizer& norm,
                     const Digest& config_digest) {
    TensorContainer c;
    c.digest = config_digest;
    c.tensors.emplace("meta.config", config_tensor(enc.cfg));
    for (const auto& [name, param] : enc.p) c.tensors.emplace(name, param.value);
    for (const auto& [name, param] : dec.p) c.tensors.emplace(name, param.value);
    c.tensors.emplace("norm.mean", norm.mean());
    c.tensors.emplace("norm.std", norm.stddev());
    write_tensor_container(path, c);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    TensorContainer c = read_tensor_container(path);
    auto take = [&](const std::string& name) -> TensorXf {
        auto it = c.tensors.find(name);
        if (it == c.tensors.end())
            throw ParseError("checkpoint " + path.filename().string() +
                             " lacks tensor '" + name + "'");
        return std::move(it->second);
    };

    const ModelConfig cfg = config_from_tensor(take("meta.config"));

    Checkpoint ck{EncoderParams{cfg, {}}, DecoderParams{cfg, {}}, Normalizer{},
                  c.digest};

    int cin = cfg.in_channels;
    for (int i = 0; i < 4; ++i) {
        const int cout = cfg.conv_channels[std::size_t(i)];
        const std::string base = "enc.conv" + std::to_string(i + 1);
        auto w = take(base + ".w");
        auto b = take(base + ".b");
        if (w.shape() != std::vector<int>{cout, cin, 3, 3} ||
            b.shape() != std::vector<int>{cout})
            throw ParseError("checkpoint tensor " + base + " has unexpected shape");
        ck.encoder.p.add(base + ".w", std::move(w));
        ck.encoder.p.add(base + ".b", std::move(b));
        cin = cout;
    }
    {
        auto w = take("enc.fc.w");
        auto b = take("enc.fc.b");
        if (w.shape() != std::vector<int>{cfg.embed_dim, cin} ||
            b.shape() != std::vector<int>{cfg.embed_dim})
            throw ParseError("checkpoint tensor enc.fc has unexpected shape");
        ck.encoder.p.add("enc.fc.w", std::move(w));
        ck.encoder.p.add("enc.fc.b", std::move(b));
    }
    {
        auto w1 = take("dec.fc1.w");
        auto b1 = take("dec.fc1.b");
        auto w2 = take("dec.fc2.w");
        auto b2 = take("dec.fc2.b");
        if (w1.shape() != std::vector<int>{cfg.decoder_hidden, cfg.embed_dim} ||
            w2.shape() != std::vector<int>{cfg.decoder_out(), cfg.decoder_hidden})
            throw ParseError("checkpoint decoder tensors have unexpected shapes");
        ck.decoder.p.add("dec.fc1.w", std::move(w1));
        ck.decoder.p.add("dec.fc1.b", std::move(b1));
        ck.decoder.p.add("dec.fc2.w", std::move(w2));
        ck.decoder.p.add("dec.fc2.b", std::move(b2));
    }
    ck.normalizer = Normalizer(take("norm.mean"), take("norm.std"));
    return ck;
}

} // namespace sgem
