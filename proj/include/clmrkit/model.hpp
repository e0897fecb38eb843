#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "clmrkit/autodiff.hpp"
#include "clmrkit/rng.hpp"

// SampleCNN-style waveform encoder, two-layer projection head and probe
// heads. The encoder is a strided sample-level conv followed by blocks of
// [pad, conv3, batch norm, ReLU, maxpool3]; every stage divides the length
// by 3, so input_length must be 3^(#stages) and the final feature map
// collapses to one step per channel.

namespace clmrkit::model {

using ad::Tensor;

struct EncoderConfig {
    int64_t input_length = 59049;
    // channels[0] is the first (strided) conv; the rest are pooled blocks.
    std::vector<int> channels = {128, 128, 128, 256, 256, 256, 256, 256, 512, 512};
    int representation_dim = 512;
    int projection_hidden = 512;
    int projection_dim = 128;

    static EncoderConfig canonical() { return EncoderConfig{}; }
    static EncoderConfig desk_scale();

    int stages() const { return static_cast<int>(channels.size()); }
    void validate() const;
    nlohmann::json to_json() const;
    static EncoderConfig from_json(const nlohmann::json& j);
};

struct ConvLayer {
    Tensor weight; // [C_out, C_in, 3]
    Tensor bias;
    Tensor gamma;
    Tensor beta;
    ad::BatchNormStats bn;
};

class Encoder {
public:
    static Encoder init(const EncoderConfig& cfg, Rng& rng);

    // [B, 1, input_length] -> [B, representation_dim]
    Tensor forward(const Tensor& batch, bool training);

    // Runs blocks 0..layer_index-1 in full, then returns the raw conv output
    // of layer_index (pre-norm, pre-activation). Used by the filter probe;
    // accepts any input length the prefix arithmetic allows.
    Tensor forward_to_conv(const Tensor& input, int layer_index, bool training);

    std::vector<Tensor> parameters();
    std::map<std::string, Tensor> named_tensors(); // parameters + running stats
    int64_t parameter_count();
    const EncoderConfig& config() const { return cfg_; }
    int conv_layer_count() const { return cfg_.stages(); }
    int layer_filters(int layer_index) const;

private:
    EncoderConfig cfg_;
    std::vector<ConvLayer> layers_;
};

class Projector {
public:
    // z = W2 relu(W1 h + b1) + b2
    static Projector init(int rep_dim, int hidden, int out_dim, Rng& rng);
    Tensor forward(const Tensor& h);
    std::vector<Tensor> parameters();
    std::map<std::string, Tensor> named_tensors();
    int output_dim() const { return static_cast<int>(w2.shape()[0]); }

    Tensor w1, b1, w2, b2;
};

enum class ProbeKind { Linear, Mlp };

class ProbeHead {
public:
    static ProbeHead init(ProbeKind kind, int rep_dim, int hidden, int n_tags, Rng& rng);
    Tensor forward(const Tensor& h);
    std::vector<Tensor> parameters();
    ProbeKind kind() const { return kind_; }

    Tensor w1, b1, w2, b2; // linear probes use only w1/b1

private:
    ProbeKind kind_ = ProbeKind::Linear;
};

int64_t count_params(const std::vector<Tensor>& params);

// Per-filter gradient-ascent spectra (magnitude FFT of the waveform that
// maximises each filter's mean response), normalised to [0, 1] and sorted by
// peak frequency.
struct FilterSpectra {
    int layer_index = 0;
    int probe_length = 729;
    std::vector<std::vector<double>> spectra; // rows sorted by peak bin
    std::vector<int> peak_bins;
    std::vector<int> filter_indices; // original filter per row
};

FilterSpectra filter_spectrum(Encoder& encoder, int layer_index, int probe_length = 729,
                              int steps = 100, double step_size = 0.1, uint64_t seed = 0);

// Checkpoint = named-tensor container whose metadata embeds the encoder
// config plus caller-supplied training metadata.
void save_checkpoint(const std::string& path, Encoder& encoder, Projector* projector,
                     const nlohmann::json& extra_meta);

struct Checkpoint {
    EncoderConfig config;
    Encoder encoder;
    std::optional<Projector> projector;
    std::string meta_json;
};

Checkpoint load_checkpoint(const std::string& path);

} // namespace clmrkit::model
