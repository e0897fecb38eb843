#include "clmrkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "clmrkit/errors.hpp"
#include "clmrkit/fft.hpp"
#include "clmrkit/serialize.hpp"

namespace clmrkit::model {

EncoderConfig EncoderConfig::desk_scale() {
    EncoderConfig cfg;
    cfg.input_length = 2187; // 3^7
    cfg.channels = {32, 32, 64, 64, 64, 128, 128};
    cfg.representation_dim = 128;
    cfg.projection_hidden = 128;
    cfg.projection_dim = 64;
    return cfg;
}

void EncoderConfig::validate() const {
    if (channels.empty()) throw ShapeMismatch("encoder config: no channels");
    int64_t expected = 1;
    for (size_t i = 0; i < channels.size(); ++i) expected *= 3;
    if (input_length != expected)
        throw ShapeMismatch("encoder config: input_length " + std::to_string(input_length) +
                            " != 3^" + std::to_string(channels.size()));
    if (channels.back() != representation_dim)
        throw ShapeMismatch("encoder config: last channel width must equal representation_dim");
    for (int c : channels)
        if (c < 1) throw ShapeMismatch("encoder config: non-positive channel width");
}

nlohmann::json EncoderConfig::to_json() const {
    return nlohmann::json{{"input_length", input_length},
                          {"channels", channels},
                          {"representation_dim", representation_dim},
                          {"projection_hidden", projection_hidden},
                          {"projection_dim", projection_dim}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
    EncoderConfig cfg;
    cfg.input_length = j.at("input_length").get<int64_t>();
    cfg.channels = j.at("channels").get<std::vector<int>>();
    cfg.representation_dim = j.at("representation_dim").get<int>();
    cfg.projection_hidden = j.at("projection_hidden").get<int>();
    cfg.projection_dim = j.at("projection_dim").get<int>();
    return cfg;
}

Encoder Encoder::init(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    Encoder enc;
    enc.cfg_ = cfg;
    int in_channels = 1;
    for (int c : cfg.channels) {
        ConvLayer layer;
        layer.weight = ad::kaiming_init({c, in_channels, 3}, 3LL * in_channels, rng);
        layer.bias = Tensor::zeros({c}, true);
        layer.gamma = Tensor::full({c}, 1.0f, true);
        layer.beta = Tensor::zeros({c}, true);
        layer.bn = ad::BatchNormStats::make(c);
        enc.layers_.push_back(std::move(layer));
        in_channels = c;
    }
    return enc;
}

namespace {

Tensor run_block(ConvLayer& layer, const Tensor& x, int layer_index, bool training) {
    Tensor h;
    if (layer_index == 0) {
        h = ad::conv1d(x, layer.weight, layer.bias, 3);
    } else {
        h = ad::conv1d(ad::pad1d(x, 1, 1), layer.weight, layer.bias, 1);
    }
    h = ad::batchnorm1d(h, layer.gamma, layer.beta, layer.bn, training);
    h = ad::relu(h);
    if (layer_index > 0) h = ad::maxpool1d(h, 3);
    return h;
}

} // namespace

Tensor Encoder::forward(const Tensor& batch, bool training) {
    if (batch.ndim() != 3 || batch.dim(1) != 1 || batch.dim(2) != cfg_.input_length)
        throw ShapeMismatch("encoder expects [B, 1, " + std::to_string(cfg_.input_length) + "]");
    Tensor h = batch;
    for (size_t i = 0; i < layers_.size(); ++i)
        h = run_block(layers_[i], h, static_cast<int>(i), training);
    return ad::global_avg_pool(h);
}

Tensor Encoder::forward_to_conv(const Tensor& input, int layer_index, bool training) {
    if (layer_index < 0 || layer_index >= static_cast<int>(layers_.size()))
        throw InvalidLayer("layer " + std::to_string(layer_index) + " of " +
                           std::to_string(layers_.size()));
    Tensor h = input;
    for (int i = 0; i < layer_index; ++i) h = run_block(layers_[i], h, i, training);
    if (layer_index == 0) return ad::conv1d(h, layers_[0].weight, layers_[0].bias, 3);
    return ad::conv1d(ad::pad1d(h, 1, 1), layers_[static_cast<size_t>(layer_index)].weight,
                      layers_[static_cast<size_t>(layer_index)].bias, 1);
}

std::vector<Tensor> Encoder::parameters() {
    std::vector<Tensor> out;
    for (auto& l : layers_) {
        out.push_back(l.weight);
        out.push_back(l.bias);
        out.push_back(l.gamma);
        out.push_back(l.beta);
    }
    return out;
}

std::map<std::string, Tensor> Encoder::named_tensors() {
    std::map<std::string, Tensor> out;
    for (size_t i = 0; i < layers_.size(); ++i) {
        std::string prefix = "encoder.layer" + std::to_string(i) + ".";
        out.emplace(prefix + "weight", layers_[i].weight);
        out.emplace(prefix + "bias", layers_[i].bias);
        out.emplace(prefix + "bn_gamma", layers_[i].gamma);
        out.emplace(prefix + "bn_beta", layers_[i].beta);
        out.emplace(prefix + "bn_running_mean", layers_[i].bn.running_mean);
        out.emplace(prefix + "bn_running_var", layers_[i].bn.running_var);
    }
    return out;
}

int64_t Encoder::parameter_count() { return count_params(parameters()); }

int Encoder::layer_filters(int layer_index) const {
    if (layer_index < 0 || layer_index >= static_cast<int>(cfg_.channels.size()))
        throw InvalidLayer("layer " + std::to_string(layer_index));
    return cfg_.channels[static_cast<size_t>(layer_index)];
}

Projector Projector::init(int rep_dim, int hidden, int out_dim, Rng& rng) {
    Projector p;
    p.w1 = ad::kaiming_init({hidden, rep_dim}, rep_dim, rng);
    p.b1 = Tensor::zeros({hidden}, true);
    p.w2 = ad::kaiming_init({out_dim, hidden}, hidden, rng);
    p.b2 = Tensor::zeros({out_dim}, true);
    return p;
}

Tensor Projector::forward(const Tensor& h) {
    return ad::linear(ad::relu(ad::linear(h, w1, b1)), w2, b2);
}

std::vector<Tensor> Projector::parameters() { return {w1, b1, w2, b2}; }

std::map<std::string, Tensor> Projector::named_tensors() {
    return {{"projector.w1", w1}, {"projector.b1", b1}, {"projector.w2", w2}, {"projector.b2", b2}};
}

ProbeHead ProbeHead::init(ProbeKind kind, int rep_dim, int hidden, int n_tags, Rng& rng) {
    ProbeHead head;
    head.kind_ = kind;
    if (kind == ProbeKind::Linear) {
        head.w1 = ad::kaiming_init({n_tags, rep_dim}, rep_dim, rng);
        head.b1 = Tensor::zeros({n_tags}, true);
    } else {
        head.w1 = ad::kaiming_init({hidden, rep_dim}, rep_dim, rng);
        head.b1 = Tensor::zeros({hidden}, true);
        head.w2 = ad::kaiming_init({n_tags, hidden}, hidden, rng);
        head.b2 = Tensor::zeros({n_tags}, true);
    }
    return head;
}

Tensor ProbeHead::forward(const Tensor& h) {
    if (kind_ == ProbeKind::Linear) return ad::linear(h, w1, b1);
    return ad::linear(ad::relu(ad::linear(h, w1, b1)), w2, b2);
}

std::vector<Tensor> ProbeHead::parameters() {
    if (kind_ == ProbeKind::Linear) return {w1, b1};
    return {w1, b1, w2, b2};
}

int64_t count_params(const std::vector<Tensor>& params) {
    int64_t n = 0;
    for (const auto& p : params) n += p.numel();
    return n;
}

// ---------------------------------------------------------------------------
// Filter spectra (gradient ascent on a short waveform)
// ---------------------------------------------------------------------------

FilterSpectra filter_spectrum(Encoder& encoder, int layer_index, int probe_length, int steps,
                              double step_size, uint64_t seed) {
    if (layer_index < 0 || layer_index >= encoder.conv_layer_count())
        throw InvalidLayer("layer " + std::to_string(layer_index) + " of " +
                           std::to_string(encoder.conv_layer_count()));
    const int n_filters = encoder.layer_filters(layer_index);
    Rng rng(Rng::mix({seed, 0x66696c74ULL, static_cast<uint64_t>(layer_index)}));

    auto normalize_rms = [](std::vector<float>& x) {
        double acc = 0.0;
        for (float v : x) acc += static_cast<double>(v) * v;
        double rms = std::sqrt(acc / static_cast<double>(x.size()));
        if (rms > 1e-12) {
            float inv = static_cast<float>(1.0 / rms);
            for (float& v : x) v *= inv;
        }
    };

    FilterSpectra result;
    result.layer_index = layer_index;
    result.probe_length = probe_length;

    std::vector<std::pair<int, int>> order; // (peak_bin, filter)
    std::vector<std::vector<double>> raw(static_cast<size_t>(n_filters));

    for (int f = 0; f < n_filters; ++f) {
        std::vector<float> wave(static_cast<size_t>(probe_length));
        for (float& v : wave) v = static_cast<float>(rng.normal());
        normalize_rms(wave);

        for (int s = 0; s < steps; ++s) {
            Tensor x = Tensor::from_data({1, 1, probe_length}, wave, true);
            Tensor act = encoder.forward_to_conv(x, layer_index, false);
            int64_t L = act.dim(2);
            // mean response of this filter across positions
            std::vector<float> sel(act.data().size(), 0.0f);
            Tensor mask = Tensor::from_data(act.shape(), std::move(sel));
            for (int64_t t = 0; t < L; ++t)
                mask.data()[static_cast<size_t>(f * L + t)] = 1.0f / static_cast<float>(L);
            Tensor objective = ad::sum_all(ad::mul(act, mask));
            ad::backward(objective);
            const auto& g = x.grad();
            for (size_t i = 0; i < wave.size(); ++i)
                wave[i] += static_cast<float>(step_size * g[i]);
            normalize_rms(wave);
        }

        raw[static_cast<size_t>(f)] =
            dsp::magnitude_spectrum(std::span<const float>(wave.data(), wave.size()));
        auto& mag = raw[static_cast<size_t>(f)];
        double peak = *std::max_element(mag.begin(), mag.end());
        if (peak > 0.0)
            for (double& v : mag) v /= peak;
        order.emplace_back(static_cast<int>(dsp::peak_bin(mag, 0)), f);
    }

    // gradient ascent accumulates into parameter grads; clear them
    for (auto& p : encoder.parameters()) p.zero_grad();

    std::stable_sort(order.begin(), order.end());
    for (auto& [bin, f] : order) {
        result.peak_bins.push_back(bin);
        result.filter_indices.push_back(f);
        result.spectra.push_back(std::move(raw[static_cast<size_t>(f)]));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, Encoder& encoder, Projector* projector,
                     const nlohmann::json& extra_meta) {
    std::map<std::string, Tensor> tensors = encoder.named_tensors();
    if (projector) {
        auto pt = projector->named_tensors();
        tensors.insert(pt.begin(), pt.end());
    }
    nlohmann::json meta = extra_meta.is_object() ? extra_meta : nlohmann::json::object();
    meta["encoder_config"] = encoder.config().to_json();
    meta["has_projector"] = projector != nullptr;
    io::save_tensors(path, tensors, meta);
}

Checkpoint load_checkpoint(const std::string& path) {
    io::TensorFile file = io::load_tensors(path);
    nlohmann::json meta = nlohmann::json::parse(file.meta_json);
    EncoderConfig cfg = EncoderConfig::from_json(meta.at("encoder_config"));

    Rng rng(0);
    Checkpoint ck{cfg, Encoder::init(cfg, rng), std::nullopt, file.meta_json};

    auto fetch = [&](const std::string& name) -> ad::Tensor& {
        auto it = file.tensors.find(name);
        if (it == file.tensors.end()) throw Error("checkpoint missing tensor '" + name + "'");
        return it->second;
    };
    auto copy_into = [&](Tensor& dst, const std::string& name) {
        ad::Tensor& src = fetch(name);
        if (src.shape() != dst.shape())
            throw ShapeMismatch("checkpoint tensor '" + name + "' has unexpected shape");
        dst.data() = src.data();
    };

    auto named = ck.encoder.named_tensors();
    for (auto& [name, tensor] : named) {
        Tensor t = tensor;
        copy_into(t, name);
    }
    if (meta.value("has_projector", false)) {
        Projector proj = Projector::init(cfg.representation_dim, cfg.projection_hidden,
                                         cfg.projection_dim, rng);
        copy_into(proj.w1, "projector.w1");
        copy_into(proj.b1, "projector.b1");
        copy_into(proj.w2, "projector.w2");
        copy_into(proj.b2, "projector.b2");
        ck.projector = std::move(proj);
    }
    return ck;
}

} // namespace clmrkit::model
