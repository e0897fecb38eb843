#include "clmrkit/augment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "clmrkit/errors.hpp"

namespace clmrkit::augment {

int64_t TransformChain::canonical_crop_length(int sample_rate) {
    switch (sample_rate) {
        case 8000: return 20736;
        case 16000: return 43740;
        case 22050: return 59049;
        default: throw InvalidRate(std::to_string(sample_rate) + " Hz has no canonical crop");
    }
}

TransformChain TransformChain::defaults_for_rate(int sample_rate) {
    TransformChain chain;
    chain.crop_length = canonical_crop_length(sample_rate);
    return chain;
}

AudioBuffer random_crop(const AudioBuffer& buffer, int64_t length, Rng& rng) {
    if (length <= 0) throw std::invalid_argument("random_crop: length must be positive");
    if (buffer.size() < length)
        throw TooShort("buffer of " + std::to_string(buffer.size()) + " samples, need " +
                       std::to_string(length));
    int64_t start = rng.uniform_int(0, buffer.size() - length);
    AudioBuffer out;
    out.sample_rate = buffer.sample_rate;
    out.source_id = buffer.source_id;
    out.samples.assign(buffer.samples.begin() + start, buffer.samples.begin() + start + length);
    return out;
}

AudioBuffer invert_polarity(const AudioBuffer& buffer) {
    AudioBuffer out = buffer;
    for (float& s : out.samples) s = -s;
    return out;
}

AudioBuffer add_noise(const AudioBuffer& buffer, double snr_db, Rng& rng, bool* silent_input) {
    if (silent_input) *silent_input = false;
    if (std::isinf(snr_db)) return buffer;
    double signal_rms = buffer.rms();
    if (signal_rms <= 0.0) {
        if (silent_input) *silent_input = true;
        return buffer;
    }
    double noise_rms = signal_rms / std::pow(10.0, snr_db / 20.0);
    AudioBuffer out = buffer;
    for (float& s : out.samples) s += static_cast<float>(noise_rms * rng.normal());
    return out;
}

AudioBuffer apply_gain(const AudioBuffer& buffer, double gain_db) {
    if (gain_db < -6.0 || gain_db > 0.0)
        throw OutOfRange("gain " + std::to_string(gain_db) + " dB outside [-6, 0]");
    float factor = static_cast<float>(std::pow(10.0, gain_db / 20.0));
    AudioBuffer out = buffer;
    for (float& s : out.samples) s *= factor;
    return out;
}

// ---------------------------------------------------------------------------
// Biquad filters (RBJ cookbook, Butterworth Q)
// ---------------------------------------------------------------------------

namespace {

struct Biquad {
    double b0, b1, b2, a1, a2;

    AudioBuffer run(const AudioBuffer& in) const {
        AudioBuffer out = in;
        double z1 = 0.0, z2 = 0.0; // direct form II transposed
        for (size_t i = 0; i < in.samples.size(); ++i) {
            double x = in.samples[i];
            double y = b0 * x + z1;
            z1 = b1 * x - a1 * y + z2;
            z2 = b2 * x - a2 * y;
            out.samples[i] = static_cast<float>(y);
        }
        return out;
    }
};

Biquad make_biquad(double cutoff_hz, int sample_rate, bool is_lowpass) {
    const double kButterworthQ = 0.70710678118654752;
    double fc = std::clamp(cutoff_hz, 1.0, 0.45 * sample_rate);
    double w0 = 2.0 * M_PI * fc / sample_rate;
    double cw = std::cos(w0);
    double alpha = std::sin(w0) / (2.0 * kButterworthQ);
    double a0 = 1.0 + alpha;
    Biquad q{};
    if (is_lowpass) {
        q.b0 = (1.0 - cw) / 2.0 / a0;
        q.b1 = (1.0 - cw) / a0;
        q.b2 = q.b0;
    } else {
        q.b0 = (1.0 + cw) / 2.0 / a0;
        q.b1 = -(1.0 + cw) / a0;
        q.b2 = q.b0;
    }
    q.a1 = -2.0 * cw / a0;
    q.a2 = (1.0 - alpha) / a0;
    return q;
}

} // namespace

AudioBuffer lowpass(const AudioBuffer& buffer, double cutoff_hz) {
    return make_biquad(cutoff_hz, buffer.sample_rate, true).run(buffer);
}

AudioBuffer highpass(const AudioBuffer& buffer, double cutoff_hz) {
    return make_biquad(cutoff_hz, buffer.sample_rate, false).run(buffer);
}

AudioBuffer frequency_filter(const AudioBuffer& buffer, Rng& rng, const TransformChain& chain) {
    if (rng.bernoulli(0.5)) {
        double cutoff = rng.uniform(chain.filter.lowpass_min_hz, chain.filter.lowpass_max_hz);
        return lowpass(buffer, cutoff);
    }
    double cutoff = rng.uniform(chain.filter.highpass_min_hz, chain.filter.highpass_max_hz);
    return highpass(buffer, cutoff);
}

// ---------------------------------------------------------------------------
// Delay
// ---------------------------------------------------------------------------

AudioBuffer delay_by_ms(const AudioBuffer& buffer, int delay_ms) {
    const float kVolumeFactor = 0.5f;
    int64_t offset = std::llround(delay_ms * static_cast<double>(buffer.sample_rate) / 1000.0);
    AudioBuffer out = buffer;
    for (int64_t i = 0; i < out.size(); ++i) {
        float delayed = (i >= offset) ? buffer.samples[static_cast<size_t>(i - offset)] : 0.0f;
        out.samples[static_cast<size_t>(i)] =
            (buffer.samples[static_cast<size_t>(i)] + kVolumeFactor * delayed) / 2.0f;
    }
    return out;
}

AudioBuffer delay(const AudioBuffer& buffer, Rng& rng) {
    // 200..450 ms in 50 ms increments
    int ms = 200 + 50 * static_cast<int>(rng.uniform_int(0, 5));
    return delay_by_ms(buffer, ms);
}

// ---------------------------------------------------------------------------
// Pitch shift: resample, then overlap-add stretch back to the input length
// ---------------------------------------------------------------------------

namespace {

// Overlap-add time stretch with waveform-similarity alignment: each analysis
// frame is shifted within +-hop/2 of its nominal position to best continue
// the previous frame, which keeps tones phase-coherent across splices.
std::vector<float> ola_stretch(const std::vector<float>& x, int64_t target_len) {
    const int64_t in_len = static_cast<int64_t>(x.size());
    if (in_len == target_len) return x;
    if (in_len < 8 || target_len < 8) {
        std::vector<float> out(static_cast<size_t>(target_len), 0.0f);
        for (int64_t i = 0; i < std::min(in_len, target_len); ++i)
            out[static_cast<size_t>(i)] = x[static_cast<size_t>(i)];
        return out;
    }

    int64_t frame = std::min<int64_t>(2048, in_len / 2);
    frame = std::max<int64_t>(frame, 8);
    int64_t hop = std::max<int64_t>(1, frame / 4);
    int64_t search = hop / 2;
    int64_t corr_window = frame / 2;
    double stretch = static_cast<double>(target_len) / static_cast<double>(in_len);

    std::vector<double> out(static_cast<size_t>(target_len), 0.0);
    std::vector<double> wsum(static_cast<size_t>(target_len), 0.0);
    std::vector<double> hann(static_cast<size_t>(frame));
    for (int64_t i = 0; i < frame; ++i)
        hann[static_cast<size_t>(i)] =
            0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(frame));

    int64_t prev = 0; // analysis position of the previous frame
    for (int64_t ts = 0, m = 0; ts < target_len; ts += hop, ++m) {
        int64_t ta;
        if (m == 0) {
            ta = 0;
        } else {
            int64_t nominal = std::clamp<int64_t>(
                std::llround(static_cast<double>(ts) / stretch), 0, in_len - frame);
            int64_t natural = std::min(prev + hop, in_len - corr_window);
            int64_t lo = std::max<int64_t>(0, nominal - search);
            int64_t hi = std::min(in_len - frame, nominal + search);
            ta = nominal;
            double best = -1e300;
            for (int64_t c = lo; c <= hi; ++c) {
                double score = 0.0;
                for (int64_t i = 0; i < corr_window; ++i)
                    score += static_cast<double>(x[static_cast<size_t>(c + i)]) *
                             x[static_cast<size_t>(natural + i)];
                if (score > best) {
                    best = score;
                    ta = c;
                }
            }
        }
        prev = ta;
        int64_t n = std::min(frame, target_len - ts);
        for (int64_t i = 0; i < n; ++i) {
            double w = hann[static_cast<size_t>(i)];
            out[static_cast<size_t>(ts + i)] += w * x[static_cast<size_t>(ta + i)];
            wsum[static_cast<size_t>(ts + i)] += w;
        }
    }

    std::vector<float> result(static_cast<size_t>(target_len));
    for (int64_t i = 0; i < target_len; ++i) {
        double w = wsum[static_cast<size_t>(i)];
        result[static_cast<size_t>(i)] =
            static_cast<float>(w > 1e-9 ? out[static_cast<size_t>(i)] / w : 0.0);
    }
    return result;
}

} // namespace

AudioBuffer pitch_shift(const AudioBuffer& buffer, double semitones) {
    if (std::fabs(semitones) > 5.0)
        throw OutOfRange("pitch shift of " + std::to_string(semitones) + " semitones");
    if (semitones == 0.0) return buffer;
    double ratio = std::pow(2.0, -semitones / 12.0);
    std::vector<float> shifted = audio::resample_by_ratio(buffer.samples, ratio);
    AudioBuffer out;
    out.sample_rate = buffer.sample_rate;
    out.source_id = buffer.source_id;
    out.samples = ola_stretch(shifted, buffer.size());
    return out;
}

// ---------------------------------------------------------------------------
// Schroeder reverb
// ---------------------------------------------------------------------------

namespace {

struct Comb {
    std::vector<double> buf;
    size_t idx = 0;
    double feedback = 0.0;
    double damp = 0.0;
    double filterstore = 0.0;

    double process(double input) {
        double out = buf[idx];
        filterstore = out * (1.0 - damp) + filterstore * damp;
        buf[idx] = input + filterstore * feedback;
        idx = (idx + 1) % buf.size();
        return out;
    }
};

struct Allpass {
    std::vector<double> buf;
    size_t idx = 0;
    double feedback = 0.5;

    double process(double input) {
        double bufout = buf[idx];
        double out = bufout - input;
        buf[idx] = input + bufout * feedback;
        idx = (idx + 1) % buf.size();
        return out;
    }
};

} // namespace

AudioBuffer reverb_with(const AudioBuffer& buffer, double room_size, double reverberance,
                        double damping) {
    room_size = std::clamp(room_size, 0.0, 100.0);
    reverberance = std::clamp(reverberance, 0.0, 100.0);
    damping = std::clamp(damping, 0.0, 100.0);

    const double rate_factor = buffer.sample_rate / 22050.0;
    const double room_scale = 0.5 + room_size / 200.0;
    const double feedback = std::min(0.98, reverberance / 100.0);
    const double damp = damping / 100.0;
    const double wet_gain = 0.5 * (reverberance / 100.0);

    const int base_comb[4] = {1116, 1188, 1277, 1356};
    Comb combs[4];
    for (int c = 0; c < 4; ++c) {
        auto d = static_cast<size_t>(
            std::max<int64_t>(1, std::llround(base_comb[c] * room_scale * rate_factor)));
        combs[c].buf.assign(d, 0.0);
        combs[c].feedback = feedback;
        combs[c].damp = damp;
    }
    const int base_allpass[2] = {556, 225};
    Allpass allpasses[2];
    for (int a = 0; a < 2; ++a) {
        auto d = static_cast<size_t>(
            std::max<int64_t>(1, std::llround(base_allpass[a] * rate_factor)));
        allpasses[a].buf.assign(d, 0.0);
    }

    AudioBuffer out = buffer;
    for (size_t i = 0; i < buffer.samples.size(); ++i) {
        double x = buffer.samples[i];
        double wet = 0.0;
        for (auto& c : combs) wet += c.process(x);
        wet *= 0.25;
        for (auto& a : allpasses) wet = a.process(wet);
        out.samples[i] = static_cast<float>(x + wet_gain * wet);
    }

    float in_peak = buffer.peak();
    float out_peak = out.peak();
    if (out_peak > 0.0f && in_peak > 0.0f) {
        float scale = in_peak / out_peak;
        for (float& s : out.samples) s *= scale;
    }
    return out;
}

AudioBuffer reverb(const AudioBuffer& buffer, Rng& rng) {
    double room = rng.uniform(0.0, 100.0);
    double reverberance = rng.uniform(0.0, 100.0);
    double damping = rng.uniform(0.0, 100.0);
    return reverb_with(buffer, room, reverberance, damping);
}

// ---------------------------------------------------------------------------
// Chain composition
// ---------------------------------------------------------------------------

ChainResult apply_chain(const AudioBuffer& crop, const TransformChain& chain, Rng& rng) {
    ChainResult result;
    result.view = crop;

    if (rng.bernoulli(chain.polarity.prob)) {
        result.view = invert_polarity(result.view);
        result.applied[kPolarity] = true;
    }
    if (rng.bernoulli(chain.noise.prob)) {
        result.view = add_noise(result.view, chain.noise.snr_db, rng);
        result.applied[kNoise] = true;
    }
    if (rng.bernoulli(chain.gain.prob)) {
        double db = rng.uniform(chain.gain.min_db, chain.gain.max_db);
        result.view = apply_gain(result.view, db);
        result.applied[kGain] = true;
    }
    if (rng.bernoulli(chain.filter.prob)) {
        result.view = frequency_filter(result.view, rng, chain);
        result.applied[kFilter] = true;
    }
    if (rng.bernoulli(chain.delay.prob)) {
        result.view = delay(result.view, rng);
        result.applied[kDelay] = true;
    }
    if (rng.bernoulli(chain.pitch.prob)) {
        auto semitones = static_cast<double>(
            rng.uniform_int(chain.pitch.min_semitones, chain.pitch.max_semitones));
        result.view = pitch_shift(result.view, semitones);
        result.applied[kPitch] = true;
    }
    if (rng.bernoulli(chain.reverb.prob)) {
        result.view = reverb(result.view, rng);
        result.applied[kReverb] = true;
    }
    return result;
}

ExamplePair make_pair(const AudioBuffer& song, const TransformChain& chain, Rng& rng,
                      bool asymmetric) {
    AudioBuffer crop_i = random_crop(song, chain.crop_length, rng);
    AudioBuffer crop_j = random_crop(song, chain.crop_length, rng);
    ExamplePair pair;
    pair.source_id = song.source_id;
    pair.x_i = apply_chain(crop_i, chain, rng).view;
    pair.x_j = asymmetric ? std::move(crop_j) : apply_chain(crop_j, chain, rng).view;
    return pair;
}

} // namespace clmrkit::augment
