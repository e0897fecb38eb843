#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "clmrkit/audio.hpp"
#include "clmrkit/rng.hpp"

// Stochastic waveform augmentations. A chain is always: random crop first,
// then polarity, noise, gain, filter, delay, pitch shift, reverb in that
// fixed order, each applied with its own independent probability and freshly
// drawn parameters. All transforms after the crop preserve length and rate.

namespace clmrkit::augment {

using audio::AudioBuffer;

struct TransformChain {
    int64_t crop_length = 59049;

    struct { double prob = 0.8; } polarity;
    struct { double prob = 0.8; double snr_db = 80.0; } noise;
    struct { double prob = 0.8; double min_db = -6.0, max_db = 0.0; } gain;
    struct {
        double prob = 0.8;
        double lowpass_min_hz = 2200.0, lowpass_max_hz = 4000.0;
        double highpass_min_hz = 200.0, highpass_max_hz = 1200.0;
    } filter;
    struct { double prob = 0.4; } delay;
    struct { double prob = 0.4; int min_semitones = -5, max_semitones = 5; } pitch;
    struct { double prob = 0.4; } reverb;

    // Crop sizes paired with the canonical rates: 20736 / 43740 / 59049
    // samples at 8000 / 16000 / 22050 Hz.
    static int64_t canonical_crop_length(int sample_rate);
    static TransformChain defaults_for_rate(int sample_rate);
};

// Transform order inside a chain, after the crop.
enum ChainSlot { kPolarity = 0, kNoise, kGain, kFilter, kDelay, kPitch, kReverb, kChainSlots };

AudioBuffer random_crop(const AudioBuffer& buffer, int64_t length, Rng& rng);
AudioBuffer invert_polarity(const AudioBuffer& buffer);

// Gaussian noise at the given SNR; silent input passes through unchanged and
// sets *silent_input when provided. snr_db = +inf disables the transform.
AudioBuffer add_noise(const AudioBuffer& buffer, double snr_db, Rng& rng,
                      bool* silent_input = nullptr);

AudioBuffer apply_gain(const AudioBuffer& buffer, double gain_db);

// Deterministic second-order Butterworth biquads (RBJ), plus the stochastic
// coin-flip wrapper that draws the cutoff.
AudioBuffer lowpass(const AudioBuffer& buffer, double cutoff_hz);
AudioBuffer highpass(const AudioBuffer& buffer, double cutoff_hz);
AudioBuffer frequency_filter(const AudioBuffer& buffer, Rng& rng, const TransformChain& chain);

// (x + 0.5 * shift(x, offset)) / 2 with offset = round(ms * rate / 1000).
AudioBuffer delay_by_ms(const AudioBuffer& buffer, int delay_ms);
AudioBuffer delay(const AudioBuffer& buffer, Rng& rng);

// Resample by 2^(-semitones/12) then overlap-add time stretch back to the
// original length. |semitones| <= 5.
AudioBuffer pitch_shift(const AudioBuffer& buffer, double semitones);

// Schroeder reverberator: 4 parallel feedback combs + 2 series allpasses,
// parameters in [0, 100]; output peak never exceeds the input peak.
AudioBuffer reverb_with(const AudioBuffer& buffer, double room_size, double reverberance,
                        double damping);
AudioBuffer reverb(const AudioBuffer& buffer, Rng& rng);

struct ChainResult {
    AudioBuffer view;
    std::array<bool, kChainSlots> applied{};
};

// Applies every post-crop transform with its probability coin; parameters are
// drawn per call, never shared between views.
ChainResult apply_chain(const AudioBuffer& crop, const TransformChain& chain, Rng& rng);

struct ExamplePair {
    AudioBuffer x_i;
    AudioBuffer x_j;
    std::string source_id;
};

// Two independent crops of one song, independently augmented. In asymmetric
// mode x_j stays the raw crop.
ExamplePair make_pair(const AudioBuffer& song, const TransformChain& chain, Rng& rng,
                      bool asymmetric = false);

} // namespace clmrkit::augment
