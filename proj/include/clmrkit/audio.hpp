#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace clmrkit::audio {

// Mono waveform in [-1, 1] plus its sample rate; the unit every DSP stage
// operates on. Immutable by convention once constructed.
struct AudioBuffer {
    std::vector<float> samples;
    int sample_rate = 22050;
    std::string source_id;

    int64_t size() const { return static_cast<int64_t>(samples.size()); }
    bool empty() const { return samples.empty(); }
    double duration_seconds() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
    double rms() const;
    float peak() const;
};

inline bool is_canonical_rate(int rate) {
    return rate == 8000 || rate == 16000 || rate == 22050;
}

// RIFF/WAVE reader: PCM 16/24/32-bit integer and 32-bit float, little-endian,
// 1 or 2 channels (stereo averaged to mono). Integer samples are rescaled by
// 2^(bits-1). Throws MalformedWav / UnsupportedEncoding.
AudioBuffer decode_wav(const std::string& path);

// 32-bit float mono WAV writer, used for augmentation previews and the
// synthetic corpus. Float samples round-trip bit-exactly through decode_wav.
void encode_wav_f32(const AudioBuffer& buffer, const std::string& path);

// Band-limited sample-rate conversion between the canonical rates
// (polyphase windowed-sinc, Kaiser window, 64 taps per phase).
// Throws InvalidRate for unsupported targets.
AudioBuffer resample(const AudioBuffer& buffer, int target_rate);

// Windowed-sinc resampling by an arbitrary length ratio (output length =
// round(input length * ratio)); the pitch-shift transform builds on this.
std::vector<float> resample_by_ratio(const std::vector<float>& x, double ratio);

// Joins ordered fragments of one song. Throws MixedRates if rates differ.
AudioBuffer concat_fragments(const std::vector<AudioBuffer>& fragments);

} // namespace clmrkit::audio
