#include "clmrkit/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "clmrkit/errors.hpp"

namespace clmrkit::audio {

double AudioBuffer::rms() const {
    if (samples.empty()) return 0.0;
    double acc = 0.0;
    for (float s : samples) acc += static_cast<double>(s) * s;
    return std::sqrt(acc / static_cast<double>(samples.size()));
}

float AudioBuffer::peak() const {
    float p = 0.0f;
    for (float s : samples) p = std::max(p, std::fabs(s));
    return p;
}

// ---------------------------------------------------------------------------
// WAV reader / writer
// ---------------------------------------------------------------------------

namespace {

struct Reader {
    std::vector<char> bytes;
    size_t pos = 0;

    bool eof() const { return pos >= bytes.size(); }
    size_t remaining() const { return bytes.size() - pos; }

    void require(size_t n, const char* what) {
        if (remaining() < n) throw MalformedWav(std::string("truncated ") + what);
    }
    uint32_t u32() {
        require(4, "field");
        uint32_t v;
        std::memcpy(&v, bytes.data() + pos, 4);
        pos += 4;
        return v;
    }
    uint16_t u16() {
        require(2, "field");
        uint16_t v;
        std::memcpy(&v, bytes.data() + pos, 2);
        pos += 2;
        return v;
    }
    std::array<char, 4> tag() {
        require(4, "chunk id");
        std::array<char, 4> t;
        std::memcpy(t.data(), bytes.data() + pos, 4);
        pos += 4;
        return t;
    }
    void skip(size_t n) {
        require(n, "chunk body");
        pos += n;
    }
};

bool tag_is(const std::array<char, 4>& t, const char* s) {
    return std::memcmp(t.data(), s, 4) == 0;
}

constexpr uint16_t kFormatPcm = 0x0001;
constexpr uint16_t kFormatFloat = 0x0003;
constexpr uint16_t kFormatExtensible = 0xFFFE;

} // namespace

AudioBuffer decode_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MalformedWav("cannot open " + path);
    Reader r;
    f.seekg(0, std::ios::end);
    r.bytes.resize(static_cast<size_t>(f.tellg()));
    f.seekg(0);
    f.read(r.bytes.data(), static_cast<std::streamsize>(r.bytes.size()));

    if (!tag_is(r.tag(), "RIFF")) throw MalformedWav("missing RIFF header in " + path);
    r.u32(); // RIFF size, unreliable in the wild; chunk sizes are validated below
    if (!tag_is(r.tag(), "WAVE")) throw MalformedWav("missing WAVE form in " + path);

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    bool have_fmt = false;
    const char* data_ptr = nullptr;
    size_t data_size = 0;

    while (r.remaining() >= 8) {
        auto id = r.tag();
        uint32_t size = r.u32();
        if (tag_is(id, "fmt ")) {
            if (size < 16) throw MalformedWav("fmt chunk too small");
            size_t fmt_end = r.pos + size;
            format = r.u16();
            channels = r.u16();
            rate = r.u32();
            r.u32(); // byte rate
            r.u16(); // block align
            bits = r.u16();
            if (format == kFormatExtensible) {
                if (size < 40) throw MalformedWav("extensible fmt chunk too small");
                r.u16();          // cbSize
                r.u16();          // valid bits
                r.u32();          // channel mask
                format = r.u16(); // first two bytes of the subformat GUID
            }
            if (fmt_end < r.pos || fmt_end > r.bytes.size())
                throw MalformedWav("fmt chunk overruns file");
            r.pos = fmt_end;
            have_fmt = true;
        } else if (tag_is(id, "data")) {
            if (size > r.remaining()) throw MalformedWav("data chunk overruns file");
            data_ptr = r.bytes.data() + r.pos;
            data_size = size;
            r.skip(size);
        } else {
            if (size > r.remaining()) throw MalformedWav("chunk overruns file");
            r.skip(size);
        }
        if ((size & 1) && r.remaining() > 0) r.skip(1); // word alignment pad
    }

    if (!have_fmt) throw MalformedWav("no fmt chunk in " + path);
    if (data_ptr == nullptr) throw MalformedWav("no data chunk in " + path);
    if (channels != 1 && channels != 2)
        throw UnsupportedEncoding(std::to_string(channels) + " channels in " + path);
    if (rate == 0) throw MalformedWav("zero sample rate in " + path);

    size_t bytes_per_sample;
    if (format == kFormatPcm && (bits == 16 || bits == 24 || bits == 32)) {
        bytes_per_sample = bits / 8;
    } else if (format == kFormatFloat && bits == 32) {
        bytes_per_sample = 4;
    } else {
        throw UnsupportedEncoding("format " + std::to_string(format) + " / " +
                                  std::to_string(bits) + " bits in " + path);
    }

    size_t frame_bytes = bytes_per_sample * channels;
    if (data_size % frame_bytes != 0) throw MalformedWav("data chunk not frame-aligned");
    size_t frames = data_size / frame_bytes;
    if (frames == 0) throw MalformedWav("empty data chunk in " + path);

    auto read_one = [&](const char* p) -> double {
        if (format == kFormatFloat) {
            float v;
            std::memcpy(&v, p, 4);
            return v;
        }
        if (bits == 16) {
            int16_t v;
            std::memcpy(&v, p, 2);
            return v / 32768.0;
        }
        if (bits == 24) {
            int32_t v = (static_cast<uint8_t>(p[0])) | (static_cast<uint8_t>(p[1]) << 8) |
                        (static_cast<int32_t>(static_cast<int8_t>(p[2])) << 16);
            return v / 8388608.0;
        }
        int32_t v;
        std::memcpy(&v, p, 4);
        return v / 2147483648.0;
    };

    AudioBuffer out;
    out.sample_rate = static_cast<int>(rate);
    out.samples.resize(frames);
    for (size_t i = 0; i < frames; ++i) {
        const char* p = data_ptr + i * frame_bytes;
        double v = read_one(p);
        if (channels == 2) v = 0.5 * (v + read_one(p + bytes_per_sample));
        out.samples[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
    }
    return out;
}

void encode_wav_f32(const AudioBuffer& buffer, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);

    auto put_u32 = [&](uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    auto put_u16 = [&](uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };

    uint32_t data_bytes = static_cast<uint32_t>(buffer.samples.size() * 4);
    f.write("RIFF", 4);
    put_u32(36 + data_bytes);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    put_u32(16);
    put_u16(kFormatFloat);
    put_u16(1); // mono
    put_u32(static_cast<uint32_t>(buffer.sample_rate));
    put_u32(static_cast<uint32_t>(buffer.sample_rate) * 4);
    put_u16(4);
    put_u16(32);
    f.write("data", 4);
    put_u32(data_bytes);
    f.write(reinterpret_cast<const char*>(buffer.samples.data()),
            static_cast<std::streamsize>(data_bytes));
    if (!f) throw Error("short write to " + path);
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

namespace {

double bessel_i0(double x) {
    double sum = 1.0, term = 1.0;
    double half = x * 0.5;
    for (int k = 1; k < 64; ++k) {
        term *= (half / k) * (half / k);
        sum += term;
        if (term < sum * 1e-14) break;
    }
    return sum;
}

double sinc_pi(double x) {
    if (std::fabs(x) < 1e-12) return 1.0;
    double px = M_PI * x;
    return std::sin(px) / px;
}

constexpr int kTapsPerPhase = 64;
constexpr double kStopbandDb = 70.0;

double kaiser_beta() { return 0.1102 * (kStopbandDb - 8.7); }

// Transition width in Hz that a kTapsPerPhase-sample span supports at rate fs.
double transition_hz(double fs) {
    return (kStopbandDb - 7.95) * fs / (2.285 * 2.0 * M_PI * (kTapsPerPhase - 1));
}

// Prototype lowpass at the upsampled rate fs_in*up, length kTapsPerPhase*up,
// scaled by `up` to preserve unity passband gain through zero stuffing.
std::vector<double> design_prototype(int up, double fs_in, double cutoff_hz) {
    const int taps = kTapsPerPhase * up;
    const double fs_up = fs_in * up;
    const double beta = kaiser_beta();
    const double center = (taps - 1) / 2.0;
    const double i0b = bessel_i0(beta);
    const double fc_frac = 2.0 * cutoff_hz / fs_up; // fraction of fs_up, in (0, 1)
    std::vector<double> h(taps);
    for (int t = 0; t < taps; ++t) {
        double u = (t - center) / center; // [-1, 1]
        double window = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - u * u))) / i0b;
        h[t] = up * fc_frac * sinc_pi(fc_frac * (t - center)) * window;
    }
    return h;
}

} // namespace

AudioBuffer resample(const AudioBuffer& buffer, int target_rate) {
    if (!is_canonical_rate(target_rate))
        throw InvalidRate(std::to_string(target_rate) + " Hz is not a supported target");
    if (buffer.empty()) throw std::invalid_argument("resample: empty buffer");
    if (buffer.sample_rate == target_rate) return buffer;

    const int g = std::gcd(buffer.sample_rate, target_rate);
    const int up = target_rate / g;
    const int down = buffer.sample_rate / g;

    // Stopband is placed at the lower Nyquist so nothing above it survives
    // aliasing; passband edge sits one transition width below.
    const double nyquist = 0.5 * std::min(buffer.sample_rate, target_rate);
    const double cutoff = nyquist - 0.5 * transition_hz(buffer.sample_rate);
    const std::vector<double> proto = design_prototype(up, buffer.sample_rate, cutoff);

    const int64_t in_len = buffer.size();
    const int64_t out_len =
        (in_len * up + down - 1) / down; // ceil, keeps duration within one sample
    const int64_t center = (static_cast<int64_t>(proto.size()) - 1) / 2;

    AudioBuffer out;
    out.sample_rate = target_rate;
    out.source_id = buffer.source_id;
    out.samples.resize(static_cast<size_t>(out_len));

    const float* x = buffer.samples.data();
    for (int64_t n = 0; n < out_len; ++n) {
        int64_t p = n * down + center;
        int64_t phase = p % up;
        int64_t base = p / up;
        double acc = 0.0;
        for (int k = 0; k < kTapsPerPhase; ++k) {
            int64_t j = base - k;
            if (j < 0 || j >= in_len) continue;
            acc += x[j] * proto[static_cast<size_t>(phase + static_cast<int64_t>(k) * up)];
        }
        out.samples[static_cast<size_t>(n)] = static_cast<float>(acc);
    }
    return out;
}

std::vector<float> resample_by_ratio(const std::vector<float>& x, double ratio) {
    if (x.empty() || ratio <= 0.0) return {};
    const int64_t in_len = static_cast<int64_t>(x.size());
    const int64_t out_len = std::max<int64_t>(1, std::llround(in_len * ratio));
    if (std::fabs(ratio - 1.0) < 1e-12) return x;

    const int half = kTapsPerPhase / 2;
    const double beta = kaiser_beta();
    const double i0b = bessel_i0(beta);
    // anti-alias when shrinking; leave headroom for the finite transition band
    const double fc = std::min(1.0, ratio) * 0.9;

    // Kaiser window sampled once and interpolated; exact sinc per tap.
    constexpr int kTable = 4096;
    static thread_local std::vector<double> table;
    static thread_local double table_beta = -1.0;
    if (table.size() != kTable + 1 || table_beta != beta) {
        table.assign(kTable + 1, 0.0);
        for (int i = 0; i <= kTable; ++i) {
            double u = static_cast<double>(i) / kTable;
            table[i] = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - u * u))) / i0b;
        }
        table_beta = beta;
    }
    auto window = [&](double u) -> double {
        double a = std::fabs(u) / half;
        if (a >= 1.0) return 0.0;
        double f = a * kTable;
        int i = static_cast<int>(f);
        double frac = f - i;
        return table[i] * (1.0 - frac) + table[i + 1] * frac;
    };

    std::vector<float> out(static_cast<size_t>(out_len));
    for (int64_t n = 0; n < out_len; ++n) {
        double p = static_cast<double>(n) / ratio;
        int64_t ip = static_cast<int64_t>(std::floor(p));
        double frac = p - static_cast<double>(ip);
        double acc = 0.0;
        for (int k = -half + 1; k <= half; ++k) {
            int64_t j = ip + k;
            if (j < 0 || j >= in_len) continue;
            double u = static_cast<double>(k) - frac;
            acc += x[static_cast<size_t>(j)] * fc * sinc_pi(fc * u) * window(u);
        }
        out[static_cast<size_t>(n)] = static_cast<float>(acc);
    }
    return out;
}

AudioBuffer concat_fragments(const std::vector<AudioBuffer>& fragments) {
    if (fragments.empty()) throw std::invalid_argument("concat_fragments: no fragments");
    AudioBuffer out;
    out.sample_rate = fragments.front().sample_rate;
    out.source_id = fragments.front().source_id;
    size_t total = 0;
    for (const auto& f : fragments) {
        if (f.sample_rate != out.sample_rate)
            throw MixedRates("fragment at " + std::to_string(f.sample_rate) + " Hz, expected " +
                             std::to_string(out.sample_rate));
        if (f.source_id != out.source_id)
            throw std::invalid_argument("concat_fragments: source_id mismatch");
        total += f.samples.size();
    }
    out.samples.reserve(total);
    for (const auto& f : fragments)
        out.samples.insert(out.samples.end(), f.samples.begin(), f.samples.end());
    return out;
}

} // namespace clmrkit::audio
