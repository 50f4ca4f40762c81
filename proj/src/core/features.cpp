#include "features.hpp"

#include <algorithm>
#include <complex>
#include <cstring>

#include "io.hpp"

namespace chorus {

namespace {

// ---- WAV ----

struct WavFmt {
    uint16_t format = 0; // 1 = PCM int, 3 = IEEE float
    uint16_t channels = 0;
    uint32_t sample_rate = 0;
    uint16_t bits = 0;
};

} // namespace

AudioClip load_wav(const std::string& path) {
    auto is = io::open_input(path);
    auto offset = [&]() { return static_cast<long>(is.tellg()); };
    char tag[4];
    is.read(tag, 4);
    if (!is || std::memcmp(tag, "RIFF", 4) != 0)
        throw FormatError(path + ": not a RIFF file (byte offset 0)");
    io::read_u32(is, path); // riff size, unchecked
    is.read(tag, 4);
    if (!is || std::memcmp(tag, "WAVE", 4) != 0)
        throw FormatError(path + ": missing WAVE tag (byte offset 8)");

    WavFmt fmt;
    bool have_fmt = false;
    AudioClip clip;
    while (is.read(tag, 4)) {
        const uint32_t chunk_size = io::read_u32(is, path);
        const long chunk_start = offset();
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            fmt.format = io::read_u16(is, path);
            fmt.channels = io::read_u16(is, path);
            fmt.sample_rate = io::read_u32(is, path);
            io::read_u32(is, path); // byte rate
            io::read_u16(is, path); // block align
            fmt.bits = io::read_u16(is, path);
            have_fmt = true;
            is.seekg(chunk_start + chunk_size);
        } else if (std::memcmp(tag, "data", 4) == 0) {
            if (!have_fmt)
                throw FormatError(path + ": data chunk before fmt (byte offset " +
                                  std::to_string(chunk_start - 8) + ")");
            const bool pcm16 = fmt.format == 1 && fmt.bits == 16;
            const bool f32 = fmt.format == 3 && fmt.bits == 32;
            if (!pcm16 && !f32)
                throw FormatError(path + ": unsupported codec (format " +
                                  std::to_string(fmt.format) + ", " +
                                  std::to_string(fmt.bits) + " bit, byte offset " +
                                  std::to_string(chunk_start - 8) + ")");
            if (fmt.channels == 0 || fmt.channels > 2)
                throw FormatError(path + ": unsupported channel count " +
                                  std::to_string(fmt.channels));
            const uint32_t bytes_per = fmt.bits / 8;
            const uint32_t n_total = chunk_size / (bytes_per * fmt.channels);
            std::vector<char> raw(chunk_size);
            is.read(raw.data(), chunk_size);
            if (!is)
                throw FormatError(path + ": truncated data chunk (byte offset " +
                                  std::to_string(offset()) + ")");
            clip.samples.resize(n_total);
            const float inv = 1.0f / 32768.0f;
            for (uint32_t i = 0; i < n_total; ++i) {
                float acc = 0.0f;
                for (uint16_t c = 0; c < fmt.channels; ++c) {
                    const char* p = raw.data() + (i * fmt.channels + c) * bytes_per;
                    if (pcm16) {
                        int16_t v;
                        std::memcpy(&v, p, 2);
                        acc += static_cast<float>(v) * inv;
                    } else {
                        float v;
                        std::memcpy(&v, p, 4);
                        acc += v;
                    }
                }
                clip.samples[i] = acc / static_cast<float>(fmt.channels);
            }
            clip.sample_rate = static_cast<long>(fmt.sample_rate);
            return clip;
        } else {
            is.seekg(chunk_start + chunk_size + (chunk_size & 1));
        }
    }
    throw FormatError(path + ": no data chunk found (byte offset " +
                      std::to_string(offset()) + ")");
}

// ---- resampling: windowed-sinc interpolation ----

AudioClip resample(const AudioClip& clip, long target_rate) {
    if (target_rate <= 0) throw UsageError("resample: target rate must be positive");
    if (clip.sample_rate <= 0) throw UsageError("resample: clip has no sample rate");
    if (clip.sample_rate == target_rate) return clip;

    const double ratio = static_cast<double>(target_rate) /
                         static_cast<double>(clip.sample_rate);
    const double cutoff = std::min(1.0, ratio); // fraction of input Nyquist
    const int lobes = 24;
    const double half_width = lobes / cutoff; // in input samples
    const long n_in = static_cast<long>(clip.samples.size());
    const long n_out = static_cast<long>(std::llround(n_in * ratio));

    AudioClip out;
    out.sample_rate = target_rate;
    out.samples.resize(n_out);
    for (long m = 0; m < n_out; ++m) {
        const double t = m / ratio;
        const long k0 = std::max<long>(0, static_cast<long>(std::ceil(t - half_width)));
        const long k1 = std::min<long>(n_in - 1, static_cast<long>(std::floor(t + half_width)));
        double acc = 0.0;
        for (long k = k0; k <= k1; ++k) {
            const double u = t - k;
            const double x = M_PI * cutoff * u;
            const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(x) / x;
            const double win = 0.5 + 0.5 * std::cos(M_PI * u / half_width); // Hann
            acc += clip.samples[k] * cutoff * sinc * win;
        }
        out.samples[m] = static_cast<float>(acc);
    }
    return out;
}

// ---- FFT (iterative radix-2, complex) ----

namespace {

void fft_inplace(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

double hz_to_mel_slaney(double f) {
    if (f < 1000.0) return 3.0 * f / 200.0;
    return 15.0 + 27.0 * std::log(f / 1000.0) / std::log(6.4);
}

double mel_to_hz_slaney(double m) {
    if (m < 15.0) return 200.0 * m / 3.0;
    return 1000.0 * std::exp(std::log(6.4) * (m - 15.0) / 27.0);
}

// Triangular Slaney-spaced filterbank with area normalization.
std::vector<float> mel_filterbank(long n_mels, long n_bins, double sr) {
    const double fmax = sr / 2.0;
    const double m_lo = hz_to_mel_slaney(0.0);
    const double m_hi = hz_to_mel_slaney(fmax);
    std::vector<double> f(n_mels + 2);
    for (long i = 0; i < n_mels + 2; ++i)
        f[i] = mel_to_hz_slaney(m_lo + (m_hi - m_lo) * i / (n_mels + 1));

    std::vector<float> bank(static_cast<size_t>(n_mels * n_bins), 0.0f);
    for (long i = 0; i < n_mels; ++i) {
        const double f0 = f[i], f1 = f[i + 1], f2 = f[i + 2];
        const double norm = 2.0 / (f2 - f0);
        for (long b = 0; b < n_bins; ++b) {
            const double fb = sr * b / kWindowLength;
            double w = 0.0;
            if (fb > f0 && fb <= f1) w = (fb - f0) / (f1 - f0);
            else if (fb > f1 && fb < f2) w = (f2 - fb) / (f2 - f1);
            bank[static_cast<size_t>(i * n_bins + b)] = static_cast<float>(w * norm);
        }
    }
    return bank;
}

} // namespace

std::vector<float> mel_filter_weights(long n_mels, long n_bins, double sample_rate) {
    return mel_filterbank(n_mels, n_bins, sample_rate);
}

std::vector<double> mel_filter_centers(long n_mels, double fmin, double fmax) {
    const double m_lo = hz_to_mel_slaney(fmin);
    const double m_hi = hz_to_mel_slaney(fmax);
    std::vector<double> centers(n_mels);
    for (long i = 0; i < n_mels; ++i)
        centers[i] = mel_to_hz_slaney(m_lo + (m_hi - m_lo) * (i + 1) / (n_mels + 1));
    return centers;
}

MelSpectrogram mel_spectrogram(const AudioClip& clip) {
    const long n = static_cast<long>(clip.samples.size());
    if (n < kWindowLength)
        throw FormatError("mel_spectrogram: clip shorter than one analysis window (" +
                          std::to_string(n) + " < " + std::to_string(kWindowLength) + ")");
    const long n_bins = kWindowLength / 2 + 1;
    const long n_frames = 1 + n / kHopLength;

    // periodic Hann
    std::vector<double> window(kWindowLength);
    for (long i = 0; i < kWindowLength; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / kWindowLength);

    // centered frames with reflect padding
    auto sample_at = [&](long idx) -> double {
        if (idx < 0) idx = -idx;
        if (idx >= n) idx = 2 * (n - 1) - idx;
        idx = std::clamp<long>(idx, 0, n - 1);
        return clip.samples[static_cast<size_t>(idx)];
    };

    const auto bank = mel_filterbank(kNumMels, n_bins, static_cast<double>(clip.sample_rate));

    MelSpectrogram mel;
    mel.n_mels = kNumMels;
    mel.n_frames = n_frames;
    mel.fps = static_cast<double>(clip.sample_rate) / kHopLength;
    mel.data.assign(static_cast<size_t>(n_frames * kNumMels), 0.0f);

    std::vector<std::complex<double>> buf(kWindowLength);
    std::vector<double> mag(n_bins);
    for (long t = 0; t < n_frames; ++t) {
        const long start = t * kHopLength - kWindowLength / 2;
        for (long i = 0; i < kWindowLength; ++i)
            buf[i] = {sample_at(start + i) * window[i], 0.0};
        fft_inplace(buf);
        for (long b = 0; b < n_bins; ++b) mag[b] = std::abs(buf[b]);
        for (long m = 0; m < kNumMels; ++m) {
            double acc = 0.0;
            const float* row = bank.data() + m * n_bins;
            for (long b = 0; b < n_bins; ++b) acc += row[b] * mag[b];
            mel.data[static_cast<size_t>(t * kNumMels + m)] = static_cast<float>(acc);
        }
    }
    return mel;
}

void apply_log_compression(MelSpectrogram& m) {
    for (auto& v : m.data) v = std::log1p(v);
}

void write_features(const MelSpectrogram& m, const std::string& path) {
    if (m.n_frames <= 0) throw UsageError("write_features: n_frames must be positive");
    if (m.n_mels <= 0) throw UsageError("write_features: n_mels must be positive");
    if (static_cast<long>(m.data.size()) != m.n_frames * m.n_mels)
        throw UsageError("write_features: data size does not match dims");
    auto os = io::open_output(path);
    os.write("DCF1", 4);
    io::write_u32(os, 1);
    io::write_u32(os, static_cast<uint32_t>(m.n_mels));
    io::write_u64(os, static_cast<uint64_t>(m.n_frames));
    io::write_f64(os, m.fps);
    io::write_f32_array(os, m.data.data(), m.data.size());
    if (!os) throw FormatError("write_features: write failed for " + path);
}

MelSpectrogram read_features(const std::string& path) {
    auto is = io::open_input(path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "DCF1", 4) != 0)
        throw FormatError(path + ": bad feature-file magic");
    const uint32_t version = io::read_u32(is, path);
    if (version != 1)
        throw FormatError(path + ": unsupported feature version " + std::to_string(version));
    MelSpectrogram m;
    m.n_mels = static_cast<long>(io::read_u32(is, path));
    m.n_frames = static_cast<long>(io::read_u64(is, path));
    m.fps = io::read_f64(is, path);
    if (m.n_mels <= 0 || m.n_frames <= 0)
        throw FormatError(path + ": empty feature matrix");
    m.data.resize(static_cast<size_t>(m.n_frames * m.n_mels));
    io::read_f32_array(is, m.data.data(), m.data.size(), path);
    return m;
}

} // namespace chorus
