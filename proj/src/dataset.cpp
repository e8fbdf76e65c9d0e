#include "dataset.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "binio.hpp"
#include "error.hpp"
#include "random.hpp"

namespace rainnas::data {

namespace {
constexpr char kMagic[4] = {'A', 'D', 'N', 'R'};
constexpr std::uint32_t kVersion = 1;

bool all_zero(std::span<const float> v) {
    return std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; });
}

bool has_nan(std::span<const float> v) {
    return std::any_of(v.begin(), v.end(), [](float x) { return std::isnan(x); });
}

// Values sit at least 0.1 mm inside their level so float storage never
// moves a pixel across a threshold.
double level_value(std::size_t level, double v) {
    switch (level) {
        case 0: return 0.09 * v;
        case 1: return 0.1 + 9.9 * std::pow(v, 1.6);
        case 2: return 10.2 + 14.8 * v;
        case 3: return 25.2 + 24.8 * v;
        default: return 50.2 + 50.0 * v;
    }
}

struct MemberBias {
    double scale = 1, offset = 0;
};

std::vector<MemberBias> member_biases(Mode mode, std::size_t c, Rng& rng) {
    std::vector<MemberBias> out(c);
    if (mode == Mode::Mmod) {
        // Distinct models: individually different systematic errors.
        for (auto& b : out) {
            b.scale = uniform(rng, 1.05, 1.45);
            b.offset = uniform(rng, 0.3, 1.5);
        }
    } else {
        // Perturbed initial conditions of one model: shared error, small spread.
        const double scale = uniform(rng, 1.15, 1.35);
        const double offset = uniform(rng, 0.6, 1.0);
        for (auto& b : out) {
            b.scale = scale + 0.05 * standard_normal(rng);
            b.offset = offset + 0.1 * standard_normal(rng);
        }
    }
    return out;
}

std::vector<double> bump_field(Rng& rng, std::size_t w, std::size_t h) {
    std::vector<double> f(w * h, 0.0);
    const std::size_t bumps = 3 + uniform_index(rng, 6);
    for (std::size_t b = 0; b < bumps; ++b) {
        const double cx = uniform(rng, -4.0, static_cast<double>(w) + 3.0);
        const double cy = uniform(rng, -4.0, static_cast<double>(h) + 3.0);
        const double sigma = uniform(rng, 3.0, 9.0);
        const double amp = -std::log(1.0 - uniform01(rng));
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
                f[y * w + x] += amp * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            }
    }
    return f;
}

LevelMix jitter_mix(const LevelMix& mix, double alpha) {
    LevelMix m = mix;
    m[0] = mix[0] * (2.0 - alpha);
    for (std::size_t l = 2; l < m.size(); ++l) m[l] = mix[l] * alpha;
    m[1] = 1.0 - (m[0] + m[2] + m[3] + m[4]);
    return m[1] >= 0.0 ? m : mix;
}

// Maps the field's pixel ranks onto the level mix, preserving order.
std::vector<double> rank_map(const std::vector<double>& field, const LevelMix& mix) {
    const std::size_t n = field.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return field[a] < field[b]; });
    std::vector<double> out(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double u = (static_cast<double>(r) + 0.5) / static_cast<double>(n);
        double lo = 0;
        std::size_t level = 0;
        while (level + 1 < mix.size() && u >= lo + mix[level]) lo += mix[level++];
        const double v = mix[level] > 0 ? std::clamp((u - lo) / mix[level], 0.0, 1.0) : 0.5;
        out[order[r]] = level_value(level, v);
    }
    return out;
}

std::int64_t days_since_epoch(int y, unsigned m, unsigned d) {
    using namespace std::chrono;
    return sys_days{year{y} / month{m} / day{d}}.time_since_epoch().count();
}
}  // namespace

std::size_t channels_for(Mode mode) { return mode == Mode::Smod ? 50 : 4; }

Mode parse_mode(const std::string& name) {
    if (name == "smod") return Mode::Smod;
    if (name == "mmod") return Mode::Mmod;
    fail(ErrorKind::InvalidArgument, "unknown mode '" + name + "' (expected smod or mmod)");
}

const char* mode_name(Mode mode) { return mode == Mode::Smod ? "smod" : "mmod"; }

const char* reason_name(RejectReason reason) {
    switch (reason) {
        case RejectReason::TimeMismatch: return "time mismatch";
        case RejectReason::MissingMember: return "missing member";
        case RejectReason::AllZero: return "all-zero";
    }
    return "?";
}

std::string iso_date(std::int64_t day) {
    using namespace std::chrono;
    const year_month_day ymd{sys_days{days{day}}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT00:00:00Z", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

void Dataset::validate() const {
    require(channels >= 1, "dataset: channel count must be positive");
    require(w >= 1 && h >= 1, "dataset: empty grid");
    const std::size_t hw = pixels();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const std::string where = "dataset sample " + std::to_string(i) + " ('" + s.timestamp + "')";
        require(s.ensemble.size() == channels * hw, where + ": ensemble has " + std::to_string(s.ensemble.size()) +
                                                        " values, expected " + std::to_string(channels * hw));
        require(s.observation.size() == hw, where + ": observation has wrong size");
        auto ok = [](float v) { return std::isfinite(v) && v >= 0.0f; };
        require(std::all_of(s.ensemble.begin(), s.ensemble.end(), ok), where + ": ensemble value negative or non-finite");
        require(std::all_of(s.observation.begin(), s.observation.end(), ok),
                where + ": observation value negative or non-finite");
        if (i > 0) require(samples[i - 1].timestamp < s.timestamp, where + ": timestamps not strictly increasing");
    }
}

ScreenResult screen(std::span<const RawSample> samples, std::size_t channels, std::size_t pixels) {
    ScreenResult out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        auto reject = [&](RejectReason r) { out.rejected.push_back({i, r, s.forecast_time}); };
        if (s.forecast_time != s.observation_time) {
            reject(RejectReason::TimeMismatch);
            continue;
        }
        bool missing = s.members.size() != channels;
        for (const auto& m : s.members) missing = missing || m.size() != pixels || has_nan(m);
        if (missing) {
            reject(RejectReason::MissingMember);
            continue;
        }
        bool members_zero = true;
        for (const auto& m : s.members) members_zero = members_zero && all_zero(m);
        if (s.observation.size() != pixels || has_nan(s.observation) || all_zero(s.observation) || members_zero) {
            reject(RejectReason::AllZero);
            continue;
        }
        out.kept.push_back(s);
    }
    return out;
}

GridSample to_grid_sample(const RawSample& raw) {
    GridSample g;
    g.timestamp = raw.forecast_time;
    for (const auto& m : raw.members) g.ensemble.insert(g.ensemble.end(), m.begin(), m.end());
    g.observation = raw.observation;
    return g;
}

RawSample to_raw_sample(const GridSample& sample, std::size_t channels) {
    RawSample r;
    r.forecast_time = r.observation_time = sample.timestamp;
    const std::size_t hw = sample.observation.size();
    require(sample.ensemble.size() == channels * hw, "to_raw_sample: ensemble size does not match channel count");
    for (std::size_t k = 0; k < channels; ++k)
        r.members.emplace_back(sample.ensemble.begin() + static_cast<long>(k * hw),
                               sample.ensemble.begin() + static_cast<long>((k + 1) * hw));
    r.observation = sample.observation;
    return r;
}

std::size_t train_count(std::size_t n) { return (9 * n + 9) / 10; }

Split split_timeline(const Dataset& dataset) {
    Split s;
    s.train = s.val = Dataset{dataset.mode, dataset.channels, dataset.w, dataset.h, {}};
    const std::size_t n = dataset.size();
    if (n < 10)
        s.warnings.push_back("only " + std::to_string(n) + " samples; validation split is tiny or empty");
    const std::size_t k = train_count(n);
    s.train.samples.assign(dataset.samples.begin(), dataset.samples.begin() + static_cast<long>(k));
    s.val.samples.assign(dataset.samples.begin() + static_cast<long>(k), dataset.samples.end());
    return s;
}

Dataset generate_synthetic(std::size_t n, Mode mode, std::uint64_t seed, const LevelMix& mix) {
    require(n >= 1, "generate_synthetic: n must be at least 1");
    double total = 0;
    for (double p : mix) {
        require(p >= 0.0, "generate_synthetic: level mix entries must be non-negative");
        total += p;
    }
    require(std::abs(total - 1.0) < 1e-6, "generate_synthetic: level mix must sum to 1");

    Dataset ds;
    ds.mode = mode;
    ds.channels = channels_for(mode);
    const std::size_t w = ds.w, h = ds.h, hw = w * h, c = ds.channels;
    Rng sys = derive_rng(seed, 1);
    const auto biases = member_biases(mode, c, sys);
    Rng rng = derive_rng(seed, 2);
    const std::int64_t day0 = days_since_epoch(2013, 1, 1);
    constexpr double kNoiseSigma = 0.3;
    constexpr int kMaxShift = 2;

    ds.samples.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        auto& out = ds.samples[s];
        out.timestamp = iso_date(day0 + static_cast<std::int64_t>(s));
        const auto field = bump_field(rng, w, h);
        const auto obs = rank_map(field, jitter_mix(mix, uniform(rng, 0.5, 1.5)));
        out.observation.assign(obs.begin(), obs.end());
        out.ensemble.resize(c * hw);
        for (std::size_t k = 0; k < c; ++k) {
            const int dx = static_cast<int>(uniform_index(rng, 2 * kMaxShift + 1)) - kMaxShift;
            const int dy = static_cast<int>(uniform_index(rng, 2 * kMaxShift + 1)) - kMaxShift;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const auto sx = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(x) + dx, 0, static_cast<long>(w) - 1));
                    const auto sy = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(y) + dy, 0, static_cast<long>(h) - 1));
                    const double noise = std::exp(kNoiseSigma * standard_normal(rng) - 0.5 * kNoiseSigma * kNoiseSigma);
                    const double v = biases[k].scale * obs[sy * w + sx] * noise + biases[k].offset;
                    out.ensemble[k * hw + y * w + x] = static_cast<float>(std::max(0.0, v));
                }
        }
    }
    return ds;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset) {
    dataset.validate();
    require(dataset.channels <= 0xFFFF && dataset.w <= 0xFFFF && dataset.h <= 0xFFFF,
            "encode_dataset: extent exceeds u16");
    io::ByteWriter out;
    out.bytes(kMagic, 4);
    out.le<std::uint32_t>(kVersion);
    out.le<std::uint8_t>(static_cast<std::uint8_t>(dataset.mode));
    out.le<std::uint16_t>(static_cast<std::uint16_t>(dataset.channels));
    out.le<std::uint16_t>(static_cast<std::uint16_t>(dataset.w));
    out.le<std::uint16_t>(static_cast<std::uint16_t>(dataset.h));
    out.le<std::uint32_t>(static_cast<std::uint32_t>(dataset.size()));
    for (const auto& s : dataset.samples) {
        require(s.timestamp.size() <= 0xFFFF, "encode_dataset: timestamp too long");
        out.le<std::uint16_t>(static_cast<std::uint16_t>(s.timestamp.size()));
        out.text(s.timestamp);
        for (float v : s.ensemble) out.f32(v);
        for (float v : s.observation) out.f32(v);
    }
    return out.take();
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes, const std::string& what) {
    io::ByteReader in(bytes, what);
    if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin()))
        fail(ErrorKind::Format, what + ": not an ADNR file");
    in.text(4);
    const auto version = in.le<std::uint32_t>();
    if (version != kVersion) in.error("unsupported version " + std::to_string(version));
    const auto mode = in.le<std::uint8_t>();
    if (mode > 1) in.error("bad mode byte " + std::to_string(mode));
    Dataset ds;
    ds.mode = static_cast<Mode>(mode);
    ds.channels = in.le<std::uint16_t>();
    ds.w = in.le<std::uint16_t>();
    ds.h = in.le<std::uint16_t>();
    if (ds.channels == 0 || ds.w == 0 || ds.h == 0) in.error("zero extent in header");
    const auto n = in.le<std::uint32_t>();
    const std::size_t hw = ds.w * ds.h;
    // Cheap sanity bound before allocating.
    if (static_cast<double>(n) * static_cast<double>((ds.channels + 1) * hw * 4 + 2) > static_cast<double>(in.remaining()))
        in.error("header claims " + std::to_string(n) + " samples but file is too short");
    ds.samples.resize(n);
    for (auto& s : ds.samples) {
        const auto len = in.le<std::uint16_t>();
        s.timestamp = in.text(len);
        s.ensemble.resize(ds.channels * hw);
        for (auto& v : s.ensemble) v = in.f32();
        s.observation.resize(hw);
        for (auto& v : s.observation) v = in.f32();
    }
    if (!in.at_end()) in.error("trailing bytes after last sample");
    try {
        ds.validate();
    } catch (const Error& e) {
        fail(ErrorKind::Format, what + ": " + e.what());
    }
    return ds;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    io::write_file(path, encode_dataset(dataset));
}

Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(io::read_file(path), path.string()); }

}  // namespace rainnas::data
