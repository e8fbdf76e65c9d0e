#pragma once

// Gridded ensemble/observation samples, screening, timeline split, the ADNR
// container and a seeded synthetic generator.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rainnas::data {

inline constexpr std::size_t kGridW = 33;
inline constexpr std::size_t kGridH = 33;
inline constexpr std::size_t kGridPixels = kGridW * kGridH;

enum class Mode : std::uint8_t { Smod = 0, Mmod = 1 };

std::size_t channels_for(Mode mode);
Mode parse_mode(const std::string& name);
const char* mode_name(Mode mode);

struct GridSample {
    std::string timestamp;
    std::vector<float> ensemble;     // c x h x w, member-major
    std::vector<float> observation;  // h x w
    bool operator==(const GridSample&) const = default;
};

struct Dataset {
    Mode mode = Mode::Mmod;
    std::size_t channels = 4;
    std::size_t w = kGridW, h = kGridH;
    std::vector<GridSample> samples;

    std::size_t size() const { return samples.size(); }
    std::size_t pixels() const { return w * h; }
    // Throws on non-uniform shapes, negative or non-finite values, or
    // timestamps that are not strictly increasing.
    void validate() const;
    bool operator==(const Dataset&) const = default;
};

// Unscreened input as assembled from upstream sources. A missing member is
// an absent entry in `members` or a member containing NaN.
struct RawSample {
    std::string forecast_time;
    std::string observation_time;
    std::vector<std::vector<float>> members;
    std::vector<float> observation;
};

enum class RejectReason { TimeMismatch, MissingMember, AllZero };
const char* reason_name(RejectReason reason);

struct Rejection {
    std::size_t index = 0;
    RejectReason reason = RejectReason::AllZero;
    std::string timestamp;
};

struct ScreenResult {
    std::vector<RawSample> kept;
    std::vector<Rejection> rejected;
};

ScreenResult screen(std::span<const RawSample> samples, std::size_t channels, std::size_t pixels);
GridSample to_grid_sample(const RawSample& raw);
RawSample to_raw_sample(const GridSample& sample, std::size_t channels);

struct Split {
    Dataset train;
    Dataset val;
    std::vector<std::string> warnings;
};

// First ceil(0.9 n) samples train, the rest validate; order preserved.
Split split_timeline(const Dataset& dataset);
std::size_t train_count(std::size_t n);

// Pooled proportions of None, Light, Moderate, Heavy, Violent.
using LevelMix = std::array<double, 5>;
inline constexpr LevelMix kDefaultLevelMix{0.081, 0.764, 0.127, 0.019, 0.009};

Dataset generate_synthetic(std::size_t n, Mode mode, std::uint64_t seed, const LevelMix& mix = kDefaultLevelMix);

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes, const std::string& what = "dataset");
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

// ISO-8601 UTC timestamp for midnight `day` days after 1970-01-01.
std::string iso_date(std::int64_t day);

}  // namespace rainnas::data
