#pragma once

// Verification scores for deterministic rainfall forecasts. All functions
// pool every value they are given (all pixels of all samples).

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rainnas::verify {

enum class RainLevel : std::uint8_t { None = 0, Light, Moderate, Heavy, Violent };

inline constexpr std::size_t kNumLevels = 5;
// Lower bounds of Light..Violent in mm/day; intervals are half-open [lo, hi).
inline constexpr std::array<double, kNumLevels - 1> kLevelThresholds{0.1, 10.1, 25.1, 50.1};

RainLevel classify(double mm);
std::vector<RainLevel> classify(std::span<const double> mm);

// n[i][j]: observed level i forecast as level j.
struct ContingencyTable {
    std::array<std::array<std::uint64_t, kNumLevels>, kNumLevels> n{};

    std::uint64_t observed(std::size_t i) const;   // row sum
    std::uint64_t predicted(std::size_t j) const;  // column sum
    std::uint64_t total() const;
    std::uint64_t hits() const;  // trace
};

ContingencyTable contingency(std::span<const RainLevel> pred, std::span<const RainLevel> obs);

double bias(std::span<const double> pred, std::span<const double> obs);
double mae(std::span<const double> pred, std::span<const double> obs);
double rmse(std::span<const double> pred, std::span<const double> obs);
double nse(std::span<const double> pred, std::span<const double> obs);
double acc(const ContingencyTable& table);
// Heidke skill score with the chance term sum_i N'_i N_i / N_T^2.
double hss(const ContingencyTable& table);

struct Report {
    double bias = 0, mae = 0, rmse = 0, nse = 0, acc = 0, hss = 0;
};

Report evaluate(std::span<const double> pred, std::span<const double> obs);

inline constexpr const char* kReportHeader = "bias,mae,rmse,nse,acc,hss";
std::string report_csv_row(const Report& r);

// Per-pixel scores over a series of grids, each of length w*h. Pixels where
// a score is undefined (constant observations, degenerate HSS) hold NaN.
struct PixelMaps {
    std::size_t w = 0, h = 0;
    std::vector<double> mae, rmse, acc, hss;
};

PixelMaps pixel_maps(std::span<const std::vector<double>> preds, std::span<const std::vector<double>> obs,
                     std::size_t w, std::size_t h);

// Raster: one text line "RNRASTER <name> <w> <h> float32le\n", then w*h
// little-endian float32 values in row-major order.
void write_raster(const std::filesystem::path& path, const std::string& name, std::span<const double> values,
                  std::size_t w, std::size_t h);
std::vector<float> read_raster(const std::filesystem::path& path, std::size_t& w, std::size_t& h);

}  // namespace rainnas::verify
