#include "metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "binio.hpp"
#include "error.hpp"

namespace rainnas::verify {

namespace {
void check_pair(std::span<const double> pred, std::span<const double> obs, const char* what) {
    if (pred.size() != obs.size())
        fail(ErrorKind::InvalidArgument, std::string(what) + ": " + std::to_string(pred.size()) +
                                             " predictions vs " + std::to_string(obs.size()) + " observations");
    if (pred.empty()) fail(ErrorKind::InvalidArgument, std::string(what) + ": empty input");
}
}  // namespace

RainLevel classify(double mm) {
    if (!(mm >= 0.0)) fail(ErrorKind::InvalidArgument, "classify: rainfall must be non-negative, got " + std::to_string(mm));
    std::size_t level = 0;
    while (level < kLevelThresholds.size() && mm >= kLevelThresholds[level]) ++level;
    return static_cast<RainLevel>(level);
}

std::vector<RainLevel> classify(std::span<const double> mm) {
    std::vector<RainLevel> out(mm.size());
    for (std::size_t i = 0; i < mm.size(); ++i) out[i] = classify(mm[i]);
    return out;
}

std::uint64_t ContingencyTable::observed(std::size_t i) const {
    std::uint64_t s = 0;
    for (auto v : n[i]) s += v;
    return s;
}

std::uint64_t ContingencyTable::predicted(std::size_t j) const {
    std::uint64_t s = 0;
    for (const auto& row : n) s += row[j];
    return s;
}

std::uint64_t ContingencyTable::total() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < kNumLevels; ++i) s += observed(i);
    return s;
}

std::uint64_t ContingencyTable::hits() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < kNumLevels; ++i) s += n[i][i];
    return s;
}

ContingencyTable contingency(std::span<const RainLevel> pred, std::span<const RainLevel> obs) {
    require(pred.size() == obs.size(), "contingency: prediction and observation counts differ");
    ContingencyTable t;
    for (std::size_t k = 0; k < pred.size(); ++k)
        ++t.n[static_cast<std::size_t>(obs[k])][static_cast<std::size_t>(pred[k])];
    return t;
}

double bias(std::span<const double> pred, std::span<const double> obs) {
    check_pair(pred, obs, "bias");
    double sp = 0, so = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        sp += pred[i];
        so += obs[i];
    }
    if (so == 0.0) fail(ErrorKind::Numeric, "bias: observation sum is zero");
    return sp / so;
}

double mae(std::span<const double> pred, std::span<const double> obs) {
    check_pair(pred, obs, "mae");
    double s = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - obs[i]);
    return s / static_cast<double>(pred.size());
}

double rmse(std::span<const double> pred, std::span<const double> obs) {
    check_pair(pred, obs, "rmse");
    double s = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - obs[i]) * (pred[i] - obs[i]);
    return std::sqrt(s / static_cast<double>(pred.size()));
}

double nse(std::span<const double> pred, std::span<const double> obs) {
    check_pair(pred, obs, "nse");
    double mean = 0;
    for (double v : obs) mean += v;
    mean /= static_cast<double>(obs.size());
    double err = 0, var = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        err += (pred[i] - obs[i]) * (pred[i] - obs[i]);
        var += (obs[i] - mean) * (obs[i] - mean);
    }
    if (var == 0.0) fail(ErrorKind::Numeric, "nse: observations are constant");
    return 1.0 - err / var;
}

double acc(const ContingencyTable& table) {
    const auto total = table.total();
    if (total == 0) fail(ErrorKind::Numeric, "acc: empty contingency table");
    return static_cast<double>(table.hits()) / static_cast<double>(total);
}

double hss(const ContingencyTable& table) {
    const auto total = table.total();
    if (total == 0) fail(ErrorKind::Numeric, "hss: empty contingency table");
    // (hits/N - S/N^2) / (1 - S/N^2) == (hits*N - S) / (N^2 - S), evaluated
    // in exact integers with one final rounding.
    using wide = __int128;
    wide chance = 0;
    for (std::size_t i = 0; i < kNumLevels; ++i)
        chance += static_cast<wide>(table.predicted(i)) * static_cast<wide>(table.observed(i));
    const wide n = static_cast<wide>(total);
    const wide num = static_cast<wide>(table.hits()) * n - chance;
    const wide den = n * n - chance;
    if (den == 0) fail(ErrorKind::Numeric, "hss: degenerate marginals");
    return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
}

Report evaluate(std::span<const double> pred, std::span<const double> obs) {
    Report r;
    r.bias = bias(pred, obs);
    r.mae = mae(pred, obs);
    r.rmse = rmse(pred, obs);
    r.nse = nse(pred, obs);
    auto table = contingency(classify(pred), classify(obs));
    r.acc = acc(table);
    r.hss = hss(table);
    return r;
}

std::string report_csv_row(const Report& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,%.10g,%.10g,%.10g", r.bias, r.mae, r.rmse, r.nse, r.acc, r.hss);
    return buf;
}

PixelMaps pixel_maps(std::span<const std::vector<double>> preds, std::span<const std::vector<double>> obs,
                     std::size_t w, std::size_t h) {
    require(preds.size() == obs.size() && !preds.empty(), "pixel_maps: need equal, non-empty series");
    const std::size_t hw = w * h;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    PixelMaps m{w, h, std::vector<double>(hw), std::vector<double>(hw), std::vector<double>(hw),
                std::vector<double>(hw)};
    std::vector<double> p(preds.size()), o(preds.size());
    for (std::size_t q = 0; q < hw; ++q) {
        for (std::size_t s = 0; s < preds.size(); ++s) {
            require(preds[s].size() == hw && obs[s].size() == hw, "pixel_maps: grid size mismatch");
            p[s] = preds[s][q];
            o[s] = obs[s][q];
        }
        m.mae[q] = mae(p, o);
        m.rmse[q] = rmse(p, o);
        auto table = contingency(classify(p), classify(o));
        m.acc[q] = acc(table);
        try {
            m.hss[q] = hss(table);
        } catch (const Error&) {
            m.hss[q] = nan;
        }
    }
    return m;
}

void write_raster(const std::filesystem::path& path, const std::string& name, std::span<const double> values,
                  std::size_t w, std::size_t h) {
    require(values.size() == w * h, "write_raster: value count does not match extent");
    io::ByteWriter out;
    out.text("RNRASTER " + name + " " + std::to_string(w) + " " + std::to_string(h) + " float32le\n");
    for (double v : values) out.f32(static_cast<float>(v));
    io::write_file(path, out.take());
}

std::vector<float> read_raster(const std::filesystem::path& path, std::size_t& w, std::size_t& h) {
    auto bytes = io::read_file(path);
    std::size_t nl = 0;
    while (nl < bytes.size() && bytes[nl] != '\n') ++nl;
    if (nl == bytes.size()) fail(ErrorKind::Format, "raster " + path.string() + ": missing header line");
    std::string header(bytes.begin(), bytes.begin() + static_cast<long>(nl));
    char name[128];
    unsigned long ww = 0, hh = 0;
    if (std::sscanf(header.c_str(), "RNRASTER %127s %lu %lu float32le", name, &ww, &hh) != 3)
        fail(ErrorKind::Format, "raster " + path.string() + ": bad header '" + header + "'");
    w = ww;
    h = hh;
    std::vector<std::uint8_t> body(bytes.begin() + static_cast<long>(nl) + 1, bytes.end());
    io::ByteReader r(body, "raster " + path.string());
    std::vector<float> out(w * h);
    for (auto& v : out) v = r.f32();
    if (!r.at_end()) r.error("trailing bytes");
    return out;
}

}  // namespace rainnas::verify
