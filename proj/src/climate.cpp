#include "mfe2/climate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "mfe2/error.hpp"

namespace mfe2 {

ClimateExtension climate_extension_from_string(const std::string& s)
{
    if (s == "periodic") return ClimateExtension::periodic;
    if (s == "clamp") return ClimateExtension::clamp;
    throw InputError("unknown climate extension '" + s + "' (expected periodic or clamp)");
}

const char* to_string(ClimateExtension e)
{
    return e == ClimateExtension::periodic ? "periodic" : "clamp";
}

void ClimateSeries::validate() const
{
    if (samples.empty()) {
        throw InputError("climate series is empty");
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (!std::isfinite(s.time_h) || !std::isfinite(s.temperature) || !std::isfinite(s.humidity)) {
            throw InputError("climate sample " + std::to_string(i) + " is not finite");
        }
        if (s.humidity < 0.0 || s.humidity > 1.0) {
            throw InputError("climate sample " + std::to_string(i) + " has humidity outside [0, 1]");
        }
        if (i > 0 && !(s.time_h > samples[i - 1].time_h)) {
            throw InputError("climate sample " + std::to_string(i) + " is not later than its predecessor");
        }
    }
}

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_number(const std::string& field, const std::string& where)
{
    const std::string t = trim(field);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        throw InputError(where + ": '" + t + "' is not a number");
    }
    if (used != t.size() || !std::isfinite(v)) {
        throw InputError(where + ": '" + t + "' is not a number");
    }
    return v;
}

} // namespace

ClimateSeries parse_climate_series(std::istream& is, const std::string& source)
{
    ClimateSeries series;
    std::string line;
    int line_no = 0;
    bool header = false;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (!header) {
            header = true;
            if (t != "time_h,temperature_C,relative_humidity") {
                throw InputError(source + " line " + std::to_string(line_no) +
                                 ": expected header time_h,temperature_C,relative_humidity");
            }
            continue;
        }
        const std::string where = source + " line " + std::to_string(line_no);
        std::vector<std::string> fields;
        std::stringstream ss(t);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (fields.size() != 3) {
            throw InputError(where + ": expected 3 comma-separated values, got " +
                             std::to_string(fields.size()));
        }
        ClimateSample s{parse_number(fields[0], where), parse_number(fields[1], where),
                        parse_number(fields[2], where)};
        if (s.humidity < 0.0 || s.humidity > 1.0) {
            throw InputError(where + ": relative humidity " + trim(fields[2]) + " outside [0, 1]");
        }
        if (!series.samples.empty() && !(s.time_h > series.samples.back().time_h)) {
            throw InputError(where + ": time " + trim(fields[0]) + " is not after the previous row");
        }
        series.samples.push_back(s);
    }
    if (!header) {
        throw InputError(source + ": missing header line");
    }
    if (series.samples.empty()) {
        throw InputError(source + ": no data rows");
    }
    return series;
}

ClimateSeries load_climate_series(const std::string& path, ClimateExtension extension)
{
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open climate file " + path);
    }
    ClimateSeries s = parse_climate_series(in, path);
    s.extension = extension;
    return s;
}

void write_climate_series(std::ostream& os, const ClimateSeries& series)
{
    os << "time_h,temperature_C,relative_humidity\n";
    char buf[128];
    for (const auto& s : series.samples) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", s.time_h, s.temperature, s.humidity);
        os << buf;
    }
}

ClimateValue sample_climate(const ClimateSeries& series, double t_h)
{
    const auto& s = series.samples;
    if (s.empty()) {
        throw InputError("cannot sample an empty climate series");
    }
    if (s.size() == 1 || t_h <= s.front().time_h) {
        return {s.front().temperature, s.front().humidity};
    }
    if (t_h > s.back().time_h) {
        if (series.extension == ClimateExtension::clamp) {
            return {s.back().temperature, s.back().humidity};
        }
        const double span = s.back().time_h - s.front().time_h;
        t_h = s.front().time_h + std::fmod(t_h - s.front().time_h, span);
    }
    const auto it = std::lower_bound(s.begin(), s.end(), t_h,
                                     [](const ClimateSample& a, double t) { return a.time_h < t; });
    if (it->time_h == t_h) return {it->temperature, it->humidity};
    const auto& b = *it;
    const auto& a = *(it - 1);
    const double w = (t_h - a.time_h) / (b.time_h - a.time_h);
    return {a.temperature + w * (b.temperature - a.temperature),
            a.humidity + w * (b.humidity - a.humidity)};
}

ClimateSeries synthetic_climate(const SyntheticClimateSpec& spec)
{
    if (!(spec.days > 0.0) || !(spec.step_h > 0.0)) {
        throw InputError("synthetic climate needs positive duration and step");
    }
    const double total = spec.days * 24.0;
    const auto n = static_cast<std::size_t>(std::llround(total / spec.step_h));
    if (std::abs(static_cast<double>(n) * spec.step_h - total) > 1e-9 * total) {
        throw InputError("synthetic climate duration must be a multiple of the step");
    }
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    constexpr double two_pi = 2.0 * std::numbers::pi;

    ClimateSeries out;
    out.extension = ClimateExtension::periodic;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * spec.step_h;
        const double annual = std::cos(two_pi * t / total);
        const double daily = std::cos(two_pi * (t - 15.0) / 24.0);
        const double temp = spec.mean_temperature - spec.annual_temperature_amplitude * annual +
                            spec.daily_temperature_amplitude * daily +
                            spec.temperature_noise * noise(rng);
        double phi = spec.mean_humidity + spec.annual_humidity_amplitude * annual -
                     spec.daily_humidity_amplitude * daily + spec.humidity_noise * noise(rng);
        phi = std::clamp(phi, 0.05, 0.99);
        out.samples.push_back({t, temp, phi});
    }
    ClimateSample last = out.samples.front();
    last.time_h = total;
    out.samples.push_back(last);
    return out;
}

} // namespace mfe2
