#pragma once

// Exterior climate time series: CSV ingestion, interpolation and a synthetic
// annual generator.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mfe2 {

enum class ClimateExtension { periodic, clamp };

ClimateExtension climate_extension_from_string(const std::string& s);
const char* to_string(ClimateExtension e);

struct ClimateSample {
    double time_h = 0.0;
    double temperature = 0.0; // [C]
    double humidity = 0.0;    // [-]
};

struct ClimateSeries {
    std::vector<ClimateSample> samples;
    ClimateExtension extension = ClimateExtension::periodic;

    double start() const { return samples.front().time_h; }
    double end() const { return samples.back().time_h; }
    // Throws InputError on empty series, non-increasing times or humidity outside [0, 1].
    void validate() const;
};

// Rows "time_h,temperature_C,relative_humidity" after a one-line header.
// Errors name the offending line of the source.
ClimateSeries parse_climate_series(std::istream& is, const std::string& source = "climate");
ClimateSeries load_climate_series(const std::string& path,
                                  ClimateExtension extension = ClimateExtension::periodic);
void write_climate_series(std::ostream& os, const ClimateSeries& series);

struct ClimateValue {
    double temperature = 0.0;
    double humidity = 0.0;
};

// Linear interpolation; before the first sample the first value, after the
// last sample periodic wrap over the series span or the last value.
ClimateValue sample_climate(const ClimateSeries& series, double t_h);

// Annual and daily sinusoids plus Gaussian noise from a seeded generator.
struct SyntheticClimateSpec {
    double days = 365.0;
    double step_h = 1.0;
    double mean_temperature = 10.0;
    double annual_temperature_amplitude = 10.0; // coldest around the start
    double daily_temperature_amplitude = 4.0;   // warmest at 15:00
    double mean_humidity = 0.75;
    double annual_humidity_amplitude = 0.1;     // wettest around the start
    double daily_humidity_amplitude = 0.08;     // driest at 15:00
    double temperature_noise = 0.5;             // standard deviation [K]
    double humidity_noise = 0.02;
    std::uint64_t seed = 1;
};

// Samples at 0, step_h, ..., days*24; the last sample repeats the first so
// the periodic extension is continuous. Humidity is clipped to [0.05, 0.99].
ClimateSeries synthetic_climate(const SyntheticClimateSpec& spec);

} // namespace mfe2
