#include "mfe2/constitutive.hpp"

#include <cmath>
#include <sstream>

#include "mfe2/error.hpp"

namespace mfe2 {

namespace {

void require_phi(double phi)
{
    if (!(phi >= 0.0 && phi <= 1.0)) {
        std::ostringstream os;
        os << "relative humidity " << phi << " outside [0, 1]";
        throw InputError(os.str());
    }
}

void require_window(double theta)
{
    if (!(theta > kValidityMin && theta < kValidityMax)) {
        std::ostringstream os;
        os << "temperature " << theta << " C outside the model validity window (" << kValidityMin
           << ", " << kValidityMax << ")";
        throw InputError(os.str());
    }
}

} // namespace

double derive_approximation_factor(double w_f, double w_80)
{
    if (!(w_f > 0.0 && w_80 > 0.0)) {
        throw InputError("w_f and w_80 must be positive");
    }
    // w(0.8) = w_f (b-1) 0.8 / (b-0.8) is increasing in b and tends to 0.8 w_f
    // as b -> infinity, so a root with b > 1 exists only below that limit.
    const double limit = 0.8 * w_f;
    if (!(w_80 < limit)) {
        std::ostringstream os;
        os << "w_80 = " << w_80 << " must be below 0.8 w_f = " << limit
           << " for an approximation factor b > 1 to exist";
        throw InputError(os.str());
    }
    return 0.8 * (w_f - w_80) / (limit - w_80);
}

MaterialParams MaterialParams::from_measured(double w_f, double w_80, double lambda_0, double b_tcs,
                                             double rho_s, double mu, double A, double c_s)
{
    const double fields[] = {w_f, w_80, lambda_0, b_tcs, rho_s, mu, A, c_s};
    const char* names[] = {"w_f", "w_80", "lambda_0", "b_tcs", "rho_s", "mu", "A", "c_s"};
    for (int i = 0; i < 8; ++i) {
        if (!(fields[i] > 0.0) || !std::isfinite(fields[i])) {
            throw InputError(std::string("material parameter ") + names[i] + " must be positive");
        }
    }
    MaterialParams m{w_f, w_80, lambda_0, b_tcs, rho_s, mu, A, c_s, 0.0};
    m.b = derive_approximation_factor(w_f, w_80);
    return m;
}

MaterialParams MaterialParams::brick()
{
    return from_measured(229.30, 141.68, 0.25, 10.0, 1690.0, 16.80, 0.51, 840.0);
}

MaterialParams MaterialParams::mortar()
{
    return from_measured(160.00, 22.72, 0.45, 9.0, 1670.0, 9.63, 0.82, 1000.0);
}

ValueAndSlope water_content(const MaterialParams& m, double phi)
{
    require_phi(phi);
    const double b = m.b;
    const double denom = b - phi;
    return {m.w_f * (b - 1.0) * phi / denom, m.w_f * (b - 1.0) * b / (denom * denom)};
}

ValueAndSlope saturation_pressure(double theta)
{
    require_window(theta);
    const double a = theta < 0.0 ? 22.44 : 17.08;
    const double theta_0 = theta < 0.0 ? 272.44 : 234.18;
    const double s = theta_0 + theta;
    const double p = 611.0 * std::exp(a * theta / s);
    return {p, p * a * theta_0 / (s * s)};
}

double vapor_permeability(const MaterialParams& m, const PhysicalConstants& c, double theta)
{
    const double T = theta + kCelsiusToKelvin;
    if (!(T > 0.0)) {
        throw InputError("temperature below absolute zero");
    }
    const double delta =
        2.306e-5 * c.p_a / (c.R_v * T * c.p) * std::pow(T / kCelsiusToKelvin, 1.81);
    return delta / m.mu;
}

double capillary_transport(const MaterialParams& m, double w)
{
    const double r = m.A / m.w_f;
    return 3.8 * r * r * std::pow(1000.0, w / m.w_f - 1.0);
}

double liquid_conduction(const MaterialParams& m, double phi)
{
    const auto w = water_content(m, phi);
    return capillary_transport(m, w.value) * w.slope;
}

double thermal_conductivity(const MaterialParams& m, double w)
{
    if (!(w >= 0.0)) {
        throw InputError("negative water content");
    }
    return m.lambda_0 * (1.0 + m.b_tcs * w / m.rho_s);
}

double evaporation_enthalpy(double theta_abs)
{
    if (!(theta_abs > 0.0)) {
        throw InputError("absolute temperature must be positive");
    }
    return 2.5008e6 * std::pow(kCelsiusToKelvin / theta_abs, 0.167 + 3.67e-4 * theta_abs);
}

CoefficientSet transport_coefficients(const MaterialParams& m, const PhysicalConstants& c,
                                      double theta, double phi)
{
    require_window(theta);
    require_phi(phi);
    const auto w = water_content(m, phi);
    const auto ps = saturation_pressure(theta);
    const double delta_p = vapor_permeability(m, c, theta);
    const double h_v = evaporation_enthalpy(theta + kCelsiusToKelvin);
    const double d_phi = capillary_transport(m, w.value) * w.slope;

    CoefficientSet k;
    k.k_ft = delta_p * phi * ps.slope;
    k.k_tt = thermal_conductivity(m, w.value) + h_v * k.k_ft;
    k.k_tf = h_v * delta_p * ps.value;
    k.k_ff = d_phi + delta_p * ps.value;
    k.c_tt = m.rho_s * m.c_s + c.c_w * w.value;
    k.c_ff = w.slope;
    return k;
}

KunzelModel::KunzelModel(std::vector<MaterialParams> phases, PhysicalConstants constants)
    : phases_(std::move(phases)), constants_(constants)
{
    for (auto& p : phases_) {
        if (!(p.b > 1.0)) {
            p = MaterialParams::from_measured(p.w_f, p.w_80, p.lambda_0, p.b_tcs, p.rho_s, p.mu, p.A,
                                              p.c_s);
        }
    }
}

const MaterialParams& KunzelModel::phase(int id) const
{
    if (id < 0 || static_cast<std::size_t>(id) >= phases_.size()) {
        throw InputError("unknown phase label " + std::to_string(id));
    }
    return phases_[static_cast<std::size_t>(id)];
}

CoefficientSet KunzelModel::coefficients(int phase_id, double theta, double phi) const
{
    return transport_coefficients(phase(phase_id), constants_, theta, phi);
}

ConstantModel::ConstantModel(std::vector<CoefficientSet> phases) : phases_(std::move(phases)) {}

CoefficientSet ConstantModel::coefficients(int phase, double, double) const
{
    if (phase < 0 || static_cast<std::size_t>(phase) >= phases_.size()) {
        throw InputError("unknown phase label " + std::to_string(phase));
    }
    return phases_[static_cast<std::size_t>(phase)];
}

} // namespace mfe2
