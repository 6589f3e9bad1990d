#pragma once

// Kuenzel hygrothermal material functions for porous building materials.
//
// Temperatures are in degrees Celsius unless a name says otherwise, relative
// humidity is a fraction in [0, 1], water content is in kg/m^3.

#include <cstddef>
#include <string>
#include <vector>

namespace mfe2 {

struct MaterialParams {
    double w_f = 0.0;      // free water saturation [kg/m3]
    double w_80 = 0.0;     // water content at phi = 0.8 [kg/m3]
    double lambda_0 = 0.0; // dry thermal conductivity [W/(m K)]
    double b_tcs = 0.0;    // thermal conductivity supplement [-]
    double rho_s = 0.0;    // bulk density [kg/m3]
    double mu = 0.0;       // vapor diffusion resistance factor [-]
    double A = 0.0;        // water absorption coefficient [kg/(m2 s^0.5)]
    double c_s = 0.0;      // specific heat capacity [J/(kg K)]
    double b = 0.0;        // approximation factor of the sorption curve, derived from w_f and w_80

    // Validates the measured fields and fills in b.
    static MaterialParams from_measured(double w_f, double w_80, double lambda_0, double b_tcs,
                                        double rho_s, double mu, double A, double c_s);

    // Measured brick and mortar data used throughout the masonry examples.
    static MaterialParams brick();
    static MaterialParams mortar();
};

struct PhysicalConstants {
    double p_a = 101325.0; // atmospheric pressure [Pa]
    double R_v = 461.5;    // gas constant of water vapor [J/(kg K)]
    double c_w = 4187.0;   // specific heat of liquid water [J/(kg K)]
    double p = 101325.0;   // ambient total pressure [Pa]
};

// Coefficients of the coupled heat (t) and moisture (f) equations:
//   heat flux     q = -(k_tt grad(theta) + k_tf grad(phi))
//   moisture flux g = -(k_ft grad(theta) + k_ff grad(phi))
//   storage       c_tt dtheta/dt, c_ff dphi/dt
struct CoefficientSet {
    double k_tt = 0.0;
    double k_tf = 0.0;
    double k_ft = 0.0;
    double k_ff = 0.0;
    double c_tt = 0.0;
    double c_ff = 0.0;
};

struct ValueAndSlope {
    double value = 0.0;
    double slope = 0.0;
};

// Solves w(0.8) = w_80 for b. Requires 0 < w_80 < 0.8 w_f, otherwise no b > 1 exists.
double derive_approximation_factor(double w_f, double w_80);

// w and dw/dphi.
ValueAndSlope water_content(const MaterialParams& m, double phi);

// p_sat [Pa] and dp_sat/dtheta [Pa/K]. Valid for theta in (-40, 80) C.
ValueAndSlope saturation_pressure(double theta);

// delta_p [kg/(m s Pa)].
double vapor_permeability(const MaterialParams& m, const PhysicalConstants& c, double theta);

// D_w [m2/s] as a function of water content.
double capillary_transport(const MaterialParams& m, double w);

// D_phi = D_w dw/dphi [kg/(m s)].
double liquid_conduction(const MaterialParams& m, double phi);

// lambda [W/(m K)].
double thermal_conductivity(const MaterialParams& m, double w);

// h_v [J/kg] at absolute temperature theta_abs [K].
double evaporation_enthalpy(double theta_abs);

CoefficientSet transport_coefficients(const MaterialParams& m, const PhysicalConstants& c,
                                      double theta, double phi);

inline constexpr double kCelsiusToKelvin = 273.15;
inline constexpr double kValidityMin = -40.0;
inline constexpr double kValidityMax = 80.0;

// Coefficient provider indexed by mesh phase label. Implementations are pure
// and may be shared across threads.
class MaterialModel {
public:
    virtual ~MaterialModel() = default;
    virtual CoefficientSet coefficients(int phase, double theta, double phi) const = 0;
    virtual std::size_t phase_count() const = 0;
    // True when coefficients do not depend on the state.
    virtual bool is_linear() const { return false; }
};

class KunzelModel final : public MaterialModel {
public:
    explicit KunzelModel(std::vector<MaterialParams> phases, PhysicalConstants constants = {});

    CoefficientSet coefficients(int phase, double theta, double phi) const override;
    std::size_t phase_count() const override { return phases_.size(); }

    const MaterialParams& phase(int id) const;
    const PhysicalConstants& constants() const { return constants_; }

private:
    std::vector<MaterialParams> phases_;
    PhysicalConstants constants_;
};

// State-independent coefficients, for validation problems.
class ConstantModel final : public MaterialModel {
public:
    explicit ConstantModel(std::vector<CoefficientSet> phases);

    CoefficientSet coefficients(int phase, double theta, double phi) const override;
    std::size_t phase_count() const override { return phases_.size(); }
    bool is_linear() const override { return true; }

private:
    std::vector<CoefficientSet> phases_;
};

} // namespace mfe2
