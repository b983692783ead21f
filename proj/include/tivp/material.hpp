#pragma once

// Multimode transversely isotropic viscoplastic material: per-mode multiplicative
// elastic/plastic kinematics, Eyring-type stress shift factor shared by all modes,
// nested implicit stress update (scalar external Newton on the shift factor wrapping
// per-mode tensor Newton solves for the plastic deformation gradients), and the
// algorithmically consistent tangent d(sigma)/dF of the converged update.
//
// Units are consistent but unspecified; the bundled fixtures use MPa and seconds.

#include <cstddef>
#include <vector>

#include "tivp/errors.hpp"
#include "tivp/hyperelastic.hpp"
#include "tivp/invariants.hpp"
#include "tivp/tensor.hpp"

namespace tivp {

struct PlasticParams {
  double mu_p = 0.0;    // pressure dependency (dimensionless), |mu_p| < 1/sqrt(2)
  double sigma0 = 0.0;  // Eyring characteristic stress, > 0
  double eta0 = 0.0;    // initial viscosity of the slowest mode, > 0
  double alpha2 = 0.0;  // longitudinal-shear weight in the equivalent stress, >= 0
};

struct SpectrumMode {
  double m = 0.0;     // stiffness fraction (dimensionless)
  double eta0 = 0.0;  // initial viscosity of the mode
};

// Relaxation spectrum: stiffness fractions must sum to 1 within 1e-3.
struct RelaxationSpectrum {
  std::vector<SpectrumMode> modes;

  static RelaxationSpectrum single(double eta0) { return {{{1.0, eta0}}}; }
};

struct MaterialParams {
  ElasticConstants elastic;
  PlasticParams plastic;
  RelaxationSpectrum spectrum;
  Vec3 a0{1.0, 0.0, 0.0};  // initial fiber direction, unit

  // Derived per mode by make_material: hyperelastic parameters from
  // {m_i E11, m_i E22, m_i G12, nu21} and the initial viscosities.
  std::vector<HyperelasticParams> mode_hp;
  std::vector<double> mode_eta0;

  std::size_t n_modes() const { return mode_eta0.size(); }
};

// Validates all parameter invariants and precomputes the per-mode data.
// Throws InvalidMaterialError on violation.
MaterialParams make_material(const ElasticConstants& elastic, const PlasticParams& plastic,
                             const RelaxationSpectrum& spectrum, const Vec3& a0);

// Single-mode convenience: spectrum {m = 1, eta0 = plastic.eta0}.
MaterialParams make_material(const ElasticConstants& elastic, const PlasticParams& plastic,
                             const Vec3& a0);

struct ModeState {
  Tensor2 F_p = Tensor2::identity();  // plastic deformation gradient (isochoric)
};

struct MaterialState {
  std::vector<ModeState> modes;
  double a_sigma = 1.0;  // converged stress shift factor (> 0; 1 at zero stress)
  double time = 0.0;
};

MaterialState virgin_state(const MaterialParams& mp);

struct UpdateDiagnostics {
  double sigma_bar = 0.0;  // total equivalent stress at convergence
  double I3 = 0.0;         // total transverse pressure invariant
  double a_sigma = 1.0;
  int external_iters = 0;
  int max_internal_iters = 0;
  double max_plastic_rate = 0.0;  // max over modes of sigma_bar_i / eta_i (1/s)
  std::vector<double> external_residual_history;
};

struct StressUpdateResult {
  Tensor2 sigma;     // total Cauchy stress (sum over modes)
  Tensor4 tangent;   // d(sigma)/dF of the converged update (valid iff has_tangent)
  bool has_tangent = false;
  MaterialState state;  // new state; the input state is never modified
  UpdateDiagnostics diag;
};

// Eyring stress shift factor a_sigma = (x/sinh x) exp(-mu_p I3/sigma0), x = sigma_bar/sigma0.
// Evaluated in the log domain for x > 30 so extreme arguments cannot overflow; the
// result is clamped to >= 1e-300 to keep mode viscosities finite.
double shift_factor(double sigma_bar, double I3, const PlasticParams& p);

// Plastic rate tensor D_p = (sigma_bar_i/eta_i) N_p, evaluated in the smooth polynomial
// form (dI1/dSigma + alpha2 dI2/dSigma)/eta_i which has no zero-stress singularity.
Tensor2 plastic_rate(const Tensor2& Sigma_sym, const Vec3& a_hat, double eta_i, double alpha2);

// Mandel-like stress Sigma = F_e^T sigma F_e^-T (generally nonsymmetric).
Tensor2 mandel_stress(const Tensor2& F_e, const Tensor2& sigma_i);

struct InternalSolveResult {
  Tensor2 F_p;       // converged plastic deformation gradient
  Tensor4 jacobian;  // dR/dF_p at the converged point
  int iters = 0;     // residual evaluations accepted (1 = converged at the start)
  std::vector<double> residual_history;  // inf-norms, including the converged one
};

// Solves the implicit Pade-map residual R = F_p - Pade(dt D_p) F_p_old = 0 for one
// mode at fixed total F and fixed shift factor. Throws StepRejectionError if Newton
// does not converge or the Jacobian is singular.
InternalSolveResult internal_solve(std::size_t mode, const Tensor2& F, const Tensor2& F_p_old,
                                   double a_sigma, double dt, const MaterialParams& mp);

// One full stress update without the consistent tangent (has_tangent = false).
StressUpdateResult external_solve(const Tensor2& F, const MaterialState& state_old, double dt,
                                  const MaterialParams& mp);

// One full stress update including the consistent tangent.
StressUpdateResult update(const Tensor2& F, const MaterialState& state_old, double dt,
                          const MaterialParams& mp);

// Convenience: the tangent of update() alone.
Tensor4 consistent_tangent(const Tensor2& F, const MaterialState& state_old, double dt,
                           const MaterialParams& mp);

}  // namespace tivp
