#pragma once

// Transversely isotropic stress invariants driving plastic flow, the
// plasticity-inducing projection P, and all first/second derivatives needed
// by the implicit stress update and the consistent tangent.
//
// With the unit fiber vector a and structural tensor A = a (x) a:
//
//   P = I4 - 1/2 I(x)I - 3/2 A(x)A + 1/2 (A(x)I + I(x)A)
//   Sp = P : Sigma          (plasticity-inducing stress, traceless, a.Sp.a = 0)
//   I1 = 1/2 tr(Sp^2) - I2
//   I2 = a . Sp^2 . a
//   I3 = tr(Sigma) - a . Sigma . a
//   sigma_bar = sqrt(2 (I1 + alpha2 I2))
//
// In the fiber frame (e1 along a): I1 = 1/4 (s22 - s33)^2 + s23^2,
// I2 = s12^2 + s13^2, I3 = s22 + s33.
//
// Derivative blocks treat the fiber vector as a free 3-vector (A = a (x) a
// literally), matching dA_rs/da_m = d_rm a_s + a_r d_sm.

#include "tivp/tensor.hpp"

namespace tivp {

struct InvariantSet {
  double I1 = 0.0; // stress^2 units
  double I2 = 0.0; // stress^2 units
  double I3 = 0.0; // stress units
};

// P for a unit fiber vector; throws InvalidDeformationError when
// | ||a|| - 1 | > 1e-12.
Tensor4 projection(const Vec3& a_unit);

// Invariants of a symmetric stress; same unit-fiber precondition.
InvariantSet compute_invariants(const Tensor2& sigma, const Vec3& a_unit);

// sigma_bar = sqrt(2 (I1 + alpha2 I2)); a negative radicand (possible only
// through rounding) is clamped to zero.
double equivalent_stress(const InvariantSet& inv, double alpha2);

// N_p = (1/sigma_bar) [dI1/dS + alpha2 dI2/dS]. Throws SingularNormalError
// when sigma_bar vanishes (direction undefined; flow rate is zero there).
Tensor2 plastic_normal(const Tensor2& Sigma_sym, const Vec3& a_unit, double alpha2);

// All invariant derivative blocks, which are smooth polynomials in (Sigma, a)
// — unlike the normal itself, they carry no 1/sigma_bar singularity.
// Layouts: gradients d*_dS are Tensor2 (kl); Hessians d2*_dSdS are Tensor4
// with (k,l) the gradient index and (r,s) the differentiation index;
// mixed blocks d2*_dadS are Tensor3 (k,l,m) with m the fiber component.
struct InvariantDerivs {
  InvariantSet inv;
  Tensor4 P;
  Tensor2 Sp;
  Tensor2 dI1_dS, dI2_dS;
  Tensor4 d2I1_dSdS, d2I2_dSdS;
  Vec3 dI1_da, dI2_da;
  Tensor3 d2I1_dadS, d2I2_dadS;
};

// The fiber vector is treated as free here (no unit-norm precondition) so the
// blocks can be differentiated/validated off the unit sphere.
InvariantDerivs invariant_system(const Tensor2& Sigma_sym, const Vec3& a);

// Invariants plus first derivatives only — the cheap subset needed for
// residual evaluations inside Newton loops.
struct InvariantGradients {
  InvariantSet inv;
  Tensor2 Sp;
  Tensor2 dI1_dS, dI2_dS;
  Vec3 dI1_da, dI2_da;
};

InvariantGradients invariant_gradients(const Tensor2& Sigma_sym, const Vec3& a);

// Spec of the normal's derivatives (Appendix blocks):
//   dNp_dS_ijkl = (1/sigma_bar) (d2I1 + alpha2 d2I2 - Np (x) Np)_ijkl
//   dsb_da_m    = (1/sigma_bar) (dI1_da + alpha2 dI2_da)_m
//   dNp_da_ijm  = (1/sigma_bar) (d2I1_dadS + alpha2 d2I2_dadS - Np_ij dsb_da_m)
// Throws SingularNormalError when sigma_bar vanishes.
struct NormalDerivs {
  Tensor2 Np;
  double sigma_bar = 0.0;
  Tensor4 dNp_dS;
  Vec3 dsb_da;
  Tensor3 dNp_da;
};

NormalDerivs second_derivatives(const Tensor2& Sigma_sym, const Vec3& a_unit,
                                double alpha2);

} // namespace tivp
