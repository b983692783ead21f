#pragma once

// Transversely isotropic hyperelastic law (Bonet/Burton family) for a single
// mode, evaluated in the current configuration:
//
//   sigma_iso = mu/Je * (Be - I) + lambda * (Je - 1) * I
//   Je * sigma_trn = 2 beta (xi2 - 1) Be
//                  + 2 [alpha + beta (xi1e - 3) + 2 gamma (xi2 - 1)] a (x) a
//                  - alpha (Be * a(x)a + a(x)a * Be)
//
// with Be = Fe*Fe^T, Je = det Fe, xi1e = tr Be, and xi2 = a.a where a is the
// *unnormalized* current-configuration fiber vector (a = F*a0 pushed through
// the total deformation; its stretch enters xi2 by design).

#include "tivp/tensor.hpp"

namespace tivp {

// Engineering constants of a unidirectional ply, fiber along the local
// 1-axis. Units are carried by context (MPa throughout this project).
struct ElasticConstants {
  double E11 = 0.0;  // fiber-direction Young modulus
  double E22 = 0.0;  // transverse Young modulus
  double G12 = 0.0;  // axial shear modulus
  double nu21 = 0.0; // axial Poisson ratio (transverse contraction per axial strain)
};

struct HyperelasticParams {
  double lambda = 0.0;
  double mu = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
};

// Closed-form conversion
//   n = E22/E11, m = 1 - nu21 - 2 n nu21^2,
//   lambda = E22 (nu21 + n nu21^2) / (m (1 + nu21)),
//   mu     = E22 / (2 (1 + nu21)),
//   alpha  = mu - G12,
//   beta   = E22 nu21^2 (1 - n) / (4 m (1 + nu21)),
//   gamma  = E11 (1 - nu21) / (8 m) - (lambda + 2 mu)/8 + alpha/2 - beta.
// Throws InvalidMaterialError for non-positive moduli or m <= 0.
HyperelasticParams convert_constants(const ElasticConstants& ec);

// Cauchy stress sigma_iso + sigma_trn. Throws InvalidDeformationError when
// det(Fe) <= 0.
Tensor2 cauchy_stress(const Tensor2& Fe, const Vec3& a, const HyperelasticParams& hp);

// Analytic d(sigma)/d(Fe) at fixed fiber vector a.
Tensor4 d_cauchy_dFe(const Tensor2& Fe, const Vec3& a, const HyperelasticParams& hp);

// Analytic d(sigma)/d(a) at fixed Fe; T(i,j,q) = d sigma_ij / d a_q.
Tensor3 d_cauchy_da(const Tensor2& Fe, const Vec3& a, const HyperelasticParams& hp);

} // namespace tivp
