#include "tivp/hyperelastic.hpp"

#include <cmath>

namespace tivp {

HyperelasticParams convert_constants(const ElasticConstants& ec) {
  if (!(ec.E11 > 0.0) || !(ec.E22 > 0.0) || !(ec.G12 > 0.0))
    throw InvalidMaterialError("elastic moduli must be positive");
  const double n = ec.E22 / ec.E11;
  const double m = 1.0 - ec.nu21 - 2.0 * n * ec.nu21 * ec.nu21;
  if (!(m > 0.0))
    throw InvalidMaterialError("elastic constants violate m = 1 - nu21 - 2 n nu21^2 > 0");
  HyperelasticParams hp;
  hp.lambda = ec.E22 * (ec.nu21 + n * ec.nu21 * ec.nu21) / (m * (1.0 + ec.nu21));
  hp.mu = ec.E22 / (2.0 * (1.0 + ec.nu21));
  hp.alpha = hp.mu - ec.G12;
  hp.beta = ec.E22 * ec.nu21 * ec.nu21 * (1.0 - n) / (4.0 * m * (1.0 + ec.nu21));
  hp.gamma = ec.E11 * (1.0 - ec.nu21) / (8.0 * m) - (hp.lambda + 2.0 * hp.mu) / 8.0 +
             0.5 * hp.alpha - hp.beta;
  return hp;
}

namespace {

struct Kinematics {
  Tensor2 Be;
  double Je = 0.0;
  double xi1e = 0.0;
  double xi2 = 0.0;
  Tensor2 A;       // a (x) a
  double coef = 0.0; // 2 [alpha + beta (xi1e - 3) + 2 gamma (xi2 - 1)]
};

Kinematics kinematics(const Tensor2& Fe, const Vec3& a, const HyperelasticParams& hp) {
  Kinematics k;
  k.Je = det(Fe);
  if (!(k.Je > 0.0))
    throw InvalidDeformationError("elastic deformation gradient has non-positive determinant");
  k.Be = Fe * transpose(Fe);
  k.xi1e = trace(k.Be);
  k.xi2 = dot(a, a);
  k.A = dyad(a, a);
  k.coef = 2.0 * (hp.alpha + hp.beta * (k.xi1e - 3.0) + 2.0 * hp.gamma * (k.xi2 - 1.0));
  return k;
}

} // namespace

Tensor2 cauchy_stress(const Tensor2& Fe, const Vec3& a, const HyperelasticParams& hp) {
  const Kinematics k = kinematics(Fe, a, hp);
  const Tensor2 I = Tensor2::identity();

  Tensor2 sigma = (hp.mu / k.Je) * (k.Be - I) + (hp.lambda * (k.Je - 1.0)) * I;

  Tensor2 trn = (2.0 * hp.beta * (k.xi2 - 1.0)) * k.Be + k.coef * k.A -
                hp.alpha * (k.Be * k.A + k.A * k.Be);
  sigma += (1.0 / k.Je) * trn;
  return sigma;
}

Tensor4 d_cauchy_dFe(const Tensor2& Fe, const Vec3& a, const HyperelasticParams& hp) {
  const Kinematics k = kinematics(Fe, a, hp);
  const Tensor2 I = Tensor2::identity();
  const Tensor2 FeinvT = transpose(inv(Fe));

  // dBe_ij/dFe_kl = Fe_jl d_ik + Fe_il d_jk
  Tensor4 dBe;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int l = 0; l < 3; ++l) {
        dBe(i, j, i, l) += Fe(j, l);
        dBe(i, j, j, l) += Fe(i, l);
      }

  // Isotropic block: mu/Je (dBe - (Be - I) (x) Fe^-T) + lambda Je I (x) Fe^-T
  Tensor4 K = (hp.mu / k.Je) * (dBe - outer(k.Be - I, FeinvT));
  K += (hp.lambda * k.Je) * outer(I, FeinvT);

  // Transverse block: 1/Je (Phi1 + Phi2 + Phi3) - sigma_trn (x) Fe^-T
  const Tensor2 trn_scaled = (2.0 * hp.beta * (k.xi2 - 1.0)) * k.Be + k.coef * k.A -
                             hp.alpha * (k.Be * k.A + k.A * k.Be);
  Tensor4 phi = (2.0 * hp.beta * (k.xi2 - 1.0)) * dBe; // Phi1
  phi += (4.0 * hp.beta) * outer(k.A, Fe);             // Phi2 (from d xi1e/dFe = 2 Fe)
  // Phi3 = -alpha (dBe_im A_mj + A_im dBe_jm) in index form; use the closed
  // form of dBe to avoid an 81x9 contraction:
  //   dBe_im/dFe_kl A_mj = (Fe_ml d_ik + Fe_il d_mk) A_mj
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int m = 0; m < 3; ++m)
        for (int l = 0; l < 3; ++l) {
          // left term of Phi3
          phi(i, j, i, l) -= hp.alpha * Fe(m, l) * k.A(m, j);
          phi(i, j, m, l) -= hp.alpha * Fe(i, l) * k.A(m, j);
          // right term of Phi3 (A_im dBe_mj/dFe_kl)
          phi(i, j, j, l) -= hp.alpha * k.A(i, m) * Fe(m, l);
          phi(i, j, m, l) -= hp.alpha * k.A(i, m) * Fe(j, l);
        }
  K += (1.0 / k.Je) * (phi - outer(trn_scaled, FeinvT));
  return K;
}

Tensor3 d_cauchy_da(const Tensor2& Fe, const Vec3& a, const HyperelasticParams& hp) {
  const Kinematics k = kinematics(Fe, a, hp);

  // dA_ij/da_q = d_iq a_j + a_i d_jq
  Tensor3 dA;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      dA(i, j, i) += a[j];
      dA(i, j, j) += a[i];
    }

  // Lambda1 = 4 beta Be (x) a, Lambda3 = 8 gamma A (x) a
  Tensor3 T;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int q = 0; q < 3; ++q)
        T(i, j, q) = (4.0 * hp.beta * k.Be(i, j) + 8.0 * hp.gamma * k.A(i, j)) * a[q];

  // Lambda2 = coef * dA/da
  T = T + k.coef * dA;

  // Lambda4 = -alpha (Be . dA/da + dA/da . Be), slicewise in q
  for (int q = 0; q < 3; ++q) {
    Tensor2 dAq;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        dAq(i, j) = dA(i, j, q);
    const Tensor2 L4 = k.Be * dAq + dAq * k.Be;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        T(i, j, q) -= hp.alpha * L4(i, j);
  }
  return (1.0 / k.Je) * T;
}

} // namespace tivp
