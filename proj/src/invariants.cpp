#include "tivp/invariants.hpp"

#include <cmath>

namespace tivp {

namespace {

void require_unit(const Vec3& a) {
  if (std::abs(norm(a) - 1.0) > 1e-12)
    throw InvalidDeformationError("fiber vector must be a unit vector");
}

Tensor4 projection_free(const Vec3& a) {
  const Tensor2 I = Tensor2::identity();
  const Tensor2 A = dyad(a, a);
  Tensor4 P = Tensor4::identity();
  P += (-0.5) * outer(I, I);
  P += (-1.5) * outer(A, A);
  P += 0.5 * (outer(A, I) + outer(I, A));
  return P;
}

} // namespace

Tensor4 projection(const Vec3& a_unit) {
  require_unit(a_unit);
  return projection_free(a_unit);
}

InvariantSet compute_invariants(const Tensor2& sigma, const Vec3& a_unit) {
  require_unit(a_unit);
  const InvariantDerivs d = invariant_system(sym(sigma), a_unit);
  return d.inv;
}

InvariantGradients invariant_gradients(const Tensor2& Sigma_sym, const Vec3& a) {
  InvariantGradients out;
  const Tensor2 A = dyad(a, a);
  const Tensor4 P = projection_free(a);
  out.Sp = ddot(P, Sigma_sym);
  const Tensor2& Sp = out.Sp;

  const Tensor2 Sp2 = Sp * Sp;
  out.inv.I2 = ddot(A, Sp2);
  out.inv.I1 = 0.5 * trace(Sp2) - out.inv.I2;
  out.inv.I3 = trace(Sigma_sym) - ddot(A, Sigma_sym);

  const Tensor2 Y = A * Sp + Sp * A;
  out.dI2_dS = ddot(Y, P);
  out.dI1_dS = ddot(Sp - Y, P);

  // Fiber derivatives of I1, I2 (same chain as invariant_system, first order only).
  Tensor3 dA;
  for (int r = 0; r < 3; ++r)
    for (int s = 0; s < 3; ++s) {
      dA(r, s, r) += a[s];
      dA(r, s, s) += a[r];
    }
  const double sa = ddot(A, Sigma_sym);
  const double trS = trace(Sigma_sym);
  const Vec3 w = 2.0 * (Sigma_sym * a);
  const Tensor2 I = Tensor2::identity();
  Tensor3 dSp;
  for (int r = 0; r < 3; ++r)
    for (int s = 0; s < 3; ++s)
      for (int m = 0; m < 3; ++m)
        dSp(r, s, m) = (-1.5 * sa + 0.5 * trS) * dA(r, s, m) +
                       (-1.5 * A(r, s) + 0.5 * I(r, s)) * w[m];
  out.dI2_da = 2.0 * (Sp2 * a) + ddot(Y, dSp);
  out.dI1_da = ddot(Sp, dSp) - out.dI2_da;
  return out;
}

double equivalent_stress(const InvariantSet& inv, double alpha2) {
  const double radicand = 2.0 * (inv.I1 + alpha2 * inv.I2);
  return radicand > 0.0 ? std::sqrt(radicand) : 0.0;
}

InvariantDerivs invariant_system(const Tensor2& Sigma_sym, const Vec3& a) {
  InvariantDerivs out;
  const Tensor2 I = Tensor2::identity();
  const Tensor2 A = dyad(a, a);
  out.P = projection_free(a);
  out.Sp = ddot(out.P, Sigma_sym);
  const Tensor2& Sp = out.Sp;

  // --- invariants
  const Tensor2 Sp2 = Sp * Sp;
  out.inv.I2 = ddot(A, Sp2);                    // a . Sp^2 . a
  out.inv.I1 = 0.5 * trace(Sp2) - out.inv.I2;
  out.inv.I3 = trace(Sigma_sym) - ddot(A, Sigma_sym);

  // --- first derivatives w.r.t. Sigma_sym:
  //   dI2/dSp = A Sp + Sp A,  dI1/dSp = Sp - dI2/dSp,  then chain through P
  //   (left contraction V_ij P_ijkl).
  const Tensor2 Y = A * Sp + Sp * A; // dI2/dSp
  out.dI2_dS = ddot(Y, out.P);
  out.dI1_dS = ddot(Sp - Y, out.P);

  // --- Hessians w.r.t. Sigma_sym:
  //   W2_ijrs = d(dI2/dSp_ij)/dSigma_rs = A_im P_mjrs + P_imrs A_mj
  //   H2_klrs = W2_ijrs P_ijkl,  H1_klrs = (P_ijrs - W2_ijrs) P_ijkl
  const Tensor4 W2 = lr_compose(A, I, out.P) + lr_compose(I, A, out.P);
  out.d2I2_dSdS = transpose_ddot(out.P, W2);
  out.d2I1_dSdS = transpose_ddot(out.P, out.P - W2);

  // --- fiber-vector derivatives. dA_rs/da_m = d_rm a_s + a_r d_sm.
  Tensor3 dA;
  for (int r = 0; r < 3; ++r)
    for (int s = 0; s < 3; ++s) {
      dA(r, s, r) += a[s];
      dA(r, s, s) += a[r];
    }

  // dSp_rs/da_m = dP_rskl/da_m Sigma_kl
  //            = -3/2 [dA_rsm (A:Sigma) + A_rs w_m] + 1/2 [tr(Sigma) dA_rsm + d_rs w_m]
  // with w_m = Sigma_kl dA_klm = 2 (Sigma a)_m for symmetric Sigma.
  const double sa = ddot(A, Sigma_sym);
  const double trS = trace(Sigma_sym);
  const Vec3 w = 2.0 * (Sigma_sym * a);
  Tensor3 dSp;
  for (int r = 0; r < 3; ++r)
    for (int s = 0; s < 3; ++s)
      for (int m = 0; m < 3; ++m)
        dSp(r, s, m) = (-1.5 * sa + 0.5 * trS) * dA(r, s, m) +
                       (-1.5 * A(r, s) + 0.5 * I(r, s)) * w[m];

  // dI2/da_m = 2 (Sp^2 a)_m + (dI2/dSp)_rs dSp_rsm
  // dI1/da_m = Sp_rs dSp_rsm - dI2/da_m
  out.dI2_da = 2.0 * (Sp2 * a) + ddot(Y, dSp);
  out.dI1_da = ddot(Sp, dSp) - out.dI2_da;

  // --- mixed second derivatives d2I/(da_m dSigma_kl).
  // Common piece: V_ij dP_ijkl/da_m contracted over (ij) for V in {dI1/dSp, dI2/dSp}:
  //   V_ij dP_ijkl/da_m = -3/2 [(V:dA)_m A_kl + (V:A) dA_klm]
  //                      + 1/2 [d_kl (V:dA)_m + tr(V) dA_klm]
  const auto chain_dP = [&](const Tensor2& V) {
    const Vec3 VdA = ddot(V, dA);
    const double VA = ddot(V, A);
    const double trV = trace(V);
    Tensor3 T;
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l)
        for (int m = 0; m < 3; ++m)
          T(k, l, m) = (-1.5 * A(k, l) + 0.5 * I(k, l)) * VdA[m] +
                       (-1.5 * VA + 0.5 * trV) * dA(k, l, m);
    return T;
  };

  // d2I2/(da_m dSp_ij) = dA_irm Sp_rj + A_ir dSp_rjm + dSp_irm A_rj + Sp_ir dA_rjm
  Tensor3 dY_da; // derivative of Y = A Sp + Sp A w.r.t. a
  for (int m = 0; m < 3; ++m) {
    Tensor2 dAm, dSpm;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        dAm(i, j) = dA(i, j, m);
        dSpm(i, j) = dSp(i, j, m);
      }
    const Tensor2 slice = dAm * Sp + A * dSpm + dSpm * A + Sp * dAm;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        dY_da(i, j, m) = slice(i, j);
  }

  // d2I2/(da_m dSigma_kl) = (dI2/dSp)_ij dP_ijkl/da_m + dY_ijm P_ijkl
  // d2I1/(da_m dSigma_kl) = (dI1/dSp)_ij dP_ijkl/da_m + (dSp_ijm - dY_ijm) P_ijkl
  const auto contract_P = [&](const Tensor3& T) {
    // result(k,l,m) = T_ijm P_ijkl
    Tensor3 R;
    for (int m = 0; m < 3; ++m) {
      Tensor2 slice;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          slice(i, j) = T(i, j, m);
      const Tensor2 c = ddot(slice, out.P);
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l)
          R(k, l, m) = c(k, l);
    }
    return R;
  };

  out.d2I2_dadS = chain_dP(Y) + contract_P(dY_da);
  out.d2I1_dadS = chain_dP(Sp - Y) + contract_P(dSp + (-1.0) * dY_da);

  return out;
}

Tensor2 plastic_normal(const Tensor2& Sigma_sym, const Vec3& a_unit, double alpha2) {
  require_unit(a_unit);
  const InvariantDerivs d = invariant_system(Sigma_sym, a_unit);
  const double sb = equivalent_stress(d.inv, alpha2);
  if (sb <= 1e-14 * std::max(1.0, norm_inf(Sigma_sym)))
    throw SingularNormalError("plastic normal undefined at zero equivalent stress");
  return (1.0 / sb) * (d.dI1_dS + alpha2 * d.dI2_dS);
}

NormalDerivs second_derivatives(const Tensor2& Sigma_sym, const Vec3& a_unit,
                                double alpha2) {
  require_unit(a_unit);
  const InvariantDerivs d = invariant_system(Sigma_sym, a_unit);
  NormalDerivs out;
  out.sigma_bar = equivalent_stress(d.inv, alpha2);
  if (out.sigma_bar <= 1e-14 * std::max(1.0, norm_inf(Sigma_sym)))
    throw SingularNormalError("normal derivatives undefined at zero equivalent stress");
  const double isb = 1.0 / out.sigma_bar;
  out.Np = isb * (d.dI1_dS + alpha2 * d.dI2_dS);
  out.dNp_dS = isb * (d.d2I1_dSdS + alpha2 * d.d2I2_dSdS - outer(out.Np, out.Np));
  out.dsb_da = isb * (d.dI1_da + alpha2 * d.dI2_da);
  out.dNp_da = d.d2I1_dadS + alpha2 * d.d2I2_dadS;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int m = 0; m < 3; ++m)
        out.dNp_da(i, j, m) = isb * (out.dNp_da(i, j, m) - out.Np(i, j) * out.dsb_da[m]);
  return out;
}

} // namespace tivp
