#include "tivp/material.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <utility>
#include <vector>

namespace tivp {

namespace {

// The internal Newton keeps polishing to kInternalTolSoft so that the converged
// F_p(F) is smooth to rounding (iteration-count switches would otherwise inject
// O(tol) jumps into finite differences of the update). A solve that stagnates at
// its rounding floor is still accepted provided it reached kInternalTolHard.
constexpr double kInternalTolSoft = 1e-14;  // on ||R||_inf relative to max(1, ||F_p||_inf)
constexpr double kInternalTolHard = 1e-10;
constexpr double kExternalTol = 1e-12;  // on |R_a| relative to max(a_sigma, g)
constexpr int kMaxIters = 50;
// The scalar shift-factor iteration may need a long bracketing descent when a
// step crosses the yield knee, where a_sigma drops by many decades.
constexpr int kMaxExternalIters = 200;

// A mode whose viscous sensitivity dt/eta_i falls below this contributes plastic
// increments and tangent couplings below double rounding at any realistic stress
// scale, so its plastic state is left untouched ("frozen"). With moduli up to
// ~1e6 stress units the induced relative error is < 1e-16.
constexpr double kFrozenSensitivity = 1e-22;

// ln(x / sinh x) for x >= 0, stable across the whole range.
double log_sinh_ratio(double x) {
  if (x < 1e-4) {
    const double x2 = x * x;
    return std::log1p(-x2 / 6.0 + 7.0 * x2 * x2 / 360.0);
  }
  if (x <= 30.0) return std::log(x / std::sinh(x));
  // x/sinh x = 2x e^-x / (1 - e^-2x)
  return std::log(2.0 * x) - x - std::log1p(-std::exp(-2.0 * x));
}

// d/dx ln(x / sinh x) = 1/x - coth x.
double inv_x_minus_coth(double x) {
  if (x < 1e-4) return -x / 3.0 + x * x * x / 45.0;
  if (x <= 30.0) return 1.0 / x - std::cosh(x) / std::sinh(x);
  return 1.0 / x - 1.0 - 2.0 * std::exp(-2.0 * x);
}

// (d a_sigma / d sigma_bar) / sigma_bar = g (1/x - coth x) / (sigma0^2 x); the
// x -> 0 limit is -g/(3 sigma0^2), so the plastic normal never has to be formed.
double shift_qcoef(double g, double x, double sigma0) {
  if (x < 1e-4) return g * (-1.0 / 3.0 + x * x / 45.0) / (sigma0 * sigma0);
  return g * inv_x_minus_coth(x) / (sigma0 * sigma0 * x);
}

// Everything internal Newton needs about one mode at one trial F_p.
struct ModeContext {
  const Tensor2& F;
  const Tensor2& F_inv;
  const Vec3& a_vec;  // F a0 (unnormalized current fiber)
  const Vec3& a0;
  const HyperelasticParams& hp;
  const Tensor2& F_p_old;
  double eta;  // eta0_i * a_sigma
  double alpha2;
  double dt;
};

struct ResidualEval {
  Tensor2 R;
  Tensor2 F_p_inv, F_e, F_e_inv, sigma, Sigma, Ss;
  Vec3 a_hat{};
  double wn = 0.0;  // ||F_p a0||
  Tensor2 D;        // plastic rate
  Tensor2 Z_inv, Pi;
  InvariantGradients grads;
};

ResidualEval eval_residual(const ModeContext& c, const Tensor2& F_p) {
  ResidualEval ev;
  ev.F_p_inv = inv(F_p);
  ev.F_e = c.F * ev.F_p_inv;
  ev.sigma = cauchy_stress(ev.F_e, c.a_vec, c.hp);
  ev.F_e_inv = F_p * c.F_inv;
  ev.Sigma = transpose(ev.F_e) * ev.sigma * transpose(ev.F_e_inv);
  ev.Ss = sym(ev.Sigma);
  const Vec3 w = F_p * c.a0;
  ev.wn = norm(w);
  if (!(ev.wn > 0.0)) throw InvalidDeformationError("plastic fiber image is degenerate");
  ev.a_hat = (1.0 / ev.wn) * w;
  ev.grads = invariant_gradients(ev.Ss, ev.a_hat);
  ev.D = (1.0 / c.eta) * (ev.grads.dI1_dS + c.alpha2 * ev.grads.dI2_dS);
  const Tensor2 I = Tensor2::identity();
  const Tensor2 Z = I - (0.5 * c.dt) * ev.D;
  ev.Z_inv = inv(Z);
  ev.Pi = ev.Z_inv * (I + (0.5 * c.dt) * ev.D);
  ev.R = F_p - ev.Pi * c.F_p_old;
  return ev;
}

struct JacobianPack {
  Tensor4 G;   // d(Pi F_p_old)/dD
  Tensor4 Hc;  // d2I1/dS2 + alpha2 d2I2/dS2 at (Ss, a_hat)
  Tensor4 J;   // dR/dF_p
  Tensor4 A4;  // d sigma/dF_e
  Tensor4 Ke;  // d Sigma/dF_e (Mandel chain, including the explicit F_e factors)
  std::optional<LU9> lu;
};

JacobianPack assemble_jacobian(const ModeContext& c, const ResidualEval& ev) {
  JacobianPack jp;
  const Tensor2 I = Tensor2::identity();

  const InvariantDerivs sys = invariant_system(ev.Ss, ev.a_hat);
  jp.Hc = sys.d2I1_dSdS + c.alpha2 * sys.d2I2_dSdS;
  const Tensor3 Tc = sys.d2I1_dadS + c.alpha2 * sys.d2I2_dadS;

  jp.A4 = d_cauchy_dFe(ev.F_e, c.a_vec, c.hp);
  const Tensor2 FeT = transpose(ev.F_e);
  const Tensor2 FeinvT = transpose(ev.F_e_inv);
  jp.Ke = lt_map(I, ev.sigma * FeinvT) + lr_compose(FeT, FeinvT, jp.A4) - lt_map(ev.Sigma, FeinvT);

  // dD/dF_p at fixed F, a_sigma: Mandel-stress chain (dF_e = -F_e dF_p F_p^-1)
  // plus the plastic fiber direction chain a_hat = F_p a0 / ||F_p a0||.
  const Tensor4 dSs_dFp = sym1(compose_lr(jp.Ke, -1.0 * ev.F_e, ev.F_p_inv));
  Tensor4 dD_dFp = ddot(jp.Hc, dSs_dFp);
  Tensor2 M;
  for (int q = 0; q < 3; ++q)
    for (int m = 0; m < 3; ++m)
      M(q, m) = ((q == m ? 1.0 : 0.0) - ev.a_hat[q] * ev.a_hat[m]) / ev.wn;
  dD_dFp += t3_outer(t3_mul(Tc, M), c.a0);
  dD_dFp = (1.0 / c.eta) * dD_dFp;

  const Tensor2 W = (ev.Pi + I) * c.F_p_old;
  jp.G = lr_map((0.5 * c.dt) * ev.Z_inv, W);
  jp.J = Tensor4::identity() - ddot(jp.G, dD_dFp);
  try {
    jp.lu.emplace(jp.J);
  } catch (const SingularMatrixError&) {
    throw StepRejectionError("internal Jacobian is singular");
  }
  return jp;
}

// Converged per-mode data retained for the external slope and the tangent.
struct ModeWork {
  Tensor2 F_p, F_p_inv, F_e, F_e_inv, sigma, D;
  Vec3 a_hat{};
  double eta = 0.0;
  double sigma_bar_mode = 0.0;
  Tensor4 G, Hc, J, A4, Ke;
  std::optional<LU9> lu;
  bool frozen = true;
  bool frozen_cached = false;
  int iters = 0;
};

void solve_mode(const ModeContext& c, const Tensor2& F_p_start, ModeWork& w,
                std::vector<double>* history) {
  Tensor2 F_p = F_p_start;
  ResidualEval ev;
  try {
    ev = eval_residual(c, F_p);
  } catch (const Error&) {
    throw StepRejectionError("internal residual is undefined at the starting point");
  }
  double rnorm = norm_inf(ev.R);
  if (history) history->push_back(rnorm);
  int iters = 1;
  double r_checkpoint = rnorm;  // progress watchdog (see below)
  while (rnorm > kInternalTolSoft * std::max(1.0, norm_inf(F_p))) {
    const bool good_enough = rnorm <= kInternalTolHard * std::max(1.0, norm_inf(F_p));
    if (iters > kMaxIters) {
      if (good_enough) break;
      throw StepRejectionError("internal Newton did not converge");
    }
    // Far outside the basin of attraction (e.g. the Cayley map saturates for
    // dt*D >> 1) the damped iteration creeps instead of contracting; abandon
    // the attempt cheaply so the caller can retreat the shift factor.
    if (iters % 8 == 0) {
      if (!good_enough && rnorm > 0.3 * r_checkpoint)
        throw StepRejectionError("internal Newton is stalling");
      r_checkpoint = rnorm;
    }
    const JacobianPack jp = assemble_jacobian(c, ev);
    const Tensor2 delta = jp.lu->solve(-1.0 * ev.R);
    bool accepted = false;
    double s = 1.0;
    for (int ls = 0; ls < 20 && !accepted; ++ls) {
      const Tensor2 trial = F_p + s * delta;
      try {
        ResidualEval evt = eval_residual(c, trial);
        const double rt = norm_inf(evt.R);
        if (rt < rnorm) {
          F_p = trial;
          ev = std::move(evt);
          rnorm = rt;
          accepted = true;
        }
      } catch (const Error&) {
        // invalid trial (non-invertible F_p or det F_e <= 0): shorten the step
      }
      if (!accepted) s *= 0.5;
    }
    if (!accepted) {
      // No direction of decrease left: the iterate sits at a rounding floor.
      // Near a fold of the one-step map the residual evaluation is poorly
      // conditioned, so the floor can sit above the hard tolerance even though
      // the Newton correction itself is negligible; judge convergence by the
      // step size in that case.
      const double scale = std::max(1.0, norm_inf(F_p));
      if (good_enough) break;
      if (rnorm <= 1e-7 * scale && norm_inf(delta) <= 1e-9 * scale) break;
      throw StepRejectionError("internal line search failed");
    }
    ++iters;
    if (history) history->push_back(rnorm);
  }

  // Jacobian at the converged point: needed by the external scheme and the tangent.
  JacobianPack jp = assemble_jacobian(c, ev);
  w.F_p = F_p;
  w.F_p_inv = ev.F_p_inv;
  w.F_e = ev.F_e;
  w.F_e_inv = ev.F_e_inv;
  w.sigma = ev.sigma;
  w.D = ev.D;
  w.a_hat = ev.a_hat;
  w.eta = c.eta;
  const double q = 2.0 * (ev.grads.inv.I1 + c.alpha2 * ev.grads.inv.I2);
  w.sigma_bar_mode = q > 0.0 ? std::sqrt(q) : 0.0;
  w.G = jp.G;
  w.Hc = jp.Hc;
  w.J = jp.J;
  w.A4 = jp.A4;
  w.Ke = jp.Ke;
  w.lu = std::move(jp.lu);
  w.frozen = false;
  w.frozen_cached = false;
  w.iters = iters;
}

void freeze_mode(const ModeContext& c, ModeWork& w) {
  w.F_p = c.F_p_old;
  w.F_p_inv = inv(w.F_p);
  w.F_e = c.F * w.F_p_inv;
  w.F_e_inv = w.F_p * c.F_inv;
  w.sigma = cauchy_stress(w.F_e, c.a_vec, c.hp);
  w.D = Tensor2::zero();
  const Vec3 wv = w.F_p * c.a0;
  const double wn = norm(wv);
  if (!(wn > 0.0)) throw InvalidDeformationError("plastic fiber image is degenerate");
  w.a_hat = (1.0 / wn) * wv;
  w.eta = c.eta;
  w.lu.reset();
  w.frozen = true;
  w.iters = 0;
}

// dF_p/da_sigma of one converged mode via its internal Jacobian:
// dR/da_sigma = (1/a_sigma) G : D because dD/da_sigma = -D/a_sigma.
Tensor2 mode_da_sensitivity(const ModeWork& w, double a_sigma) {
  const Tensor2 dR_da = (1.0 / a_sigma) * ddot(w.G, w.D);
  return w.lu->solve(-1.0 * dR_da);
}

struct ExternalResult {
  double a_sigma = 1.0;
  Tensor2 sigma_tot;
  InvariantGradients grads_tot;  // at (sym sigma_tot, abar)
  double g = 1.0;                // shift factor at convergence
  double x = 0.0;                // sigma_bar/sigma0
  double qcoef = 0.0;            // (dg/d sigma_bar)/sigma_bar
  double gI3 = 0.0;              // dg/dI3
  Vec3 a_vec{}, abar{};
  double an = 0.0;  // ||F a0||
  UpdateDiagnostics diag;
};

void external_core(const Tensor2& F, const MaterialState& s0, double dt,
                   const MaterialParams& mp, std::vector<ModeWork>& works, ExternalResult& ex) {
  const std::size_t n = mp.n_modes();
  if (n == 0) throw InvalidMaterialError("material has no modes (use make_material)");
  if (s0.modes.size() != n) throw InvalidMaterialError("state/parameter mode count mismatch");
  if (!(det(F) > 0.0)) throw InvalidDeformationError("det F must be positive");
  if (!(dt >= 0.0)) throw InvalidMaterialError("time increment must be nonnegative");
  if (!(s0.a_sigma > 0.0)) throw InvalidMaterialError("state shift factor must be positive");

  const Tensor2 F_inv = inv(F);
  ex.a_vec = F * mp.a0;
  ex.an = norm(ex.a_vec);
  if (!(ex.an > 0.0)) throw InvalidDeformationError("fiber image is degenerate");
  ex.abar = (1.0 / ex.an) * ex.a_vec;
  const Tensor2 Abar = dyad(ex.abar, ex.abar);
  const Tensor2 I = Tensor2::identity();
  const double alpha2 = mp.plastic.alpha2;

  works.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    works[i].F_p = s0.modes[i].F_p;
    works[i].frozen_cached = false;
  }

  double a_sigma = s0.a_sigma;
  ex.diag = UpdateDiagnostics{};
  ex.diag.external_residual_history.reserve(8);

  // Solves every mode at the given shift factor; throws if any implicit mode
  // problem is unsolvable at that viscosity.
  auto solve_modes_at = [&](double a) {
    Tensor2 st = Tensor2::zero();
    for (std::size_t i = 0; i < n; ++i) {
      ModeWork& w = works[i];
      const double eta = mp.mode_eta0[i] * a;
      const ModeContext c{F,   F_inv, ex.a_vec, mp.a0, mp.mode_hp[i], s0.modes[i].F_p,
                          eta, alpha2, dt};
      if (dt <= kFrozenSensitivity * eta) {
        if (!w.frozen_cached) {
          freeze_mode(c, w);
          w.frozen_cached = true;
        }
        w.eta = eta;
        w.frozen = true;
      } else {
        solve_mode(c, w.F_p, w, nullptr);
        ex.diag.max_internal_iters = std::max(ex.diag.max_internal_iters, w.iters);
      }
      st += w.sigma;
    }
    return st;
  };

  // The incoming shift factor may be too stiff for the newly advanced total
  // deformation (typical after a strain increment from a flowing state). The
  // problem always becomes solvable toward larger a (the frozen limit), so
  // retreat upward until the modes converge; the scalar iteration then walks
  // back down to the self-consistent root.
  Tensor2 sigma_tot;
  {
    bool ok = false;
    for (int back = 0; back <= 120 && !ok; ++back) {
      try {
        sigma_tot = solve_modes_at(a_sigma);
        ok = true;
      } catch (const Error&) {
        if (!(a_sigma < 1e280)) break;
        a_sigma *= 1e3;
      }
    }
    if (!ok) throw StepRejectionError("modes are not solvable at any admissible shift factor");
  }

  // R(a) = a - g(sigma_bar(a)) is increasing in a (more viscous -> less
  // relaxation -> more stress -> smaller g), so converged residual signs give
  // a bracket for log-space bisection whenever Newton misbehaves.
  double a_lo = 0.0, a_hi = 0.0;
  bool have_lo = false, have_hi = false;
  double a_checkpoint = a_sigma;

  // Fills the result once the shift factor is accepted.
  const auto finish = [&](int it_count, double sb, double I3) {
    ex.a_sigma = a_sigma;
    ex.sigma_tot = sigma_tot;
    ex.qcoef = shift_qcoef(ex.g, ex.x, mp.plastic.sigma0);
    ex.gI3 = -ex.g * mp.plastic.mu_p / mp.plastic.sigma0;
    ex.diag.external_iters = it_count;
    ex.diag.sigma_bar = sb;
    ex.diag.I3 = I3;
    ex.diag.a_sigma = a_sigma;
    double mrate = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ModeWork& w = works[i];
      if (w.frozen) {
        const Tensor2 Ss = sym(mandel_stress(w.F_e, w.sigma));
        const InvariantGradients gi = invariant_gradients(Ss, w.a_hat);
        const double qq = 2.0 * (gi.inv.I1 + alpha2 * gi.inv.I2);
        w.sigma_bar_mode = qq > 0.0 ? std::sqrt(qq) : 0.0;
      }
      mrate = std::max(mrate, w.sigma_bar_mode / w.eta);
    }
    ex.diag.max_plastic_rate = mrate;
  };

  for (int it = 1; it <= kMaxExternalIters; ++it) {
    ex.grads_tot = invariant_gradients(sym(sigma_tot), ex.abar);
    const double q = 2.0 * (ex.grads_tot.inv.I1 + alpha2 * ex.grads_tot.inv.I2);
    const double sb = q > 0.0 ? std::sqrt(q) : 0.0;
    const double I3 = ex.grads_tot.inv.I3;
    ex.g = shift_factor(sb, I3, mp.plastic);
    ex.x = sb / mp.plastic.sigma0;
    const double R = a_sigma - ex.g;
    ex.diag.external_residual_history.push_back(std::abs(R));
    if (std::getenv("TIVP_DEBUG_EXT"))
      std::fprintf(stderr, "ext it=%d a=%.9e g=%.9e sb=%.6e R=%.3e\n", it, a_sigma, ex.g, sb,
                   R);

    if (std::abs(R) <= kExternalTol * std::max(a_sigma, ex.g)) {
      finish(it, sb, I3);
      return;
    }

    // When the consistency root lies beyond a fold of the one-step flow map
    // (or the local slope is wildly overestimated there), the iterate creeps
    // while the residual stays large: no reachable solution at this step size,
    // so reject early and let the caller subdivide.
    if (it % 8 == 0) {
      if (it >= 24 && std::abs(std::log(a_sigma / a_checkpoint)) < 1e-3 &&
          std::abs(R) > 1e-3 * std::max(a_sigma, ex.g))
        throw StepRejectionError("shift factor stalled at a fold of the discrete flow map");
      a_checkpoint = a_sigma;
    }

    // Newton slope from the scalar consistency condition:
    // dR/da = 1 - u : (d sigma_tot/da) with u = dg/d(sigma) at fixed abar.
    const double qc = shift_qcoef(ex.g, ex.x, mp.plastic.sigma0);
    const double gI3 = -ex.g * mp.plastic.mu_p / mp.plastic.sigma0;
    const Tensor2 u =
        qc * (ex.grads_tot.dI1_dS + alpha2 * ex.grads_tot.dI2_dS) + gI3 * (I - Abar);
    Tensor2 s_a = Tensor2::zero();
    for (std::size_t i = 0; i < n; ++i) {
      const ModeWork& w = works[i];
      if (w.frozen) continue;
      const Tensor2 b = mode_da_sensitivity(w, a_sigma);
      // d sigma_i/da = A4 : (dF_e/dF_p : b) with dF_e = -F_e b F_p^-1
      s_a += ddot(w.A4, -1.0 * (w.F_e * b * w.F_p_inv));
    }
    const double slope = 1.0 - ddot(u, s_a);
    if (!(std::abs(slope) > 1e-300)) throw StepRejectionError("external slope is degenerate");

    if (R > 0.0) {
      a_hi = a_sigma;
      have_hi = true;
    } else {
      a_lo = a_sigma;
      have_lo = true;
    }

    // Newton in log space: the shift factor ranges over hundreds of decades
    // while the residual varies on the scale of ln a, so the multiplicative
    // update is the natural parametrization (and keeps a positive for free).
    double dl = -R / (slope * a_sigma);
    if (!std::isfinite(dl)) dl = R > 0.0 ? -1.0 : 1.0;
    // Without a two-sided bracket an overestimated slope shrinks the Newton
    // step to nothing while the residual stays large. Enforce a minimum
    // log-step proportional to the relative residual so descent continues;
    // if the true slope really is that steep the overshoot lands on the other
    // side of the root and the bisection fallback takes over.
    if (!(have_lo && have_hi)) {
      const double dl_min = std::min(0.05, std::abs(R) / std::max(a_sigma, ex.g));
      if (std::abs(dl) < dl_min) dl = R > 0.0 ? -dl_min : dl_min;
    }
    dl = std::clamp(dl, -40.0, 40.0);
    double a_new = std::max(a_sigma * std::exp(dl), 1e-300);
    // Keep the iterate inside the known bracket (log-space bisection fallback).
    if (have_lo && have_hi && !(a_new > a_lo && a_new < a_hi))
      a_new = std::sqrt(a_lo * a_hi);

    // Rounding floor: the residual of the composed solve chain has finite
    // precision, and once the proposed update no longer moves the iterate no
    // further digits are obtainable. Accept if the residual is already tiny.
    if (a_new == a_sigma && std::abs(R) <= 1e-9 * std::max(a_sigma, ex.g)) {
      finish(it, sb, I3);
      return;
    }

    // Solvability backoff: a Newton overshoot can land at a viscosity where the
    // implicit mode problems have no reachable solution (the discrete flow map
    // saturates). Retreat geometrically toward the last solvable iterate.
    bool solved = false;
    for (int back = 0; back < 60 && !solved; ++back) {
      try {
        sigma_tot = solve_modes_at(a_new);
        solved = true;
      } catch (const Error&) {
        const double retreat = std::sqrt(a_new * a_sigma);
        if (!std::isfinite(retreat) || std::abs(retreat - a_sigma) <= 1e-15 * a_sigma)
          break;
        a_new = retreat;
      }
    }
    if (!solved) throw StepRejectionError("external iterate is not solvable");
    a_sigma = a_new;
  }
  throw StepRejectionError("external Newton did not converge");
}

// Dense LU with partial pivoting for the bordered tangent system (size 9m+1
// for m flowing modes). Throws SingularMatrixError when numerically singular.
class DenseLU {
public:
  explicit DenseLU(std::vector<double> a, int n) : a_(std::move(a)), n_(n), piv_(n) {
    double scale = 0.0;
    for (double x : a_) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) throw SingularMatrixError("bordered tangent system is zero");
    for (int k = 0; k < n_; ++k) {
      int p = k;
      double pmax = std::abs(a_[idx(k, k)]);
      for (int r = k + 1; r < n_; ++r) {
        const double v = std::abs(a_[idx(r, k)]);
        if (v > pmax) {
          pmax = v;
          p = r;
        }
      }
      if (pmax <= 1e-300 || pmax <= 1e-16 * scale)
        throw SingularMatrixError("bordered tangent system is numerically singular");
      piv_[k] = p;
      if (p != k)
        for (int cc = 0; cc < n_; ++cc) std::swap(a_[idx(k, cc)], a_[idx(p, cc)]);
      const double inv_piv = 1.0 / a_[idx(k, k)];
      for (int r = k + 1; r < n_; ++r) {
        const double f = a_[idx(r, k)] * inv_piv;
        a_[idx(r, k)] = f;
        if (f != 0.0)
          for (int cc = k + 1; cc < n_; ++cc) a_[idx(r, cc)] -= f * a_[idx(k, cc)];
      }
    }
  }

  void solve_inplace(std::vector<double>& b) const {
    // Row interchanges first (they were applied to whole rows, multipliers
    // included, during factorization), then clean triangular solves.
    for (int k = 0; k < n_; ++k)
      if (piv_[k] != k) std::swap(b[k], b[piv_[k]]);
    for (int k = 0; k < n_; ++k)
      for (int r = k + 1; r < n_; ++r) b[r] -= a_[idx(r, k)] * b[k];
    for (int k = n_ - 1; k >= 0; --k) {
      double s = b[k];
      for (int cc = k + 1; cc < n_; ++cc) s -= a_[idx(k, cc)] * b[cc];
      b[k] = s / a_[idx(k, k)];
    }
  }

private:
  std::vector<double> a_;
  int n_;
  std::vector<int> piv_;
  std::size_t idx(int r, int cc) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(n_) +
           static_cast<std::size_t>(cc);
  }
};

Tensor4 assemble_tangent(const MaterialParams& mp, const std::vector<ModeWork>& works,
                         const ExternalResult& ex) {
  const Tensor2 I = Tensor2::identity();
  const double alpha2 = mp.plastic.alpha2;
  const double a_sigma = ex.a_sigma;
  const Tensor2 Abar = dyad(ex.abar, ex.abar);

  // Direct (fixed internal state) part of d sigma_tot/dF, plus per-mode data
  // for the coupled sensitivity solve below.
  Tensor4 S_dir;
  std::vector<std::size_t> flow;          // indices of non-frozen modes
  std::vector<Tensor4> P_flow, rhs_flow;  // d sigma_i/dF_p,i and -dR_i/dF
  std::vector<Tensor2> g_flow;            // dR_i/da_sigma
  flow.reserve(works.size());

  for (std::size_t i = 0; i < works.size(); ++i) {
    const ModeWork& w = works[i];
    const Tensor4 A4 = w.frozen ? d_cauchy_dFe(w.F_e, ex.a_vec, mp.mode_hp[i]) : w.A4;
    const Tensor3 C3 = d_cauchy_da(w.F_e, ex.a_vec, mp.mode_hp[i]);
    const Tensor4 Fa = t3_outer(C3, mp.a0);  // d sigma_i/dF through a = F a0
    S_dir += compose_lr(A4, I, w.F_p_inv) + Fa;
    if (w.frozen) continue;

    // -dR_i/dF at fixed (F_p, a): Mandel-stress chain of the flow evaluation.
    const Tensor4 dSigma_dF = compose_lr(w.Ke, I, w.F_p_inv) +
                              lr_compose(transpose(w.F_e), transpose(w.F_e_inv), Fa);
    flow.push_back(i);
    rhs_flow.push_back(ddot(w.G, (1.0 / w.eta) * ddot(w.Hc, sym1(dSigma_dF))));
    g_flow.push_back((1.0 / a_sigma) * ddot(w.G, w.D));  // dR_i/da (eta = eta0 a)
    P_flow.push_back(compose_lr(A4, -1.0 * w.F_e, w.F_p_inv));
  }

  // Sensitivities of the converged consistency condition a = g(sigma(F), abar(F)).
  const Tensor2 u = ex.qcoef * (ex.grads_tot.dI1_dS + alpha2 * ex.grads_tot.dI2_dS) +
                    ex.gI3 * (I - Abar);
  const Vec3 v = ex.qcoef * (ex.grads_tot.dI1_da + alpha2 * ex.grads_tot.dI2_da) +
                 ex.gI3 * (-2.0 * (sym(ex.sigma_tot) * ex.abar));
  const Vec3 cm = (1.0 / ex.an) * (v - dot(v, ex.abar) * ex.abar);
  Tensor2 vdF;
  for (int m = 0; m < 3; ++m)
    for (int nn = 0; nn < 3; ++nn) vdF(m, nn) = cm[m] * mp.a0[nn];

  // The per-mode flow residuals and the scalar consistency condition form one
  // coupled (bordered) linear system for the total sensitivities
  //   J_i X_i + g_i y = rhs_i,       y - sum_i (u:P_i) X_i = u:S_dir + vdF,
  // with X_i = dF_p,i/dF and y = da_sigma/dF. Eliminating the mode blocks
  // first would be unstable: near a fold of the one-step flow map some J_i is
  // almost singular even though the coupled system is perfectly regular (the
  // consistency equation supplies the missing direction), so the system is
  // factored as a whole with full partial pivoting instead.
  const int m_flow = static_cast<int>(flow.size());
  const int N = 9 * m_flow + 1;
  std::vector<double> A(static_cast<std::size_t>(N) * static_cast<std::size_t>(N), 0.0);
  const auto at = [N](int r, int cc) {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(N) +
           static_cast<std::size_t>(cc);
  };
  for (int b = 0; b < m_flow; ++b) {
    const ModeWork& w = works[flow[static_cast<std::size_t>(b)]];
    const Tensor2& gb = g_flow[static_cast<std::size_t>(b)];
    const Tensor4& Pb = P_flow[static_cast<std::size_t>(b)];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const int row = 9 * b + 3 * i + j;
        for (int p = 0; p < 3; ++p)
          for (int q = 0; q < 3; ++q) A[at(row, 9 * b + 3 * p + q)] = w.J(i, j, p, q);
        A[at(row, N - 1)] = gb(i, j);
        // Border row: -(u : P_b) for this mode's unknowns.
        double uP = 0.0;
        for (int p = 0; p < 3; ++p)
          for (int q = 0; q < 3; ++q) uP += u(p, q) * Pb(p, q, i, j);
        A[at(N - 1, row)] = -uP;
      }
  }
  A[at(N - 1, N - 1)] = 1.0;

  std::optional<DenseLU> lu;
  try {
    lu.emplace(std::move(A), N);
  } catch (const SingularMatrixError&) {
    throw StepRejectionError("coupled tangent system is singular");
  }

  // One solve per deformation-gradient direction (k, l).
  Tensor4 K = S_dir;
  std::vector<double> b(static_cast<std::size_t>(N));
  for (int k = 0; k < 3; ++k)
    for (int l = 0; l < 3; ++l) {
      for (int bb = 0; bb < m_flow; ++bb) {
        const Tensor4& rb = rhs_flow[static_cast<std::size_t>(bb)];
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            b[static_cast<std::size_t>(9 * bb + 3 * i + j)] = rb(i, j, k, l);
      }
      double w_ext = vdF(k, l);
      for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) w_ext += u(p, q) * S_dir(p, q, k, l);
      b[static_cast<std::size_t>(N - 1)] = w_ext;
      lu->solve_inplace(b);
      for (int bb = 0; bb < m_flow; ++bb) {
        const Tensor4& Pb = P_flow[static_cast<std::size_t>(bb)];
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int p = 0; p < 3; ++p)
              for (int q = 0; q < 3; ++q)
                acc += Pb(i, j, p, q) * b[static_cast<std::size_t>(9 * bb + 3 * p + q)];
            K(i, j, k, l) += acc;
          }
      }
    }
  return K;
}

StressUpdateResult pack_result(const MaterialState& s0, double dt,
                               const std::vector<ModeWork>& works, ExternalResult& ex) {
  StressUpdateResult out;
  out.sigma = ex.sigma_tot;
  out.state.modes.resize(works.size());
  for (std::size_t i = 0; i < works.size(); ++i) out.state.modes[i].F_p = works[i].F_p;
  out.state.a_sigma = ex.a_sigma;
  out.state.time = s0.time + dt;
  out.diag = std::move(ex.diag);
  return out;
}

}  // namespace

double shift_factor(double sigma_bar, double I3, const PlasticParams& p) {
  if (!(p.sigma0 > 0.0)) throw InvalidMaterialError("sigma0 must be positive");
  if (!(sigma_bar >= 0.0)) throw InvalidMaterialError("equivalent stress must be nonnegative");
  const double x = sigma_bar / p.sigma0;
  const double lg = log_sinh_ratio(x) - p.mu_p * I3 / p.sigma0;
  const double g = std::exp(std::min(lg, 700.0));
  return std::max(g, 1e-300);
}

Tensor2 plastic_rate(const Tensor2& Sigma_sym, const Vec3& a_hat, double eta_i, double alpha2) {
  if (!(eta_i > 0.0)) throw InvalidMaterialError("viscosity must be positive");
  const InvariantGradients g = invariant_gradients(sym(Sigma_sym), a_hat);
  return (1.0 / eta_i) * (g.dI1_dS + alpha2 * g.dI2_dS);
}

Tensor2 mandel_stress(const Tensor2& F_e, const Tensor2& sigma_i) {
  if (!(det(F_e) > 0.0)) throw InvalidDeformationError("mandel_stress requires det F_e > 0");
  return transpose(F_e) * sigma_i * transpose(inv(F_e));
}

MaterialParams make_material(const ElasticConstants& elastic, const PlasticParams& plastic,
                             const RelaxationSpectrum& spectrum, const Vec3& a0) {
  MaterialParams mp;
  mp.elastic = elastic;
  mp.plastic = plastic;
  mp.spectrum = spectrum;
  if (!(plastic.sigma0 > 0.0)) throw InvalidMaterialError("sigma0 must be positive");
  if (!(plastic.eta0 > 0.0)) throw InvalidMaterialError("eta0 must be positive");
  if (!(std::abs(plastic.mu_p) < 1.0 / std::sqrt(2.0)))
    throw InvalidMaterialError("|mu_p| must be smaller than 1/sqrt(2)");
  if (!(plastic.alpha2 >= 0.0)) throw InvalidMaterialError("alpha2 must be nonnegative");
  if (spectrum.modes.empty()) throw InvalidMaterialError("relaxation spectrum is empty");
  double msum = 0.0;
  for (const SpectrumMode& m : spectrum.modes) {
    if (!(m.m > 0.0)) throw InvalidMaterialError("mode stiffness fractions must be positive");
    if (!(m.eta0 > 0.0)) throw InvalidMaterialError("mode viscosities must be positive");
    msum += m.m;
  }
  if (std::abs(msum - 1.0) > 1e-3)
    throw InvalidMaterialError("mode stiffness fractions must sum to 1 within 1e-3");
  const double n0 = norm(a0);
  if (std::abs(n0 - 1.0) > 1e-12) throw InvalidMaterialError("a0 must be a unit vector");
  mp.a0 = (1.0 / n0) * a0;
  mp.mode_hp.reserve(spectrum.modes.size());
  mp.mode_eta0.reserve(spectrum.modes.size());
  for (const SpectrumMode& m : spectrum.modes) {
    const ElasticConstants ei{m.m * elastic.E11, m.m * elastic.E22, m.m * elastic.G12,
                              elastic.nu21};
    mp.mode_hp.push_back(convert_constants(ei));
    mp.mode_eta0.push_back(m.eta0);
  }
  return mp;
}

MaterialParams make_material(const ElasticConstants& elastic, const PlasticParams& plastic,
                             const Vec3& a0) {
  return make_material(elastic, plastic, RelaxationSpectrum::single(plastic.eta0), a0);
}

MaterialState virgin_state(const MaterialParams& mp) {
  MaterialState s;
  s.modes.resize(mp.n_modes());
  s.a_sigma = 1.0;
  s.time = 0.0;
  return s;
}

InternalSolveResult internal_solve(std::size_t mode, const Tensor2& F, const Tensor2& F_p_old,
                                   double a_sigma, double dt, const MaterialParams& mp) {
  if (mode >= mp.n_modes()) throw InvalidMaterialError("mode index out of range");
  if (!(a_sigma > 0.0)) throw InvalidMaterialError("shift factor must be positive");
  if (!(dt >= 0.0)) throw InvalidMaterialError("time increment must be nonnegative");
  if (!(det(F) > 0.0)) throw InvalidDeformationError("det F must be positive");
  const Tensor2 F_inv = inv(F);
  const Vec3 a_vec = F * mp.a0;
  const double eta = mp.mode_eta0[mode] * a_sigma;
  const ModeContext c{F, F_inv, a_vec, mp.a0, mp.mode_hp[mode], F_p_old,
                      eta, mp.plastic.alpha2, dt};
  InternalSolveResult out;
  if (dt <= kFrozenSensitivity * eta) {
    out.F_p = F_p_old;
    out.jacobian = Tensor4::identity();
    out.iters = 1;
    out.residual_history = {0.0};
    return out;
  }
  ModeWork w;
  solve_mode(c, F_p_old, w, &out.residual_history);
  out.F_p = w.F_p;
  out.jacobian = w.J;
  out.iters = w.iters;
  return out;
}

StressUpdateResult external_solve(const Tensor2& F, const MaterialState& state_old, double dt,
                                  const MaterialParams& mp) {
  static thread_local std::vector<ModeWork> works;
  ExternalResult ex;
  external_core(F, state_old, dt, mp, works, ex);
  return pack_result(state_old, dt, works, ex);
}

StressUpdateResult update(const Tensor2& F, const MaterialState& state_old, double dt,
                          const MaterialParams& mp) {
  static thread_local std::vector<ModeWork> works;
  ExternalResult ex;
  external_core(F, state_old, dt, mp, works, ex);
  StressUpdateResult out = pack_result(state_old, dt, works, ex);
  out.tangent = assemble_tangent(mp, works, ex);
  out.has_tangent = true;
  return out;
}

Tensor4 consistent_tangent(const Tensor2& F, const MaterialState& state_old, double dt,
                           const MaterialParams& mp) {
  return update(F, state_old, dt, mp).tangent;
}

}  // namespace tivp
