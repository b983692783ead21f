#pragma once

// Dense tensor algebra for 3-vectors, 3x3 second-order and 3x3x3x3
// fourth-order tensors. Everything is fixed-size, value-semantic and
// allocation-free; all functions are pure and safe to call concurrently.
//
// Conventions:
//   Tensor2  A(i,j)        row-major, A_ij
//   Tensor3  T(i,j,q)      derivative-like objects  T_ijq = d(A_ij)/d(v_q)
//   Tensor4  K(i,j,k,l)    dense 81 components, no symmetry assumed
//   double contraction     (K : A)_ij = K_ijkl A_kl
//   identity4              I4_ijkl = d_ik d_jl  (I4 : A = A)

#include <array>
#include <cmath>

#include "tivp/errors.hpp"

namespace tivp {

struct Vec3 {
  std::array<double, 3> v{};

  Vec3() = default;
  Vec3(double x, double y, double z) : v{x, y, z} {}

  double& operator[](int i) { return v[static_cast<size_t>(i)]; }
  double operator[](int i) const { return v[static_cast<size_t>(i)]; }
};

struct Tensor2 {
  std::array<double, 9> m{};

  double& operator()(int i, int j) { return m[static_cast<size_t>(3 * i + j)]; }
  double operator()(int i, int j) const { return m[static_cast<size_t>(3 * i + j)]; }

  static Tensor2 zero() { return Tensor2{}; }
  static Tensor2 identity() {
    Tensor2 I;
    I(0, 0) = I(1, 1) = I(2, 2) = 1.0;
    return I;
  }
  static Tensor2 diag(double a, double b, double c) {
    Tensor2 D;
    D(0, 0) = a;
    D(1, 1) = b;
    D(2, 2) = c;
    return D;
  }
};

struct Tensor3 {
  // d[3*(3*i+j)+q] = T_ijq
  std::array<double, 27> d{};

  double& operator()(int i, int j, int q) { return d[static_cast<size_t>(9 * i + 3 * j + q)]; }
  double operator()(int i, int j, int q) const { return d[static_cast<size_t>(9 * i + 3 * j + q)]; }
};

struct Tensor4 {
  // t[27*i + 9*j + 3*k + l] = K_ijkl
  std::array<double, 81> t{};

  double& operator()(int i, int j, int k, int l) {
    return t[static_cast<size_t>(27 * i + 9 * j + 3 * k + l)];
  }
  double operator()(int i, int j, int k, int l) const {
    return t[static_cast<size_t>(27 * i + 9 * j + 3 * k + l)];
  }

  static Tensor4 zero() { return Tensor4{}; }
  // I4_ijkl = d_ik d_jl, the identity of the double contraction.
  static Tensor4 identity();
};

// ---------------------------------------------------------------- Vec3 ops

inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }

inline double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 normalized(const Vec3& a); // throws SingularMatrixError on zero vector

// -------------------------------------------------------------- Tensor2 ops

Tensor2 operator+(const Tensor2& A, const Tensor2& B);
Tensor2 operator-(const Tensor2& A, const Tensor2& B);
Tensor2 operator*(double s, const Tensor2& A);
Tensor2 operator*(const Tensor2& A, const Tensor2& B); // matrix product
Vec3 operator*(const Tensor2& A, const Vec3& v);
Tensor2& operator+=(Tensor2& A, const Tensor2& B);
Tensor2& operator-=(Tensor2& A, const Tensor2& B);

Tensor2 transpose(const Tensor2& A);
Tensor2 sym(const Tensor2& A);
Tensor2 skw(const Tensor2& A);
double trace(const Tensor2& A);
double det(const Tensor2& A);
double norm_inf(const Tensor2& A);  // max |A_ij|
double norm_fro(const Tensor2& A);

// Closed-form adjugate inverse with a determinant pivot check:
// throws SingularMatrixError when |det A| <= 1e-14 * ||A||_F^3.
Tensor2 inv(const Tensor2& A);

Tensor2 dyad(const Vec3& a, const Vec3& b); // (a (x) b)_ij = a_i b_j
double ddot(const Tensor2& A, const Tensor2& B); // A_ij B_ij

// ---------------------------------------------------------------- Tensor4 ops

Tensor4 operator+(const Tensor4& A, const Tensor4& B);
Tensor4 operator-(const Tensor4& A, const Tensor4& B);
Tensor4 operator*(double s, const Tensor4& A);
Tensor4& operator+=(Tensor4& A, const Tensor4& B);

double norm_inf(const Tensor4& A);

// (K : A)_ij = K_ijkl A_kl
Tensor2 ddot(const Tensor4& K, const Tensor2& A);
// (A : K)_kl = A_ij K_ijkl
Tensor2 ddot(const Tensor2& A, const Tensor4& K);
// (K : L)_ijmn = K_ijkl L_klmn
Tensor4 ddot(const Tensor4& K, const Tensor4& L);

// transpose_ddot(K, L)_klmn = K_ijkl L_ijmn (contraction over the leading pair)
Tensor4 transpose_ddot(const Tensor4& K, const Tensor4& L);

// outer(A, B)_ijkl = A_ij B_kl
Tensor4 outer(const Tensor2& A, const Tensor2& B);

// Fourth-order representation of the linear map X -> A * X * B:
// lr_map(A, B)_ijmn = A_im B_nj, so ddot(lr_map(A, B), X) = A * X * B.
Tensor4 lr_map(const Tensor2& A, const Tensor2& B);

// Fourth-order representation of X -> A * X^T * B:
// lt_map(A, B)_ijmn = A_in B_mj.
Tensor4 lt_map(const Tensor2& A, const Tensor2& B);

// lr_compose(A, B, K)_ijmn = A_iu B_vj K_uvmn   (the map X -> A * (K:X) * B)
// Cheaper specialization of ddot(lr_map(A, B), K).
Tensor4 lr_compose(const Tensor2& A, const Tensor2& B, const Tensor4& K);

// compose_lr(K, A, B)_ijmn = K_ijuv A_um B_nv   (the map X -> K : (A * X * B))
// Cheaper specialization of ddot(K, lr_map(A, B)).
Tensor4 compose_lr(const Tensor4& K, const Tensor2& A, const Tensor2& B);

// Symmetrize a fourth-order tensor in its first index pair:
// sym1(K)_ijmn = (K_ijmn + K_jimn) / 2.
Tensor4 sym1(const Tensor4& K);

// ---------------------------------------------------------------- Tensor3 ops

Tensor3 operator+(const Tensor3& A, const Tensor3& B);
Tensor3 operator*(double s, const Tensor3& A);

// apply(T, v)_ij = T_ijq v_q
Tensor2 apply(const Tensor3& T, const Vec3& v);
// ddot(A, T)_q = A_ij T_ijq
Vec3 ddot(const Tensor2& A, const Tensor3& T);
// compose43(K, T)_ijq = K_ijkl T_klq
Tensor3 compose43(const Tensor4& K, const Tensor3& T);
// lr_compose3(A, B, T)_ijq = A_iu B_vj T_uvq
Tensor3 lr_compose3(const Tensor2& A, const Tensor2& B, const Tensor3& T);
// t3_outer(T, w)_ijmn = T_ijm w_n   (chains d()/da with da_q/dF_mn = M_qm w_n
// after the T_ijq M_qm contraction has been folded in)
Tensor4 t3_outer(const Tensor3& T, const Vec3& w);
// t3_mul(T, M)_ijm = T_ijq M_qm
Tensor3 t3_mul(const Tensor3& T, const Tensor2& M);

// ------------------------------------------------------------------- Pade map

// Rational (1,1) approximation of the tensor exponential of dt*D:
// pade_exp(D, dt) = (I - dt/2 * D)^-1 * (I + dt/2 * D).
// For traceless D the result preserves det to O(||dt*D||^3).
// Throws StepRejectionError if (I - dt/2 * D) is singular, signaling the
// caller to cut the time step.
Tensor2 pade_exp(const Tensor2& D, double dt);

// ----------------------------------------------------------- 9x9 linear solve

// Dense LU with partial pivoting for the 9x9 systems that arise when a
// fourth-order tensor acts on a second-order one: A_ijkl X_kl = B_ij with
// row index (3i+j) and column index (3k+l).
class LU9 {
public:
  // Factors K (throws SingularMatrixError if K is numerically singular).
  explicit LU9(const Tensor4& K);

  // Solves K : X = B.
  Tensor2 solve(const Tensor2& B) const;
  // Solves K : X^(mn) = R(:,:,m,n) for all 9 right-hand sides of a
  // fourth-order tensor, column pair (m,n) fixed per solve.
  Tensor4 solve(const Tensor4& R) const;

  // |det K| divided by the Hadamard bound (product of row 1-norms), in (0, 1].
  // Row-scaling invariant; values near zero indicate cancellation-driven near
  // singularity rather than mere grading of the matrix.
  double det_ratio() const { return det_ratio_; }

private:
  std::array<double, 81> lu_{};
  std::array<int, 9> piv_{};
  double det_ratio_ = 1.0;
  void solve_inplace(std::array<double, 9>& b) const;
};

} // namespace tivp
