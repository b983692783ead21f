#include "tivp/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace tivp {

Tensor4 Tensor4::identity() {
  Tensor4 I4;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      I4(i, j, i, j) = 1.0;
  return I4;
}

Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  if (n <= 0.0)
    throw SingularMatrixError("cannot normalize zero vector");
  return (1.0 / n) * a;
}

// -------------------------------------------------------------- Tensor2 ops

Tensor2 operator+(const Tensor2& A, const Tensor2& B) {
  Tensor2 C;
  for (size_t k = 0; k < 9; ++k)
    C.m[k] = A.m[k] + B.m[k];
  return C;
}

Tensor2 operator-(const Tensor2& A, const Tensor2& B) {
  Tensor2 C;
  for (size_t k = 0; k < 9; ++k)
    C.m[k] = A.m[k] - B.m[k];
  return C;
}

Tensor2 operator*(double s, const Tensor2& A) {
  Tensor2 C;
  for (size_t k = 0; k < 9; ++k)
    C.m[k] = s * A.m[k];
  return C;
}

Tensor2 operator*(const Tensor2& A, const Tensor2& B) {
  Tensor2 C;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      C(i, j) = A(i, 0) * B(0, j) + A(i, 1) * B(1, j) + A(i, 2) * B(2, j);
  return C;
}

Vec3 operator*(const Tensor2& A, const Vec3& v) {
  Vec3 w;
  for (int i = 0; i < 3; ++i)
    w[i] = A(i, 0) * v[0] + A(i, 1) * v[1] + A(i, 2) * v[2];
  return w;
}

Tensor2& operator+=(Tensor2& A, const Tensor2& B) {
  for (size_t k = 0; k < 9; ++k)
    A.m[k] += B.m[k];
  return A;
}

Tensor2& operator-=(Tensor2& A, const Tensor2& B) {
  for (size_t k = 0; k < 9; ++k)
    A.m[k] -= B.m[k];
  return A;
}

Tensor2 transpose(const Tensor2& A) {
  Tensor2 T;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      T(i, j) = A(j, i);
  return T;
}

Tensor2 sym(const Tensor2& A) {
  Tensor2 S;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      S(i, j) = 0.5 * (A(i, j) + A(j, i));
  return S;
}

Tensor2 skw(const Tensor2& A) {
  Tensor2 W;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      W(i, j) = 0.5 * (A(i, j) - A(j, i));
  return W;
}

double trace(const Tensor2& A) { return A(0, 0) + A(1, 1) + A(2, 2); }

double det(const Tensor2& A) {
  return A(0, 0) * (A(1, 1) * A(2, 2) - A(1, 2) * A(2, 1)) -
         A(0, 1) * (A(1, 0) * A(2, 2) - A(1, 2) * A(2, 0)) +
         A(0, 2) * (A(1, 0) * A(2, 1) - A(1, 1) * A(2, 0));
}

double norm_inf(const Tensor2& A) {
  double n = 0.0;
  for (double x : A.m)
    n = std::max(n, std::abs(x));
  return n;
}

double norm_fro(const Tensor2& A) {
  double s = 0.0;
  for (double x : A.m)
    s += x * x;
  return std::sqrt(s);
}

Tensor2 inv(const Tensor2& A) {
  const double d = det(A);
  const double scale = norm_fro(A);
  if (std::abs(d) <= 1e-14 * scale * scale * scale)
    throw SingularMatrixError("3x3 inverse: matrix is numerically singular");
  const double id = 1.0 / d;
  Tensor2 B;
  B(0, 0) = id * (A(1, 1) * A(2, 2) - A(1, 2) * A(2, 1));
  B(0, 1) = id * (A(0, 2) * A(2, 1) - A(0, 1) * A(2, 2));
  B(0, 2) = id * (A(0, 1) * A(1, 2) - A(0, 2) * A(1, 1));
  B(1, 0) = id * (A(1, 2) * A(2, 0) - A(1, 0) * A(2, 2));
  B(1, 1) = id * (A(0, 0) * A(2, 2) - A(0, 2) * A(2, 0));
  B(1, 2) = id * (A(0, 2) * A(1, 0) - A(0, 0) * A(1, 2));
  B(2, 0) = id * (A(1, 0) * A(2, 1) - A(1, 1) * A(2, 0));
  B(2, 1) = id * (A(0, 1) * A(2, 0) - A(0, 0) * A(2, 1));
  B(2, 2) = id * (A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0));
  return B;
}

Tensor2 dyad(const Vec3& a, const Vec3& b) {
  Tensor2 D;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      D(i, j) = a[i] * b[j];
  return D;
}

double ddot(const Tensor2& A, const Tensor2& B) {
  double s = 0.0;
  for (size_t k = 0; k < 9; ++k)
    s += A.m[k] * B.m[k];
  return s;
}

// ---------------------------------------------------------------- Tensor4 ops

Tensor4 operator+(const Tensor4& A, const Tensor4& B) {
  Tensor4 C;
  for (size_t k = 0; k < 81; ++k)
    C.t[k] = A.t[k] + B.t[k];
  return C;
}

Tensor4 operator-(const Tensor4& A, const Tensor4& B) {
  Tensor4 C;
  for (size_t k = 0; k < 81; ++k)
    C.t[k] = A.t[k] - B.t[k];
  return C;
}

Tensor4 operator*(double s, const Tensor4& A) {
  Tensor4 C;
  for (size_t k = 0; k < 81; ++k)
    C.t[k] = s * A.t[k];
  return C;
}

Tensor4& operator+=(Tensor4& A, const Tensor4& B) {
  for (size_t k = 0; k < 81; ++k)
    A.t[k] += B.t[k];
  return A;
}

double norm_inf(const Tensor4& A) {
  double n = 0.0;
  for (double x : A.t)
    n = std::max(n, std::abs(x));
  return n;
}

Tensor2 ddot(const Tensor4& K, const Tensor2& A) {
  Tensor2 C;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double* row = K.t.data() + 27 * i + 9 * j;
      double s = 0.0;
      for (size_t k = 0; k < 9; ++k)
        s += row[k] * A.m[k];
      C(i, j) = s;
    }
  return C;
}

Tensor2 ddot(const Tensor2& A, const Tensor4& K) {
  Tensor2 C;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double* row = K.t.data() + 27 * i + 9 * j;
      const double a = A(i, j);
      for (size_t k = 0; k < 9; ++k)
        C.m[k] += a * row[k];
    }
  return C;
}

Tensor4 ddot(const Tensor4& K, const Tensor4& L) {
  // (K : L)_ijmn = K_ijkl L_klmn — a 9x9 * 9x9 product in flat layout.
  Tensor4 C;
  for (int r = 0; r < 9; ++r) {
    const double* krow = K.t.data() + 9 * r;
    double* crow = C.t.data() + 9 * r;
    for (int k = 0; k < 9; ++k) {
      const double kv = krow[k];
      if (kv == 0.0)
        continue;
      const double* lrow = L.t.data() + 9 * k;
      for (int c = 0; c < 9; ++c)
        crow[c] += kv * lrow[c];
    }
  }
  return C;
}

Tensor4 transpose_ddot(const Tensor4& K, const Tensor4& L) {
  // C_(kl)(mn) = sum_(ij) K_(ij)(kl) L_(ij)(mn): a 9x9 product K^T * L.
  Tensor4 C;
  for (int r = 0; r < 9; ++r) {
    const double* krow = K.t.data() + 9 * r;
    const double* lrow = L.t.data() + 9 * r;
    for (int c1 = 0; c1 < 9; ++c1) {
      const double kv = krow[c1];
      if (kv == 0.0)
        continue;
      double* crow = C.t.data() + 9 * c1;
      for (int c2 = 0; c2 < 9; ++c2)
        crow[c2] += kv * lrow[c2];
    }
  }
  return C;
}

Tensor4 outer(const Tensor2& A, const Tensor2& B) {
  Tensor4 C;
  for (int r = 0; r < 9; ++r) {
    const double a = A.m[static_cast<size_t>(r)];
    double* crow = C.t.data() + 9 * r;
    for (int c = 0; c < 9; ++c)
      crow[c] = a * B.m[static_cast<size_t>(c)];
  }
  return C;
}

Tensor4 lr_map(const Tensor2& A, const Tensor2& B) {
  Tensor4 K;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int m = 0; m < 3; ++m)
        for (int n = 0; n < 3; ++n)
          K(i, j, m, n) = A(i, m) * B(n, j);
  return K;
}

Tensor4 lt_map(const Tensor2& A, const Tensor2& B) {
  Tensor4 K;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int m = 0; m < 3; ++m)
        for (int n = 0; n < 3; ++n)
          K(i, j, m, n) = A(i, n) * B(m, j);
  return K;
}

Tensor4 lr_compose(const Tensor2& A, const Tensor2& B, const Tensor4& K) {
  // C_ijmn = A_iu B_vj K_uvmn: for each fixed (m,n) this is the sandwich
  // A * K(:,:,m,n) * B, 9 small matrix products instead of an 81x81 contraction.
  Tensor4 C;
  for (int m = 0; m < 3; ++m)
    for (int n = 0; n < 3; ++n) {
      Tensor2 Kmn;
      for (int u = 0; u < 3; ++u)
        for (int v = 0; v < 3; ++v)
          Kmn(u, v) = K(u, v, m, n);
      const Tensor2 S = A * Kmn * B;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          C(i, j, m, n) = S(i, j);
    }
  return C;
}

Tensor4 compose_lr(const Tensor4& K, const Tensor2& A, const Tensor2& B) {
  // C_ijmn = K_ijuv A_um B_nv: for each fixed (i,j) this is A^T * K(i,j,:,:)^T
  // ... easier stated directly: C(i,j,:,:) = A^T * K(i,j) * B^T with
  // K(i,j)_uv = K_ijuv, since (A^T K B^T)_mn = A_um K_uv B_nv.
  Tensor4 C;
  const Tensor2 At = transpose(A);
  const Tensor2 Bt = transpose(B);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      Tensor2 Kij;
      for (int u = 0; u < 3; ++u)
        for (int v = 0; v < 3; ++v)
          Kij(u, v) = K(i, j, u, v);
      const Tensor2 S = At * Kij * Bt;
      for (int m = 0; m < 3; ++m)
        for (int n = 0; n < 3; ++n)
          C(i, j, m, n) = S(m, n);
    }
  return C;
}

Tensor4 sym1(const Tensor4& K) {
  Tensor4 S;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int m = 0; m < 3; ++m)
        for (int n = 0; n < 3; ++n)
          S(i, j, m, n) = 0.5 * (K(i, j, m, n) + K(j, i, m, n));
  return S;
}

// ---------------------------------------------------------------- Tensor3 ops

Tensor3 operator+(const Tensor3& A, const Tensor3& B) {
  Tensor3 C;
  for (size_t k = 0; k < 27; ++k)
    C.d[k] = A.d[k] + B.d[k];
  return C;
}

Tensor3 operator*(double s, const Tensor3& A) {
  Tensor3 C;
  for (size_t k = 0; k < 27; ++k)
    C.d[k] = s * A.d[k];
  return C;
}

Tensor2 apply(const Tensor3& T, const Vec3& v) {
  Tensor2 A;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      A(i, j) = T(i, j, 0) * v[0] + T(i, j, 1) * v[1] + T(i, j, 2) * v[2];
  return A;
}

Vec3 ddot(const Tensor2& A, const Tensor3& T) {
  Vec3 w;
  for (int q = 0; q < 3; ++q) {
    double s = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        s += A(i, j) * T(i, j, q);
    w[q] = s;
  }
  return w;
}

Tensor3 compose43(const Tensor4& K, const Tensor3& T) {
  Tensor3 C;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int q = 0; q < 3; ++q) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 3; ++l)
            s += K(i, j, k, l) * T(k, l, q);
        C(i, j, q) = s;
      }
  return C;
}

Tensor3 lr_compose3(const Tensor2& A, const Tensor2& B, const Tensor3& T) {
  Tensor3 C;
  for (int q = 0; q < 3; ++q) {
    Tensor2 Tq;
    for (int u = 0; u < 3; ++u)
      for (int v = 0; v < 3; ++v)
        Tq(u, v) = T(u, v, q);
    const Tensor2 S = A * Tq * B;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        C(i, j, q) = S(i, j);
  }
  return C;
}

Tensor4 t3_outer(const Tensor3& T, const Vec3& w) {
  Tensor4 C;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int m = 0; m < 3; ++m)
        for (int n = 0; n < 3; ++n)
          C(i, j, m, n) = T(i, j, m) * w[n];
  return C;
}

Tensor3 t3_mul(const Tensor3& T, const Tensor2& M) {
  Tensor3 C;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int m = 0; m < 3; ++m)
        C(i, j, m) =
            T(i, j, 0) * M(0, m) + T(i, j, 1) * M(1, m) + T(i, j, 2) * M(2, m);
  return C;
}

// ------------------------------------------------------------------- Pade map

Tensor2 pade_exp(const Tensor2& D, double dt) {
  const Tensor2 I = Tensor2::identity();
  const Tensor2 Z = I - (0.5 * dt) * D;
  const Tensor2 P = I + (0.5 * dt) * D;
  try {
    return inv(Z) * P;
  } catch (const SingularMatrixError&) {
    throw StepRejectionError("pade_exp: (I - dt/2 D) singular, cut the step");
  }
}

// ----------------------------------------------------------- 9x9 linear solve

LU9::LU9(const Tensor4& K) {
  lu_ = K.t;
  double scale = 0.0;
  for (double x : lu_)
    scale = std::max(scale, std::abs(x));
  if (scale == 0.0)
    throw SingularMatrixError("LU9: zero matrix");
  double log_hadamard = 0.0;
  for (int r = 0; r < 9; ++r) {
    double rn = 0.0;
    for (int cc = 0; cc < 9; ++cc) rn += std::abs(lu_[static_cast<size_t>(9 * r + cc)]);
    log_hadamard += std::log(rn);
  }
  for (int k = 0; k < 9; ++k) {
    int p = k;
    double pmax = std::abs(lu_[static_cast<size_t>(9 * k + k)]);
    for (int r = k + 1; r < 9; ++r) {
      const double v = std::abs(lu_[static_cast<size_t>(9 * r + k)]);
      if (v > pmax) {
        pmax = v;
        p = r;
      }
    }
    if (pmax <= 1e-300 || pmax <= 1e-16 * scale)
      throw SingularMatrixError("LU9: matrix is numerically singular");
    piv_[static_cast<size_t>(k)] = p;
    if (p != k)
      for (int c = 0; c < 9; ++c)
        std::swap(lu_[static_cast<size_t>(9 * k + c)], lu_[static_cast<size_t>(9 * p + c)]);
    const double inv_piv = 1.0 / lu_[static_cast<size_t>(9 * k + k)];
    for (int r = k + 1; r < 9; ++r) {
      const double f = lu_[static_cast<size_t>(9 * r + k)] * inv_piv;
      lu_[static_cast<size_t>(9 * r + k)] = f;
      if (f != 0.0)
        for (int c = k + 1; c < 9; ++c)
          lu_[static_cast<size_t>(9 * r + c)] -= f * lu_[static_cast<size_t>(9 * k + c)];
    }
  }
  double log_det = 0.0;
  for (int k = 0; k < 9; ++k)
    log_det += std::log(std::abs(lu_[static_cast<size_t>(9 * k + k)]));
  det_ratio_ = std::exp(std::min(log_det - log_hadamard, 0.0));
}

void LU9::solve_inplace(std::array<double, 9>& b) const {
  for (int k = 0; k < 9; ++k) {
    const int p = piv_[static_cast<size_t>(k)];
    if (p != k)
      std::swap(b[static_cast<size_t>(k)], b[static_cast<size_t>(p)]);
    for (int r = k + 1; r < 9; ++r)
      b[static_cast<size_t>(r)] -= lu_[static_cast<size_t>(9 * r + k)] * b[static_cast<size_t>(k)];
  }
  for (int k = 8; k >= 0; --k) {
    double s = b[static_cast<size_t>(k)];
    for (int c = k + 1; c < 9; ++c)
      s -= lu_[static_cast<size_t>(9 * k + c)] * b[static_cast<size_t>(c)];
    b[static_cast<size_t>(k)] = s / lu_[static_cast<size_t>(9 * k + k)];
  }
}

Tensor2 LU9::solve(const Tensor2& B) const {
  std::array<double, 9> b = B.m;
  solve_inplace(b);
  Tensor2 X;
  X.m = b;
  return X;
}

Tensor4 LU9::solve(const Tensor4& R) const {
  Tensor4 X;
  for (int m = 0; m < 3; ++m)
    for (int n = 0; n < 3; ++n) {
      std::array<double, 9> b{};
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          b[static_cast<size_t>(3 * i + j)] = R(i, j, m, n);
      solve_inplace(b);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          X(i, j, m, n) = b[static_cast<size_t>(3 * i + j)];
    }
  return X;
}

} // namespace tivp
