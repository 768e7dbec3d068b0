#pragma once

// Three-sketch (co-range / range / core) approximation of a matrix whose
// columns arrive as snapshots, with two-stage least-squares reconstruction.

#include "emasketch/common.hpp"

#include <cstdint>
#include <limits>
#include <utility>

namespace emasketch {

/// Sketch sizes for target rank r: k = 2r + 1, s = 2k + 1.
struct ControlDims {
  Index r = 1;
  Index k = 3;
  Index s = 7;
  Index n_s = 0;  // state dimension (rows of U)
  Index n_t = 0;  // snapshot count (columns of U)

  static ControlDims for_rank(Index r, Index n_s, Index n_t);
  void validate() const;
};

struct ControlProjections {
  Matrix Upsilon;  // k x n_s
  Matrix Omega;    // k x n_t
  Matrix Phi;      // s x n_s
  Matrix Psi;      // s x n_t
  std::uint64_t seed = 0;
};

struct ControlSketch {
  Matrix X;  // k x n_t, co-range
  Matrix Y;  // n_s x k, range
  Matrix Z;  // s x s, core
  ControlDims dims;

  static ControlSketch zeros(const ControlDims& dims);
};

/// Skinny storage of the reconstruction: U ~= Q * W.
struct CompactFactors {
  Matrix Q;  // n_s x k, orthonormal columns
  Matrix W;  // k x n_t

  Matrix expand() const { return Q * W; }
};

struct ThinQR {
  Matrix Q;  // m x min(m, n), orthonormal columns
  Matrix R;  // min(m, n) x n, upper triangular
};

/// Householder thin QR. Throws NumericalError on non-finite input.
ThinQR thin_qr(const Matrix& a);

/// Machine-epsilon cutoff max(rows, cols) * eps used when rel_tol < 0.
inline constexpr double kDefaultPinvTol = -1.0;

/// Moore-Penrose pseudo-inverse via SVD; singular values below
/// rel_tol * sigma_max are dropped.
Matrix pinv(const Matrix& m, double rel_tol = kDefaultPinvTol);

/// (sum_{i > r} sigma_i^2)^{1/2} from a full SVD; requires 0 <= r < min(rows, cols).
double tail_energy(const Matrix& u, Index r);

ControlProjections make_control_projections(std::uint64_t seed, const ControlDims& dims);

/// X = Upsilon U, Y = U Omega^T, Z = Phi U Psi^T.
ControlSketch sketch_static(const Matrix& u, const ControlProjections& proj);

/// Adds snapshot u_i (1-based column index i) to the sketch in place.
void stream_update(ControlSketch& sketch, const ControlProjections& proj,
                   const Eigen::Ref<const Vector>& u_i, Index i);

struct ControlReconstruction {
  Matrix U_tilde;
  CompactFactors factors;
};

ControlReconstruction reconstruct(const ControlSketch& sketch, const ControlProjections& proj);

}  // namespace emasketch
