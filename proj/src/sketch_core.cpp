#include "emasketch/sketch_core.hpp"

#include "emasketch/random.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>

namespace emasketch {

ControlDims ControlDims::for_rank(Index r, Index n_s, Index n_t) {
  ControlDims d;
  d.r = r;
  d.k = 2 * r + 1;
  d.s = 2 * d.k + 1;
  d.n_s = n_s;
  d.n_t = n_t;
  d.validate();
  return d;
}

void ControlDims::validate() const {
  if (r < 1) throw ConfigError("ControlDims: rank must be positive");
  if (k != 2 * r + 1 || s != 2 * k + 1)
    throw ConfigError("ControlDims: require k = 2r+1 and s = 2k+1");
  if (n_s < 1 || n_t < 1) throw ConfigError("ControlDims: empty matrix dimensions");
  if (r > std::min(n_s, n_t))
    throw ConfigError("ControlDims: rank " + std::to_string(r) + " exceeds min(n_s, n_t)");
}

ControlSketch ControlSketch::zeros(const ControlDims& dims) {
  dims.validate();
  return {Matrix::Zero(dims.k, dims.n_t), Matrix::Zero(dims.n_s, dims.k),
          Matrix::Zero(dims.s, dims.s), dims};
}

ThinQR thin_qr(const Matrix& a) {
  if (!a.allFinite()) throw NumericalError("thin_qr: non-finite input " + shape_str(a));
  const Index m = a.rows();
  const Index n = a.cols();
  const Index p = std::min(m, n);
  Eigen::HouseholderQR<Matrix> qr(a);
  ThinQR out;
  out.Q = qr.householderQ() * Matrix::Identity(m, p);
  out.R = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  if (!out.Q.allFinite() || !out.R.allFinite())
    throw NumericalError("thin_qr: factorization produced non-finite values");
  return out;
}

Matrix pinv(const Matrix& m, double rel_tol) {
  if (m.size() == 0) return Matrix::Zero(m.cols(), m.rows());
  if (!m.allFinite()) throw NumericalError("pinv: non-finite input " + shape_str(m));
  if (rel_tol < 0.0)
    rel_tol = static_cast<double>(std::max(m.rows(), m.cols())) *
              std::numeric_limits<double>::epsilon();
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericalError("pinv: SVD failed");
  const Vector& sv = svd.singularValues();
  const double cutoff = rel_tol * (sv.size() > 0 ? sv(0) : 0.0);
  Vector inv = Vector::Zero(sv.size());
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff && sv(i) > 0.0) inv(i) = 1.0 / sv(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

double tail_energy(const Matrix& u, Index r) {
  const Index p = std::min(u.rows(), u.cols());
  if (r < 0 || r >= p)
    throw ShapeError("tail_energy: rank " + std::to_string(r) + " out of range for " +
                     shape_str(u));
  Eigen::BDCSVD<Matrix> svd(u);
  if (svd.info() != Eigen::Success) throw NumericalError("tail_energy: SVD failed");
  return svd.singularValues().tail(p - r).norm();
}

ControlProjections make_control_projections(std::uint64_t seed, const ControlDims& dims) {
  dims.validate();
  GaussianStream g(seed);
  ControlProjections p;
  p.Upsilon = g.normal_matrix(dims.k, dims.n_s);
  p.Omega = g.normal_matrix(dims.k, dims.n_t);
  p.Phi = g.normal_matrix(dims.s, dims.n_s);
  p.Psi = g.normal_matrix(dims.s, dims.n_t);
  p.seed = seed;
  return p;
}

namespace {

ControlDims dims_of(const ControlProjections& proj) {
  ControlDims d;
  d.k = proj.Upsilon.rows();
  d.r = (d.k - 1) / 2;
  d.s = proj.Phi.rows();
  d.n_s = proj.Upsilon.cols();
  d.n_t = proj.Omega.cols();
  require_shape(proj.Omega, d.k, d.n_t, "Omega");
  require_shape(proj.Phi, d.s, d.n_s, "Phi");
  require_shape(proj.Psi, d.s, d.n_t, "Psi");
  d.validate();
  return d;
}

}  // namespace

ControlSketch sketch_static(const Matrix& u, const ControlProjections& proj) {
  const ControlDims d = dims_of(proj);
  require_shape(u, d.n_s, d.n_t, "sketch_static: U");
  ControlSketch sk;
  sk.dims = d;
  sk.X = proj.Upsilon * u;
  sk.Y = u * proj.Omega.transpose();
  sk.Z = (proj.Phi * u) * proj.Psi.transpose();
  return sk;
}

void stream_update(ControlSketch& sketch, const ControlProjections& proj,
                   const Eigen::Ref<const Vector>& u_i, Index i) {
  const ControlDims& d = sketch.dims;
  if (i < 1 || i > d.n_t)
    throw ShapeError("stream_update: column index " + std::to_string(i) + " outside [1, " +
                     std::to_string(d.n_t) + "]");
  if (u_i.size() != d.n_s) throw ShapeError("stream_update: snapshot length mismatch");
  const Index c = i - 1;
  // X += (Upsilon u) e_i^T touches only column i.
  sketch.X.col(c).noalias() += proj.Upsilon * u_i;
  sketch.Y.noalias() += u_i * proj.Omega.col(c).transpose();
  const Vector phi_u = proj.Phi * u_i;
  sketch.Z.noalias() += phi_u * proj.Psi.col(c).transpose();
}

ControlReconstruction reconstruct(const ControlSketch& sketch, const ControlProjections& proj) {
  const ControlDims d = dims_of(proj);
  require_shape(sketch.X, d.k, d.n_t, "reconstruct: X");
  require_shape(sketch.Y, d.n_s, d.k, "reconstruct: Y");
  require_shape(sketch.Z, d.s, d.s, "reconstruct: Z");

  const ThinQR qr_x = thin_qr(sketch.X.transpose());  // X^T = P R1
  const ThinQR qr_y = thin_qr(sketch.Y);              // Y = Q R2
  const Matrix& P = qr_x.Q;
  const Matrix& Q = qr_y.Q;

  const Matrix left = pinv(proj.Phi * Q);
  const Matrix right = pinv(proj.Psi * P);
  const Matrix C = left * sketch.Z * right.transpose();

  ControlReconstruction out;
  out.factors.Q = Q;
  out.factors.W = C * P.transpose();
  out.U_tilde = out.factors.Q * out.factors.W;
  if (!out.U_tilde.allFinite()) throw NumericalError("reconstruct: non-finite result");
  return out;
}

}  // namespace emasketch
