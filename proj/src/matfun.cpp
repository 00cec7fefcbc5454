#include "sgo/matfun.hpp"

#include <Eigen/LU>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sgo {

NsCoefficients NsCoefficients::quintic() { return NsCoefficients{{{2.0, -1.5, 0.5}}}; }

NsCoefficients polar_express_schedule() {
  return NsCoefficients{{
      {8.28721201814563, -23.595886519098837, 17.300387312530933},
      {4.107059111542203, -2.9478499167379106, 0.5448431082926601},
      {3.9486908534822946, -2.908902115962949, 0.5518191394370137},
      {3.3184196573706015, -2.488488024314874, 0.51004894012372},
      {2.300652019954817, -1.6689039845747493, 0.4188073119525673},
      {1.891301407787398, -1.2679958271945868, 0.37680408948524835},
      {1.8750014808534479, -1.2500016453999487, 0.3750001645474248},
      {1.875, -1.25, 0.375},
      {1.875, -1.25, 0.375},
      {1.875, -1.25, 0.375},
  }};
}

namespace {

void check_steps(const NsCoefficients& coeffs, int steps, const char* op) {
  if (steps < 1) {
    throw std::invalid_argument(std::string(op) + ": steps must be >= 1");
  }
  if (coeffs.schedule.empty()) {
    throw std::invalid_argument(std::string(op) + ": empty coefficient schedule");
  }
  if (!coeffs.fixed() && static_cast<std::size_t>(steps) > coeffs.schedule.size()) {
    std::ostringstream os;
    os << op << ": steps " << steps << " exceeds schedule length " << coeffs.schedule.size();
    throw std::invalid_argument(os.str());
  }
}

const std::array<double, 3>& step_coeffs(const NsCoefficients& coeffs, int k) {
  return coeffs.fixed() ? coeffs.schedule[0] : coeffs.schedule[static_cast<std::size_t>(k)];
}

double pair_residual(const Matrix& z, const Matrix& x) {
  const Index n = x.rows();
  return (z * x * z - Matrix::Identity(n, n)).norm() / std::sqrt(static_cast<double>(n));
}

// Symmetry gate shared by the kernel entry points: near-symmetric inputs are
// symmetrized, anything else is rejected.
Matrix gated_symmetrize(const Matrix& x, const char* op) {
  const double asym = (x - x.transpose()).norm();
  if (asym > 1e-8 * x.norm()) {
    throw NotSymmetricError(std::string(op) + " requires a symmetric input");
  }
  return symmetrize(x);
}

}  // namespace

NsResult ns_sqrt_inverse(const Matrix& x, const NsCoefficients& coeffs, int steps, double eps,
                         double lambda_floor) {
  check_steps(coeffs, steps, "ns_sqrt_inverse");
  Matrix xt = gated_symmetrize(x, "ns_sqrt_inverse");
  const Index n = xt.rows();
  if (lambda_floor > 0.0) xt += lambda_floor * Matrix::Identity(n, n);

  const double alpha = xt.norm() + eps;
  if (alpha == 0.0) {
    throw SingularMatrixError("ns_sqrt_inverse: zero input with eps == 0");
  }
  Matrix y = xt / alpha;
  Matrix z = Matrix::Identity(n, n);

  for (int k = 0; k < steps; ++k) {
    const auto& [a, b, c] = step_coeffs(coeffs, k);
    const Matrix az = z * y;
    const Matrix bmat = b * az + c * (az * az);
    y = a * y + y * bmat;
    z = a * z + bmat * z;
    if (!y.allFinite() || !z.allFinite()) {
      std::ostringstream os;
      os << "ns_sqrt_inverse diverged at iteration " << (k + 1);
      throw DivergenceError(os.str(), k + 1);
    }
  }

  NsResult out;
  const double root_alpha = std::sqrt(alpha);
  out.sqrt = symmetrize(Matrix(root_alpha * y));
  out.inv_sqrt = symmetrize(Matrix(z / root_alpha));
  out.iterations = steps;
  out.residual = pair_residual(out.inv_sqrt, xt);
  return out;
}

NsResult denman_beavers_inv_sqrt(const Matrix& x, int max_steps, double tol) {
  if (max_steps < 1) {
    throw std::invalid_argument("denman_beavers_inv_sqrt: max_steps must be >= 1");
  }
  const Matrix xt = gated_symmetrize(x, "denman_beavers_inv_sqrt");
  const Index n = xt.rows();
  Matrix y = xt;
  Matrix z = Matrix::Identity(n, n);

  int taken = 0;
  for (int k = 0; k < max_steps; ++k) {
    Eigen::FullPivLU<Matrix> lu_y(y);
    Eigen::FullPivLU<Matrix> lu_z(z);
    if (!lu_y.isInvertible() || !lu_z.isInvertible()) {
      throw SingularMatrixError(
          "denman_beavers_inv_sqrt: singular iterate; damp the input (add eps*I) upstream");
    }
    const Matrix y_next = symmetrize(Matrix(0.5 * (y + lu_z.inverse())));
    const Matrix z_next = symmetrize(Matrix(0.5 * (z + lu_y.inverse())));
    const double change = (y_next - y).norm();
    const double scale = y.norm();
    y = y_next;
    z = z_next;
    taken = k + 1;
    if (!y.allFinite() || !z.allFinite()) {
      throw DivergenceError("denman_beavers_inv_sqrt diverged", taken);
    }
    if (change <= tol * scale) break;
  }

  NsResult out;
  out.sqrt = y;
  out.inv_sqrt = z;
  out.iterations = taken;
  out.residual = pair_residual(out.inv_sqrt, xt);
  return out;
}

BlockMsignErrors block_msign_check(const Matrix& x, const NsCoefficients& coeffs, int steps) {
  check_steps(coeffs, steps, "block_msign_check");
  const Matrix xt = gated_symmetrize(x, "block_msign_check");
  const Index n = xt.rows();
  const double alpha = xt.norm();
  if (alpha == 0.0) {
    throw SingularMatrixError("block_msign_check: zero input");
  }

  Matrix m = Matrix::Zero(2 * n, 2 * n);
  m.topRightCorner(n, n) = xt / alpha;
  m.bottomLeftCorner(n, n) = Matrix::Identity(n, n);

  for (int k = 0; k < steps; ++k) {
    const auto& [a, b, c] = step_coeffs(coeffs, k);
    const Matrix m2 = m * m;
    m = a * m + b * (m2 * m) + c * (m2 * m2 * m);
    if (!m.allFinite()) {
      throw DivergenceError("block_msign_check diverged", k + 1);
    }
  }

  const double root_alpha = std::sqrt(alpha);
  const Matrix sqrt_est = root_alpha * m.topRightCorner(n, n);
  const Matrix inv_sqrt_est = m.bottomLeftCorner(n, n) / root_alpha;

  const Matrix sqrt_ref = psd_power(xt, 0.5);
  const Matrix inv_sqrt_ref = psd_power(xt, -0.5);

  BlockMsignErrors out;
  out.sqrt_err = (sqrt_est - sqrt_ref).norm() / std::max(sqrt_ref.norm(), 1e-300);
  out.inv_sqrt_err = (inv_sqrt_est - inv_sqrt_ref).norm() / std::max(inv_sqrt_ref.norm(), 1e-300);
  return out;
}

}  // namespace sgo
