#include "sgo/problems.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

namespace sgo {

// ---------------------------------------------------------------------------
// Noise model
// ---------------------------------------------------------------------------

Matrix NoiseModel::sample(Index cols, Rng& rng) const {
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  Matrix z = random_matrix(rng, factor.cols(), cols);
  z *= scale;
  return factor * z;
}

Matrix NoiseModel::v_squared() const { return symmetrize(Matrix(factor * factor.transpose())); }

Matrix NoiseModel::v() const { return psd_power(v_squared(), 0.5); }

NoiseModel NoiseModel::from_v(const Matrix& v) { return NoiseModel{symmetrize(v)}; }

namespace {

// Shared stochastic-gradient wrapper: exact gradient plus the mean of `batch`
// independent noise draws on the (single) parameter matrix.
std::function<Params(const Params&, int, Rng&)> noisy_grad(
    std::function<Params(const Params&)> grad, const std::optional<NoiseModel>& noise) {
  return [grad = std::move(grad), noise](const Params& w, int batch, Rng& rng) -> Params {
    Params g = grad(w);
    if (!noise.has_value() || batch <= 0) return g;
    Matrix mean_noise = Matrix::Zero(g[0].rows(), g[0].cols());
    for (int k = 0; k < batch; ++k) mean_noise += noise->sample(g[0].cols(), rng);
    g[0] += mean_noise / static_cast<double>(batch);
    return g;
  };
}

void check_single(const Params& w, const char* who) {
  if (w.size() != 1) {
    throw std::invalid_argument(std::string(who) + ": expected exactly one parameter matrix");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Quadratic
// ---------------------------------------------------------------------------

Problem make_quadratic(const Matrix& l, const Matrix& w_star,
                       const std::optional<NoiseModel>& noise, std::uint64_t seed) {
  const Matrix ls = symmetrize(l);
  {
    const SymEig eig = sym_eig(ls);
    if (eig.eigenvalues(eig.eigenvalues.size() - 1) <= 0.0) {
      throw NotPsdError("make_quadratic: curvature matrix must be positive definite");
    }
  }
  if (ls.rows() != w_star.rows()) {
    throw DimensionMismatch("make_quadratic: L and W* row counts differ");
  }

  Problem p;
  p.name = "quadratic";
  p.groups = {GroupSpec{w_star.rows(), w_star.cols(), false, "w"}};
  Rng init_rng = Rng(seed).child("init");
  p.initial = {Matrix(w_star + random_matrix(init_rng, w_star.rows(), w_star.cols()))};
  p.eval = [ls, w_star](const Params& w) {
    check_single(w, "quadratic.eval");
    const Matrix d = w[0] - w_star;
    return 0.5 * (d.transpose() * ls * d).trace();
  };
  p.grad = [ls, w_star](const Params& w) -> Params {
    check_single(w, "quadratic.grad");
    return {Matrix(ls * (w[0] - w_star))};
  };
  p.stoch_grad = noisy_grad(p.grad, noise);
  p.minimizer = Params{w_star};
  p.smoothness = ls;
  if (noise.has_value()) p.noise_bound = noise->v();
  p.f_star = 0.0;
  return p;
}

// ---------------------------------------------------------------------------
// Low-rank regression
// ---------------------------------------------------------------------------

Problem make_lowrank_regression(const Matrix& a, const Matrix& w_star,
                                const std::optional<NoiseModel>& noise, std::uint64_t seed) {
  if (a.cols() != w_star.rows()) {
    throw DimensionMismatch("make_lowrank_regression: A columns must match W* rows");
  }
  const Matrix gram = symmetrize(Matrix(a.transpose() * a));

  Problem p;
  p.name = "lowrank-regression";
  p.groups = {GroupSpec{w_star.rows(), w_star.cols(), false, "w"}};
  Rng init_rng = Rng(seed).child("init");
  p.initial = {Matrix(w_star + random_matrix(init_rng, w_star.rows(), w_star.cols()))};
  p.eval = [a, w_star](const Params& w) {
    check_single(w, "lowrank.eval");
    return 0.5 * (a * (w[0] - w_star)).squaredNorm();
  };
  p.grad = [gram, w_star](const Params& w) -> Params {
    check_single(w, "lowrank.grad");
    return {Matrix(gram * (w[0] - w_star))};
  };
  p.stoch_grad = noisy_grad(p.grad, noise);
  p.minimizer = Params{w_star};
  p.smoothness = gram;
  if (noise.has_value()) p.noise_bound = noise->v();
  p.f_star = 0.0;
  return p;
}

Problem make_lowrank_regression(Index m, Index n, Index r,
                                const std::optional<NoiseModel>& noise, std::uint64_t seed) {
  Rng rng = Rng(seed).child("factor");
  const Matrix b = random_matrix(rng, m, r);
  const Matrix c = random_matrix(rng, r, m);
  const Matrix a = b * c;
  Rng star_rng = Rng(seed).child("w_star");
  const Matrix w_star = random_matrix(star_rng, m, n);
  return make_lowrank_regression(a, w_star, noise, seed);
}

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

namespace {

struct LogisticData {
  Matrix x;                // n_samples x dim
  std::vector<int> y;     // class labels, round-robin balanced
};

LogisticData make_logistic_data(int n_samples, Index dim, Index classes, std::uint64_t seed) {
  LogisticData data;
  Rng proto_rng = Rng(seed).child("prototypes");
  Matrix prototypes = random_matrix(proto_rng, classes, dim);
  for (Index c = 0; c < classes; ++c) {
    const double norm = prototypes.row(c).norm();
    if (norm > 0.0) prototypes.row(c) *= 2.0 / norm;
  }
  Rng x_rng = Rng(seed).child("samples");
  data.x.resize(n_samples, dim);
  data.y.resize(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) {
    const int label = i % static_cast<int>(classes);
    data.y[static_cast<std::size_t>(i)] = label;
    for (Index j = 0; j < dim; ++j) {
      data.x(i, j) = prototypes(label, j) + x_rng.next_gaussian();
    }
  }
  return data;
}

// Row-wise softmax of the logits matrix.
Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (Index i = 0; i < p.rows(); ++i) {
    const double mx = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

double logistic_loss(const LogisticData& data, double l2, const Matrix& w) {
  const Matrix logits = data.x * w;
  double total = 0.0;
  for (Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    total += lse - logits(i, data.y[static_cast<std::size_t>(i)]);
  }
  return total / static_cast<double>(data.x.rows()) + 0.5 * l2 * w.squaredNorm();
}

Matrix logistic_grad(const LogisticData& data, double l2, const Matrix& w) {
  const Index n = data.x.rows();
  Matrix residual = softmax_rows(data.x * w);
  for (Index i = 0; i < n; ++i) residual(i, data.y[static_cast<std::size_t>(i)]) -= 1.0;
  return Matrix(data.x.transpose() * residual / static_cast<double>(n) + l2 * w);
}

// Gradient of the minibatch given by `rows` (uniform with replacement).
Matrix logistic_grad_batch(const LogisticData& data, double l2, const Matrix& w,
                           const std::vector<int>& rows) {
  Matrix g = Matrix::Zero(w.rows(), w.cols());
  for (int r : rows) {
    const Eigen::RowVectorXd logits = data.x.row(r) * w;
    const double mx = logits.maxCoeff();
    Eigen::RowVectorXd p = (logits.array() - mx).exp();
    p /= p.sum();
    p(data.y[static_cast<std::size_t>(r)]) -= 1.0;
    g += data.x.row(r).transpose() * p;
  }
  g /= static_cast<double>(rows.size());
  g += l2 * w;
  return g;
}

// Full Hessian over the row-major vectorization of W (index = feature * classes
// + class), dense because the ambient dimension stays small here.
Matrix logistic_hessian(const LogisticData& data, double l2, const Matrix& w) {
  const Index n = data.x.rows();
  const Index d = w.rows();
  const Index c = w.cols();
  const Matrix probs = softmax_rows(data.x * w);
  Matrix h = Matrix::Zero(d * c, d * c);
  for (Index s = 0; s < n; ++s) {
    const auto& x = data.x.row(s);
    const auto& p = probs.row(s);
    for (Index i = 0; i < c; ++i) {
      for (Index j = 0; j < c; ++j) {
        const double pij = p(i) * ((i == j) ? 1.0 : 0.0) - p(i) * p(j);
        if (pij == 0.0) continue;
        for (Index a = 0; a < d; ++a) {
          for (Index b = 0; b < d; ++b) {
            h(a * c + i, b * c + j) += pij * x(a) * x(b);
          }
        }
      }
    }
  }
  h /= static_cast<double>(n);
  h += l2 * Matrix::Identity(d * c, d * c);
  return h;
}

Matrix newton_minimize_logistic(const LogisticData& data, double l2, Index dim, Index classes) {
  Matrix w = Matrix::Zero(dim, classes);
  for (int iter = 0; iter < 200; ++iter) {
    const Matrix g = logistic_grad(data, l2, w);
    if (g.norm() <= 1e-12) break;
    const Matrix h = logistic_hessian(data, l2, w);
    Eigen::Map<const Vector> gv(g.data(), g.size());
    const Vector delta = h.llt().solve(gv);
    Matrix step(dim, classes);
    Eigen::Map<Vector>(step.data(), step.size()) = delta;

    const double f0 = logistic_loss(data, l2, w);
    const double slope = (g.array() * step.array()).sum();
    double t = 1.0;
    Matrix candidate = w - t * step;
    for (int halvings = 0; halvings < 60; ++halvings) {
      if (logistic_loss(data, l2, candidate) <= f0 - 1e-4 * t * slope) break;
      t *= 0.5;
      candidate = w - t * step;
    }
    w = candidate;
  }
  return w;
}

std::uint64_t bytes_checksum(const char* data, std::size_t size) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::uint32_t kCacheMagic = 0x53474F57;  // "SGOW"
constexpr std::uint32_t kCacheVersion = 1;

struct CacheHeader {
  std::uint32_t magic = kCacheMagic;
  std::uint32_t version = kCacheVersion;
  std::uint64_t seed = 0;
  std::int64_t n_samples = 0;
  std::int64_t dim = 0;
  std::int64_t classes = 0;
  double l2 = 0.0;
};

bool load_cached_minimizer(const std::filesystem::path& path, const CacheHeader& expect,
                           Matrix& w) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  CacheHeader header;
  in.read(reinterpret_cast<char*>(&header), sizeof(header));
  if (!in || std::memcmp(&header, &expect, sizeof(header)) != 0) return false;
  Matrix loaded(expect.dim, expect.classes);
  in.read(reinterpret_cast<char*>(loaded.data()),
          static_cast<std::streamsize>(sizeof(double) * loaded.size()));
  std::uint64_t stored_sum = 0;
  in.read(reinterpret_cast<char*>(&stored_sum), sizeof(stored_sum));
  if (!in) return false;
  const std::uint64_t sum = bytes_checksum(reinterpret_cast<const char*>(loaded.data()),
                                           sizeof(double) * loaded.size());
  if (sum != stored_sum) return false;
  w = loaded;
  return true;
}

void store_cached_minimizer(const std::filesystem::path& path, const CacheHeader& header,
                            const Matrix& w) {
  std::error_code ec;
  std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return;  // caching is best-effort
  out.write(reinterpret_cast<const char*>(&header), sizeof(header));
  out.write(reinterpret_cast<const char*>(w.data()),
            static_cast<std::streamsize>(sizeof(double) * w.size()));
  const std::uint64_t sum =
      bytes_checksum(reinterpret_cast<const char*>(w.data()), sizeof(double) * w.size());
  out.write(reinterpret_cast<const char*>(&sum), sizeof(sum));
}

}  // namespace

std::string default_cache_dir() {
  if (const char* env = std::getenv("SGO_CACHE_DIR"); env != nullptr && *env != '\0') {
    return std::string(env);
  }
  return (std::filesystem::temp_directory_path() / "sgo-cache").string();
}

Problem make_logistic(int n_samples, Index dim, Index classes, std::uint64_t seed, double l2,
                      const std::string& cache_dir) {
  if (n_samples < 1 || dim < 1 || classes < 2) {
    throw std::invalid_argument("make_logistic: need n_samples >= 1, dim >= 1, classes >= 2");
  }
  if (l2 <= 0.0) {
    throw std::invalid_argument("make_logistic: l2 must be positive for a unique minimizer");
  }
  auto data = std::make_shared<LogisticData>(make_logistic_data(n_samples, dim, classes, seed));

  CacheHeader header;
  header.seed = seed;
  header.n_samples = n_samples;
  header.dim = dim;
  header.classes = classes;
  header.l2 = l2;

  std::ostringstream fname;
  fname << "logistic_" << n_samples << "_" << dim << "_" << classes << "_" << std::hex << seed
        << std::dec << ".bin";
  const std::filesystem::path cache_path =
      std::filesystem::path(cache_dir.empty() ? default_cache_dir() : cache_dir) / fname.str();

  Matrix w_star(dim, classes);
  if (!load_cached_minimizer(cache_path, header, w_star)) {
    w_star = newton_minimize_logistic(*data, l2, dim, classes);
    store_cached_minimizer(cache_path, header, w_star);
  }

  Problem p;
  p.name = "logistic";
  p.groups = {GroupSpec{dim, classes, false, "w"}};
  Rng init_rng = Rng(seed).child("init");
  p.initial = {Matrix(0.1 * random_matrix(init_rng, dim, classes))};
  p.eval = [data, l2](const Params& w) {
    check_single(w, "logistic.eval");
    return logistic_loss(*data, l2, w[0]);
  };
  p.grad = [data, l2](const Params& w) -> Params {
    check_single(w, "logistic.grad");
    return {logistic_grad(*data, l2, w[0])};
  };
  p.stoch_grad = [data, l2, n_samples](const Params& w, int batch, Rng& rng) -> Params {
    check_single(w, "logistic.stoch_grad");
    if (batch <= 0) return {logistic_grad(*data, l2, w[0])};
    std::vector<int> rows(static_cast<std::size_t>(batch));
    for (int& r : rows) {
      r = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(n_samples));
    }
    return {logistic_grad_batch(*data, l2, w[0], rows)};
  };
  p.minimizer = Params{w_star};
  p.f_star = logistic_loss(*data, l2, w_star);
  return p;
}

// ---------------------------------------------------------------------------
// One-hidden-layer MLP
// ---------------------------------------------------------------------------

namespace {

struct MlpData {
  Matrix x;  // n x in
  Matrix y;  // n x out
};

struct MlpForward {
  Matrix hidden;  // tanh activations, n x hidden
  Matrix pred;    // n x out
};

MlpForward mlp_forward(const Matrix& x, const Params& w) {
  MlpForward f;
  f.hidden = (x * w[0]).rowwise() + w[1].col(0).transpose();
  f.hidden = f.hidden.array().tanh().matrix();
  f.pred = (f.hidden * w[2]).rowwise() + w[3].col(0).transpose();
  return f;
}

Params mlp_gradient(const Matrix& x, const Matrix& y, const Params& w) {
  const Index n = x.rows();
  Params g(4);
  g[0] = Matrix::Zero(w[0].rows(), w[0].cols());
  g[1] = Matrix::Zero(w[1].rows(), 1);
  g[2] = Matrix::Zero(w[2].rows(), w[2].cols());
  g[3] = Matrix::Zero(w[3].rows(), 1);
  if (n == 0) return g;

  const MlpForward f = mlp_forward(x, w);
  const Matrix d_pred = (f.pred - y) / static_cast<double>(n);
  g[2] = f.hidden.transpose() * d_pred;
  g[3] = d_pred.colwise().sum().transpose();
  const Matrix d_hidden =
      ((d_pred * w[2].transpose()).array() * (1.0 - f.hidden.array().square())).matrix();
  g[0] = x.transpose() * d_hidden;
  g[1] = d_hidden.colwise().sum().transpose();
  return g;
}

}  // namespace

Problem make_mlp(Index in, Index hidden, Index out, int n_samples, std::uint64_t seed) {
  if (in < 1 || hidden < 1 || out < 1 || n_samples < 0) {
    throw std::invalid_argument("make_mlp: dimensions must be positive");
  }
  auto data = std::make_shared<MlpData>();
  Rng x_rng = Rng(seed).child("x");
  data->x = random_matrix(x_rng, n_samples, in);

  Rng teacher_rng = Rng(seed).child("teacher");
  const Matrix t1 = random_matrix(teacher_rng, in, hidden);
  const Matrix t2 = random_matrix(teacher_rng, hidden, out) / std::sqrt(static_cast<double>(hidden));
  Rng label_noise_rng = Rng(seed).child("label-noise");
  data->y = Matrix((data->x * t1).array().tanh()).eval() * t2 +
            0.1 * random_matrix(label_noise_rng, n_samples, out);

  Problem p;
  p.name = "mlp";
  p.groups = {GroupSpec{in, hidden, false, "w1"}, GroupSpec{hidden, 1, true, "b1"},
              GroupSpec{hidden, out, false, "w2"}, GroupSpec{out, 1, true, "b2"}};
  Rng init_rng = Rng(seed).child("init");
  const double scale1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double scale2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  p.initial = {Matrix(scale1 * random_matrix(init_rng, in, hidden)), Matrix::Zero(hidden, 1),
               Matrix(scale2 * random_matrix(init_rng, hidden, out)), Matrix::Zero(out, 1)};
  auto check_params = [](const Params& w) {
    if (w.size() != 4) throw std::invalid_argument("mlp: expected four parameter groups");
  };
  p.eval = [data, check_params](const Params& w) {
    check_params(w);
    if (data->x.rows() == 0) return 0.0;
    const MlpForward f = mlp_forward(data->x, w);
    return (f.pred - data->y).squaredNorm() / (2.0 * static_cast<double>(data->x.rows()));
  };
  p.grad = [data, check_params](const Params& w) -> Params {
    check_params(w);
    return mlp_gradient(data->x, data->y, w);
  };
  p.stoch_grad = [data, check_params](const Params& w, int batch, Rng& rng) -> Params {
    check_params(w);
    const Index n = data->x.rows();
    if (batch <= 0 || n == 0) return mlp_gradient(data->x, data->y, w);
    Matrix xb(batch, data->x.cols());
    Matrix yb(batch, data->y.cols());
    for (int i = 0; i < batch; ++i) {
      const Index r = static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(n));
      xb.row(i) = data->x.row(r);
      yb.row(i) = data->y.row(r);
    }
    return mlp_gradient(xb, yb, w);
  };
  return p;
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

double finite_diff_check(const Problem& p, const Params& at, double h) {
  const Params analytic = p.grad(at);
  double g_sq = 0.0;
  Index count = 0;
  for (const Matrix& g : analytic) {
    g_sq += g.squaredNorm();
    count += g.size();
  }
  const double g_rms = count > 0 ? std::sqrt(g_sq / static_cast<double>(count)) : 0.0;

  double worst = 0.0;
  Params probe = at;
  for (std::size_t gi = 0; gi < analytic.size(); ++gi) {
    for (Index i = 0; i < analytic[gi].rows(); ++i) {
      for (Index j = 0; j < analytic[gi].cols(); ++j) {
        const double saved = probe[gi](i, j);
        probe[gi](i, j) = saved + h;
        const double f_plus = p.eval(probe);
        probe[gi](i, j) = saved - h;
        const double f_minus = p.eval(probe);
        probe[gi](i, j) = saved;
        const double numeric = (f_plus - f_minus) / (2.0 * h);
        const double denom =
            std::max({std::abs(analytic[gi](i, j)), 1e-2 * g_rms, 1e-12});
        worst = std::max(worst, std::abs(numeric - analytic[gi](i, j)) / denom);
      }
    }
  }
  return worst;
}

}  // namespace sgo
