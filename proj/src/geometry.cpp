#include "wyf/geometry.hpp"

#include "wyf/expression.hpp"

#include <fftw3.h>
#include <json.hpp>

#include <cmath>
#include <complex>
#include <mutex>

namespace wyf {

std::string to_string(BackgroundKind kind) {
  switch (kind) {
    case BackgroundKind::torus: return "torus";
    case BackgroundKind::sphere_symmetric: return "sphere_symmetric";
    case BackgroundKind::matrix: return "matrix";
  }
  return "unknown";
}

Background::Background(BackgroundKind kind, int dimension, std::shared_ptr<const Backend> backend,
                       Field mass, Field base_scalar_curvature, Field phi0, Eigen::MatrixXd nodes,
                       double spectral_radius)
    : kind_(kind),
      dimension_(dimension),
      backend_(std::move(backend)),
      mass_(std::move(mass)),
      r0_(std::move(base_scalar_curvature)),
      phi0_(std::move(phi0)),
      nodes_(std::move(nodes)),
      spectral_radius_(spectral_radius) {
  require(mass_.size() > 0, "background needs at least one node");
  require(r0_.size() == mass_.size() && phi0_.size() == mass_.size(), "background field sizes differ");
  require((mass_.array() > 0.0).all(), "mass weights must be positive");
  require(phi0_.allFinite() && r0_.allFinite(), "background fields must be finite");
  density_ = (-phi0_.array()).exp().matrix();
}

void Background::check(const Field& f) const {
  if (f.size() != mass_.size()) {
    throw ValidationError("field has " + std::to_string(f.size()) + " samples, background has " +
                          std::to_string(mass_.size()));
  }
}

Field Background::laplacian(const Field& f) const {
  check(f);
  return backend_->laplacian(f) / (scale_ * scale_);
}

Field Background::gradient_inner(const Field& f, const Field& h) const {
  check(f);
  check(h);
  return backend_->gradient_inner(f, h) / (scale_ * scale_);
}

Field Background::weighted_laplacian(const Field& f) const {
  check(f);
  return backend_->weighted_laplacian(f, phi0_) / (scale_ * scale_);
}

Eigen::MatrixXd Background::laplacian_matrix() const {
  const Index n = node_count();
  Eigen::MatrixXd m(n, n);
  Field e = Field::Zero(n);
  for (Index j = 0; j < n; ++j) {
    e[j] = 1.0;
    m.col(j) = laplacian(e);
    e[j] = 0.0;
  }
  return m;
}

Eigen::MatrixXd Background::weighted_laplacian_matrix() const {
  const Index n = node_count();
  Eigen::MatrixXd m(n, n);
  Field e = Field::Zero(n);
  for (Index j = 0; j < n; ++j) {
    e[j] = 1.0;
    m.col(j) = weighted_laplacian(e);
    e[j] = 0.0;
  }
  return m;
}

Background Background::scaled(double c) const {
  require(c > 0.0 && std::isfinite(c), "metric scale must be positive");
  Background out = *this;
  out.scale_ = scale_ * c;
  out.mass_ = mass_ * std::pow(c, dimension_);
  out.r0_ = r0_ / (c * c);
  return out;
}

Field weighted_laplacian(const Background& bg, const Field& f) { return bg.weighted_laplacian(f); }

double integrate(const Background& bg, const Field& f, bool weighted) {
  if (f.size() != bg.node_count()) throw ValidationError("field size does not match background");
  if (weighted) return (bg.mass().array() * bg.density().array() * f.array()).sum();
  return bg.mass().dot(f);
}

double inner(const Background& bg, const Field& f, const Field& h) {
  return (bg.mass().array() * bg.density().array() * f.array() * h.array()).sum();
}

double l2_norm(const Background& bg, const Field& f) { return std::sqrt(inner(bg, f, f)); }

// ---------------------------------------------------------------------------------------------
// Torus

namespace {

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class TorusBackend final : public Background::Backend {
 public:
  TorusBackend(const std::vector<int>& grid, bool dealias) : grid_(grid) {
    const int d = static_cast<int>(grid.size());
    n_ = 1;
    for (int g : grid) n_ *= g;
    nc_ = n_ / grid.back() * (grid.back() / 2 + 1);
    lap_.resize(nc_);
    deriv_.assign(d, std::vector<double>(nc_));
    for (Index c = 0; c < nc_; ++c) {
      Index rem = c;
      double k2 = 0.0;
      bool cut = false;
      std::vector<double> k(d);
      for (int j = d - 1; j >= 0; --j) {
        const Index extent = (j == d - 1) ? grid[j] / 2 + 1 : grid[j];
        const Index i = rem % extent;
        rem /= extent;
        const int kj = (i <= grid[j] / 2) ? static_cast<int>(i) : static_cast<int>(i) - grid[j];
        k[j] = kj;
        k2 += double(kj) * kj;
        if (dealias && 3 * std::abs(kj) > grid[j]) cut = true;
      }
      lap_[c] = cut ? 0.0 : -k2;
      for (int j = 0; j < d; ++j) {
        const bool nyquist = 2 * std::abs(static_cast<int>(k[j])) == grid[j];
        deriv_[j][c] = (cut || nyquist) ? 0.0 : k[j];
      }
    }
    std::vector<double> rbuf(n_);
    std::vector<std::complex<double>> cbuf(nc_);
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fwd_ = fftw_plan_dft_r2c(d, grid.data(), rbuf.data(), reinterpret_cast<fftw_complex*>(cbuf.data()),
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
    inv_ = fftw_plan_dft_c2r(d, grid.data(), reinterpret_cast<fftw_complex*>(cbuf.data()), rbuf.data(),
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
  }

  ~TorusBackend() override {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
  }

  TorusBackend(const TorusBackend&) = delete;
  TorusBackend& operator=(const TorusBackend&) = delete;

  void set_phi0(const Field& phi0) { grad_phi0_ = gradients(phi0); }

  Field laplacian(const Field& f) const override {
    auto spec = forward(f);
    for (Index c = 0; c < nc_; ++c) spec[c] *= lap_[c];
    return inverse(spec);
  }

  Field gradient_inner(const Field& f, const Field& h) const override {
    auto gf = gradients(f);
    auto gh = gradients(h);
    Field out = Field::Zero(n_);
    for (std::size_t j = 0; j < gf.size(); ++j) out.array() += gf[j].array() * gh[j].array();
    return out;
  }

  Field weighted_laplacian(const Field& f, const Field&) const override {
    const auto spec = forward(f);
    std::vector<std::complex<double>> work(nc_);
    for (Index c = 0; c < nc_; ++c) work[c] = spec[c] * lap_[c];
    Field out = inverse(work);
    for (std::size_t j = 0; j < deriv_.size(); ++j) {
      for (Index c = 0; c < nc_; ++c) work[c] = spec[c] * std::complex<double>(0.0, deriv_[j][c]);
      out.array() -= grad_phi0_[j].array() * inverse(work).array();
    }
    return out;
  }

  std::vector<Field> gradients(const Field& f) const {
    const auto spec = forward(f);
    std::vector<std::complex<double>> work(nc_);
    std::vector<Field> out;
    for (std::size_t j = 0; j < deriv_.size(); ++j) {
      for (Index c = 0; c < nc_; ++c) work[c] = spec[c] * std::complex<double>(0.0, deriv_[j][c]);
      out.push_back(inverse(work));
    }
    return out;
  }

  std::vector<std::complex<double>> forward(const Field& f) const {
    std::vector<double> in(f.data(), f.data() + n_);
    std::vector<std::complex<double>> out(nc_);
    fftw_execute_dft_r2c(fwd_, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
    return out;
  }

  Field inverse(std::vector<std::complex<double>> spec) const {
    Field out(n_);
    fftw_execute_dft_c2r(inv_, reinterpret_cast<fftw_complex*>(spec.data()), out.data());
    return out / static_cast<double>(n_);
  }

  // Fraction of spectral energy in modes whose index lies in the top third of some axis.
  double top_third_fraction(const Field& f) const {
    const auto spec = forward(f);
    const int d = static_cast<int>(grid_.size());
    double total = 0.0, top = 0.0;
    for (Index c = 0; c < nc_; ++c) {
      Index rem = c;
      bool high = false;
      for (int j = d - 1; j >= 0; --j) {
        const Index extent = (j == d - 1) ? grid_[j] / 2 + 1 : grid_[j];
        const Index i = rem % extent;
        rem /= extent;
        const int kj = (i <= grid_[j] / 2) ? static_cast<int>(i) : static_cast<int>(i) - grid_[j];
        if (3 * std::abs(kj) > grid_[j]) high = true;
      }
      const double e = std::norm(spec[c]);
      total += e;
      if (high) top += e;
    }
    return total > 0.0 ? top / total : 0.0;
  }

 private:
  std::vector<int> grid_;
  Index n_ = 0, nc_ = 0;
  std::vector<double> lap_;
  std::vector<std::vector<double>> deriv_;
  std::vector<Field> grad_phi0_;
  fftw_plan fwd_ = nullptr, inv_ = nullptr;
};

Field sample_phi0(const std::string& spec, const Eigen::MatrixXd& x) {
  const Index n = x.rows();
  const int d = static_cast<int>(x.cols());
  Field out = Field::Zero(n);
  if (spec.empty()) return out;
  if (spec.rfind("expr:", 0) == 0) {
    Expression e = Expression::parse(spec.substr(5), d);
    std::vector<double> p(d);
    for (Index i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) p[j] = x(i, j);
      out[i] = e(p.data());
    }
    return out;
  }
  if (spec.rfind("fourier:", 0) == 0) {
    nlohmann::json table;
    try {
      table = nlohmann::json::parse(spec.substr(8));
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(std::string("fourier table is not valid JSON: ") + ex.what());
    }
    require(table.is_array(), "fourier table must be a list of [k, amplitude] pairs");
    for (const auto& row : table) {
      require(row.is_array() && row.size() == 2 && row[1].is_number(),
              "fourier entry must be [k, amplitude]");
      std::vector<double> k;
      if (row[0].is_number()) k.push_back(row[0].get<double>());
      else
        for (const auto& v : row[0]) k.push_back(v.get<double>());
      require(static_cast<int>(k.size()) == d, "fourier wave vector has wrong dimension");
      for (double kj : k) require(kj == std::round(kj), "fourier wave numbers must be integers");
      const double amp = row[1].get<double>();
      for (Index i = 0; i < n; ++i) {
        double phase = 0.0;
        for (int j = 0; j < d; ++j) phase += k[j] * x(i, j);
        out[i] += amp * std::cos(phase);
      }
    }
    return out;
  }
  throw ValidationError("phi0 spec must start with 'expr:' or 'fourier:'");
}

}  // namespace

Background build_torus_background(int n, const std::vector<int>& grid, const std::string& phi0_spec,
                                  const TorusOptions& options) {
  require(n >= 1, "torus dimension must be at least 1");
  require(static_cast<int>(grid.size()) == n, "grid needs one size per axis");
  for (int g : grid) {
    require(g >= 8, "grid size " + std::to_string(g) + " too small (need >= 8 per axis)");
    require(g % 2 == 0, "grid sizes must be even");
  }
  Index total = 1;
  for (int g : grid) total *= g;
  Eigen::MatrixXd x(total, n);
  for (Index i = 0; i < total; ++i) {
    Index rem = i;
    for (int j = n - 1; j >= 0; --j) {
      x(i, j) = 2.0 * M_PI * static_cast<double>(rem % grid[j]) / grid[j];
      rem /= grid[j];
    }
  }
  Field phi0 = sample_phi0(phi0_spec, x);
  require(phi0.allFinite(), "phi0 is not finite on the grid");
  auto backend = std::make_shared<TorusBackend>(grid, options.dealias);
  const double alias = backend->top_third_fraction(phi0);
  if (alias > 1e-8) {
    throw ValidationError("phi0 is not resolved on the grid: top-third spectral energy fraction " +
                          std::to_string(alias));
  }
  backend->set_phi0(phi0);
  double radius = 0.0;
  for (int g : grid) radius += 0.25 * g * g;
  const Field mass = Field::Constant(total, std::pow(2.0 * M_PI, n) / static_cast<double>(total));
  return Background(BackgroundKind::torus, n, backend, mass, Field::Zero(total), phi0, x, radius);
}

// ---------------------------------------------------------------------------------------------
// Zonal sphere

void gauss_jacobi(int count, double alpha, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(count, count);
  for (int k = 1; k < count; ++k) {
    const double kk = k;
    const double b = kk * (kk + 2.0 * alpha) /
                     ((2.0 * kk + 2.0 * alpha + 1.0) * (2.0 * kk + 2.0 * alpha - 1.0));
    j(k, k - 1) = j(k - 1, k) = std::sqrt(b);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  const double mu0 = std::sqrt(M_PI) * std::tgamma(alpha + 1.0) / std::tgamma(alpha + 1.5);
  nodes = es.eigenvalues();
  weights = mu0 * es.eigenvectors().row(0).transpose().array().square();
}

double sphere_volume(int n, double radius) {
  return 2.0 * std::pow(M_PI, 0.5 * (n + 1)) / std::tgamma(0.5 * (n + 1)) * std::pow(radius, n);
}

namespace {

class SphereBackend final : public Background::Backend {
 public:
  SphereBackend(int n, const Eigen::VectorXd& x) {
    const Index count = x.size();
    Eigen::VectorXd w(count);
    for (Index i = 0; i < count; ++i) {
      double p = 1.0;
      for (Index k = 0; k < count; ++k)
        if (k != i) p *= 2.0 * (x[i] - x[k]);
      w[i] = 1.0 / p;
    }
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(count, count);
    for (Index i = 0; i < count; ++i) {
      double diag = 0.0;
      for (Index k = 0; k < count; ++k) {
        if (k == i) continue;
        d(i, k) = (w[k] / w[i]) / (x[i] - x[k]);
        diag -= d(i, k);
      }
      d(i, i) = diag;
    }
    const Eigen::VectorXd s = 1.0 - x.array().square();
    derivative_ = d;
    sin2_ = s;
    laplacian_ = s.asDiagonal() * (d * d) - double(n) * (x.asDiagonal() * d);
  }

  Field laplacian(const Field& f) const override { return laplacian_ * f; }

  Field gradient_inner(const Field& f, const Field& h) const override {
    return (sin2_.array() * (derivative_ * f).array() * (derivative_ * h).array()).matrix();
  }

  const Eigen::MatrixXd& matrix() const { return laplacian_; }

 private:
  Eigen::MatrixXd derivative_, laplacian_;
  Eigen::VectorXd sin2_;
};

// Largest eigenvalue of -mass^{-1} A for A self-adjoint against mass.
double weighted_spectral_radius(const Eigen::MatrixXd& lap, const Field& mass) {
  const Eigen::VectorXd s = mass.array().sqrt();
  Eigen::MatrixXd sym = s.asDiagonal() * (-lap) * s.cwiseInverse().asDiagonal();
  sym = 0.5 * (sym + sym.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
}

}  // namespace

Background build_sphere_background(int n, int node_count, double radius) {
  require(n >= 2, "sphere dimension must be at least 2");
  require(node_count >= 32, "sphere node_count must be at least 32");
  require(radius > 0.0, "sphere radius must be positive");
  Eigen::VectorXd x, w;
  gauss_jacobi(node_count, 0.5 * (n - 2), x, w);
  const double omega = sphere_volume(n - 1);
  Field mass = omega * w;
  auto backend = std::make_shared<SphereBackend>(n, x);
  Eigen::MatrixXd theta(node_count, 1);
  theta.col(0) = x.array().acos();
  const double rho = weighted_spectral_radius(backend->matrix(), mass);
  Background bg(BackgroundKind::sphere_symmetric, n, backend, mass,
                Field::Constant(node_count, double(n) * (n - 1)), Field::Zero(node_count), theta, rho);
  return radius == 1.0 ? bg : bg.scaled(radius);
}

Background build_unit_volume_sphere(int n, int node_count) {
  return build_sphere_background(n, node_count, std::pow(sphere_volume(n), -1.0 / n));
}

// ---------------------------------------------------------------------------------------------
// Matrix

namespace {

class MatrixBackend final : public Background::Backend {
 public:
  MatrixBackend(const Field& mass, const Eigen::MatrixXd& stiffness)
      : laplacian_(-(mass.cwiseInverse().asDiagonal() * stiffness)) {}

  Field laplacian(const Field& f) const override { return laplacian_ * f; }

  Field gradient_inner(const Field& f, const Field& h) const override {
    const Field fh = f.cwiseProduct(h);
    return 0.5 * (laplacian(fh) - f.cwiseProduct(laplacian(h)) - h.cwiseProduct(laplacian(f)));
  }

  const Eigen::MatrixXd& matrix() const { return laplacian_; }

 private:
  Eigen::MatrixXd laplacian_;
};

}  // namespace

Background build_matrix_background(const Field& mass, const Eigen::MatrixXd& stiffness, const Field& r0,
                                   const Field& phi0, int dimension) {
  const Index n = mass.size();
  require(n > 0, "matrix background needs nodes");
  require(stiffness.rows() == n && stiffness.cols() == n, "stiffness must be N x N");
  require(r0.size() == n && phi0.size() == n, "R0 and phi0 must have N samples");
  require((mass.array() > 0.0).all(), "mass weights must be positive");
  const double scale = std::max(1.0, stiffness.cwiseAbs().maxCoeff());
  require((stiffness - stiffness.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
          "stiffness matrix is not symmetric");
  require(stiffness.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-10 * scale,
          "stiffness rows must sum to zero");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(stiffness, Eigen::EigenvaluesOnly);
  require(es.eigenvalues().minCoeff() >= -1e-10 * scale, "stiffness matrix is not positive semidefinite");
  auto backend = std::make_shared<MatrixBackend>(mass, stiffness);
  Eigen::MatrixXd idx(n, 1);
  for (Index i = 0; i < n; ++i) idx(i, 0) = double(i);
  const double rho = weighted_spectral_radius(backend->matrix(), mass);
  return Background(BackgroundKind::matrix, dimension, backend, mass, r0, phi0, idx, rho);
}

}  // namespace wyf
