#include "radloc/aoa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace radloc::aoa {

namespace {

constexpr double kDeg = kPi / 180.0;

// Eigen-decomposition with eigenvalues ascending; ties keep the solver's index order.
struct SortedEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXcd vectors;
};

SortedEigen sorted_eigen(const Eigen::MatrixXcd& r) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(r);
  const auto m = r.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return solver.eigenvalues()(a) < solver.eigenvalues()(b); });
  SortedEigen out{Eigen::VectorXd(m), Eigen::MatrixXcd(m, m)};
  for (Eigen::Index k = 0; k < m; ++k) {
    out.values(k) = solver.eigenvalues()(order[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = solver.eigenvectors().col(order[static_cast<std::size_t>(k)]);
  }
  return out;
}

void check_pair(const ArrayCovariance& cov, const ArrayGeometry& geometry) {
  require(cov.matrix.rows() == geometry.size() && cov.matrix.cols() == geometry.size(),
          "covariance size differs from the number of elements");
  cov.validate();
}

template <class F>
AngularSpectrum evaluate(const ArrayGeometry& geometry, const std::vector<double>& grid, F&& value) {
  require(!grid.empty(), "angle grid is empty");
  for (std::size_t k = 1; k < grid.size(); ++k) require(grid[k] > grid[k - 1], "angle grid must be increasing");
  AngularSpectrum s{grid, std::vector<double>(grid.size())};
  for (std::size_t k = 0; k < grid.size(); ++k) s.values[k] = std::max(value(steering_vector(geometry, grid[k])), 0.0);
  return s;
}

}  // namespace

ArrayGeometry ArrayGeometry::ula(int n_elements, double spacing, double wavelength) {
  require(n_elements >= 2, "an array needs at least two elements");
  require(spacing > 0.0 && std::isfinite(spacing), "ULA spacing must be positive");
  require(wavelength > 0.0 && std::isfinite(wavelength), "wavelength must be positive");
  ArrayGeometry g;
  for (int m = 0; m < n_elements; ++m) g.elements_.emplace_back(m * spacing, 0.0, 0.0);
  g.wavelength_ = wavelength;
  g.spacing_ = spacing;
  return g;
}

ArrayGeometry ArrayGeometry::arbitrary(std::vector<Eigen::VectorXd> elements, double wavelength) {
  require(elements.size() >= 2, "an array needs at least two elements");
  require(wavelength > 0.0 && std::isfinite(wavelength), "wavelength must be positive");
  ArrayGeometry g;
  for (const auto& e : elements) {
    require((e.size() == 2 || e.size() == 3) && e.allFinite(), "element positions must be finite 2-D or 3-D");
    g.elements_.emplace_back(e(0), e(1), e.size() == 3 ? e(2) : 0.0);
  }
  g.wavelength_ = wavelength;
  return g;
}

Eigen::VectorXcd steering_vector(const ArrayGeometry& geometry, double angle_deg) {
  require(std::isfinite(angle_deg), "angle must be finite");
  const double t = angle_deg * kDeg;
  const Eigen::Vector3d k(std::sin(t), std::cos(t), 0.0);
  Eigen::VectorXcd a(geometry.size());
  for (int m = 0; m < geometry.size(); ++m) a(m) = std::polar(1.0, 2.0 * kPi * k.dot(geometry.elements()[m]));
  return a;
}

void ArrayCovariance::validate() const {
  require(matrix.rows() == matrix.cols() && matrix.rows() >= 1, "covariance must be square");
  require(matrix.allFinite(), "covariance must be finite");
  const double scale = std::max(matrix.cwiseAbs().maxCoeff(), 1.0);
  require((matrix - matrix.adjoint()).cwiseAbs().maxCoeff() <= 1e-10 * scale, "covariance must be Hermitian");
  const double trace = matrix.trace().real();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(matrix, Eigen::EigenvaluesOnly);
  require(solver.eigenvalues().minCoeff() >= -1e-8 * std::max(trace, 0.0) - 1e-300,
          "covariance must be positive semidefinite");
}

Snapshots synthesize_snapshots(const ArrayGeometry& geometry, const std::vector<Source>& sources,
                               double noise_power, std::size_t n_snapshots, RngSeed seed) {
  require(noise_power >= 0.0 && std::isfinite(noise_power), "noise power must be non-negative");
  const int m = geometry.size();
  Snapshots out;
  out.exact.matrix = noise_power * Eigen::MatrixXcd::Identity(m, m);
  std::vector<Eigen::VectorXcd> steer;
  for (const auto& s : sources) {
    require(s.power > 0.0 && std::isfinite(s.power), "source powers must be positive");
    steer.push_back(steering_vector(geometry, s.angle_deg));
    out.exact.matrix += s.power * steer.back() * steer.back().adjoint();
  }
  Rng rng(derive_seed(seed.value, {5}));
  const double half = std::sqrt(0.5);
  auto cgauss = [&](double power) { return std::sqrt(power) * half * Complex(rng.normal(), rng.normal()); };
  out.samples = Eigen::MatrixXcd::Zero(m, static_cast<Eigen::Index>(n_snapshots));
  for (std::size_t t = 0; t < n_snapshots; ++t) {
    auto col = out.samples.col(static_cast<Eigen::Index>(t));
    for (std::size_t k = 0; k < sources.size(); ++k) col += cgauss(sources[k].power) * steer[k];
    for (int e = 0; e < m; ++e) col(e) += cgauss(noise_power);
  }
  return out;
}

ArrayCovariance sample_covariance(const Eigen::MatrixXcd& samples) {
  require(samples.cols() >= 1, "need at least one snapshot");
  ArrayCovariance c;
  c.matrix = samples * samples.adjoint() / static_cast<double>(samples.cols());
  c.matrix = 0.5 * (c.matrix + c.matrix.adjoint()).eval();
  c.n_snapshots = static_cast<std::size_t>(samples.cols());
  return c;
}

std::vector<double> angle_grid(double lo_deg, double hi_deg, double step_deg) {
  require(step_deg > 0.0 && hi_deg >= lo_deg, "angle grid needs lo <= hi and a positive step");
  const auto n = static_cast<std::size_t>(std::floor((hi_deg - lo_deg) / step_deg + 1e-9)) + 1;
  std::vector<double> g(n);
  for (std::size_t k = 0; k < n; ++k) g[k] = lo_deg + static_cast<double>(k) * step_deg;
  return g;
}

AngularSpectrum bartlett_spectrum(const ArrayCovariance& cov, const ArrayGeometry& geometry,
                                  const std::vector<double>& grid) {
  check_pair(cov, geometry);
  return evaluate(geometry, grid, [&](const Eigen::VectorXcd& a) {
    return (a.adjoint() * cov.matrix * a).value().real() / a.squaredNorm();
  });
}

AngularSpectrum capon_spectrum(const ArrayCovariance& cov, const ArrayGeometry& geometry,
                               const std::vector<double>& grid, std::optional<double> diagonal_loading) {
  check_pair(cov, geometry);
  const int m = geometry.size();
  double loading = 0.0;
  if (diagonal_loading) {
    require(*diagonal_loading >= 0.0, "diagonal loading must be non-negative");
    loading = *diagonal_loading;
  } else if (cov.n_snapshots > 0 && cov.n_snapshots < static_cast<std::size_t>(m)) {
    loading = 1e-3 * cov.matrix.trace().real() / m;
  }
  const Eigen::MatrixXcd loaded = cov.matrix + loading * Eigen::MatrixXcd::Identity(m, m);
  const auto eig = sorted_eigen(loaded);
  const double top = eig.values(m - 1);
  if (!(top > 0.0) || eig.values(0) <= 1e-12 * top) {
    fail(ErrorCode::SingularCovariance, "covariance is singular; add diagonal loading");
  }
  const Eigen::MatrixXcd inverse =
      eig.vectors * eig.values.cwiseInverse().cast<Complex>().asDiagonal() * eig.vectors.adjoint();
  return evaluate(geometry, grid, [&](const Eigen::VectorXcd& a) {
    return 1.0 / (a.adjoint() * inverse * a).value().real();
  });
}

Eigen::MatrixXcd noise_subspace(const ArrayCovariance& cov, int n_sources) {
  const auto m = static_cast<int>(cov.matrix.rows());
  require(n_sources >= 1, "need at least one source");
  if (n_sources >= m) fail(ErrorCode::TooManySources, "at most M - 1 sources can be estimated");
  cov.validate();
  return sorted_eigen(cov.matrix).vectors.leftCols(m - n_sources);
}

AngularSpectrum music_spectrum(const ArrayCovariance& cov, const ArrayGeometry& geometry,
                               const std::vector<double>& grid, int n_sources) {
  require(cov.matrix.rows() == geometry.size(), "covariance size differs from the number of elements");
  const Eigen::MatrixXcd en = noise_subspace(cov, n_sources);
  return evaluate(geometry, grid, [&](const Eigen::VectorXcd& a) {
    const double d = (en.adjoint() * a).squaredNorm();
    return 1.0 / std::max(d, std::numeric_limits<double>::min());
  });
}

EspritResult esprit(const ArrayCovariance& cov, const ArrayGeometry& geometry, int n_sources) {
  require(geometry.is_ula(), "ESPRIT needs a uniform linear array");
  check_pair(cov, geometry);
  const int m = geometry.size();
  require(n_sources >= 1, "need at least one source");
  if (n_sources >= m) fail(ErrorCode::TooManySources, "at most M - 1 sources can be estimated");
  const auto eig = sorted_eigen(cov.matrix);
  const Eigen::MatrixXcd es = eig.vectors.rightCols(n_sources);
  const Eigen::MatrixXcd upper = es.topRows(m - 1);
  const Eigen::MatrixXcd lower = es.bottomRows(m - 1);
  const Eigen::MatrixXcd phi = upper.completeOrthogonalDecomposition().solve(lower);
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> rot(phi);

  const double spacing = *geometry.spacing();
  std::vector<std::pair<double, Complex>> found;
  for (int k = 0; k < n_sources; ++k) {
    const Complex lambda = rot.eigenvalues()(k);
    double u = std::arg(lambda) / (2.0 * kPi * spacing);
    if (std::abs(u) > 1.0 + 1e-12) fail(ErrorCode::PhaseOutOfRange, "rotation phase maps outside [-90, 90] degrees");
    u = std::clamp(u, -1.0, 1.0);
    found.emplace_back(std::asin(u) / kDeg, lambda);
  }
  std::stable_sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  EspritResult out;
  for (const auto& [angle, lambda] : found) {
    out.angles_deg.push_back(angle);
    out.eigenvalues.push_back(lambda);
  }
  return out;
}

std::vector<std::size_t> find_peaks(const AngularSpectrum& spectrum, double threshold_db) {
  const auto& v = spectrum.values;
  std::vector<std::size_t> peaks;
  if (v.empty()) return peaks;
  const double floor = *std::max_element(v.begin(), v.end()) * std::pow(10.0, -threshold_db / 10.0);
  const std::size_t n = v.size();
  for (std::size_t k = 0; k < n; ++k) {
    const bool left = k == 0 || v[k] > v[k - 1];
    const bool right = k + 1 == n || v[k] >= v[k + 1];
    if (left && right && v[k] >= floor && n > 1) peaks.push_back(k);
  }
  return peaks;
}

geomsolve::SolverReport triangulate_aoa(const std::vector<BearingObservation>& observations, int reweight_passes) {
  require(observations.size() >= 2, "triangulation needs at least two bearings");
  require(reweight_passes >= 0, "reweight_passes must be non-negative");
  std::vector<Eigen::Vector2d> normals;
  std::vector<double> offsets;
  for (const auto& o : observations) {
    require(o.observer.size() == 2 && o.observer.allFinite(), "bearing triangulation is 2-D");
    require(o.variance > 0.0 && std::isfinite(o.variance), "bearing variance must be positive");
    const double b = o.bearing_deg * kDeg;
    normals.emplace_back(-std::sin(b), std::cos(b));
    offsets.push_back(normals.back().dot(Eigen::Vector2d(o.observer(0), o.observer(1))));
  }

  auto solve = [&](const std::vector<double>& w, Eigen::Matrix2d& info) {
    info.setZero();
    Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
    for (std::size_t k = 0; k < normals.size(); ++k) {
      info += w[k] * normals[k] * normals[k].transpose();
      rhs += w[k] * offsets[k] * normals[k];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(info);
    if (!(eig.eigenvalues()(1) > 0.0) || eig.eigenvalues()(0) <= 1e-12 * eig.eigenvalues()(1)) {
      fail(ErrorCode::ParallelBearings, "bearing lines are parallel");
    }
    return Eigen::Vector2d(info.ldlt().solve(rhs));
  };

  std::vector<double> w(observations.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = 1.0 / observations[k].variance;
  Eigen::Matrix2d info;
  Eigen::Vector2d x = solve(w, info);
  int passes = 0;
  for (; passes < reweight_passes; ++passes) {
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double rho = std::max((x - Eigen::Vector2d(observations[k].observer(0), observations[k].observer(1))).norm(), 1e-9);
      w[k] = 1.0 / (observations[k].variance * rho * rho);
    }
    x = solve(w, info);
  }

  geomsolve::SolverReport report;
  report.estimate = x;
  report.iterations = passes;
  report.converged = true;
  double rss = 0.0;
  for (std::size_t k = 0; k < normals.size(); ++k) {
    const double res = normals[k].dot(x) - offsets[k];
    rss += res * res;
  }
  report.residual_norm = std::sqrt(rss);
  report.covariance = Eigen::MatrixXd(info.inverse());
  return report;
}

void write_spectrum_csv(std::ostream& out, const AngularSpectrum& spectrum) {
  out << "angle_deg,value\n";
  out.precision(17);
  for (std::size_t k = 0; k < spectrum.values.size(); ++k) out << spectrum.angles_deg[k] << ',' << spectrum.values[k] << '\n';
}

}  // namespace radloc::aoa
