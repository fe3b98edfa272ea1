#pragma once

#include <complex>
#include <iosfwd>
#include <optional>
#include <vector>

#include "radloc/core.hpp"
#include "radloc/geomsolve.hpp"
#include "radloc/rng.hpp"

namespace radloc::aoa {

using Complex = std::complex<double>;

/// Antenna element positions in wavelengths. Angles are broadside-referenced: the
/// direction of arrival at angle theta is k = (sin theta, cos theta, 0), so a ULA lies
/// along x.
class ArrayGeometry {
 public:
  /// Uniform linear array with `spacing` wavelengths between neighbours.
  static ArrayGeometry ula(int n_elements, double spacing = 0.5, double wavelength = 1.0);
  /// Arbitrary planar or 3-D layout (2- or 3-component positions).
  static ArrayGeometry arbitrary(std::vector<Eigen::VectorXd> elements, double wavelength = 1.0);

  int size() const noexcept { return static_cast<int>(elements_.size()); }
  /// Element positions padded to 3 components.
  const std::vector<Eigen::Vector3d>& elements() const noexcept { return elements_; }
  double wavelength() const noexcept { return wavelength_; }
  bool is_ula() const noexcept { return spacing_.has_value(); }
  std::optional<double> spacing() const noexcept { return spacing_; }
  /// ULA spacing above half a wavelength admits grating lobes.
  bool grating_lobe_risk() const noexcept { return spacing_ && *spacing_ > 0.5; }

 private:
  std::vector<Eigen::Vector3d> elements_;
  double wavelength_ = 1.0;
  std::optional<double> spacing_;
};

/// a_m = exp(j 2 pi <k(theta), p_m>); unit-magnitude entries, so a^H a = M.
Eigen::VectorXcd steering_vector(const ArrayGeometry& geometry, double angle_deg);

struct ArrayCovariance {
  Eigen::MatrixXcd matrix;
  /// 0 marks an exact model covariance.
  std::size_t n_snapshots = 0;

  /// Hermitian within 1e-10 and minimum eigenvalue >= -1e-8 trace.
  void validate() const;
};

struct Source {
  double angle_deg = 0.0;
  double power = 1.0;
};

struct Snapshots {
  /// M x n_snapshots.
  Eigen::MatrixXcd samples;
  /// sum_k p_k a_k a_k^H + noise_power I.
  ArrayCovariance exact;
};

/// Circular complex Gaussian sources and noise.
Snapshots synthesize_snapshots(const ArrayGeometry& geometry, const std::vector<Source>& sources,
                               double noise_power, std::size_t n_snapshots, RngSeed seed);

/// X X^H / n.
ArrayCovariance sample_covariance(const Eigen::MatrixXcd& samples);

struct AngularSpectrum {
  std::vector<double> angles_deg;
  std::vector<double> values;
};

/// lo, lo + step, ..., hi (inclusive when hi lies on the lattice). Default -90..90 by 0.1.
std::vector<double> angle_grid(double lo_deg = -90.0, double hi_deg = 90.0, double step_deg = 0.1);

/// a^H R a / a^H a.
AngularSpectrum bartlett_spectrum(const ArrayCovariance& cov, const ArrayGeometry& geometry,
                                  const std::vector<double>& grid);

/// 1 / a^H (R + loading I)^-1 a. Without an explicit loading, 1e-3 trace(R)/M is used
/// when the covariance came from fewer snapshots than elements, else 0.
/// Throws SingularCovariance if R cannot be inverted at zero loading.
AngularSpectrum capon_spectrum(const ArrayCovariance& cov, const ArrayGeometry& geometry,
                               const std::vector<double>& grid, std::optional<double> diagonal_loading = std::nullopt);

/// Eigenvectors of the M - n_sources smallest eigenvalues (stable order). Throws TooManySources.
Eigen::MatrixXcd noise_subspace(const ArrayCovariance& cov, int n_sources);

/// 1 / a^H E_n E_n^H a.
AngularSpectrum music_spectrum(const ArrayCovariance& cov, const ArrayGeometry& geometry,
                               const std::vector<double>& grid, int n_sources);

struct EspritResult {
  /// Ascending.
  std::vector<double> angles_deg;
  /// Eigenvalues of the rotation operator, in the same order as the angles.
  std::vector<Complex> eigenvalues;
};

/// Least-squares ESPRIT on the two maximally overlapping subarrays of a ULA.
/// Throws TooManySources or PhaseOutOfRange.
EspritResult esprit(const ArrayCovariance& cov, const ArrayGeometry& geometry, int n_sources);

/// Indices of local maxima within `threshold_db` of the global maximum, in angle order.
std::vector<std::size_t> find_peaks(const AngularSpectrum& spectrum, double threshold_db = 6.0);

struct BearingObservation {
  Position observer;
  /// Counter-clockwise from the x axis, degrees.
  double bearing_deg = 0.0;
  /// Bearing variance in rad^2.
  double variance = 1e-4;
};

/// Weighted LS intersection of 2-D bearing lines. Each line is weighted by
/// 1 / (variance * range^2), ranges taken from the current estimate.
/// Throws ParallelBearings.
geomsolve::SolverReport triangulate_aoa(const std::vector<BearingObservation>& observations, int reweight_passes = 3);

/// angle_deg,value rows.
void write_spectrum_csv(std::ostream& out, const AngularSpectrum& spectrum);

}  // namespace radloc::aoa
