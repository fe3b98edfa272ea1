#pragma once

#include <complex>
#include <vector>

#include "radloc/core.hpp"

namespace radloc::bounds {

/// Multicarrier spectrum S_l on subcarriers l = -(N-1)/2 .. (N-1)/2, N odd.
class DiscreteSpectrum {
 public:
  DiscreteSpectrum(std::vector<std::complex<double>> amplitudes, double subcarrier_spacing_hz);

  /// |S_l| = 1 on every carrier.
  static DiscreteSpectrum flat(int n_carriers, double subcarrier_spacing_hz);
  /// All energy split between the two outermost carriers.
  static DiscreteSpectrum edge(int n_carriers, double subcarrier_spacing_hz);
  /// From the power values |S_l|^2 (non-negative), in carrier order.
  static DiscreteSpectrum from_power(const std::vector<double>& power, double subcarrier_spacing_hz);

  int size() const noexcept { return static_cast<int>(amplitudes_.size()); }
  /// Subcarrier index of entry k.
  int index(int k) const noexcept { return k - (size() - 1) / 2; }
  const std::vector<std::complex<double>>& amplitudes() const noexcept { return amplitudes_; }
  double spacing() const noexcept { return spacing_; }
  /// B = N * spacing.
  double bandwidth() const noexcept { return size() * spacing_; }
  /// sum |S_l|^2.
  double energy() const;

 private:
  std::vector<std::complex<double>> amplitudes_;
  double spacing_;
};

enum class BoundKind { CRLB, ZZLB };

struct BoundResult {
  /// m^2.
  double variance = 0.0;
  /// m.
  double std = 0.0;
  BoundKind kind = BoundKind::CRLB;
};

/// beta^2 = spacing^2 sum l^2 |S_l|^2 / sum |S_l|^2. Throws ZeroEnergy.
double equivalent_bandwidth_sq(const DiscreteSpectrum& spectrum);

/// c^2 / (8 pi^2 beta^2 Es/N0). Throws ZeroEquivalentBandwidth when beta = 0.
BoundResult crlb_range_variance(const DiscreteSpectrum& spectrum, double es_over_n0);

/// phi(tau) = sum |S_l|^2 exp(j 2 pi l spacing tau) / sum |S_l|^2, so phi(0) = 1.
std::complex<double> autocorrelation(const DiscreteSpectrum& spectrum, double tau_s);

/// How the SNR enters the Gaussian tail inside the ZZLB integral.
enum class QArgument {
  /// sqrt(Es/N0) * (1 - Re phi(tau)).
  Literal,
  /// sqrt(Es/N0 * (1 - Re phi(tau))), the usual form in the ranging literature.
  RootProduct,
};

struct ZzlbOptions {
  /// Uniform panels over [0, T_o]; refined adaptively near the correlation knees.
  int quadrature_points = 256;
  QArgument argument = QArgument::Literal;
  double relative_tolerance = 1e-10;
};

/// c^2 * integral_0^T_o tau (1 - tau/T_o) Q(arg(tau)) dtau for a delay prior uniform
/// on an interval of length T_o.
BoundResult zzlb_range_variance(const DiscreteSpectrum& spectrum, double es_over_n0, double t_obs_s,
                                const ZzlbOptions& options = {});

/// Gaussian tail probability.
double q_function(double x);

/// c / BW for one dimension, sqrt(2) c / BW for two.
double tdoa_error_floor(double bandwidth_hz, int dims);

}  // namespace radloc::bounds
