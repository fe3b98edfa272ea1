#include "radloc/bounds.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>

namespace radloc::bounds {

namespace {

double power_at(const DiscreteSpectrum& s, int k) { return std::norm(s.amplitudes()[static_cast<std::size_t>(k)]); }

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
                        double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

DiscreteSpectrum::DiscreteSpectrum(std::vector<std::complex<double>> amplitudes, double subcarrier_spacing_hz)
    : amplitudes_(std::move(amplitudes)), spacing_(subcarrier_spacing_hz) {
  require(!amplitudes_.empty(), "spectrum needs at least one carrier");
  require(amplitudes_.size() % 2 == 1, "carrier count must be odd");
  require(spacing_ > 0.0 && std::isfinite(spacing_), "subcarrier spacing must be positive");
  for (const auto& a : amplitudes_) require(std::isfinite(a.real()) && std::isfinite(a.imag()), "amplitudes must be finite");
}

DiscreteSpectrum DiscreteSpectrum::flat(int n_carriers, double subcarrier_spacing_hz) {
  require(n_carriers >= 1, "carrier count must be positive");
  return {std::vector<std::complex<double>>(static_cast<std::size_t>(n_carriers), 1.0), subcarrier_spacing_hz};
}

DiscreteSpectrum DiscreteSpectrum::edge(int n_carriers, double subcarrier_spacing_hz) {
  require(n_carriers >= 1, "carrier count must be positive");
  std::vector<std::complex<double>> a(static_cast<std::size_t>(n_carriers), 0.0);
  a.front() = 1.0;
  a.back() = 1.0;
  return {std::move(a), subcarrier_spacing_hz};
}

DiscreteSpectrum DiscreteSpectrum::from_power(const std::vector<double>& power, double subcarrier_spacing_hz) {
  std::vector<std::complex<double>> a;
  for (double p : power) {
    require(p >= 0.0 && std::isfinite(p), "power values must be non-negative");
    a.emplace_back(std::sqrt(p), 0.0);
  }
  return {std::move(a), subcarrier_spacing_hz};
}

double DiscreteSpectrum::energy() const {
  double e = 0.0;
  for (const auto& a : amplitudes_) e += std::norm(a);
  return e;
}

double equivalent_bandwidth_sq(const DiscreteSpectrum& spectrum) {
  const double e = spectrum.energy();
  if (!(e > 0.0)) fail(ErrorCode::ZeroEnergy, "spectrum has no energy");
  double moment = 0.0;
  for (int k = 0; k < spectrum.size(); ++k) {
    const double l = spectrum.index(k);
    moment += l * l * power_at(spectrum, k);
  }
  return spectrum.spacing() * spectrum.spacing() * moment / e;
}

BoundResult crlb_range_variance(const DiscreteSpectrum& spectrum, double es_over_n0) {
  require(es_over_n0 > 0.0 && std::isfinite(es_over_n0), "Es/N0 must be positive");
  const double beta_sq = equivalent_bandwidth_sq(spectrum);
  if (!(beta_sq > 0.0)) fail(ErrorCode::ZeroEquivalentBandwidth, "equivalent bandwidth is zero");
  const double var = kSpeedOfLight * kSpeedOfLight / (8.0 * kPi * kPi * beta_sq * es_over_n0);
  return {var, std::sqrt(var), BoundKind::CRLB};
}

std::complex<double> autocorrelation(const DiscreteSpectrum& spectrum, double tau_s) {
  const double e = spectrum.energy();
  if (!(e > 0.0)) fail(ErrorCode::ZeroEnergy, "spectrum has no energy");
  std::complex<double> s = 0.0;
  for (int k = 0; k < spectrum.size(); ++k) {
    s += power_at(spectrum, k) * std::polar(1.0, 2.0 * kPi * spectrum.index(k) * spectrum.spacing() * tau_s);
  }
  return s / e;
}

double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

BoundResult zzlb_range_variance(const DiscreteSpectrum& spectrum, double es_over_n0, double t_obs_s,
                                const ZzlbOptions& options) {
  require(es_over_n0 >= 0.0 && std::isfinite(es_over_n0), "Es/N0 must be non-negative");
  require(t_obs_s > 0.0 && std::isfinite(t_obs_s), "observation interval must be positive");
  require(options.quadrature_points >= 64, "ZZLB needs at least 64 quadrature points");
  require(options.relative_tolerance > 0.0, "quadrature tolerance must be positive");
  const double e = spectrum.energy();
  if (!(e > 0.0)) fail(ErrorCode::ZeroEnergy, "spectrum has no energy");

  // Re phi only needs the symmetric cosine sum.
  std::vector<std::pair<double, double>> terms;
  for (int k = 0; k < spectrum.size(); ++k) {
    const double p = power_at(spectrum, k);
    if (p > 0.0) terms.emplace_back(2.0 * kPi * spectrum.index(k) * spectrum.spacing(), p / e);
  }
  // 1 - Re phi = sum p (1 - cos w tau) = sum 2 p sin^2(w tau / 2), accurate near tau = 0.
  auto one_minus_re_phi = [&](double tau) {
    double s = 0.0;
    for (const auto& [w, p] : terms) {
      const double h = std::sin(0.5 * w * tau);
      s += 2.0 * p * h * h;
    }
    return std::max(s, 0.0);
  };
  const double root_snr = std::sqrt(es_over_n0);
  auto integrand = [&](double tau) {
    const double g = one_minus_re_phi(tau);
    const double arg = options.argument == QArgument::Literal ? root_snr * g : std::sqrt(es_over_n0 * g);
    return tau * (1.0 - tau / t_obs_s) * q_function(arg);
  };

  // Panel breakpoints: a uniform grid plus geometric ladders at the knees where the
  // Q argument reaches order one, near tau = 0 and near every correlation peak k/spacing.
  std::vector<double> cuts;
  const int n = options.quadrature_points;
  for (int i = 0; i <= n; ++i) cuts.push_back(t_obs_s * i / n);
  const double beta_sq = equivalent_bandwidth_sq(spectrum);
  if (beta_sq > 0.0 && es_over_n0 > 0.0) {
    const double beta = std::sqrt(beta_sq);
    std::vector<double> knees{1.0 / (kPi * beta * std::sqrt(2.0 * es_over_n0)),
                              1.0 / (kPi * beta * std::sqrt(2.0) * std::pow(es_over_n0, 0.25))};
    std::vector<double> peaks{0.0};
    const double period = 1.0 / spectrum.spacing();
    for (double c = period; c <= t_obs_s && peaks.size() < 64; c += period) peaks.push_back(c);
    for (double centre : peaks) {
      for (double knee : knees) {
        for (int j = -12; j <= 12; ++j) {
          const double off = knee * std::ldexp(1.0, j);
          for (double t : {centre - off, centre + off}) {
            if (t > 0.0 && t < t_obs_s) cuts.push_back(t);
          }
        }
      }
    }
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  // A plain Simpson pass per panel sets the scale for the adaptive tolerance.
  const std::function<double(double)> f = integrand;
  std::vector<std::array<double, 3>> ends;
  double rough = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i], b = cuts[i + 1];
    ends.push_back({f(a), f(0.5 * (a + b)), f(b)});
    rough += (b - a) / 6.0 * (ends.back()[0] + 4.0 * ends.back()[1] + ends.back()[2]);
  }
  const double scale = t_obs_s * t_obs_s / 12.0;
  const double tol = options.relative_tolerance * std::max(std::abs(rough), 1e-300) / static_cast<double>(ends.size());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i], b = cuts[i + 1];
    const auto& [fa, fm, fb] = ends[i];
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    total += adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 30);
  }
  const double var = std::clamp(kSpeedOfLight * kSpeedOfLight * total, 0.0,
                                kSpeedOfLight * kSpeedOfLight * scale);
  return {var, std::sqrt(var), BoundKind::ZZLB};
}

double tdoa_error_floor(double bandwidth_hz, int dims) {
  require(bandwidth_hz > 0.0 && std::isfinite(bandwidth_hz), "bandwidth must be positive");
  require(dims == 1 || dims == 2, "dims must be 1 or 2");
  const double floor = kSpeedOfLight / bandwidth_hz;
  return dims == 1 ? floor : std::sqrt(2.0) * floor;
}

}  // namespace radloc::bounds
