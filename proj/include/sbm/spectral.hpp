#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "sbm/assembly.hpp"
#include "sbm/errors.hpp"
#include "sbm/quadrature.hpp"
#include "sbm/stats.hpp"
#include "sbm/theory.hpp"

namespace sbm {

/// Eigenvalues of one realization, ascending, with provenance.
struct Spectrum {
  std::vector<double> eigenvalues;
  int n_vertices = 0;
  int block_dim = 0;
};

inline Spectrum eigenvalues(const BlockSparseMatrix& a, int dense_limit = 5000) {
  const Eigen::MatrixXd dense = a.densify(dense_limit);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense, Eigen::EigenvaluesOnly);
  Spectrum s;
  s.n_vertices = a.n_vertices();
  s.block_dim = a.block_dim();
  s.eigenvalues.assign(solver.eigenvalues().data(),
                       solver.eigenvalues().data() + solver.eigenvalues().size());
  std::sort(s.eigenvalues.begin(), s.eigenvalues.end());
  return s;
}

struct EmpiricalMoments {
  std::vector<double> moments;   ///< mu_p = (1/(Nd)) sum lambda^p, p = 0..p_max
  std::vector<double> stderrors; ///< across realizations; empty for one realization
};

inline EmpiricalMoments empirical_moments(const Spectrum& s, int p_max) {
  if (p_max < 0) throw SpecError("empirical_moments: p_max must be >= 0");
  EmpiricalMoments out;
  out.moments.assign(static_cast<std::size_t>(p_max) + 1, 0.0);
  for (double lam : s.eigenvalues) {
    double pow_l = 1.0;
    for (int p = 0; p <= p_max; ++p) {
      out.moments[static_cast<std::size_t>(p)] += pow_l;
      pow_l *= lam;
    }
  }
  const double n = static_cast<double>(s.eigenvalues.size());
  for (auto& m : out.moments) m /= n;
  return out;
}

/// Mean and standard error of each moment across independent realizations.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(int p_max) : stats_(static_cast<std::size_t>(p_max) + 1) {}

  void add(const Spectrum& s) {
    const auto m = empirical_moments(s, static_cast<int>(stats_.size()) - 1);
    for (std::size_t p = 0; p < stats_.size(); ++p) stats_[p].add(m.moments[p]);
  }

  void add_moments(const std::vector<double>& m) {
    for (std::size_t p = 0; p < stats_.size() && p < m.size(); ++p) stats_[p].add(m[p]);
  }

  EmpiricalMoments result() const {
    EmpiricalMoments out;
    for (const auto& st : stats_) {
      out.moments.push_back(st.mean());
      out.stderrors.push_back(st.stderror());
    }
    return out;
  }

 private:
  std::vector<RunningStats> stats_;
};

/// Normalized histogram: density_i = count_i / (n * width), so the step
/// function integrates to 1 when every eigenvalue lies in range.
inline std::vector<std::pair<double, double>> esd_histogram(const Spectrum& s, int n_bins,
                                                            std::pair<double, double> range) {
  if (n_bins < 1) throw SpecError("esd_histogram: need at least one bin");
  const auto [lo, hi] = range;
  if (!(hi > lo)) throw SpecError("esd_histogram: empty range");
  const double width = (hi - lo) / n_bins;
  std::vector<double> counts(static_cast<std::size_t>(n_bins), 0.0);
  for (double lam : s.eigenvalues) {
    if (lam < lo || lam > hi) continue;
    int b = static_cast<int>((lam - lo) / width);
    b = std::clamp(b, 0, n_bins - 1);
    counts[static_cast<std::size_t>(b)] += 1.0;
  }
  const double n = static_cast<double>(s.eigenvalues.size());
  std::vector<std::pair<double, double>> out;
  out.reserve(counts.size());
  for (int b = 0; b < n_bins; ++b) {
    out.emplace_back(lo + (b + 0.5) * width, counts[static_cast<std::size_t>(b)] / (n * width));
  }
  return out;
}

/// Monotone CDF of a theory law: adaptive-trapezoid integral of a density
/// plus point masses. Evaluation interpolates linearly on the refined grid.
class TheoreticalCDF {
 public:
  TheoreticalCDF(std::function<double(double)> density, double lo, double hi,
                 std::vector<std::pair<double, double>> atoms = {}, double tol = 1e-8)
      : atoms_(std::move(atoms)) {
    xs_.push_back(lo);
    cum_.push_back(0.0);
    double mass = 0.0;
    refine(density, lo, hi, density(lo), density(hi), mass, tol, 48);
  }

  double operator()(double x) const {
    double f = 0.0;
    if (x <= xs_.front()) {
      f = 0.0;
    } else if (x >= xs_.back()) {
      f = cum_.back();
    } else {
      const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
      const std::size_t i = static_cast<std::size_t>(it - xs_.begin());
      const double w = (x - xs_[i - 1]) / (xs_[i] - xs_[i - 1]);
      f = cum_[i - 1] + w * (cum_[i] - cum_[i - 1]);
    }
    for (const auto& [pos, m] : atoms_) {
      // Small slack so zero modes computed as -1e-14 still sit on the atom.
      if (x >= pos - 1e-9) f += m;
    }
    return f;
  }

  double total_mass() const {
    double m = cum_.back();
    for (const auto& [pos, a] : atoms_) m += a;
    return m;
  }

 private:
  void refine(const std::function<double(double)>& density, double a, double b, double fa,
              double fb, double& mass, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double fm = density(m);
    const double whole = 0.5 * (b - a) * (fa + fb);
    const double split = 0.25 * (b - a) * (fa + fm) + 0.25 * (b - a) * (fm + fb);
    if (depth <= 0 || std::abs(whole - split) <= tol) {
      mass += 0.25 * (b - a) * (fa + fm);
      emit(m, mass);
      mass += 0.25 * (b - a) * (fm + fb);
      emit(b, mass);
      return;
    }
    refine(density, a, m, fa, fm, mass, 0.5 * tol, depth - 1);
    refine(density, m, b, fm, fb, mass, 0.5 * tol, depth - 1);
  }

  void emit(double x, double mass) {
    if (x > xs_.back()) {
      xs_.push_back(x);
      cum_.push_back(mass);
    } else {
      cum_.back() = mass;
    }
  }

  std::vector<double> xs_;
  std::vector<double> cum_;
  std::vector<std::pair<double, double>> atoms_;
};

/// CDF of the EMA law. The inverted density integrates to 1 for every t; for
/// t < 1 the zero atom appears as an epsilon-width spike that the adaptive
/// grid resolves, so no explicit atom is added (the laws are compared against
/// data at t >= 1, where there is no atom).
inline TheoreticalCDF ema_cdf(EmaParams p, double epsilon = 1e-8) {
  p.validate();
  const double edge = ema_support_edge(p);
  auto density = [p, epsilon](double x) { return ema_density(x, p, epsilon); };
  return TheoreticalCDF(density, -edge - 0.5, edge + 0.5);
}

/// CDF of the Marchenko-Pastur law (with its zero atom for t < 2).
inline TheoreticalCDF mp_cdf(MpParams p) {
  p.validate();
  std::vector<std::pair<double, double>> atoms;
  if (p.atom_mass() > 0.0) atoms.emplace_back(0.0, p.atom_mass());
  auto density = [p](double x) { return mp_density(x, p); };
  const double lo = p.edge_a() == 0.0 ? 1e-12 : p.edge_a();
  return TheoreticalCDF(density, lo, p.edge_b(), std::move(atoms));
}

/// Two-sided Kolmogorov-Smirnov distance between the empirical CDF of a
/// spectrum and a theoretical CDF.
inline double ks_distance(const Spectrum& s, const TheoreticalCDF& cdf) {
  if (s.eigenvalues.empty()) throw SpecError("ks_distance: empty spectrum");
  const double n = static_cast<double>(s.eigenvalues.size());
  double dist = 0.0;
  double prev_f = -1.0;
  for (std::size_t k = 0; k < s.eigenvalues.size(); ++k) {
    const double f = cdf(s.eigenvalues[k]);
    if (f < prev_f - 1e-12) {
      throw SpecError("ks_distance: cdf is not monotone on the sample points");
    }
    prev_f = std::max(prev_f, f);
    const double hi = (static_cast<double>(k) + 1.0) / n - f;
    const double lo = f - static_cast<double>(k) / n;
    dist = std::max({dist, hi, lo});
  }
  return dist;
}

}  // namespace sbm
