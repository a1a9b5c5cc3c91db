#pragma once

#include <Eigen/Eigenvalues>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <vector>

#include "sbm/errors.hpp"
#include "sbm/quadrature.hpp"
#include "sbm/tpoly.hpp"

namespace sbm {

/// Parameter of the Effective Medium Approximation, t = r Z / d.
struct EmaParams {
  double t = 1.0;

  void validate() const {
    if (!(t > 0.0)) throw SpecError("ema: t must be positive");
  }
};

/// Marchenko-Pastur limit of the block Laplacian. The density
/// sqrt((b-x)(x-a))/(4 pi x) on [a, b] integrates to min(1, t/2); the law is
/// completed by an atom at 0 of mass max(0, 1 - t/2), which matches the
/// deterministic kernel of the assembled Laplacian (rank <= |E| = NZ/2 out of
/// Nd rows, so a zero fraction of at least 1 - t/2 for rank-one blocks).
struct MpParams {
  double t = 1.0;

  void validate() const {
    if (!(t > 0.0)) throw SpecError("mp: t must be positive");
  }
  double edge_a() const { return std::pow(std::sqrt(t) - std::sqrt(2.0), 2); }
  double edge_b() const { return std::pow(std::sqrt(t) + std::sqrt(2.0), 2); }
  double atom_mass() const { return std::max(0.0, 1.0 - t / 2.0); }
};

namespace detail {

/// All roots of g^3 + c2 g^2 + c1 g + c0. The cubic is first rescaled to
/// O(1) coefficients (near the real axis 1/z blows the raw coefficients up
/// and Cardano cancels catastrophically), solved in closed form, and
/// Newton-polished in the scaled variable.
inline std::array<std::complex<double>, 3> cubic_roots(std::complex<double> c2,
                                                       std::complex<double> c1,
                                                       std::complex<double> c0) {
  using C = std::complex<double>;
  const double s = std::max({1.0, std::abs(c2), std::sqrt(std::abs(c1)),
                             std::cbrt(std::abs(c0))});
  const C b2 = c2 / s;
  const C b1 = c1 / (s * s);
  const C b0 = c0 / (s * s * s);

  const C shift = b2 / 3.0;
  const C p = b1 - b2 * b2 / 3.0;
  const C q = 2.0 * b2 * b2 * b2 / 27.0 - b2 * b1 / 3.0 + b0;
  if (std::abs(p) < 1e-300 && std::abs(q) < 1e-300) {
    const C w = -shift * s;
    return {w, w, w};  // triple root
  }
  const C disc = q * q / 4.0 + p * p * p / 27.0;
  const C sq = std::sqrt(disc);
  C u3 = -q / 2.0 + sq;
  if (std::abs(u3) < std::abs(-q / 2.0 - sq)) u3 = -q / 2.0 - sq;
  const C u = std::pow(u3, 1.0 / 3.0);
  const C omega(-0.5, std::sqrt(3.0) / 2.0);

  auto eval = [&](C w) { return ((w + b2) * w + b1) * w + b0; };
  auto scale_at = [&](C w) {
    const double aw = std::abs(w);
    return std::max({aw * aw * aw, std::abs(b2) * aw * aw, std::abs(b1) * aw,
                     std::abs(b0), 1e-300});
  };

  std::array<C, 3> roots;
  bool ok = true;
  for (int k = 0; k < 3; ++k) {
    C uk = u;
    if (k == 1) uk *= omega;
    if (k == 2) uk *= std::conj(omega);
    C w = uk - p / (3.0 * uk) - shift;
    for (int it = 0; it < 8; ++it) {  // Newton polish on the scaled cubic
      const C df = (3.0 * w + 2.0 * b2) * w + b1;
      if (std::abs(df) == 0.0) break;
      const C step = eval(w) / df;
      w -= step;
      if (std::abs(step) < 1e-17 * std::max(1.0, std::abs(w))) break;
    }
    ok = ok && std::abs(eval(w)) <= 1e-8 * scale_at(w);
    roots[k] = w * s;
  }

  if (!ok) {
    // Near-degenerate cases (disc ~ 0 under cancellation) can catapult the
    // Newton polish; fall back to companion-matrix eigenvalues.
    Eigen::Matrix3cd companion = Eigen::Matrix3cd::Zero();
    companion(1, 0) = 1.0;
    companion(2, 1) = 1.0;
    companion(0, 2) = -b0;
    companion(1, 2) = -b1;
    companion(2, 2) = -b2;
    Eigen::ComplexEigenSolver<Eigen::Matrix3cd> es(companion, false);
    for (int k = 0; k < 3; ++k) {
      C w = es.eigenvalues()(k);
      // Near a close pair the first iterations contract only linearly, so
      // allow a generous budget; the early break keeps the usual case cheap.
      for (int it = 0; it < 24; ++it) {
        const C df = (3.0 * w + 2.0 * b2) * w + b1;
        if (std::abs(df) == 0.0) break;
        const C step = eval(w) / df;
        if (std::abs(step) > std::max(std::abs(w), 1e-30)) break;
        w -= step;
        if (std::abs(step) < 1e-17 * std::max(1e-30, std::abs(w))) break;
      }
      roots[k] = w * s;
    }
  }
  return roots;
}

inline std::array<std::complex<double>, 3> ema_cubic_roots(std::complex<double> z,
                                                           double t) {
  return cubic_roots((t - 1.0) / z, std::complex<double>(-1.0, 0.0), 1.0 / z);
}

inline std::complex<double> ema_cubic_residual(std::complex<double> g,
                                               std::complex<double> z, double t) {
  return ((g + (t - 1.0) / z) * g - 1.0) * g + 1.0 / z;
}

}  // namespace detail

/// Stieltjes transform g(z) = <1/(z - lambda)> of the EMA law: the root of
/// g^3 + ((t-1)/z) g^2 - g + 1/z = 0 connected to the g ~ 1/z branch at large
/// |z|. Convention Im g <= 0 for Im z > 0, so rho(x) = -Im g(x + i eps)/pi.
/// Branch selected by continuity along a vertical descent from Im z = 1e8,
/// with step refinement where roots approach each other.
inline std::complex<double> ema_resolvent(std::complex<double> z, EmaParams p) {
  p.validate();
  if (!(z.imag() > 0.0)) throw SpecError("ema_resolvent: need Im z > 0");

  const double t = p.t;
  const double x = z.real();
  // Roots genuinely in the upper half-plane sit at Im ~ +sqrt(eps) near the
  // support edges; this slack only has to beat rounding noise on the
  // physical root, whose exact Im is <= 0.
  constexpr double kHalfPlaneSlack = 1e-7;

  // Admissible (closed lower half-plane) root nearest to the reference.
  auto select = [&](const std::array<std::complex<double>, 3>& roots,
                    std::complex<double> ref) {
    int best = -1;
    for (int k = 0; k < 3; ++k) {
      if (roots[k].imag() > kHalfPlaneSlack) continue;
      if (best < 0 || std::abs(roots[k] - ref) < std::abs(roots[best] - ref)) best = k;
    }
    return best;
  };

  // Geometric descent from Im z = 1e8 down to the target height. The factor
  // is small enough that the tracked root moves less than the inter-root
  // separation per step everywhere except at the branch points themselves,
  // where the half-plane filter still pins the physical root.
  double h = 1e8;
  std::complex<double> g = 1.0 / std::complex<double>(x, h);
  while (h > z.imag()) {
    h = std::max(z.imag(), h / 1.25);
    const auto roots = detail::ema_cubic_roots({x, h}, t);
    const int k = select(roots, g);
    if (k >= 0) g = roots[k];
  }

  const auto roots = detail::ema_cubic_roots(z, t);
  const int k = select(roots, g);
  if (k < 0) {
    throw BranchError("ema_resolvent: no admissible root at z = (" +
                      std::to_string(z.real()) + ", " + std::to_string(z.imag()) + ")");
  }
  // Ambiguity: a second admissible root indistinguishably close.
  for (int m = 0; m < 3; ++m) {
    if (m == k) continue;
    if (roots[m].imag() <= kHalfPlaneSlack && std::abs(roots[m] - roots[k]) < 1e-10) {
      throw BranchError("ema_resolvent: two admissible roots within 1e-10 at z = (" +
                        std::to_string(z.real()) + ", " + std::to_string(z.imag()) + ")");
    }
  }
  return roots[k];
}

/// EMA spectral density via Stieltjes inversion, clipped at zero.
inline double ema_density(double x, EmaParams p, double epsilon = 1e-8) {
  if (epsilon < 1e-12 || epsilon > 1e-3) {
    throw SpecError("ema_density: epsilon outside [1e-12, 1e-3]");
  }
  const auto g = ema_resolvent({x, epsilon}, p);
  return std::max(0.0, -g.imag() / M_PI);
}

/// Mass of the EMA atom at zero: max(0, 1 - t). The adjacency matrix with
/// rank-r blocks has rank at most 2 r |E|, hence a zero-eigenvalue fraction
/// of at least 1 - t, and the cubic carries exactly this mass on its
/// physical branch for t < 1 (g ~ (1-t)/z as z -> 0). Stieltjes inversion at
/// finite epsilon therefore renders the atom as a spike of width epsilon;
/// ema_density already integrates to 1 for every t and no separate atom may
/// be added on top of it.
inline double ema_atom_mass(EmaParams p) {
  p.validate();
  return std::max(0.0, 1.0 - p.t);
}

/// Exact moment polynomials mu_{2k}(t) of the EMA law for k = 0..k_max.
/// The moment generating function f(x) = sum_k mu_{2k} x^{2k} satisfies
/// f = 1 + a(x f) with a(y) = t y^2 / (1 - y^2), equivalently
/// f = 1 + x^2 f^2 (f - 1 + t), which yields the coefficient recurrence
/// c_k = [x^{2(k-1)}] (f^3 + (t-1) f^2).
inline std::vector<TPoly> ema_moments(int k_max) {
  if (k_max < 0 || k_max > 64) throw SpecError("ema_moments: k_max must be in [0, 64]");
  std::vector<TPoly> c(static_cast<std::size_t>(k_max) + 1);
  c[0] = TPoly::constant(1);
  const TPoly t_minus_1 = TPoly::monomial(1) + TPoly::constant(-1);
  std::vector<TPoly> f2(static_cast<std::size_t>(k_max) + 1);  // coefficients of f^2
  std::vector<TPoly> f3(static_cast<std::size_t>(k_max) + 1);  // coefficients of f^3
  f2[0] = TPoly::constant(1);
  f3[0] = TPoly::constant(1);
  for (int k = 1; k <= k_max; ++k) {
    // f2, f3 at order k-1 depend only on c_0..c_{k-1}, all known.
    if (k - 1 >= 1) {
      TPoly a2;
      for (int i = 0; i <= k - 1; ++i) {
        a2 += c[static_cast<std::size_t>(i)] * c[static_cast<std::size_t>(k - 1 - i)];
      }
      f2[static_cast<std::size_t>(k - 1)] = a2;
      TPoly a3;
      for (int i = 0; i <= k - 1; ++i) {
        a3 += c[static_cast<std::size_t>(i)] * f2[static_cast<std::size_t>(k - 1 - i)];
      }
      f3[static_cast<std::size_t>(k - 1)] = a3;
    }
    c[static_cast<std::size_t>(k)] =
        f3[static_cast<std::size_t>(k - 1)] + t_minus_1 * f2[static_cast<std::size_t>(k - 1)];
  }
  return c;
}

/// Numeric EMA moments at a given t.
inline std::vector<double> ema_moments(EmaParams p, int k_max) {
  p.validate();
  const auto sym = ema_moments(k_max);
  std::vector<double> out(sym.size());
  for (std::size_t k = 0; k < sym.size(); ++k) out[k] = sym[k].evaluate(p.t);
  return out;
}

/// Outer support edge of the EMA law, located from the sign change of the
/// cubic discriminant along the real axis (three real roots outside the
/// support, one real root inside).
inline double ema_support_edge(EmaParams p) {
  p.validate();
  const double t = p.t;
  auto discriminant = [t](double x) {
    // Discriminant of g^3 + b g^2 + c g + d with b = (t-1)/x, c = -1, d = 1/x.
    const double b = (t - 1.0) / x, c = -1.0, d = 1.0 / x;
    return 18.0 * b * c * d - 4.0 * b * b * b * d + b * b * c * c - 4.0 * c * c * c -
           27.0 * d * d;
  };
  const double hi0 = 2.0 * std::sqrt(t) + 4.0 + t;  // safely outside
  double lo = -1.0, hi = hi0;
  const int scan = 4096;
  for (int i = scan; i >= 1; --i) {
    const double x = hi0 * i / scan;
    if (discriminant(x) < 0.0) {
      lo = x;
      hi = hi0 * (i + 1.0) / scan;
      break;
    }
  }
  if (lo < 0.0) throw BranchError("ema_support_edge: no interior point found");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (discriminant(mid) < 0.0 ? lo : hi) = mid;
    if (hi - lo < 1e-13 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

/// Cross-oracle for the series route: spectral moments extracted from the
/// resolvent as Laurent coefficients on a circle just outside the support,
///   mu_m = rho^{m+1}/(2 pi) int_0^{2pi} g(rho e^{i theta}) e^{i(m+1) theta} dtheta,
/// sampled on a midpoint grid (which avoids the real axis) with the lower
/// semicircle filled in by g(conj z) = conj g(z).
inline std::vector<double> ema_moments_from_resolvent(EmaParams p, int k_max,
                                                      int n_grid = 2048) {
  p.validate();
  if (k_max < 0) throw SpecError("ema_moments_from_resolvent: k_max must be >= 0");
  const double rho = 1.3 * ema_support_edge(p);
  using C = std::complex<double>;
  std::vector<C> g(static_cast<std::size_t>(n_grid));
  for (int j = 0; j < n_grid / 2; ++j) {
    const double theta = 2.0 * M_PI * (j + 0.5) / n_grid;
    const C z = rho * C(std::cos(theta), std::sin(theta));
    const C gj = ema_resolvent(z, p);
    g[static_cast<std::size_t>(j)] = gj;
    g[static_cast<std::size_t>(n_grid - 1 - j)] = std::conj(gj);
  }
  std::vector<double> out(static_cast<std::size_t>(k_max) + 1, 0.0);
  for (int k = 0; k <= k_max; ++k) {
    const int m = 2 * k;
    C acc = 0.0;
    for (int j = 0; j < n_grid; ++j) {
      const double theta = 2.0 * M_PI * (j + 0.5) / n_grid;
      acc += g[static_cast<std::size_t>(j)] *
             std::exp(C(0.0, (m + 1) * theta));
    }
    out[static_cast<std::size_t>(k)] = (std::pow(rho, m + 1) * acc / static_cast<double>(n_grid)).real();
  }
  return out;
}

/// Continuous part of the Marchenko-Pastur density. At x = 0 with a = 0 the
/// evaluation returns the (divergent, integrable) limit of the formula.
inline double mp_density(double x, MpParams p) {
  p.validate();
  const double a = p.edge_a(), b = p.edge_b();
  if (x < a || x > b) return 0.0;
  if (x == 0.0) {
    return a == 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  return std::sqrt((b - x) * (x - a)) / (4.0 * M_PI * x);
}

inline double mp_atom_mass(MpParams p) {
  p.validate();
  return p.atom_mass();
}

/// Moments of the full MP law (the atom only feeds mu_0). The integrand is
/// smoothed with x = c + s sin(theta), which removes the sqrt edges:
/// mu_k = (s^2 / 4 pi) int (c + s sin theta)^{k-1} cos^2 theta dtheta.
inline std::vector<double> mp_moments(MpParams p, int k_max) {
  p.validate();
  if (k_max < 0 || k_max > 32) throw SpecError("mp_moments: k_max must be in [0, 32]");
  const double a = p.edge_a(), b = p.edge_b();
  const double c = 0.5 * (a + b), s = 0.5 * (b - a);
  static const GaussLegendreRule rule(256);
  std::vector<double> out(static_cast<std::size_t>(k_max) + 1);
  for (int k = 0; k <= k_max; ++k) {
    auto f = [&](double theta) {
      const double x = c + s * std::sin(theta);
      const double cos_t = std::cos(theta);
      return std::pow(x, k - 1) * cos_t * cos_t;
    };
    const double cont = s * s / (4.0 * M_PI) * rule.integrate(f, -M_PI / 2.0, M_PI / 2.0);
    out[static_cast<std::size_t>(k)] = k == 0 ? cont + p.atom_mass() : cont;
  }
  return out;
}

enum class RatioCase { VectorBall, VectorSphere, MatrixBounded, MatrixFixed };

/// Exact ratio <tr(word)>_measure / <tr(word)>_gauss for the constrained
/// measures, as a product of gamma factors over the per-block exponents r_k.
///   VectorSphere: prod d^{r} Gamma(d/2)   / (2^{r} Gamma(d/2 + r))
///   VectorBall:   prod d^{r} Gamma(d/2+1) / (2^{r} Gamma(d/2 + r + 1))
///   MatrixFixed:  prod d^{r} Gamma(D)     / (4^{r/2} Gamma(D + r/2)),  D = d(d+1)/4
///   MatrixBounded: same with D replaced by D + 1.
inline double measure_ratio_factor(RatioCase rc, int d, std::span<const int> ranks) {
  if (d < 1) throw SpecError("measure_ratio_factor: d must be >= 1");
  if (ranks.empty()) throw SpecError("measure_ratio_factor: ranks must be nonempty");
  const bool vector_case = rc == RatioCase::VectorBall || rc == RatioCase::VectorSphere;
  double log_f = 0.0;
  for (int r : ranks) {
    if (r < 1) throw SpecError("measure_ratio_factor: ranks must be >= 1");
    if (vector_case && r % 2 != 0) {
      throw SpecError("measure_ratio_factor: vector-case exponents must be even");
    }
    double base = 0.0;
    switch (rc) {
      case RatioCase::VectorSphere: base = d / 2.0; break;
      case RatioCase::VectorBall: base = d / 2.0 + 1.0; break;
      case RatioCase::MatrixFixed: base = d * (d + 1.0) / 4.0; break;
      case RatioCase::MatrixBounded: base = d * (d + 1.0) / 4.0 + 1.0; break;
    }
    // Both prefactors reduce to 2^{-r}: the vector case divides by 2^r, the
    // matrix case by 4^{r/2}.
    const double shift = vector_case ? r : r / 2.0;
    log_f += r * (std::log(static_cast<double>(d)) - std::log(2.0)) + std::lgamma(base) -
             std::lgamma(base + shift);
  }
  return std::exp(log_f);
}

/// Generalized-radii ensemble: Z, d and one norm R_a per vector.
struct GeneralRadiiParams {
  double connectivity = 1.0;  ///< Z
  int dim = 1;                ///< d
  std::vector<double> radii;  ///< R_a

  void validate() const {
    if (dim < 1) throw SpecError("general_radii: dim must be positive");
    if (connectivity < 0.0) throw SpecError("general_radii: Z must be nonnegative");
    if (radii.empty()) throw SpecError("general_radii: need at least one radius");
    for (double r : radii) {
      if (r <= 0.0) throw SpecError("general_radii: radii must be positive");
    }
  }
};

/// Moments of the adjacency law for per-vector radii, from the truncated
/// power-series fixed point of
///   f = 1 + (Z/d) sum_a x^2 f^2 R_a^4 / (1 - x^2 f^2 R_a^4).
/// Index k of the result holds mu_{2k}.
inline std::vector<double> general_radii_moments(const GeneralRadiiParams& p, int k_max) {
  p.validate();
  if (k_max < 0 || k_max > 64) {
    throw SpecError("general_radii_moments: k_max must be in [0, 64]");
  }
  const std::size_t n = static_cast<std::size_t>(k_max) + 1;
  const double c = p.connectivity / p.dim;

  // Series arithmetic in x^2: index k is the coefficient of x^{2k}.
  auto mul = [n](const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (a[i] == 0.0) continue;
      for (std::size_t j = 0; i + j < n; ++j) out[i + j] += a[i] * b[j];
    }
    return out;
  };

  std::vector<double> f(n, 0.0);
  f[0] = 1.0;
  for (int iter = 0; iter <= k_max; ++iter) {
    const std::vector<double> f2 = mul(f, f);
    std::vector<double> acc(n, 0.0);
    for (double ra : p.radii) {
      const double w = std::pow(ra, 4);
      // num = w x^2 f^2 (one index = one power of x^2); geometric sum
      // num/(1 - num) by series long division.
      std::vector<double> num(n, 0.0);
      for (std::size_t i = 0; i + 1 < n; ++i) num[i + 1] = w * f2[i];
      std::vector<double> q(n, 0.0);
      for (std::size_t k = 0; k < n; ++k) {
        double v = num[k];
        for (std::size_t i = 1; i <= k; ++i) v += num[i] * q[k - i];  // den = 1 - num
        q[k] = v;
      }
      for (std::size_t i = 0; i < n; ++i) acc[i] += q[i];
    }
    std::vector<double> next(n, 0.0);
    next[0] = 1.0;
    for (std::size_t i = 0; i < n; ++i) next[i] += c * acc[i];
    f = std::move(next);
  }
  return f;
}

}  // namespace sbm
