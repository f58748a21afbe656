#pragma once

// Damped Newton on (u, b) with a mean-zero constraint on u, a continuation
// ramp F_t = t F, and diagnostics of the second-order estimate along the way.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gcy/gauduchon_ma.hpp"
#include "gcy/krylov.hpp"

namespace gcy {

struct TelemetryRecord {
  double t = 0.0;
  int iteration = 0;
  double sup_residual = 0.0;
  double b = 0.0;
  double K = 0.0;
  double lambda1 = 0.0;
  double ratio = 0.0;
  double min_nu = 0.0;
};

struct SolverConfig {
  double newton_tol = 1e-9;
  int max_newton = 50;
  double damping = 0.5;
  int max_halvings = 20;
  int continuation_steps = 10;
  double min_continuation_step = 1e-4;
  double krylov_tol = 1e-10;
  int krylov_max_iters = 300;
  int krylov_restart = 30;
  /// Upper bound on the Krylov basis storage; the restart length is reduced
  /// on large grids to stay within it.
  std::size_t krylov_memory_bytes = std::size_t{1} << 30;
  /// Constants for the dichotomy tallies in the diagnostics.
  double probe_kappa = 0.05;
  double probe_R = 0.0;
  bool probe_tallies = true;
  std::function<void(const TelemetryRecord&)> telemetry;

  void validate() const {
    if (!(newton_tol > 0) || !(krylov_tol > 0)) throw InvalidArgument("tolerances must be positive");
    if (max_newton < 0 || max_halvings < 0 || krylov_max_iters < 1 || krylov_restart < 1)
      throw InvalidArgument("iteration limits must be positive");
    if (continuation_steps < 1) throw InvalidArgument("continuation_steps must be at least 1");
    if (!(damping > 0 && damping < 1)) throw InvalidArgument("damping must lie in (0, 1)");
  }
};

struct DiagnosticsReport {
  double K = 1.0;        // 1 + sup |grad u|^2
  double lambda1 = 0.0;  // sup |i ddbar u|
  double ratio = 0.0;    // lambda1 / K
  double osc_u = 0.0;
  double min_nu = 0.0;          // smallest eigenvalue of gtilde relative to alpha
  double sum_lambda_min = 0.0;  // min over the grid of tr_alpha omega
  std::size_t case_a = 0, case_b = 0, below_R = 0, neither = 0;
};

struct SolverState {
  ScalarField u;
  double b = 0.0;
  double t = 0.0;
  int newton_iterations = 0;
  double sup_residual = 0.0;
  DiagnosticsReport diagnostics;

  /// u - sup u, the normalization with sup u = 0.
  ScalarField sup_normalized() const { return u.shifted(-u.max_real()); }
};

class StepFailure : public Error {
 public:
  StepFailure(const std::string& what, SolverState last_good) : Error(what), last_good_(std::move(last_good)) {}
  const SolverState& last_good() const noexcept { return last_good_; }

 private:
  SolverState last_good_;
};

inline DiagnosticsReport diagnostics(const SolverState& s, const EquationData& d, const SolverConfig& cfg = {}) {
  DiagnosticsReport r;
  const SupNorms sn = sup_norms(s.u, d.alpha());
  r.K = 1.0 + sn.sup_grad_sq;
  r.lambda1 = sn.sup_hess;
  r.ratio = r.lambda1 / r.K;
  r.osc_u = s.u.max_real() - s.u.min_real();
  const detail::Assembler as(s.u, d);
  const int n = d.n();
  r.min_nu = std::numeric_limits<double>::infinity();
  r.sum_lambda_min = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < d.grid().size(); ++p) {
    const CMat g = as.gtilde(p);
    const CMat a = d.alpha().at(p);
    // P_alpha keeps eigenvectors relative to alpha, so one decomposition of
    // gtilde also gives the frame of its P-preimage.
    const GenEig e = generalized_eigen(g, a);
    const RVec& nu = e.values;
    r.min_nu = std::min(r.min_nu, nu(n - 1));
    if (nu(n - 1) <= 0.0) continue;
    double prod = 1.0, inv = 0.0;
    for (int i = 0; i < n; ++i) {
      prod *= nu(i);
      inv += 1.0 / nu(i);
    }
    // tr_alpha omega with omega = star_power_inverse(gtilde)
    r.sum_lambda_min = std::min(r.sum_lambda_min, std::pow(prod, 1.0 / (n - 1)) * inv);
    if (cfg.probe_tallies) {
      // Eigenvalues of the P-preimage of gtilde, descending, with the
      // P-preimage of chi_tilde expressed in the same frame.
      const CMat chi = p_alpha_inverse(d.chi_tilde().at(p), a, d.alpha_inverse(p));
      const double sum = nu.sum();
      RVec lambda(n), chi_diag(n);
      for (int k = 0; k < n; ++k) {
        const int src = n - 1 - k;
        lambda(k) = sum - (n - 1) * nu(src);
        chi_diag(k) = (e.vectors.col(src).adjoint() * chi * e.vectors.col(src))(0, 0).real();
      }
      const double h = (n - 1) * (d.F().real(p) + s.b);
      switch (subsolution_dichotomy_probe(lambda, chi_diag, h, cfg.probe_kappa, cfg.probe_R).label) {
        case ProbeCase::case_a: ++r.case_a; break;
        case ProbeCase::case_b: ++r.case_b; break;
        case ProbeCase::below_R: ++r.below_R; break;
        case ProbeCase::neither: ++r.neither; break;
      }
    }
  }
  return r;
}

namespace detail {

inline void emit(const SolverConfig& cfg, const SolverState& s, const EquationData& d, int iteration, double sup_r) {
  if (!cfg.telemetry) return;
  TelemetryRecord rec;
  rec.t = s.t;
  rec.iteration = iteration;
  rec.sup_residual = sup_r;
  rec.b = s.b;
  const SupNorms sn = sup_norms(s.u, d.alpha());
  rec.K = 1.0 + sn.sup_grad_sq;
  rec.lambda1 = sn.sup_hess;
  rec.ratio = rec.lambda1 / rec.K;
  const Assembler as(s.u, d);
  rec.min_nu = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < d.grid().size(); ++p)
    rec.min_nu = std::min(rec.min_nu, generalized_eigenvalues(as.gtilde(p), d.alpha().at(p))(d.n() - 1));
  cfg.telemetry(rec);
}

/// Solves the augmented Newton system
///   L du - (n-1) db = -R,   mean(du) = -mean(u)
/// by right-preconditioned GMRES. The preconditioner inverts the
/// constant-coefficient operator with the grid-averaged Q exactly in Fourier
/// space.
inline std::pair<ScalarField, double> newton_direction(const ScalarField& u, const Residual& r, const EquationData& d,
                                                       const SolverConfig& cfg) {
  const GridSpec& g = d.grid();
  const int n = d.n();
  const std::size_t P = g.size();
  const Linearization lin(u, d);
  auto sp = Spectral::get(g);
  const CMat q = lin.mean_q();
  std::vector<double> inv_symbol(P, 0.0);
  sp->for_each_mode([&](std::size_t p, const auto& k) {
    cplx s{0.0, 0.0};
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) s += q(j, i) * Spectral::dz_symbol(k, i) * Spectral::dzbar_symbol(k, j);
    inv_symbol[p] = std::abs(s.real()) > 1e-12 ? 1.0 / s.real() : 0.0;
  });
  std::vector<char> resolved(P);
  {
    CBuffer mask(P, cplx(1.0, 0.0));
    sp->drop_nyquist(mask);
    for (std::size_t p = 0; p < P; ++p) {
      resolved[p] = mask[p] != cplx(0.0, 0.0);
      if (!resolved[p]) inv_symbol[p] = 0.0;
    }
  }

  // Nyquist modes lie in the kernel of the linearization, so the system is
  // posed on the Nyquist-free subspace.
  CBuffer work(P);
  auto project = [&](std::vector<double>& y) {
    for (std::size_t p = 0; p < P; ++p) work[p] = y[p];
    sp->forward(work);
    for (std::size_t p = 0; p < P; ++p)
      if (!resolved[p]) work[p] = 0.0;
    sp->backward(work);
    for (std::size_t p = 0; p < P; ++p) y[p] = work[p].real();
  };
  auto op = [&](const std::vector<double>& x, std::vector<double>& y) {
    lin.apply(x, x[P], y);
    project(y);
    double mean = 0.0;
    for (std::size_t p = 0; p < P; ++p) mean += x[p];
    y[P] = mean / static_cast<double>(P);
  };
  auto precond = [&](const std::vector<double>& rr, std::vector<double>& z) {
    double mean = 0.0;
    for (std::size_t p = 0; p < P; ++p) mean += rr[p];
    mean /= static_cast<double>(P);
    for (std::size_t p = 0; p < P; ++p) work[p] = rr[p] - mean;
    sp->forward(work);
    for (std::size_t p = 0; p < P; ++p) work[p] *= inv_symbol[p];
    sp->backward(work);
    for (std::size_t p = 0; p < P; ++p) z[p] = work[p].real() + rr[P];
    z[P] = -mean / (n - 1);
  };

  std::vector<double> rhs(P + 1), x(P + 1, 0.0);
  for (std::size_t p = 0; p < P; ++p) rhs[p] = -r.value.real(p);
  rhs[P] = -u.mean().real();
  project(rhs);
  const std::size_t per_vector = (P + 1) * sizeof(double);
  const int restart = static_cast<int>(
      std::clamp<std::size_t>(cfg.krylov_memory_bytes / per_vector, 4, static_cast<std::size_t>(cfg.krylov_restart)));
  const KrylovResult kr = gmres(op, precond, rhs, x, cfg.krylov_tol, cfg.krylov_max_iters, restart);
  if (!kr.converged && kr.relative_residual > 1e-3)
    throw NoConvergence("newton: Krylov solve stalled at relative residual " + std::to_string(kr.relative_residual));
  const double db = x[P];
  x.resize(P);
  return {ScalarField::from_real(g, x), db};
}

}  // namespace detail

/// F* = log(det gtilde[u*] / det alpha) / (n-1), so that (u*, 0) solves the
/// equation with forcing F* exactly.
inline ScalarField manufactured_forcing(const ScalarField& u_star, const EquationData& d) {
  const EquationData d0 = d.with_forcing(ScalarField::constant(d.grid(), 0.0));
  return residual(u_star, 0.0, d0).value.scaled(1.0 / (d.n() - 1));
}

/// sup of the residual with its Nyquist modes removed. Nyquist content is
/// invisible to every derivative on the grid, so this is the part of the
/// residual the discretization controls.
inline double resolved_sup(const Residual& r) { return band_limit(r.value).sup_abs(); }

/// Newton iteration for forcing d.F() from `init`. Each accepted step
/// strictly decreases sup |residual| and keeps gtilde positive.
inline SolverState newton_solve(const EquationData& d, SolverState init, const SolverConfig& cfg = {}) {
  cfg.validate();
  require_same_grid(init.u.grid(), d.grid());
  SolverState s = std::move(init);
  s.u = band_limit(s.u);
  Residual r = residual(s.u, s.b, d);
  double sup_r = resolved_sup(r);
  for (int it = 0;; ++it) {
    detail::emit(cfg, s, d, it, sup_r);
    s.sup_residual = sup_r;
    if (sup_r <= cfg.newton_tol) return s;
    if (it >= cfg.max_newton)
      throw NoConvergence("newton: no convergence after " + std::to_string(cfg.max_newton) +
                          " iterations (sup residual " + std::to_string(sup_r) + ")");
    const auto [du, db] = detail::newton_direction(s.u, r, d, cfg);
    double step = 1.0;
    bool accepted = false;
    std::string last_failure = "residual did not decrease";
    for (int h = 0; h <= cfg.max_halvings; ++h, step *= cfg.damping) {
      const ScalarField trial = s.u.axpby(1.0, du, step);
      try {
        Residual rt = residual(trial, s.b + step * db, d);
        const double sup_t = resolved_sup(rt);
        if (sup_t < sup_r) {
          s.u = trial;
          s.b += step * db;
          r = std::move(rt);
          sup_r = sup_t;
          accepted = true;
          break;
        }
        last_failure = "residual did not decrease";
      } catch (const ConeViolation& e) {
        last_failure = e.what();
      }
    }
    if (!accepted)
      throw NoConvergence("newton: line search failed after " + std::to_string(cfg.max_halvings) +
                          " halvings (" + last_failure + "; sup residual " + std::to_string(sup_r) + ")");
    ++s.newton_iterations;
  }
}

/// Ramp F_t = t F from t = 0 to 1, warm-starting each Newton solve from the
/// last accepted state; the step is halved on failure.
inline SolverState continuation_solve(const EquationData& d, const SolverConfig& cfg = {},
                                      std::optional<SolverState> init = std::nullopt) {
  cfg.validate();
  const GridSpec& g = d.grid();
  const int n = d.n();
  SolverState s{init ? init->u : ScalarField::constant(g, 0.0)};
  bool exact_start = false;
  if (init) {
    s = *init;
  } else {
    exact_start = is_constant(d.alpha()) && is_constant(d.alpha0()) && (d.alpha().at(0) - d.alpha0().at(0)).norm() == 0.0;
  }
  s.t = 0.0;
  const EquationData d0 = d.with_forcing(ScalarField::constant(g, 0.0));
  if (!exact_start) {
    // b from the mean residual at the starting potential.
    const Residual r0 = residual(band_limit(s.u), 0.0, d0);
    if (!init) s.b = r0.value.mean().real() / (n - 1);
    s = newton_solve(d0, s, cfg);
  } else {
    s.sup_residual = resolved_sup(residual(s.u, s.b, d0));
    detail::emit(cfg, s, d0, 0, s.sup_residual);
  }
  s.diagnostics = diagnostics(s, d0, cfg);

  double step = 1.0 / cfg.continuation_steps;
  while (s.t < 1.0) {
    double t_next = s.t + step;
    if (t_next > 1.0 - 1e-12) t_next = 1.0;
    const EquationData dt = d.with_forcing(d.F().scaled(t_next));
    SolverState trial = s;
    trial.t = t_next;
    std::string failure;
    try {
      trial = newton_solve(dt, trial, cfg);
    } catch (const NoConvergence& e) {
      failure = e.what();
    } catch (const ConeViolation& e) {
      failure = e.what();
    }
    if (!failure.empty()) {
      step *= 0.5;
      if (step < cfg.min_continuation_step)
        throw StepFailure(std::string("continuation step fell below minimum at t = ") + std::to_string(s.t) + ": " +
                              failure,
                          s);
      continue;
    }
    s = std::move(trial);
    s.diagnostics = diagnostics(s, dt, cfg);
  }
  return s;
}

}  // namespace gcy
