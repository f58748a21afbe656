// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Runs a few minutes on one core.

#include <sys/resource.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "gcy/solver.hpp"
#include "support/random_data.hpp"

using namespace gcy;
using gcy::testing::random_hermitian;
using gcy::testing::random_positive;
using gcy::testing::random_smooth_metric;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ScalarField product_forcing(const GridSpec& g, double amp) {
  return ScalarField::sample(g, [=](const auto& x) { return amp * std::cos(2 * kPi * x[0]) * std::cos(2 * kPi * x[3]); });
}

ScalarField low_mode(const GridSpec& g, double amp, int variant = 0) {
  return ScalarField::sample(g, [=](const auto& x) {
    const int a = variant % g.real_axes();
    return amp * (std::cos(2 * kPi * x[a]) + 0.4 * std::sin(2 * kPi * (x[1] - x[2])));
  });
}

ScalarField random_potential(const GridSpec& g, std::mt19937_64& rng, double amp) {
  std::uniform_real_distribution<double> ph(0.0, 2 * kPi);
  const double p0 = ph(rng), p1 = ph(rng), p2 = ph(rng);
  return ScalarField::sample(g, [=](const auto& x) {
    return amp * (std::cos(2 * kPi * x[0] + p0) + 0.5 * std::sin(2 * kPi * (x[1] + x[2]) + p1) +
                  0.3 * std::cos(2 * kPi * (x[g.real_axes() - 1] - x[0]) + p2));
  });
}

/// Per-direction conformal factors; not Gauduchon for n >= 3.
HermitianTensorField diagonal_conformal(const GridSpec& g, double amp) {
  return HermitianTensorField::sample(
      g,
      [&](const auto& x) -> CMat {
        CMat m = CMat::Identity(g.n(), g.n());
        m(0, 0) = std::exp(amp * std::cos(2 * kPi * x[2]));
        m(1, 1) = std::exp(amp * std::sin(2 * kPi * x[4 % g.real_axes()]));
        return m;
      },
      HermitianTensorField::Kind::metric);
}

HermitianTensorField corrected_diagonal(const GridSpec& g, double amp) {
  const auto raw = diagonal_conformal(g, amp);
  return conformal_rescale(raw, gauduchon_conformal_factor(raw));
}

EquationData flat_data(const GridSpec& g, const ScalarField& F) {
  const auto id = HermitianTensorField::identity(g);
  return EquationData(id, id, F);
}

std::vector<std::size_t> sample_points(const GridSpec& g, std::mt19937_64& rng, int count) {
  std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
  std::vector<std::size_t> pts(count);
  for (auto& p : pts) p = pick(rng);
  return pts;
}

double volume_error(const ScalarField& u, double b, const EquationData& d) {
  const auto omega = omega_from_u(u, d);
  double worst = 0;
  for (std::size_t p = 0; p < d.grid().size(); ++p)
    worst = std::max(worst, std::abs(real_det(omega.at(p)) / d.det_alpha(p) - std::exp(d.F().real(p) + b)));
  return worst;
}

double ricci_error(const HermitianTensorField& omega, const HermitianTensorField& alpha, const ScalarField& F) {
  const auto ro = chern_ricci(omega), ra = chern_ricci(alpha);
  const auto hf = hessian(F);
  double worst = 0;
  for (std::size_t p = 0; p < F.grid().size(); ++p) worst = std::max(worst, (ro.at(p) - ra.at(p) + hf.at(p)).norm());
  return worst;
}

/// Generalized eigenvalues lambda of (g, alpha) are Sum(mu) - (n-1) mu for a
/// random positive mu, so P(lambda) = mu lies inside the cone.
struct ConeInstance {
  CMat g, alpha;
  RVec lambda;
};

ConeInstance cone_instance(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.2, 2.0);
  RVec mu(n);
  for (int k = 0; k < n; ++k) mu(k) = u(rng);
  RVec lambda(n);
  for (int k = 0; k < n; ++k) lambda(k) = mu.sum() - (n - 1) * mu(k);
  const CMat alpha = random_positive(rng, n, 0.5);
  const CMat L = Eigen::LLT<CMat>(alpha).matrixL();
  const CMat Q = Eigen::HouseholderQR<CMat>(gcy::testing::random_matrix(rng, n)).householderQ();
  const CMat g = hermitian_part(L * Q * lambda.cast<cplx>().asDiagonal() * Q.adjoint() * L.adjoint());
  return {g, alpha, lambda};
}

// Shared between criteria 5 and 6.
struct TorsionRun {
  EquationData data;
  SolverState state;
};
std::optional<TorsionRun> torsion_run;

Outcome z_identity() {
  const GridSpec g(3, 8);
  std::mt19937_64 rng(101);
  double worst = 0.0;
  int points = 0;
  for (int m = 0; m < 3; ++m) {
    const auto alpha = random_smooth_metric(g, rng);
    const EquationData d(alpha, alpha, ScalarField::constant(g, 0.0));
    if (d.torsion_free()) return {false, "random metric unexpectedly torsion free"};
    const auto u = random_potential(g, rng, 0.02);
    const detail::Assembler as(u, d);
    const ZOracle oracle(d);
    const auto grad = gradient(u);
    for (const std::size_t p : sample_points(g, rng, 100)) {
      CVec du(3);
      for (int j = 0; j < 3; ++j) du(j) = grad[j].values()[p];
      const CMat zo = oracle(du, p);
      worst = std::max(worst, (as.z(p) - zo).norm() / zo.norm());
      ++points;
    }
  }
  return {worst <= 1e-10, fmt("n=3, 3 metrics, %d points: max relative error %.2e (bound 1e-10)", points, worst)};
}

Outcome w_assumptions() {
  const GridSpec g(3, 8);
  std::mt19937_64 rng(202);
  const auto alpha = corrected_diagonal(g, 0.01);
  const EquationData d(alpha, alpha, ScalarField::constant(g, 0.0));
  if (d.torsion_free()) return {false, "test metric unexpectedly torsion free"};
  const auto pts = sample_points(g, rng, 100);
  double coeff = 0.0, deriv = 0.0;
  {
    const WAssumptionChecker w(d);
    for (const std::size_t p : pts) {
      const auto r = w.check(p, 1e-9);
      coeff = std::max(coeff, r.coefficient);
      deriv = std::max(deriv, r.derivative);
    }
  }
  double bad = 0.0;
  int flagged = 0;
  {
    const WAssumptionChecker w(d.with_torsion(connection_as_torsion(alpha)));
    for (const std::size_t p : pts) {
      const auto r = w.check(p, 1e-9);
      bad = std::max({bad, r.coefficient, r.derivative});
      flagged += r.passed ? 0 : 1;
    }
  }
  const bool ok = coeff <= 1e-9 && deriv <= 1e-9 && flagged > 0;
  return {ok, fmt("Gauduchon-corrected conformal alpha: |Z^j_{ijbar}| %.2e, |nabla Z| %.2e (bound 1e-9); "
                  "corrupted torsion flagged at %d/100 points, max %.2e",
                  coeff, deriv, flagged, bad)};
}

Outcome p_star_identity() {
  std::mt19937_64 rng(303);
  double perr = 0.0, rerr = 0.0;
  int count = 0;
  for (int n = 2; n <= 5; ++n) {
    const double f = factorial(n - 1);
    for (int t = 0; t < 100; ++t, ++count) {
      const CMat a = random_positive(rng, n);
      const CMat beta = random_hermitian(rng, n);
      const Form w = Form::one_one(beta).wedge(Form::one_one(a).power(n - 2));
      const CMat lhs = hodge_star_nn(w, a) / f;
      const CMat rhs = p_alpha(beta, a);
      perr = std::max(perr, (lhs - rhs).norm() / rhs.norm());
      const CMat h = random_positive(rng, n);
      rerr = std::max(rerr, (star_power_inverse(star_power(h, a), a) - h).norm() / h.norm());
    }
  }
  return {perr <= 1e-10 && rerr <= 1e-10,
          fmt("n=2..5, %d forms: P_alpha identity %.2e, star roundtrip %.2e (bound 1e-10)", count, perr, rerr)};
}

Outcome manufactured() {
  std::string detail;
  bool ok = true;
  for (const auto& [n, N, steps] : {std::tuple{2, 32, 1}, std::tuple{3, 8, 2}}) {
    const GridSpec g(n, N);
    const auto flat = flat_data(g, ScalarField::constant(g, 0.0));
    const auto u_star = low_mode(g, 0.02);
    const auto d = flat.with_forcing(manufactured_forcing(u_star, flat));
    SolverConfig cfg;
    cfg.continuation_steps = steps;
    const auto s = continuation_solve(d, cfg);
    const double err = s.u.axpby(1.0, u_star, -1.0).sup_abs();
    ok = ok && err <= 1e-8 && std::abs(s.b) <= 1e-8;
    detail += fmt("%sn=%d N=%d: |u-u*| %.2e, |b| %.2e", detail.empty() ? "" : "; ", n, N, err, std::abs(s.b));
  }
  return {ok, detail + " (bound 1e-8)"};
}

Outcome torsion_end_to_end() {
  const GridSpec g(3, 8);
  const auto alpha = corrected_diagonal(g, 0.05);
  const EquationData d(alpha, alpha, product_forcing(g, 0.05));
  if (d.torsion_free()) return {false, "test metric unexpectedly torsion free"};
  SolverConfig cfg;
  cfg.continuation_steps = 2;
  auto s = continuation_solve(d, cfg);
  const auto omega = omega_from_u(s.u, d);
  const double vol = volume_error(s.u, s.b, d);
  const double defect = gauduchon_defect(omega, alpha);
  const double ric = ricci_error(omega, alpha, d.F());
  torsion_run.emplace(TorsionRun{d, std::move(s)});
  return {vol <= 1e-7 && defect <= 1e-7 && ric <= 1e-6,
          fmt("n=3 N=8: volume %.2e (1e-7), Gauduchon defect %.2e (1e-7), Ricci %.2e (1e-6)", vol, defect, ric)};
}

Outcome aeppli() {
  if (!torsion_run) return {false, "no converged torsion solve available"};
  const auto& d = torsion_run->data;
  std::mt19937_64 rng(606);
  const double conv = aeppli_pairing_matrix(torsion_run->state.u, d).cwiseAbs().maxCoeff();
  double rand = 0.0;
  for (int t = 0; t < 3; ++t)
    rand = std::max(rand, aeppli_pairing_matrix(random_potential(d.grid(), rng, 0.03), d).cwiseAbs().maxCoeff());
  const GridSpec g2(2, 32);
  std::mt19937_64 rng2(607);
  const auto a2 = random_smooth_metric(g2, rng2);
  const EquationData d2(a2, random_smooth_metric(g2, rng2), ScalarField::constant(g2, 0.0));
  const double rand2 = aeppli_pairing_matrix(random_potential(g2, rng2, 0.02), d2).cwiseAbs().maxCoeff();
  return {std::max({conv, rand, rand2}) <= 1e-8,
          fmt("pairing against all constant psi: converged n=3 %.2e, random n=3 %.2e, random n=2 non-Kahler %.2e "
              "(bound 1e-8)",
              conv, rand, rand2)};
}

Outcome uniqueness() {
  const GridSpec g(2, 32);
  const auto d = flat_data(g, product_forcing(g, 0.3));
  SolverState a{low_mode(g, 0.01, 1)}, b{low_mode(g, -0.015, 2)};
  a.b = 0.01;
  b.b = -0.02;
  const auto sa = continuation_solve(d, {}, a);
  const auto sb = continuation_solve(d, {}, b);
  const double du = sa.u.axpby(1.0, sb.u, -1.0).sup_abs(), db = std::abs(sa.b - sb.b);
  return {du <= 1e-8 && db <= 1e-8, fmt("n=2 N=32: |u_a-u_b| %.2e, |b_a-b_b| %.2e (bound 1e-8)", du, db)};
}

Outcome eigen_calculus() {
  std::mt19937_64 rng(808);
  double grad_err = 0.0, phi_err = 0.0;
  int instances = 0, concave = 0, monotone = 0, homogeneous = 0;
  for (int n = 2; n <= 5; ++n) {
    for (int t = 0; t < 1000; ++t, ++instances) {
      const auto c = cone_instance(rng, n);
      const RVec grad = f_log_gradient(c.lambda);
      for (int k = 0; k < n; ++k) {
        const double h = 1e-5;
        RVec lp = c.lambda, lm = c.lambda;
        lp(k) += h;
        lm(k) -= h;
        const double fd = (f_log(lp) - f_log(lm)) / (2 * h);
        grad_err = std::max(grad_err, std::abs(fd - grad(k)) / std::abs(grad(k)));
        if (!(grad(k) > 0.0) || !(f_log(lp) > f_log(c.lambda))) ++monotone;
      }
      const CMat dg = random_hermitian(rng, n);
      const CMat phi = F_first_derivative(c.g, c.alpha);
      auto F = [&](const CMat& x) { return f_log(generalized_eigen(x, c.alpha, 0).lambda); };
      const double h = 1e-5;
      const double fd = (F(c.g + dg * h) - F(c.g - dg * h)) / (2 * h);
      const double an = trace_product(phi, dg).real();
      phi_err = std::max(phi_err, std::abs(fd - an) / (phi.norm() * dg.norm()));

      const auto other = cone_instance(rng, n);
      const RVec mid = 0.5 * (c.lambda + other.lambda);
      if (f_log(mid) < 0.5 * (f_log(c.lambda) + f_log(other.lambda)) - 1e-12) ++concave;
      const double s = std::uniform_real_distribution<double>(0.1, 10.0)(rng);
      if (std::abs(f_log(s * c.lambda) - f_log(c.lambda) - n * std::log(s)) > 1e-10) ++homogeneous;
    }
  }
  const bool ok = grad_err <= 1e-6 && phi_err <= 1e-6 && concave + monotone + homogeneous == 0;
  return {ok, fmt("%d instances n=2..5: gradient FD %.2e, Phi FD %.2e (bound 1e-6); violations: concavity %d, "
                  "monotonicity %d, homogeneity %d",
                  instances, grad_err, phi_err, concave, monotone, homogeneous)};
}

Outcome n2_reduction() {
  const GridSpec g(2, 32);
  std::mt19937_64 rng(909);
  const auto alpha = random_smooth_metric(g, rng);
  const auto alpha0 = random_smooth_metric(g, rng);
  const EquationData d(alpha, alpha0, product_forcing(g, 0.2));
  double omega_err = 0.0, eq_err = 0.0;
  auto compare = [&](const ScalarField& u, double b) {
    const auto omega = omega_from_u(u, d);
    const auto hu = hessian(u);
    const auto r = residual(u, b, d);
    for (std::size_t p = 0; p < g.size(); ++p) {
      const CMat direct = alpha0.at(p) + hu.at(p);
      omega_err = std::max(omega_err, (omega.at(p) - direct).norm());
      const double ma = std::log(real_det(direct)) - std::log(real_det(alpha.at(p))) - d.F().real(p) - b;
      eq_err = std::max(eq_err, std::abs(r.value.real(p) - ma));
    }
  };
  compare(random_potential(g, rng, 0.02), 0.1);
  const auto s = continuation_solve(d);
  compare(s.u, s.b);
  return {omega_err <= 1e-9 && eq_err <= 1e-9,
          fmt("n=2 N=32 non-Kahler alpha != alpha0, random and converged u: omega vs alpha0 + i ddbar u %.2e, "
              "residual vs complex Monge-Ampere %.2e (bound 1e-9)",
              omega_err, eq_err)};
}

Outcome diagnostics_stability() {
  auto data = [](const GridSpec& g) { return flat_data(g, product_forcing(g, 0.5)); };
  const GridSpec g32(2, 32), g64(2, 64);
  double r32 = 0.0, b32 = 0.0;
  std::optional<ScalarField> u64;
  {
    const auto s = continuation_solve(data(g32));
    r32 = s.diagnostics.ratio;
    b32 = s.b;
    u64.emplace(prolong(s.u, g64));
  }
  const auto d64 = data(g64);
  SolverState init{std::move(*u64)};
  init.b = b32;
  init.t = 1.0;
  const auto s64 = newton_solve(d64, std::move(init));
  const double r64 = diagnostics(s64, d64).ratio;
  const double change = std::abs(r64 - r32) / r32;
  return {change <= 0.2, fmt("n=2 ratio N=32 %.6f, N=64 %.6f: change %.2e (bound 0.2)", r32, r64, change)};
}

Outcome conformal_factor() {
  const GridSpec g(3, 8);
  const auto raw = diagonal_conformal(g, 0.1);
  const double before = gauduchon_defect(raw, raw);
  const auto v = gauduchon_conformal_factor(raw);
  const auto corrected = conformal_rescale(raw, v);
  const double mean = std::abs(v.mean().real() - 1.0);
  const double defect = gauduchon_defect(corrected, corrected);
  const double id_corrected = gauduchon_conformal_factor(corrected).shifted(-1.0).sup_abs();
  const double id_flat = gauduchon_conformal_factor(HermitianTensorField::identity(g)).shifted(-1.0).sup_abs();
  const bool ok = v.min_real() > 0.0 && mean <= 1e-10 && defect <= 1e-8 && id_corrected <= 1e-8 && id_flat <= 1e-8;
  return {ok, fmt("n=3 N=8: min v %.4f, |mean v - 1| %.2e, defect %.2e -> %.2e (1e-8); v - 1 on Gauduchon input: "
                  "corrected %.2e, flat %.2e (1e-8)",
                  v.min_real(), mean, before, defect, id_corrected, id_flat)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"z_identity", z_identity},
      {"w_assumptions", w_assumptions},
      {"p_star_identity", p_star_identity},
      {"manufactured_recovery", manufactured},
      {"torsion_end_to_end", torsion_end_to_end},
      {"aeppli_class", aeppli},
      {"uniqueness", uniqueness},
      {"eigen_calculus", eigen_calculus},
      {"n2_reduction", n2_reduction},
      {"diagnostics_stability", diagnostics_stability},
      {"conformal_factor", conformal_factor},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += o.pass ? 0 : 1;
    std::printf("%s %2zu %-22s %s [%.0f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  std::printf("peak RSS %.0f MB, %d of %zu criteria failed\n", ru.ru_maxrss / 1024.0, failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
