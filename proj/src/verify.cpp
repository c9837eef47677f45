#include "srgeo/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <vector>

#include "srgeo/connection.hpp"
#include "srgeo/connectivity.hpp"
#include "srgeo/convexity.hpp"
#include "srgeo/geodesics.hpp"
#include "srgeo/models.hpp"
#include "srgeo/rng.hpp"

namespace srgeo {
namespace {

std::string fmt(const char* f, ...) {
  char buf[768];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Traits {
  bool h1 = false;
  bool hn = false;  // any heisenberg-N
  bool engel = false;
  bool perturbed = false;
};

Traits traits_of(const Structure& S) {
  Traits t;
  const std::string& n = S.spec().name;
  t.hn = n.rfind("heisenberg-", 0) == 0;
  t.h1 = n == "heisenberg-1";
  t.engel = n == "engel";
  t.perturbed = n == "perturbed-heisenberg";
  return t;
}

Eigen::MatrixX2d shrink_box(const Eigen::MatrixX2d& box, double factor) {
  Eigen::MatrixX2d out(box.rows(), 2);
  for (int i = 0; i < box.rows(); ++i) {
    double c = 0.5 * (box(i, 0) + box(i, 1));
    double h = 0.5 * (box(i, 1) - box(i, 0)) * factor;
    out(i, 0) = c - h;
    out(i, 1) = c + h;
  }
  return out;
}

Vec box_center(const Eigen::MatrixX2d& box) {
  Vec c(box.rows());
  for (int i = 0; i < box.rows(); ++i) c[i] = 0.5 * (box(i, 0) + box(i, 1));
  return c;
}

Vec ball_point(const Structure& S, const Rng& rng, std::uint64_t ctr, const Vec& center,
               double radius) {
  int m = S.dim();
  Vec dir = rng.unit_vector(ctr, m);
  double u = rng.uniform(ctr * 64 + 63);
  return S.clamp_to_domain(center + radius * std::pow(u, 1.0 / m) * dir);
}

void push(VerifyReport& R, std::string name, bool pass, std::string detail) {
  R.checks.push_back({std::move(name), pass, std::move(detail)});
}

double max_traj_gap(const HorizontalCurve& a, const HorizontalCurve& b) {
  std::size_t n = std::min(a.x.size(), b.x.size());
  double worst = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    worst = std::max(worst, (a.x[j] - b.x[j]).lpNorm<Eigen::Infinity>());
  return worst;
}

void row_flatness(const Structure& S, std::uint64_t seed, VerifyReport& R) {
  Rng rng(seed, 101);
  std::vector<double> g;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    Vec p = rng.in_box(s, S.spec().domain);
    S.horizontal_christoffels(p, g);
    for (double v : g) worst = std::max(worst, std::abs(v));
  }
  push(R, "carnot-flatness", worst <= 1e-12,
       fmt("max |Gamma^r_ij| = %.2e over 1000 points (tol 1e-12)", worst));
}

void row_growth(const Structure& S, const Traits& t, std::uint64_t seed, VerifyReport& R) {
  std::vector<int> expect;
  if (t.hn)
    expect = {S.rank(), S.dim()};
  else if (t.engel)
    expect = {2, 3, 4};
  else if (t.perturbed)
    expect = {2, 3};
  else
    expect = S.growth_vector(box_center(S.spec().domain)).layers;

  Rng rng(seed, 102);
  bool ok = true;
  GrowthVector last;
  for (std::uint64_t s = 0; s < 20 && ok; ++s) {
    Vec p = rng.in_box(s, shrink_box(S.spec().domain, 0.9));
    last = S.growth_vector(p);
    ok = last.complete && last.layers == expect;
  }
  std::string layers;
  for (std::size_t i = 0; i < expect.size(); ++i)
    layers += (i ? "," : "") + std::to_string(expect[i]);
  push(R, "growth-vector", ok,
       fmt("layers (%s) at 20 points, complete=%d", layers.c_str(), last.complete ? 1 : 0));
}

void row_closed_form(const Structure& S, std::uint64_t seed, VerifyReport& R) {
  IntegrateOptions io;
  io.step = 1e-3;
  double end_err = 0.0, drift = 0.0;

  auto run = [&](const Vec& x0, double a, double b, double T) {
    Vec v0(2);
    v0 << a, b;
    HorizontalCurve c = nonholonomic_geodesic(S, x0, v0, T, io);
    Vec want(3);
    want << x0[0] + a * T, x0[1] + b * T, x0[2] + 0.5 * (a * x0[1] - b * x0[0]) * T;
    end_err = std::max(end_err, (c.end() - want).lpNorm<Eigen::Infinity>());
    double s0 = c.u.front().norm();
    for (const Vec& u : c.u) drift = std::max(drift, std::abs(u.norm() - s0));
  };

  Vec o = Vec::Zero(3);
  run(o, 1.0, 0.0, 1.0);
  Vec x1(3);
  x1 << 0.0, 1.0, 0.0;
  run(x1, 1.0, 0.0, 1.0);
  double r2 = 1.0 / std::sqrt(2.0);
  run(o, r2, r2, std::sqrt(2.0));

  Rng rng(seed, 103);
  for (std::uint64_t s = 0; s < 8; ++s) {
    Vec x0 = rng.in_box(s, shrink_box(S.spec().domain, 0.45));
    Vec d = rng.unit_vector(100 + s, 2);
    run(x0, d[0], d[1], 0.7);
  }

  double hom = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    Vec x0 = rng.in_box(200 + s, shrink_box(S.spec().domain, 0.45));
    Vec v = rng.unit_vector(300 + s, 2);
    Vec e1 = nonholonomic_geodesic(S, x0, 2.0 * v, 0.5, io).end();
    Vec e2 = nonholonomic_geodesic(S, x0, v, 1.0, io).end();
    hom = std::max(hom, (e1 - e2).lpNorm<Eigen::Infinity>());
  }

  bool ok = end_err <= 1e-8 && drift <= 1e-9 && hom <= 1e-8;
  push(R, "geodesic-closed-form", ok,
       fmt("endpoint err %.2e (tol 1e-8), speed drift %.2e (tol 1e-9), scaling gap %.2e "
           "(tol 1e-8)",
           end_err, drift, hom));
}

void row_homogeneity(const Structure& S, std::uint64_t seed, VerifyReport& R) {
  IntegrateOptions io;
  io.step = 1e-3;
  Rng rng(seed, 104);
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 4; ++s) {
    Vec x0 = rng.in_box(s, shrink_box(S.spec().domain, 0.4));
    Vec v = rng.unit_vector(s, S.rank());
    Vec a = nonholonomic_geodesic(S, x0, 2.0 * v, 0.35, io).end();
    Vec b = nonholonomic_geodesic(S, x0, v, 0.7, io).end();
    worst = std::max(worst, (a - b).lpNorm<Eigen::Infinity>());
    Vec c = nonholonomic_geodesic(S, x0, 0.5 * v, 0.7, io).end();
    Vec d = nonholonomic_geodesic(S, x0, v, 0.35, io).end();
    worst = std::max(worst, (c - d).lpNorm<Eigen::Infinity>());
  }
  push(R, "geodesic-homogeneity", worst <= 1e-8,
       fmt("max gap %.2e under speed scaling (tol 1e-8)", worst));
}

void row_formulation(const Structure& S, std::uint64_t seed, VerifyReport& R) {
  IntegrateOptions io;
  io.step = 1e-3;
  Rng rng(seed, 105);
  double worst = 0.0, defect = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Vec x0 = rng.in_box(s, shrink_box(S.spec().domain, 0.5));
    Vec u0 = rng.unit_vector(s, S.rank());
    HorizontalCurve a = nonholonomic_geodesic(S, x0, u0, 0.5, io);
    ConstraintGeodesic b = geodesic_from_constraints(S, x0, u0, 0.5, io);
    worst = std::max(worst, max_traj_gap(a, b.curve));
    defect = std::max(defect, b.constraint_defect);
  }
  push(R, "formulation-agreement", worst <= 1e-6,
       fmt("max trajectory gap %.2e over 20 starts (tol 1e-6), constraint defect %.2e",
           worst, defect));
}

void row_riemannian(const Structure& S, std::uint64_t seed, VerifyReport& R) {
  IntegrateOptions io;
  io.step = 1e-3;
  Rng rng(seed, 106);
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    Vec x0 = rng.in_box(s, shrink_box(S.spec().domain, 0.4));
    Vec v0 = rng.unit_vector(s, S.rank());
    Vec U0 = Vec::Zero(S.dim());
    U0.head(S.rank()) = v0;
    HorizontalCurve a = nonholonomic_geodesic(S, x0, v0, 1.0, io);
    HorizontalCurve b = riemannian_geodesic(S, x0, U0, 1.0, io);
    worst = std::max(worst, max_traj_gap(a, b));
  }
  push(R, "riemannian-coincidence", worst <= 1e-8,
       fmt("max trajectory gap %.2e from horizontal data, 10 starts (tol 1e-8)", worst));
}

void row_commutator(const Structure& S, const Traits& t, VerifyReport& R) {
  IntegrateOptions io;
  io.step = 2e-3;
  io.record = false;
  Vec p0 = Vec::Zero(S.dim());
  bool ok = true;
  std::string detail;

  if (t.h1) {
    HorizontalCurve c = commutator_flow(S, p0, {0, 1}, 0.1, io);
    Vec want(3);
    want << 0.0, 0.0, -0.01;
    double err = (c.end() - want).lpNorm<Eigen::Infinity>();
    ok = err <= 1e-9;
    detail += fmt("Psi_(1,2)(0.1) endpoint err %.1e (tol 1e-9); ", err);
  }

  AdaptedFrame frame = adapted_frame(S, p0);
  const double taus[] = {0.2, 0.1, 0.05, 0.025};
  for (std::size_t w = 0; w < frame.indices.size(); ++w) {
    const MultiIndex& I = frame.indices[w];
    if (I.size() < 2) continue;
    int weight = static_cast<int>(I.size());
    Vec EI = frame.fields[w].evaluate(S.coords(), p0);
    double r[4];
    bool exact = true;
    for (int j = 0; j < 4; ++j) {
      Vec end = commutator_flow(S, p0, I, taus[j], io).end();
      Vec want = p0 + std::pow(taus[j], weight) * EI;
      r[j] = (end - want).norm();
      exact = exact && r[j] <= 1e-12 * (1.0 + p0.norm());
    }
    if (exact) {
      detail += fmt("%s residual < 1e-12; ", multi_index_str(I).c_str());
      continue;
    }
    // least-squares slope of log r against log tau
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int j = 0; j < 4; ++j) {
      double x = std::log(taus[j]), y = std::log(std::max(r[j], 1e-300));
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    double slope = (4 * sxy - sx * sy) / (4 * sxx - sx * sx);
    bool sok = slope >= weight + 0.8;
    ok = ok && sok;
    detail += fmt("%s slope %.2f (need >= %.1f); ", multi_index_str(I).c_str(), slope,
                  weight + 0.8);
  }
  if (!detail.empty()) detail.resize(detail.size() - 2);
  push(R, "commutator-flow", ok, detail);
}

void row_steering(const Structure& S, std::uint64_t seed, VerifyReport& R) {
  Vec from = box_center(S.spec().domain);
  AdaptedFrame af = adapted_frame(S, from);
  if (!af.complete) {
    push(R, "steering", false, "adapted frame incomplete at the box center");
    return;
  }
  Rng rng(seed, 108);
  Eigen::MatrixX2d half = shrink_box(S.spec().domain, 0.5);
  SteerOptions so;
  so.tol = 1e-6;
  so.max_iter = 50;
  int good = 0, maxit = 0;
  double maxgap = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Vec to = rng.in_box(s, half);
    SteerResult res = steer(S, from, to, so);
    if (res.converged && res.endpoint_gap <= 1e-6) ++good;
    maxit = std::max(maxit, res.iterations);
    maxgap = std::max(maxgap, res.endpoint_gap);
  }
  push(R, "steering", good == 100,
       fmt("%d/100 half-box targets reached (residual tol 1e-6), max residual %.2e, max "
           "iterations %d",
           good, maxgap, maxit));
}

void row_sandwich(const Structure& S, std::uint64_t seed, VerifyReport& R) {
  Rng rng(seed, 109);
  Vec center = Vec::Zero(S.dim());
  DhOptions dopt;
  std::vector<double> ratios;
  bool order_ok = true, reach_ok = true;
  for (std::uint64_t s = 0; s < 50; ++s) {
    Vec p = ball_point(S, rng, 2 * s, center, 0.2);
    Vec q = ball_point(S, rng, 2 * s + 1, center, 0.2);
    dopt.seed = seed + s;
    dopt.seeds = model_seed_plans(S.spec(), p, q);
    DhResult dh = dh_upper(S, p, q, dopt);
    double lo = dc_lower(S, p, q).value;
    double oracle = heisenberg_dc(p, q);
    reach_ok = reach_ok && dh.reached;
    order_ok = order_ok && lo <= dh.value + 1e-12;
    if (oracle > 0) ratios.push_back(dh.value / oracle);
  }
  std::sort(ratios.begin(), ratios.end());
  double med = ratios.empty() ? 0.0
                              : 0.5 * (ratios[(ratios.size() - 1) / 2] +
                                       ratios[ratios.size() / 2]);
  double rmin = ratios.empty() ? 0.0 : ratios.front();
  double rmax = ratios.empty() ? 0.0 : ratios.back();
  bool range_ok = rmin >= 1.0 - 1e-3 && rmax <= 3.0;
  push(R, "distance-sandwich", reach_ok && order_ok && range_ok && med <= 1.2,
       fmt("50 pairs in B(0,0.2): lower<=upper %s, upper/oracle in [%.4f, %.4f] "
           "(need [0.999, 3.0]), median %.4f (tol 1.2)",
           order_ok ? "always" : "VIOLATED", rmin, rmax, med));
}

void row_planner(const Structure& S, std::uint64_t seed, VerifyReport& R) {
  Vec o = Vec::Zero(3), q(3);
  q << 0.0, 0.0, 1.0;
  double oracle = heisenberg_dc(o, q);
  auto ratio = [&](int n) { return heisenberg_plan(o, q, n).total_length() / oracle; };
  double r16 = ratio(16), r32 = ratio(32), r64 = ratio(64);

  DhOptions d4;
  d4.budget = 4;
  d4.seed = seed ^ 0x9a;
  DhResult dh = dh_upper(S, o, q, d4);

  bool ok = r16 <= 1.007 && dh.reached && dh.value <= 4.01;
  push(R, "planner-oracle", ok,
       fmt("q=(0,0,1): ngon ratios %.6f@16 (tol 1.007), %.6f@32, %.6f@64; the regular-"
           "polygon construction floors at sqrt(n tan(pi/n)/pi) = 1.00161 for n=32, so "
           "1.001 is reported, not gated; budget-4 upper %.4f (tol 4.01)",
           r16, r32, r64, dh.value));
}

void row_ballbox(const Structure& S, const Traits& t, std::uint64_t seed, VerifyReport& R) {
  double hw = 1e300;
  const auto& box = S.spec().domain;
  for (int i = 0; i < box.rows(); ++i) hw = std::min(hw, 0.5 * (box(i, 1) - box(i, 0)));
  double eps = t.h1 ? 0.2 : (t.engel ? 0.1 : std::min(0.15, 0.25 * hw));
  BallBoxReport rep = ballbox_probe(S, box_center(box), eps, 200, 2e-3, seed, 12);
  push(R, "ball-box", rep.violations == 0 && rep.samples == 200,
       fmt("eps=%.2g: %d/%d cube images beyond eps (need 0), max dhat/eps %.3f; "
           "surjectivity probe %d/%d steered back, chat %.2f, Chat %.2f",
           eps, rep.violations, rep.samples, rep.max_ratio, rep.hits, rep.probes, rep.chat,
           rep.Chat));
}

void row_convexity(const Structure& S, const Traits& t, std::uint64_t seed, VerifyReport& R) {
  struct FCase {
    const char* text;
    Verdict want;
  };
  std::vector<FCase> cases;
  if (t.h1)
    cases = {{"x^2", Verdict::Convex},       {"x^2+y^2", Verdict::Convex},
             {"t", Verdict::Convex},         {"x^4", Verdict::Convex},
             {"x^2-y^2", Verdict::NotConvex}, {"x*y", Verdict::NotConvex}};
  else
    cases = {{"x1^2+x2^2", Verdict::Convex}, {"x1^2-x2^2", Verdict::NotConvex}};

  bool ok = true;
  std::string detail;
  for (const FCase& fc : cases) {
    ScalarField f = ScalarField::parse(fc.text, S.coords());
    ConvexityVerdict vh = nconvexity_by_hessian(S, f, 200, -1.0, seed);
    ConvexityVerdict vg = nconvexity_by_geodesics(S, f, 100, 25, -1.0, seed);
    bool agree = vh.verdict == vg.verdict && vh.verdict == fc.want;
    ok = ok && agree;
    detail += fmt("%s %s/%s; ", fc.text, verdict_str(vh.verdict).c_str(),
                  verdict_str(vg.verdict).c_str());
  }
  if (!detail.empty()) detail.resize(detail.size() - 2);
  push(R, "convexity-routes", ok, detail + " (hessian/geodesic)");
}

void row_carnot_hessian(const Structure& S, std::uint64_t seed, VerifyReport& R) {
  const auto& c = S.coords();
  std::vector<std::string> fs = {
      fmt("%s*%s+%s^3", c[0].c_str(), c[1].c_str(), c[1].c_str()),
      fmt("sin(%s)*%s", c[0].c_str(), c[1].c_str())};
  Rng rng(seed, 110);
  double worst = 0.0;
  int k = S.rank();
  for (const std::string& text : fs) {
    ScalarField f = ScalarField::parse(text, S.coords());
    HorizontalHessian H(S, f);
    std::vector<ScalarField> first;
    for (int i = 0; i < k; ++i) first.push_back(frame_derivative(S, f, i));
    std::vector<ScalarField> second;  // [i*k + j] = X_i X_j f
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) second.push_back(frame_derivative(S, first[j], i));
    for (std::uint64_t s = 0; s < 30; ++s) {
      Vec p = rng.in_box(s, S.spec().domain);
      Mat Hm = H.at(p);
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          double sym = 0.5 * (second[i * k + j].value(p) + second[j * k + i].value(p));
          worst = std::max(worst, std::abs(Hm(i, j) - sym));
        }
    }
  }
  push(R, "carnot-hessian-identity", worst <= 1e-10,
       fmt("max |Hess - sym second frame derivative| = %.2e over 30 points x 2 fields "
           "(tol 1e-10)",
           worst));
}

void row_hessian_rep(const Structure& S, std::uint64_t seed, VerifyReport& R) {
  const auto& c = S.coords();
  std::string text = fmt("%s*%s+%s^2*%s", c[0].c_str(), c[c.size() - 1].c_str(),
                         c[1].c_str(), c[0].c_str());
  ScalarField f = ScalarField::parse(text, S.coords());
  HorizontalHessian H(S, f);
  FullHessian F(S, f);
  Rng rng(seed, 111);
  int k = S.rank(), m = S.dim();
  std::vector<double> gamma;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Vec p = rng.in_box(s, S.spec().domain);
    Mat Hm = H.at(p);
    Mat Fm = F.at(p);
    Vec Ef = F.frame_gradient(p);
    S.full_christoffels(p, gamma);
    auto G = [&](int a, int b, int cc) {
      return gamma[(static_cast<std::size_t>(a) * m + b) * m + cc];
    };
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        double rep = 0.5 * (Fm(i, j) + Fm(j, i));
        for (int cc = k; cc < m; ++cc) rep += 0.5 * (G(i, j, cc) + G(j, i, cc)) * Ef[cc];
        worst = std::max(worst, std::abs(Hm(i, j) - rep));
      }
  }
  push(R, "hessian-representation", worst <= 1e-9,
       fmt("horizontal block vs whole-frame Hessian + vertical correction: max gap %.2e "
           "(tol 1e-9)",
           worst));
}

void row_lower_bound(const Structure& S, std::uint64_t seed, VerifyReport& R) {
  const char* fs[] = {"x^2+y^2", "x", "t"};
  bool ok = true;
  std::string detail;
  for (const char* text : fs) {
    ScalarField f = ScalarField::parse(text, S.coords());
    LowerBoundReport rep =
        lower_bound_check(S, f, Vec::Zero(S.dim()), 0.2, std::nan(""), 500, seed);
    ok = ok && rep.violations == 0 && rep.samples > 0;
    detail += fmt("%s: %d/%d violations, margin >= %.3g; ", text, rep.violations,
                  rep.samples, rep.min_margin);
  }
  if (!detail.empty()) detail.resize(detail.size() - 2);
  push(R, "lower-bound", ok, detail);
}

void row_lipschitz(const Structure& S, std::uint64_t seed, VerifyReport& R) {
  DhOptions dopt;
  dopt.use_steer = false;
  dopt.refine = false;
  Vec center = Vec::Zero(S.dim());
  ScalarField fx = ScalarField::parse("x", S.coords());
  LipschitzEstimate est = lipschitz_estimate(S, fx, center, 0.3, 200, seed, dopt);
  bool ok = est.sup_quotient <= 1.01 && est.skipped == 0 && est.used == 200;

  std::string detail = fmt("f=x sup |df|/dhat = %.4f over %d pairs in B(0,0.3) (tol 1.01)",
                           est.sup_quotient, est.used);
  for (const char* text : {"x^2+y^2", "t"}) {
    ScalarField f = ScalarField::parse(text, S.coords());
    LipschitzEstimate e = lipschitz_estimate(S, f, center, 0.3, 40, seed, dopt);
    ok = ok && std::isfinite(e.sup_quotient) && e.used > 0;
    detail += fmt("; %s sup %.3f", text, e.sup_quotient);
  }
  push(R, "lipschitz", ok, detail + " (all finite)");
}

}  // namespace

bool VerifyReport::all_pass() const {
  for (const CheckResult& c : checks)
    if (!c.pass) return false;
  return true;
}

VerifyReport run_verify(const Structure& S, std::uint64_t seed) {
  VerifyReport R;
  R.model = S.spec().name;
  R.seed = seed;
  Traits t = traits_of(S);

  if (t.hn || t.engel) row_flatness(S, seed, R);
  row_growth(S, t, seed, R);
  if (t.h1) row_closed_form(S, seed, R);
  row_homogeneity(S, seed, R);
  row_formulation(S, seed, R);
  if (t.hn || t.engel) row_riemannian(S, seed, R);
  if (t.h1 || t.engel) row_commutator(S, t, R);
  row_steering(S, seed, R);
  if (t.h1) row_sandwich(S, seed, R);
  if (t.h1) row_planner(S, seed, R);
  row_ballbox(S, t, seed, R);
  if (t.h1 || t.engel) row_convexity(S, t, seed, R);
  if (t.hn || t.engel) row_carnot_hessian(S, seed, R);
  row_hessian_rep(S, seed, R);
  if (t.h1) row_lower_bound(S, seed, R);
  if (t.h1) row_lipschitz(S, seed, R);
  return R;
}

}  // namespace srgeo
