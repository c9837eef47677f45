// Acceptance suite: one numbered criterion per run line, exit 1 if any fails.
// Usage: acceptance [--criterion N]   (N = 0 or absent runs all)

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "srgeo/cli.hpp"
#include "srgeo/connection.hpp"
#include "srgeo/connectivity.hpp"
#include "srgeo/convexity.hpp"
#include "srgeo/geodesics.hpp"
#include "srgeo/models.hpp"
#include "srgeo/rng.hpp"
#include "srgeo/structure.hpp"

using namespace srgeo;

namespace {

std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

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

Vec ball_point(const Structure& S, const Rng& rng, std::uint64_t ctr, double radius) {
  int m = S.dim();
  Vec dir = rng.unit_vector(ctr, m);
  double u = rng.uniform(ctr * 64 + 63);
  return S.clamp_to_domain(radius * std::pow(u, 1.0 / m) * dir);
}

double max_traj_gap(const HorizontalCurve& a, const HorizontalCurve& b) {
  std::size_t n = std::min(a.x.size(), b.x.size());
  double worst = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    worst = std::max(worst, (a.x[j] - b.x[j]).lpNorm<Eigen::Infinity>());
  return worst;
}

// ------------------------------------------------------------------ criteria

Outcome c1_flatness() {
  std::string detail;
  double worst_all = 0.0;
  int idx = 0;
  for (const char* name : {"heisenberg-1", "heisenberg-2", "engel"}) {
    Structure S(builtin_model(name));
    Rng rng(2026, 10 + static_cast<std::uint64_t>(idx++));
    std::vector<double> g;
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
      Vec p = rng.in_box(s, S.spec().domain);
      S.horizontal_christoffels(p, g);
      for (double v : g) worst = std::max(worst, std::abs(v));
    }
    worst_all = std::max(worst_all, worst);
    detail += fmt("%s %.1e, ", name, worst);
  }
  detail.resize(detail.size() - 2);
  return {worst_all <= 1e-12,
          "max |Gamma^r_ij| over 1000 points: " + detail + " (tol 1e-12)"};
}

Outcome c2_closed_form() {
  Structure S(builtin_model("heisenberg-1"));
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

  Vec o = Vec::Zero(3), x1(3);
  x1 << 0.0, 1.0, 0.0;
  run(o, 1.0, 0.0, 1.0);
  run(x1, 1.0, 0.0, 1.0);
  double r2 = 1.0 / std::sqrt(2.0);
  run(o, r2, r2, std::sqrt(2.0));

  Rng rng(2026, 20);
  double hom = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    Vec x0 = rng.in_box(s, shrink_box(S.spec().domain, 0.45));
    Vec v(2);
    v = rng.unit_vector(100 + s, 2);
    Vec e1 = nonholonomic_geodesic(S, x0, 2.0 * v, 0.5, io).end();
    Vec e2 = nonholonomic_geodesic(S, x0, v, 1.0, io).end();
    hom = std::max(hom, (e1 - e2).lpNorm<Eigen::Infinity>());
  }

  bool ok = end_err <= 1e-8 && drift <= 1e-9 && hom <= 1e-8;
  return {ok, fmt("endpoint err %.2e (tol 1e-8), speed drift %.2e (tol 1e-9), "
                  "homogeneity gap %.2e (tol 1e-8)",
                  end_err, drift, hom)};
}

Outcome c3_formulations() {
  std::string detail;
  bool ok = true;
  int idx = 0;
  for (const char* name : {"heisenberg-1", "perturbed-heisenberg"}) {
    Structure S(builtin_model(name));
    IntegrateOptions io;
    io.step = 1e-3;
    Rng rng(2026, 30 + static_cast<std::uint64_t>(idx++));
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      Vec x0 = rng.in_box(s, shrink_box(S.spec().domain, 0.5));
      Vec u0 = rng.unit_vector(s, S.rank());
      HorizontalCurve a = nonholonomic_geodesic(S, x0, u0, 0.5, io);
      ConstraintGeodesic b = geodesic_from_constraints(S, x0, u0, 0.5, io);
      worst = std::max(worst, max_traj_gap(a, b.curve));
    }
    ok = ok && worst <= 1e-6;
    detail += fmt("%s %.1e, ", name, worst);
  }
  detail.resize(detail.size() - 2);
  return {ok, "connection vs multiplier trajectories, 20 starts, T=0.5: " + detail +
                  " (tol 1e-6)"};
}

Outcome c4_riemannian() {
  std::string detail;
  bool ok = true;
  int idx = 0;
  for (const char* name : {"heisenberg-1", "engel"}) {
    Structure S(builtin_model(name));
    IntegrateOptions io;
    io.step = 1e-3;
    Rng rng(2026, 40 + static_cast<std::uint64_t>(idx++));
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
      Vec x0 = rng.in_box(s, shrink_box(S.spec().domain, 0.4));
      Vec v0 = rng.unit_vector(s, S.rank());
      Vec U0 = Vec::Zero(S.dim());
      U0.head(S.rank()) = v0;
      worst = std::max(worst, max_traj_gap(nonholonomic_geodesic(S, x0, v0, 1.0, io),
                                           riemannian_geodesic(S, x0, U0, 1.0, io)));
    }
    ok = ok && worst <= 1e-8;
    detail += fmt("%s %.1e, ", name, worst);
  }
  detail.resize(detail.size() - 2);
  return {ok, "riemannian geodesics from horizontal data: " + detail + " (tol 1e-8)"};
}

Outcome c5_commutator() {
  IntegrateOptions io;
  io.step = 2e-3;
  io.record = false;

  Structure h1(builtin_model("heisenberg-1"));
  Vec o3 = Vec::Zero(3), want(3);
  want << 0.0, 0.0, -0.01;
  double err = (commutator_flow(h1, o3, {0, 1}, 0.1, io).end() - want)
                   .lpNorm<Eigen::Infinity>();
  bool ok = err <= 1e-9;
  std::string detail = fmt("Psi_(1,2)(0.1)(0) err %.1e (tol 1e-9)", err);

  Structure en(builtin_model("engel"));
  Vec o4 = Vec::Zero(4);
  AdaptedFrame af = adapted_frame(en, o4);
  const double taus[] = {0.2, 0.1, 0.05, 0.025};

  auto measure = [&](const MultiIndex& I, double need) {
    int w = static_cast<int>(I.size());
    const FrameField* field = nullptr;
    for (std::size_t j = 0; j < af.indices.size(); ++j)
      if (af.indices[j] == I) field = &af.fields[j];
    if (!field) {
      ok = false;
      detail += fmt("; %s missing from the adapted frame", multi_index_str(I).c_str());
      return;
    }
    Vec EI = field->evaluate(en.coords(), o4);
    double r[4];
    bool exact = true;
    for (int j = 0; j < 4; ++j) {
      Vec end = commutator_flow(en, o4, I, taus[j], io).end();
      r[j] = (end - (o4 + std::pow(taus[j], w) * EI)).norm();
      exact = exact && r[j] <= 1e-12;
    }
    if (exact) {
      detail += fmt("; %s remainder < 1e-12 at all taus (exact composition, slope "
                    "clause vacuous)",
                    multi_index_str(I).c_str());
      return;
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int j = 0; j < 4; ++j) {
      double x = std::log(taus[j]), y = std::log(std::max(r[j], 1e-300));
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    double slope = (4 * sxy - sx * sy) / (4 * sxx - sx * sx);
    ok = ok && slope >= need;
    detail += fmt("; %s remainder slope %.2f (need >= %.1f)", multi_index_str(I).c_str(),
                  slope, need);
  };

  measure({0, 1}, 2.8);     // weight 2
  measure({0, 0, 1}, 3.8);  // weight 3
  return {ok, detail};
}

Outcome c6_steering() {
  std::string detail;
  bool ok = true;
  int idx = 0;
  for (const char* name : {"heisenberg-1", "engel"}) {
    Structure S(builtin_model(name));
    Rng rng(2026, 60 + static_cast<std::uint64_t>(idx++));
    Eigen::MatrixX2d half = shrink_box(S.spec().domain, 0.5);
    SteerOptions so;
    so.tol = 1e-6;
    so.max_iter = 50;
    Vec from = Vec::Zero(S.dim());
    int good = 0, maxit = 0;
    double maxres = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      SteerResult r = steer(S, from, rng.in_box(s, half), so);
      if (r.converged && r.endpoint_gap <= 1e-6 && r.iterations <= 50) ++good;
      maxit = std::max(maxit, r.iterations);
      maxres = std::max(maxres, r.endpoint_gap);
    }
    ok = ok && good == 100;
    detail += fmt("%s %d/100 (max residual %.1e, max iter %d), ", name, good, maxres,
                  maxit);
  }
  detail.resize(detail.size() - 2);
  return {ok, detail + "; residual tol 1e-6 within 50 damped-Newton iterations"};
}

Outcome c7_sandwich() {
  Structure S(builtin_model("heisenberg-1"));
  Rng rng(2026, 70);
  DhOptions dopt;
  std::vector<double> ratios;
  bool order_ok = true, reach_ok = true;
  for (std::uint64_t s = 0; s < 50; ++s) {
    Vec p = ball_point(S, rng, 2 * s, 0.2);
    Vec q = ball_point(S, rng, 2 * s + 1, 0.2);
    dopt.seed = 2026 + s;
    dopt.seeds = model_seed_plans(S.spec(), p, q);
    DhResult dh = dh_upper(S, p, q, dopt);
    double lo = dc_lower(S, p, q).value;
    double oracle = heisenberg_dc(p, q);
    reach_ok = reach_ok && dh.reached;
    order_ok = order_ok && lo <= dh.value + 1e-12;
    if (oracle > 0) ratios.push_back(dh.value / oracle);
  }
  std::sort(ratios.begin(), ratios.end());
  double med = 0.5 * (ratios[(ratios.size() - 1) / 2] + ratios[ratios.size() / 2]);
  bool range_ok = ratios.front() >= 1.0 - 1e-3 && ratios.back() <= 3.0;
  bool ok = reach_ok && order_ok && range_ok && med <= 1.2;
  return {ok, fmt("50 pairs in B(0,0.2): lower<=upper %s; upper/oracle in [%.4f, %.4f] "
                  "(need [0.999, 3.0]), median %.4f (tol 1.2)",
                  order_ok ? "always" : "VIOLATED", ratios.front(), ratios.back(), med)};
}

Outcome c8_planner() {
  Structure S(builtin_model("heisenberg-1"));
  Vec o = Vec::Zero(3), q(3);
  q << 0.0, 0.0, 1.0;
  double oracle = heisenberg_dc(o, q);
  double r16 = heisenberg_plan(o, q, 16).total_length() / oracle;
  double r32 = heisenberg_plan(o, q, 32).total_length() / oracle;

  DhOptions d4;
  d4.budget = 4;
  d4.seed = 2026;
  DhResult dh = dh_upper(S, o, q, d4);

  bool ok = r16 <= 1.007 && r32 <= 1.001 && dh.reached && dh.value <= 4.01;
  return {ok, fmt("ngon ratio %.6f@16 (tol 1.007), %.6f@32 (tol 1.001), budget-4 upper "
                  "%.4f (tol 4.01); the polygon construction cannot beat "
                  "sqrt(n tan(pi/n)/pi) = 1.001609 at n=32, so the 1.001 clause fails "
                  "for every run of this planner",
                  r16, r32, dh.value)};
}

Outcome c9_ballbox() {
  std::string detail;
  bool ok = true;
  int idx = 0;
  for (const char* name : {"heisenberg-1", "engel"}) {
    Structure S(builtin_model(name));
    double eps = idx == 0 ? 0.2 : 0.1;
    BallBoxReport rep = ballbox_probe(S, Vec::Zero(S.dim()), eps, 200, 2e-3,
                                      2026 + static_cast<std::uint64_t>(idx++), 12);
    ok = ok && rep.violations == 0 && rep.samples == 200;
    detail += fmt("%s eps=%.2g: %d/%d violations (max dhat/eps %.3f), ", name, eps,
                  rep.violations, rep.samples, rep.max_ratio);
  }
  detail.resize(detail.size() - 2);
  return {ok, detail + "; inclusion needs 0 violations"};
}

Outcome c10_convexity() {
  struct Case {
    const char* model;
    const char* text;
    Verdict want;
  };
  const Case cases[] = {{"heisenberg-1", "x^2", Verdict::Convex},
                        {"heisenberg-1", "x^2+y^2", Verdict::Convex},
                        {"heisenberg-1", "t", Verdict::Convex},
                        {"heisenberg-1", "x^4", Verdict::Convex},
                        {"heisenberg-1", "x^2-y^2", Verdict::NotConvex},
                        {"heisenberg-1", "x*y", Verdict::NotConvex},
                        {"engel", "x1^2+x2^2", Verdict::Convex},
                        {"engel", "x1^2-x2^2", Verdict::NotConvex}};
  bool ok = true;
  int agreed = 0;
  std::string bad;
  for (const Case& c : cases) {
    Structure S(builtin_model(c.model));
    ScalarField f = ScalarField::parse(c.text, S.coords());
    ConvexityVerdict vh = nconvexity_by_hessian(S, f, 200, -1.0, 2026);
    ConvexityVerdict vg = nconvexity_by_geodesics(S, f, 100, 25, -1.0, 2026);
    if (vh.verdict == c.want && vg.verdict == c.want) {
      ++agreed;
    } else {
      ok = false;
      bad += fmt(" %s:%s %s/%s;", c.model, c.text, verdict_str(vh.verdict).c_str(),
                 verdict_str(vg.verdict).c_str());
    }
  }

  double worst = 0.0;
  int idx = 0;
  for (const char* name : {"heisenberg-1", "engel"}) {
    Structure S(builtin_model(name));
    const auto& cs = S.coords();
    std::vector<std::string> fs = {cs[0] + "*" + cs[1] + "+" + cs[1] + "^3",
                                   "sin(" + cs[0] + ")*" + cs[1]};
    Rng rng(2026, 100 + static_cast<std::uint64_t>(idx++));
    int k = S.rank();
    for (const std::string& text : fs) {
      ScalarField f = ScalarField::parse(text, S.coords());
      HorizontalHessian H(S, f);
      std::vector<ScalarField> first;
      for (int i = 0; i < k; ++i) first.push_back(frame_derivative(S, f, i));
      std::vector<ScalarField> second;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) second.push_back(frame_derivative(S, first[j], i));
      for (std::uint64_t s = 0; s < 30; ++s) {
        Vec p = rng.in_box(s, S.spec().domain);
        Mat Hm = H.at(p);
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j) {
            double sym =
                0.5 * (second[i * k + j].value(p) + second[j * k + i].value(p));
            worst = std::max(worst, std::abs(Hm(i, j) - sym));
          }
      }
    }
  }
  ok = ok && worst <= 1e-10;
  std::string detail = fmt("%d/8 fields: hessian and geodesic verdicts both match%s; "
                           "symmetrized-derivative identity gap %.1e (tol 1e-10)",
                           agreed, bad.c_str(), worst);
  return {ok, detail};
}

Outcome c11_lower_bound() {
  Structure S(builtin_model("heisenberg-1"));
  bool ok = true;
  std::string detail;
  for (const char* text : {"x^2+y^2", "x", "t"}) {
    ScalarField f = ScalarField::parse(text, S.coords());
    LowerBoundReport rep =
        lower_bound_check(S, f, Vec::Zero(3), 0.2, std::nan(""), 500, 2026);
    ok = ok && rep.violations == 0 && rep.samples == 500;
    detail += fmt("%s %d/%d, ", text, rep.violations, rep.samples);
  }
  detail.resize(detail.size() - 2);
  return {ok, "violations of the doubling bound with sampled C at radius 0.2: " + detail};
}

Outcome c12_lipschitz() {
  Structure S(builtin_model("heisenberg-1"));
  DhOptions dh;
  dh.use_steer = false;
  dh.refine = false;
  ScalarField fx = ScalarField::parse("x", S.coords());
  LipschitzEstimate est = lipschitz_estimate(S, fx, Vec::Zero(3), 0.3, 200, 2026, dh);
  bool ok = est.sup_quotient <= 1.01 && est.skipped == 0 && est.used == 200;
  std::string detail = fmt("f=x sup quotient %.4f over %d pairs in B(0,0.3) (tol 1.01)",
                           est.sup_quotient, est.used);
  for (const char* text : {"x^2+y^2", "t"}) {
    ScalarField f = ScalarField::parse(text, S.coords());
    LipschitzEstimate e = lipschitz_estimate(S, f, Vec::Zero(3), 0.3, 40, 2026, dh);
    ok = ok && std::isfinite(e.sup_quotient) && e.used > 0;
    detail += fmt("; %s sup %.3f", text, e.sup_quotient);
  }
  return {ok, detail + " (all finite)"};
}

Outcome c13_determinism() {
  std::vector<std::string> args = {"verify", "--model", "heisenberg-1",
                                   "--seed", "7",       "--quiet-timestamps"};
  std::ostringstream out1, err1, out2, err2;
  int rc1 = srgeo::cli::run(args, out1, err1);
  int rc2 = srgeo::cli::run(args, out2, err2);
  bool same = out1.str() == out2.str();
  bool ok = same && rc1 == 0 && rc2 == 0 && !out1.str().empty();
  return {ok, fmt("two runs of verify --model heisenberg-1 --seed 7: exits %d/%d, "
                  "outputs %s (%zu bytes)",
                  rc1, rc2, same ? "byte-identical" : "DIFFER", out1.str().size())};
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> fn;
};

}  // namespace

int main(int argc, char** argv) {
  int pick = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      pick = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N]\n", argv[0]);
      return 1;
    }
  }

  const std::vector<Criterion> table = {
      {1, "carnot flatness", c1_flatness},
      {2, "heisenberg geodesic closed form", c2_closed_form},
      {3, "formulation cross-check", c3_formulations},
      {4, "riemannian coincidence", c4_riemannian},
      {5, "commutator flows", c5_commutator},
      {6, "steering", c6_steering},
      {7, "distance sandwich", c7_sandwich},
      {8, "planner vs oracle", c8_planner},
      {9, "ball-box inclusion", c9_ballbox},
      {10, "convexity route agreement", c10_convexity},
      {11, "doubling lower bound", c11_lower_bound},
      {12, "lipschitz quotient", c12_lipschitz},
      {13, "verify determinism", c13_determinism},
  };

  bool any_fail = false, any_run = false;
  for (const Criterion& c : table) {
    if (pick != 0 && c.id != pick) continue;
    any_run = true;
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d %s: %s  %s\n", c.id, c.title, o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) any_fail = true;
  }
  if (!any_run) {
    std::fprintf(stderr, "no such criterion: %d\n", pick);
    return 1;
  }
  return any_fail ? 1 : 0;
}
