#include "srgeo/convexity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "srgeo/geodesics.hpp"
#include "srgeo/models.hpp"
#include "srgeo/rng.hpp"

namespace srgeo {

using json = nlohmann::ordered_json;

namespace {

json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

}  // namespace

std::string verdict_str(Verdict v) {
  switch (v) {
    case Verdict::Convex:
      return "convex";
    case Verdict::NotConvex:
      return "not-convex";
    default:
      return "inconclusive";
  }
}

std::string ConvexityVerdict::to_json() const {
  json j;
  j["verdict"] = verdict_str(verdict);
  j["min_margin"] = min_margin;
  j["tol"] = tol;
  j["checked"] = checked;
  if (hessian_witness) {
    json w;
    w["point"] = vec_json(hessian_witness->point);
    w["direction"] = vec_json(hessian_witness->direction);
    w["eigenvalue"] = hessian_witness->eigenvalue;
    j["hessian_witness"] = w;
  }
  if (geodesic_witness) {
    const auto& g = *geodesic_witness;
    json w;
    w["start"] = vec_json(g.start);
    w["direction"] = vec_json(g.direction);
    w["times"] = {g.t1, g.t2, g.t3};
    w["values"] = {g.f1, g.f2, g.f3};
    w["margin"] = g.margin;
    w["step"] = g.step;
    j["geodesic_witness"] = w;
  }
  return j.dump();
}

ConvexityVerdict nconvexity_by_hessian(const Structure& S, const ScalarField& f, int samples,
                                       double tol, std::uint64_t seed) {
  ConvexityVerdict out;
  if (samples <= 0) return out;
  if (f.dim() != S.dim()) throw std::invalid_argument("field is over a different chart");

  HorizontalHessian hess(S, f);
  Rng rng(seed, 0xc0);
  const Eigen::MatrixX2d& box = S.spec().domain;

  double scale = 0.0;
  double min_eig = std::numeric_limits<double>::infinity();
  Vec argmin_p, argmin_dir;

  for (int s = 0; s < samples; ++s) {
    Vec p = rng.in_box(static_cast<std::uint64_t>(s), box);
    scale = std::max(scale, std::abs(f.value(p)));
    Mat H = hess.at(p);
    Eigen::SelfAdjointEigenSolver<Mat> es(H);
    double lam = es.eigenvalues()(0);
    if (lam < min_eig) {
      min_eig = lam;
      argmin_p = p;
      argmin_dir = es.eigenvectors().col(0);
    }
  }

  out.checked = samples;
  out.min_margin = min_eig;
  out.tol = tol >= 0.0 ? tol : 1e-8 * (1.0 + scale);
  if (min_eig >= -out.tol) {
    out.verdict = Verdict::Convex;
  } else {
    out.verdict = Verdict::NotConvex;
  }
  out.hessian_witness = HessianWitness{argmin_p, argmin_dir, min_eig};
  return out;
}

double hessian_witness_margin(const Structure& S, const ScalarField& f,
                              const HessianWitness& w) {
  HorizontalHessian hess(S, f);
  return w.direction.dot(hess.at(w.point) * w.direction);
}

namespace {

struct SampledGeodesic {
  std::vector<double> s;  // signed arc-length parameters, uniform spacing
  std::vector<Vec> x;
};

// Two-sided geodesic through x0, clipped to the domain, one node per step.
SampledGeodesic two_sided_geodesic(const Structure& S, const Vec& x0, const Vec& v0,
                                   double span, double step) {
  IntegrateOptions opts;
  opts.step = step;
  opts.domain = DomainPolicy::Truncate;
  HorizontalCurve fw = nonholonomic_geodesic(S, x0, v0, span, opts);
  HorizontalCurve bw = nonholonomic_geodesic(S, x0, -v0, span, opts);

  auto uniform_count = [&](const HorizontalCurve& c) {
    std::size_t n = c.t.size();
    if (c.truncated && n > 0) --n;  // the wall node breaks the spacing
    return n;
  };
  std::size_t nf = uniform_count(fw), nb = uniform_count(bw);

  SampledGeodesic out;
  out.s.reserve(nf + nb);
  out.x.reserve(nf + nb);
  for (std::size_t j = nb; j-- > 1;) {
    out.s.push_back(-bw.t[j]);
    out.x.push_back(bw.x[j]);
  }
  for (std::size_t j = 0; j < nf; ++j) {
    out.s.push_back(fw.t[j]);
    out.x.push_back(fw.x[j]);
  }
  return out;
}

}  // namespace

ConvexityVerdict nconvexity_by_geodesics(const Structure& S, const ScalarField& f,
                                         int geodesics, int pts_per_geodesic, double tol,
                                         std::uint64_t seed) {
  ConvexityVerdict out;
  if (geodesics <= 0 || pts_per_geodesic < 3) return out;
  if (f.dim() != S.dim()) throw std::invalid_argument("field is over a different chart");

  const double step = 1e-3;
  const double span = 0.6;
  Rng rng(seed, 0xce);
  const Eigen::MatrixX2d& box = S.spec().domain;

  double scale = 0.0;
  double min_margin = std::numeric_limits<double>::infinity();
  GeodesicWitness worst;
  long triples = 0;

  for (int g = 0; g < geodesics; ++g) {
    Vec x0 = rng.in_box(static_cast<std::uint64_t>(g), box);
    Vec v0 = rng.unit_vector(static_cast<std::uint64_t>(g), S.rank());
    SampledGeodesic curve = two_sided_geodesic(S, x0, v0, span, step);
    std::size_t n = curve.s.size();
    if (n < 3) continue;

    std::size_t stride = std::max<std::size_t>(1, n / static_cast<std::size_t>(pts_per_geodesic));
    std::vector<double> sg, fg;
    for (std::size_t j = 0; j < n; j += stride) {
      sg.push_back(curve.s[j]);
      double val = f.value(curve.x[j]);
      fg.push_back(val);
      scale = std::max(scale, std::abs(val));
    }
    std::size_t ng = sg.size();
    if (ng < 3) continue;

    for (std::size_t c = 1; c + 1 < ng; ++c) {
      std::size_t dmax = std::min(c, ng - 1 - c);
      for (std::size_t d = 1; d <= dmax; ++d) {
        double margin = 0.5 * (fg[c - d] + fg[c + d]) - fg[c];
        ++triples;
        if (margin < min_margin) {
          min_margin = margin;
          worst.start = x0;
          worst.direction = v0;
          worst.t1 = sg[c - d];
          worst.t2 = sg[c];
          worst.t3 = sg[c + d];
          worst.f1 = fg[c - d];
          worst.f2 = fg[c];
          worst.f3 = fg[c + d];
          worst.margin = margin;
          worst.step = step;
        }
      }
    }
  }

  out.checked = static_cast<int>(std::min<long>(triples, std::numeric_limits<int>::max()));
  if (triples == 0) return out;

  out.min_margin = min_margin;
  out.tol = tol >= 0.0 ? tol : 1e-7 * (1.0 + scale);
  out.verdict = (min_margin >= -out.tol) ? Verdict::Convex : Verdict::NotConvex;
  out.geodesic_witness = worst;
  return out;
}

double geodesic_witness_margin(const Structure& S, const ScalarField& f,
                               const GeodesicWitness& w) {
  IntegrateOptions opts;
  opts.step = w.step > 0.0 ? w.step : 1e-3;
  opts.domain = DomainPolicy::Truncate;
  opts.record = false;
  auto at = [&](double t) {
    if (t == 0.0) return f.value(w.start);
    Vec dir = (t > 0.0) ? w.direction : Vec(-w.direction);
    HorizontalCurve c = nonholonomic_geodesic(S, w.start, dir, std::abs(t), opts);
    return f.value(c.end());
  };
  return 0.5 * (at(w.t1) + at(w.t3)) - at(w.t2);
}

std::string LowerBoundReport::to_json() const {
  json j;
  j["n_exponent"] = n_exponent;
  j["c_used"] = c_used;
  j["c_sampled"] = c_sampled;
  j["samples"] = samples;
  j["violations"] = violations;
  j["min_margin"] = min_margin;
  j["worst_point"] = vec_json(worst);
  return j.dump();
}

LowerBoundReport lower_bound_check(const Structure& S, const ScalarField& f, const Vec& y0,
                                   double radius, double C, int samples, std::uint64_t seed) {
  LowerBoundReport rep;
  if (f.dim() != S.dim()) throw std::invalid_argument("field is over a different chart");
  if (y0.size() != S.dim()) throw std::invalid_argument("base point has wrong dimension");
  rep.n_exponent = segment_count(S, y0).bound;
  if (samples <= 0 || radius <= 0.0) return rep;

  const int nseg = 4;
  const int k = S.rank();
  Rng rng(seed, 0x10b);

  std::vector<Vec> pts;
  pts.reserve(static_cast<std::size_t>(samples));
  for (int s = 0; s < samples; ++s) {
    double frac = rng.uniform(static_cast<std::uint64_t>(s) * 64 + 60);
    BrokenGeodesic plan;
    plan.start = y0;
    double wsum = 0.0;
    std::array<double, 4> ws{};
    for (int j = 0; j < nseg; ++j) {
      ws[static_cast<std::size_t>(j)] =
          0.05 + rng.uniform(static_cast<std::uint64_t>(s) * 64 + 56 + j);
      wsum += ws[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < nseg; ++j) {
      PlanSegment seg;
      seg.dir = rng.unit_vector(static_cast<std::uint64_t>(s) * 8 + j, k);
      seg.len = radius * frac * ws[static_cast<std::size_t>(j)] / wsum;
      plan.segments.push_back(std::move(seg));
    }
    bool left = false;
    Vec p = plan_endpoint(S, plan, 1e-3, 25, &left);
    if (left) continue;  // the length certificate needs the path inside
    pts.push_back(std::move(p));
  }

  double f0 = f.value(y0);
  double c_eff = C;
  if (std::isnan(C)) {
    c_eff = f0;
    for (const auto& p : pts) c_eff = std::max(c_eff, f.value(p));
    rep.c_sampled = true;
  }
  rep.c_used = c_eff;

  const double two_n = std::ldexp(1.0, std::min(rep.n_exponent, 300));
  const double rhs = two_n * f0 - (two_n - 1.0) * c_eff;
  const double slack = 1e-9 * (1.0 + std::abs(rhs));

  rep.min_margin = std::numeric_limits<double>::infinity();
  for (const auto& p : pts) {
    double margin = f.value(p) - rhs;
    ++rep.samples;
    if (margin < rep.min_margin) {
      rep.min_margin = margin;
      rep.worst = p;
    }
    if (margin < -slack) ++rep.violations;
  }
  if (rep.samples == 0) rep.min_margin = 0.0;
  return rep;
}

std::string LipschitzEstimate::to_json() const {
  json j;
  j["sup_quotient"] = sup_quotient;
  j["p"] = vec_json(p);
  j["q"] = vec_json(q);
  j["f_gap"] = f_gap;
  j["dist"] = dist;
  j["used"] = used;
  j["skipped"] = skipped;
  return j.dump();
}

LipschitzEstimate lipschitz_estimate(const Structure& S, const ScalarField& f,
                                     const Vec& center, double radius, int pairs,
                                     std::uint64_t seed, const DhOptions& dh) {
  LipschitzEstimate est;
  if (f.dim() != S.dim()) throw std::invalid_argument("field is over a different chart");
  if (center.size() != S.dim()) throw std::invalid_argument("center has wrong dimension");
  const int m = S.dim();
  Rng rng(seed, 0x11b5);

  auto ball_point = [&](std::uint64_t ctr) {
    Vec dir = rng.unit_vector(ctr, m);
    double r = radius * std::pow(rng.uniform(ctr * 64 + 63), 1.0 / m);
    Vec p = center + r * dir;
    return S.clamp_to_domain(p);
  };

  for (int i = 0; i < pairs; ++i) {
    Vec p = ball_point(2 * static_cast<std::uint64_t>(i));
    Vec q = ball_point(2 * static_cast<std::uint64_t>(i) + 1);

    DhOptions opts = dh;
    for (auto& s : model_seed_plans(S.spec(), p, q)) opts.seeds.push_back(std::move(s));
    DhResult d = dh_upper(S, p, q, opts);
    if (!d.reached || d.value <= 1e-12) {
      ++est.skipped;
      continue;
    }
    double gap = std::abs(f.value(p) - f.value(q));
    double quot = gap / d.value;
    ++est.used;
    if (quot > est.sup_quotient) {
      est.sup_quotient = quot;
      est.p = p;
      est.q = q;
      est.f_gap = gap;
      est.dist = d.value;
    }
  }
  return est;
}

}  // namespace srgeo
