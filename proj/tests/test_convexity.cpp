#include <doctest.h>

#include <cmath>
#include <vector>

#include "srgeo/convexity.hpp"
#include "srgeo/models.hpp"

using namespace srgeo;

namespace {

ScalarField field(const Structure& S, const std::string& text) {
  return ScalarField::parse(text, S.coords());
}

}  // namespace

TEST_CASE("hessian route separates definite from indefinite") {
  Structure S(builtin_model("heisenberg-1"));

  ConvexityVerdict pos = nconvexity_by_hessian(S, field(S, "x^2+y^2"), 120, -1.0, 5);
  CHECK(pos.verdict == Verdict::Convex);
  CHECK(pos.min_margin == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(pos.checked == 120);

  ConvexityVerdict neg = nconvexity_by_hessian(S, field(S, "x^2-y^2"), 120, -1.0, 5);
  CHECK(neg.verdict == Verdict::NotConvex);
  CHECK(neg.min_margin == doctest::Approx(-2.0).epsilon(1e-9));
  REQUIRE(neg.hessian_witness.has_value());
  double replay = hessian_witness_margin(S, field(S, "x^2-y^2"), *neg.hessian_witness);
  CHECK(replay == doctest::Approx(neg.hessian_witness->eigenvalue).epsilon(1e-8));
  CHECK(replay < -1.0);
}

TEST_CASE("geodesic route finds a certified violating triple") {
  Structure S(builtin_model("heisenberg-1"));

  ConvexityVerdict pos = nconvexity_by_geodesics(S, field(S, "x^2"), 40, 15, -1.0, 9);
  CHECK(pos.verdict == Verdict::Convex);
  CHECK(pos.min_margin >= -1e-9);

  ConvexityVerdict neg = nconvexity_by_geodesics(S, field(S, "x*y"), 40, 15, -1.0, 9);
  CHECK(neg.verdict == Verdict::NotConvex);
  REQUIRE(neg.geodesic_witness.has_value());
  const GeodesicWitness& w = *neg.geodesic_witness;
  CHECK(w.margin < 0.0);
  CHECK(w.t1 < w.t2);
  CHECK(w.t2 < w.t3);
  double replay = geodesic_witness_margin(S, field(S, "x*y"), w);
  CHECK(replay == doctest::Approx(w.margin).epsilon(1e-8));
}

TEST_CASE("weight-one coordinate is flat for both routes") {
  Structure S(builtin_model("heisenberg-1"));
  ConvexityVerdict h = nconvexity_by_hessian(S, field(S, "x"), 60, -1.0, 3);
  CHECK(h.verdict == Verdict::Convex);
  CHECK(std::abs(h.min_margin) <= 1e-10);
  ConvexityVerdict g = nconvexity_by_geodesics(S, field(S, "x"), 30, 11, -1.0, 3);
  CHECK(g.verdict == Verdict::Convex);
  CHECK(std::abs(g.min_margin) <= 1e-8);
}

TEST_CASE("routes agree on the standard test battery") {
  Structure S(builtin_model("heisenberg-1"));
  struct Case {
    const char* text;
    Verdict want;
  };
  const Case cases[] = {{"x^2", Verdict::Convex},        {"x^2+y^2", Verdict::Convex},
                        {"t", Verdict::Convex},          {"x^4", Verdict::Convex},
                        {"x^2-y^2", Verdict::NotConvex}, {"x*y", Verdict::NotConvex}};
  for (const Case& c : cases) {
    CAPTURE(c.text);
    ConvexityVerdict vh = nconvexity_by_hessian(S, field(S, c.text), 80, -1.0, 11);
    ConvexityVerdict vg = nconvexity_by_geodesics(S, field(S, c.text), 40, 15, -1.0, 11);
    CHECK(vh.verdict == c.want);
    CHECK(vg.verdict == c.want);
  }
}

TEST_CASE("engel analogues behave like the planar quadratics") {
  Structure S(builtin_model("engel"));
  ConvexityVerdict vh = nconvexity_by_hessian(S, field(S, "x1^2+x2^2"), 80, -1.0, 13);
  CHECK(vh.verdict == Verdict::Convex);
  ConvexityVerdict vg = nconvexity_by_geodesics(S, field(S, "x1^2-x2^2"), 40, 15, -1.0, 13);
  CHECK(vg.verdict == Verdict::NotConvex);
}

TEST_CASE("doubling lower bound holds on sampled broken paths") {
  Structure S(builtin_model("heisenberg-1"));
  LowerBoundReport rep = lower_bound_check(S, field(S, "x^2+y^2"), Vec::Zero(3), 0.2,
                                           std::nan(""), 200, 17);
  CHECK(rep.samples == 200);
  CHECK(rep.violations == 0);
  CHECK(rep.c_sampled);
  CHECK(rep.n_exponent == 9);
  CHECK(rep.min_margin >= 0.0);

  // an explicit C at least the sampled sup keeps the bound valid
  LowerBoundReport fixed =
      lower_bound_check(S, field(S, "x^2+y^2"), Vec::Zero(3), 0.2, 1.0, 200, 17);
  CHECK_FALSE(fixed.c_sampled);
  CHECK(fixed.c_used == doctest::Approx(1.0));
  CHECK(fixed.violations == 0);
}

TEST_CASE("lipschitz quotient of a flat coordinate stays near one") {
  Structure S(builtin_model("heisenberg-1"));
  DhOptions dh;
  dh.use_steer = false;
  dh.refine = false;
  LipschitzEstimate est =
      lipschitz_estimate(S, field(S, "x"), Vec::Zero(3), 0.3, 60, 19, dh);
  CHECK(est.used == 60);
  CHECK(est.skipped == 0);
  CHECK(est.sup_quotient <= 1.01);
  CHECK(est.sup_quotient > 0.3);
  CHECK(est.dist > 0.0);
  CHECK(est.f_gap == doctest::Approx(est.sup_quotient * est.dist).epsilon(1e-9));
}
