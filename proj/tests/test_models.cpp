#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "srgeo/connectivity.hpp"
#include "srgeo/models.hpp"
#include "srgeo/rng.hpp"

using namespace srgeo;

namespace {

Vec p3(double a, double b, double c) {
  Vec p(3);
  p << a, b, c;
  return p;
}

PlanarPolyline unit_square() {
  PlanarPolyline poly;
  poly.pts = {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0, 0}};
  return poly;
}

}  // namespace

TEST_CASE("symplectic area of simple polylines") {
  CHECK(heisenberg_area(unit_square()) == doctest::Approx(-2.0));
  PlanarPolyline rev;
  rev.pts = {{0, 0}, {0, 1}, {1, 1}, {1, 0}, {0, 0}};
  CHECK(heisenberg_area(rev) == doctest::Approx(2.0));
  PlanarPolyline seg;
  seg.pts = {{0, 0}, {3, 4}};
  CHECK(heisenberg_area(seg) == doctest::Approx(0.0));
  PlanarPolyline hook;
  hook.pts = {{1, 0}, {1, 1}};
  CHECK(heisenberg_area(hook) == doctest::Approx(-1.0));  // y dx - x dy = -x dy
}

TEST_CASE("lift of the unit square tracks the segment areas") {
  std::vector<Vec> lift = heisenberg_lift_points(unit_square(), 0.0);
  REQUIRE(lift.size() == 5);
  double expect_t[] = {0.0, 0.0, -0.5, -1.0, -1.0};
  for (int i = 0; i < 5; ++i) {
    CHECK(lift[i][0] == doctest::Approx(unit_square().pts[i].x()));
    CHECK(lift[i][1] == doctest::Approx(unit_square().pts[i].y()));
    CHECK(lift[i][2] == doctest::Approx(expect_t[i]));
  }
}

TEST_CASE("lift plan integrates onto the lifted endpoint") {
  Structure S(builtin_model("heisenberg-1"));
  PlanarPolyline poly;
  poly.pts = {{0.2, -0.1}, {0.8, 0.3}, {0.5, 0.9}, {-0.2, 0.4}};
  Vec start = p3(0.2, -0.1, 0.7);
  BrokenGeodesic plan = heisenberg_lift(poly, start);
  CHECK(plan.segment_count() == 3);
  Vec end = plan_endpoint(S, plan, 1e-3);
  std::vector<Vec> lift = heisenberg_lift_points(poly, 0.7);
  CHECK((end - lift.back()).lpNorm<Eigen::Infinity>() <= 1e-7);

  CHECK_THROWS_AS(heisenberg_lift(poly, p3(0, 0, 0)), std::invalid_argument);
}

TEST_CASE("group law and inverses") {
  Vec a = p3(1, 2, 3), b = p3(-0.5, 1, 0.25);
  Vec ab = heisenberg_mul(a, b);
  CHECK(ab[0] == doctest::Approx(0.5));
  CHECK(ab[1] == doctest::Approx(3.0));
  CHECK(ab[2] == doctest::Approx(2.25));

  CHECK(heisenberg_mul(a, heisenberg_inverse(a)).norm() <= 1e-14);

  Rng rng(61);
  for (std::uint64_t s = 0; s < 6; ++s) {
    Vec u = rng.unit_vector(3 * s, 3), v = rng.unit_vector(3 * s + 1, 3),
        w = rng.unit_vector(3 * s + 2, 3);
    Vec l = heisenberg_mul(heisenberg_mul(u, v), w);
    Vec r = heisenberg_mul(u, heisenberg_mul(v, w));
    CHECK((l - r).lpNorm<Eigen::Infinity>() <= 1e-12);
  }

  // heisenberg-2 chart: first pair and second pair couple separately
  Vec c(5), d(5);
  c << 1, 0, 0, 1, 0;
  d << 0, 1, 1, 0, 0;
  Vec cd = heisenberg_mul(c, d);
  CHECK(cd[4] == doctest::Approx(0.5 * ((0 * 0 - 1 * 1) + (1 * 1 - 0 * 0))));
}

TEST_CASE("distance oracle closed forms") {
  Vec o = Vec::Zero(3);
  CHECK(heisenberg_dc(o, p3(0, 0, 1)) == doctest::Approx(2.0 * std::sqrt(M_PI)));
  CHECK(heisenberg_dc(o, p3(0.3, 0.4, 0)) == doctest::Approx(0.5));
  CHECK(heisenberg_dc(o, o) == doctest::Approx(0.0));
  CHECK(heisenberg_dc(p3(1, 1, 0.5), p3(1, 1, 0.5)) == doctest::Approx(0.0));
}

TEST_CASE("distance oracle symmetry and left invariance") {
  Rng rng(67);
  for (std::uint64_t s = 0; s < 8; ++s) {
    Vec p = rng.unit_vector(4 * s, 3) * rng.uniform(4 * s + 1, 0.1, 1.5);
    Vec q = rng.unit_vector(4 * s + 2, 3) * rng.uniform(4 * s + 3, 0.1, 1.5);
    double d = heisenberg_dc(p, q);
    CHECK(heisenberg_dc(q, p) == doctest::Approx(d).epsilon(1e-10));
    Vec g = p3(0.7, -0.4, 0.9);
    CHECK(heisenberg_dc(heisenberg_mul(g, p), heisenberg_mul(g, q)) ==
          doctest::Approx(d).epsilon(1e-10));
  }
}

TEST_CASE("distance oracle is dilation equivariant") {
  StructureSpec spec = builtin_model("heisenberg-1");
  Rng rng(71);
  for (std::uint64_t s = 0; s < 8; ++s) {
    Vec p = rng.unit_vector(2 * s, 3) * 0.6;
    Vec q = rng.unit_vector(2 * s + 1, 3) * 0.6;
    double d = heisenberg_dc(p, q);
    for (double lam : {2.0, 0.5}) {
      Vec dp = carnot_dilate(spec, lam, p), dq = carnot_dilate(spec, lam, q);
      CHECK(heisenberg_dc(dp, dq) == doctest::Approx(lam * d).epsilon(1e-9));
    }
  }
}

TEST_CASE("planner lands exactly and converges like the polygon perimeter") {
  Structure S(builtin_model("heisenberg-1"));
  Vec o = Vec::Zero(3), q = p3(0, 0, 1);
  double oracle = 2.0 * std::sqrt(M_PI);

  BrokenGeodesic g16 = heisenberg_plan(o, q, 16);
  CHECK(g16.total_length() / oracle == doctest::Approx(1.0065055).epsilon(1e-5));
  BrokenGeodesic g32 = heisenberg_plan(o, q, 32);
  CHECK(g32.total_length() / oracle == doctest::Approx(1.0016094).epsilon(1e-5));

  Rng rng(73);
  for (std::uint64_t s = 0; s < 6; ++s) {
    Vec p = rng.unit_vector(2 * s, 3) * 0.8;
    Vec r = rng.unit_vector(2 * s + 1, 3) * 0.8;
    BrokenGeodesic plan = heisenberg_plan(p, r, 16);
    Vec end = plan_endpoint(S, plan, 1e-3);
    CHECK((end - r).norm() <= 1e-6);
    CHECK(plan.total_length() >= heisenberg_dc(p, r) - 1e-9);
  }
}

TEST_CASE("planner handles the no-residual and no-offset corners") {
  Structure S(builtin_model("heisenberg-1"));
  // purely planar target: one straight segment suffices
  BrokenGeodesic flat = heisenberg_plan(Vec::Zero(3), p3(0.6, 0.8, 0), 16);
  CHECK(flat.total_length() == doctest::Approx(1.0).epsilon(1e-12));
  Vec end = plan_endpoint(S, flat, 1e-3);
  CHECK((end - p3(0.6, 0.8, 0)).norm() <= 1e-8);
}

TEST_CASE("dilations require declared weights") {
  StructureSpec engel = builtin_model("engel");
  Vec p(4);
  p << 1, 1, 1, 1;
  Vec d = carnot_dilate(engel, 0.5, p);
  CHECK(d[0] == doctest::Approx(0.5));
  CHECK(d[1] == doctest::Approx(0.5));
  CHECK(d[2] == doctest::Approx(0.25));
  CHECK(d[3] == doctest::Approx(0.125));

  StructureSpec bare = engel;
  bare.weights.clear();
  CHECK_THROWS_AS(carnot_dilate(bare, 2.0, p), SpecError);
}

TEST_CASE("seed plans exist only where a planner does") {
  StructureSpec h1 = builtin_model("heisenberg-1");
  CHECK(model_seed_plans(h1, Vec::Zero(3), p3(0.1, 0.2, 0.3)).size() == 1);
  StructureSpec en = builtin_model("engel");
  Vec a = Vec::Zero(4), b = Vec::Ones(4) * 0.1;
  CHECK(model_seed_plans(en, a, b).empty());
}
