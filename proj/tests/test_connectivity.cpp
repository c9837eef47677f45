#include <doctest.h>

#include <cmath>
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

}  // namespace

TEST_CASE("commutator legs unroll the word") {
  std::vector<Leg> legs = commutator_legs({0, 1}, 0.1);
  REQUIRE(legs.size() == 4);
  CHECK(legs[0].dir == 0);
  CHECK(legs[1].dir == 1);
  CHECK(legs[2].dir == 0);
  CHECK(legs[3].dir == 1);
  CHECK(legs[0].time == doctest::Approx(0.1));
  CHECK(legs[2].time == doctest::Approx(-0.1));

  // even weight, distinct leading pair: negative time swaps the leading flows
  std::vector<Leg> neg = commutator_legs({0, 1}, -0.1);
  REQUIRE(neg.size() == 4);
  CHECK(neg[0].dir == 1);
  CHECK(neg[1].dir == 0);

  CHECK(commutator_legs({0, 0, 1}, 0.2).size() == 10);
  CHECK(multi_index_str({0, 1}) == "(1,2)");
}

TEST_CASE("heisenberg commutator flow realizes the bracket exactly") {
  Structure S(builtin_model("heisenberg-1"));
  IntegrateOptions io;
  io.step = 2e-3;
  io.record = false;
  Vec end = commutator_flow(S, Vec::Zero(3), {0, 1}, 0.1, io).end();
  CHECK((end - p3(0, 0, -0.01)).lpNorm<Eigen::Infinity>() <= 1e-9);

  Vec neg = commutator_flow(S, Vec::Zero(3), {0, 1}, -0.1, io).end();
  CHECK((neg - p3(0, 0, 0.01)).lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("engel commutator flows match the hand computation") {
  Structure S(builtin_model("engel"));
  IntegrateOptions io;
  io.step = 2e-3;
  io.record = false;
  double t = 0.2;
  Vec w2 = commutator_flow(S, Vec::Zero(4), {0, 1}, t, io).end();
  Vec expect2(4);
  expect2 << 0, 0, t * t, 0.5 * t * t * t;
  CHECK((w2 - expect2).lpNorm<Eigen::Infinity>() <= 1e-9);

  Vec w3 = commutator_flow(S, Vec::Zero(4), {0, 0, 1}, t, io).end();
  Vec expect3(4);
  expect3 << 0, 0, 0, t * t * t;
  CHECK((w3 - expect3).lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("adapted frames pick weight-sorted spanning words") {
  Structure h1(builtin_model("heisenberg-1"));
  AdaptedFrame f1 = adapted_frame(h1, Vec::Zero(3));
  REQUIRE(f1.complete);
  REQUIRE(f1.indices.size() == 3);
  CHECK(f1.indices[0] == MultiIndex{0});
  CHECK(f1.indices[1] == MultiIndex{1});
  CHECK(f1.indices[2] == MultiIndex{0, 1});
  CHECK(f1.weights() == std::vector<int>{1, 1, 2});

  Structure en(builtin_model("engel"));
  AdaptedFrame f2 = adapted_frame(en, Vec::Zero(4));
  REQUIRE(f2.complete);
  REQUIRE(f2.indices.size() == 4);
  CHECK(f2.indices[2] == MultiIndex{0, 1});
  CHECK(f2.indices[3] == MultiIndex{0, 0, 1});

  Structure h2(builtin_model("heisenberg-2"));
  AdaptedFrame f3 = adapted_frame(h2, Vec::Zero(5));
  REQUIRE(f3.complete);
  REQUIRE(f3.indices.size() == 5);
  CHECK(f3.indices[4] == MultiIndex{0, 2});
}

TEST_CASE("segment counts from the growth vector") {
  Structure h1(builtin_model("heisenberg-1"));
  SegmentCount c1 = segment_count(h1, Vec::Zero(3));
  CHECK(c1.bound == 9);
  CHECK(c1.used == 6);

  Structure en(builtin_model("engel"));
  SegmentCount c2 = segment_count(en, Vec::Zero(4));
  CHECK(c2.bound == 20);
  CHECK(c2.used == 16);
}

TEST_CASE("endpoint map composes the word flows in frame order") {
  Structure S(builtin_model("heisenberg-1"));
  AdaptedFrame frame = adapted_frame(S, Vec::Zero(3));
  Vec params(3);
  params << 0.3, 0.2, 0.0;
  Vec end = f_map(S, frame, Vec::Zero(3), params);
  CHECK((end - p3(0.3, 0.2, -0.03)).lpNorm<Eigen::Infinity>() <= 1e-9);

  std::vector<Leg> legs = f_map_legs(frame, params);
  BrokenGeodesic plan = plan_from_legs(S.rank(), Vec::Zero(3), legs);
  CHECK((plan_endpoint(S, plan, 1e-3) - end).lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("steering reaches targets on both models") {
  Structure h1(builtin_model("heisenberg-1"));
  SteerResult r1 = steer(h1, Vec::Zero(3), p3(0.5, -0.3, 0.7));
  CHECK(r1.converged);
  CHECK(r1.endpoint_gap <= 1e-6);
  CHECK((r1.endpoint - p3(0.5, -0.3, 0.7)).norm() <= 1e-6);
  CHECK(r1.plan.segment_count() > 0);

  Structure en(builtin_model("engel"));
  Vec target(4);
  target << 0.4, -0.2, 0.3, 0.1;
  SteerResult r2 = steer(en, Vec::Zero(4), target);
  CHECK(r2.converged);
  CHECK(r2.endpoint_gap <= 1e-6);
}

TEST_CASE("plan json round trip") {
  Structure S(builtin_model("heisenberg-1"));
  BrokenGeodesic plan = heisenberg_plan(Vec::Zero(3), p3(0.4, 0.1, 0.3), 8);
  BrokenGeodesic back = plan_from_json(plan_to_json(plan));
  REQUIRE(back.segment_count() == plan.segment_count());
  CHECK((back.start - plan.start).norm() <= 1e-15);
  for (int i = 0; i < plan.segment_count(); ++i) {
    CHECK(back.segments[i].len == doctest::Approx(plan.segments[i].len).epsilon(1e-15));
    CHECK((back.segments[i].dir - plan.segments[i].dir).norm() <= 1e-15);
  }
  CHECK(back.total_length() == doctest::Approx(plan.total_length()));
}

TEST_CASE("plan integration agrees with the coarse endpoint evaluator") {
  Structure S(builtin_model("engel"));
  BrokenGeodesic plan;
  plan.start = Vec::Zero(4);
  Vec d1(2), d2(2);
  d1 << 1, 0;
  d2 << 0.6, 0.8;
  plan.segments.push_back({d1, 0.4});
  plan.segments.push_back({d2, 0.3});
  IntegrateOptions io;
  io.step = 1e-3;
  HorizontalCurve full = integrate_plan(S, plan, io);
  Vec coarse = plan_endpoint(S, plan, 1e-3, 60);
  CHECK((full.end() - coarse).lpNorm<Eigen::Infinity>() <= 1e-8);
  CHECK(full.length() == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("upper estimate improves along the budget ladder") {
  Structure S(builtin_model("heisenberg-1"));
  Vec q = p3(0.1, 0.2, 0.05);
  DhOptions o4, o16;
  o4.budget = 4;
  o16.budget = 16;
  DhResult r4 = dh_upper(S, Vec::Zero(3), q, o4);
  DhResult r16 = dh_upper(S, Vec::Zero(3), q, o16);
  CHECK(r4.reached);
  CHECK(r16.reached);
  CHECK(r16.value <= r4.value + 1e-6);
  CHECK(r16.value >= heisenberg_dc(Vec::Zero(3), q) - 1e-6);
}

TEST_CASE("seed plans are kept even over the segment budget") {
  Structure S(builtin_model("heisenberg-1"));
  Vec q = p3(0, 0, 1);
  DhOptions o;
  o.budget = 4;
  o.use_steer = false;
  o.refine = false;
  o.seeds = {heisenberg_plan(Vec::Zero(3), q, 64)};
  DhResult r = dh_upper(S, Vec::Zero(3), q, o);
  CHECK(r.reached);
  CHECK_FALSE(r.within_budget);
  CHECK(r.value == doctest::Approx(3.5463).epsilon(1e-3));
}

TEST_CASE("lower bound stays below the oracle") {
  Structure S(builtin_model("heisenberg-1"));
  Rng rng(53);
  for (std::uint64_t s = 0; s < 10; ++s) {
    Vec p = rng.in_box(2 * s, S.spec().domain) * 0.1;
    Vec q = rng.in_box(2 * s + 1, S.spec().domain) * 0.1;
    double lo = dc_lower(S, p, q).value;
    CHECK(lo <= heisenberg_dc(p, q) + 1e-9);
  }
}

TEST_CASE("ballbox probe smoke run") {
  Structure S(builtin_model("heisenberg-1"));
  BallBoxReport rep = ballbox_probe(S, Vec::Zero(3), 0.2, 30, 2e-3, 99, 4);
  CHECK(rep.samples == 30);
  CHECK(rep.violations == 0);
  CHECK(rep.box_n == 9);
  CHECK(rep.max_ratio <= 1.0 + 1e-9);
  CHECK(rep.rows.size() == 30);
  std::string csv = rep.to_csv();
  CHECK(csv.rfind("sample,", 0) == 0);
}
