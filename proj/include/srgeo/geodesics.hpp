#pragma once

#include <string>
#include <vector>

#include "srgeo/structure.hpp"

namespace srgeo {

// Truncate: stop at the chart wall (bisected to the boundary) and flag it.
// Ignore: keep integrating, but still flag that the curve left the box.
enum class DomainPolicy { Truncate, Ignore };

struct IntegrateOptions {
  double step = 1e-3;
  DomainPolicy domain = DomainPolicy::Truncate;
  bool record = true;  // false keeps only the endpoints
  long max_steps = 50000000;
};

struct HorizontalCurve {
  std::vector<double> t;
  std::vector<Vec> x;  // chart points
  std::vector<Vec> u;  // frame velocity coefficients at each sample
  bool truncated = false;
  bool left_domain = false;

  const Vec& start() const { return x.front(); }
  const Vec& end() const { return x.back(); }
  double duration() const { return t.back() - t.front(); }
  double length() const;  // trapezoid integral of |u|
  // Columns t,x1..xm,u1..uk with full precision.
  std::string to_csv() const;
};

// xdot = sum_i u^i X_i(x), udot^r = -Gamma^r_ij u^i u^j, fixed-step RK4.
HorizontalCurve nonholonomic_geodesic(const Structure& S, const Vec& p0, const Vec& u0,
                                      double T, const IntegrateOptions& opts = {});

// Unit-time geodesic with the step shrunk in proportion to |u0|.
HorizontalCurve horizontal_exponential(const Structure& S, const Vec& p0, const Vec& u0,
                                       const IntegrateOptions& opts = {});

// Integral curve of the frozen-coefficient field sum_i u^i X_i.
HorizontalCurve horizontal_flow(const Structure& S, const Vec& p0, const Vec& u,
                                double T, const IntegrateOptions& opts = {});
// Integral curve of the single frame field X_dir.
HorizontalCurve frame_flow(const Structure& S, const Vec& p0, int dir, double T,
                           const IntegrateOptions& opts = {});

// Geodesic of the extended metric over the whole frame; U0 has dim()
// coefficients and the recorded u samples keep all of them.
HorizontalCurve riemannian_geodesic(const Structure& S, const Vec& p0, const Vec& U0,
                                    double T, const IntegrateOptions& opts = {});

struct ConstraintGeodesic {
  HorizontalCurve curve;
  // Largest vertical frame coefficient of xdot seen along the curve; the
  // multiplier formulation should keep this at integrator-error level.
  double constraint_defect = 0.0;
};

// Second-order chart formulation: coordinate geodesic of G = A^-T A^-1 with
// reaction forces along the vertical coframe. Independent of the frame
// Christoffel route except for the shared frame expressions.
ConstraintGeodesic geodesic_from_constraints(const Structure& S, const Vec& p0, const Vec& u0,
                                             double T, const IntegrateOptions& opts = {});

}  // namespace srgeo
