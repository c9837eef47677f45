#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "srgeo/connectivity.hpp"
#include "srgeo/structure.hpp"

namespace srgeo {

// Catalog: heisenberg-N (any N >= 1), engel, perturbed-heisenberg.
std::vector<std::string> builtin_model_names();
bool is_builtin_model(const std::string& name);
StructureSpec builtin_model(const std::string& name);

struct PlanarPolyline {
  std::vector<Eigen::Vector2d> pts;
};

// Line integral of y dx - x dy along the polyline; a closed loop gives
// minus twice its signed (counter-clockwise) area.
double heisenberg_area(const PlanarPolyline& poly);

// Horizontal lift through (first vertex, t0): one 3d point per vertex.
std::vector<Vec> heisenberg_lift_points(const PlanarPolyline& poly, double t0);

// The lift as a unit-speed segment plan; start must project to the first
// vertex.
BrokenGeodesic heisenberg_lift(const PlanarPolyline& poly, const Vec& start);

// Group operations on any heisenberg-N chart (x_1..x_n, y_1..y_n, t).
Vec heisenberg_mul(const Vec& a, const Vec& b);
Vec heisenberg_inverse(const Vec& a);

// Exact Carnot distance between heisenberg-N chart points.
double heisenberg_dc(const Vec& p, const Vec& q, double tol = 1e-12);

// Straight reach plus a regular ngon canceling the vertical residual;
// lands on q exactly. heisenberg-1 charts only.
BrokenGeodesic heisenberg_plan(const Vec& p, const Vec& q, int ngon);

// Seed plans a model contributes to upper-distance searches.
std::vector<BrokenGeodesic> model_seed_plans(const StructureSpec& spec, const Vec& p,
                                             const Vec& q);

// Weighted dilation p_i -> lambda^{w_i} p_i; needs declared layer weights.
Vec carnot_dilate(const StructureSpec& spec, double lambda, const Vec& p);

}  // namespace srgeo
