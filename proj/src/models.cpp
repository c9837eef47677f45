#include "srgeo/models.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace srgeo {

using json = nlohmann::ordered_json;

namespace {

StructureSpec heisenberg_spec(int n) {
  json doc;
  doc["name"] = "heisenberg-" + std::to_string(n);
  json coords = json::array();
  if (n == 1) {
    coords = {"x", "y", "t"};
  } else {
    for (int j = 1; j <= n; ++j) coords.push_back("x" + std::to_string(j));
    for (int j = 1; j <= n; ++j) coords.push_back("y" + std::to_string(j));
    coords.push_back("t");
  }
  doc["coords"] = coords;
  const int m = 2 * n + 1;
  auto zero_field = [&]() { return std::vector<std::string>(static_cast<std::size_t>(m), "0"); };
  auto xname = [&](int j) { return n == 1 ? std::string("x") : "x" + std::to_string(j); };
  auto yname = [&](int j) { return n == 1 ? std::string("y") : "y" + std::to_string(j); };

  json horizontal = json::array();
  for (int j = 1; j <= n; ++j) {
    auto f = zero_field();
    f[static_cast<std::size_t>(j - 1)] = "1";
    f[static_cast<std::size_t>(m - 1)] = "0.5*" + yname(j);
    horizontal.push_back(f);
  }
  for (int j = 1; j <= n; ++j) {
    auto f = zero_field();
    f[static_cast<std::size_t>(n + j - 1)] = "1";
    f[static_cast<std::size_t>(m - 1)] = "-0.5*" + xname(j);
    horizontal.push_back(f);
  }
  json vertical = json::array();
  {
    auto f = zero_field();
    f[static_cast<std::size_t>(m - 1)] = "1";
    vertical.push_back(f);
  }
  doc["horizontal"] = horizontal;
  doc["vertical"] = vertical;

  json domain = json::array();
  double lo = (n == 1) ? -4.0 : -3.0, hi = (n == 1) ? 4.0 : 3.0;
  for (int i = 0; i < m - 1; ++i) domain.push_back(json::array({lo, hi}));
  domain.push_back(json::array({-4.0, 4.0}));
  doc["domain"] = domain;

  json weights = json::array();
  for (int i = 0; i < m - 1; ++i) weights.push_back(1);
  weights.push_back(2);
  doc["weights"] = weights;
  return parse_model(doc.dump());
}

StructureSpec engel_spec() {
  json doc;
  doc["name"] = "engel";
  doc["coords"] = {"x1", "x2", "x3", "x4"};
  doc["horizontal"] = {{"1", "0", "0", "0"}, {"0", "1", "x1", "0.5*x1^2"}};
  doc["vertical"] = {{"0", "0", "1", "x1"}, {"0", "0", "0", "1"}};
  doc["domain"] = {{-2, 2}, {-2, 2}, {-2, 2}, {-2, 2}};
  doc["weights"] = {1, 1, 2, 3};
  return parse_model(doc.dump());
}

StructureSpec perturbed_heisenberg_spec() {
  json doc;
  doc["name"] = "perturbed-heisenberg";
  doc["coords"] = {"x", "y", "t"};
  doc["horizontal"] = {{"exp(0.25*y)", "0", "0.5*y*exp(0.25*y)"}, {"0", "1", "-0.5*x"}};
  doc["vertical"] = {{"0", "0", "1"}};
  doc["domain"] = {{-3, 3}, {-3, 3}, {-3, 3}};
  doc["weights"] = {1, 1, 2};
  return parse_model(doc.dump());
}

int heisenberg_order(const std::string& name) {
  const std::string prefix = "heisenberg-";
  if (name.rfind(prefix, 0) != 0) return 0;
  const std::string tail = name.substr(prefix.size());
  if (tail.empty() || tail.size() > 2) return 0;
  for (char c : tail)
    if (c < '0' || c > '9') return 0;
  int n = std::stoi(tail);
  return n >= 1 ? n : 0;
}

}  // namespace

std::vector<std::string> builtin_model_names() {
  return {"heisenberg-1", "heisenberg-2", "engel", "perturbed-heisenberg"};
}

bool is_builtin_model(const std::string& name) {
  return name == "engel" || name == "perturbed-heisenberg" || heisenberg_order(name) > 0;
}

StructureSpec builtin_model(const std::string& name) {
  if (int n = heisenberg_order(name); n > 0) return heisenberg_spec(n);
  if (name == "engel") return engel_spec();
  if (name == "perturbed-heisenberg") return perturbed_heisenberg_spec();
  throw SpecError("unknown model '" + name + "'; built in: heisenberg-N, engel, perturbed-heisenberg");
}

double heisenberg_area(const PlanarPolyline& poly) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < poly.pts.size(); ++i) {
    const auto& a = poly.pts[i];
    const auto& b = poly.pts[i + 1];
    acc += a.y() * b.x() - a.x() * b.y();
  }
  return acc;
}

std::vector<Vec> heisenberg_lift_points(const PlanarPolyline& poly, double t0) {
  if (poly.pts.empty()) throw std::invalid_argument("empty polyline");
  std::vector<Vec> out;
  double t = t0;
  for (std::size_t i = 0; i < poly.pts.size(); ++i) {
    if (i) {
      const auto& a = poly.pts[i - 1];
      const auto& b = poly.pts[i];
      t += 0.5 * (a.y() * b.x() - a.x() * b.y());
    }
    Vec p(3);
    p << poly.pts[i].x(), poly.pts[i].y(), t;
    out.push_back(p);
  }
  return out;
}

namespace {

BrokenGeodesic plan_from_polyline(const PlanarPolyline& poly, double t0) {
  if (poly.pts.empty()) throw std::invalid_argument("empty polyline");
  BrokenGeodesic plan;
  plan.start.resize(3);
  plan.start << poly.pts.front().x(), poly.pts.front().y(), t0;
  for (std::size_t i = 0; i + 1 < poly.pts.size(); ++i) {
    Eigen::Vector2d d = poly.pts[i + 1] - poly.pts[i];
    double len = d.norm();
    if (len == 0.0) continue;
    PlanSegment seg;
    seg.dir.resize(2);
    seg.dir << d.x() / len, d.y() / len;
    seg.len = len;
    plan.segments.push_back(std::move(seg));
  }
  return plan;
}

}  // namespace

BrokenGeodesic heisenberg_lift(const PlanarPolyline& poly, const Vec& start) {
  if (poly.pts.empty()) throw std::invalid_argument("empty polyline");
  if (start.size() != 3) throw std::invalid_argument("start is a heisenberg-1 chart point");
  Eigen::Vector2d first = poly.pts.front();
  if (std::hypot(start[0] - first.x(), start[1] - first.y()) > 1e-9)
    throw std::invalid_argument("start must project to the first vertex");
  return plan_from_polyline(poly, start[2]);
}

namespace {

int heisenberg_n_of(const Vec& a) {
  if (a.size() < 3 || a.size() % 2 == 0)
    throw std::invalid_argument("heisenberg chart points have odd dimension >= 3");
  return static_cast<int>((a.size() - 1) / 2);
}

}  // namespace

Vec heisenberg_mul(const Vec& a, const Vec& b) {
  const int n = heisenberg_n_of(a);
  if (b.size() != a.size()) throw std::invalid_argument("mismatched chart points");
  Vec out(a.size());
  out.head(2 * n) = a.head(2 * n) + b.head(2 * n);
  double cross = 0.0;
  for (int j = 0; j < n; ++j) cross += b[j] * a[n + j] - a[j] * b[n + j];
  out[2 * n] = a[2 * n] + b[2 * n] + 0.5 * cross;
  return out;
}

Vec heisenberg_inverse(const Vec& a) {
  heisenberg_n_of(a);
  return -a;
}

double heisenberg_dc(const Vec& p, const Vec& q, double tol) {
  const int n = heisenberg_n_of(p);
  Vec d = heisenberg_mul(heisenberg_inverse(p), q);
  double c = d.head(2 * n).norm();
  double t = std::abs(d[2 * n]);
  if (t == 0.0) return c;
  if (c == 0.0) return 2.0 * std::sqrt(M_PI * t);

  // solve (phi - sin phi) / (8 sin^2(phi/2)) = t / c^2 on (0, 2 pi)
  const double b = t / (c * c);
  auto g = [](double phi) {
    double s = std::sin(0.5 * phi);
    return (phi - std::sin(phi)) / (8.0 * s * s);
  };
  double lo = 1e-12, hi = 2.0 * M_PI - 1e-12;
  if (g(hi) < b) {
    // beyond the representable arc range the vertical formula dominates
    return 2.0 * std::sqrt(M_PI * t);
  }
  const double goal = std::max(tol, 8.0 * std::numeric_limits<double>::epsilon());
  for (int it = 0; it < 300 && hi - lo > goal * hi; ++it) {
    double mid = 0.5 * (lo + hi);
    if (g(mid) < b)
      lo = mid;
    else
      hi = mid;
  }
  double phi = 0.5 * (lo + hi);
  return c * (0.5 * phi) / std::sin(0.5 * phi);
}

BrokenGeodesic heisenberg_plan(const Vec& p, const Vec& q, int ngon) {
  if (p.size() != 3 || q.size() != 3)
    throw std::invalid_argument("the planner works on heisenberg-1 chart points");
  if (ngon < 3) throw std::invalid_argument("the polygon needs at least three sides");

  Vec d = heisenberg_mul(heisenberg_inverse(p), q);
  double dx = d[0], dy = d[1], rho = d[2];

  PlanarPolyline poly;
  poly.pts.push_back({0.0, 0.0});
  Eigen::Vector2d anchor(0.0, 0.0);
  if (std::hypot(dx, dy) > 0.0) {
    anchor = {dx, dy};
    poly.pts.push_back(anchor);
  }

  if (rho != 0.0) {
    const int ng = ngon;
    double R = std::sqrt(2.0 * std::abs(rho) / (ng * std::sin(2.0 * M_PI / ng)));
    Eigen::Vector2d center = anchor + Eigen::Vector2d(R, 0.0);
    double orient = (rho > 0.0) ? -1.0 : 1.0;  // clockwise raises t
    for (int j = 1; j < ng; ++j) {
      double phi = M_PI + orient * 2.0 * M_PI * j / ng;
      poly.pts.push_back(center + R * Eigen::Vector2d(std::cos(phi), std::sin(phi)));
    }
    poly.pts.push_back(anchor);  // exact closure
  }

  BrokenGeodesic plan = plan_from_polyline(poly, 0.0);
  // translate to the real start; segment data is left-invariant
  plan.start = p;
  return plan;
}

std::vector<BrokenGeodesic> model_seed_plans(const StructureSpec& spec, const Vec& p,
                                             const Vec& q) {
  std::vector<BrokenGeodesic> seeds;
  if (spec.name == "heisenberg-1" && spec.dim() == 3 && p.size() == 3 && q.size() == 3)
    seeds.push_back(heisenberg_plan(p, q, 64));
  return seeds;
}

Vec carnot_dilate(const StructureSpec& spec, double lambda, const Vec& p) {
  if (spec.weights.empty())
    throw SpecError("model '" + spec.name + "' declares no layer weights");
  if (static_cast<Eigen::Index>(spec.weights.size()) != p.size())
    throw std::invalid_argument("one weight per coordinate expected");
  Vec out(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i)
    out[i] = std::pow(lambda, spec.weights[static_cast<std::size_t>(i)]) * p[i];
  return out;
}

}  // namespace srgeo
