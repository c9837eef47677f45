#include "srgeo/geodesics.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace srgeo {

double HorizontalCurve::length() const {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < t.size(); ++i)
    acc += 0.5 * (u[i].norm() + u[i + 1].norm()) * (t[i + 1] - t[i]);
  return acc;
}

std::string HorizontalCurve::to_csv() const {
  std::ostringstream os;
  const int m = static_cast<int>(x.empty() ? 0 : x.front().size());
  const int k = static_cast<int>(u.empty() ? 0 : u.front().size());
  os << "t";
  for (int i = 1; i <= m; ++i) os << ",x" << i;
  for (int i = 1; i <= k; ++i) os << ",u" << i;
  os << "\n";
  char buf[32];
  for (std::size_t s = 0; s < t.size(); ++s) {
    std::snprintf(buf, sizeof buf, "%.17g", t[s]);
    os << buf;
    for (int i = 0; i < m; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", x[s][i]);
      os << "," << buf;
    }
    for (int i = 0; i < k; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", u[s][i]);
      os << "," << buf;
    }
    os << "\n";
  }
  return os.str();
}

namespace {

// Shared fixed-step RK4 driver. The state vector starts with the chart
// point; extract_u pulls the recorded velocity coefficients out of a state.
HorizontalCurve drive(const Structure& S, Vec y0, double T, const IntegrateOptions& opts,
                      const std::function<void(const Vec&, Vec&)>& rhs,
                      const std::function<Vec(const Vec&)>& extract_u) {
  const int m = S.dim();
  if (!(opts.step > 0.0)) throw std::invalid_argument("integration step must be positive");
  long n = (T == 0.0) ? 0 : static_cast<long>(std::ceil(std::abs(T) / opts.step - 1e-12));
  if (n > opts.max_steps)
    throw std::invalid_argument("integration span too long for the step size");
  const double h = (n == 0) ? 0.0 : T / static_cast<double>(n);

  HorizontalCurve out;
  auto record = [&](double tt, const Vec& y) {
    out.t.push_back(tt);
    out.x.push_back(y.head(m));
    out.u.push_back(extract_u(y));
  };

  Vec y = std::move(y0);
  record(0.0, y);
  if (!S.in_domain(y.head(m))) out.left_domain = true;

  Vec k1(y.size()), k2(y.size()), k3(y.size()), k4(y.size()), tmp(y.size());
  auto rk4 = [&](const Vec& from, double hh, Vec& to) {
    rhs(from, k1);
    tmp = from + 0.5 * hh * k1;
    rhs(tmp, k2);
    tmp = from + 0.5 * hh * k2;
    rhs(tmp, k3);
    tmp = from + hh * k3;
    rhs(tmp, k4);
    to = from + (hh / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  };

  Vec ynext(y.size());
  for (long s = 0; s < n; ++s) {
    double t0 = static_cast<double>(s) * h;
    rk4(y, h, ynext);
    bool inside = S.in_domain(ynext.head(m));
    if (!inside) out.left_domain = true;
    if (!inside && opts.domain == DomainPolicy::Truncate) {
      // Bisect the step fraction to land on the wall.
      double lo = 0.0, hi = 1.0;
      Vec best = y;
      double best_l = 0.0;
      for (int it = 0; it < 50; ++it) {
        double mid = 0.5 * (lo + hi);
        rk4(y, h * mid, tmp);
        if (S.in_domain(tmp.head(m))) {
          lo = mid;
          best = tmp;
          best_l = mid;
        } else {
          hi = mid;
        }
      }
      y = best;
      out.truncated = true;
      if (!opts.record) {
        record(t0 + best_l * h, y);
        return out;
      }
      record(t0 + best_l * h, y);
      return out;
    }
    y.swap(ynext);
    if (opts.record || s + 1 == n) record(static_cast<double>(s + 1) * h, y);
  }
  if (!opts.record && out.t.size() > 2) {
    // defensive: endpoint-only mode records exactly start and end
    HorizontalCurve trimmed;
    trimmed.t = {out.t.front(), out.t.back()};
    trimmed.x = {out.x.front(), out.x.back()};
    trimmed.u = {out.u.front(), out.u.back()};
    trimmed.truncated = out.truncated;
    trimmed.left_domain = out.left_domain;
    return trimmed;
  }
  if (out.t.size() == 1) record(0.0, y);  // T == 0: duplicate sample for a valid curve
  return out;
}

// Per-stage scratch for the frame-route geodesic equation.
struct GeodesicRhs {
  const Structure& S;
  int m, k;
  Mat A;
  std::vector<double> gamma;
  Vec p;

  explicit GeodesicRhs(const Structure& s)
      : S(s), m(s.dim()), k(s.rank()), A(s.dim(), s.dim()), p(s.dim()) {}

  void operator()(const Vec& y, Vec& dy) {
    p = y.head(m);
    S.frame_matrix_into(p.data(), A);
    dy.head(m).setZero();
    for (int i = 0; i < k; ++i) dy.head(m) += y[m + i] * A.col(i);
    S.horizontal_christoffels(p, gamma);
    for (int r = 0; r < k; ++r) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
          acc -= gamma[(static_cast<std::size_t>(i) * k + j) * k + r] * y[m + i] * y[m + j];
      dy[m + r] = acc;
    }
  }
};

}  // namespace

HorizontalCurve nonholonomic_geodesic(const Structure& S, const Vec& p0, const Vec& u0,
                                      double T, const IntegrateOptions& opts) {
  const int m = S.dim(), k = S.rank();
  if (p0.size() != m || u0.size() != k)
    throw std::invalid_argument("geodesic needs a chart point and rank() velocity coefficients");
  Vec y0(m + k);
  y0 << p0, u0;
  auto rhs_state = std::make_shared<GeodesicRhs>(S);
  return drive(
      S, std::move(y0), T, opts, [rhs_state](const Vec& y, Vec& dy) { (*rhs_state)(y, dy); },
      [m, k](const Vec& y) { return Vec(y.segment(m, k)); });
}

HorizontalCurve horizontal_exponential(const Structure& S, const Vec& p0, const Vec& u0,
                                       const IntegrateOptions& opts) {
  IntegrateOptions scaled = opts;
  scaled.step = opts.step / std::max(1.0, u0.norm());
  return nonholonomic_geodesic(S, p0, u0, 1.0, scaled);
}

HorizontalCurve horizontal_flow(const Structure& S, const Vec& p0, const Vec& u,
                                double T, const IntegrateOptions& opts) {
  const int m = S.dim(), k = S.rank();
  if (p0.size() != m || u.size() != k)
    throw std::invalid_argument("flow needs a chart point and rank() coefficients");
  auto col = std::make_shared<Vec>(m);
  Vec uc = u;
  auto rhs = [&S, col, uc, k](const Vec& y, Vec& dy) {
    dy.setZero();
    for (int i = 0; i < k; ++i) {
      if (uc[i] == 0.0) continue;
      S.field_value_into(i, y.data(), col->data());
      dy += uc[i] * (*col);
    }
  };
  return drive(S, Vec(p0), T, opts, rhs, [uc](const Vec&) { return uc; });
}

HorizontalCurve frame_flow(const Structure& S, const Vec& p0, int dir, double T,
                           const IntegrateOptions& opts) {
  if (dir < 0 || dir >= S.rank())
    throw std::invalid_argument("frame_flow direction out of range");
  Vec u = Vec::Zero(S.rank());
  u[dir] = 1.0;
  return horizontal_flow(S, p0, u, T, opts);
}

HorizontalCurve riemannian_geodesic(const Structure& S, const Vec& p0, const Vec& U0,
                                    double T, const IntegrateOptions& opts) {
  const int m = S.dim();
  if (p0.size() != m || U0.size() != m)
    throw std::invalid_argument("riemannian geodesic needs dim() velocity coefficients");
  Vec y0(2 * m);
  y0 << p0, U0;
  auto A = std::make_shared<Mat>(m, m);
  auto gamma = std::make_shared<std::vector<double>>();
  auto rhs = [&S, A, gamma, m](const Vec& y, Vec& dy) {
    Vec p = y.head(m);
    S.frame_matrix_into(p.data(), *A);
    dy.head(m) = (*A) * y.tail(m);
    S.full_christoffels(p, *gamma);
    const std::vector<double>& g = *gamma;
    for (int c = 0; c < m; ++c) {
      double acc = 0.0;
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
          acc -= g[(static_cast<std::size_t>(a) * m + b) * m + c] * y[m + a] * y[m + b];
      dy[m + c] = acc;
    }
  };
  return drive(S, std::move(y0), T, opts, rhs, [m](const Vec& y) { return Vec(y.tail(m)); });
}

namespace {

// Chart-coordinate machinery for the multiplier formulation.
struct ConstraintRhs {
  const Structure& S;
  int m, k;
  std::vector<CompiledExpr> jac;  // [(a*m + i)*m + e] = d(E_a^i)/dx_e
  double fd = 1e-6;

  explicit ConstraintRhs(const Structure& s) : S(s), m(s.dim()), k(s.rank()) {
    std::span<const std::string> coords(S.coords());
    jac.reserve(static_cast<std::size_t>(m) * m * m);
    for (int a = 0; a < m; ++a) {
      const FrameField& f = S.field(a);
      for (int i = 0; i < m; ++i)
        for (int e = 0; e < m; ++e)
          jac.push_back(CompiledExpr::compile(f.jac[static_cast<std::size_t>(i)][static_cast<std::size_t>(e)], coords));
    }
  }

  Mat metric(const Vec& p) const {
    Mat A = S.frame_matrix(p);
    Mat Ainv = A.partialPivLu().inverse();
    return Ainv.transpose() * Ainv;
  }

  void operator()(const Vec& y, Vec& dy) {
    Vec p = y.head(m);
    Vec v = y.tail(m);

    Mat A = S.frame_matrix(p);
    Eigen::PartialPivLU<Mat> lu(A);
    Mat Ainv = lu.inverse();
    Mat Ginv = A * A.transpose();

    // dG[e] by central differences in the chart
    std::vector<Mat> dG(static_cast<std::size_t>(m));
    Vec q = p;
    for (int e = 0; e < m; ++e) {
      q[e] = p[e] + fd;
      Mat Gp = metric(q);
      q[e] = p[e] - fd;
      Mat Gm = metric(q);
      q[e] = p[e];
      dG[static_cast<std::size_t>(e)] = (Gp - Gm) / (2.0 * fd);
    }

    // coordinate Christoffels of G
    std::vector<double> gam(static_cast<std::size_t>(m) * m * m, 0.0);
    for (int c = 0; c < m; ++c)
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
          double acc = 0.0;
          for (int d = 0; d < m; ++d)
            acc += Ginv(c, d) * (dG[static_cast<std::size_t>(a)](d, b) +
                                 dG[static_cast<std::size_t>(b)](d, a) -
                                 dG[static_cast<std::size_t>(d)](a, b));
          gam[(static_cast<std::size_t>(a) * m + b) * m + c] = 0.5 * acc;
        }

    // dAinv[e] = -Ainv dA[e] Ainv, exact from the frame Jacobians
    std::vector<Mat> dAinv(static_cast<std::size_t>(m));
    Mat dA(m, m);
    for (int e = 0; e < m; ++e) {
      for (int a = 0; a < m; ++a)
        for (int i = 0; i < m; ++i)
          dA(i, a) = jac[(static_cast<std::size_t>(a) * m + i) * m + e].eval(p.data());
      dAinv[static_cast<std::size_t>(e)] = -Ainv * dA * Ainv;
    }

    // acceleration with the constraint reaction
    dy.head(m) = v;
    for (int c = 0; c < m; ++c) {
      double acc = 0.0;
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
          acc -= gam[(static_cast<std::size_t>(a) * m + b) * m + c] * v[a] * v[b];
      dy[m + c] = acc;
    }
    for (int i = 0; i < m - k; ++i) {
      // lambda_i = -(mu_i)_{a;b} v^a v^b
      double lam = 0.0;
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
          double cov = dAinv[static_cast<std::size_t>(b)](k + i, a);
          for (int d = 0; d < m; ++d)
            cov -= gam[(static_cast<std::size_t>(a) * m + b) * m + d] * Ainv(k + i, d);
          lam -= cov * v[a] * v[b];
        }
      for (int c = 0; c < m; ++c) dy[m + c] += lam * A(c, k + i);
    }
  }
};

}  // namespace

ConstraintGeodesic geodesic_from_constraints(const Structure& S, const Vec& p0, const Vec& u0,
                                             double T, const IntegrateOptions& opts) {
  const int m = S.dim(), k = S.rank();
  if (p0.size() != m || u0.size() != k)
    throw std::invalid_argument("geodesic needs a chart point and rank() velocity coefficients");

  Mat A0 = S.frame_matrix(p0);
  Vec y0(2 * m);
  y0.head(m) = p0;
  y0.tail(m).setZero();
  for (int i = 0; i < k; ++i) y0.tail(m) += u0[i] * A0.col(i);

  auto rhs_state = std::make_shared<ConstraintRhs>(S);
  auto defect = std::make_shared<double>(0.0);
  auto extract = [&S, m, k, defect](const Vec& y) {
    Vec coeff = S.frame_coefficients(y.head(m), y.tail(m));
    double d = coeff.tail(m - k).cwiseAbs().maxCoeff();
    *defect = std::max(*defect, d);
    return Vec(coeff.head(k));
  };

  ConstraintGeodesic out;
  out.curve = drive(
      S, std::move(y0), T, opts, [rhs_state](const Vec& y, Vec& dy) { (*rhs_state)(y, dy); },
      extract);
  out.constraint_defect = *defect;
  return out;
}

}  // namespace srgeo
