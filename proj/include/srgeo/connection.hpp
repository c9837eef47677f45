#pragma once

#include <span>
#include <string>
#include <vector>

#include "srgeo/structure.hpp"

namespace srgeo {

// Dense (i, j, r) -> Gamma^r_ij table over a frame of size n.
struct Christoffels {
  int n = 0;
  std::vector<double> c;
  double operator()(int i, int j, int r) const {
    return c[(static_cast<std::size_t>(i) * n + j) * n + r];
  }
};

// Horizontal block Gamma^r_ij, i, j, r < rank.
Christoffels horizontal_christoffels(const Structure& S, const Vec& p);
// Whole-frame Gamma^c_ab from the declared orthonormal frame.
Christoffels full_christoffels(const Structure& S, const Vec& p);

// Scalar expression over the chart with cached symbolic partials.
class ScalarField {
public:
  ScalarField(Expr f, std::vector<std::string> coords);
  static ScalarField parse(const std::string& text, std::vector<std::string> coords);

  double value(const double* p) const { return fc_.eval(p); }
  double value(const Vec& p) const { return fc_.eval(p.data()); }
  double partial(int j, const double* p) const;
  double partial(int j, const Vec& p) const { return partial(j, p.data()); }

  const Expr& expr() const { return f_; }
  const Expr& partial_expr(int j) const;
  const std::vector<std::string>& coords() const { return coords_; }
  int dim() const { return static_cast<int>(coords_.size()); }

private:
  std::vector<std::string> coords_;
  Expr f_;
  CompiledExpr fc_;
  std::vector<Expr> partials_;
  std::vector<CompiledExpr> partials_c_;
};

// X_a f = sum_l E_a^l df/dx_l as a new field (symbolic).
ScalarField frame_derivative(const Structure& S, const ScalarField& f, int a);

// Frame coefficients (X_1 f, ..., X_k f) of the horizontal gradient.
Vec horizontal_gradient(const Structure& S, const ScalarField& f, const Vec& p);
// Same vector pushed back to chart components.
Vec horizontal_gradient_chart(const Structure& S, const ScalarField& f, const Vec& p);

// div_H W = sum_i X_i w^i + sum_{i,r} w^r Gamma^i_ir for W = w^r X_r with
// one coefficient field per horizontal direction.
double horizontal_divergence(const Structure& S, std::span<const ScalarField> w, const Vec& p);

double sublaplacian(const Structure& S, const ScalarField& f, const Vec& p);

// Symmetrized horizontal Hessian
//   H_ij = (X_i G^j + X_j G^i) / 2 + sum_r G^r (Gamma^j_ir + Gamma^i_jr) / 2,
// G^r = X_r f, built once per field so grid sweeps only pay evaluation.
class HorizontalHessian {
public:
  HorizontalHessian(const Structure& S, const ScalarField& f);
  Vec gradient(const Vec& p) const;  // G^i, i < rank
  Mat at(const Vec& p) const;        // rank x rank, symmetric
  double sublaplacian(const Vec& p) const;

private:
  const Structure* S_;
  int k_;
  std::vector<CompiledExpr> grad_;  // G^i
  std::vector<CompiledExpr> xg_;    // [i*k + j] = X_i G^j
};

// Whole-frame Hessian of the extended metric: E_a E_b f - Gamma^c_ab E_c f,
// not symmetrized. Used to compare representations of the horizontal block.
class FullHessian {
public:
  FullHessian(const Structure& S, const ScalarField& f);
  Vec frame_gradient(const Vec& p) const;  // E_a f over the whole frame
  Mat at(const Vec& p) const;              // dim x dim

private:
  const Structure* S_;
  int m_;
  std::vector<CompiledExpr> grad_;  // E_a f
  std::vector<CompiledExpr> eg_;    // [a*m + b] = E_a E_b f
};

// (Dw/dt)^r = dw^r/dt + Gamma^r_ij v^i w^j along a sampled horizontal curve:
// positions x, frame velocity coefficients v, transported coefficients w.
// dw/dt uses centered differences (one-sided at the ends).
std::vector<Vec> covariant_derivative_along(const Structure& S, std::span<const double> t,
                                            std::span<const Vec> x, std::span<const Vec> v,
                                            std::span<const Vec> w);

// Integrates Dw/dt = 0 from w0 across the samples (RK4 per interval with
// linear interpolation of x and v inside it). Returns w at every sample.
std::vector<Vec> parallel_transport(const Structure& S, std::span<const double> t,
                                    std::span<const Vec> x, std::span<const Vec> v,
                                    const Vec& w0);

}  // namespace srgeo
