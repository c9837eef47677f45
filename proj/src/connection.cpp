#include "srgeo/connection.hpp"

#include <stdexcept>

namespace srgeo {

Christoffels horizontal_christoffels(const Structure& S, const Vec& p) {
  Christoffels out;
  out.n = S.rank();
  S.horizontal_christoffels(p, out.c);
  return out;
}

Christoffels full_christoffels(const Structure& S, const Vec& p) {
  Christoffels out;
  out.n = S.dim();
  S.full_christoffels(p, out.c);
  return out;
}

ScalarField::ScalarField(Expr f, std::vector<std::string> coords)
    : coords_(std::move(coords)), f_(std::move(f)) {
  fc_ = CompiledExpr::compile(f_, coords_);
  partials_.reserve(coords_.size());
  partials_c_.reserve(coords_.size());
  for (const auto& c : coords_) {
    partials_.push_back(f_.derivative(c));
    partials_c_.push_back(CompiledExpr::compile(partials_.back(), coords_));
  }
}

ScalarField ScalarField::parse(const std::string& text, std::vector<std::string> coords) {
  return ScalarField(parse_expression(text), std::move(coords));
}

double ScalarField::partial(int j, const double* p) const {
  return partials_c_.at(static_cast<std::size_t>(j)).eval(p);
}

const Expr& ScalarField::partial_expr(int j) const {
  return partials_.at(static_cast<std::size_t>(j));
}

ScalarField frame_derivative(const Structure& S, const ScalarField& f, int a) {
  if (f.dim() != S.dim())
    throw std::invalid_argument("scalar field dimension does not match the structure");
  const FrameField& E = S.field(a);
  Expr acc = Expr::number(0.0);
  for (int l = 0; l < S.dim(); ++l) {
    if (E.comps[static_cast<std::size_t>(l)].is_zero()) continue;
    if (f.partial_expr(l).is_zero()) continue;
    acc = acc + E.comps[static_cast<std::size_t>(l)] * f.partial_expr(l);
  }
  return ScalarField(acc, f.coords());
}

Vec horizontal_gradient(const Structure& S, const ScalarField& f, const Vec& p) {
  Vec g(S.rank());
  for (int i = 0; i < S.rank(); ++i) {
    const FrameField& E = S.field(i);
    double acc = 0.0;
    for (int l = 0; l < S.dim(); ++l) {
      if (E.comps[static_cast<std::size_t>(l)].is_zero()) continue;
      acc += E.comps[static_cast<std::size_t>(l)].evaluate(
                 S.coords(), std::span<const double>(p.data(), static_cast<std::size_t>(p.size()))) *
             f.partial(l, p);
    }
    g[i] = acc;
  }
  return g;
}

Vec horizontal_gradient_chart(const Structure& S, const ScalarField& f, const Vec& p) {
  Vec g = horizontal_gradient(S, f, p);
  Mat A = S.frame_matrix(p);
  Vec out = Vec::Zero(S.dim());
  for (int i = 0; i < S.rank(); ++i) out += g[i] * A.col(i);
  return out;
}

double horizontal_divergence(const Structure& S, std::span<const ScalarField> w, const Vec& p) {
  const int k = S.rank();
  if (static_cast<int>(w.size()) != k)
    throw std::invalid_argument("horizontal_divergence needs one coefficient field per horizontal direction");
  Christoffels gamma = horizontal_christoffels(S, p);
  double acc = 0.0;
  for (int i = 0; i < k; ++i) acc += frame_derivative(S, w[i], i).value(p);
  for (int i = 0; i < k; ++i)
    for (int r = 0; r < k; ++r) acc += w[static_cast<std::size_t>(r)].value(p) * gamma(i, r, i);
  return acc;
}

double sublaplacian(const Structure& S, const ScalarField& f, const Vec& p) {
  return HorizontalHessian(S, f).sublaplacian(p);
}

HorizontalHessian::HorizontalHessian(const Structure& S, const ScalarField& f)
    : S_(&S), k_(S.rank()) {
  std::vector<ScalarField> G;
  G.reserve(static_cast<std::size_t>(k_));
  for (int i = 0; i < k_; ++i) G.push_back(frame_derivative(S, f, i));
  for (int i = 0; i < k_; ++i)
    grad_.push_back(CompiledExpr::compile(G[static_cast<std::size_t>(i)].expr(), f.coords()));
  for (int i = 0; i < k_; ++i)
    for (int j = 0; j < k_; ++j) {
      ScalarField xg = frame_derivative(S, G[static_cast<std::size_t>(j)], i);
      xg_.push_back(CompiledExpr::compile(xg.expr(), f.coords()));
    }
}

Vec HorizontalHessian::gradient(const Vec& p) const {
  Vec g(k_);
  for (int i = 0; i < k_; ++i) g[i] = grad_[static_cast<std::size_t>(i)].eval(p.data());
  return g;
}

Mat HorizontalHessian::at(const Vec& p) const {
  Christoffels gamma = srgeo::horizontal_christoffels(*S_, p);
  Vec g = gradient(p);
  Mat H(k_, k_);
  for (int i = 0; i < k_; ++i)
    for (int j = 0; j <= i; ++j) {
      double v = 0.5 * (xg_[static_cast<std::size_t>(i) * k_ + j].eval(p.data()) +
                        xg_[static_cast<std::size_t>(j) * k_ + i].eval(p.data()));
      for (int r = 0; r < k_; ++r) v += 0.5 * g[r] * (gamma(i, r, j) + gamma(j, r, i));
      H(i, j) = v;
      H(j, i) = v;
    }
  return H;
}

double HorizontalHessian::sublaplacian(const Vec& p) const { return at(p).trace(); }

FullHessian::FullHessian(const Structure& S, const ScalarField& f) : S_(&S), m_(S.dim()) {
  std::vector<ScalarField> G;
  G.reserve(static_cast<std::size_t>(m_));
  for (int a = 0; a < m_; ++a) G.push_back(frame_derivative(S, f, a));
  for (int a = 0; a < m_; ++a)
    grad_.push_back(CompiledExpr::compile(G[static_cast<std::size_t>(a)].expr(), f.coords()));
  for (int a = 0; a < m_; ++a)
    for (int b = 0; b < m_; ++b) {
      ScalarField eg = frame_derivative(S, G[static_cast<std::size_t>(b)], a);
      eg_.push_back(CompiledExpr::compile(eg.expr(), f.coords()));
    }
}

Vec FullHessian::frame_gradient(const Vec& p) const {
  Vec g(m_);
  for (int a = 0; a < m_; ++a) g[a] = grad_[static_cast<std::size_t>(a)].eval(p.data());
  return g;
}

Mat FullHessian::at(const Vec& p) const {
  Christoffels gamma = srgeo::full_christoffels(*S_, p);
  Vec g = frame_gradient(p);
  Mat H(m_, m_);
  for (int a = 0; a < m_; ++a)
    for (int b = 0; b < m_; ++b) {
      double v = eg_[static_cast<std::size_t>(a) * m_ + b].eval(p.data());
      for (int c = 0; c < m_; ++c) v -= gamma(a, b, c) * g[c];
      H(a, b) = v;
    }
  return H;
}

namespace {

void check_curve_samples(std::span<const double> t, std::span<const Vec> x,
                         std::span<const Vec> v) {
  if (t.size() < 2 || t.size() != x.size() || t.size() != v.size())
    throw std::invalid_argument("curve samples need matched t, x, v with at least two entries");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1])) throw std::invalid_argument("curve times must be strictly increasing");
}

}  // namespace

std::vector<Vec> covariant_derivative_along(const Structure& S, std::span<const double> t,
                                            std::span<const Vec> x, std::span<const Vec> v,
                                            std::span<const Vec> w) {
  check_curve_samples(t, x, v);
  if (w.size() != t.size())
    throw std::invalid_argument("curve samples need matched t, x, v with at least two entries");
  const int k = S.rank();
  const std::size_t n = t.size();
  std::vector<double> gamma;
  std::vector<Vec> out(n, Vec::Zero(k));
  for (std::size_t s = 0; s < n; ++s) {
    std::size_t lo = (s == 0) ? 0 : s - 1;
    std::size_t hi = (s + 1 == n) ? s : s + 1;
    Vec wdot = (w[hi] - w[lo]) / (t[hi] - t[lo]);
    S.horizontal_christoffels(x[s], gamma);
    Vec d = wdot;
    for (int r = 0; r < k; ++r) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
          acc += gamma[(static_cast<std::size_t>(i) * k + j) * k + r] * v[s][i] * w[s][j];
      d[r] += acc;
    }
    out[s] = d;
  }
  return out;
}

std::vector<Vec> parallel_transport(const Structure& S, std::span<const double> t,
                                    std::span<const Vec> x, std::span<const Vec> v,
                                    const Vec& w0) {
  check_curve_samples(t, x, v);
  const int k = S.rank();
  if (w0.size() != k)
    throw std::invalid_argument("transported vector needs one coefficient per horizontal direction");

  std::vector<double> gamma;
  auto rhs = [&](const Vec& xs, const Vec& vs, const Vec& ws) {
    S.horizontal_christoffels(xs, gamma);
    Vec d = Vec::Zero(k);
    for (int r = 0; r < k; ++r) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
          acc -= gamma[(static_cast<std::size_t>(i) * k + j) * k + r] * vs[i] * ws[j];
      d[r] = acc;
    }
    return d;
  };

  std::vector<Vec> out;
  out.reserve(t.size());
  out.push_back(w0);
  Vec w = w0;
  for (std::size_t s = 0; s + 1 < t.size(); ++s) {
    double h = t[s + 1] - t[s];
    Vec xm = 0.5 * (x[s] + x[s + 1]);
    Vec vm = 0.5 * (v[s] + v[s + 1]);
    Vec k1 = rhs(x[s], v[s], w);
    Vec k2 = rhs(xm, vm, w + 0.5 * h * k1);
    Vec k3 = rhs(xm, vm, w + 0.5 * h * k2);
    Vec k4 = rhs(x[s + 1], v[s + 1], w + h * k3);
    w += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    out.push_back(w);
  }
  return out;
}

}  // namespace srgeo
