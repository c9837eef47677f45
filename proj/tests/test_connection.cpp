#include <doctest.h>

#include <cmath>
#include <vector>

#include "srgeo/connection.hpp"
#include "srgeo/geodesics.hpp"
#include "srgeo/models.hpp"
#include "srgeo/rng.hpp"

using namespace srgeo;

TEST_CASE("heisenberg horizontal block vanishes") {
  Structure S(builtin_model("heisenberg-1"));
  Rng rng(3);
  for (std::uint64_t s = 0; s < 20; ++s) {
    Vec p = rng.in_box(s, S.spec().domain);
    Christoffels G = horizontal_christoffels(S, p);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int r = 0; r < 2; ++r) CHECK(std::abs(G(i, j, r)) <= 1e-13);
  }
}

TEST_CASE("koszul coefficients are metric compatible and torsion free") {
  Structure S(builtin_model("perturbed-heisenberg"));
  int m = S.dim();
  Rng rng(7);
  std::vector<double> c;
  for (std::uint64_t s = 0; s < 8; ++s) {
    Vec p = rng.in_box(s, S.spec().domain);
    Christoffels G = full_christoffels(S, p);
    S.structure_functions(p, c);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        for (int d = 0; d < m; ++d) {
          // antisymmetry in the two non-differentiation slots
          CHECK(G(a, b, d) == doctest::Approx(-G(a, d, b)).epsilon(1e-11));
          // torsion of the frame: Gamma^d_ab - Gamma^d_ba = c_ab^d
          CHECK(G(a, b, d) - G(b, a, d) ==
                doctest::Approx(c[(a * m + b) * m + d]).epsilon(1e-11));
        }
  }
}

TEST_CASE("perturbed model has a genuinely curved horizontal block") {
  Structure S(builtin_model("perturbed-heisenberg"));
  Vec p(3);
  p << 0.5, 1.0, 0.0;
  Christoffels G = horizontal_christoffels(S, p);
  double maxabs = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int r = 0; r < 2; ++r) maxabs = std::max(maxabs, std::abs(G(i, j, r)));
  CHECK(maxabs > 0.01);
}

TEST_CASE("frame derivative of a scalar") {
  Structure S(builtin_model("heisenberg-1"));
  ScalarField f = ScalarField::parse("x*t", S.coords());
  ScalarField x1f = frame_derivative(S, f, 0);  // (d_x + y/2 d_t)(x t) = t + x y/2
  Vec p(3);
  p << 2.0, 3.0, -1.0;
  CHECK(x1f.value(p) == doctest::Approx(-1.0 + 2.0 * 1.5));
  ScalarField x2f = frame_derivative(S, f, 1);  // (d_y - x/2 d_t)(x t) = -x^2/2
  CHECK(x2f.value(p) == doctest::Approx(-2.0));
}

TEST_CASE("horizontal gradient in frame and chart components") {
  Structure S(builtin_model("heisenberg-1"));
  ScalarField f = ScalarField::parse("x^2+y^2", S.coords());
  Vec p(3);
  p << 0.5, -1.5, 2.0;
  Vec g = horizontal_gradient(S, f, p);
  CHECK(g[0] == doctest::Approx(1.0));
  CHECK(g[1] == doctest::Approx(-3.0));
  Vec chart = horizontal_gradient_chart(S, f, p);
  Vec expect = g[0] * S.field(0).evaluate(S.coords(), p) +
               g[1] * S.field(1).evaluate(S.coords(), p);
  CHECK((chart - expect).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("sublaplacian closed forms on heisenberg-1") {
  Structure S(builtin_model("heisenberg-1"));
  ScalarField quad = ScalarField::parse("x^2+y^2", S.coords());
  ScalarField height = ScalarField::parse("t", S.coords());
  Rng rng(13);
  for (std::uint64_t s = 0; s < 6; ++s) {
    Vec p = rng.in_box(s, S.spec().domain);
    CHECK(sublaplacian(S, quad, p) == doctest::Approx(4.0));
    CHECK(sublaplacian(S, height, p) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("divergence of a gradient equals the sublaplacian") {
  Structure S(builtin_model("perturbed-heisenberg"));
  ScalarField f = ScalarField::parse("x^2*y+t", S.coords());
  std::vector<ScalarField> w = {frame_derivative(S, f, 0), frame_derivative(S, f, 1)};
  Rng rng(19);
  for (std::uint64_t s = 0; s < 6; ++s) {
    Vec p = rng.in_box(s, S.spec().domain);
    CHECK(horizontal_divergence(S, w, p) == doctest::Approx(sublaplacian(S, f, p)));
  }
}

TEST_CASE("hessian trace equals the sublaplacian") {
  for (const char* name : {"heisenberg-1", "perturbed-heisenberg"}) {
    Structure S(builtin_model(name));
    ScalarField f = ScalarField::parse("x*y*t+x^3", S.coords());
    HorizontalHessian H(S, f);
    Rng rng(29);
    for (std::uint64_t s = 0; s < 6; ++s) {
      Vec p = rng.in_box(s, S.spec().domain);
      CHECK(H.at(p).trace() == doctest::Approx(sublaplacian(S, f, p)).epsilon(1e-10));
      CHECK(H.sublaplacian(p) == doctest::Approx(sublaplacian(S, f, p)).epsilon(1e-10));
    }
  }
}

TEST_CASE("carnot hessian reduces to symmetrized second frame derivatives") {
  Structure S(builtin_model("heisenberg-1"));
  ScalarField f = ScalarField::parse("x^2*t+y^4", S.coords());
  HorizontalHessian H(S, f);
  std::vector<ScalarField> xi = {frame_derivative(S, f, 0), frame_derivative(S, f, 1)};
  Rng rng(31);
  for (std::uint64_t s = 0; s < 8; ++s) {
    Vec p = rng.in_box(s, S.spec().domain);
    Mat Hm = H.at(p);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        double sym = 0.5 * (frame_derivative(S, xi[j], i).value(p) +
                            frame_derivative(S, xi[i], j).value(p));
        CHECK(std::abs(Hm(i, j) - sym) <= 1e-10);
      }
  }
}

TEST_CASE("horizontal hessian matches the whole-frame representation") {
  Structure S(builtin_model("perturbed-heisenberg"));
  ScalarField f = ScalarField::parse("x*t+y^2*x", S.coords());
  HorizontalHessian H(S, f);
  FullHessian F(S, f);
  int k = S.rank(), m = S.dim();
  Rng rng(37);
  std::vector<double> gamma;
  for (std::uint64_t s = 0; s < 8; ++s) {
    Vec p = rng.in_box(s, S.spec().domain);
    Mat Hm = H.at(p);
    Mat Fm = F.at(p);
    Vec Ef = F.frame_gradient(p);
    S.full_christoffels(p, gamma);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        double rep = 0.5 * (Fm(i, j) + Fm(j, i));
        for (int c = k; c < m; ++c)
          rep += 0.5 * (gamma[(i * m + j) * m + c] + gamma[(j * m + i) * m + c]) * Ef[c];
        CHECK(std::abs(Hm(i, j) - rep) <= 1e-9);
      }
  }
}

TEST_CASE("parallel transport preserves the frame norm") {
  Structure S(builtin_model("perturbed-heisenberg"));
  Vec x0(3);
  x0 << 0.3, -0.2, 0.1;
  Vec u0(2);
  u0 << 0.8, 0.6;
  IntegrateOptions io;
  io.step = 1e-3;
  HorizontalCurve c = nonholonomic_geodesic(S, x0, u0, 1.0, io);
  Vec w0(2);
  w0 << -0.6, 0.8;
  std::vector<Vec> w = parallel_transport(S, c.t, c.x, c.u, w0);
  REQUIRE(w.size() == c.x.size());
  for (const Vec& wi : w) CHECK(std::abs(wi.norm() - 1.0) <= 1e-5);

  std::vector<Vec> dw = covariant_derivative_along(S, c.t, c.x, c.u, w);
  double interior = 0.0;
  for (std::size_t i = 1; i + 1 < dw.size(); ++i)
    interior = std::max(interior, dw[i].lpNorm<Eigen::Infinity>());
  CHECK(interior <= 1e-4);
}

TEST_CASE("geodesic velocity is parallel along itself") {
  Structure S(builtin_model("perturbed-heisenberg"));
  Vec x0 = Vec::Zero(3);
  Vec u0(2);
  u0 << 1.0, 0.5;
  IntegrateOptions io;
  io.step = 1e-3;
  HorizontalCurve c = nonholonomic_geodesic(S, x0, u0, 0.8, io);
  std::vector<Vec> dv = covariant_derivative_along(S, c.t, c.x, c.u, c.u);
  double interior = 0.0;
  for (std::size_t i = 1; i + 1 < dv.size(); ++i)
    interior = std::max(interior, dv[i].lpNorm<Eigen::Infinity>());
  CHECK(interior <= 1e-5);
}
