#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "srgeo/connection.hpp"
#include "srgeo/connectivity.hpp"
#include "srgeo/structure.hpp"

namespace srgeo {

enum class Verdict { Convex, NotConvex, Inconclusive };

std::string verdict_str(Verdict v);

struct HessianWitness {
  Vec point;
  Vec direction;  // eigenvector of the smallest eigenvalue
  double eigenvalue = 0.0;
};

// A violating (or extremal) midpoint triple on a two-sided geodesic through
// start with initial frame velocity direction. Parameters are signed arc
// lengths; margin = (f(t1) + f(t3)) / 2 - f(t2).
struct GeodesicWitness {
  Vec start;
  Vec direction;
  double t1 = 0.0, t2 = 0.0, t3 = 0.0;
  double f1 = 0.0, f2 = 0.0, f3 = 0.0;
  double margin = 0.0;
  double step = 0.0;
};

struct ConvexityVerdict {
  Verdict verdict = Verdict::Inconclusive;
  double min_margin = 0.0;  // smallest eigenvalue, or smallest triple margin
  double tol = 0.0;
  int checked = 0;  // sample points, or midpoint triples
  std::optional<HessianWitness> hessian_witness;
  std::optional<GeodesicWitness> geodesic_witness;

  std::string to_json() const;
};

// Smallest eigenvalue of the horizontal Hessian over seeded domain samples.
// Negative tol asks for the scale-aware default 1e-8 (1 + max sampled |f|).
ConvexityVerdict nconvexity_by_hessian(const Structure& S, const ScalarField& f, int samples,
                                       double tol, std::uint64_t seed);

// Midpoint convexity of f along seeded two-sided geodesics clipped to the
// domain box. Negative tol asks for 1e-7 (1 + max sampled |f|).
ConvexityVerdict nconvexity_by_geodesics(const Structure& S, const ScalarField& f,
                                         int geodesics, int pts_per_geodesic, double tol,
                                         std::uint64_t seed);

// Re-evaluate stored witnesses; used to confirm a violation reproduces.
double hessian_witness_margin(const Structure& S, const ScalarField& f,
                              const HessianWitness& w);
double geodesic_witness_margin(const Structure& S, const ScalarField& f,
                               const GeodesicWitness& w);

struct LowerBoundReport {
  int n_exponent = 0;   // doubling-chain length from the segment bound
  double c_used = 0.0;  // upper bound on f over the probe neighborhood
  bool c_sampled = false;
  int samples = 0;
  int violations = 0;
  double min_margin = 0.0;  // min of f(p) - (2^N f(y0) - (2^N - 1) C)
  Vec worst;

  std::string to_json() const;
};

// Checks f(p) >= 2^N f(y0) - (2^N - 1) C at endpoints of random broken
// paths from y0 of length <= radius (so the upper distance certificate
// d(y0, p) <= radius holds by construction). Pass C = NaN to use the
// sampled supremum.
LowerBoundReport lower_bound_check(const Structure& S, const ScalarField& f, const Vec& y0,
                                   double radius, double C, int samples, std::uint64_t seed);

struct LipschitzEstimate {
  double sup_quotient = 0.0;
  Vec p, q;  // pair attaining the supremum
  double f_gap = 0.0;
  double dist = 0.0;
  int used = 0;
  int skipped = 0;  // pairs whose distance estimate failed

  std::string to_json() const;
};

// Supremum of |f(p) - f(q)| / dh_upper(p, q) over random pairs in the ball
// of the given radius about center (clamped to the domain box). Options are
// forwarded to dh_upper; model seed plans are added per pair.
LipschitzEstimate lipschitz_estimate(const Structure& S, const ScalarField& f,
                                     const Vec& center, double radius, int pairs,
                                     std::uint64_t seed, const DhOptions& dh = {});

}  // namespace srgeo
