#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "srgeo/geodesics.hpp"
#include "srgeo/structure.hpp"

namespace srgeo {

// Bracket word over horizontal directions, 0-based: (i, J) names [X_i, E_J].
using MultiIndex = std::vector<int>;

std::string multi_index_str(const MultiIndex& I);  // 1-based display, "(1,2)"

// One straight piece of a commutator word: flow X_dir for a signed time.
struct Leg {
  int dir;
  double time;
};

// Legs whose composition approximates the flow of E_I for bracket-time
// sign(tau) |tau|^w, w = |I|. Exact group inverses are used for the
// reversed factors, and the sign is carried by parity: a negative tau flips
// through odd words on its own, even words swap the leading pair, and an
// even word with a repeated leading pair negates its inner factor.
std::vector<Leg> commutator_legs(const MultiIndex& I, double tau);

struct PlanSegment {
  Vec dir;     // frame coefficients, unit length
  double len;  // duration >= 0
};

struct BrokenGeodesic {
  Vec start;
  std::vector<PlanSegment> segments;

  int segment_count() const { return static_cast<int>(segments.size()); }
  double total_length() const;
};

std::string plan_to_json(const BrokenGeodesic& plan);
BrokenGeodesic plan_from_json(const std::string& text);

BrokenGeodesic plan_from_legs(int rank, const Vec& start, std::span<const Leg> legs);

// Integrates the plan segment by segment. step_cap limits the per-segment
// step count when positive (coarse endpoint evaluation for search loops).
HorizontalCurve integrate_plan(const Structure& S, const BrokenGeodesic& plan,
                               const IntegrateOptions& opts = {}, int steps_per_segment = 0);
Vec plan_endpoint(const Structure& S, const BrokenGeodesic& plan, double step = 1e-3,
                  int steps_per_segment = 0, bool* left_domain = nullptr);

// Public commutator flow with full sampling.
HorizontalCurve commutator_flow(const Structure& S, const Vec& p, const MultiIndex& I,
                                double tau, const IntegrateOptions& opts = {});

struct AdaptedFrame {
  std::vector<MultiIndex> indices;   // weight-sorted, greedy lex within weight
  std::vector<FrameField> fields;    // E_I for each selected index
  bool complete = false;
  std::vector<int> weights() const;
};

// Greedy basis of bracket words whose values at p span the chart.
AdaptedFrame adapted_frame(const Structure& S, const Vec& p, double tol = 1e-9);

struct SteerOptions {
  double tol = 1e-7;
  int max_iter = 60;
  double fd_step = 1e-5;
  double leg_step = 2e-3;  // integrator step inside commutator legs
};

struct SteerResult {
  bool converged = false;
  int iterations = 0;
  double endpoint_gap = 0.0;
  Vec params;  // bracket-word parameters t_j
  AdaptedFrame frame;
  BrokenGeodesic plan;
  Vec endpoint;
};

// Endpoint of the composition of the adapted-frame commutator flows with
// the given word parameters, applied to base in frame order.
Vec f_map(const Structure& S, const AdaptedFrame& frame, const Vec& base, const Vec& params,
          double leg_step = 2e-3, bool* left_domain = nullptr);

// The flat leg list behind f_map, one commutator word after another.
std::vector<Leg> f_map_legs(const AdaptedFrame& frame, const Vec& params);

// Damped Newton on the displacement-scaled word parameters driving
// f_map(base, .) to the target.
SteerResult steer(const Structure& S, const Vec& from, const Vec& to,
                  const SteerOptions& opts = {});

struct DhOptions {
  int budget = 16;
  int restarts = 1;           // simplex chains per ladder stage
  double reach_tol = 1e-6;    // a certificate must land this close to q
  double polish_tol = 1e-9;   // Gauss-Newton arrival target
  bool use_steer = true;      // bracket-word certificate stage
  bool refine = true;         // simplex refinement stage
  int nm_iterations = 400;    // per penalty weight
  double fine_step = 1e-3;    // final endpoint verification step
  int coarse_steps_per_segment = 50;
  std::uint64_t seed = 0;     // restart jitter
  std::vector<BrokenGeodesic> seeds;  // extra candidate plans (kept even when
                                      // they exceed the segment budget)
};

struct DhResult {
  double value = 0.0;  // length of the best certificate that reaches q
  bool reached = false;
  bool within_budget = false;
  double endpoint_gap = 0.0;
  int segments = 0;
  BrokenGeodesic plan;
};

// Upper distance estimate by broken horizontal paths: steering certificate,
// caller seeds, and penalty-continued Nelder-Mead refinement over a budget
// ladder, all polished to land on q before their lengths are compared.
DhResult dh_upper(const Structure& S, const Vec& p, const Vec& q, const DhOptions& opts = {});

struct DcLowerResult {
  double value = 0.0;
  double sigma_max = 0.0;  // largest frame singular value over the scan box
};

// Chart-norm lower bound |p-q| / sigma_max, with sigma_max scanned over the
// bounding box of p, q inflated by a quarter of their chart distance.
DcLowerResult dc_lower(const Structure& S, const Vec& p, const Vec& q);

struct BallBoxSample {
  Vec params;          // word parameters drawn from the cube
  Vec endpoint;
  double plan_length;  // length of the realized leg concatenation
  double dhat;         // certified upper distance estimate
  bool ok;             // in-domain and dhat <= eps
};

struct BallBoxReport {
  double eps = 0.0;
  int box_n = 0;              // parameter cube half-width is eps / box_n
  int samples = 0;
  int violations = 0;         // samples with ok == false
  double max_ratio = 0.0;     // max dhat / eps
  int probes = 0, hits = 0;   // steering back onto in-ball targets
  double chat = 0.0;          // largest verified d(y,.)/eps among hit targets
  double Chat = 0.0;          // max |params|_inf / (eps / box_n) over hits
  std::vector<BallBoxSample> rows;

  std::string to_csv() const;
};

// Pushes the word-parameter cube of half-width eps/N through f_map and
// checks every image lands within upper distance eps of y; a smaller probe
// set steers back onto sampled targets to gauge surjectivity.
BallBoxReport ballbox_probe(const Structure& S, const Vec& y, double eps, int samples,
                            double step, std::uint64_t seed, int probes = 12);

struct SegmentCount {
  int bound = 0;  // sum over layers of (n_r - n_{r-1}) (3 * 2^(r-1) - 1)
  int used = 0;   // legs the recursive construction spends: 3 * 2^(r-1) - 2
  GrowthVector growth;
};

SegmentCount segment_count(const GrowthVector& gv);
SegmentCount segment_count(const Structure& S, const Vec& p);

}  // namespace srgeo
