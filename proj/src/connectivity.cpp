#include "srgeo/connectivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "srgeo/rng.hpp"

namespace srgeo {

using json = nlohmann::ordered_json;

std::string multi_index_str(const MultiIndex& I) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < I.size(); ++i) {
    if (i) os << ",";
    os << I[i] + 1;
  }
  os << ")";
  return os.str();
}

namespace {

std::vector<Leg> inverted(const std::vector<Leg>& legs) {
  std::vector<Leg> out(legs.rbegin(), legs.rend());
  for (auto& l : out) l.time = -l.time;
  return out;
}

void append_legs(std::vector<Leg>& acc, const std::vector<Leg>& more) {
  acc.insert(acc.end(), more.begin(), more.end());
}

// Raw commutator recursion; composition approximates exp(tau^w E_I).
std::vector<Leg> plan_analytic(const MultiIndex& I, double tau) {
  if (I.size() == 1) return {{I[0], tau}};
  std::vector<Leg> p1 = {{I[0], tau}};
  std::vector<Leg> pj = plan_analytic(MultiIndex(I.begin() + 1, I.end()), tau);
  std::vector<Leg> out = p1;
  append_legs(out, pj);
  append_legs(out, inverted(p1));
  append_legs(out, inverted(pj));
  return out;
}

}  // namespace

std::vector<Leg> commutator_legs(const MultiIndex& I, double tau) {
  if (I.empty()) throw std::invalid_argument("empty bracket word");
  for (int i : I)
    if (i < 0) throw std::invalid_argument("bracket word indices must be non-negative");
  if (I.size() == 1) return {{I[0], tau}};
  if (tau >= 0.0) return plan_analytic(I, tau);
  if (I.size() % 2 == 1) return plan_analytic(I, tau);  // odd parity flips the sign itself
  if (I[0] != I[1]) {
    MultiIndex J = I;
    std::swap(J[0], J[1]);
    return plan_analytic(J, -tau);
  }
  // Even weight with a repeated leading pair: negate the inner factor.
  MultiIndex J(I.begin() + 1, I.end());
  std::vector<Leg> p1 = {{I[0], -tau}};
  std::vector<Leg> pj = commutator_legs(J, tau);
  std::vector<Leg> out = p1;
  append_legs(out, pj);
  append_legs(out, inverted(p1));
  append_legs(out, inverted(pj));
  return out;
}

double BrokenGeodesic::total_length() const {
  double acc = 0.0;
  for (const auto& s : segments) acc += s.len * s.dir.norm();
  return acc;
}

std::string plan_to_json(const BrokenGeodesic& plan) {
  json doc;
  doc["start"] = std::vector<double>(plan.start.data(), plan.start.data() + plan.start.size());
  json segs = json::array();
  for (const auto& s : plan.segments) {
    json seg;
    seg["dir"] = std::vector<double>(s.dir.data(), s.dir.data() + s.dir.size());
    seg["len"] = s.len;
    segs.push_back(seg);
  }
  doc["segments"] = segs;
  return doc.dump(2);
}

BrokenGeodesic plan_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SpecError(std::string("plan is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("start") || !doc.contains("segments"))
    throw SpecError("plan needs 'start' and 'segments'");
  if (!doc["start"].is_array() || doc["start"].empty())
    throw SpecError("plan 'start' must be a point");
  BrokenGeodesic plan;
  plan.start.resize(static_cast<Eigen::Index>(doc["start"].size()));
  for (std::size_t i = 0; i < doc["start"].size(); ++i) {
    if (!doc["start"][i].is_number()) throw SpecError("plan 'start' must be numeric");
    plan.start[static_cast<Eigen::Index>(i)] = doc["start"][i].get<double>();
  }
  if (!doc["segments"].is_array()) throw SpecError("plan 'segments' must be an array");
  for (const auto& seg : doc["segments"]) {
    if (!seg.is_object() || !seg.contains("dir") || !seg.contains("len") ||
        !seg["dir"].is_array() || seg["dir"].empty() || !seg["len"].is_number())
      throw SpecError("each plan segment needs 'dir' and 'len'");
    PlanSegment s;
    s.dir.resize(static_cast<Eigen::Index>(seg["dir"].size()));
    for (std::size_t i = 0; i < seg["dir"].size(); ++i) {
      if (!seg["dir"][i].is_number()) throw SpecError("segment 'dir' must be numeric");
      s.dir[static_cast<Eigen::Index>(i)] = seg["dir"][i].get<double>();
    }
    s.len = seg["len"].get<double>();
    if (!(s.len >= 0.0) || !std::isfinite(s.len))
      throw SpecError("segment 'len' must be a finite non-negative number");
    plan.segments.push_back(std::move(s));
  }
  return plan;
}

BrokenGeodesic plan_from_legs(int rank, const Vec& start, std::span<const Leg> legs) {
  BrokenGeodesic plan;
  plan.start = start;
  for (const auto& l : legs) {
    if (l.time == 0.0) continue;
    PlanSegment s;
    s.dir = Vec::Zero(rank);
    s.dir[l.dir] = (l.time < 0.0) ? -1.0 : 1.0;
    s.len = std::abs(l.time);
    plan.segments.push_back(std::move(s));
  }
  return plan;
}

namespace {

void append_curve(HorizontalCurve& acc, const HorizontalCurve& c) {
  double t0 = acc.t.empty() ? 0.0 : acc.t.back();
  std::size_t from = acc.t.empty() ? 0 : 1;
  for (std::size_t i = from; i < c.t.size(); ++i) {
    acc.t.push_back(t0 + c.t[i]);
    acc.x.push_back(c.x[i]);
    acc.u.push_back(c.u[i]);
  }
  acc.truncated = acc.truncated || c.truncated;
  acc.left_domain = acc.left_domain || c.left_domain;
}

}  // namespace

HorizontalCurve integrate_plan(const Structure& S, const BrokenGeodesic& plan,
                               const IntegrateOptions& opts, int steps_per_segment) {
  if (plan.start.size() != S.dim())
    throw std::invalid_argument("plan start point has wrong dimension");
  HorizontalCurve out;
  Vec x = plan.start;
  if (plan.segments.empty()) {
    out.t = {0.0, 0.0};
    out.x = {x, x};
    out.u = {Vec::Zero(S.rank()), Vec::Zero(S.rank())};
    return out;
  }
  for (const auto& seg : plan.segments) {
    if (static_cast<int>(seg.dir.size()) != S.rank())
      throw std::invalid_argument("plan segment direction has wrong dimension");
    if (seg.len == 0.0) continue;
    IntegrateOptions local = opts;
    if (steps_per_segment > 0)
      local.step = std::max(opts.step, seg.len / steps_per_segment);
    HorizontalCurve piece = S.horizontal_flat()
                                ? horizontal_flow(S, x, seg.dir, seg.len, local)
                                : nonholonomic_geodesic(S, x, seg.dir, seg.len, local);
    append_curve(out, piece);
    x = piece.end();
    if (piece.truncated) break;
  }
  if (out.t.size() < 2) {  // every segment had zero length
    out.t = {0.0, 0.0};
    out.x = {x, x};
    out.u = {Vec::Zero(S.rank()), Vec::Zero(S.rank())};
  }
  return out;
}

Vec plan_endpoint(const Structure& S, const BrokenGeodesic& plan, double step,
                  int steps_per_segment, bool* left_domain) {
  IntegrateOptions opts;
  opts.step = step;
  opts.domain = DomainPolicy::Ignore;
  opts.record = false;
  HorizontalCurve c = integrate_plan(S, plan, opts, steps_per_segment);
  if (left_domain) *left_domain = c.left_domain;
  return c.end();
}

HorizontalCurve commutator_flow(const Structure& S, const Vec& p, const MultiIndex& I,
                                double tau, const IntegrateOptions& opts) {
  for (int i : I)
    if (i < 0 || i >= S.rank())
      throw std::invalid_argument("bracket word index out of range");
  std::vector<Leg> legs = commutator_legs(I, tau);
  HorizontalCurve out;
  Vec x = p;
  for (const auto& leg : legs) {
    if (leg.time == 0.0) continue;
    Vec u = Vec::Zero(S.rank());
    u[leg.dir] = (leg.time < 0.0) ? -1.0 : 1.0;
    HorizontalCurve piece = horizontal_flow(S, x, u, std::abs(leg.time), opts);
    append_curve(out, piece);
    x = piece.end();
    if (piece.truncated) break;
  }
  if (out.t.empty()) {
    out.t = {0.0, 0.0};
    out.x = {p, p};
    out.u = {Vec::Zero(S.rank()), Vec::Zero(S.rank())};
  }
  return out;
}

std::vector<int> AdaptedFrame::weights() const {
  std::vector<int> w;
  w.reserve(indices.size());
  for (const auto& I : indices) w.push_back(static_cast<int>(I.size()));
  return w;
}

AdaptedFrame adapted_frame(const Structure& S, const Vec& p, double tol) {
  const int m = S.dim(), k = S.rank();
  std::span<const std::string> coords(S.coords());
  AdaptedFrame out;

  std::vector<Vec> selected;
  auto accepts = [&](const Vec& v) {
    Mat M(m, static_cast<Eigen::Index>(selected.size()) + 1);
    for (std::size_t j = 0; j < selected.size(); ++j) M.col(static_cast<Eigen::Index>(j)) = selected[j];
    M.col(static_cast<Eigen::Index>(selected.size())) = v;
    Eigen::JacobiSVD<Mat> svd(M);
    const auto& sv = svd.singularValues();
    if (sv(0) <= 0.0) return false;
    return sv(sv.size() - 1) > tol * sv(0);
  };

  // All words of the previous weight, in lex order, with their fields.
  std::vector<MultiIndex> prev_words;
  std::vector<FrameField> prev_fields;
  const int weight_cap = std::min(m, 6);

  for (int w = 1; w <= weight_cap && static_cast<int>(selected.size()) < m; ++w) {
    std::vector<MultiIndex> words;
    std::vector<FrameField> fields;
    if (w == 1) {
      for (int i = 0; i < k; ++i) {
        words.push_back({i});
        fields.push_back(S.field(i));
      }
    } else {
      for (int i = 0; i < k; ++i)
        for (std::size_t j = 0; j < prev_words.size(); ++j) {
          MultiIndex I;
          I.push_back(i);
          I.insert(I.end(), prev_words[j].begin(), prev_words[j].end());
          words.push_back(std::move(I));
          fields.push_back(lie_bracket(S.field(i), prev_fields[j], coords));
        }
    }
    for (std::size_t c = 0; c < words.size() && static_cast<int>(selected.size()) < m; ++c) {
      if (fields[c].is_zero()) continue;
      Vec v = fields[c].evaluate(coords, p);
      if (!accepts(v)) continue;
      selected.push_back(v);
      out.indices.push_back(words[c]);
      out.fields.push_back(fields[c]);
    }
    prev_words = std::move(words);
    prev_fields = std::move(fields);
  }
  out.complete = static_cast<int>(selected.size()) == m;
  return out;
}

std::vector<Leg> f_map_legs(const AdaptedFrame& frame, const Vec& params) {
  if (params.size() != static_cast<Eigen::Index>(frame.indices.size()))
    throw std::invalid_argument("one parameter per bracket word expected");
  std::vector<Leg> all;
  for (std::size_t j = 0; j < frame.indices.size(); ++j) {
    double tau = params[static_cast<Eigen::Index>(j)];
    if (tau == 0.0) continue;
    append_legs(all, commutator_legs(frame.indices[j], tau));
  }
  return all;
}

Vec f_map(const Structure& S, const AdaptedFrame& frame, const Vec& base, const Vec& params,
          double leg_step, bool* left_domain) {
  IntegrateOptions opts;
  opts.step = leg_step;
  opts.domain = DomainPolicy::Ignore;
  opts.record = false;
  bool left = false;
  Vec x = base;
  for (const auto& leg : f_map_legs(frame, params)) {
    if (leg.time == 0.0) continue;
    Vec u = Vec::Zero(S.rank());
    u[leg.dir] = (leg.time < 0.0) ? -1.0 : 1.0;
    HorizontalCurve piece = S.horizontal_flat()
                                ? horizontal_flow(S, x, u, std::abs(leg.time), opts)
                                : nonholonomic_geodesic(S, x, u, std::abs(leg.time), opts);
    left = left || piece.left_domain;
    x = piece.end();
  }
  if (left_domain) *left_domain = left;
  return x;
}

namespace {

double signed_root(double s, int w) {
  if (w == 1) return s;
  double mag = std::pow(std::abs(s), 1.0 / static_cast<double>(w));
  return (s < 0.0) ? -mag : mag;
}

}  // namespace

SteerResult steer(const Structure& S, const Vec& from, const Vec& to,
                  const SteerOptions& opts) {
  const int m = S.dim();
  if (from.size() != m || to.size() != m)
    throw std::invalid_argument("steer needs chart points of the right dimension");

  SteerResult res;
  res.frame = adapted_frame(S, from);
  if (!res.frame.complete)
    throw std::runtime_error("bracket words do not span the chart at the start point");
  std::vector<int> weights = res.frame.weights();

  auto to_params = [&](const Vec& s) {
    Vec t(m);
    for (int j = 0; j < m; ++j) t[j] = signed_root(s[j], weights[static_cast<std::size_t>(j)]);
    return t;
  };
  auto endpoint = [&](const Vec& s) {
    return f_map(S, res.frame, from, to_params(s), opts.leg_step, nullptr);
  };

  Vec s = Vec::Zero(m);
  Vec r = endpoint(s) - to;
  Vec s_best = s;
  double best = r.norm();

  int it = 0;
  for (; it < opts.max_iter && best > opts.tol; ++it) {
    Mat J(m, m);
    for (int j = 0; j < m; ++j) {
      double h = opts.fd_step * std::max(1.0, std::abs(s[j]));
      Vec sp = s, sm = s;
      sp[j] += h;
      sm[j] -= h;
      J.col(j) = (endpoint(sp) - endpoint(sm)) / (2.0 * h);
    }
    Vec delta = J.partialPivLu().solve(-r);
    if (!delta.allFinite()) break;

    double cur = r.norm();
    bool improved = false;
    double alpha = 1.0;
    for (int half = 0; half <= 8; ++half, alpha *= 0.5) {
      Vec cand = s + alpha * delta;
      Vec rc = endpoint(cand) - to;
      double nc = rc.norm();
      if (nc < cur) {
        s = cand;
        r = rc;
        improved = true;
        if (nc < best) {
          best = nc;
          s_best = cand;
        }
        break;
      }
    }
    if (!improved) break;
  }

  res.iterations = it;
  res.params = to_params(s_best);
  res.endpoint = endpoint(s_best);
  res.endpoint_gap = (res.endpoint - to).norm();
  res.converged = res.endpoint_gap <= opts.tol;

  res.plan = plan_from_legs(S.rank(), from, f_map_legs(res.frame, res.params));
  return res;
}

namespace {

// ---- direction parametrization on the unit sphere -------------------------

Vec dir_from_angles(const double* th, int k) {
  Vec d(k);
  if (k == 1) {
    d[0] = 1.0;
    return d;
  }
  double s = 1.0;
  for (int i = 0; i < k - 1; ++i) {
    d[i] = s * std::cos(th[i]);
    s *= std::sin(th[i]);
  }
  d[k - 1] = s;
  return d;
}

void angles_from_dir(const Vec& d, double* th) {
  const int k = static_cast<int>(d.size());
  for (int i = 0; i < k - 1; ++i) {
    double tail = d.segment(i + 1, k - i - 1).norm();
    th[i] = std::atan2(tail, d[i]);
  }
  // keep the last slot's sign: atan2 above loses it for the final pair
  if (k >= 2) th[k - 2] = std::atan2(d[k - 1], d[k - 2]);
}

// params per segment: k-1 angles then a signed length
Vec encode_plan(const BrokenGeodesic& plan, int k) {
  const int per = k;  // (k-1) + 1
  Vec x(static_cast<Eigen::Index>(plan.segments.size()) * per);
  for (std::size_t s = 0; s < plan.segments.size(); ++s) {
    Vec d = plan.segments[s].dir;
    double n = d.norm();
    if (n < 1e-12) {
      d = Vec::Unit(k, 0);
    } else {
      d /= n;
    }
    std::vector<double> th(static_cast<std::size_t>(std::max(0, k - 1)), 0.0);
    if (k >= 2) angles_from_dir(d, th.data());
    for (int i = 0; i < k - 1; ++i) x[static_cast<Eigen::Index>(s) * per + i] = th[static_cast<std::size_t>(i)];
    x[static_cast<Eigen::Index>(s) * per + k - 1] = plan.segments[s].len * n;
  }
  return x;
}

BrokenGeodesic decode_plan(const Vec& x, const Vec& start, int k) {
  const int per = k;
  BrokenGeodesic plan;
  plan.start = start;
  const int nseg = static_cast<int>(x.size()) / per;
  for (int s = 0; s < nseg; ++s) {
    PlanSegment seg;
    const double* th = x.data() + static_cast<std::ptrdiff_t>(s) * per;
    seg.dir = dir_from_angles(th, k);
    double l = x[static_cast<Eigen::Index>(s) * per + k - 1];
    if (l < 0.0) {
      seg.dir = -seg.dir;
      l = -l;
    }
    seg.len = l;
    plan.segments.push_back(std::move(seg));
  }
  return plan;
}

// ---- deterministic Nelder-Mead -------------------------------------------

double nelder_mead(const std::function<double(const Vec&)>& fn, Vec& x, int iters,
                   const Vec& init_step) {
  const int n = static_cast<int>(x.size());
  std::vector<Vec> pts(static_cast<std::size_t>(n) + 1, x);
  std::vector<double> val(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i < n; ++i) pts[static_cast<std::size_t>(i) + 1][i] += init_step[i];
  for (std::size_t i = 0; i < pts.size(); ++i) val[i] = fn(pts[i]);

  std::vector<int> order(pts.size());
  for (int it = 0; it < iters; ++it) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return val[static_cast<std::size_t>(a)] < val[static_cast<std::size_t>(b)];
    });
    int best = order[0], worst = order.back(), second = order[order.size() - 2];
    if (val[static_cast<std::size_t>(worst)] - val[static_cast<std::size_t>(best)] < 1e-14)
      break;

    Vec centroid = Vec::Zero(n);
    for (std::size_t i = 0; i + 1 < order.size(); ++i)
      centroid += pts[static_cast<std::size_t>(order[i])];
    centroid /= static_cast<double>(n);

    Vec xr = centroid + (centroid - pts[static_cast<std::size_t>(worst)]);
    double fr = fn(xr);
    if (fr < val[static_cast<std::size_t>(best)]) {
      Vec xe = centroid + 2.0 * (centroid - pts[static_cast<std::size_t>(worst)]);
      double fe = fn(xe);
      if (fe < fr) {
        pts[static_cast<std::size_t>(worst)] = xe;
        val[static_cast<std::size_t>(worst)] = fe;
      } else {
        pts[static_cast<std::size_t>(worst)] = xr;
        val[static_cast<std::size_t>(worst)] = fr;
      }
    } else if (fr < val[static_cast<std::size_t>(second)]) {
      pts[static_cast<std::size_t>(worst)] = xr;
      val[static_cast<std::size_t>(worst)] = fr;
    } else {
      Vec xc = centroid + 0.5 * (pts[static_cast<std::size_t>(worst)] - centroid);
      double fc = fn(xc);
      if (fc < val[static_cast<std::size_t>(worst)]) {
        pts[static_cast<std::size_t>(worst)] = xc;
        val[static_cast<std::size_t>(worst)] = fc;
      } else {
        for (std::size_t i = 1; i < order.size(); ++i) {
          std::size_t idx = static_cast<std::size_t>(order[i]);
          pts[idx] = pts[static_cast<std::size_t>(best)] + 0.5 * (pts[idx] - pts[static_cast<std::size_t>(best)]);
          val[idx] = fn(pts[idx]);
        }
      }
    }
  }
  std::size_t bi = 0;
  for (std::size_t i = 1; i < val.size(); ++i)
    if (val[i] < val[bi]) bi = i;
  x = pts[bi];
  return val[bi];
}

BrokenGeodesic repad(const BrokenGeodesic& plan, int target) {
  BrokenGeodesic out = plan;
  while (out.segment_count() < target) {
    std::size_t longest = 0;
    for (std::size_t i = 1; i < out.segments.size(); ++i)
      if (out.segments[i].len > out.segments[longest].len) longest = i;
    PlanSegment half = out.segments[longest];
    half.len *= 0.5;
    out.segments[longest].len *= 0.5;
    out.segments.insert(out.segments.begin() + static_cast<std::ptrdiff_t>(longest) + 1, half);
  }
  return out;
}

BrokenGeodesic straight_guess(const Structure& S, const Vec& p, const Vec& q, int nseg) {
  Vec coeff = S.frame_coefficients(p, q - p).head(S.rank());
  double n = coeff.norm();
  Vec dir = (n > 1e-12) ? Vec(coeff / n) : Vec(Vec::Unit(S.rank(), 0));
  double scale = std::max((q - p).norm(), 0.1);
  BrokenGeodesic plan;
  plan.start = p;
  for (int s = 0; s < nseg; ++s) {
    PlanSegment seg;
    seg.dir = dir;
    seg.len = scale / nseg;
    plan.segments.push_back(seg);
  }
  return plan;
}

// Gauss-Newton on all plan parameters, driving the endpoint onto q.
bool polish_plan(const Structure& S, BrokenGeodesic& plan, const Vec& q, double tol,
                 int max_iter, double step, int steps_per_segment) {
  const int k = S.rank();
  if (plan.segments.empty()) return (plan.start - q).norm() <= tol;
  Vec x = encode_plan(plan, k);
  const int n = static_cast<int>(x.size());

  auto end_of = [&](const Vec& par) {
    BrokenGeodesic pl = decode_plan(par, plan.start, k);
    return plan_endpoint(S, pl, step, steps_per_segment, nullptr);
  };

  Vec r = end_of(x) - q;
  for (int it = 0; it < max_iter && r.norm() > tol; ++it) {
    Mat J(q.size(), n);
    for (int j = 0; j < n; ++j) {
      double h = 1e-6;
      Vec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      J.col(j) = (end_of(xp) - end_of(xm)) / (2.0 * h);
    }
    Vec delta = J.completeOrthogonalDecomposition().solve(-r);
    if (!delta.allFinite()) break;
    double cur = r.norm();
    bool improved = false;
    double alpha = 1.0;
    for (int half = 0; half <= 8; ++half, alpha *= 0.5) {
      Vec cand = x + alpha * delta;
      Vec rc = end_of(cand) - q;
      if (rc.norm() < cur) {
        x = cand;
        r = rc;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  plan = decode_plan(x, plan.start, k);
  return r.norm() <= tol;
}

BrokenGeodesic nm_stage(const Structure& S, const BrokenGeodesic& init, const Vec& q,
                        double weight, const DhOptions& opts) {
  const int k = S.rank();
  Vec x = encode_plan(init, k);
  auto obj = [&](const Vec& par) {
    BrokenGeodesic pl = decode_plan(par, init.start, k);
    Vec e = plan_endpoint(S, pl, opts.fine_step, opts.coarse_steps_per_segment, nullptr);
    return pl.total_length() + weight * (e - q).squaredNorm();
  };
  double mean_len = 0.0;
  for (const auto& s : init.segments) mean_len += s.len;
  mean_len /= std::max<std::size_t>(1, init.segments.size());
  Vec steps(x.size());
  for (std::size_t s = 0; s < init.segments.size(); ++s) {
    for (int i = 0; i < k - 1; ++i) steps[static_cast<Eigen::Index>(s) * k + i] = 0.3;
    steps[static_cast<Eigen::Index>(s) * k + k - 1] = std::max(0.05, 0.25 * mean_len);
  }
  nelder_mead(obj, x, opts.nm_iterations, steps);
  return decode_plan(x, init.start, k);
}

}  // namespace

DhResult dh_upper(const Structure& S, const Vec& p, const Vec& q, const DhOptions& opts) {
  std::vector<BrokenGeodesic> cands;

  if (opts.use_steer) {
    SteerOptions so;
    so.tol = std::min(1e-7, opts.reach_tol);
    try {
      SteerResult sr = steer(S, p, q, so);
      if (sr.endpoint_gap < 0.5) cands.push_back(sr.plan);
    } catch (const std::exception&) {
      // no bracket certificate; the other stages still run
    }
  }

  for (const auto& seed : opts.seeds)
    if (seed.start.size() == S.dim()) cands.push_back(seed);

  if (opts.refine) {
    std::vector<int> ladder;
    for (int b : {4, 8, 16})
      if (b <= opts.budget) ladder.push_back(b);
    if (ladder.empty()) ladder.push_back(std::max(1, opts.budget));

    const int k = S.rank();
    Rng jitter(opts.seed, 0x7e57a47);
    std::uint64_t ctr = 0;
    BrokenGeodesic cur = straight_guess(S, p, q, ladder.front());
    for (std::size_t li = 0; li < ladder.size(); ++li) {
      if (li) cur = repad(cur, ladder[li]);
      BrokenGeodesic stage_best;
      double stage_score = std::numeric_limits<double>::infinity();
      for (int r = 0; r < std::max(1, opts.restarts); ++r) {
        BrokenGeodesic init = cur;
        if (r > 0) {
          for (auto& seg : init.segments) {
            Vec d = seg.dir;
            for (int i = 0; i < k; ++i) d[i] += 0.3 * jitter.normal(ctr++);
            double n = d.norm();
            if (n > 1e-12) seg.dir = d / n;
            seg.len = std::max(0.0, seg.len * (1.0 + 0.2 * jitter.normal(ctr++)));
          }
        }
        BrokenGeodesic refined = init;
        for (double w : {1e2, 1e4, 1e6}) refined = nm_stage(S, refined, q, w, opts);
        Vec e = plan_endpoint(S, refined, opts.fine_step, opts.coarse_steps_per_segment,
                              nullptr);
        double score = refined.total_length() + 1e6 * (e - q).squaredNorm();
        if (score < stage_score) {
          stage_score = score;
          stage_best = refined;
        }
      }
      cur = stage_best;
      cands.push_back(cur);
    }
  }

  DhResult best;
  best.value = std::numeric_limits<double>::infinity();
  double best_gap = std::numeric_limits<double>::infinity();
  bool have = false;

  for (auto plan : cands) {
    Vec e = plan_endpoint(S, plan, opts.fine_step, 0, nullptr);
    double gap = (e - q).norm();
    if (gap > opts.polish_tol && gap <= 0.5) {
      polish_plan(S, plan, q, opts.polish_tol, 40, opts.fine_step, 200);
      e = plan_endpoint(S, plan, opts.fine_step, 0, nullptr);
      gap = (e - q).norm();
    }
    double len = plan.total_length();
    bool reached = gap <= opts.reach_tol;
    bool take = false;
    if (!have) {
      take = true;
    } else if (reached && !best.reached) {
      take = true;
    } else if (reached == best.reached) {
      take = reached ? (len < best.value) : (gap < best_gap);
    }
    if (take) {
      have = true;
      best.value = len;
      best.reached = reached;
      best.endpoint_gap = gap;
      best.segments = plan.segment_count();
      best.plan = std::move(plan);
      best_gap = gap;
    }
  }
  if (!have) {
    best.value = std::numeric_limits<double>::infinity();
    best.reached = false;
    best.endpoint_gap = (p - q).norm();
    best.plan.start = p;
  }
  best.within_budget = best.segments <= opts.budget;
  return best;
}

DcLowerResult dc_lower(const Structure& S, const Vec& p, const Vec& q) {
  const int m = S.dim();
  if (p.size() != m || q.size() != m)
    throw std::invalid_argument("dc_lower needs chart points of the right dimension");
  DcLowerResult out;
  double chart = (p - q).norm();
  double R = chart / 4.0;

  Eigen::MatrixX2d box(m, 2);
  for (int i = 0; i < m; ++i) {
    box(i, 0) = std::min(p[i], q[i]) - R;
    box(i, 1) = std::max(p[i], q[i]) + R;
  }

  double smax = 0.0;
  Mat A(m, m);
  auto visit = [&](const Vec& pt) {
    S.frame_matrix_into(pt.data(), A);
    Eigen::JacobiSVD<Mat> svd(A);
    smax = std::max(smax, svd.singularValues()(0));
  };

  if (m <= 4) {
    const int g = 9;
    long total = 1;
    for (int i = 0; i < m; ++i) total *= g;
    Vec pt(m);
    for (long idx = 0; idx < total; ++idx) {
      long rem = idx;
      for (int i = 0; i < m; ++i) {
        int cell = static_cast<int>(rem % g);
        rem /= g;
        pt[i] = box(i, 0) + (box(i, 1) - box(i, 0)) * cell / (g - 1);
      }
      visit(pt);
    }
  } else {
    Rng rng(0xd15c0ull);
    const int samples = 6561;
    for (int s = 0; s < samples; ++s) visit(rng.in_box(static_cast<std::uint64_t>(s), box));
    visit(p);
    visit(q);
  }

  out.sigma_max = smax;
  out.value = (smax > 0.0) ? chart / smax : 0.0;
  return out;
}

std::string BallBoxReport::to_csv() const {
  std::ostringstream os;
  os << "sample,plan_length,dhat,ratio,ok\n";
  char buf[64];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    os << i;
    std::snprintf(buf, sizeof buf, ",%.17g", r.plan_length);
    os << buf;
    std::snprintf(buf, sizeof buf, ",%.17g", r.dhat);
    os << buf;
    std::snprintf(buf, sizeof buf, ",%.17g", eps > 0.0 ? r.dhat / eps : 0.0);
    os << buf << ',' << (r.ok ? 1 : 0) << '\n';
  }
  return os.str();
}

BallBoxReport ballbox_probe(const Structure& S, const Vec& y, double eps, int samples,
                            double step, std::uint64_t seed, int probes) {
  const int m = S.dim();
  if (y.size() != m) throw std::invalid_argument("probe point has wrong dimension");
  BallBoxReport rep;
  rep.eps = eps;
  if (!(eps > 0.0)) return rep;

  AdaptedFrame frame = adapted_frame(S, y);
  if (!frame.complete)
    throw std::runtime_error("bracket words do not span the chart at the probe point");
  SegmentCount sc = segment_count(S, y);
  rep.box_n = sc.bound;
  const double half = eps / sc.bound;

  Rng rng(seed, 0xba11b0c5);
  for (int s = 0; s < samples; ++s) {
    Vec params(m);
    for (int j = 0; j < m; ++j)
      params[j] = rng.uniform(static_cast<std::uint64_t>(s) * 64 + j, -half, half);

    BallBoxSample row;
    row.params = params;
    bool left = false;
    row.endpoint = f_map(S, frame, y, params, step, &left);
    BrokenGeodesic plan = plan_from_legs(S.rank(), y, f_map_legs(frame, params));
    row.plan_length = plan.total_length();

    DhOptions dopt;
    dopt.budget = std::max(1, plan.segment_count());
    dopt.use_steer = false;
    dopt.refine = false;
    dopt.fine_step = step;
    dopt.seeds = {plan};
    DhResult up = dh_upper(S, y, row.endpoint, dopt);
    row.dhat = up.value;
    row.ok = !left && up.reached && up.value <= eps * (1.0 + 1e-9);
    if (!row.ok) ++rep.violations;
    if (up.reached) rep.max_ratio = std::max(rep.max_ratio, up.value / eps);
    rep.rows.push_back(std::move(row));
  }
  rep.samples = samples;

  // surjectivity probe: steer back onto images of the half-size cube
  Rng prng(seed, 0xba11b0c6);
  SteerOptions sopt;
  sopt.leg_step = step;
  for (int s = 0; s < probes; ++s) {
    Vec params(m);
    for (int j = 0; j < m; ++j)
      params[j] = prng.uniform(static_cast<std::uint64_t>(s) * 64 + j, -0.5 * half, 0.5 * half);
    Vec target = f_map(S, frame, y, params, step, nullptr);
    BrokenGeodesic plan = plan_from_legs(S.rank(), y, f_map_legs(frame, params));
    ++rep.probes;
    try {
      SteerResult sr = steer(S, y, target, sopt);
      if (sr.converged) {
        ++rep.hits;
        rep.chat = std::max(rep.chat, plan.total_length() / eps);
        double pinf = sr.params.cwiseAbs().maxCoeff();
        rep.Chat = std::max(rep.Chat, pinf / half);
      }
    } catch (const std::exception&) {
      // counted as a miss
    }
  }
  return rep;
}

SegmentCount segment_count(const GrowthVector& gv) {
  SegmentCount out;
  out.growth = gv;
  int prev = 0;
  for (std::size_t r = 0; r < gv.layers.size(); ++r) {
    int n = gv.layers[r];
    int add = n - prev;
    prev = n;
    if (add <= 0) continue;
    out.bound += add * (3 * (1 << r) - 1);
    out.used += add * (3 * (1 << r) - 2);
  }
  return out;
}

SegmentCount segment_count(const Structure& S, const Vec& p) {
  return segment_count(S.growth_vector(p));
}

}  // namespace srgeo
