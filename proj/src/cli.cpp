#include "srgeo/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <json.hpp>

#include "srgeo/connection.hpp"
#include "srgeo/connectivity.hpp"
#include "srgeo/convexity.hpp"
#include "srgeo/geodesics.hpp"
#include "srgeo/models.hpp"
#include "srgeo/structure.hpp"
#include "srgeo/verify.hpp"

namespace srgeo::cli {
namespace {

using ojson = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string model;
  std::string model_file;
  std::uint64_t seed = 0;
  double step = 1e-3;
  std::string format = "json";
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--model", c.model, "builtin model name");
  cmd->add_option("--model-file", c.model_file, "path to a model description (JSON)");
  cmd->add_option("--seed", c.seed, "sampling seed");
  cmd->add_option("--step", c.step, "integrator step");
  cmd->add_option("--format", c.format, "output format")
      ->check(CLI::IsMember({"json", "csv"}));
  cmd->add_flag("--quiet-timestamps", c.quiet, "omit the timestamp line");
}

Structure make_structure(const Common& c, const char* fallback = nullptr) {
  if (!c.model.empty() && !c.model_file.empty())
    throw UsageError("give either --model or --model-file, not both");
  if (!c.model.empty()) {
    if (!is_builtin_model(c.model)) throw UsageError("unknown builtin model '" + c.model + "'");
    return Structure(builtin_model(c.model));
  }
  if (!c.model_file.empty()) return Structure(load_model_file(c.model_file));
  if (fallback) return Structure(builtin_model(fallback));
  throw UsageError("a model is required: --model <name> or --model-file <path>");
}

Vec parse_vec(const std::string& text, int expect, const std::string& what) {
  std::vector<double> vals;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    std::string tok = text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    try {
      std::size_t used = 0;
      vals.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError(what + ": cannot parse '" + tok + "' as a real number");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (expect >= 0 && static_cast<int>(vals.size()) != expect)
    throw UsageError(what + ": expected " + std::to_string(expect) + " components, got " +
                     std::to_string(vals.size()));
  return Eigen::Map<Vec>(vals.data(), static_cast<int>(vals.size()));
}

std::vector<int> parse_word(const std::string& text, int rank) {
  std::vector<int> word;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    std::string tok = text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    try {
      std::size_t used = 0;
      int v = std::stoi(tok, &used);
      if (used != tok.size() || v < 1 || v > rank) throw std::invalid_argument(tok);
      word.push_back(v - 1);
    } catch (const std::exception&) {
      throw UsageError("--word: indices must be integers in 1.." + std::to_string(rank));
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (word.empty()) throw UsageError("--word: at least one index required");
  return word;
}

ScalarField parse_field(const std::string& text, const Structure& S) {
  try {
    return ScalarField::parse(text, S.coords());
  } catch (const std::exception& e) {
    throw UsageError("--f: " + std::string(e.what()));
  }
}

std::string timestamp_utc() {
  std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

ojson vec_json(const Vec& v) {
  ojson a = ojson::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

struct Doc {
  std::string command;
  ojson config = ojson::object();
  ojson result = ojson::object();
  ojson semantics = ojson::object();
  std::string csv_body;  // preferred csv payload; key,value fallback otherwise
};

void emit(const Doc& d, const Common& c, std::ostream& out) {
  if (c.format == "json") {
    ojson j;
    j["command"] = d.command;
    j["config"] = d.config;
    if (!c.quiet) j["timestamp"] = timestamp_utc();
    j["result"] = d.result;
    if (!d.semantics.empty()) j["semantics"] = d.semantics;
    out << j.dump(2) << "\n";
    return;
  }
  out << "# command=" << d.command << "\n";
  for (const auto& [k, v] : d.config.items())
    out << "# " << k << "=" << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
  if (!c.quiet) out << "# timestamp=" << timestamp_utc() << "\n";
  if (!d.csv_body.empty()) {
    out << d.csv_body;
    if (d.csv_body.back() != '\n') out << "\n";
    return;
  }
  out << "key,value\n";
  for (const auto& [k, v] : d.result.items()) {
    if (v.is_array() && std::all_of(v.begin(), v.end(),
                                    [](const ojson& e) { return e.is_number(); })) {
      for (std::size_t i = 0; i < v.size(); ++i)
        out << k << "[" << i << "]," << v[i].dump() << "\n";
    } else if (v.is_structured()) {
      out << k << "," << csv_escape(v.dump()) << "\n";
    } else if (v.is_string()) {
      out << k << "," << csv_escape(v.get<std::string>()) << "\n";
    } else {
      out << k << "," << v.dump() << "\n";
    }
  }
}

ojson base_config(const Common& c) {
  ojson j;
  if (!c.model.empty()) j["model"] = c.model;
  if (!c.model_file.empty()) j["model_file"] = c.model_file;
  j["seed"] = c.seed;
  j["step"] = c.step;
  j["format"] = c.format;
  return j;
}

ojson curve_json(const HorizontalCurve& c) {
  ojson j;
  j["endpoint"] = vec_json(c.end());
  j["duration"] = c.duration();
  j["length"] = c.length();
  j["samples"] = c.t.size();
  j["truncated"] = c.truncated;
  j["left_domain"] = c.left_domain;
  return j;
}

void curve_semantics(Doc& d) {
  d.semantics["endpoint"] = "chart coordinates of the final sample";
  d.semantics["duration"] = "parameter time integrated";
  d.semantics["length"] = "trapezoid integral of the frame speed |u|";
  d.semantics["truncated"] = "curve stopped at the chart wall";
  d.semantics["left_domain"] = "curve reached the chart wall";
}

bool heisenberg_chart(const Structure& S) {
  return S.spec().name.rfind("heisenberg-", 0) == 0;
}

// ----------------------------------------------------------------- commands

void cmd_bracket(const Common& c, int bi, int bj, const std::string& point_s,
                 std::ostream& out) {
  Structure S = make_structure(c);
  int m = S.dim();
  if (bi < 1 || bi > m || bj < 1 || bj > m || bi == bj)
    throw UsageError("--i/--j must be distinct frame indices in 1.." + std::to_string(m));
  Vec p = parse_vec(point_s, m, "--point");
  const FrameField& f = S.bracket_field(bi - 1, bj - 1);
  Doc d;
  d.command = "bracket";
  d.config = base_config(c);
  d.config["i"] = bi;
  d.config["j"] = bj;
  d.config["point"] = vec_json(p);
  d.result["zero"] = S.bracket_is_zero(bi - 1, bj - 1);
  d.result["components"] = vec_json(f.evaluate(S.coords(), p));
  ojson exprs = ojson::array();
  for (const Expr& e : f.comps) exprs.push_back(e.str());
  d.result["expressions"] = exprs;
  d.semantics["components"] = "chart components of the bracket at the point";
  d.semantics["expressions"] = "symbolic chart components of the bracket";
  emit(d, c, out);
}

void cmd_growth(const Common& c, const std::string& point_s, std::ostream& out) {
  Structure S = make_structure(c);
  Vec p = parse_vec(point_s, S.dim(), "--point");
  GrowthVector gv = S.growth_vector(p);
  Doc d;
  d.command = "growth";
  d.config = base_config(c);
  d.config["point"] = vec_json(p);
  d.result["layers"] = gv.layers;
  d.result["depth"] = gv.depth;
  d.result["complete"] = gv.complete;
  d.semantics["layers"] = "cumulative bracket-layer dimensions at the point";
  d.semantics["complete"] = "layers span the whole chart (bracket-generating here)";
  emit(d, c, out);
}

void cmd_christoffel(const Common& c, const std::string& point_s, bool full,
                     std::ostream& out) {
  Structure S = make_structure(c);
  Vec p = parse_vec(point_s, S.dim(), "--point");
  Christoffels G = full ? full_christoffels(S, p) : horizontal_christoffels(S, p);
  Doc d;
  d.command = "christoffel";
  d.config = base_config(c);
  d.config["point"] = vec_json(p);
  d.config["block"] = full ? "full" : "horizontal";
  ojson rows = ojson::array();
  double maxabs = 0.0;
  std::string body = "i,j,r,value\n";
  for (int i = 0; i < G.n; ++i)
    for (int j = 0; j < G.n; ++j)
      for (int r = 0; r < G.n; ++r) {
        double v = G(i, j, r);
        maxabs = std::max(maxabs, std::abs(v));
        if (std::abs(v) > 1e-14) {
          rows.push_back({{"i", i + 1}, {"j", j + 1}, {"r", r + 1}, {"value", v}});
          body += std::to_string(i + 1) + "," + std::to_string(j + 1) + "," +
                  std::to_string(r + 1) + "," + ojson(v).dump() + "\n";
        }
      }
  d.result["frame_size"] = G.n;
  d.result["nonzero"] = rows;
  d.result["max_abs"] = maxabs;
  d.semantics["nonzero"] = "entries Gamma^r_ij above 1e-14, 1-based indices";
  d.semantics["max_abs"] = "largest |Gamma^r_ij| in the block";
  d.csv_body = body;
  emit(d, c, out);
}

double speed_drift(const HorizontalCurve& curve) {
  if (curve.u.empty()) return 0.0;
  double s0 = curve.u.front().norm(), worst = 0.0;
  for (const Vec& u : curve.u) worst = std::max(worst, std::abs(u.norm() - s0));
  return worst;
}

void cmd_curve(const Common& c, const std::string& name, const HorizontalCurve& curve,
               ojson config, std::ostream& out, const ojson& extra = ojson::object()) {
  Doc d;
  d.command = name;
  d.config = std::move(config);
  d.result = curve_json(curve);
  d.result["speed_drift"] = speed_drift(curve);
  for (const auto& [k, v] : extra.items()) d.result[k] = v;
  curve_semantics(d);
  d.semantics["speed_drift"] = "max | |u(t)| - |u(0)| | along the curve";
  d.csv_body = curve.to_csv();
  emit(d, c, out);
}

void cmd_geodesic(const Common& c, const std::string& x0_s, const std::string& v0_s,
                  double T, std::ostream& out) {
  Structure S = make_structure(c);
  Vec x0 = parse_vec(x0_s, S.dim(), "--x0");
  Vec v0 = parse_vec(v0_s, S.rank(), "--v0");
  IntegrateOptions io;
  io.step = c.step;
  ojson cfg = base_config(c);
  cfg["x0"] = vec_json(x0);
  cfg["v0"] = vec_json(v0);
  cfg["T"] = T;
  cmd_curve(c, "geodesic", nonholonomic_geodesic(S, x0, v0, T, io), cfg, out);
}

void cmd_exp(const Common& c, const std::string& x0_s, const std::string& u0_s,
             std::ostream& out) {
  Structure S = make_structure(c);
  Vec x0 = parse_vec(x0_s, S.dim(), "--x0");
  Vec u0 = parse_vec(u0_s, S.rank(), "--u0");
  IntegrateOptions io;
  io.step = c.step;
  ojson cfg = base_config(c);
  cfg["x0"] = vec_json(x0);
  cfg["u0"] = vec_json(u0);
  cmd_curve(c, "exp", horizontal_exponential(S, x0, u0, io), cfg, out);
}

void cmd_riemannian(const Common& c, const std::string& x0_s, const std::string& U0_s,
                    double T, std::ostream& out) {
  Structure S = make_structure(c);
  Vec x0 = parse_vec(x0_s, S.dim(), "--x0");
  Vec U0 = parse_vec(U0_s, S.dim(), "--U0");
  IntegrateOptions io;
  io.step = c.step;
  ojson cfg = base_config(c);
  cfg["x0"] = vec_json(x0);
  cfg["U0"] = vec_json(U0);
  cfg["T"] = T;
  cmd_curve(c, "riemannian", riemannian_geodesic(S, x0, U0, T, io), cfg, out);
}

void cmd_constraint(const Common& c, const std::string& x0_s, const std::string& v0_s,
                    double T, std::ostream& out) {
  Structure S = make_structure(c);
  Vec x0 = parse_vec(x0_s, S.dim(), "--x0");
  Vec v0 = parse_vec(v0_s, S.rank(), "--v0");
  IntegrateOptions io;
  io.step = c.step;
  ConstraintGeodesic g = geodesic_from_constraints(S, x0, v0, T, io);
  ojson cfg = base_config(c);
  cfg["x0"] = vec_json(x0);
  cfg["v0"] = vec_json(v0);
  cfg["T"] = T;
  ojson extra;
  extra["constraint_defect"] = g.constraint_defect;
  cmd_curve(c, "constraint-geodesic", g.curve, cfg, out, extra);
}

void cmd_flow(const Common& c, const std::string& word_s, double tau,
              const std::string& point_s, std::ostream& out) {
  Structure S = make_structure(c);
  MultiIndex I = parse_word(word_s, S.rank());
  Vec p = parse_vec(point_s, S.dim(), "--point");
  IntegrateOptions io;
  io.step = c.step;
  HorizontalCurve curve = commutator_flow(S, p, I, tau, io);
  int w = static_cast<int>(I.size());
  ojson cfg = base_config(c);
  cfg["word"] = multi_index_str(I);
  cfg["tau"] = tau;
  cfg["point"] = vec_json(p);
  ojson extra;
  extra["displacement"] = vec_json(curve.end() - p);
  extra["bracket_time"] = (tau < 0 ? -1.0 : 1.0) * std::pow(std::abs(tau), w);
  extra["legs"] = commutator_legs(I, tau).size();
  cmd_curve(c, "flow", curve, cfg, out, extra);
}

void cmd_steer(const Common& c, const std::string& from_s, const std::string& to_s,
               double tol, int max_iter, std::ostream& out) {
  Structure S = make_structure(c);
  Vec from = parse_vec(from_s, S.dim(), "--from");
  Vec to = parse_vec(to_s, S.dim(), "--to");
  SteerOptions so;
  so.tol = tol;
  so.max_iter = max_iter;
  SteerResult r = steer(S, from, to, so);
  Doc d;
  d.command = "steer";
  d.config = base_config(c);
  d.config["from"] = vec_json(from);
  d.config["to"] = vec_json(to);
  d.config["tol"] = tol;
  d.config["max_iter"] = max_iter;
  d.result["converged"] = r.converged;
  d.result["iterations"] = r.iterations;
  d.result["residual"] = r.endpoint_gap;
  d.result["endpoint"] = vec_json(r.endpoint);
  d.result["params"] = vec_json(r.params);
  ojson words = ojson::array();
  for (const MultiIndex& I : r.frame.indices) words.push_back(multi_index_str(I));
  d.result["words"] = words;
  d.result["plan_segments"] = r.plan.segment_count();
  d.result["plan_length"] = r.plan.total_length();
  d.result["plan"] = ojson::parse(plan_to_json(r.plan));
  d.semantics["residual"] = "chart distance between the endpoint and the target";
  d.semantics["params"] = "bracket-time parameter per adapted-frame word";
  d.semantics["plan_length"] = "total broken-geodesic length of the realized plan";
  emit(d, c, out);
}

void cmd_dist(const Common& c, const std::string& p_s, const std::string& q_s, int ngon,
              int budget, int restarts, bool no_steer, bool no_refine, std::ostream& out) {
  Structure S = make_structure(c);
  Vec p = parse_vec(p_s, S.dim(), "--p");
  Vec q = parse_vec(q_s, S.dim(), "--q");
  DhOptions opt;
  opt.budget = budget;
  opt.restarts = restarts;
  opt.use_steer = !no_steer;
  opt.refine = !no_refine;
  opt.fine_step = c.step;
  opt.seed = c.seed;
  opt.seeds = model_seed_plans(S.spec(), p, q);
  if (ngon > 0) {
    if (!(heisenberg_chart(S) && S.dim() == 3))
      throw UsageError("--ngon needs the heisenberg-1 chart");
    opt.seeds.push_back(heisenberg_plan(p, q, ngon));
  }
  DhResult dh = dh_upper(S, p, q, opt);
  DcLowerResult lo = dc_lower(S, p, q);
  Doc d;
  d.command = "dist";
  d.config = base_config(c);
  d.config["p"] = vec_json(p);
  d.config["q"] = vec_json(q);
  if (ngon > 0) d.config["ngon"] = ngon;
  d.config["budget"] = budget;
  d.config["restarts"] = restarts;
  d.result["upper"] = dh.value;
  d.result["upper_reached"] = dh.reached;
  d.result["upper_gap"] = dh.endpoint_gap;
  d.result["upper_segments"] = dh.segments;
  d.result["within_budget"] = dh.within_budget;
  d.result["lower"] = lo.value;
  d.result["sigma_max"] = lo.sigma_max;
  if (heisenberg_chart(S)) {
    double oracle = heisenberg_dc(p, q);
    d.result["oracle"] = oracle;
    d.result["upper_over_oracle"] = oracle > 0 ? dh.value / oracle : 0.0;
  } else {
    d.result["oracle"] = nullptr;
  }
  d.semantics["upper"] = "length of the best broken-geodesic certificate landing on q";
  d.semantics["lower"] = "chart-norm lower bound |p-q| / sigma_max";
  d.semantics["oracle"] = "closed-form Carnot distance (Heisenberg charts only)";
  emit(d, c, out);
}

void cmd_ballbox(const Common& c, const std::string& point_s, double eps, int samples,
                 int probes, std::ostream& out) {
  Structure S = make_structure(c);
  Vec y = point_s.empty() ? S.clamp_to_domain(Vec::Zero(S.dim()))
                          : parse_vec(point_s, S.dim(), "--point");
  if (eps <= 0) throw UsageError("--eps must be positive");
  BallBoxReport rep = ballbox_probe(S, y, eps, samples, c.step, c.seed, probes);
  Doc d;
  d.command = "ballbox";
  d.config = base_config(c);
  d.config["point"] = vec_json(y);
  d.config["eps"] = eps;
  d.config["samples"] = samples;
  d.config["probes"] = probes;
  d.result["box_n"] = rep.box_n;
  d.result["samples"] = rep.samples;
  d.result["violations"] = rep.violations;
  d.result["max_ratio"] = rep.max_ratio;
  d.result["surjectivity_probes"] = rep.probes;
  d.result["surjectivity_hits"] = rep.hits;
  d.result["chat"] = rep.chat;
  d.result["Chat"] = rep.Chat;
  d.semantics["violations"] = "cube images farther than eps from the base in the upper estimate";
  d.semantics["max_ratio"] = "largest certified distance over eps among samples";
  d.semantics["chat"] = "largest plan length over eps among steered-back targets";
  d.semantics["Chat"] = "largest word-parameter sup-norm over the cube half-width";
  d.csv_body = rep.to_csv();
  emit(d, c, out);
}

void cmd_hess(const Common& c, const std::string& f_s, const std::string& point_s,
              std::ostream& out) {
  Structure S = make_structure(c);
  ScalarField f = parse_field(f_s, S);
  Vec p = parse_vec(point_s, S.dim(), "--point");
  HorizontalHessian H(S, f);
  Mat Hm = H.at(p);
  Eigen::SelfAdjointEigenSolver<Mat> es(Hm);
  Doc d;
  d.command = "hess";
  d.config = base_config(c);
  d.config["f"] = f_s;
  d.config["point"] = vec_json(p);
  ojson rows = ojson::array();
  for (int i = 0; i < Hm.rows(); ++i) rows.push_back(vec_json(Hm.row(i).transpose()));
  d.result["matrix"] = rows;
  d.result["eigenvalues"] = vec_json(es.eigenvalues());
  d.result["min_eigenvalue"] = es.eigenvalues().minCoeff();
  d.result["gradient"] = vec_json(H.gradient(p));
  d.semantics["matrix"] = "symmetrized horizontal Hessian in the orthonormal frame";
  d.semantics["eigenvalues"] = "ascending; all >= 0 is the pointwise convexity test";
  d.semantics["gradient"] = "horizontal gradient frame coefficients (X_i f)";
  emit(d, c, out);
}

void cmd_grad(const Common& c, const std::string& f_s, const std::string& point_s,
              std::ostream& out) {
  Structure S = make_structure(c);
  ScalarField f = parse_field(f_s, S);
  Vec p = parse_vec(point_s, S.dim(), "--point");
  Vec frame = horizontal_gradient(S, f, p);
  Doc d;
  d.command = "grad";
  d.config = base_config(c);
  d.config["f"] = f_s;
  d.config["point"] = vec_json(p);
  d.result["frame_components"] = vec_json(frame);
  d.result["chart_components"] = vec_json(horizontal_gradient_chart(S, f, p));
  d.result["norm"] = frame.norm();
  d.semantics["frame_components"] = "X_i f in the orthonormal horizontal frame";
  d.semantics["chart_components"] = "the same vector pushed to chart coordinates";
  emit(d, c, out);
}

void cmd_sublap(const Common& c, const std::string& f_s, const std::string& point_s,
                std::ostream& out) {
  Structure S = make_structure(c);
  ScalarField f = parse_field(f_s, S);
  Vec p = parse_vec(point_s, S.dim(), "--point");
  HorizontalHessian H(S, f);
  Doc d;
  d.command = "sublap";
  d.config = base_config(c);
  d.config["f"] = f_s;
  d.config["point"] = vec_json(p);
  d.result["value"] = sublaplacian(S, f, p);
  d.result["hessian_trace"] = H.at(p).trace();
  d.semantics["value"] = "divergence-form sub-Laplacian of f at the point";
  d.semantics["hessian_trace"] = "trace of the horizontal Hessian (equal in exact arithmetic)";
  emit(d, c, out);
}

void cmd_convexity(const Common& c, const std::string& f_s, int samples, int geodesics,
                   int pts, double tol, std::ostream& out) {
  Structure S = make_structure(c);
  ScalarField f = parse_field(f_s, S);
  ConvexityVerdict vh = nconvexity_by_hessian(S, f, samples, tol, c.seed);
  ConvexityVerdict vg = nconvexity_by_geodesics(S, f, geodesics, pts, tol, c.seed);
  Doc d;
  d.command = "convexity";
  d.config = base_config(c);
  d.config["f"] = f_s;
  d.config["samples"] = samples;
  d.config["geodesics"] = geodesics;
  d.config["points_per_geodesic"] = pts;
  d.result["hessian"] = ojson::parse(vh.to_json());
  d.result["geodesic"] = ojson::parse(vg.to_json());
  d.result["agree"] = verdict_str(vh.verdict) == verdict_str(vg.verdict);
  d.semantics["hessian"] = "smallest horizontal Hessian eigenvalue over domain samples";
  d.semantics["geodesic"] = "midpoint margins along sampled nonholonomic geodesics";
  emit(d, c, out);
}

void cmd_lipschitz(const Common& c, const std::string& f_s, const std::string& center_s,
                   double radius, int pairs, bool no_steer, bool refine, std::ostream& out) {
  Structure S = make_structure(c);
  ScalarField f = parse_field(f_s, S);
  Vec center = center_s.empty() ? S.clamp_to_domain(Vec::Zero(S.dim()))
                                : parse_vec(center_s, S.dim(), "--center");
  DhOptions dh;
  dh.use_steer = !no_steer;
  dh.refine = refine;
  dh.seed = c.seed;
  LipschitzEstimate est = lipschitz_estimate(S, f, center, radius, pairs, c.seed, dh);
  Doc d;
  d.command = "lipschitz";
  d.config = base_config(c);
  d.config["f"] = f_s;
  d.config["center"] = vec_json(center);
  d.config["radius"] = radius;
  d.config["pairs"] = pairs;
  d.result = ojson::parse(est.to_json());
  d.semantics["sup_quotient"] = "max |f(p)-f(q)| / upper-distance estimate over the pairs";
  d.semantics["skipped"] = "pairs without a certified distance estimate";
  emit(d, c, out);
}

void cmd_lower_bound(const Common& c, const std::string& f_s, const std::string& y0_s,
                     double radius, const std::string& C_s, int samples, std::ostream& out) {
  Structure S = make_structure(c);
  ScalarField f = parse_field(f_s, S);
  Vec y0 = y0_s.empty() ? S.clamp_to_domain(Vec::Zero(S.dim()))
                        : parse_vec(y0_s, S.dim(), "--y0");
  double C = std::nan("");
  if (C_s != "sampled") {
    try {
      std::size_t used = 0;
      C = std::stod(C_s, &used);
      if (used != C_s.size()) throw std::invalid_argument(C_s);
    } catch (const std::exception&) {
      throw UsageError("--C: give a real number or 'sampled'");
    }
  }
  LowerBoundReport rep = lower_bound_check(S, f, y0, radius, C, samples, c.seed);
  Doc d;
  d.command = "lower-bound";
  d.config = base_config(c);
  d.config["f"] = f_s;
  d.config["y0"] = vec_json(y0);
  d.config["radius"] = radius;
  d.config["C"] = C_s;
  d.config["samples"] = samples;
  d.result = ojson::parse(rep.to_json());
  d.result["pass"] = rep.violations == 0;
  d.semantics["min_margin"] = "smallest f(p) minus the doubling-chain bound over samples";
  d.semantics["n_exponent"] = "chain length from the broken-geodesic segment bound";
  emit(d, c, out);
}

void cmd_plan(const Common& c, const std::string& p_s, const std::string& q_s, int ngon,
              std::ostream& out) {
  Structure S = make_structure(c, "heisenberg-1");
  if (!(heisenberg_chart(S) && S.dim() == 3))
    throw UsageError("plan needs the heisenberg-1 chart");
  Vec p = parse_vec(p_s, 3, "--p");
  Vec q = parse_vec(q_s, 3, "--q");
  if (ngon < 3) throw UsageError("--ngon must be at least 3");
  BrokenGeodesic plan = heisenberg_plan(p, q, ngon);
  bool left = false;
  Vec end = plan_endpoint(S, plan, c.step, 0, &left);
  double oracle = heisenberg_dc(p, q);
  Doc d;
  d.command = "plan";
  d.config = base_config(c);
  d.config["p"] = vec_json(p);
  d.config["q"] = vec_json(q);
  d.config["ngon"] = ngon;
  d.result["length"] = plan.total_length();
  d.result["segments"] = plan.segment_count();
  d.result["oracle"] = oracle;
  d.result["length_over_oracle"] = oracle > 0 ? plan.total_length() / oracle : 0.0;
  d.result["endpoint"] = vec_json(end);
  d.result["endpoint_gap"] = (end - q).norm();
  d.result["left_domain"] = left;
  d.result["plan"] = ojson::parse(plan_to_json(plan));
  d.semantics["length"] = "total length of the straight leg plus the polygon legs";
  d.semantics["oracle"] = "closed-form Carnot distance";
  d.semantics["endpoint_gap"] = "chart distance from the integrated endpoint to q";
  emit(d, c, out);
}

int cmd_verify(const Common& c, std::ostream& out) {
  Structure S = make_structure(c);
  VerifyReport rep = run_verify(S, c.seed);
  Doc d;
  d.command = "verify";
  d.config = base_config(c);
  d.result["model"] = rep.model;
  d.result["all_pass"] = rep.all_pass();
  ojson checks = ojson::array();
  std::string body = "name,pass,detail\n";
  for (const CheckResult& ck : rep.checks) {
    checks.push_back({{"name", ck.name}, {"pass", ck.pass}, {"detail", ck.detail}});
    body += ck.name + "," + (ck.pass ? "pass" : "FAIL") + "," + csv_escape(ck.detail) + "\n";
  }
  d.result["checks"] = checks;
  d.semantics["checks"] = "invariant suite rows; pass=false fails the run with exit 3";
  d.csv_body = body;
  emit(d, c, out);
  return rep.all_pass() ? 0 : 3;
}

}  // namespace

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"numerical workbench for sub-Riemannian structures"};
  app.require_subcommand(1);

  Common c;
  std::string p_s, q_s, x0_s, v0_s, U0_s, point_s, word_s, f_s, center_s, y0_s, from_s,
      to_s;
  std::string C_s = "sampled";
  double T = 1.0, tau = 0.1, eps = 0.2, radius = 0.3, lb_radius = 0.2, steer_tol = 1e-7,
         conv_tol = -1.0;
  int bi = 1, bj = 2, ngon = 0, plan_ngon = 16, budget = 16, restarts = 1, samples = 200,
      probes = 12, geodesics = 100, pts = 25, pairs = 100, conv_samples = 200,
      max_iter = 50, lb_samples = 200;
  bool full = false, no_steer = false, no_refine = false, lip_refine = false;

  std::function<int()> action;

  auto* cb = app.add_subcommand("bracket", "evaluate a frame bracket at a point");
  add_common(cb, c);
  cb->add_option("--i", bi, "first frame index, 1-based")->required();
  cb->add_option("--j", bj, "second frame index, 1-based")->required();
  cb->add_option("--point", point_s, "chart point")->required();
  cb->callback([&] {
    action = [&] { cmd_bracket(c, bi, bj, point_s, out); return 0; };
  });

  auto* cg = app.add_subcommand("growth", "bracket-layer growth vector at a point");
  add_common(cg, c);
  cg->add_option("--point", point_s, "chart point")->required();
  cg->callback([&] {
    action = [&] { cmd_growth(c, point_s, out); return 0; };
  });

  auto* cc = app.add_subcommand("christoffel", "connection coefficients at a point");
  add_common(cc, c);
  cc->add_option("--point", point_s, "chart point")->required();
  cc->add_flag("--full", full, "whole-frame table instead of the horizontal block");
  cc->callback([&] {
    action = [&] { cmd_christoffel(c, point_s, full, out); return 0; };
  });

  auto* cgeo = app.add_subcommand("geodesic", "nonholonomic geodesic from (x0, v0)");
  add_common(cgeo, c);
  cgeo->add_option("--x0", x0_s, "start point")->required();
  cgeo->add_option("--v0", v0_s, "initial frame velocity")->required();
  cgeo->add_option("--T", T, "integration time")->required();
  cgeo->callback([&] {
    action = [&] { cmd_geodesic(c, x0_s, v0_s, T, out); return 0; };
  });

  auto* cexp = app.add_subcommand("exp", "unit-time horizontal exponential");
  add_common(cexp, c);
  cexp->add_option("--x0", x0_s, "start point")->required();
  cexp->add_option("--u0", U0_s, "initial frame velocity")->required();
  cexp->callback([&] {
    action = [&] { cmd_exp(c, x0_s, U0_s, out); return 0; };
  });

  auto* cr = app.add_subcommand("riemannian", "geodesic of the extended metric");
  add_common(cr, c);
  cr->add_option("--x0", x0_s, "start point")->required();
  cr->add_option("--U0", U0_s, "initial whole-frame velocity")->required();
  cr->add_option("--T", T, "integration time")->required();
  cr->callback([&] {
    action = [&] { cmd_riemannian(c, x0_s, U0_s, T, out); return 0; };
  });

  auto* ccon = app.add_subcommand("constraint-geodesic",
                                  "chart-coordinate formulation with reaction forces");
  add_common(ccon, c);
  ccon->add_option("--x0", x0_s, "start point")->required();
  ccon->add_option("--v0", v0_s, "initial frame velocity")->required();
  ccon->add_option("--T", T, "integration time")->required();
  ccon->callback([&] {
    action = [&] { cmd_constraint(c, x0_s, v0_s, T, out); return 0; };
  });

  auto* cf = app.add_subcommand("flow", "commutator flow of a bracket word");
  add_common(cf, c);
  cf->add_option("--word", word_s, "bracket word, e.g. 1,2")->required();
  cf->add_option("--tau", tau, "flow parameter")->required();
  cf->add_option("--point", point_s, "base point")->required();
  cf->callback([&] {
    action = [&] { cmd_flow(c, word_s, tau, point_s, out); return 0; };
  });

  auto* cs = app.add_subcommand("steer", "drive the bracket-word endpoint map to a target");
  add_common(cs, c);
  cs->add_option("--from", from_s, "start point")->required();
  cs->add_option("--to", to_s, "target point")->required();
  cs->add_option("--tol", steer_tol, "target residual");
  cs->add_option("--max-iter", max_iter, "Newton iteration cap");
  cs->callback([&] {
    action = [&] { cmd_steer(c, from_s, to_s, steer_tol, max_iter, out); return 0; };
  });

  auto* cd = app.add_subcommand("dist", "distance estimates between two points");
  add_common(cd, c);
  cd->add_option("--p", p_s, "first point")->required();
  cd->add_option("--q", q_s, "second point")->required();
  cd->add_option("--ngon", ngon, "extra Heisenberg planner seed with this polygon");
  cd->add_option("--budget", budget, "segment budget for the upper search");
  cd->add_option("--restarts", restarts, "independent refinement chains");
  cd->add_flag("--no-steer", no_steer, "skip the steering certificate");
  cd->add_flag("--no-refine", no_refine, "skip the simplex refinement");
  cd->callback([&] {
    action = [&] {
      cmd_dist(c, p_s, q_s, ngon, budget, restarts, no_steer, no_refine, out);
      return 0;
    };
  });

  auto* cbb = app.add_subcommand("ballbox", "word-parameter cube vs metric ball probe");
  add_common(cbb, c);
  cbb->add_option("--point", point_s, "base point (box center when omitted)");
  cbb->add_option("--eps", eps, "ball radius")->required();
  cbb->add_option("--samples", samples, "cube samples");
  cbb->add_option("--probes", probes, "surjectivity probes");
  cbb->callback([&] {
    action = [&] { cmd_ballbox(c, point_s, eps, samples, probes, out); return 0; };
  });

  auto* ch = app.add_subcommand("hess", "horizontal Hessian of a scalar at a point");
  add_common(ch, c);
  ch->add_option("--f", f_s, "scalar expression in chart coordinates")->required();
  ch->add_option("--point", point_s, "chart point")->required();
  ch->callback([&] {
    action = [&] { cmd_hess(c, f_s, point_s, out); return 0; };
  });

  auto* cgr = app.add_subcommand("grad", "horizontal gradient of a scalar at a point");
  add_common(cgr, c);
  cgr->add_option("--f", f_s, "scalar expression")->required();
  cgr->add_option("--point", point_s, "chart point")->required();
  cgr->callback([&] {
    action = [&] { cmd_grad(c, f_s, point_s, out); return 0; };
  });

  auto* csl = app.add_subcommand("sublap", "sub-Laplacian of a scalar at a point");
  add_common(csl, c);
  csl->add_option("--f", f_s, "scalar expression")->required();
  csl->add_option("--point", point_s, "chart point")->required();
  csl->callback([&] {
    action = [&] { cmd_sublap(c, f_s, point_s, out); return 0; };
  });

  auto* cv = app.add_subcommand("convexity", "convexity verdicts by both routes");
  add_common(cv, c);
  cv->add_option("--f", f_s, "scalar expression")->required();
  cv->add_option("--samples", conv_samples, "Hessian route domain samples");
  cv->add_option("--geodesics", geodesics, "geodesic route curve count");
  cv->add_option("--points", pts, "samples kept per geodesic");
  cv->add_option("--tol", conv_tol, "margin tolerance (negative = scale-aware default)");
  cv->callback([&] {
    action = [&] {
      cmd_convexity(c, f_s, conv_samples, geodesics, pts, conv_tol, out);
      return 0;
    };
  });

  auto* cl = app.add_subcommand("lipschitz", "empirical distance-quotient supremum");
  add_common(cl, c);
  cl->add_option("--f", f_s, "scalar expression")->required();
  cl->add_option("--center", center_s, "ball center (box center when omitted)");
  cl->add_option("--radius", radius, "ball radius");
  cl->add_option("--pairs", pairs, "sampled pairs");
  cl->add_flag("--no-steer", no_steer, "skip the steering certificate in the upper search");
  cl->add_flag("--refine", lip_refine, "enable simplex refinement in the upper search");
  cl->callback([&] {
    action = [&] {
      cmd_lipschitz(c, f_s, center_s, radius, pairs, no_steer, lip_refine, out);
      return 0;
    };
  });

  auto* clb = app.add_subcommand("lower-bound", "doubling-chain lower bound check");
  add_common(clb, c);
  clb->add_option("--f", f_s, "scalar expression")->required();
  clb->add_option("--y0", y0_s, "chain base point (box center when omitted)");
  clb->add_option("--radius", lb_radius, "certified neighborhood radius");
  clb->add_option("--C", C_s, "local bound on f, or 'sampled'");
  clb->add_option("--samples", lb_samples, "random endpoints tested");
  clb->callback([&] {
    action = [&] {
      cmd_lower_bound(c, f_s, y0_s, lb_radius, C_s, lb_samples, out);
      return 0;
    };
  });

  auto* cp = app.add_subcommand("plan", "Heisenberg straight-plus-polygon planner");
  add_common(cp, c);
  cp->add_option("--p", p_s, "start point")->required();
  cp->add_option("--q", q_s, "target point")->required();
  cp->add_option("--ngon", plan_ngon, "polygon vertex count");
  cp->callback([&] {
    action = [&] { cmd_plan(c, p_s, q_s, plan_ngon, out); return 0; };
  });

  auto* cver = app.add_subcommand("verify", "run the invariant suite for a model");
  add_common(cver, c);
  cver->callback([&] {
    action = [&] { return cmd_verify(c, out); };
  });

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 1;
  }

  if (!action) {
    err << "error: no subcommand selected\n";
    return 1;
  }
  try {
    return action();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    ojson j;
    j["error"] = e.what();
    const auto subs = app.get_subcommands();
    if (!subs.empty()) j["command"] = subs.front()->get_name();
    err << j.dump(2) << "\n";
    return 2;
  }
}

}  // namespace srgeo::cli
