#include "srgeo/structure.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "srgeo/rng.hpp"

namespace srgeo {

using json = nlohmann::ordered_json;

FrameField FrameField::from_components(std::vector<Expr> comps,
                                       std::span<const std::string> coords) {
  FrameField f;
  f.comps = std::move(comps);
  f.jac.resize(f.comps.size());
  for (std::size_t i = 0; i < f.comps.size(); ++i) {
    f.jac[i].reserve(coords.size());
    for (const auto& c : coords) f.jac[i].push_back(f.comps[i].derivative(c));
  }
  return f;
}

bool FrameField::is_zero() const {
  return std::all_of(comps.begin(), comps.end(), [](const Expr& e) { return e.is_zero(); });
}

Vec FrameField::evaluate(std::span<const std::string> coords, const Vec& p) const {
  Vec out(static_cast<Eigen::Index>(comps.size()));
  std::span<const double> vals(p.data(), static_cast<std::size_t>(p.size()));
  for (std::size_t i = 0; i < comps.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = comps[i].evaluate(coords, vals);
  return out;
}

FrameField lie_bracket(const FrameField& U, const FrameField& V,
                       std::span<const std::string> coords) {
  const std::size_t m = coords.size();
  std::vector<Expr> comps;
  comps.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    Expr acc = Expr::number(0.0);
    for (std::size_t j = 0; j < m; ++j) {
      if (!U.comps[j].is_zero() && !V.jac[i][j].is_zero())
        acc = acc + U.comps[j] * V.jac[i][j];
      if (!V.comps[j].is_zero() && !U.jac[i][j].is_zero())
        acc = acc - V.comps[j] * U.jac[i][j];
    }
    comps.push_back(acc);
  }
  return FrameField::from_components(std::move(comps), coords);
}

namespace {

bool valid_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

Expr parse_component(const json& entry, const std::string& where) {
  if (!entry.is_string())
    throw SpecError(where + ": component must be an expression string");
  try {
    return parse_expression(entry.get<std::string>());
  } catch (const ParseError& e) {
    throw SpecError(where + ": " + e.what());
  }
}

std::vector<FrameField> parse_field_list(const json& arr, const std::string& key,
                                         std::span<const std::string> coords) {
  if (!arr.is_array() || arr.empty())
    throw SpecError("'" + key + "' must be a non-empty array of vector fields");
  std::vector<FrameField> out;
  out.reserve(arr.size());
  for (std::size_t a = 0; a < arr.size(); ++a) {
    const json& field = arr[a];
    std::string where = key + "[" + std::to_string(a) + "]";
    if (!field.is_array() || field.size() != coords.size())
      throw SpecError(where + ": expected " + std::to_string(coords.size()) +
                      " component expressions");
    std::vector<Expr> comps;
    comps.reserve(coords.size());
    for (std::size_t i = 0; i < field.size(); ++i)
      comps.push_back(parse_component(field[i], where + "[" + std::to_string(i) + "]"));
    out.push_back(FrameField::from_components(std::move(comps), coords));
  }
  return out;
}

std::string point_string(std::span<const std::string> coords, const Vec& p) {
  std::ostringstream os;
  os << "(";
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (i) os << ", ";
    os << coords[static_cast<std::size_t>(i)] << "=" << p[i];
  }
  os << ")";
  return os.str();
}

}  // namespace

StructureSpec parse_model(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SpecError(std::string("model is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SpecError("model must be a JSON object");

  StructureSpec spec;
  if (!doc.contains("name") || !doc["name"].is_string())
    throw SpecError("model needs a string 'name'");
  spec.name = doc["name"].get<std::string>();

  if (!doc.contains("coords") || !doc["coords"].is_array() || doc["coords"].size() < 2)
    throw SpecError("model needs a 'coords' array with at least two names");
  std::set<std::string> seen;
  for (const auto& c : doc["coords"]) {
    if (!c.is_string() || !valid_identifier(c.get<std::string>()))
      throw SpecError("coordinate names must be identifiers");
    if (!seen.insert(c.get<std::string>()).second)
      throw SpecError("duplicate coordinate name '" + c.get<std::string>() + "'");
    spec.coords.push_back(c.get<std::string>());
  }
  const int m = spec.dim();

  if (!doc.contains("horizontal") || !doc.contains("vertical"))
    throw SpecError("model needs 'horizontal' and 'vertical' frame lists");
  spec.horizontal = parse_field_list(doc["horizontal"], "horizontal", spec.coords);
  spec.vertical = parse_field_list(doc["vertical"], "vertical", spec.coords);
  if (static_cast<int>(spec.horizontal.size() + spec.vertical.size()) != m)
    throw SpecError("horizontal plus vertical field count must equal the chart dimension");

  if (!doc.contains("domain") || !doc["domain"].is_array() ||
      static_cast<int>(doc["domain"].size()) != m)
    throw SpecError("model needs a 'domain' array with one [lo, hi] pair per coordinate");
  spec.domain.resize(m, 2);
  for (int i = 0; i < m; ++i) {
    const json& row = doc["domain"][static_cast<std::size_t>(i)];
    if (!row.is_array() || row.size() != 2 || !row[0].is_number() || !row[1].is_number())
      throw SpecError("domain[" + std::to_string(i) + "] must be [lo, hi]");
    double lo = row[0].get<double>(), hi = row[1].get<double>();
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
      throw SpecError("domain[" + std::to_string(i) + "] must have lo < hi, both finite");
    spec.domain(i, 0) = lo;
    spec.domain(i, 1) = hi;
  }

  if (doc.contains("weights")) {
    if (!doc["weights"].is_array() || static_cast<int>(doc["weights"].size()) != m)
      throw SpecError("'weights' must list one positive integer per coordinate");
    for (const auto& w : doc["weights"]) {
      if (!w.is_number_integer() || w.get<int>() < 1)
        throw SpecError("'weights' must list one positive integer per coordinate");
      spec.weights.push_back(w.get<int>());
    }
  }

  check_frame_independence(spec);
  return spec;
}

StructureSpec load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open model file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

std::string model_to_json(const StructureSpec& spec) {
  json doc;
  doc["name"] = spec.name;
  doc["coords"] = spec.coords;
  auto fields_to_json = [](const std::vector<FrameField>& fields) {
    json arr = json::array();
    for (const auto& f : fields) {
      json comps = json::array();
      for (const auto& e : f.comps) comps.push_back(e.str());
      arr.push_back(comps);
    }
    return arr;
  };
  doc["horizontal"] = fields_to_json(spec.horizontal);
  doc["vertical"] = fields_to_json(spec.vertical);
  json dom = json::array();
  for (int i = 0; i < spec.domain.rows(); ++i)
    dom.push_back(json::array({spec.domain(i, 0), spec.domain(i, 1)}));
  doc["domain"] = dom;
  if (!spec.weights.empty()) doc["weights"] = spec.weights;
  return doc.dump(2);
}

void check_frame_independence(const StructureSpec& spec) {
  const int m = spec.dim();
  const int per_axis = 5;
  const unsigned long long cap = 100000;

  std::vector<CompiledExpr> comps;
  comps.reserve(static_cast<std::size_t>(m) * static_cast<std::size_t>(m));
  std::span<const std::string> coords(spec.coords);
  auto compile_fields = [&](const std::vector<FrameField>& fields) {
    for (const auto& f : fields)
      for (const auto& e : f.comps) comps.push_back(CompiledExpr::compile(e, coords));
  };
  try {
    compile_fields(spec.horizontal);
    compile_fields(spec.vertical);
  } catch (const EvalError& e) {
    throw SpecError(std::string("frame component: ") + e.what());
  }

  unsigned long long total = 1;
  bool overflow = m > 27;
  if (!overflow)
    for (int i = 0; i < m; ++i) total *= per_axis;
  unsigned long long count = overflow ? cap : std::min(total, cap);
  unsigned long long stride = overflow ? 1 : std::max<unsigned long long>(1, total / count);

  Vec p(m);
  Mat A(m, m);
  for (unsigned long long s = 0; s < count; ++s) {
    unsigned long long idx = s * stride;
    for (int i = 0; i < m; ++i) {
      int cell = static_cast<int>(idx % per_axis);
      idx /= per_axis;
      double lo = spec.domain(i, 0), hi = spec.domain(i, 1);
      p[i] = lo + (hi - lo) * cell / (per_axis - 1);
    }
    try {
      for (int a = 0; a < m; ++a)
        for (int i = 0; i < m; ++i)
          A(i, a) = comps[static_cast<std::size_t>(a) * m + i].eval(p.data());
    } catch (const EvalError& e) {
      throw SpecError("frame evaluation failed at " + point_string(spec.coords, p) +
                      ": " + e.what());
    }
    Eigen::JacobiSVD<Mat> svd(A);
    double smax = svd.singularValues()(0);
    double smin = svd.singularValues()(m - 1);
    if (!(smin > 1e-9 * std::max(1.0, smax)))
      throw SpecError("frame fields are linearly dependent at " +
                      point_string(spec.coords, p));
  }
}

Structure::Structure(StructureSpec spec) : spec_(std::move(spec)) {
  m_ = spec_.dim();
  k_ = spec_.rank();
  if (k_ < 1 || m_ <= k_)
    throw SpecError("structure needs at least one horizontal and one vertical field");
  for (const auto& f : spec_.horizontal)
    if (static_cast<int>(f.comps.size()) != m_)
      throw SpecError("horizontal field has wrong component count");
  for (const auto& f : spec_.vertical)
    if (static_cast<int>(f.comps.size()) != m_)
      throw SpecError("vertical field has wrong component count");

  fields_.reserve(static_cast<std::size_t>(m_));
  for (const auto& f : spec_.horizontal) fields_.push_back(&f);
  for (const auto& f : spec_.vertical) fields_.push_back(&f);

  std::span<const std::string> coords(spec_.coords);
  frame_comps_.reserve(static_cast<std::size_t>(m_) * static_cast<std::size_t>(m_));
  for (int a = 0; a < m_; ++a)
    for (int i = 0; i < m_; ++i)
      frame_comps_.push_back(CompiledExpr::compile(fields_[static_cast<std::size_t>(a)]->comps[static_cast<std::size_t>(i)], coords));

  pair_slot_.assign(static_cast<std::size_t>(m_) * static_cast<std::size_t>(m_), -1);
  for (int a = 0; a < m_; ++a) {
    for (int b = a + 1; b < m_; ++b) {
      BracketEntry e;
      e.a = a;
      e.b = b;
      e.field = lie_bracket(*fields_[static_cast<std::size_t>(a)],
                            *fields_[static_cast<std::size_t>(b)], coords);
      e.zero = e.field.is_zero();
      if (!e.zero)
        for (const auto& c : e.field.comps) e.comps.push_back(CompiledExpr::compile(c, coords));
      pair_slot_[static_cast<std::size_t>(a) * m_ + b] = static_cast<int>(brackets_.size());
      brackets_.push_back(std::move(e));
    }
  }
  for (int i = 0; i < k_; ++i)
    for (int j = i + 1; j < k_; ++j)
      if (!entry(i, j).zero) hpairs_.push_back(pair_slot_[static_cast<std::size_t>(i) * m_ + j]);

  // probe the horizontal Christoffel block; identically-zero blocks let
  // flows double as geodesics on constant directions
  {
    Rng rng(0xf1a7u);
    std::vector<double> gamma;
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 48 && worst <= 1e-13; ++s) {
      Vec p = rng.in_box(s, spec_.domain);
      horizontal_christoffels(p, gamma);
      for (double g : gamma) worst = std::max(worst, std::abs(g));
    }
    hflat_ = worst <= 1e-13;
  }
}

const FrameField& Structure::field(int a) const {
  return *fields_.at(static_cast<std::size_t>(a));
}

bool Structure::in_domain(const Vec& p, double slack) const {
  for (int i = 0; i < m_; ++i) {
    double lo = spec_.domain(i, 0), hi = spec_.domain(i, 1);
    double s = slack * (1.0 + hi - lo);
    if (p[i] < lo - s || p[i] > hi + s) return false;
  }
  return true;
}

Vec Structure::clamp_to_domain(const Vec& p) const {
  Vec q = p;
  for (int i = 0; i < m_; ++i)
    q[i] = std::clamp(q[i], spec_.domain(i, 0), spec_.domain(i, 1));
  return q;
}

Mat Structure::frame_matrix(const Vec& p) const {
  Mat A(m_, m_);
  frame_matrix_into(p.data(), A);
  return A;
}

void Structure::frame_matrix_into(const double* p, Mat& A) const {
  A.resize(m_, m_);
  for (int a = 0; a < m_; ++a)
    for (int i = 0; i < m_; ++i)
      A(i, a) = frame_comps_[static_cast<std::size_t>(a) * m_ + i].eval(p);
}

void Structure::field_value_into(int a, const double* p, double* out) const {
  for (int i = 0; i < m_; ++i)
    out[i] = frame_comps_[static_cast<std::size_t>(a) * m_ + i].eval(p);
}

Vec Structure::frame_coefficients(const Vec& p, const Vec& v) const {
  Mat A = frame_matrix(p);
  return A.partialPivLu().solve(v);
}

Vec Structure::project_horizontal(const Vec& p, const Vec& v) const {
  Vec c = frame_coefficients(p, v);
  Mat A = frame_matrix(p);
  Vec out = Vec::Zero(m_);
  for (int a = 0; a < k_; ++a) out += c[a] * A.col(a);
  return out;
}

const Structure::BracketEntry& Structure::entry(int a, int b) const {
  int lo = std::min(a, b), hi = std::max(a, b);
  int slot = pair_slot_.at(static_cast<std::size_t>(lo) * m_ + hi);
  return brackets_[static_cast<std::size_t>(slot)];
}

const FrameField& Structure::bracket_field(int a, int b) const {
  if (a == b) throw std::invalid_argument("bracket_field needs distinct indices");
  return entry(a, b).field;
}

bool Structure::bracket_is_zero(int a, int b) const {
  if (a == b) return true;
  return entry(a, b).zero;
}

void Structure::structure_functions(const Vec& p, std::vector<double>& c) const {
  const std::size_t mm = static_cast<std::size_t>(m_);
  c.assign(mm * mm * mm, 0.0);
  Mat A = frame_matrix(p);
  Eigen::PartialPivLU<Mat> lu(A);
  Vec w(m_);
  for (const auto& e : brackets_) {
    if (e.zero) continue;
    for (int i = 0; i < m_; ++i) w[i] = e.comps[static_cast<std::size_t>(i)].eval(p.data());
    Vec sol = lu.solve(w);
    for (int d = 0; d < m_; ++d) {
      c[(static_cast<std::size_t>(e.a) * mm + e.b) * mm + d] = sol[d];
      c[(static_cast<std::size_t>(e.b) * mm + e.a) * mm + d] = -sol[d];
    }
  }
}

void Structure::full_christoffels(const Vec& p, std::vector<double>& gamma) const {
  const std::size_t mm = static_cast<std::size_t>(m_);
  std::vector<double> c;
  structure_functions(p, c);
  gamma.assign(mm * mm * mm, 0.0);
  for (std::size_t a = 0; a < mm; ++a)
    for (std::size_t b = 0; b < mm; ++b)
      for (std::size_t d = 0; d < mm; ++d)
        gamma[(a * mm + b) * mm + d] =
            0.5 * (c[(a * mm + b) * mm + d] - c[(b * mm + d) * mm + a] +
                   c[(d * mm + a) * mm + b]);
}

void Structure::horizontal_christoffels(const Vec& p, std::vector<double>& gamma) const {
  const std::size_t kk = static_cast<std::size_t>(k_);
  gamma.assign(kk * kk * kk, 0.0);
  if (hpairs_.empty()) return;

  Mat A = frame_matrix(p);
  Eigen::PartialPivLU<Mat> lu(A);
  // c[(i*k + j)*k + r] over horizontal indices only
  std::vector<double> c(kk * kk * kk, 0.0);
  Vec w(m_);
  for (int slot : hpairs_) {
    const auto& e = brackets_[static_cast<std::size_t>(slot)];
    for (int i = 0; i < m_; ++i) w[i] = e.comps[static_cast<std::size_t>(i)].eval(p.data());
    Vec sol = lu.solve(w);
    for (int r = 0; r < k_; ++r) {
      c[(static_cast<std::size_t>(e.a) * kk + e.b) * kk + r] = sol[r];
      c[(static_cast<std::size_t>(e.b) * kk + e.a) * kk + r] = -sol[r];
    }
  }
  for (std::size_t i = 0; i < kk; ++i)
    for (std::size_t j = 0; j < kk; ++j)
      for (std::size_t r = 0; r < kk; ++r)
        gamma[(i * kk + j) * kk + r] =
            0.5 * (c[(i * kk + j) * kk + r] - c[(j * kk + r) * kk + i] +
                   c[(r * kk + i) * kk + j]);
}

std::pair<int, int> Structure::horizontal_pair(int idx) const {
  const auto& e = brackets_[static_cast<std::size_t>(hpairs_.at(static_cast<std::size_t>(idx)))];
  return {e.a, e.b};
}

void Structure::eval_horizontal_pair(int idx, const double* p, double* out) const {
  const auto& e = brackets_[static_cast<std::size_t>(hpairs_.at(static_cast<std::size_t>(idx)))];
  for (int i = 0; i < m_; ++i) out[i] = e.comps[static_cast<std::size_t>(i)].eval(p);
}

GrowthVector Structure::growth_vector(const Vec& p, double tol) const {
  std::span<const std::string> coords(spec_.coords);
  GrowthVector gv;
  gv.tol = tol;

  std::vector<FrameField> layer;
  std::vector<Vec> cols;
  for (const auto& f : spec_.horizontal) {
    layer.push_back(f);
    cols.push_back(f.evaluate(coords, p));
  }

  auto rank_of = [&]() {
    Mat M(m_, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) M.col(static_cast<Eigen::Index>(j)) = cols[j];
    Eigen::JacobiSVD<Mat> svd(M);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) <= 0.0) return 0;
    int r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv(i) > tol * sv(0)) ++r;
    return r;
  };

  int r = rank_of();
  gv.layers.push_back(r);
  gv.depth = 1;
  const int depth_cap = std::min(m_, 6);

  while (r < m_ && gv.depth < depth_cap) {
    std::vector<FrameField> next;
    for (const auto& f : layer) {
      for (const auto& h : spec_.horizontal) {
        FrameField b = lie_bracket(h, f, coords);
        if (b.is_zero()) continue;
        cols.push_back(b.evaluate(coords, p));
        next.push_back(std::move(b));
      }
    }
    ++gv.depth;
    r = rank_of();
    gv.layers.push_back(r);
    if (next.empty()) break;
    layer = std::move(next);
  }
  gv.complete = (r == m_);
  return gv;
}

double Structure::horizontality_defect(std::span<const double> t,
                                       std::span<const Vec> x) const {
  if (t.size() != x.size() || t.size() < 2)
    throw std::invalid_argument("horizontality_defect needs matched samples, at least two");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1]))
      throw std::invalid_argument("horizontality_defect needs strictly increasing times");

  const std::size_t n = t.size();
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t lo = (i == 0) ? 0 : i - 1;
    std::size_t hi = (i + 1 == n) ? i : i + 1;
    Vec v = (x[hi] - x[lo]) / (t[hi] - t[lo]);
    Vec coeffs = frame_coefficients(x[i], v);
    double defect = coeffs.tail(m_ - k_).norm();
    worst = std::max(worst, defect);
  }
  return worst;
}

}  // namespace srgeo
