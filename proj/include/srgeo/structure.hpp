#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "srgeo/expr.hpp"

namespace srgeo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class SpecError : public std::runtime_error {
public:
  explicit SpecError(const std::string& msg) : std::runtime_error(msg) {}
};

// A vector field written in the chart: one component expression per coordinate.
// The Jacobian is kept symbolically so brackets of brackets stay exact.
struct FrameField {
  std::vector<Expr> comps;
  std::vector<std::vector<Expr>> jac;  // jac[i][j] = d comps[i] / d coords[j]

  static FrameField from_components(std::vector<Expr> comps,
                                    std::span<const std::string> coords);
  bool is_zero() const;
  Vec evaluate(std::span<const std::string> coords, const Vec& p) const;
};

// [U, V]^i = sum_j U^j dV^i/dx_j - V^j dU^i/dx_j, computed symbolically.
FrameField lie_bracket(const FrameField& U, const FrameField& V,
                       std::span<const std::string> coords);

struct StructureSpec {
  std::string name;
  std::vector<std::string> coords;
  std::vector<FrameField> horizontal;
  std::vector<FrameField> vertical;
  Eigen::MatrixX2d domain;   // rows: [lo, hi] per coordinate
  std::vector<int> weights;  // optional coordinate weights; empty if unset

  int dim() const { return static_cast<int>(coords.size()); }
  int rank() const { return static_cast<int>(horizontal.size()); }
};

// Reads a model description from JSON text. Shape errors, expression parse
// errors, and frame degeneracy on a sample grid all surface as SpecError
// with enough context to locate the offending entry.
StructureSpec parse_model(const std::string& json_text);
StructureSpec load_model_file(const std::string& path);
std::string model_to_json(const StructureSpec& spec);

// Grid degeneracy sweep, also used by parse_model. Throws SpecError naming
// the first grid point where the combined frame loses rank.
void check_frame_independence(const StructureSpec& spec);

struct GrowthVector {
  std::vector<int> layers;  // cumulative dims n_1 <= n_2 <= ...
  int depth = 0;            // bracket length reached
  bool complete = false;    // true when the last layer spans the chart
  double tol = 0.0;
};

// Evaluation engine for one structure: compiled frame components, cached
// pairwise brackets, structure functions, and Christoffel symbols in the
// declared orthonormal frame.
class Structure {
public:
  explicit Structure(StructureSpec spec);

  const StructureSpec& spec() const { return spec_; }
  int dim() const { return m_; }
  int rank() const { return k_; }
  const std::vector<std::string>& coords() const { return spec_.coords; }
  const FrameField& field(int a) const;  // 0..dim()-1, horizontal first

  bool in_domain(const Vec& p, double slack = 1e-9) const;
  Vec clamp_to_domain(const Vec& p) const;

  // Frame matrix A(p): column a holds E_a(p).
  Mat frame_matrix(const Vec& p) const;
  void frame_matrix_into(const double* p, Mat& A) const;
  // Chart components of E_a(p) alone; out has room for dim() values.
  void field_value_into(int a, const double* p, double* out) const;

  // True when the horizontal Christoffel block vanished on a probe grid,
  // making constant-direction frame flows unit-speed geodesics.
  bool horizontal_flat() const { return hflat_; }

  // Solve A(p) c = v for the frame coefficients of a chart vector.
  Vec frame_coefficients(const Vec& p, const Vec& v) const;
  // Horizontal part of v at p, back in chart components.
  Vec project_horizontal(const Vec& p, const Vec& v) const;

  // Cached symbolic bracket [E_a, E_b], a != b.
  const FrameField& bracket_field(int a, int b) const;
  bool bracket_is_zero(int a, int b) const;

  // Full structure functions at p: c[(a*m + b)*m + d] with
  // [E_a, E_b] = sum_d c_ab^d E_d. Resized to m^3.
  void structure_functions(const Vec& p, std::vector<double>& c) const;

  // Gamma^c_ab = (c_ab^c - c_bc^a + c_ca^b) / 2 over the whole frame.
  // Layout gamma[(a*m + b)*m + c]; resized to m^3.
  void full_christoffels(const Vec& p, std::vector<double>& gamma) const;

  // Horizontal block only: gamma[(i*k + j)*k + r] = Gamma^r_ij for
  // i, j, r < rank(). Resized to k^3. Only brackets of horizontal pairs
  // are evaluated, which is what geodesic integration needs per step.
  void horizontal_christoffels(const Vec& p, std::vector<double>& gamma) const;

  // Low-level hooks for allocation-free inner loops.
  int horizontal_pair_count() const { return static_cast<int>(hpairs_.size()); }
  std::pair<int, int> horizontal_pair(int idx) const;
  // Writes the m chart components of the bracket for horizontal pair idx.
  void eval_horizontal_pair(int idx, const double* p, double* out) const;

  GrowthVector growth_vector(const Vec& p, double tol = 1e-9) const;

  // Max frame-norm of the vertical part of the discrete velocity of a
  // sampled curve. t strictly increasing, at least two samples.
  double horizontality_defect(std::span<const double> t, std::span<const Vec> x) const;

private:
  struct BracketEntry {
    int a, b;  // a < b
    FrameField field;
    std::vector<CompiledExpr> comps;
    bool zero;
  };

  const BracketEntry& entry(int a, int b) const;

  StructureSpec spec_;
  int m_, k_;
  std::vector<const FrameField*> fields_;       // horizontal then vertical
  std::vector<CompiledExpr> frame_comps_;       // [a*m + i]
  std::vector<BracketEntry> brackets_;          // all pairs a < b
  std::vector<int> pair_slot_;                  // (a,b) a<b -> index in brackets_
  std::vector<int> hpairs_;                     // nonzero horizontal pairs
  bool hflat_ = false;
};

}  // namespace srgeo
