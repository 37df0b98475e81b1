#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "plapsde/model.hpp"

namespace plapsde {

/// Uniform tensor grid on the unit box (0,1)^d with n interior nodes per
/// axis and mesh width hx = 1/(n+1). Boundary nodes are implicit and carry
/// the value zero.
///
/// Cells are indexed by their lower corner m in [0, n]^d (extended node
/// coordinates, 0 and n+1 being boundary), so there are (n+1)^d cells.
/// Interior nodes use 0-based indices i in [0, n)^d; node i sits at
/// x = (i+1) hx. Flat indices run with axis 0 fastest.
class Grid {
 public:
  Grid(int d, int n);

  int d() const noexcept { return d_; }
  int n() const noexcept { return n_; }
  double hx() const noexcept { return hx_; }
  /// hx^d
  double cell_volume() const noexcept { return volume_; }
  std::size_t num_nodes() const noexcept { return num_nodes_; }
  std::size_t num_cells() const noexcept { return num_cells_; }

  /// Interior index of the corner node of `cell` (-1 when on the boundary).
  std::int32_t corner_node(std::size_t cell) const {
    return topology_->cell_nodes[cell * (d_ + 1)];
  }
  /// Interior index of corner + e_axis (-1 when on the boundary).
  std::int32_t forward_node(std::size_t cell, int axis) const {
    return topology_->cell_nodes[cell * (d_ + 1) + 1 + axis];
  }
  /// Flat cell index of cell + steps * e_axis, or -1 when outside [0, n]^d.
  std::int64_t shifted_cell(std::size_t cell, int axis, int steps) const;

  /// Multi-index of a cell in [0, n]^d.
  std::vector<int> cell_index(std::size_t cell) const;
  /// Multi-index of an interior node in [0, n)^d.
  std::vector<int> node_index(std::size_t node) const;

  void node_coords(std::size_t node, std::span<double> x) const;
  void cell_center(std::size_t cell, std::span<double> x) const;

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.d_ == b.d_ && a.n_ == b.n_;
  }

 private:
  struct Topology {
    std::vector<std::int32_t> cell_nodes;
  };

  int d_;
  int n_;
  double hx_;
  double volume_;
  std::size_t num_nodes_;
  std::size_t num_cells_;
  std::shared_ptr<const Topology> topology_;
};

/// u: interior nodes -> R^D, stored node-major ([node][component]).
struct NodalField {
  Grid grid;
  int D = 1;
  std::vector<double> values;

  static NodalField zeros(const Grid& grid, int D);

  double& at(std::size_t node, int c) { return values[node * D + c]; }
  double at(std::size_t node, int c) const { return values[node * D + c]; }
  std::span<const double> node(std::size_t i) const {
    return {values.data() + i * D, std::size_t(D)};
  }
  bool all_finite() const;
};

/// One d x D matrix per cell, stored [cell][axis][component].
struct CellGradient {
  Grid grid;
  int D = 1;
  std::vector<double> values;

  static CellGradient zeros(const Grid& grid, int D);

  int width() const noexcept { return grid.d() * D; }
  double& at(std::size_t cell, int axis, int c) {
    return values[(cell * grid.d() + axis) * D + c];
  }
  double at(std::size_t cell, int axis, int c) const {
    return values[(cell * grid.d() + axis) * D + c];
  }
  std::span<const double> cell(std::size_t i) const {
    return {values.data() + i * width(), std::size_t(width())};
  }
  std::span<double> cell(std::size_t i) {
    return {values.data() + i * width(), std::size_t(width())};
  }
};

CellGradient grad(const NodalField& u);

/// Negative adjoint of grad: <div_adjoint(A), v> = -<A, grad v> with the
/// hx^d-weighted inner products on nodes and cells.
NodalField div_adjoint(const CellGradient& A);

/// Weighted inner products sum(a*b) * hx^d.
double inner(const NodalField& a, const NodalField& b);
double inner(const CellGradient& a, const CellGradient& b);

/// Cellwise F(grad u) and S(grad u).
CellGradient map_F(const CellGradient& A, double p);
CellGradient map_S(const CellGradient& A, const ModelSpec& model);

template <class Field>
struct Quotient {
  Field values;
  /// 1 where the shifted stencil stays inside the domain.
  std::vector<std::uint8_t> valid;
};

/// (A(x + h e_axis) - A(x)) / h with h = steps * hx. Axis is 0-based.
/// Throws DomainError when the shift leaves the domain from every site.
Quotient<CellGradient> difference_quotient(const CellGradient& A, int axis,
                                           int steps);
/// Nodal version; the zero boundary extension is used for the shifted value.
Quotient<NodalField> difference_quotient(const NodalField& u, int axis,
                                         int steps);

enum class WeightKind { SharpIndicator, SmoothBump };

/// Concentric sub-box G' = [margin, 1 - margin]^d with either a sharp
/// indicator or a polynomial bump prod (4t(1-t))^3 in the rescaled
/// coordinate t.
struct SubdomainMask {
  double margin = 0.125;
  WeightKind kind = WeightKind::SharpIndicator;

  void validate() const;
  double weight(std::span<const double> x) const;

  static SubdomainMask full() { return {0.0, WeightKind::SharpIndicator}; }
};

std::vector<double> cell_weights(const Grid& grid, const SubdomainMask& mask);
std::vector<double> node_weights(const Grid& grid, const SubdomainMask& mask);

/// sum over masked sites of w * |A|^q * hx^d, i.e. the q-th power of the
/// weighted L^q norm. |.| is the Frobenius norm per cell.
double norm_Lq(const CellGradient& A, double q, const SubdomainMask& mask);
double norm_Lq(const NodalField& u, double q, const SubdomainMask& mask);
/// Variant over precomputed site weights (zero weight = excluded).
double norm_Lq(std::span<const double> values, int width,
               std::span<const double> weights, double q, double volume);

/// Field snapshots: CSV with header x_1..x_d,u_1..u_D, one row per interior
/// node in flat order, or a little-endian binary image.
void write_snapshot_csv(std::ostream& os, const NodalField& u);
NodalField read_snapshot_csv(std::istream& is);
void write_snapshot_binary(std::ostream& os, const NodalField& u);
NodalField read_snapshot_binary(std::istream& is);

}  // namespace plapsde
