#include "plapsde/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "plapsde/errors.hpp"
#include "plapsde/quadrature.hpp"

namespace plapsde {

namespace {

std::size_t ipow(std::size_t base, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) {
    r *= base;
  }
  return r;
}

void require_same_grid(const Grid& a, const Grid& b, const char* where) {
  if (!(a == b)) {
    throw DomainError(std::string(where) + ": grid mismatch");
  }
}

}  // namespace

Grid::Grid(int d, int n) : d_(d), n_(n) {
  if (d < 1 || d > 3) {
    throw DomainError("Grid: d must be in [1, 3]");
  }
  if (n < 2) {
    throw DomainError("Grid: need at least 2 interior nodes per axis");
  }
  hx_ = 1.0 / (n + 1);
  if (std::abs(hx_ * (n + 1) - 1.0) > 2.0 * std::numeric_limits<double>::epsilon()) {
    throw DomainError("Grid: mesh width not representable");
  }
  volume_ = std::pow(hx_, d);
  num_nodes_ = ipow(std::size_t(n), d);
  num_cells_ = ipow(std::size_t(n + 1), d);

  auto topo = std::make_shared<Topology>();
  topo->cell_nodes.resize(num_cells_ * (d + 1));
  std::vector<int> m(d, 0);
  for (std::size_t cell = 0; cell < num_cells_; ++cell) {
    // m in extended coordinates; interior iff 1 <= m_i <= n.
    auto interior_index = [&](int shift_axis) -> std::int32_t {
      std::int64_t idx = 0;
      std::int64_t stride = 1;
      for (int i = 0; i < d; ++i) {
        const int mi = m[i] + (i == shift_axis ? 1 : 0);
        if (mi < 1 || mi > n) {
          return -1;
        }
        idx += (mi - 1) * stride;
        stride *= n;
      }
      return static_cast<std::int32_t>(idx);
    };
    std::int32_t* row = &topo->cell_nodes[cell * (d + 1)];
    row[0] = interior_index(-1);
    for (int g = 0; g < d; ++g) {
      row[1 + g] = interior_index(g);
    }
    for (int i = 0; i < d; ++i) {
      if (++m[i] <= n) {
        break;
      }
      m[i] = 0;
    }
  }
  topology_ = std::move(topo);
}

std::int64_t Grid::shifted_cell(std::size_t cell, int axis, int steps) const {
  const std::size_t stride = ipow(std::size_t(n_ + 1), axis);
  const int m = static_cast<int>((cell / stride) % std::size_t(n_ + 1));
  const int shifted = m + steps;
  if (shifted < 0 || shifted > n_) {
    return -1;
  }
  return static_cast<std::int64_t>(cell) +
         static_cast<std::int64_t>(steps) * static_cast<std::int64_t>(stride);
}

std::vector<int> Grid::cell_index(std::size_t cell) const {
  std::vector<int> m(d_);
  for (int i = 0; i < d_; ++i) {
    m[i] = static_cast<int>(cell % std::size_t(n_ + 1));
    cell /= std::size_t(n_ + 1);
  }
  return m;
}

std::vector<int> Grid::node_index(std::size_t node) const {
  std::vector<int> q(d_);
  for (int i = 0; i < d_; ++i) {
    q[i] = static_cast<int>(node % std::size_t(n_));
    node /= std::size_t(n_);
  }
  return q;
}

void Grid::node_coords(std::size_t node, std::span<double> x) const {
  for (int i = 0; i < d_; ++i) {
    x[i] = (static_cast<double>(node % std::size_t(n_)) + 1.0) * hx_;
    node /= std::size_t(n_);
  }
}

void Grid::cell_center(std::size_t cell, std::span<double> x) const {
  for (int i = 0; i < d_; ++i) {
    x[i] = (static_cast<double>(cell % std::size_t(n_ + 1)) + 0.5) * hx_;
    cell /= std::size_t(n_ + 1);
  }
}

NodalField NodalField::zeros(const Grid& grid, int D) {
  if (D < 1) {
    throw DomainError("NodalField: D must be >= 1");
  }
  return {grid, D, std::vector<double>(grid.num_nodes() * D, 0.0)};
}

bool NodalField::all_finite() const {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

CellGradient CellGradient::zeros(const Grid& grid, int D) {
  if (D < 1) {
    throw DomainError("CellGradient: D must be >= 1");
  }
  return {grid, D, std::vector<double>(grid.num_cells() * grid.d() * D, 0.0)};
}

CellGradient grad(const NodalField& u) {
  const Grid& g = u.grid;
  const int d = g.d();
  const int D = u.D;
  const double inv_h = 1.0 / g.hx();
  CellGradient out = CellGradient::zeros(g, D);
  for (std::size_t cell = 0; cell < g.num_cells(); ++cell) {
    const std::int32_t q0 = g.corner_node(cell);
    double* row = out.values.data() + cell * d * D;
    for (int a = 0; a < d; ++a) {
      const std::int32_t q1 = g.forward_node(cell, a);
      for (int c = 0; c < D; ++c) {
        const double v1 = q1 >= 0 ? u.values[q1 * D + c] : 0.0;
        const double v0 = q0 >= 0 ? u.values[q0 * D + c] : 0.0;
        row[a * D + c] = (v1 - v0) * inv_h;
      }
    }
  }
  return out;
}

NodalField div_adjoint(const CellGradient& A) {
  const Grid& g = A.grid;
  const int d = g.d();
  const int D = A.D;
  const double inv_h = 1.0 / g.hx();
  NodalField out = NodalField::zeros(g, D);
  for (std::size_t cell = 0; cell < g.num_cells(); ++cell) {
    const std::int32_t q0 = g.corner_node(cell);
    const double* row = A.values.data() + cell * d * D;
    for (int a = 0; a < d; ++a) {
      const std::int32_t q1 = g.forward_node(cell, a);
      for (int c = 0; c < D; ++c) {
        const double v = row[a * D + c] * inv_h;
        if (q0 >= 0) {
          out.values[q0 * D + c] += v;
        }
        if (q1 >= 0) {
          out.values[q1 * D + c] -= v;
        }
      }
    }
  }
  return out;
}

double inner(const NodalField& a, const NodalField& b) {
  require_same_grid(a.grid, b.grid, "inner");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    s += a.values[i] * b.values[i];
  }
  return s * a.grid.cell_volume();
}

double inner(const CellGradient& a, const CellGradient& b) {
  require_same_grid(a.grid, b.grid, "inner");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    s += a.values[i] * b.values[i];
  }
  return s * a.grid.cell_volume();
}

namespace {

template <class Scale>
CellGradient radial_map(const CellGradient& A, Scale scale) {
  CellGradient out = A;
  const int w = A.width();
  for (std::size_t cell = 0; cell < A.grid.num_cells(); ++cell) {
    double* row = out.values.data() + cell * w;
    double s2 = 0.0;
    for (int i = 0; i < w; ++i) {
      s2 += row[i] * row[i];
    }
    const double f = scale(std::sqrt(s2));
    for (int i = 0; i < w; ++i) {
      row[i] *= f;
    }
  }
  return out;
}

}  // namespace

CellGradient map_F(const CellGradient& A, double p) {
  if (!(p > 1.0)) {
    throw DomainError("map_F: p must be > 1");
  }
  const double e = 0.5 * (p - 2.0);
  return radial_map(A, [e](double s) { return quad::pow1p(s, e); });
}

CellGradient map_S(const CellGradient& A, const ModelSpec& model) {
  const Constitutive law(model);
  return radial_map(A, [&law](double s) { return law.nu(s); });
}

Quotient<CellGradient> difference_quotient(const CellGradient& A, int axis,
                                           int steps) {
  const Grid& g = A.grid;
  if (axis < 0 || axis >= g.d()) {
    throw DomainError("difference_quotient: axis out of range");
  }
  if (steps < 1 || steps > g.n()) {
    throw DomainError("difference_quotient: shift leaves the domain");
  }
  const int w = A.width();
  const double inv_h = 1.0 / (steps * g.hx());
  Quotient<CellGradient> out{CellGradient::zeros(g, A.D),
                             std::vector<std::uint8_t>(g.num_cells(), 0)};
  for (std::size_t cell = 0; cell < g.num_cells(); ++cell) {
    const std::int64_t other = g.shifted_cell(cell, axis, steps);
    if (other < 0) {
      continue;
    }
    out.valid[cell] = 1;
    const double* a0 = A.values.data() + cell * w;
    const double* a1 = A.values.data() + other * w;
    double* o = out.values.values.data() + cell * w;
    for (int i = 0; i < w; ++i) {
      o[i] = (a1[i] - a0[i]) * inv_h;
    }
  }
  return out;
}

Quotient<NodalField> difference_quotient(const NodalField& u, int axis,
                                         int steps) {
  const Grid& g = u.grid;
  if (axis < 0 || axis >= g.d()) {
    throw DomainError("difference_quotient: axis out of range");
  }
  if (steps < 1 || steps > g.n()) {
    throw DomainError("difference_quotient: shift leaves the domain");
  }
  const int D = u.D;
  const int n = g.n();
  const double inv_h = 1.0 / (steps * g.hx());
  std::size_t stride = 1;
  for (int i = 0; i < axis; ++i) {
    stride *= std::size_t(n);
  }
  Quotient<NodalField> out{NodalField::zeros(g, D),
                           std::vector<std::uint8_t>(g.num_nodes(), 0)};
  for (std::size_t node = 0; node < g.num_nodes(); ++node) {
    const int q = static_cast<int>((node / stride) % std::size_t(n));
    // shifted extended coordinate (q+1) + steps must not exceed n+1
    const int shifted = q + steps;
    if (shifted > n) {
      continue;
    }
    out.valid[node] = 1;
    for (int c = 0; c < D; ++c) {
      const double v1 =
          shifted < n ? u.values[(node + steps * stride) * D + c] : 0.0;
      out.values.values[node * D + c] = (v1 - u.values[node * D + c]) * inv_h;
    }
  }
  return out;
}

void SubdomainMask::validate() const {
  if (!(margin >= 0.0 && margin < 0.5)) {
    throw DomainError("SubdomainMask: margin must lie in [0, 1/2)");
  }
}

double SubdomainMask::weight(std::span<const double> x) const {
  constexpr double kSlack = 1e-12;
  const double width = 1.0 - 2.0 * margin;
  double w = 1.0;
  for (double xi : x) {
    if (xi < margin - kSlack || xi > 1.0 - margin + kSlack) {
      return 0.0;
    }
    if (kind == WeightKind::SmoothBump) {
      const double t = std::clamp((xi - margin) / width, 0.0, 1.0);
      const double b = 4.0 * t * (1.0 - t);
      w *= b * b * b;
    }
  }
  return w;
}

std::vector<double> cell_weights(const Grid& grid, const SubdomainMask& mask) {
  mask.validate();
  std::vector<double> w(grid.num_cells());
  std::vector<double> x(grid.d());
  for (std::size_t c = 0; c < grid.num_cells(); ++c) {
    grid.cell_center(c, x);
    w[c] = mask.weight(x);
  }
  return w;
}

std::vector<double> node_weights(const Grid& grid, const SubdomainMask& mask) {
  mask.validate();
  std::vector<double> w(grid.num_nodes());
  std::vector<double> x(grid.d());
  for (std::size_t i = 0; i < grid.num_nodes(); ++i) {
    grid.node_coords(i, x);
    w[i] = mask.weight(x);
  }
  return w;
}

double norm_Lq(std::span<const double> values, int width,
               std::span<const double> weights, double q, double volume) {
  if (!(q >= 1.0)) {
    throw DomainError("norm_Lq: q must be >= 1");
  }
  if (values.size() != weights.size() * std::size_t(width)) {
    throw DomainError("norm_Lq: weights do not match the field");
  }
  const double half_q = 0.5 * q;
  double s = 0.0;
  for (std::size_t site = 0; site < weights.size(); ++site) {
    if (weights[site] == 0.0) {
      continue;
    }
    double a2 = 0.0;
    for (int i = 0; i < width; ++i) {
      const double v = values[site * width + i];
      a2 += v * v;
    }
    if (a2 > 0.0) {
      s += weights[site] * (q == 2.0 ? a2 : std::pow(a2, half_q));
    }
  }
  return s * volume;
}

double norm_Lq(const CellGradient& A, double q, const SubdomainMask& mask) {
  const auto w = cell_weights(A.grid, mask);
  return norm_Lq(A.values, A.width(), w, q, A.grid.cell_volume());
}

double norm_Lq(const NodalField& u, double q, const SubdomainMask& mask) {
  const auto w = node_weights(u.grid, mask);
  return norm_Lq(u.values, u.D, w, q, u.grid.cell_volume());
}

void write_snapshot_csv(std::ostream& os, const NodalField& u) {
  const int d = u.grid.d();
  for (int i = 0; i < d; ++i) {
    os << (i ? "," : "") << "x_" << (i + 1);
  }
  for (int c = 0; c < u.D; ++c) {
    os << ",u_" << (c + 1);
  }
  os << '\n';
  std::vector<double> x(d);
  char buf[32];
  for (std::size_t node = 0; node < u.grid.num_nodes(); ++node) {
    u.grid.node_coords(node, x);
    for (int i = 0; i < d; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", x[i]);
      os << (i ? "," : "") << buf;
    }
    for (int c = 0; c < u.D; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", u.at(node, c));
      os << ',' << buf;
    }
    os << '\n';
  }
}

NodalField read_snapshot_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) {
    throw DomainError("snapshot: empty input");
  }
  int d = 0;
  int D = 0;
  {
    std::stringstream header(line);
    std::string col;
    while (std::getline(header, col, ',')) {
      if (col.rfind("x_", 0) == 0) {
        ++d;
      } else if (col.rfind("u_", 0) == 0) {
        ++D;
      } else {
        throw DomainError("snapshot: unexpected column '" + col + "'");
      }
    }
  }
  if (d < 1 || D < 1) {
    throw DomainError("snapshot: header needs x_ and u_ columns");
  }
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) {
      continue;
    }
    std::stringstream row(line);
    std::string cell;
    int col = 0;
    while (std::getline(row, cell, ',')) {
      if (col >= d) {
        values.push_back(std::stod(cell));
      }
      ++col;
    }
    if (col != d + D) {
      throw DomainError("snapshot: malformed row " + std::to_string(rows + 1));
    }
    ++rows;
  }
  const int n = static_cast<int>(std::lround(std::pow(double(rows), 1.0 / d)));
  if (ipow(std::size_t(n), d) != rows) {
    throw DomainError("snapshot: row count is not n^d");
  }
  return {Grid(d, n), D, std::move(values)};
}

namespace {
constexpr char kMagic[8] = {'P', 'L', 'S', 'N', 'A', 'P', '0', '1'};
}

void write_snapshot_binary(std::ostream& os, const NodalField& u) {
  os.write(kMagic, sizeof kMagic);
  const std::int32_t header[3] = {u.grid.d(), u.grid.n(), u.D};
  os.write(reinterpret_cast<const char*>(header), sizeof header);
  os.write(reinterpret_cast<const char*>(u.values.data()),
           std::streamsize(u.values.size() * sizeof(double)));
}

NodalField read_snapshot_binary(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw DomainError("snapshot: bad magic");
  }
  std::int32_t header[3];
  is.read(reinterpret_cast<char*>(header), sizeof header);
  if (!is) {
    throw DomainError("snapshot: truncated header");
  }
  NodalField u = NodalField::zeros(Grid(header[0], header[1]), header[2]);
  is.read(reinterpret_cast<char*>(u.values.data()),
          std::streamsize(u.values.size() * sizeof(double)));
  if (!is) {
    throw DomainError("snapshot: truncated payload");
  }
  return u;
}

}  // namespace plapsde
