#include "plapsde/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "plapsde/errors.hpp"
#include "plapsde/rng.hpp"

namespace plapsde {

namespace {

constexpr double kPi = std::numbers::pi;

double sine_mode(std::span<const int> m, std::span<const double> x) {
  double v = 1.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    v *= std::numbers::sqrt2 * std::sin(kPi * m[i] * x[i]);
  }
  return v;
}

double sine_mode_grad_sq(std::span<const int> m, std::span<const double> x) {
  double total = 0.0;
  for (std::size_t j = 0; j < m.size(); ++j) {
    double v = std::numbers::sqrt2 * kPi * m[j] * std::cos(kPi * m[j] * x[j]);
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (i != j) {
        v *= std::numbers::sqrt2 * std::sin(kPi * m[i] * x[i]);
      }
    }
    total += v * v;
  }
  return total;
}

}  // namespace

std::string to_string(NoiseFamily family) {
  switch (family) {
    case NoiseFamily::Additive:
      return "additive";
    case NoiseFamily::DiagonalMultiplicative:
      return "diagonal_multiplicative";
    case NoiseFamily::SpatiallyModulated:
      return "spatially_modulated";
  }
  return "unknown";
}

NoiseFamily parse_noise_family(std::string_view name) {
  if (name == "additive") {
    return NoiseFamily::Additive;
  }
  if (name == "diagonal_multiplicative") {
    return NoiseFamily::DiagonalMultiplicative;
  }
  if (name == "spatially_modulated") {
    return NoiseFamily::SpatiallyModulated;
  }
  throw DomainError("unknown noise family '" + std::string(name) + "'");
}

void NoiseModel::validate() const {
  if (K < 0) {
    throw DomainError("NoiseModel: K must be >= 0");
  }
  if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) {
    throw DomainError("NoiseModel: amplitude must be finite and >= 0");
  }
  if (!(decay > 0.0) || !std::isfinite(decay)) {
    throw DomainError("NoiseModel: decay must be finite and > 0");
  }
  if (!(M > 0.0) || !std::isfinite(M)) {
    throw DomainError("NoiseModel: M must be finite and > 0");
  }
}

std::vector<double> NoiseModel::coefficients() const {
  std::vector<double> a(std::max(K, 0));
  for (int k = 1; k <= K; ++k) {
    a[k - 1] = amplitude * std::pow(double(k), -decay);
  }
  return a;
}

std::vector<std::vector<int>> sine_modes(int d, int K) {
  if (K <= 0) {
    return {};
  }
  // Every mode with |m|^2 <= B^2 lies in [1, B]^d; grow B until there are
  // at least K of them, then the first K by (|m|^2, lex) are exact.
  for (int B = 1;; B *= 2) {
    std::vector<std::vector<int>> modes;
    std::vector<int> m(d, 1);
    while (true) {
      int norm2 = 0;
      for (int v : m) {
        norm2 += v * v;
      }
      if (norm2 <= B * B) {
        modes.push_back(m);
      }
      int i = 0;
      while (i < d && ++m[i] > B) {
        m[i] = 1;
        ++i;
      }
      if (i == d) {
        break;
      }
    }
    if (static_cast<int>(modes.size()) >= K) {
      std::sort(modes.begin(), modes.end(), [](const auto& a, const auto& b) {
        int na = 0, nb = 0;
        for (int v : a) na += v * v;
        for (int v : b) nb += v * v;
        return na != nb ? na < nb : a < b;
      });
      modes.resize(K);
      return modes;
    }
  }
}

WienerIncrements sample_increments(int n_steps, const NoiseModel& model,
                                   double tau, std::uint64_t seed,
                                   std::uint64_t path_index, bool negate) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw DomainError("sample_increments: tau must be > 0");
  }
  if (n_steps < 1) {
    throw DomainError("sample_increments: n_steps must be >= 1");
  }
  model.validate();
  WienerIncrements w{n_steps, model.K, tau, {}};
  w.increments.resize(std::size_t(n_steps) * model.K);
  const double scale = (negate ? -1.0 : 1.0) * std::sqrt(tau);
  for (int n = 0; n < n_steps; ++n) {
    for (int k = 0; k < model.K; ++k) {
      w.increments[std::size_t(n) * model.K + k] =
          scale * keyed_normal(seed, path_index, std::uint32_t(n),
                               std::uint32_t(k));
    }
  }
  return w;
}

NoiseOperator::NoiseOperator(const NoiseModel& model, const Grid& grid, int D)
    : model_(model), grid_(grid), D_(D), a_(model.coefficients()) {
  model.validate();
  if (model.family != NoiseFamily::DiagonalMultiplicative) {
    const auto modes = sine_modes(grid.d(), model.K);
    basis_.resize(std::size_t(model.K) * grid.num_nodes());
    std::vector<double> x(grid.d());
    for (std::size_t node = 0; node < grid.num_nodes(); ++node) {
      grid.node_coords(node, x);
      for (int k = 0; k < model.K; ++k) {
        basis_[std::size_t(k) * grid.num_nodes() + node] =
            sine_mode(modes[k], x);
      }
    }
  }
}

void NoiseOperator::apply_into(const NodalField& u, std::span<const double> dW,
                               NodalField& out) const {
  if (!(u.grid == grid_) || u.D != D_) {
    throw DomainError("NoiseOperator::apply: field does not match operator");
  }
  if (dW.size() != a_.size()) {
    throw DomainError("NoiseOperator::apply: increment row has wrong length");
  }
  if (!(out.grid == grid_) || out.D != D_) {
    out = NodalField::zeros(grid_, D_);
  } else {
    std::fill(out.values.begin(), out.values.end(), 0.0);
  }
  const std::size_t nodes = grid_.num_nodes();
  const int K = model_.K;
  switch (model_.family) {
    case NoiseFamily::Additive:
      for (int k = 0; k < K; ++k) {
        const double w = a_[k] * dW[k];
        const double* phi = basis_.data() + std::size_t(k) * nodes;
        const int c = k % D_;
        for (std::size_t i = 0; i < nodes; ++i) {
          out.values[i * D_ + c] += w * phi[i];
        }
      }
      break;
    case NoiseFamily::DiagonalMultiplicative: {
      double w = 0.0;
      for (int k = 0; k < K; ++k) {
        w += a_[k] * dW[k];
      }
      for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = w * u.values[i];
      }
      break;
    }
    case NoiseFamily::SpatiallyModulated: {
      const double inv_m2 = 1.0 / (model_.M * model_.M);
      for (std::size_t i = 0; i < nodes; ++i) {
        double w = 0.0;
        for (int k = 0; k < K; ++k) {
          w += a_[k] * basis_[std::size_t(k) * nodes + i] * dW[k];
        }
        double r2 = 0.0;
        for (int c = 0; c < D_; ++c) {
          r2 += u.values[i * D_ + c] * u.values[i * D_ + c];
        }
        const double rho = w / std::sqrt(1.0 + r2 * inv_m2);
        for (int c = 0; c < D_; ++c) {
          out.values[i * D_ + c] = rho * u.values[i * D_ + c];
        }
      }
      break;
    }
  }
}

NodalField NoiseOperator::apply(const NodalField& u,
                                std::span<const double> dW) const {
  NodalField out = NodalField::zeros(grid_, D_);
  apply_into(u, dW, out);
  return out;
}

double NoiseOperator::hilbert_schmidt_sq(const NodalField& u) const {
  const std::size_t nodes = grid_.num_nodes();
  const int K = model_.K;
  double total = 0.0;
  switch (model_.family) {
    case NoiseFamily::Additive:
      for (int k = 0; k < K; ++k) {
        const double* phi = basis_.data() + std::size_t(k) * nodes;
        double s = 0.0;
        for (std::size_t i = 0; i < nodes; ++i) {
          s += phi[i] * phi[i];
        }
        total += a_[k] * a_[k] * s;
      }
      break;
    case NoiseFamily::DiagonalMultiplicative: {
      double a2 = 0.0;
      for (int k = 0; k < K; ++k) {
        a2 += a_[k] * a_[k];
      }
      double s = 0.0;
      for (double v : u.values) {
        s += v * v;
      }
      total = a2 * s;
      break;
    }
    case NoiseFamily::SpatiallyModulated: {
      const double inv_m2 = 1.0 / (model_.M * model_.M);
      for (std::size_t i = 0; i < nodes; ++i) {
        double w = 0.0;
        for (int k = 0; k < K; ++k) {
          const double g = a_[k] * basis_[std::size_t(k) * nodes + i];
          w += g * g;
        }
        double r2 = 0.0;
        for (int c = 0; c < D_; ++c) {
          r2 += u.values[i * D_ + c] * u.values[i * D_ + c];
        }
        total += w * r2 / (1.0 + r2 * inv_m2);
      }
      break;
    }
  }
  return total * grid_.cell_volume();
}

NodalField apply_Phi(const NodalField& u, std::span<const double> dW,
                     const NoiseModel& model) {
  return NoiseOperator(model, u.grid, u.D).apply(u, dW);
}

GrowthReport verify_growth(const NoiseModel& model, int d, int D,
                           int n_samples, std::vector<int> K_probe,
                           std::uint64_t seed, double tolerance) {
  if (d < 1 || D < 1) {
    throw DomainError("verify_growth: d and D must be >= 1");
  }
  if (n_samples < 1) {
    throw DomainError("verify_growth: n_samples must be >= 1");
  }
  if (K_probe.empty()) {
    K_probe.push_back(model.K);
  }
  std::sort(K_probe.begin(), K_probe.end());
  if (K_probe.front() < 0) {
    throw DomainError("verify_growth: K values must be >= 0");
  }
  const int K_max = K_probe.back();
  NoiseModel full = model;
  full.K = K_max;
  full.validate();
  const auto a = full.coefficients();
  const auto modes = sine_modes(d, K_max);

  GrowthReport report;
  report.family = model.family;
  report.d = d;
  report.D = D;
  report.tolerance = tolerance;
  report.probes.resize(K_probe.size());
  for (std::size_t j = 0; j < K_probe.size(); ++j) {
    report.probes[j].K = K_probe[j];
    double s = 0.0;
    for (int k = 0; k < K_probe[j]; ++k) {
      s += a[k] * a[k];
    }
    report.probes[j].coefficient_series = s;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> log_mag(-3.0, 3.0);
  std::normal_distribution<double> normal;
  std::vector<double> x(d);
  std::vector<double> xi(D);
  const double inv_m2 = 1.0 / (model.M * model.M);

  for (int sample = 0; sample < n_samples; ++sample) {
    for (double& v : x) {
      v = unit(rng);
    }
    double dir2 = 0.0;
    for (double& v : xi) {
      v = normal(rng);
      dir2 += v * v;
    }
    // The first sample uses xi = 0.
    const double mag = sample == 0 ? 0.0 : std::pow(10.0, log_mag(rng));
    for (double& v : xi) {
      v *= mag / std::sqrt(dir2);
    }
    const double xi2 = mag * mag;
    const double lin = 1.0 + xi2;
    // rho(xi) = w xi, D rho = w I - w^3/M^2 xi xi^T
    const double w = 1.0 / std::sqrt(1.0 + xi2 * inv_m2);
    const double rho2 = w * w * xi2;
    const double drho2 = w * w * D - 2.0 * std::pow(w, 4) * xi2 * inv_m2 +
                         std::pow(w, 6) * xi2 * xi2 * inv_m2 * inv_m2;

    double s_g = 0.0, s_dxi = 0.0, s_dx = 0.0;
    std::size_t probe = 0;
    for (int k = 0; k <= K_max; ++k) {
      while (probe < K_probe.size() && K_probe[probe] == k) {
        auto& pr = report.probes[probe];
        pr.sum_g = std::max(pr.sum_g, s_g);
        pr.sum_dxi = std::max(pr.sum_dxi, s_dxi);
        pr.sum_dx = std::max(pr.sum_dx, s_dx);
        ++probe;
      }
      if (k == K_max) {
        break;
      }
      const double a2 = a[k] * a[k];
      switch (model.family) {
        case NoiseFamily::Additive: {
          const double phi = sine_mode(modes[k], x);
          s_g += a2 * phi * phi / lin;
          s_dx += a2 * sine_mode_grad_sq(modes[k], x) / lin;
          break;
        }
        case NoiseFamily::DiagonalMultiplicative:
          s_g += a2 * xi2 / lin;
          s_dxi += a2 * D;
          break;
        case NoiseFamily::SpatiallyModulated: {
          const double phi = sine_mode(modes[k], x);
          s_g += a2 * phi * phi * rho2 / lin;
          s_dxi += a2 * phi * phi * drho2;
          s_dx += a2 * sine_mode_grad_sq(modes[k], x) * rho2 / lin;
          break;
        }
      }
    }
  }

  const auto& last = report.probes.back();
  report.constant = std::max({last.sum_g, last.sum_dxi, last.sum_dx});
  if (report.probes.size() >= 2) {
    const auto& prev = report.probes[report.probes.size() - 2];
    auto diverging = [&](double lo, double hi) {
      return hi > 0.0 && (hi - lo) > tolerance * hi;
    };
    if (diverging(prev.sum_g, last.sum_g)) {
      report.pass = false;
      report.failed_condition = "g";
    } else if (diverging(prev.sum_dxi, last.sum_dxi)) {
      report.pass = false;
      report.failed_condition = "grad_xi";
    } else if (diverging(prev.sum_dx, last.sum_dx)) {
      report.pass = false;
      report.failed_condition = "grad_x";
    }
  }
  return report;
}

}  // namespace plapsde
