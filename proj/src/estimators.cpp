#include "plapsde/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "plapsde/errors.hpp"

namespace plapsde {

std::string format_q(double q) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", q);
  return buf;
}

std::vector<std::string> FunctionalSpec::ids() const {
  std::vector<std::string> out;
  if (energy) {
    out.insert(out.end(), {"sup_u2", "int_gradp", "eps_int_grad2"});
  }
  if (natural) {
    out.insert(out.end(), {"sup_grad2", "int_gradF2"});
  }
  for (double q : integrability_q) {
    out.push_back("higher_integrability_q" + format_q(q));
  }
  for (double q : moment_q) {
    out.push_back("moment_energy_q" + format_q(q));
    out.push_back("moment_sup_uq_q" + format_q(q));
  }
  return out;
}

PathAccumulator::PathAccumulator(FunctionalSpec spec, const ModelSpec& model,
                                 const Grid& grid, double tau)
    : spec_(std::move(spec)),
      model_(model),
      tau_(tau),
      cell_w_(cell_weights(grid, spec_.mask)),
      node_w_(node_weights(grid, spec_.mask)),
      full_cells_(grid.num_cells(), 1.0),
      full_nodes_(grid.num_nodes(), 1.0),
      int_gradq_(spec_.integrability_q.size(), 0.0),
      sup_uq_(spec_.moment_q.size(), 0.0) {
  if (!(tau > 0.0)) {
    throw DomainError("PathAccumulator: tau must be > 0");
  }
  if ((spec_.natural || !spec_.integrability_q.empty()) &&
      !(spec_.mask.margin > 0.0)) {
    throw DomainError(
        "PathAccumulator: interior functionals need a mask margin > 0");
  }
  for (double q : spec_.integrability_q) {
    if (!(q >= 1.0)) {
      throw DomainError("PathAccumulator: integrability q must be >= 1");
    }
  }
  for (double q : spec_.moment_q) {
    if (!(q >= 1.0)) {
      throw DomainError("PathAccumulator: moment q must be >= 1");
    }
  }
}

void PathAccumulator::observe(int step, const NodalField& u) {
  if (step != observed_) {
    throw DomainError("PathAccumulator: steps must be observed in order");
  }
  ++observed_;
  const Grid& g = u.grid;
  const double vol = g.cell_volume();
  const CellGradient G = grad(u);
  const bool interior_step = step >= 1;

  if (spec_.energy || !spec_.moment_q.empty()) {
    sup_u2_ = std::max(sup_u2_, norm_Lq(u.values, u.D, full_nodes_, 2.0, vol));
    if (interior_step) {
      const double gp = norm_Lq(G.values, G.width(), full_cells_, model_.p, vol);
      int_gradp_ += tau_ * gp;
      int_grad2_ += tau_ * (model_.p == 2.0
                                ? gp
                                : norm_Lq(G.values, G.width(), full_cells_,
                                          2.0, vol));
    }
  }
  if (spec_.natural) {
    sup_grad2_ =
        std::max(sup_grad2_, norm_Lq(G.values, G.width(), cell_w_, 2.0, vol));
    if (interior_step) {
      const CellGradient F = map_F(G, model_.p);
      std::vector<double> w(cell_w_.size());
      double total = 0.0;
      for (int axis = 0; axis < g.d(); ++axis) {
        const auto dq = difference_quotient(F, axis, 1);
        for (std::size_t c = 0; c < w.size(); ++c) {
          w[c] = dq.valid[c] ? cell_w_[c] : 0.0;
        }
        total += norm_Lq(dq.values.values, F.width(), w, 2.0, vol);
      }
      int_gradF2_ += tau_ * total;
    }
  }
  if (interior_step) {
    for (std::size_t i = 0; i < spec_.integrability_q.size(); ++i) {
      int_gradq_[i] += tau_ * norm_Lq(G.values, G.width(), cell_w_,
                                      spec_.integrability_q[i], vol);
    }
  }
  for (std::size_t i = 0; i < spec_.moment_q.size(); ++i) {
    sup_uq_[i] = std::max(
        sup_uq_[i], norm_Lq(u.values, u.D, full_nodes_, spec_.moment_q[i], vol));
  }
}

FunctionalValues PathAccumulator::values() const {
  FunctionalValues out;
  if (spec_.energy) {
    out.emplace_back("sup_u2", sup_u2_);
    out.emplace_back("int_gradp", int_gradp_);
    out.emplace_back("eps_int_grad2", model_.epsilon * int_grad2_);
  }
  if (spec_.natural) {
    out.emplace_back("sup_grad2", sup_grad2_);
    out.emplace_back("int_gradF2", int_gradF2_);
  }
  for (std::size_t i = 0; i < spec_.integrability_q.size(); ++i) {
    out.emplace_back(
        "higher_integrability_q" + format_q(spec_.integrability_q[i]),
        int_gradq_[i]);
  }
  for (std::size_t i = 0; i < spec_.moment_q.size(); ++i) {
    const double q = spec_.moment_q[i];
    out.emplace_back("moment_energy_q" + format_q(q),
                     std::pow(sup_u2_ + int_gradp_, q));
    out.emplace_back("moment_sup_uq_q" + format_q(q), sup_uq_[i]);
  }
  return out;
}

namespace {

FunctionalValues replay(const std::vector<NodalField>& states,
                        const ModelSpec& model, double tau,
                        const FunctionalSpec& spec) {
  if (states.empty()) {
    throw DomainError("stored trajectory is empty");
  }
  PathAccumulator acc(spec, model, states.front().grid, tau);
  for (std::size_t n = 0; n < states.size(); ++n) {
    acc.observe(static_cast<int>(n), states[n]);
  }
  return acc.values();
}

double lookup(const FunctionalValues& v, const std::string& id) {
  for (const auto& [key, value] : v) {
    if (key == id) {
      return value;
    }
  }
  throw DomainError("functional '" + id + "' not present");
}

}  // namespace

EnergyTriple energy_triple(const std::vector<NodalField>& states,
                           const ModelSpec& model, double tau) {
  FunctionalSpec spec;
  spec.mask = SubdomainMask::full();
  const auto v = replay(states, model, tau, spec);
  return {lookup(v, "sup_u2"), lookup(v, "int_gradp"),
          lookup(v, "eps_int_grad2")};
}

NaturalRegularity natural_regularity(const std::vector<NodalField>& states,
                                     const ModelSpec& model, double tau,
                                     const SubdomainMask& mask) {
  FunctionalSpec spec;
  spec.energy = false;
  spec.natural = true;
  spec.mask = mask;
  const auto v = replay(states, model, tau, spec);
  return {lookup(v, "sup_grad2"), lookup(v, "int_gradF2")};
}

double higher_integrability(const std::vector<NodalField>& states,
                            const ModelSpec& model, double tau,
                            const SubdomainMask& mask, double q) {
  FunctionalSpec spec;
  spec.energy = false;
  spec.integrability_q = {q};
  spec.mask = mask;
  return replay(states, model, tau, spec).front().second;
}

HigherMoments higher_moments(const std::vector<NodalField>& states,
                             const ModelSpec& model, double tau, double q) {
  FunctionalSpec spec;
  spec.energy = false;
  spec.moment_q = {q};
  spec.mask = SubdomainMask::full();
  const auto v = replay(states, model, tau, spec);
  return {v[0].second, v[1].second};
}

std::vector<std::string> integrability_warnings(const ModelSpec& model) {
  std::vector<std::string> out;
  if (model.family != Family::Uhlenbeck) {
    out.push_back(
        "higher integrability is established for Uhlenbeck structure only");
  }
  if (!(model.p > 2.0 - 4.0 / model.d)) {
    out.push_back("p <= 2 - 4/d: the exponent ladder does not apply");
  }
  return out;
}

double moser_omega(double alpha, double p, int d) {
  return (p + alpha) * (1.0 + (2.0 / d) * (alpha + 2.0) / (alpha + p));
}

MoserLadder moser_ladder(double p, int d, int k_max) {
  if (d < 1) {
    throw DomainError("moser_ladder: d must be >= 1");
  }
  if (k_max < 0) {
    throw DomainError("moser_ladder: k_max must be >= 0");
  }
  if (!(p > 2.0 - 4.0 / d)) {
    throw DomainError(
        "moser_ladder: requires p > 2 - 4/d (higher integrability "
        "hypothesis); got p = " +
        format_q(p) + ", d = " + std::to_string(d));
  }
  MoserLadder ladder{p, d, {0.0}, {p}};
  for (int k = 0; k < k_max; ++k) {
    const double next = moser_omega(ladder.alphas.back(), p, d) - p;
    ladder.alphas.push_back(next);
    ladder.qs.push_back(p + next);
  }
  return ladder;
}

const Aggregate& FunctionalReport::at(const std::string& id) const {
  for (const auto& a : aggregates) {
    if (a.id == id) {
      return a;
    }
  }
  throw DomainError("FunctionalReport: no aggregate '" + id + "'");
}

FunctionalReport aggregate(std::vector<PathRecord> paths, bool antithetic) {
  if (paths.empty()) {
    throw DomainError("aggregate: need at least one path");
  }
  std::sort(paths.begin(), paths.end(), [](const auto& a, const auto& b) {
    return a.path_index < b.path_index;
  });
  const auto& keys = paths.front().values;
  for (const auto& p : paths) {
    if (p.values.size() != keys.size()) {
      throw DomainError("aggregate: mismatched functional keys");
    }
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (p.values[i].first != keys[i].first) {
        throw DomainError("aggregate: mismatched functional keys");
      }
    }
  }

  // Samples per functional in path order.
  std::vector<std::vector<double>> samples(keys.size());
  if (antithetic) {
    for (std::size_t j = 0; j < paths.size(); ++j) {
      const auto idx = paths[j].path_index;
      if (idx % 2 == 0 && j + 1 < paths.size() &&
          paths[j + 1].path_index == idx + 1) {
        for (std::size_t i = 0; i < keys.size(); ++i) {
          samples[i].push_back(
              0.5 * (paths[j].values[i].second + paths[j + 1].values[i].second));
        }
        ++j;
      } else {
        for (std::size_t i = 0; i < keys.size(); ++i) {
          samples[i].push_back(paths[j].values[i].second);
        }
      }
    }
  } else {
    for (const auto& p : paths) {
      for (std::size_t i = 0; i < keys.size(); ++i) {
        samples[i].push_back(p.values[i].second);
      }
    }
  }

  FunctionalReport report;
  const int n = static_cast<int>(samples.empty() ? 0 : samples[0].size());
  double t_quantile = std::numeric_limits<double>::quiet_NaN();
  if (n >= 2) {
    boost::math::students_t dist(n - 1);
    t_quantile = boost::math::quantile(dist, 0.975);
  }
  for (std::size_t i = 0; i < keys.size(); ++i) {
    Aggregate a;
    a.id = keys[i].first;
    a.n_paths = n;
    double sum = 0.0;
    for (double v : samples[i]) {
      sum += v;
    }
    a.mean = sum / n;
    if (n >= 2) {
      double ss = 0.0;
      for (double v : samples[i]) {
        ss += (v - a.mean) * (v - a.mean);
      }
      a.var = ss / (n - 1);
      a.se = std::sqrt(a.var / n);
      a.ci_lo = a.mean - t_quantile * a.se;
      a.ci_hi = a.mean + t_quantile * a.se;
      a.variance_defined = true;
    } else {
      a.var = std::numeric_limits<double>::quiet_NaN();
      a.se = std::numeric_limits<double>::quiet_NaN();
      a.ci_lo = a.ci_hi = a.mean;
    }
    report.aggregates.push_back(a);
  }
  report.paths = std::move(paths);
  return report;
}

}  // namespace plapsde
