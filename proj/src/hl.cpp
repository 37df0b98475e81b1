#include "plapsde/hl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "plapsde/errors.hpp"
#include "plapsde/quadrature.hpp"

namespace plapsde::hl {

double eval_h(double s, double alpha) {
  if (!(s >= 0.0)) {
    throw DomainError("eval_h: s must be >= 0");
  }
  if (!(alpha >= 0.0)) {
    throw DomainError("eval_h: alpha must be >= 0");
  }
  return quad::power_moment_integral(alpha, 1, s);
}

CutoffValue eval_psi(double theta, double L, double plateau) {
  if (!(L >= 1.0)) {
    throw DomainError("eval_psi: L must be >= 1");
  }
  const double a = plateau * L;
  const double b = 2.0 * L;
  if (theta <= a) {
    return {1.0, 0.0};
  }
  if (theta >= b) {
    return {0.0, 0.0};
  }
  const double w = b - a;
  const double r = (theta - a) / w;
  return {1.0 - 3.0 * r * r + 2.0 * r * r * r, (-6.0 * r + 6.0 * r * r) / w};
}

void HLFamily::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw DomainError("HLFamily: alpha must be >= 0");
  }
  if (!(L >= 1.0) || !std::isfinite(L)) {
    throw DomainError("HLFamily: L must be >= 1");
  }
  if (!(quad_tol > 0.0)) {
    throw DomainError("HLFamily: quad_tol must be > 0");
  }
  if (!(plateau > 0.0 && plateau < 2.0)) {
    throw DomainError("HLFamily: plateau must lie in (0, 2)");
  }
}

HLEvaluator::HLEvaluator(const HLFamily& family) : fam_(family) {
  fam_.validate();
  a_ = fam_.plateau * fam_.L;
  b_ = 2.0 * fam_.L;
  g_b_ = g_L_transition(b_);
  h_b_ = h_L_transition(b_);
}

double HLEvaluator::g(double t) const { return quad::pow1p(t, fam_.alpha); }

double HLEvaluator::dg(double t) const {
  if (fam_.alpha == 0.0) {
    return 0.0;
  }
  return fam_.alpha * quad::pow1p(t, fam_.alpha - 1.0);
}

double HLEvaluator::g_L_transition(double t) const {
  const double tol = fam_.quad_tol * std::max(1.0, g(t));
  const double integral = quad::adaptive_simpson(
      [this](double th) {
        return eval_psi(th, fam_.L, fam_.plateau).value * dg(th);
      },
      a_, t, tol);
  return g(a_) + integral;
}

double HLEvaluator::h_L_transition(double s) const {
  // int_a^s t g_L(t) dt with g_L(t) = g(a) + int_a^t psi g' (Fubini).
  const double s2 = s * s;
  const double tol = fam_.quad_tol * std::max(1.0, eval_h(s, fam_.alpha));
  const double integral = quad::adaptive_simpson(
      [&](double th) {
        return eval_psi(th, fam_.L, fam_.plateau).value * dg(th) * 0.5 *
               (s2 - th * th);
      },
      a_, s, tol);
  return eval_h(a_, fam_.alpha) + 0.5 * g(a_) * (s2 - a_ * a_) + integral;
}

HLValue HLEvaluator::operator()(double s) const {
  if (!(s >= 0.0) || !std::isfinite(s)) {
    throw DomainError("eval_hL: s must be finite and >= 0");
  }
  HLValue v;
  if (s <= a_) {
    v.g = g(s);
    v.h = eval_h(s, fam_.alpha);
    v.d1 = s * v.g;
    v.d2 = v.g + s * dg(s);
  } else if (s < b_) {
    v.g = g_L_transition(s);
    v.h = h_L_transition(s);
    v.d1 = s * v.g;
    v.d2 = v.g + s * eval_psi(s, fam_.L, fam_.plateau).value * dg(s);
  } else {
    v.g = g_b_;
    v.h = h_b_ + 0.5 * g_b_ * (s * s - b_ * b_);
    v.d1 = s * v.g;
    v.d2 = v.g;
  }
  return v;
}

HLValue eval_hL(double s, const HLFamily& family) {
  return HLEvaluator(family)(s);
}

namespace {

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> s(n);
  const double llo = std::log(lo);
  const double lhi = std::log(hi);
  for (int i = 0; i < n; ++i) {
    s[i] = std::exp(llo + (lhi - llo) * i / std::max(1, n - 1));
  }
  s.back() = hi;
  return s;
}

struct ItemC {
  bool lower_ok = true;
  double constant = 0.0;
  double worst_s = 0.0;
  double violation_s = 0.0;
};

ItemC measure_item_c(const HLEvaluator& ev, const std::vector<double>& grid,
                     double slack) {
  ItemC out;
  const double alpha = ev.family().alpha;
  for (double s : grid) {
    const HLValue v = ev(s);
    const double ratio_lower = v.d1 / s;
    if (v.d2 < ratio_lower * (1.0 - slack) - slack && out.lower_ok) {
      out.lower_ok = false;
      out.violation_s = s;
    }
    const double r1 = v.d2 / (ratio_lower * (alpha + 1.0));
    const double r2 = v.d1 * s / v.h;
    const double r = std::max(r1, r2);
    if (r > out.constant) {
      out.constant = r;
      out.worst_s = s;
    }
  }
  return out;
}

}  // namespace

LemmaReport certify_lemma(const HLFamily& family, const SamplingSpec& sampling) {
  family.validate();
  if (sampling.n_grid < 2 || sampling.n_pairs < 0) {
    throw DomainError("certify_lemma: bad sampling spec");
  }
  const double slack = sampling.slack;
  const double L = family.L;
  const double alpha = family.alpha;
  const HLEvaluator ev(family);
  const auto grid = log_grid(sampling.s_min_rel * L, 4.0 * L, sampling.n_grid);

  LemmaReport rep;
  rep.family = family;

  // (a) identity below 3L/2 (the required plateau, independent of the
  // cutoff actually used), C^2 at the knots, convergence along the sweep.
  {
    ItemResult& it = rep.a;
    for (double s : grid) {
      if (s > 1.5 * L) {
        break;
      }
      const double h = eval_h(s, alpha);
      const double err = std::abs(ev(s).h - h) / std::max(1.0, h);
      if (err > it.constant) {
        it.constant = err;
        it.worst_s = s;
        it.worst_L = L;
      }
    }
    if (it.constant > slack) {
      it.pass = false;
      it.detail = "h_L differs from h below 3L/2";
    }
    for (double knot : {family.plateau * L, 2.0 * L}) {
      const double left = ev(knot * (1.0 - 1e-10)).d2;
      const double right = ev(knot * (1.0 + 1e-10)).d2;
      if (std::abs(left - right) > 1e-6 * std::max(1.0, std::abs(left))) {
        it.pass = false;
        it.worst_s = knot;
        it.detail = "h_L'' jumps at a knot";
      }
    }
    double previous = std::numeric_limits<double>::infinity();
    double last = 0.0;
    for (int j = 0; j < 4; ++j) {
      HLFamily fj = family;
      fj.L = L * std::ldexp(1.0, j);
      const HLEvaluator evj(fj);
      double err = 0.0;
      for (double s : grid) {
        const double h = eval_h(s, alpha);
        err = std::max(err, std::abs(evj(s).h - h) / std::max(1.0, h));
      }
      if (err > previous + slack) {
        it.pass = false;
        it.detail = "h_L - h does not decrease along the L sweep";
      }
      previous = err;
      last = err;
    }
    if (last > slack && it.pass) {
      it.pass = false;
      it.detail = "h_L does not reach h on the sampled range";
    }
  }

  // (b) h_L <= h, g_L <= g, sup h_L'' finite.
  {
    ItemResult& it = rep.b;
    it.worst_L = L;
    for (double s : grid) {
      const HLValue v = ev(s);
      const double h = eval_h(s, alpha);
      const double g = ev.g(s);
      if (v.h > h * (1.0 + slack) + slack || v.g > g * (1.0 + slack) + slack) {
        if (it.pass) {
          it.pass = false;
          it.worst_s = s;
          it.detail = "h_L <= h or g_L <= g violated";
        }
      }
      if (v.d2 > it.constant) {
        it.constant = v.d2;
        if (it.pass) {
          it.worst_s = s;
        }
      }
    }
    if (!std::isfinite(it.constant)) {
      it.pass = false;
      it.detail = "h_L'' unbounded";
    }
  }

  // (c) both ratio bounds; the constant must be L-uniform.
  {
    ItemResult& it = rep.c;
    const ItemC base = measure_item_c(ev, grid, slack);
    it.constant = base.constant;
    it.worst_s = base.worst_s;
    it.worst_L = L;
    if (!base.lower_ok) {
      it.pass = false;
      it.worst_s = base.violation_s;
      it.detail = "h_L'/s <= h_L'' violated";
    }
    for (int j = 0; j < 4; ++j) {
      HLFamily fj = family;
      fj.L = L * std::ldexp(1.0, j);
      const HLEvaluator evj(fj);
      const auto gj =
          log_grid(sampling.s_min_rel * fj.L, 4.0 * fj.L, sampling.n_grid);
      const ItemC cj = j == 0 ? base : measure_item_c(evj, gj, slack);
      rep.sweep_L.push_back(fj.L);
      rep.sweep_c.push_back(cj.constant);
      if (!cj.lower_ok && it.pass) {
        it.pass = false;
        it.worst_s = cj.violation_s;
        it.worst_L = fj.L;
        it.detail = "h_L'/s <= h_L'' violated along the L sweep";
      }
    }
    if (!std::isfinite(it.constant) && it.pass) {
      it.pass = false;
      it.detail = "item (c) constant is not finite";
    }
  }

  // (d) measured constant over random pairs.
  {
    ItemResult& it = rep.d;
    it.worst_L = L;
    std::mt19937_64 rng(sampling.seed);
    std::uniform_real_distribution<double> u(std::log(sampling.s_min_rel * L),
                                             std::log(4.0 * L));
    for (int k = 0; k < sampling.n_pairs; ++k) {
      const double s = std::exp(u(rng));
      const double t = std::exp(u(rng));
      const HLValue vs = ev(s);
      const HLValue vt = ev(t);
      const double lhs = vs.d1 / s * t * t;
      const double rhs = 1.0 + vs.h + vt.h * t * t;
      const double r = lhs / rhs;
      if (r > it.constant) {
        it.constant = r;
        it.worst_s = s;
        it.worst_t = t;
      }
    }
    if (!std::isfinite(it.constant)) {
      it.pass = false;
      it.detail = "item (d) constant is not finite";
    }
  }
  return rep;
}

nlohmann::json to_json(const LemmaReport& report) {
  auto item = [](const ItemResult& it) {
    return nlohmann::json{{"pass", it.pass},
                          {"constant", it.constant},
                          {"worst_s", it.worst_s},
                          {"worst_t", it.worst_t},
                          {"worst_L", it.worst_L},
                          {"detail", it.detail}};
  };
  return {{"alpha", report.family.alpha},
          {"L", report.family.L},
          {"plateau", report.family.plateau},
          {"quad_tol", report.family.quad_tol},
          {"pass", report.pass()},
          {"items",
           {{"a", item(report.a)},
            {"b", item(report.b)},
            {"c", item(report.c)},
            {"d", item(report.d)}}},
          {"sweep", {{"L", report.sweep_L}, {"c_constant", report.sweep_c}}}};
}

}  // namespace plapsde::hl
