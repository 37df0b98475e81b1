#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace plapsde::hl {

/// h(s) = integral over [0, s] of (1+t)^alpha t dt, in closed form.
double eval_h(double s, double alpha);

struct CutoffValue {
  double value = 0.0;
  double derivative = 0.0;
};

/// C^1 cutoff: 1 on [0, a], 0 on [2L, inf), cubic smoothstep
/// 1 - 3r^2 + 2r^3, r = (t - a)/(2L - a), in between. The plateau end
/// a = plateau * L is 3L/2 for the admissible cutoff; other values exist
/// only for negative controls.
CutoffValue eval_psi(double theta, double L, double plateau = 1.5);

/// Parameters of the truncated family. quad_tol is the tolerance of every
/// adaptive quadrature, relative to max(1, |integrand scale|).
struct HLFamily {
  double alpha = 0.0;
  double L = 10.0;
  double quad_tol = 1e-12;
  double plateau = 1.5;

  void validate() const;
};

struct HLValue {
  double h = 0.0;    ///< h_L(s)
  double d1 = 0.0;   ///< h_L'(s) = s g_L(s)
  double d2 = 0.0;   ///< h_L''(s) = g_L(s) + s psi(s) g'(s)
  double g = 0.0;    ///< g_L(s)
};

/// Evaluator with the knot values cached. With g(t) = (1+t)^alpha:
///   g_L(t) = g(0) + int_0^t psi g',  h_L(s) = int_0^s t g_L(t) dt.
/// Exact closed forms are used below the plateau end; the transition is
/// integrated by adaptive Simpson with panels split at the knots.
class HLEvaluator {
 public:
  explicit HLEvaluator(const HLFamily& family);

  const HLFamily& family() const noexcept { return fam_; }
  HLValue operator()(double s) const;
  double g(double t) const;
  double dg(double t) const;

 private:
  double g_L_transition(double t) const;
  double h_L_transition(double s) const;

  HLFamily fam_;
  double a_;       // plateau end
  double b_;       // 2L
  double g_b_;     // g_L(2L)
  double h_b_;     // h_L(2L)
};

/// Convenience wrapper around HLEvaluator.
HLValue eval_hL(double s, const HLFamily& family);

struct SamplingSpec {
  int n_grid = 10000;      ///< log-spaced points on [s_min, 4L]
  double s_min_rel = 1e-6; ///< s_min = s_min_rel * L
  int n_pairs = 10000;     ///< random (s, t) pairs for item (d)
  std::uint64_t seed = 0;
  double slack = 1e-9;
};

struct ItemResult {
  bool pass = true;
  double constant = 0.0;   ///< measured constant (item-specific)
  double worst_s = 0.0;
  double worst_t = 0.0;    ///< item (d) only
  double worst_L = 0.0;
  std::string detail;
};

struct LemmaReport {
  HLFamily family;
  ItemResult a, b, c, d;
  /// item (c) constant for L, 2L, 4L, 8L
  std::vector<double> sweep_L;
  std::vector<double> sweep_c;
  bool pass() const { return a.pass && b.pass && c.pass && d.pass; }
};

/// Numerical certification of the four properties of (h_L):
///  (a) h_L = h on [0, 3L/2], h_L in C^2 at the knots, h_L -> h along the
///      sweep L, 2L, 4L, 8L;
///  (b) h_L <= h, g_L <= g, sup h_L'' finite;
///  (c) h_L'/s <= h_L'' <= C (alpha+1) h_L'/s and h_L' s <= C h_L, with
///      C = max of the two measured ratios;
///  (d) (h_L'(s)/s) t^2 <= C (1 + h_L(s) + h_L(t) t^2).
LemmaReport certify_lemma(const HLFamily& family,
                          const SamplingSpec& sampling = {});

nlohmann::json to_json(const LemmaReport& report);

}  // namespace plapsde::hl
