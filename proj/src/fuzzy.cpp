#include "promptattrib/fuzzy.hpp"

#include <algorithm>
#include <cmath>

#include "promptattrib/error.hpp"

namespace promptattrib {

AmbiguousPolicy parse_ambiguous_policy(std::string_view name) {
  if (name == "same" || name == "ambiguous->same") return AmbiguousPolicy::kAsSame;
  if (name == "different" || name == "ambiguous->different") return AmbiguousPolicy::kAsDifferent;
  throw UsageError("unknown ambiguous policy \"" + std::string(name) +
                   "\" (expected same or different)");
}

std::string ambiguous_policy_name(AmbiguousPolicy p) {
  return p == AmbiguousPolicy::kAsSame ? "same" : "different";
}

double EntityPosterior::operator[](TernaryLabel t) const {
  switch (t) {
    case TernaryLabel::kSame: return p_same;
    case TernaryLabel::kDifferent: return p_different;
    case TernaryLabel::kAmbiguous: return p_ambiguous;
  }
  return 0.0;
}

void validate_belief(const AttributeBelief& b) {
  for (double p : {b.p_same, b.p_different, b.p_ambiguous}) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error("belief component outside [0, 1]: " + std::to_string(p));
  }
  const double s = b.p_same + b.p_different + b.p_ambiguous;
  if (std::abs(s - 1.0) > 1e-6) throw Error("belief sums to " + std::to_string(s) + ", expected 1");
}

namespace {

void check_nonempty(std::span<const AttributeBelief> beliefs) {
  if (beliefs.empty()) throw Error("fuzzy induction needs at least one attribute pair (K = 0)");
  for (const auto& b : beliefs) validate_belief(b);
}

// Max (hard or smoothed) of one component plus the weight each element gets
// in its derivative.
struct MaxResult {
  double value = 0.0;
  std::vector<double> weights;
};

template <typename Get>
MaxResult soft_or_hard_max(std::span<const AttributeBelief> beliefs, Get get,
                           const FuzzyOptions& opt) {
  const std::size_t k = beliefs.size();
  MaxResult r;
  r.weights.assign(k, 0.0);
  if (opt.smooth_max_tau > 0.0) {
    double mx = get(beliefs[0]);
    for (const auto& b : beliefs) mx = std::max(mx, get(b));
    std::vector<double> w(k);
    double z = 0.0;
    for (std::size_t i = 0; i < k; ++i) z += (w[i] = std::exp((get(beliefs[i]) - mx) / opt.smooth_max_tau));
    double m = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      w[i] /= z;
      m += w[i] * get(beliefs[i]);
    }
    for (std::size_t i = 0; i < k; ++i) {
      r.weights[i] = w[i] * (1.0 + (get(beliefs[i]) - m) / opt.smooth_max_tau);
    }
    r.value = m;
    return r;
  }
  std::size_t arg = 0;
  for (std::size_t i = 1; i < k; ++i) {
    if (get(beliefs[i]) > get(beliefs[arg])) arg = i;
  }
  r.value = get(beliefs[arg]);
  r.weights[arg] = 1.0;
  return r;
}

double clamp_p(double p) { return std::clamp(p, kFuzzyEps, 1.0); }

struct Forward {
  EntityScores scores;
  MaxResult diff;
  MaxResult amb;
};

Forward forward(std::span<const AttributeBelief> beliefs, const FuzzyOptions& opt) {
  Forward f;
  double log_sum = 0.0;
  for (const auto& b : beliefs) log_sum += std::log(clamp_p(b.p_same));
  f.scores.s_same = std::exp(log_sum / static_cast<double>(beliefs.size()));
  f.diff = soft_or_hard_max(beliefs, [](const AttributeBelief& b) { return b.p_different; }, opt);
  f.amb = soft_or_hard_max(beliefs, [](const AttributeBelief& b) { return b.p_ambiguous; }, opt);
  f.scores.s_different = f.diff.value;
  f.scores.s_ambiguous = f.amb.value * (1.0 - f.diff.value);
  return f;
}

}  // namespace

double score_same(std::span<const AttributeBelief> beliefs) {
  check_nonempty(beliefs);
  return forward(beliefs, {}).scores.s_same;
}

double score_different(std::span<const AttributeBelief> beliefs, const FuzzyOptions& opt) {
  check_nonempty(beliefs);
  return forward(beliefs, opt).scores.s_different;
}

double score_ambiguous(std::span<const AttributeBelief> beliefs, const FuzzyOptions& opt) {
  check_nonempty(beliefs);
  return forward(beliefs, opt).scores.s_ambiguous;
}

EntityScores induce_scores(std::span<const AttributeBelief> beliefs, const FuzzyOptions& opt) {
  check_nonempty(beliefs);
  return forward(beliefs, opt).scores;
}

EntityPosterior normalize_scores(const EntityScores& s) {
  for (double v : {s.s_same, s.s_different, s.s_ambiguous}) {
    if (!(std::isfinite(v) && v >= 0.0)) throw Error("entity scores must be finite and non-negative");
  }
  const double z = s.s_same + s.s_different + s.s_ambiguous;
  if (z <= 0.0) throw Error("entity scores sum to zero; cannot normalize");
  return {s.s_same / z, s.s_different / z, s.s_ambiguous / z};
}

EntityPosterior induce_posterior(std::span<const AttributeBelief> beliefs,
                                 const FuzzyOptions& opt) {
  return normalize_scores(induce_scores(beliefs, opt));
}

double fuzzy_loss(const EntityPosterior& posterior, TernaryLabel t) {
  return -std::log(std::max(posterior[t], kFuzzyEps));
}

double map_ambiguous_to_binary(const EntityPosterior& posterior, AmbiguousPolicy policy) {
  return policy == AmbiguousPolicy::kAsSame ? posterior.p_same + posterior.p_ambiguous
                                            : posterior.p_same;
}

std::vector<AttributeBelief> posterior_vjp(std::span<const AttributeBelief> beliefs,
                                           const std::array<double, 3>& upstream,
                                           const FuzzyOptions& opt) {
  check_nonempty(beliefs);
  const Forward f = forward(beliefs, opt);
  const EntityScores& s = f.scores;
  const double z = s.s_same + s.s_different + s.s_ambiguous;
  if (z <= 0.0) throw Error("entity scores sum to zero; cannot normalize");
  const std::array<double, 3> p = {s.s_same / z, s.s_different / z, s.s_ambiguous / z};
  const double dot = upstream[0] * p[0] + upstream[1] * p[1] + upstream[2] * p[2];
  // d(objective)/dS_L
  const double g_same = (upstream[0] - dot) / z;
  const double g_diff = (upstream[1] - dot) / z;
  const double g_amb = (upstream[2] - dot) / z;

  const auto k = static_cast<double>(beliefs.size());
  std::vector<AttributeBelief> out(beliefs.size());
  for (std::size_t i = 0; i < beliefs.size(); ++i) {
    const double ps = beliefs[i].p_same;
    // Clamped entries sit on a flat piece of the clamp.
    out[i].p_same = (ps > kFuzzyEps && ps <= 1.0) ? g_same * s.s_same / (k * ps) : 0.0;
    out[i].p_different = (g_diff - g_amb * f.amb.value) * f.diff.weights[i];
    out[i].p_ambiguous = g_amb * (1.0 - f.diff.value) * f.amb.weights[i];
  }
  return out;
}

std::vector<AttributeBelief> fuzzy_loss_gradient(std::span<const AttributeBelief> beliefs,
                                                 TernaryLabel t, const FuzzyOptions& opt) {
  const EntityPosterior post = induce_posterior(beliefs, opt);
  const double pt = post[t];
  std::array<double, 3> up = {0.0, 0.0, 0.0};
  if (pt > kFuzzyEps) up[static_cast<std::size_t>(t)] = -1.0 / pt;
  return posterior_vjp(beliefs, up, opt);
}

namespace {

std::vector<AttributeBelief> beliefs_from(const Matrix& m) {
  if (m.cols() != 3 || m.rows() == 0) {
    throw Error("belief matrix must be K x 3 with K >= 1, got " + shape_string(m));
  }
  std::vector<AttributeBelief> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = {m(i, 0), m(i, 1), m(i, 2)};
  return out;
}

}  // namespace

Var induce_posterior(Var beliefs, const FuzzyOptions& opt) {
  const std::vector<AttributeBelief> b = beliefs_from(beliefs.value());
  const EntityPosterior post = induce_posterior(b, opt);
  Matrix out(1, 3);
  out(0, 0) = post.p_same;
  out(0, 1) = post.p_different;
  out(0, 2) = post.p_ambiguous;
  const std::uint32_t ib = beliefs.id;
  return beliefs.tape->push(std::move(out), beliefs.requires_grad(),
                            [ib, opt](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad_buffer(self);
                              const auto bl = beliefs_from(t.value(ib));
                              const auto grads = posterior_vjp(bl, {g(0, 0), g(0, 1), g(0, 2)}, opt);
                              Matrix& gb = t.grad_buffer(ib);
                              for (std::size_t i = 0; i < grads.size(); ++i) {
                                gb(i, 0) += grads[i].p_same;
                                gb(i, 1) += grads[i].p_different;
                                gb(i, 2) += grads[i].p_ambiguous;
                              }
                            });
}

}  // namespace promptattrib
