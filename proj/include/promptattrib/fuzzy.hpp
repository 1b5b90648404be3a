#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "promptattrib/autograd.hpp"

namespace promptattrib {

enum class TernaryLabel { kSame = 0, kDifferent = 1, kAmbiguous = 2 };

// How an Ambiguous entity posterior counts toward a binary match.
enum class AmbiguousPolicy { kAsSame, kAsDifferent };

AmbiguousPolicy parse_ambiguous_policy(std::string_view name);
std::string ambiguous_policy_name(AmbiguousPolicy p);

inline constexpr double kFuzzyEps = 1e-12;

// Distribution over {Same, Different, Ambiguous} for one aligned attribute pair.
struct AttributeBelief {
  double p_same = 0.0;
  double p_different = 0.0;
  double p_ambiguous = 0.0;
};

struct EntityScores {
  double s_same = 0.0;
  double s_different = 0.0;
  double s_ambiguous = 0.0;
};

struct EntityPosterior {
  double p_same = 0.0;
  double p_different = 0.0;
  double p_ambiguous = 0.0;

  double operator[](TernaryLabel t) const;
};

struct FuzzyOptions {
  // > 0 replaces the hard max with a softmax-weighted mean at this
  // temperature. 0 keeps the exact max (subgradient to the first argmax).
  double smooth_max_tau = 0.0;
};

// Throws unless each component is in [0, 1] and they sum to 1 within 1e-6.
void validate_belief(const AttributeBelief& b);

// Geometric mean of p_same over the K pairs, each clamped to [eps, 1].
double score_same(std::span<const AttributeBelief> beliefs);
// Max of p_different.
double score_different(std::span<const AttributeBelief> beliefs, const FuzzyOptions& opt = {});
// Max of p_ambiguous times (1 - score_different).
double score_ambiguous(std::span<const AttributeBelief> beliefs, const FuzzyOptions& opt = {});

EntityScores induce_scores(std::span<const AttributeBelief> beliefs, const FuzzyOptions& opt = {});
// Divides each score by their sum Z; throws when Z = 0.
EntityPosterior normalize_scores(const EntityScores& scores);
EntityPosterior induce_posterior(std::span<const AttributeBelief> beliefs,
                                 const FuzzyOptions& opt = {});

// -log(max(P(t), eps))
double fuzzy_loss(const EntityPosterior& posterior, TernaryLabel t);

double map_ambiguous_to_binary(const EntityPosterior& posterior, AmbiguousPolicy policy);

// d/d(belief components) of sum_L upstream[L] * P(L | beliefs).
std::vector<AttributeBelief> posterior_vjp(std::span<const AttributeBelief> beliefs,
                                           const std::array<double, 3>& upstream,
                                           const FuzzyOptions& opt = {});

// Gradient of fuzzy_loss(induce_posterior(beliefs), t) with respect to every
// belief component.
std::vector<AttributeBelief> fuzzy_loss_gradient(std::span<const AttributeBelief> beliefs,
                                                 TernaryLabel t, const FuzzyOptions& opt = {});

// Tape op: K x 3 belief rows (Same, Different, Ambiguous) -> 1 x 3 posterior.
Var induce_posterior(Var beliefs, const FuzzyOptions& opt = {});

}  // namespace promptattrib
