#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "promptattrib/autograd.hpp"

namespace promptattrib {

// Final hidden state at the [MASK] position of one dropout view.
struct ViewEmbedding {
  std::vector<double> vector;
};

// Inverted-dropout multiplier matrix: each entry is 0 with probability
// `ratio`, otherwise 1 / (1 - ratio). Requires 0 <= ratio < 1.
Matrix dropout_mask(std::size_t rows, std::size_t cols, double ratio, std::uint64_t seed);

// Applies a seeded inverted-dropout mask to `x`. ratio = 0 returns x unchanged.
Matrix dropout_view(const Matrix& x, double ratio, std::uint64_t seed);

// ||z1 - z2||_2
double contrastive_loss(const ViewEmbedding& z1, const ViewEmbedding& z2);
Var contrastive_loss(Var z1, Var z2);

}  // namespace promptattrib
