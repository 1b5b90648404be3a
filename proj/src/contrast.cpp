#include "promptattrib/contrast.hpp"

#include <cmath>
#include <string>

#include "promptattrib/error.hpp"
#include "promptattrib/rng.hpp"

namespace promptattrib {
namespace {

void check_ratio(double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw Error("dropout ratio must be in [0, 1), got " + std::to_string(ratio));
  }
}

}  // namespace

Matrix dropout_mask(std::size_t rows, std::size_t cols, double ratio, std::uint64_t seed) {
  check_ratio(ratio);
  Matrix mask(rows, cols, 1.0);
  if (ratio == 0.0) return mask;
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - ratio);
  for (double& m : mask.values()) m = uniform01(rng) < ratio ? 0.0 : keep_scale;
  return mask;
}

Matrix dropout_view(const Matrix& x, double ratio, std::uint64_t seed) {
  check_ratio(ratio);
  if (ratio == 0.0) return x;
  const Matrix mask = dropout_mask(x.rows(), x.cols(), ratio, seed);
  Matrix out = x;
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= mask.values()[i];
  return out;
}

double contrastive_loss(const ViewEmbedding& z1, const ViewEmbedding& z2) {
  if (z1.vector.size() != z2.vector.size()) {
    throw Error("contrastive_loss: dimension mismatch " + std::to_string(z1.vector.size()) +
                " vs " + std::to_string(z2.vector.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < z1.vector.size(); ++i) {
    const double d = z1.vector[i] - z2.vector[i];
    s += d * d;
  }
  return std::sqrt(s);
}

Var contrastive_loss(Var z1, Var z2) {
  if (!z1.value().same_shape(z2.value())) {
    throw Error("contrastive_loss: dimension mismatch " + shape_string(z1.value()) + " vs " +
                shape_string(z2.value()));
  }
  return ag::norm2(ag::sub(z1, z2));
}

}  // namespace promptattrib
