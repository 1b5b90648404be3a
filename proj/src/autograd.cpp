#include "promptattrib/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "promptattrib/error.hpp"

namespace promptattrib {

const Matrix& Var::value() const { return tape->value(*this); }
bool Var::requires_grad() const { return tape->requires_grad(*this); }

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::variable(Matrix value) { return push(std::move(value), true, nullptr); }

Var Tape::parameter(Parameter& p) {
  Var v = push(p.value, p.trainable, nullptr);
  nodes_[v.id].parameter = &p;
  return v;
}

Var Tape::push(Matrix value, bool requires_grad, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.empty() && !n.value.empty()) return Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

Matrix& Tape::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw Error("backward: variable belongs to another tape");
  if (value(loss).size() != 1) {
    throw Error("backward: loss must be 1x1, got " + shape_string(value(loss)));
  }
  if (!requires_grad(loss)) return;
  grad_buffer(loss.id)(0, 0) += 1.0;
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.parameter != nullptr) {
      Matrix& pg = n.parameter->grad;
      if (!pg.same_shape(n.grad)) pg = Matrix(n.grad.rows(), n.grad.cols());
      auto dst = pg.values();
      auto src = n.grad.values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
}

namespace ag {
namespace {

Tape& tape_of(Var a) { return *a.tape; }

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw Error("autograd: operands live on different tapes");
}

void check_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw Error(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                shape_string(b));
  }
}

void axpy(Matrix& dst, const Matrix& src, double s = 1.0) {
  auto d = dst.values();
  auto x = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * x[i];
}

template <typename F, typename DF>
Var unary(Var a, F f, DF df) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  auto o = out.values();
  auto x = av.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(x[i]);
  const std::uint32_t ia = a.id;
  return tape_of(a).push(std::move(out), a.requires_grad(),
                         [ia, df](Tape& t, std::uint32_t self) {
                           const Matrix& g = t.grad_buffer(self);
                           const Matrix& xv = t.value(ia);
                           const Matrix& yv = t.value(self);
                           Matrix& ga = t.grad_buffer(ia);
                           auto gd = ga.values();
                           for (std::size_t i = 0; i < gd.size(); ++i) {
                             gd[i] += g.values()[i] * df(xv.values()[i], yv.values()[i]);
                           }
                         });
}

}  // namespace

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw Error("matmul: shape mismatch " + shape_string(av) + " * " + shape_string(bv));
  }
  Matrix out(av.rows(), bv.cols());
  gemm_acc(av, bv, out);
  const std::uint32_t ia = a.id, ib = b.id;
  return tape_of(a).push(std::move(out), a.requires_grad() || b.requires_grad(),
                         [ia, ib](Tape& t, std::uint32_t self) {
                           const Matrix& g = t.grad_buffer(self);
                           if (t.requires_grad(ia)) gemm_bt_acc(g, t.value(ib), t.grad_buffer(ia));
                           if (t.requires_grad(ib)) gemm_at_acc(t.value(ia), g, t.grad_buffer(ib));
                         });
}

Var matmul_bt(Var a, Var b) {
  check_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw Error("matmul_bt: shape mismatch " + shape_string(av) + " * T(" + shape_string(bv) +
                ")");
  }
  Matrix out(av.rows(), bv.rows());
  gemm_bt_acc(av, bv, out);
  const std::uint32_t ia = a.id, ib = b.id;
  return tape_of(a).push(std::move(out), a.requires_grad() || b.requires_grad(),
                         [ia, ib](Tape& t, std::uint32_t self) {
                           const Matrix& g = t.grad_buffer(self);
                           // d/da = g * b ; d/db = g^T * a
                           if (t.requires_grad(ia)) gemm_acc(g, t.value(ib), t.grad_buffer(ia));
                           if (t.requires_grad(ib)) gemm_at_acc(g, t.value(ia), t.grad_buffer(ib));
                         });
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape("add", a.value(), b.value());
  Matrix out = a.value();
  axpy(out, b.value());
  const std::uint32_t ia = a.id, ib = b.id;
  return tape_of(a).push(std::move(out), a.requires_grad() || b.requires_grad(),
                         [ia, ib](Tape& t, std::uint32_t self) {
                           const Matrix& g = t.grad_buffer(self);
                           if (t.requires_grad(ia)) axpy(t.grad_buffer(ia), g);
                           if (t.requires_grad(ib)) axpy(t.grad_buffer(ib), g);
                         });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape("sub", a.value(), b.value());
  Matrix out = a.value();
  axpy(out, b.value(), -1.0);
  const std::uint32_t ia = a.id, ib = b.id;
  return tape_of(a).push(std::move(out), a.requires_grad() || b.requires_grad(),
                         [ia, ib](Tape& t, std::uint32_t self) {
                           const Matrix& g = t.grad_buffer(self);
                           if (t.requires_grad(ia)) axpy(t.grad_buffer(ia), g);
                           if (t.requires_grad(ib)) axpy(t.grad_buffer(ib), g, -1.0);
                         });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape("mul", a.value(), b.value());
  Matrix out = a.value();
  auto o = out.values();
  auto bv = b.value().values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  const std::uint32_t ia = a.id, ib = b.id;
  return tape_of(a).push(std::move(out), a.requires_grad() || b.requires_grad(),
                         [ia, ib](Tape& t, std::uint32_t self) {
                           auto g = t.grad_buffer(self).values();
                           if (t.requires_grad(ia)) {
                             auto ga = t.grad_buffer(ia).values();
                             auto y = t.value(ib).values();
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
                           }
                           if (t.requires_grad(ib)) {
                             auto gb = t.grad_buffer(ib).values();
                             auto x = t.value(ia).values();
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
                           }
                         });
}

Var mul_const(Var a, const Matrix& c) {
  check_same_shape("mul_const", a.value(), c);
  Matrix out = a.value();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= c.values()[i];
  const std::uint32_t ia = a.id;
  return tape_of(a).push(std::move(out), a.requires_grad(),
                         [ia, c](Tape& t, std::uint32_t self) {
                           auto g = t.grad_buffer(self).values();
                           auto ga = t.grad_buffer(ia).values();
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c.values()[i];
                         });
}

Var add_row(Var a, Var r) {
  check_same_tape(a, r);
  const Matrix& av = a.value();
  const Matrix& rv = r.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw Error("add_row: expected 1x" + std::to_string(av.cols()) + " row, got " +
                shape_string(rv));
  }
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t j = 0; j < orow.size(); ++j) orow[j] += rv(0, j);
  }
  const std::uint32_t ia = a.id, ir = r.id;
  return tape_of(a).push(std::move(out), a.requires_grad() || r.requires_grad(),
                         [ia, ir](Tape& t, std::uint32_t self) {
                           const Matrix& g = t.grad_buffer(self);
                           if (t.requires_grad(ia)) axpy(t.grad_buffer(ia), g);
                           if (t.requires_grad(ir)) {
                             Matrix& gr = t.grad_buffer(ir);
                             for (std::size_t i = 0; i < g.rows(); ++i) {
                               for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
                             }
                           }
                         });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var gelu(Var a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  return unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x))); },
      [](double x, double) {
        const double th = std::tanh(kC * (x + kA * x * x * x));
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kC * (1.0 + 3.0 * kA * x * x);
      });
}

Var softmax_rows(Var a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    auto x = av.row(i);
    auto y = out.row(i);
    const double mx = *std::max_element(x.begin(), x.end());
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += (y[j] = std::exp(x[j] - mx));
    for (double& v : y) v /= s;
  }
  const std::uint32_t ia = a.id;
  return tape_of(a).push(std::move(out), a.requires_grad(), [ia](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_buffer(self);
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  check_same_tape(x, gamma);
  check_same_tape(x, beta);
  const Matrix& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols();
  if (gamma.value().rows() != 1 || gamma.value().cols() != d || !gamma.value().same_shape(beta.value())) {
    throw Error("layer_norm: gain/bias must be 1x" + std::to_string(d));
  }
  auto xhat = std::make_shared<Matrix>(n, d);
  auto inv_sigma = std::make_shared<std::vector<double>>(n);
  Matrix out(n, d);
  const Matrix& gv = gamma.value();
  const Matrix& bv = beta.value();
  for (std::size_t i = 0; i < n; ++i) {
    auto r = xv.row(i);
    double mu = 0.0;
    for (double v : r) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : r) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (r[j] - mu) * is;
      (*xhat)(i, j) = h;
      out(i, j) = gv(0, j) * h + bv(0, j);
    }
  }
  const std::uint32_t ix = x.id, ig = gamma.id, ib = beta.id;
  const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  return tape_of(x).push(std::move(out), rg, [=](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_buffer(self);
    const Matrix& gv2 = t.value(ig);
    if (t.requires_grad(ig)) {
      Matrix& gg = t.grad_buffer(ig);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gg(0, j) += g(i, j) * (*xhat)(i, j);
    }
    if (t.requires_grad(ib)) {
      Matrix& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gb(0, j) += g(i, j);
    }
    if (t.requires_grad(ix)) {
      Matrix& gx = t.grad_buffer(ix);
      std::vector<double> dh(d);
      for (std::size_t i = 0; i < n; ++i) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          dh[j] = g(i, j) * gv2(0, j);
          mean_dh += dh[j];
          mean_dh_h += dh[j] * (*xhat)(i, j);
        }
        mean_dh /= static_cast<double>(d);
        mean_dh_h /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
          gx(i, j) += (*inv_sigma)[i] * (dh[j] - mean_dh - (*xhat)(i, j) * mean_dh_h);
        }
      }
    }
  });
}

Var pick_rows(std::span<const RowRef> rows) {
  if (rows.empty()) throw Error("pick_rows: no rows");
  Tape& t = tape_of(rows.front().source);
  const std::size_t d = rows.front().source.value().cols();
  Matrix out(rows.size(), d);
  bool rg = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const RowRef& r = rows[i];
    if (r.source.tape != &t) throw Error("pick_rows: rows from different tapes");
    const Matrix& src = r.source.value();
    if (src.cols() != d) throw Error("pick_rows: column mismatch");
    if (r.row >= src.rows()) {
      throw Error("pick_rows: row " + std::to_string(r.row) + " out of range for " +
                  shape_string(src));
    }
    std::copy(src.row(r.row).begin(), src.row(r.row).end(), out.row(i).begin());
    rg = rg || r.source.requires_grad();
  }
  std::vector<std::pair<std::uint32_t, std::size_t>> refs;
  refs.reserve(rows.size());
  for (const RowRef& r : rows) refs.emplace_back(r.source.id, r.row);
  return t.push(std::move(out), rg, [refs = std::move(refs)](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.grad_buffer(self);
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const auto [src, r] = refs[i];
      if (!tp.requires_grad(src)) continue;
      auto dst = tp.grad_buffer(src).row(r);
      auto gi = g.row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += gi[j];
    }
  });
}

Var row(Var a, std::size_t r) {
  const RowRef ref{a, r};
  return pick_rows(std::span<const RowRef>(&ref, 1));
}

Var concat_cols(Var a, Var b) {
  check_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) throw Error("concat_cols: row mismatch");
  Matrix out(av.rows(), av.cols() + bv.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    std::copy(av.row(i).begin(), av.row(i).end(), out.row(i).begin());
    std::copy(bv.row(i).begin(), bv.row(i).end(), out.row(i).begin() + av.cols());
  }
  const std::uint32_t ia = a.id, ib = b.id;
  const std::size_t ca = av.cols();
  return tape_of(a).push(std::move(out), a.requires_grad() || b.requires_grad(),
                         [ia, ib, ca](Tape& t, std::uint32_t self) {
                           const Matrix& g = t.grad_buffer(self);
                           for (std::size_t i = 0; i < g.rows(); ++i) {
                             for (std::size_t j = 0; j < g.cols(); ++j) {
                               if (j < ca) {
                                 if (t.requires_grad(ia)) t.grad_buffer(ia)(i, j) += g(i, j);
                               } else if (t.requires_grad(ib)) {
                                 t.grad_buffer(ib)(i, j - ca) += g(i, j);
                               }
                             }
                           }
                         });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Matrix& av = a.value();
  if (begin > end || end > av.cols()) throw Error("slice_cols: bad range");
  Matrix out(av.rows(), end - begin);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = av(i, j);
  }
  const std::uint32_t ia = a.id;
  return tape_of(a).push(std::move(out), a.requires_grad(),
                         [ia, begin](Tape& t, std::uint32_t self) {
                           const Matrix& g = t.grad_buffer(self);
                           Matrix& ga = t.grad_buffer(ia);
                           for (std::size_t i = 0; i < g.rows(); ++i)
                             for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j + begin) += g(i, j);
                         });
}

Var log_clamped(Var a, double eps) {
  return unary(a, [eps](double x) { return std::log(std::max(x, eps)); },
               [eps](double x, double) { return x > eps ? 1.0 / x : 0.0; });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::uint32_t ia = a.id;
  return tape_of(a).push(Matrix(1, 1, s), a.requires_grad(), [ia](Tape& t, std::uint32_t self) {
    const double g = t.grad_buffer(self)(0, 0);
    for (double& v : t.grad_buffer(ia).values()) v += g;
  });
}

Var norm2(Var a) {
  const double n = l2_norm(a.value().values());
  const std::uint32_t ia = a.id;
  return tape_of(a).push(Matrix(1, 1, n), a.requires_grad(), [ia, n](Tape& t, std::uint32_t self) {
    if (n == 0.0) return;
    const double g = t.grad_buffer(self)(0, 0) / n;
    auto x = t.value(ia).values();
    auto ga = t.grad_buffer(ia).values();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * x[i];
  });
}

Var element(Var a, std::size_t r, std::size_t c) {
  const Matrix& av = a.value();
  if (r >= av.rows() || c >= av.cols()) throw Error("element: index out of range");
  const std::uint32_t ia = a.id;
  return tape_of(a).push(Matrix(1, 1, av(r, c)), a.requires_grad(),
                         [ia, r, c](Tape& t, std::uint32_t self) {
                           t.grad_buffer(ia)(r, c) += t.grad_buffer(self)(0, 0);
                         });
}

Var add_scalars(std::span<const Var> terms) {
  if (terms.empty()) throw Error("add_scalars: empty");
  Tape& t = tape_of(terms.front());
  double s = 0.0;
  bool rg = false;
  std::vector<std::uint32_t> ids;
  for (Var v : terms) {
    if (v.value().size() != 1) throw Error("add_scalars: expected 1x1 terms");
    s += v.value()(0, 0);
    rg = rg || v.requires_grad();
    ids.push_back(v.id);
  }
  return t.push(Matrix(1, 1, s), rg, [ids = std::move(ids)](Tape& tp, std::uint32_t self) {
    const double g = tp.grad_buffer(self)(0, 0);
    for (std::uint32_t id : ids) {
      if (tp.requires_grad(id)) tp.grad_buffer(id)(0, 0) += g;
    }
  });
}

Var group_probs(Var logits, const std::vector<std::vector<std::uint32_t>>& groups) {
  const Matrix& lv = logits.value();
  if (lv.rows() != 1) throw Error("group_probs: expected a single logit row");
  double mx = -std::numeric_limits<double>::infinity();
  for (const auto& g : groups) {
    if (g.empty()) throw Error("group_probs: empty group");
    for (std::uint32_t id : g) {
      if (id >= lv.cols()) throw Error("group_probs: id out of range");
      mx = std::max(mx, lv(0, id));
    }
  }
  auto q = std::make_shared<std::vector<std::vector<double>>>();
  double z = 0.0;
  for (const auto& g : groups) {
    std::vector<double> qg;
    for (std::uint32_t id : g) {
      qg.push_back(std::exp(lv(0, id) - mx));
      z += qg.back();
    }
    q->push_back(std::move(qg));
  }
  Matrix out(1, groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    for (double& v : (*q)[gi]) v /= z;
    double s = 0.0;
    for (double v : (*q)[gi]) s += v;
    out(0, gi) = s;
  }
  const std::uint32_t il = logits.id;
  return tape_of(logits).push(std::move(out), logits.requires_grad(),
                              [il, q, groups](Tape& t, std::uint32_t self) {
                                const Matrix& g = t.grad_buffer(self);
                                const Matrix& p = t.value(self);
                                double dot = 0.0;
                                for (std::size_t gi = 0; gi < groups.size(); ++gi) dot += g(0, gi) * p(0, gi);
                                Matrix& gl = t.grad_buffer(il);
                                for (std::size_t gi = 0; gi < groups.size(); ++gi) {
                                  for (std::size_t k = 0; k < groups[gi].size(); ++k) {
                                    gl(0, groups[gi][k]) += (*q)[gi][k] * (g(0, gi) - dot);
                                  }
                                }
                              });
}

}  // namespace ag
}  // namespace promptattrib
