#include "egomg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace egomg::ad {

namespace {

constexpr double kProbFloor = 1e-12;

Tape& tape_of(const char* op, Var a) {
  if (!a.valid()) throw std::invalid_argument(std::string(op) + ": detached tensor");
  return *a.tape();
}

Tape& tape_of(const char* op, Var a, Var b) {
  Tape& t = tape_of(op, a);
  if (&tape_of(op, b) != &t) throw std::invalid_argument(std::string(op) + ": tensors from different tapes");
  return t;
}

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

bool needs(Tape& t, Var a) { return t.requires_grad(a.id()); }

}  // namespace

const Matrix& Var::value() const {
  if (!tape_) throw std::logic_error("value of detached tensor");
  return tape_->value(id_);
}

const Matrix& Var::grad() const {
  if (!tape_) throw std::logic_error("grad of detached tensor");
  return tape_->grad(id_);
}

Var Tape::variable(Matrix value) { return record(std::move(value), true, nullptr); }

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Var Tape::record(Matrix value, bool requires_grad, BackwardFn backward) {
  if (backward_done_) throw std::logic_error("tape already differentiated; reset() before recording");
  nodes_.push_back({std::move(value), Matrix(), requires_grad, requires_grad ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

const Matrix& Tape::grad(std::size_t id) const {
  const Node& n = nodes_.at(id);
  if (n.grad.size() == 0 && n.value.size() != 0) {
    static thread_local Matrix zeros;
    zeros = Matrix(n.value.rows, n.value.cols);
    return zeros;
  }
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (!g.same_shape(n.value)) shape_error("accumulate", n.value, g);
  if (n.grad.size() == 0) {
    n.grad = g;
    return;
  }
  for (std::size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += g.data[i];
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
  if (backward_done_) throw std::logic_error("backward called twice without reset()");
  const Matrix& v = nodes_.at(loss.id()).value;
  if (v.rows != 1 || v.cols != 1) throw std::invalid_argument("backward: loss must be scalar, got " + v.shape_string());
  backward_done_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Matrix(1, 1, 1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) n.backward(*this, n.grad);
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of("matmul", a, b);
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(egomg::matmul(a.value(), b.value()), needs(t, a) || needs(t, b), [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, matmul_nt(g, tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, matmul_tn(tp.value(ia), g));
  });
}

Var spmm(const CsrMatrix& a, Var b) {
  Tape& t = tape_of("spmm", b);
  if (a.cols != b.rows()) {
    throw std::invalid_argument("spmm: shape mismatch [" + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                                "] vs " + b.value().shape_string());
  }
  const std::size_t ib = b.id();
  const CsrMatrix* pa = &a;
  return t.record(a.multiply(b.value()), needs(t, b),
                  [pa, ib](Tape& tp, const Matrix& g) { tp.accumulate(ib, pa->multiply_transposed(g)); });
}

Var add(Var a, Var b) {
  Tape& t = tape_of("add", a, b);
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  const std::size_t ia = a.id(), ib = b.id();
  if (va.same_shape(vb)) {
    Matrix out = va;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
    return t.record(std::move(out), needs(t, a) || needs(t, b), [ia, ib](Tape& tp, const Matrix& g) {
      tp.accumulate(ia, g);
      tp.accumulate(ib, g);
    });
  }
  if (vb.rows == 1 && vb.cols == va.cols) {
    Matrix out = va;
    for (std::size_t r = 0; r < out.rows; ++r) {
      auto row = out.row(r);
      for (std::size_t c = 0; c < out.cols; ++c) row[c] += vb.data[c];
    }
    return t.record(std::move(out), needs(t, a) || needs(t, b), [ia, ib](Tape& tp, const Matrix& g) {
      tp.accumulate(ia, g);
      if (tp.requires_grad(ib)) {
        Matrix gb(1, g.cols);
        for (std::size_t r = 0; r < g.rows; ++r) {
          for (std::size_t c = 0; c < g.cols; ++c) gb.data[c] += g(r, c);
        }
        tp.accumulate(ib, gb);
      }
    });
  }
  shape_error("add", va, vb);
}

Var sub(Var a, Var b) {
  Tape& t = tape_of("sub", a, b);
  if (!a.value().same_shape(b.value())) shape_error("sub", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.value().data[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), needs(t, a) || needs(t, b), [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) {
      Matrix neg = g;
      for (double& v : neg.data) v = -v;
      tp.accumulate(ib, neg);
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of("mul", a, b);
  if (!a.value().same_shape(b.value())) shape_error("mul", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.value().data[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), needs(t, a) || needs(t, b), [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) {
      Matrix ga = g;
      for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= tp.value(ib).data[i];
      tp.accumulate(ia, ga);
    }
    if (tp.requires_grad(ib)) {
      Matrix gb = g;
      for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] *= tp.value(ia).data[i];
      tp.accumulate(ib, gb);
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of("scale", a);
  Matrix out = a.value();
  for (double& v : out.data) v *= s;
  const std::size_t ia = a.id();
  return t.record(std::move(out), needs(t, a), [ia, s](Tape& tp, const Matrix& g) {
    Matrix ga = g;
    for (double& v : ga.data) v *= s;
    tp.accumulate(ia, ga);
  });
}

Var relu(Var a) {
  Tape& t = tape_of("relu", a);
  Matrix out = a.value();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  const std::size_t ia = a.id();
  // Subgradient at 0 is 0.
  return t.record(std::move(out), needs(t, a), [ia](Tape& tp, const Matrix& g) {
    Matrix ga = g;
    const auto& x = tp.value(ia).data;
    for (std::size_t i = 0; i < ga.data.size(); ++i) {
      if (!(x[i] > 0.0)) ga.data[i] = 0.0;
    }
    tp.accumulate(ia, ga);
  });
}

Var sigmoid(Var a) {
  Tape& t = tape_of("sigmoid", a);
  Matrix out = a.value();
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  const std::size_t ia = a.id();
  const std::size_t io = t.size();
  return t.record(std::move(out), needs(t, a), [ia, io](Tape& tp, const Matrix& g) {
    Matrix ga = g;
    const auto& y = tp.value(io).data;
    for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= y[i] * (1.0 - y[i]);
    tp.accumulate(ia, ga);
  });
}

Var tanh(Var a) {
  Tape& t = tape_of("tanh", a);
  Matrix out = a.value();
  for (double& v : out.data) v = std::tanh(v);
  const std::size_t ia = a.id();
  const std::size_t io = t.size();
  return t.record(std::move(out), needs(t, a), [ia, io](Tape& tp, const Matrix& g) {
    Matrix ga = g;
    const auto& y = tp.value(io).data;
    for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= 1.0 - y[i] * y[i];
    tp.accumulate(ia, ga);
  });
}

Var softmax_rows(Var a) {
  Tape& t = tape_of("softmax_rows", a);
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows; ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      total += v;
    }
    for (double& v : row) v /= total;
  }
  const std::size_t ia = a.id();
  const std::size_t io = t.size();
  return t.record(std::move(out), needs(t, a), [ia, io](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(io);
    Matrix ga(g.rows, g.cols);
    for (std::size_t r = 0; r < g.rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols; ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < g.cols; ++c) ga(r, c) = y(r, c) * (g(r, c) - dot);
    }
    tp.accumulate(ia, ga);
  });
}

Var cross_entropy(Var probs, std::span<const std::size_t> labels) {
  Tape& t = tape_of("cross_entropy", probs);
  const Matrix& p = probs.value();
  if (labels.size() != p.rows) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                p.shape_string() + " probabilities");
  }
  if (p.rows == 0) throw std::invalid_argument("cross_entropy: empty batch");
  double loss = 0.0;
  for (std::size_t r = 0; r < p.rows; ++r) {
    if (labels[r] >= p.cols) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[r]) + " out of range for " +
                              std::to_string(p.cols) + " classes");
    }
    loss -= std::log(std::clamp(p(r, labels[r]), kProbFloor, 1.0));
  }
  loss /= static_cast<double>(p.rows);
  const std::size_t ip = probs.id();
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return t.record(Matrix(1, 1, loss), needs(t, probs), [ip, lab = std::move(lab)](Tape& tp, const Matrix& g) {
    const Matrix& pv = tp.value(ip);
    Matrix gp(pv.rows, pv.cols);
    const double n = static_cast<double>(pv.rows);
    for (std::size_t r = 0; r < pv.rows; ++r) {
      const double x = pv(r, lab[r]);
      if (x >= kProbFloor && x <= 1.0) gp(r, lab[r]) = -g.data[0] / (x * n);
    }
    tp.accumulate(ip, gp);
  });
}

Var cross_entropy(Var probs, std::size_t label) {
  const std::size_t labels[] = {label};
  return cross_entropy(probs, labels);
}

Var soft_cross_entropy(Var probs, const Matrix& targets) {
  Tape& t = tape_of("soft_cross_entropy", probs);
  const Matrix& p = probs.value();
  if (!p.same_shape(targets)) shape_error("soft_cross_entropy", p, targets);
  if (p.rows == 0) throw std::invalid_argument("soft_cross_entropy: empty batch");
  double loss = 0.0;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    if (targets.data[i] != 0.0) loss -= targets.data[i] * std::log(std::clamp(p.data[i], kProbFloor, 1.0));
  }
  loss /= static_cast<double>(p.rows);
  const std::size_t ip = probs.id();
  return t.record(Matrix(1, 1, loss), needs(t, probs), [ip, targets](Tape& tp, const Matrix& g) {
    const Matrix& pv = tp.value(ip);
    Matrix gp(pv.rows, pv.cols);
    const double n = static_cast<double>(pv.rows);
    for (std::size_t i = 0; i < pv.data.size(); ++i) {
      const double x = pv.data[i];
      if (targets.data[i] != 0.0 && x >= kProbFloor && x <= 1.0) gp.data[i] = -g.data[0] * targets.data[i] / (x * n);
    }
    tp.accumulate(ip, gp);
  });
}

Var l2_normalize_rows(Var a) {
  Tape& t = tape_of("l2_normalize_rows", a);
  Matrix out = a.value();
  std::vector<double> norms(out.rows, 0.0);
  for (std::size_t r = 0; r < out.rows; ++r) {
    auto row = out.row(r);
    double sq = 0.0;
    for (double v : row) sq += v * v;
    norms[r] = std::sqrt(sq);
    if (norms[r] > 0.0) {
      for (double& v : row) v /= norms[r];
    }
  }
  const std::size_t ia = a.id();
  const std::size_t io = t.size();
  return t.record(std::move(out), needs(t, a), [ia, io, norms = std::move(norms)](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(io);
    Matrix ga(g.rows, g.cols);
    for (std::size_t r = 0; r < g.rows; ++r) {
      if (!(norms[r] > 0.0)) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols; ++c) dot += y(r, c) * g(r, c);
      for (std::size_t c = 0; c < g.cols; ++c) ga(r, c) = (g(r, c) - y(r, c) * dot) / norms[r];
    }
    tp.accumulate(ia, ga);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape& t = tape_of("concat_cols", parts[0]);
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  bool grad = false;
  for (const Var& p : parts) {
    tape_of("concat_cols", parts[0], p);
    if (p.rows() != rows) shape_error("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
    grad = grad || needs(t, p);
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + off);
    ids.push_back(p.id());
    offsets.push_back(off);
    off += v.cols;
  }
  return t.record(std::move(out), grad, [ids, offsets](Tape& tp, const Matrix& g) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.requires_grad(ids[k])) continue;
      const Matrix& v = tp.value(ids[k]);
      Matrix gk(v.rows, v.cols);
      for (std::size_t r = 0; r < v.rows; ++r) {
        for (std::size_t c = 0; c < v.cols; ++c) gk(r, c) = g(r, offsets[k] + c);
      }
      tp.accumulate(ids[k], gk);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Tape& t = tape_of("concat_rows", parts[0]);
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  bool grad = false;
  for (const Var& p : parts) {
    tape_of("concat_rows", parts[0], p);
    if (p.cols() != cols) shape_error("concat_rows", parts[0].value(), p.value());
    rows += p.rows();
    grad = grad || needs(t, p);
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off * cols));
    ids.push_back(p.id());
    offsets.push_back(off);
    off += v.rows;
  }
  return t.record(std::move(out), grad, [ids, offsets](Tape& tp, const Matrix& g) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.requires_grad(ids[k])) continue;
      const Matrix& v = tp.value(ids[k]);
      Matrix gk(v.rows, v.cols);
      const auto begin = g.data.begin() + static_cast<std::ptrdiff_t>(offsets[k] * g.cols);
      std::copy(begin, begin + static_cast<std::ptrdiff_t>(v.size()), gk.data.begin());
      tp.accumulate(ids[k], gk);
    }
  });
}

Var mean_rows(Var a) {
  Tape& t = tape_of("mean_rows", a);
  const Matrix& v = a.value();
  if (v.rows == 0) throw std::invalid_argument("mean_rows: no rows");
  Matrix out(1, v.cols);
  for (std::size_t r = 0; r < v.rows; ++r) {
    for (std::size_t c = 0; c < v.cols; ++c) out.data[c] += v(r, c);
  }
  const double n = static_cast<double>(v.rows);
  for (double& x : out.data) x /= n;
  const std::size_t ia = a.id();
  return t.record(std::move(out), needs(t, a), [ia](Tape& tp, const Matrix& g) {
    const Matrix& v = tp.value(ia);
    Matrix ga(v.rows, v.cols);
    const double n = static_cast<double>(v.rows);
    for (std::size_t r = 0; r < v.rows; ++r) {
      for (std::size_t c = 0; c < v.cols; ++c) ga(r, c) = g.data[c] / n;
    }
    tp.accumulate(ia, ga);
  });
}

Var gather_rows(Var a, std::span<const std::size_t> indices) {
  Tape& t = tape_of("gather_rows", a);
  const Matrix& v = a.value();
  Matrix out(indices.size(), v.cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= v.rows) {
      throw std::out_of_range("gather_rows: row " + std::to_string(indices[i]) + " of " + v.shape_string());
    }
    std::copy(v.row(indices[i]).begin(), v.row(indices[i]).end(), out.row(i).begin());
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return t.record(std::move(out), needs(t, a), [ia, idx = std::move(idx)](Tape& tp, const Matrix& g) {
    const Matrix& v = tp.value(ia);
    Matrix ga(v.rows, v.cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto dst = ga.row(idx[i]);
      auto src = g.row(i);
      for (std::size_t c = 0; c < v.cols; ++c) dst[c] += src[c];
    }
    tp.accumulate(ia, ga);
  });
}

Var select_row(Var a, std::size_t index) {
  const std::size_t idx[] = {index};
  return gather_rows(a, idx);
}

Var mask_blend(std::span<const double> mask, Var when_set, Var otherwise) {
  Tape& t = tape_of("mask_blend", when_set, otherwise);
  const Matrix& a = when_set.value();
  const Matrix& b = otherwise.value();
  if (!a.same_shape(b)) shape_error("mask_blend", a, b);
  if (mask.size() != a.rows) throw std::invalid_argument("mask_blend: mask length does not match row count");
  Matrix out = b;
  for (std::size_t r = 0; r < a.rows; ++r) {
    if (mask[r] != 0.0) std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
  }
  const std::size_t ia = when_set.id(), ib = otherwise.id();
  std::vector<double> m(mask.begin(), mask.end());
  return t.record(std::move(out), needs(t, when_set) || needs(t, otherwise),
                  [ia, ib, m = std::move(m)](Tape& tp, const Matrix& g) {
                    Matrix ga(g.rows, g.cols), gb(g.rows, g.cols);
                    for (std::size_t r = 0; r < g.rows; ++r) {
                      auto dst = m[r] != 0.0 ? ga.row(r) : gb.row(r);
                      std::copy(g.row(r).begin(), g.row(r).end(), dst.begin());
                    }
                    tp.accumulate(ia, ga);
                    tp.accumulate(ib, gb);
                  });
}

Var scale_rows(Var a, std::span<const double> factors) {
  Tape& t = tape_of("scale_rows", a);
  if (factors.size() != a.rows()) throw std::invalid_argument("scale_rows: factor count does not match row count");
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows; ++r) {
    for (double& v : out.row(r)) v *= factors[r];
  }
  const std::size_t ia = a.id();
  std::vector<double> f(factors.begin(), factors.end());
  return t.record(std::move(out), needs(t, a), [ia, f = std::move(f)](Tape& tp, const Matrix& g) {
    Matrix ga = g;
    for (std::size_t r = 0; r < ga.rows; ++r) {
      for (double& v : ga.row(r)) v *= f[r];
    }
    tp.accumulate(ia, ga);
  });
}

Var sum(Var a) {
  Tape& t = tape_of("sum", a);
  double total = 0.0;
  for (double v : a.value().data) total += v;
  const std::size_t ia = a.id();
  return t.record(Matrix(1, 1, total), needs(t, a), [ia](Tape& tp, const Matrix& g) {
    const Matrix& v = tp.value(ia);
    tp.accumulate(ia, Matrix(v.rows, v.cols, g.data[0]));
  });
}

double grad_check(const std::function<Var(Tape&, Var)>& f, const Matrix& input, double epsilon) {
  Tape tape;
  Var x = tape.variable(input);
  Var y = f(tape, x);
  tape.backward(y);
  const Matrix analytic = x.grad();

  auto eval = [&](const Matrix& in) {
    Tape t;
    return f(t, t.constant(in)).value().data.at(0);
  };
  double worst = 0.0;
  Matrix probe = input;
  for (std::size_t i = 0; i < input.data.size(); ++i) {
    const double orig = probe.data[i];
    probe.data[i] = orig + epsilon;
    const double up = eval(probe);
    probe.data[i] = orig - epsilon;
    const double down = eval(probe);
    probe.data[i] = orig;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double denom = std::max({std::abs(numeric), std::abs(analytic.data[i]), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic.data[i]) / denom);
  }
  return worst;
}

}  // namespace egomg::ad
