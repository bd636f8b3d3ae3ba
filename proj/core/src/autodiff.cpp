#include "latad/autodiff.hpp"

#include <cmath>
#include <string>

#include <fmt/format.h>

namespace latad::ad {

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) {
    throw ShapeError("operands belong to different tapes");
  }
}

void require_same_shape(Var a, Var b, const char* op) {
  require_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(fmt::format("{}: shape mismatch {}x{} vs {}x{}", op, a.rows(), a.cols(),
                                 b.rows(), b.cols()));
  }
}

Matrix to_row_major_flat(const Matrix& m) {
  Matrix flat(1, m.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) flat(0, k++) = m(i, j);
  }
  return flat;
}

Matrix from_row_major_flat(const Matrix& flat, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = flat(k++);
  }
  return m;
}

}  // namespace

const Matrix& Var::value() const { return tape_->value_of(id_); }

const Matrix& Tape::value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value(); }

Var Tape::constant(Matrix value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::variable(Matrix value) {
  Node node;
  node.owned = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::parameter(const Matrix& value, std::size_t slot) {
  if (auto it = param_nodes_.find(slot); it != param_nodes_.end()) return Var(this, it->second);
  Node node;
  node.external = &value;
  node.requires_grad = track_parameters_;
  node.slot = static_cast<std::ptrdiff_t>(slot);
  nodes_.push_back(std::move(node));
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(slot, id);
  return Var(this, id);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backward backward) {
  Node node;
  node.owned = std::move(value);
  for (const Var& p : parents) {
    if (p.tape() != this) throw ShapeError("parent recorded on a different tape");
    node.requires_grad = node.requires_grad || requires_grad(p);
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::accumulate(Var v, const Matrix& grad) {
  Node& node = nodes_[static_cast<std::size_t>(v.id())];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = grad;
  } else {
    node.grad += grad;
  }
}

Matrix Tape::grad(Var v) const {
  const Node& node = nodes_[static_cast<std::size_t>(v.id())];
  if (node.grad.size() == 0) return Matrix::Zero(node.value().rows(), node.value().cols());
  return node.grad;
}

void Tape::backward(Var output, std::vector<Matrix>* param_grads) {
  if (output.tape() != this) throw ShapeError("backward on a Var from another tape");
  if (output.rows() != 1 || output.cols() != 1) {
    throw ShapeError("backward requires a scalar output");
  }
  for (auto& node : nodes_) node.grad.resize(0, 0);
  nodes_[static_cast<std::size_t>(output.id())].grad = Matrix::Ones(1, 1);
  for (int id = output.id(); id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.grad.size() == 0) continue;
    if (node.backward) {
      // The callback may append nothing but may touch other nodes; copy the
      // incoming gradient so reallocation cannot invalidate it.
      const Matrix grad_out = node.grad;
      node.backward(*this, node.value(), grad_out);
    }
    if (node.slot >= 0 && param_grads != nullptr) {
      (*param_grads)[static_cast<std::size_t>(node.slot)] += node.grad;
    }
  }
}

// ---- linear algebra -------------------------------------------------------

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError(fmt::format("matmul: {}x{} * {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
  }
  return a.tape()->record(a.value() * b.value(), {a, b},
                          [a, b](Tape& t, const Matrix&, const Matrix& g) {
                            if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
                            if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
                          });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.cols()) {
    throw ShapeError(
        fmt::format("matmul_nt: {}x{} * ({}x{})^T", a.rows(), a.cols(), b.rows(), b.cols()));
  }
  return a.tape()->record(a.value() * b.value().transpose(), {a, b},
                          [a, b](Tape& t, const Matrix&, const Matrix& g) {
                            if (t.requires_grad(a)) t.accumulate(a, g * b.value());
                            if (t.requires_grad(b)) t.accumulate(b, g.transpose() * a.value());
                          });
}

Var transpose(Var a) {
  return a.tape()->record(a.value().transpose(), {a},
                          [a](Tape& t, const Matrix&, const Matrix& g) {
                            t.accumulate(a, g.transpose());
                          });
}

// ---- elementwise ----------------------------------------------------------

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  return a.tape()->record(a.value() + b.value(), {a, b},
                          [a, b](Tape& t, const Matrix&, const Matrix& g) {
                            t.accumulate(a, g);
                            t.accumulate(b, g);
                          });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  return a.tape()->record(a.value() - b.value(), {a, b},
                          [a, b](Tape& t, const Matrix&, const Matrix& g) {
                            t.accumulate(a, g);
                            if (t.requires_grad(b)) t.accumulate(b, -g);
                          });
}

Var hadamard(Var a, Var b) {
  require_same_shape(a, b, "hadamard");
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b},
                          [a, b](Tape& t, const Matrix&, const Matrix& g) {
                            if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
                            if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
                          });
}

Var divide(Var a, Var b) {
  require_same_shape(a, b, "divide");
  return a.tape()->record(
      a.value().cwiseQuotient(b.value()), {a, b}, [a, b](Tape& t, const Matrix& out, const Matrix& g) {
        if (t.requires_grad(a)) t.accumulate(a, g.cwiseQuotient(b.value()));
        if (t.requires_grad(b)) {
          t.accumulate(b, -g.cwiseProduct(out).cwiseQuotient(b.value()));
        }
      });
}

Var scale(Var a, double factor) {
  return a.tape()->record(a.value() * factor, {a},
                          [a, factor](Tape& t, const Matrix&, const Matrix& g) {
                            t.accumulate(a, g * factor);
                          });
}

Var add_scalar(Var a, double offset) {
  return a.tape()->record(a.value().array() + offset, {a},
                          [a](Tape& t, const Matrix&, const Matrix& g) { t.accumulate(a, g); });
}

Var add_row(Var a, Var row_vec) {
  require_same_tape(a, row_vec);
  if (row_vec.rows() != 1 || row_vec.cols() != a.cols()) {
    throw ShapeError(fmt::format("add_row: row {}x{} for matrix with {} cols", row_vec.rows(),
                                 row_vec.cols(), a.cols()));
  }
  Matrix out = a.value();
  out.rowwise() += row_vec.value().row(0);
  return a.tape()->record(std::move(out), {a, row_vec},
                          [a, row_vec](Tape& t, const Matrix&, const Matrix& g) {
                            t.accumulate(a, g);
                            if (t.requires_grad(row_vec)) t.accumulate(row_vec, g.colwise().sum());
                          });
}

Var outer_sum(Var col_a, Var col_b) {
  require_same_tape(col_a, col_b);
  if (col_a.cols() != 1 || col_b.cols() != 1) throw ShapeError("outer_sum: expects column vectors");
  const Eigen::Index n = col_a.rows();
  const Eigen::Index m = col_b.rows();
  Matrix out(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) out(i, j) = col_a.value()(i, 0) + col_b.value()(j, 0);
  }
  return col_a.tape()->record(std::move(out), {col_a, col_b},
                              [col_a, col_b](Tape& t, const Matrix&, const Matrix& g) {
                                if (t.requires_grad(col_a)) t.accumulate(col_a, g.rowwise().sum());
                                if (t.requires_grad(col_b)) {
                                  t.accumulate(col_b, g.colwise().sum().transpose());
                                }
                              });
}

Var scale_by(Var a, Var s) {
  require_same_tape(a, s);
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError("scale_by: factor must be 1x1");
  return a.tape()->record(a.value() * s.scalar(), {a, s},
                          [a, s](Tape& t, const Matrix&, const Matrix& g) {
                            if (t.requires_grad(a)) t.accumulate(a, g * s.scalar());
                            if (t.requires_grad(s)) {
                              t.accumulate(s, Matrix::Constant(1, 1, g.cwiseProduct(a.value()).sum()));
                            }
                          });
}

// ---- nonlinearities -------------------------------------------------------

Var relu(Var a) {
  return a.tape()->record(a.value().cwiseMax(0.0), {a},
                          [a](Tape& t, const Matrix&, const Matrix& g) {
                            t.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
                          });
}

Var leaky_relu(Var a, double slope) {
  Matrix out = (a.value().array() > 0.0).select(a.value(), a.value() * slope);
  return a.tape()->record(std::move(out), {a},
                          [a, slope](Tape& t, const Matrix&, const Matrix& g) {
                            t.accumulate(a, (a.value().array() > 0.0).select(g, g * slope));
                          });
}

Var sigmoid(Var a) {
  Matrix out = a.value().unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& y, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var exp(Var a) {
  return a.tape()->record(a.value().array().exp().matrix(), {a},
                          [a](Tape& t, const Matrix& y, const Matrix& g) {
                            t.accumulate(a, g.cwiseProduct(y));
                          });
}

Var softmax_rows(Var a) {
  Matrix out = a.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double m = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& y, const Matrix& g) {
    const Vector dots = g.cwiseProduct(y).rowwise().sum();
    Matrix grad = g;
    grad.colwise() -= dots;
    t.accumulate(a, grad.cwiseProduct(y));
  });
}

Var log_softmax_rows(Var a) {
  Matrix out = a.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double m = out.row(i).maxCoeff();
    const double lse = m + std::log((out.row(i).array() - m).exp().sum());
    out.row(i).array() -= lse;
  }
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& y, const Matrix& g) {
    const Vector gsum = g.rowwise().sum();
    Matrix soft = y.array().exp().matrix();
    for (Eigen::Index i = 0; i < soft.rows(); ++i) soft.row(i) *= gsum(i);
    t.accumulate(a, g - soft);
  });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  require_same_tape(x, gamma);
  require_same_tape(x, beta);
  const Eigen::Index n = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n) {
    throw ShapeError("layer_norm_rows: gamma/beta must be 1 x cols");
  }
  Matrix normed(x.rows(), n);
  Vector inv_std(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.value().row(i).mean();
    const double var = (x.value().row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    normed.row(i) = (x.value().row(i).array() - mu) * inv_std(i);
  }
  Matrix out = normed;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) = out.row(i).cwiseProduct(gamma.value().row(0)) + beta.value().row(0);
  }
  return x.tape()->record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, normed, inv_std](Tape& t, const Matrix&, const Matrix& g) {
        if (t.requires_grad(gamma)) t.accumulate(gamma, g.cwiseProduct(normed).colwise().sum());
        if (t.requires_grad(beta)) t.accumulate(beta, g.colwise().sum());
        if (!t.requires_grad(x)) return;
        Matrix gx(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
          const RowVector dn = g.row(i).cwiseProduct(gamma.value().row(0));
          const double mean_dn = dn.mean();
          const double mean_dn_n = dn.cwiseProduct(normed.row(i)).mean();
          gx.row(i) = (dn.array() - mean_dn - normed.row(i).array() * mean_dn_n) * inv_std(i);
        }
        t.accumulate(x, gx);
      });
}

// ---- structural -----------------------------------------------------------

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ShapeError(fmt::format("slice_cols: [{}, {}) of {} cols", start, start + count, a.cols()));
  }
  return a.tape()->record(a.value().middleCols(start, count), {a},
                          [a, start, count](Tape& t, const Matrix&, const Matrix& g) {
                            Matrix full = Matrix::Zero(a.rows(), a.cols());
                            full.middleCols(start, count) = g;
                            t.accumulate(a, full);
                          });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape* tape = parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.tape() != tape) throw ShapeError("concat_cols: mixed tapes");
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  std::vector<Var> captured(parts.begin(), parts.end());
  return tape->record(std::move(out), parts, [captured](Tape& t, const Matrix&, const Matrix& g) {
    Eigen::Index off = 0;
    for (const Var& p : captured) {
      if (t.requires_grad(p)) t.accumulate(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Var row(Var a, Eigen::Index index) {
  if (index < 0 || index >= a.rows()) throw ShapeError("row: index out of range");
  return a.tape()->record(a.value().row(index), {a},
                          [a, index](Tape& t, const Matrix&, const Matrix& g) {
                            Matrix full = Matrix::Zero(a.rows(), a.cols());
                            full.row(index) = g.row(0);
                            t.accumulate(a, full);
                          });
}

Var shift_rows(Var a, Eigen::Index offset) {
  const Eigen::Index n = a.rows();
  Matrix out = Matrix::Zero(n, a.cols());
  for (Eigen::Index t = 0; t < n; ++t) {
    const Eigen::Index src = t - offset;
    if (src >= 0 && src < n) out.row(t) = a.value().row(src);
  }
  return a.tape()->record(std::move(out), {a}, [a, offset](Tape& tp, const Matrix&, const Matrix& g) {
    const Eigen::Index rows = a.rows();
    Matrix grad = Matrix::Zero(rows, a.cols());
    for (Eigen::Index t = 0; t < rows; ++t) {
      const Eigen::Index src = t - offset;
      if (src >= 0 && src < rows) grad.row(src) += g.row(t);
    }
    tp.accumulate(a, grad);
  });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw ShapeError("reshape: element count mismatch");
  Matrix out = from_row_major_flat(to_row_major_flat(a.value()), rows, cols);
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix&, const Matrix& g) {
    t.accumulate(a, from_row_major_flat(to_row_major_flat(g), a.rows(), a.cols()));
  });
}

// ---- reductions -----------------------------------------------------------

Var sum(Var a) {
  return a.tape()->record(Matrix::Constant(1, 1, a.value().sum()), {a},
                          [a](Tape& t, const Matrix&, const Matrix& g) {
                            t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
                          });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return a.tape()->record(Matrix::Constant(1, 1, a.value().sum() / n), {a},
                          [a, n](Tape& t, const Matrix&, const Matrix& g) {
                            t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
                          });
}

Var mean_rows(Var a) {
  const double n = static_cast<double>(a.rows());
  return a.tape()->record(a.value().colwise().mean(), {a},
                          [a, n](Tape& t, const Matrix&, const Matrix& g) {
                            Matrix full(a.rows(), a.cols());
                            full.rowwise() = g.row(0) / n;
                            t.accumulate(a, full);
                          });
}

Var l2_norm(Var a) {
  const double norm = a.value().norm();
  return a.tape()->record(Matrix::Constant(1, 1, norm), {a},
                          [a, norm](Tape& t, const Matrix&, const Matrix& g) {
                            if (norm == 0.0) return;
                            t.accumulate(a, a.value() * (g(0, 0) / norm));
                          });
}

Var cosine_distance(Var u, Var v) {
  require_same_shape(u, v, "cosine_distance");
  const double nu = u.value().norm();
  const double nv = v.value().norm();
  if (nu == 0.0 || nv == 0.0) throw Error("cosine_distance: zero vector has no direction");
  const double cos = u.value().cwiseProduct(v.value()).sum() / (nu * nv);
  return u.tape()->record(
      Matrix::Constant(1, 1, 0.5 * (1.0 - cos)), {u, v},
      [u, v, nu, nv, cos](Tape& t, const Matrix&, const Matrix& g) {
        const double s = -0.5 * g(0, 0);
        if (t.requires_grad(u)) {
          t.accumulate(u, s * (v.value() / (nu * nv) - u.value() * (cos / (nu * nu))));
        }
        if (t.requires_grad(v)) {
          t.accumulate(v, s * (u.value() / (nu * nv) - v.value() * (cos / (nv * nv))));
        }
      });
}

}  // namespace latad::ad
