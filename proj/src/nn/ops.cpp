#include "qeye/nn/ops.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace qeye::nn {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  auto& g = a.graph();
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Var parents[] = {a, b};
  return g.record(a.value() * b.value(), parents, [a, b](Graph& g, const Matrix& d) {
    if (g.requires_grad(a)) g.accumulate_expr(a, d * b.value().transpose());
    if (g.requires_grad(b)) g.accumulate_expr(b, a.value().transpose() * d);
  });
}

Var matmul_nt(Var a, Var b) {
  auto& g = a.graph();
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Var parents[] = {a, b};
  return g.record(a.value() * b.value().transpose(), parents, [a, b](Graph& g, const Matrix& d) {
    if (g.requires_grad(a)) g.accumulate_expr(a, d * b.value());
    if (g.requires_grad(b)) g.accumulate_expr(b, d.transpose() * a.value());
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Var parents[] = {a, b};
  return a.graph().record(a.value() + b.value(), parents, [a, b](Graph& g, const Matrix& d) {
    g.accumulate(a, d);
    g.accumulate(b, d);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Var parents[] = {a, b};
  return a.graph().record(a.value() - b.value(), parents, [a, b](Graph& g, const Matrix& d) {
    g.accumulate(a, d);
    g.accumulate_expr(b, -d);
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Var parents[] = {a, b};
  return a.graph().record(a.value().cwiseProduct(b.value()), parents, [a, b](Graph& g, const Matrix& d) {
    if (g.requires_grad(a)) g.accumulate_expr(a, d.cwiseProduct(b.value()));
    if (g.requires_grad(b)) g.accumulate_expr(b, d.cwiseProduct(a.value()));
  });
}

Var scale(Var a, double s) {
  Var parents[] = {a};
  return a.graph().record(a.value() * s, parents, [a, s](Graph& g, const Matrix& d) { g.accumulate_expr(a, d * s); });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: bad row vector shape");
  Var parents[] = {a, row};
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.graph().record(std::move(out), parents, [a, row](Graph& g, const Matrix& d) {
    g.accumulate(a, d);
    if (g.requires_grad(row)) g.accumulate_expr(row, d.colwise().sum());
  });
}

Var scale_rows(Var a, Var s) {
  if (s.cols() != 1 || s.rows() != a.rows()) throw std::invalid_argument("scale_rows: bad scale shape");
  Var parents[] = {a, s};
  Matrix out = s.value().col(0).asDiagonal() * a.value();
  return a.graph().record(std::move(out), parents, [a, s](Graph& g, const Matrix& d) {
    if (g.requires_grad(a)) g.accumulate_expr(a, s.value().col(0).asDiagonal() * d);
    if (g.requires_grad(s)) g.accumulate_expr(s, d.cwiseProduct(a.value()).rowwise().sum());
  });
}

Var mul_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("mul_row: bad row vector shape");
  Var parents[] = {a, row};
  Matrix out = a.value() * row.value().row(0).asDiagonal();
  return a.graph().record(std::move(out), parents, [a, row](Graph& g, const Matrix& d) {
    if (g.requires_grad(a)) g.accumulate_expr(a, d * row.value().row(0).asDiagonal());
    if (g.requires_grad(row)) g.accumulate_expr(row, d.cwiseProduct(a.value()).colwise().sum());
  });
}

Var relu(Var a) {
  Var parents[] = {a};
  return a.graph().record(a.value().cwiseMax(0.0), parents, [a](Graph& g, const Matrix& d) {
    g.accumulate_expr(a, (a.value().array() > 0.0).cast<double>().matrix().cwiseProduct(d));
  });
}

Var gelu(Var a) {
  static constexpr double k = 0.7978845608028654;  // sqrt(2 / pi)
  static constexpr double c = 0.044715;
  const Matrix& x = a.value();
  Matrix t = (k * (x.array() + c * x.array().cube())).tanh().matrix();
  Matrix out = (0.5 * x.array() * (1.0 + t.array())).matrix();
  Var parents[] = {a};
  return a.graph().record(std::move(out), parents, [a, t](Graph& g, const Matrix& d) {
    const auto x = a.value().array();
    auto dt = (1.0 - t.array().square()) * k * (1.0 + 3.0 * c * x.square());
    g.accumulate_expr(a, (d.array() * (0.5 * (1.0 + t.array()) + 0.5 * x * dt)).matrix());
  });
}

Var tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  Var parents[] = {a};
  return a.graph().record(out, parents, [a, out](Graph& g, const Matrix& d) {
    g.accumulate_expr(a, (d.array() * (1.0 - out.array().square())).matrix());
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Matrix& v = x.value();
  const auto n = v.cols();
  Eigen::VectorXd mean = v.rowwise().mean();
  Matrix centered = v.colwise() - mean;
  Eigen::VectorXd inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<double>(n)) + eps).sqrt().inverse().matrix();
  Matrix xhat = inv_std.asDiagonal() * centered;
  Matrix out = (xhat * gamma.value().row(0).asDiagonal()).rowwise() + beta.value().row(0);
  Var parents[] = {x, gamma, beta};
  return x.graph().record(std::move(out), parents, [x, gamma, beta, xhat, inv_std, n](Graph& g, const Matrix& d) {
    if (g.requires_grad(gamma)) g.accumulate_expr(gamma, d.cwiseProduct(xhat).colwise().sum());
    if (g.requires_grad(beta)) g.accumulate_expr(beta, d.colwise().sum());
    if (g.requires_grad(x)) {
      Matrix dxhat = d * gamma.value().row(0).asDiagonal();
      Eigen::VectorXd m1 = dxhat.rowwise().mean();
      Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
      Matrix dx = dxhat;
      dx.colwise() -= m1;
      dx -= m2.asDiagonal() * xhat;
      g.accumulate_expr(x, inv_std.asDiagonal() * dx);
    }
  });
}

Var softmax_rows(Var x, std::span<const char> key_valid) {
  const Matrix& v = x.value();
  if (!key_valid.empty() && static_cast<Eigen::Index>(key_valid.size()) != v.cols()) {
    throw std::invalid_argument("softmax_rows: mask width mismatch");
  }
  Matrix out = Matrix::Zero(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      if (key_valid.empty() || key_valid[j]) m = std::max(m, v(i, j));
    }
    if (!std::isfinite(m)) continue;  // every key masked
    double s = 0;
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      if (key_valid.empty() || key_valid[j]) {
        out(i, j) = std::exp(v(i, j) - m);
        s += out(i, j);
      }
    }
    out.row(i) /= s;
  }
  Var parents[] = {x};
  return x.graph().record(out, parents, [x, out](Graph& g, const Matrix& d) {
    Eigen::VectorXd dot = d.cwiseProduct(out).rowwise().sum();
    Matrix dx = d;
    dx.colwise() -= dot;
    g.accumulate_expr(x, out.cwiseProduct(dx));
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Eigen::Index rows = 0;
  const auto cols = parts[0].cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].graph().record(std::move(out), parts, [ps](Graph& g, const Matrix& d) {
    Eigen::Index r = 0;
    for (const auto& p : ps) {
      if (g.requires_grad(p)) g.accumulate_expr(p, d.middleRows(r, p.rows()));
      r += p.rows();
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Eigen::Index cols = 0;
  const auto rows = parts[0].rows();
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].graph().record(std::move(out), parts, [ps](Graph& g, const Matrix& d) {
    Eigen::Index c = 0;
    for (const auto& p : ps) {
      if (g.requires_grad(p)) g.accumulate_expr(p, d.middleCols(c, p.cols()));
      c += p.cols();
    }
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::invalid_argument("slice_rows: out of range");
  Var parents[] = {a};
  return a.graph().record(a.value().middleRows(start, count), parents, [a, start, count](Graph& g, const Matrix& d) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleRows(start, count) = d;
    g.accumulate(a, full);
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::invalid_argument("slice_cols: out of range");
  Var parents[] = {a};
  return a.graph().record(a.value().middleCols(start, count), parents, [a, start, count](Graph& g, const Matrix& d) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleCols(start, count) = d;
    g.accumulate(a, full);
  });
}

Var shift_rows(Var a, Eigen::Index offset) {
  const auto n = a.rows();
  Matrix out = Matrix::Zero(n, a.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    auto src = i + offset;
    if (src >= 0 && src < n) out.row(i) = a.value().row(src);
  }
  Var parents[] = {a};
  return a.graph().record(std::move(out), parents, [a, offset, n](Graph& g, const Matrix& d) {
    Matrix back = Matrix::Zero(n, a.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      auto src = i + offset;
      if (src >= 0 && src < n) back.row(src) += d.row(i);
    }
    g.accumulate(a, back);
  });
}

Var embedding(Graph& g, Parameter& table, std::span<const int> ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.value.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.value.rows()) throw std::out_of_range("embedding: id out of range in " + table.name);
    out.row(static_cast<Eigen::Index>(i)) = table.value.row(ids[i]);
  }
  std::vector<int> rows(ids.begin(), ids.end());
  Parameter* p = &table;
  return g.record_source(std::move(out), !table.frozen, [p, rows](Graph& g, const Matrix& d) {
    g.accumulate_param_rows(*p, rows, d);
  });
}

Var mask_rows(Var a, std::span<const char> row_valid) {
  if (static_cast<Eigen::Index>(row_valid.size()) != a.rows()) throw std::invalid_argument("mask_rows: size mismatch");
  Eigen::VectorXd m(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) m[i] = row_valid[i] ? 1.0 : 0.0;
  Matrix out = Matrix::Zero(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (row_valid[i]) out.row(i) = a.value().row(i);
  }
  Var parents[] = {a};
  return a.graph().record(std::move(out), parents,
                          [a, m](Graph& g, const Matrix& d) { g.accumulate_expr(a, m.asDiagonal() * d); });
}

Var mean_rows(Var a, std::span<const char> row_valid) {
  const auto n = a.rows();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  double count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (row_valid.empty() || row_valid[i]) {
      w[i] = 1.0;
      count += 1;
    }
  }
  if (count == 0) throw std::invalid_argument("mean_rows: no valid rows");
  w /= count;
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(a.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (w[i] != 0) out += w[i] * a.value().row(i);
  }
  Var parents[] = {a};
  return a.graph().record(Matrix(out), parents, [a, w](Graph& g, const Matrix& d) {
    g.accumulate_expr(a, w * d.row(0));
  });
}

Var max_rows(Var a, std::span<const char> row_valid) {
  const auto n = a.rows();
  const auto c = a.cols();
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(c), -1);
  Matrix out(1, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!row_valid.empty() && !row_valid[i]) continue;
      if (a.value()(i, j) > best) {
        best = a.value()(i, j);
        arg[j] = i;
      }
    }
    if (arg[j] < 0) throw std::invalid_argument("max_rows: no valid rows");
    out(0, j) = best;
  }
  Var parents[] = {a};
  return a.graph().record(std::move(out), parents, [a, arg, n](Graph& g, const Matrix& d) {
    Matrix back = Matrix::Zero(n, a.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j) back(arg[j], j) = d(0, j);
    g.accumulate(a, back);
  });
}

Var displacement_scale(Var z, Var h, double beta) {
  require_same_shape(z.value(), h.value(), "displacement_scale");
  const auto n = z.rows();
  Eigen::VectorXd zn = z.value().rowwise().norm();
  Eigen::VectorXd hn = h.value().rowwise().norm();
  Matrix alpha(n, 1);
  std::vector<char> active(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (hn[i] == 0.0) {
      alpha(i, 0) = 0.0;
      continue;
    }
    double a = zn[i] / hn[i] * beta;
    if (a < 1.0) {
      alpha(i, 0) = a;
      active[i] = 1;
    } else {
      alpha(i, 0) = 1.0;
    }
  }
  Var parents[] = {z, h};
  return z.graph().record(alpha, parents, [z, h, zn, hn, alpha, active, beta](Graph& g, const Matrix& d) {
    const auto n = z.rows();
    Matrix dz = Matrix::Zero(n, z.cols());
    Matrix dh = Matrix::Zero(n, z.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!active[i]) continue;
      // alpha = beta * |z| / |h|
      if (zn[i] > 0) dz.row(i) = d(i, 0) * beta / hn[i] * z.value().row(i) / zn[i];
      dh.row(i) = -d(i, 0) * alpha(i, 0) / (hn[i] * hn[i]) * h.value().row(i);
    }
    g.accumulate(z, dz);
    g.accumulate(h, dh);
  });
}

Var dropout(Var a, double p, Rng& rng) {
  if (!a.graph().training || p <= 0.0) return a;
  Matrix m(a.rows(), a.cols());
  const double keep = 1.0 - p;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
  }
  Var parents[] = {a};
  return a.graph().record(a.value().cwiseProduct(m), parents,
                          [a, m](Graph& g, const Matrix& d) { g.accumulate_expr(a, d.cwiseProduct(m)); });
}

Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& logits) {
  Eigen::RowVectorXd e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  const auto n = logits.rows();
  if (static_cast<Eigen::Index>(targets.size()) != n) throw std::invalid_argument("cross_entropy: target count");
  Matrix probs(n, logits.cols());
  double loss = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::RowVectorXd row = logits.value().row(i);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    probs.row(i) = (row.array() - lse).exp().matrix();
    loss -= row[targets[i]] - lse;
  }
  loss /= static_cast<double>(n);
  std::vector<int> t(targets.begin(), targets.end());
  Var parents[] = {logits};
  return logits.graph().record(Matrix::Constant(1, 1, loss), parents, [logits, probs, t, n](Graph& g, const Matrix& d) {
    Matrix grad = probs;
    for (Eigen::Index i = 0; i < n; ++i) grad(i, t[i]) -= 1.0;
    g.accumulate_expr(logits, grad * (d(0, 0) / static_cast<double>(n)));
  });
}

Var sum_all(Var a) {
  Var parents[] = {a};
  return a.graph().record(Matrix::Constant(1, 1, a.value().sum()), parents, [a](Graph& g, const Matrix& d) {
    g.accumulate_expr(a, Matrix::Constant(a.rows(), a.cols(), d(0, 0)));
  });
}

}  // namespace qeye::nn
