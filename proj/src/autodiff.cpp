#include "mmdm/autodiff.hpp"

#include <cmath>

#include "mmdm/error.hpp"

namespace mmdm::ad {

Parameter& ParameterSet::add(const std::string& name, Mat init) {
  require(!params_.count(name), ErrorKind::InvalidConfig, "duplicate parameter " + name);
  Parameter& p = params_[name];
  p.grad = Mat::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  return p;
}

Parameter& ParameterSet::at(const std::string& name) {
  auto it = params_.find(name);
  require(it != params_.end(), ErrorKind::InvalidInput, "unknown parameter " + name);
  return it->second;
}

const Parameter& ParameterSet::at(const std::string& name) const {
  auto it = params_.find(name);
  require(it != params_.end(), ErrorKind::InvalidInput, "unknown parameter " + name);
  return it->second;
}

void ParameterSet::zero_grad() {
  for (auto& [name, p] : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

const Mat& Var::value() const { return graph->value(*this); }

Var Graph::constant(Mat value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(Parameter& p) {
  Node& n = nodes_.emplace_back();
  n.value = p.value;
  if (record_) {
    n.needs_grad = true;
    n.param = &p;
  }
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::emplace(Mat value, std::vector<Var> inputs, std::function<void(const Mat&)> backward) {
  bool needs = false;
  if (record_)
    for (const Var& in : inputs) needs = needs || nodes_[in.id].needs_grad;
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(backward);
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Graph::accumulate(Var v, const Mat& g) {
  Node& n = nodes_[v.id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Graph::backward(Var out, const Mat& seed) {
  require(record_, ErrorKind::InvalidInput, "backward on a non-recording graph");
  require(seed.rows() == value(out).rows() && seed.cols() == value(out).cols(), ErrorKind::InvalidInput,
          "backward seed shape mismatch");
  accumulate(out, seed);
  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.param) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      // Move out first: the closure may append to other nodes' grads only.
      Mat g = std::move(n.grad);
      n.backward(g);
    }
  }
}

namespace {

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::InvalidInput,
          std::string(op) + ": shape mismatch");
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = *a.graph;
  require(a.cols() == b.rows(), ErrorKind::InvalidInput, "matmul: inner dimension mismatch");
  return g.emplace(a.value() * b.value(), {a, b}, [&g, a, b](const Mat& d) {
    if (g.needs_grad(a)) g.accumulate(a, d * b.value().transpose());
    if (g.needs_grad(b)) g.accumulate(b, a.value().transpose() * d);
  });
}

Var add(Var a, Var b) {
  Graph& g = *a.graph;
  check_same_shape(a.value(), b.value(), "add");
  return g.emplace(a.value() + b.value(), {a, b}, [&g, a, b](const Mat& d) {
    g.accumulate(a, d);
    g.accumulate(b, d);
  });
}

Var sub(Var a, Var b) {
  Graph& g = *a.graph;
  check_same_shape(a.value(), b.value(), "sub");
  return g.emplace(a.value() - b.value(), {a, b}, [&g, a, b](const Mat& d) {
    g.accumulate(a, d);
    if (g.needs_grad(b)) g.accumulate(b, -d);
  });
}

Var mul(Var a, Var b) {
  Graph& g = *a.graph;
  check_same_shape(a.value(), b.value(), "mul");
  return g.emplace(a.value().cwiseProduct(b.value()), {a, b}, [&g, a, b](const Mat& d) {
    if (g.needs_grad(a)) g.accumulate(a, d.cwiseProduct(b.value()));
    if (g.needs_grad(b)) g.accumulate(b, d.cwiseProduct(a.value()));
  });
}

Var scale(Var a, double s) {
  Graph& g = *a.graph;
  return g.emplace(a.value() * s, {a}, [&g, a, s](const Mat& d) { g.accumulate(a, d * s); });
}

Var add_row(Var x, Var row) {
  Graph& g = *x.graph;
  require(row.rows() == 1 && row.cols() == x.cols(), ErrorKind::InvalidInput, "add_row: shape mismatch");
  Mat out = x.value().rowwise() + row.value().row(0);
  return g.emplace(std::move(out), {x, row}, [&g, x, row](const Mat& d) {
    g.accumulate(x, d);
    if (g.needs_grad(row)) g.accumulate(row, d.colwise().sum());
  });
}

Var broadcast_row(Var row, Eigen::Index n) {
  Graph& g = *row.graph;
  require(row.rows() == 1, ErrorKind::InvalidInput, "broadcast_row: expected a row");
  Mat out = row.value().replicate(n, 1);
  return g.emplace(std::move(out), {row}, [&g, row](const Mat& d) { g.accumulate(row, d.colwise().sum()); });
}

Var gelu(Var x) {
  Graph& g = *x.graph;
  static constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  const Mat& v = x.value();
  Mat inner = (c * (v.array() + 0.044715 * v.array().cube())).matrix();
  Mat th = inner.array().tanh().matrix();
  Mat out = (0.5 * v.array() * (1.0 + th.array())).matrix();
  return g.emplace(std::move(out), {x}, [&g, x, th](const Mat& d) {
    const auto v = x.value().array();
    auto dinner = c * (1.0 + 3.0 * 0.044715 * v.square());
    auto local = 0.5 * (1.0 + th.array()) + 0.5 * v * (1.0 - th.array().square()) * dinner;
    g.accumulate(x, (d.array() * local).matrix());
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Graph& g = *x.graph;
  const Mat& v = x.value();
  const Eigen::Index h = v.cols();
  require(gamma.cols() == h && beta.cols() == h, ErrorKind::InvalidInput, "layer_norm: shape mismatch");
  Vec mean = v.rowwise().mean();
  Mat centered = v.colwise() - mean;
  Vec inv_std = (centered.array().square().rowwise().mean() + eps).rsqrt().matrix();
  Mat xhat = inv_std.asDiagonal() * centered;
  Mat out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return g.emplace(std::move(out), {x, gamma, beta}, [&g, x, gamma, beta, xhat, inv_std, h](const Mat& d) {
    if (g.needs_grad(gamma)) g.accumulate(gamma, d.cwiseProduct(xhat).colwise().sum());
    if (g.needs_grad(beta)) g.accumulate(beta, d.colwise().sum());
    if (g.needs_grad(x)) {
      Mat dxhat = (d.array().rowwise() * gamma.value().row(0).array()).matrix();
      Vec mean_d = dxhat.rowwise().mean();
      Vec mean_dx = dxhat.cwiseProduct(xhat).rowwise().mean();
      Mat dx = dxhat;
      dx.colwise() -= mean_d;
      dx -= mean_dx.asDiagonal() * xhat;
      g.accumulate(x, inv_std.asDiagonal() * dx);
    }
    (void)h;
  });
}

Var mean_rows(Var x) {
  Graph& g = *x.graph;
  const Eigen::Index n = x.rows();
  Mat out = x.value().colwise().mean();
  return g.emplace(std::move(out), {x}, [&g, x, n](const Mat& d) {
    g.accumulate(x, d.replicate(n, 1) / static_cast<double>(n));
  });
}

Var reshape(Var x, Eigen::Index rows, Eigen::Index cols) {
  Graph& g = *x.graph;
  require(rows * cols == x.value().size(), ErrorKind::InvalidInput, "reshape: size mismatch");
  const Eigen::Index r0 = x.rows(), c0 = x.cols();
  return g.emplace(reshaped(x.value(), rows, cols), {x},
                   [&g, x, r0, c0](const Mat& d) { g.accumulate(x, reshaped(d, r0, c0)); });
}

Var row_slice(Var x, Eigen::Index start, Eigen::Index n) {
  Graph& g = *x.graph;
  require(start >= 0 && start + n <= x.rows(), ErrorKind::InvalidInput, "row_slice: out of range");
  return g.emplace(x.value().middleRows(start, n), {x}, [&g, x, start, n](const Mat& d) {
    Mat full = Mat::Zero(x.rows(), x.cols());
    full.middleRows(start, n) = d;
    g.accumulate(x, full);
  });
}

Var col_slice(Var x, Eigen::Index start, Eigen::Index n) {
  Graph& g = *x.graph;
  require(start >= 0 && start + n <= x.cols(), ErrorKind::InvalidInput, "col_slice: out of range");
  return g.emplace(x.value().middleCols(start, n), {x}, [&g, x, start, n](const Mat& d) {
    Mat full = Mat::Zero(x.rows(), x.cols());
    full.middleCols(start, n) = d;
    g.accumulate(x, full);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorKind::InvalidInput, "concat_rows: empty");
  Graph& g = *parts.front().graph;
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const Var& p : parts) {
    require(p.cols() == cols, ErrorKind::InvalidInput, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return g.emplace(std::move(out), parts, [&g, parts](const Mat& d) {
    Eigen::Index at = 0;
    for (const Var& p : parts) {
      if (g.needs_grad(p)) g.accumulate(p, d.middleRows(at, p.rows()));
      at += p.rows();
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorKind::InvalidInput, "concat_cols: empty");
  Graph& g = *parts.front().graph;
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  for (const Var& p : parts) {
    require(p.rows() == rows, ErrorKind::InvalidInput, "concat_cols: row mismatch");
    cols += p.cols();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return g.emplace(std::move(out), parts, [&g, parts](const Mat& d) {
    Eigen::Index at = 0;
    for (const Var& p : parts) {
      if (g.needs_grad(p)) g.accumulate(p, d.middleCols(at, p.cols()));
      at += p.cols();
    }
  });
}

Var permute_cols(Var x, const std::vector<int>& source_of) {
  Graph& g = *x.graph;
  require(static_cast<Eigen::Index>(source_of.size()) == x.cols(), ErrorKind::InvalidInput,
          "permute_cols: size mismatch");
  Mat out(x.rows(), x.cols());
  for (std::size_t k = 0; k < source_of.size(); ++k) out.col(k) = x.value().col(source_of[k]);
  return g.emplace(std::move(out), {x}, [&g, x, source_of](const Mat& d) {
    Mat back = Mat::Zero(d.rows(), d.cols());
    for (std::size_t k = 0; k < source_of.size(); ++k) back.col(source_of[k]) += d.col(k);
    g.accumulate(x, back);
  });
}

Var gather_rows(Var table, const std::vector<int>& rows) {
  Graph& g = *table.graph;
  Mat out(static_cast<Eigen::Index>(rows.size()), table.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < table.rows(), ErrorKind::InvalidInput, "gather_rows: index out of range");
    out.row(i) = table.value().row(rows[i]);
  }
  return g.emplace(std::move(out), {table}, [&g, table, rows](const Mat& d) {
    Mat back = Mat::Zero(table.rows(), table.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) back.row(rows[i]) += d.row(i);
    g.accumulate(table, back);
  });
}

Var select_rows(const std::vector<bool>& mask, Var if_set, Var otherwise) {
  Graph& g = *if_set.graph;
  check_same_shape(if_set.value(), otherwise.value(), "select_rows");
  require(static_cast<Eigen::Index>(mask.size()) == if_set.rows(), ErrorKind::InvalidInput,
          "select_rows: mask length mismatch");
  Mat out = otherwise.value();
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.row(i) = if_set.value().row(i);
  return g.emplace(std::move(out), {if_set, otherwise}, [&g, mask, if_set, otherwise](const Mat& d) {
    Mat a = Mat::Zero(d.rows(), d.cols());
    Mat b = d;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) {
        a.row(i) = d.row(i);
        b.row(i).setZero();
      }
    if (g.needs_grad(if_set)) g.accumulate(if_set, a);
    if (g.needs_grad(otherwise)) g.accumulate(otherwise, b);
  });
}

}  // namespace mmdm::ad
