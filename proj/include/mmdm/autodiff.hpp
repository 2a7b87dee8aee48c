#pragma once

// Reverse-mode differentiation over dense matrices. A Graph records one
// forward pass; backward() walks the tape once and accumulates gradients
// into the Parameters that were read.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mmdm/tensor.hpp"

namespace mmdm::ad {

struct Parameter {
  Mat value;
  Mat grad;
};

/// Named parameters in a stable (lexicographic) order.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Mat init);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Parameter> params_;
};

class Graph;

/// Handle to a node on a Graph tape.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Graph {
 public:
  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var constant(Mat value);
  Var param(Parameter& p);

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  /// Seed d(loss)/d(out) and propagate to every parameter leaf.
  void backward(Var out, const Mat& seed);

  // Used by op implementations.
  Var emplace(Mat value, std::vector<Var> inputs, std::function<void(const Mat& grad)> backward);
  void accumulate(Var v, const Mat& g);

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    std::function<void(const Mat&)> backward;
  };
  std::deque<Node> nodes_;
  bool record_;
};

// Elementwise and linear-algebra ops.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_row(Var x, Var row);        // x (n×h) + row (1×h) broadcast
Var broadcast_row(Var row, Eigen::Index n);
Var gelu(Var x);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var mean_rows(Var x);               // n×h -> 1×h

// Shape ops.
Var reshape(Var x, Eigen::Index rows, Eigen::Index cols);  // row-major order
Var row_slice(Var x, Eigen::Index start, Eigen::Index n);
Var col_slice(Var x, Eigen::Index start, Eigen::Index n);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var permute_cols(Var x, const std::vector<int>& source_of);  // out[:, k] = x[:, source_of[k]]
Var gather_rows(Var table, const std::vector<int>& rows);

/// Row i taken from `if_set` where mask[i] is true, else from `otherwise`.
Var select_rows(const std::vector<bool>& mask, Var if_set, Var otherwise);

}  // namespace mmdm::ad
