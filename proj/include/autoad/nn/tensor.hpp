#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "autoad/common.hpp"

namespace autoad::nn {

using Matrix = Eigen::MatrixXd;

// Persistent trainable (or frozen) weight. Gradients accumulate across
// backward passes until zero_grad.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Matrix v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())),
        trainable(train) {}

  void zero_grad() { grad.setZero(); }
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::function<void(Node&)> backward_op;  // pushes this->grad to parents
  std::vector<NodePtr> parents;
};

// One tape per forward pass. Parameters outlive graphs; leaves created via
// param() push their gradient into the Parameter during backward.
class Graph {
 public:
  NodePtr make(Matrix value, bool requires_grad);
  NodePtr constant(Matrix value) { return make(std::move(value), false); }
  NodePtr param(Parameter& p);

  // Reverse-mode sweep from a 1x1 loss node.
  void backward(const NodePtr& loss);

 private:
  std::vector<NodePtr> tape_;
};

// --- ops -------------------------------------------------------------------

NodePtr matmul(Graph& g, const NodePtr& a, const NodePtr& b);        // A*B
NodePtr matmul_nt(Graph& g, const NodePtr& a, const NodePtr& b);     // A*B^T
NodePtr add(Graph& g, const NodePtr& a, const NodePtr& b);           // same shape
NodePtr add_rowvec(Graph& g, const NodePtr& a, const NodePtr& bias); // bias 1xC
NodePtr add_const(Graph& g, const NodePtr& a, const Matrix& c);
NodePtr scale(Graph& g, const NodePtr& a, double s);
// a scaled by tanh of a 1x1 gate node.
NodePtr tanh_gate_scale(Graph& g, const NodePtr& a, const NodePtr& gate);
NodePtr gelu(Graph& g, const NodePtr& a);
NodePtr softmax_rows(Graph& g, const NodePtr& a);
NodePtr layer_norm(Graph& g, const NodePtr& a, const NodePtr& gamma,
                   const NodePtr& beta, double eps = 1e-5);
NodePtr slice_rows(Graph& g, const NodePtr& a, Eigen::Index r0, Eigen::Index n);
NodePtr slice_cols(Graph& g, const NodePtr& a, Eigen::Index c0, Eigen::Index n);
NodePtr concat_rows(Graph& g, const std::vector<NodePtr>& parts);
NodePtr concat_cols(Graph& g, const std::vector<NodePtr>& parts);
NodePtr mean_all(Graph& g, const NodePtr& a);
NodePtr sigmoid(Graph& g, const NodePtr& a);

// Rows of an embedding table selected by id; backward scatter-adds.
NodePtr embed_rows(Graph& g, Parameter& table, const std::vector<int>& ids);

// Mean of per-element weighted BCE on logits (numerically stable fused op).
// labels/weights are Nx1 constants; weights are normalized by their sum.
NodePtr bce_with_logits(Graph& g, const NodePtr& logits, const Matrix& labels,
                        const Matrix& weights);

// Weighted mean over rows of -log softmax(logits)[target]. Rows with weight 0
// are ignored.
NodePtr cross_entropy_rows(Graph& g, const NodePtr& logits,
                           const std::vector<int>& targets,
                           const std::vector<double>& row_weights);

// --- init / rng ------------------------------------------------------------

class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}
  double gauss() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  uint64_t next_u64() { return engine_(); }
  // Uniform integer in [0, n).
  int index(int n) { return static_cast<int>(engine_() % static_cast<uint64_t>(n)); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

Matrix gauss_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev);

}  // namespace autoad::nn
