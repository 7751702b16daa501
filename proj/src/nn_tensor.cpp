#include "autoad/nn/tensor.hpp"

#include <cmath>

namespace autoad::nn {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check(bool ok, const char* msg) {
  if (!ok) throw AutoadError(ErrorCode::DimMismatch, msg);
}
}  // namespace

NodePtr Graph::make(Matrix value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->grad = Matrix::Zero(value.rows(), value.cols());
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  tape_.push_back(node);
  return node;
}

NodePtr Graph::param(Parameter& p) {
  auto node = make(p.value, p.trainable);
  if (p.trainable) {
    Parameter* ptr = &p;
    node->backward_op = [ptr](Node& self) { ptr->grad += self.grad; };
  }
  return node;
}

void Graph::backward(const NodePtr& loss) {
  check(loss->value.rows() == 1 && loss->value.cols() == 1, "loss must be 1x1");
  loss->grad(0, 0) = 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    Node& node = **it;
    if (node.requires_grad && node.backward_op) node.backward_op(node);
  }
}

namespace {

NodePtr unary(Graph& g, const NodePtr& a, Matrix value,
              std::function<void(Node&, Node&)> push) {
  auto out = g.make(std::move(value), a->requires_grad);
  out->parents = {a};
  if (out->requires_grad) {
    out->backward_op = [push](Node& self) {
      Node& pa = *self.parents[0];
      if (pa.requires_grad) push(self, pa);
    };
  }
  return out;
}

}  // namespace

NodePtr matmul(Graph& g, const NodePtr& a, const NodePtr& b) {
  check(a->value.cols() == b->value.rows(), "matmul inner dims");
  auto out = g.make(a->value * b->value, a->requires_grad || b->requires_grad);
  out->parents = {a, b};
  if (out->requires_grad) {
    out->backward_op = [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) pa.grad += self.grad * pb.value.transpose();
      if (pb.requires_grad) pb.grad += pa.value.transpose() * self.grad;
    };
  }
  return out;
}

NodePtr matmul_nt(Graph& g, const NodePtr& a, const NodePtr& b) {
  check(a->value.cols() == b->value.cols(), "matmul_nt inner dims");
  auto out = g.make(a->value * b->value.transpose(),
                    a->requires_grad || b->requires_grad);
  out->parents = {a, b};
  if (out->requires_grad) {
    out->backward_op = [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) pa.grad += self.grad * pb.value;
      if (pb.requires_grad) pb.grad += self.grad.transpose() * pa.value;
    };
  }
  return out;
}

NodePtr add(Graph& g, const NodePtr& a, const NodePtr& b) {
  check(a->value.rows() == b->value.rows() && a->value.cols() == b->value.cols(),
        "add shapes");
  auto out = g.make(a->value + b->value, a->requires_grad || b->requires_grad);
  out->parents = {a, b};
  if (out->requires_grad) {
    out->backward_op = [](Node& self) {
      for (auto& p : self.parents) {
        if (p->requires_grad) p->grad += self.grad;
      }
    };
  }
  return out;
}

NodePtr add_rowvec(Graph& g, const NodePtr& a, const NodePtr& bias) {
  check(bias->value.rows() == 1 && bias->value.cols() == a->value.cols(),
        "add_rowvec bias shape");
  auto out = g.make(a->value.rowwise() + bias->value.row(0),
                    a->requires_grad || bias->requires_grad);
  out->parents = {a, bias};
  if (out->requires_grad) {
    out->backward_op = [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) pa.grad += self.grad;
      if (pb.requires_grad) pb.grad.row(0) += self.grad.colwise().sum();
    };
  }
  return out;
}

NodePtr add_const(Graph& g, const NodePtr& a, const Matrix& c) {
  check(a->value.rows() == c.rows() && a->value.cols() == c.cols(), "add_const shapes");
  return unary(g, a, a->value + c,
               [](Node& self, Node& pa) { pa.grad += self.grad; });
}

NodePtr scale(Graph& g, const NodePtr& a, double s) {
  return unary(g, a, a->value * s,
               [s](Node& self, Node& pa) { pa.grad += self.grad * s; });
}

NodePtr tanh_gate_scale(Graph& g, const NodePtr& a, const NodePtr& gate) {
  check(gate->value.rows() == 1 && gate->value.cols() == 1, "gate must be 1x1");
  const double t = std::tanh(gate->value(0, 0));
  auto out = g.make(a->value * t, a->requires_grad || gate->requires_grad);
  out->parents = {a, gate};
  if (out->requires_grad) {
    out->backward_op = [t](Node& self) {
      Node& pa = *self.parents[0];
      Node& pg = *self.parents[1];
      if (pa.requires_grad) pa.grad += self.grad * t;
      if (pg.requires_grad) {
        pg.grad(0, 0) += (1.0 - t * t) * (self.grad.array() * pa.value.array()).sum();
      }
    };
  }
  return out;
}

NodePtr gelu(Graph& g, const NodePtr& a) {
  Matrix y = a->value.unaryExpr(
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
  return unary(g, a, std::move(y), [](Node& self, Node& pa) {
    Matrix dydx = pa.value.unaryExpr([](double x) {
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      return cdf + x * pdf;
    });
    pa.grad.array() += self.grad.array() * dydx.array();
  });
}

NodePtr softmax_rows(Graph& g, const NodePtr& a) {
  Matrix y = a->value;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double m = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  auto out = unary(g, a, y, [](Node& self, Node& pa) {
    for (Eigen::Index r = 0; r < self.value.rows(); ++r) {
      const double dot = self.grad.row(r).dot(self.value.row(r));
      pa.grad.row(r).array() +=
          (self.grad.row(r).array() - dot) * self.value.row(r).array();
    }
  });
  return out;
}

NodePtr layer_norm(Graph& g, const NodePtr& a, const NodePtr& gamma,
                   const NodePtr& beta, double eps) {
  const Eigen::Index C = a->value.cols();
  check(gamma->value.rows() == 1 && gamma->value.cols() == C, "layer_norm gamma");
  check(beta->value.rows() == 1 && beta->value.cols() == C, "layer_norm beta");
  Matrix xhat(a->value.rows(), C);
  Eigen::VectorXd inv_sigma(a->value.rows());
  for (Eigen::Index r = 0; r < a->value.rows(); ++r) {
    const double mu = a->value.row(r).mean();
    const double var = (a->value.row(r).array() - mu).square().mean();
    inv_sigma(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (a->value.row(r).array() - mu) * inv_sigma(r);
  }
  Matrix y = (xhat.array().rowwise() * gamma->value.row(0).array()).rowwise() +
             beta->value.row(0).array();
  auto out = g.make(std::move(y), a->requires_grad || gamma->requires_grad ||
                                      beta->requires_grad);
  out->parents = {a, gamma, beta};
  if (out->requires_grad) {
    out->backward_op = [xhat, inv_sigma](Node& self) {
      Node& pa = *self.parents[0];
      Node& pg = *self.parents[1];
      Node& pb = *self.parents[2];
      if (pg.requires_grad) {
        pg.grad.row(0) += (self.grad.array() * xhat.array()).colwise().sum().matrix();
      }
      if (pb.requires_grad) pb.grad.row(0) += self.grad.colwise().sum();
      if (pa.requires_grad) {
        const Eigen::Index C = xhat.cols();
        for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
          Eigen::RowVectorXd dxhat =
              self.grad.row(r).array() * pg.value.row(0).array();
          const double mean_dxhat = dxhat.mean();
          const double mean_dxhat_xhat =
              (dxhat.array() * xhat.row(r).array()).mean();
          pa.grad.row(r).array() +=
              inv_sigma(r) * (dxhat.array() - mean_dxhat -
                              xhat.row(r).array() * mean_dxhat_xhat);
          (void)C;
        }
      }
    };
  }
  return out;
}

NodePtr slice_rows(Graph& g, const NodePtr& a, Eigen::Index r0, Eigen::Index n) {
  check(r0 >= 0 && r0 + n <= a->value.rows(), "slice_rows range");
  return unary(g, a, a->value.middleRows(r0, n),
               [r0, n](Node& self, Node& pa) {
                 pa.grad.middleRows(r0, n) += self.grad;
               });
}

NodePtr slice_cols(Graph& g, const NodePtr& a, Eigen::Index c0, Eigen::Index n) {
  check(c0 >= 0 && c0 + n <= a->value.cols(), "slice_cols range");
  return unary(g, a, a->value.middleCols(c0, n),
               [c0, n](Node& self, Node& pa) {
                 pa.grad.middleCols(c0, n) += self.grad;
               });
}

NodePtr concat_rows(Graph& g, const std::vector<NodePtr>& parts) {
  check(!parts.empty(), "concat_rows needs at least one part");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0]->value.cols();
  bool rg = false;
  for (const auto& p : parts) {
    check(p->value.cols() == cols, "concat_rows column mismatch");
    rows += p->value.rows();
    rg = rg || p->requires_grad;
  }
  Matrix v(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    v.middleRows(r, p->value.rows()) = p->value;
    r += p->value.rows();
  }
  auto out = g.make(std::move(v), rg);
  out->parents = parts;
  if (rg) {
    out->backward_op = [](Node& self) {
      Eigen::Index r = 0;
      for (auto& p : self.parents) {
        if (p->requires_grad) {
          p->grad += self.grad.middleRows(r, p->value.rows());
        }
        r += p->value.rows();
      }
    };
  }
  return out;
}

NodePtr concat_cols(Graph& g, const std::vector<NodePtr>& parts) {
  check(!parts.empty(), "concat_cols needs at least one part");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts[0]->value.rows();
  bool rg = false;
  for (const auto& p : parts) {
    check(p->value.rows() == rows, "concat_cols row mismatch");
    cols += p->value.cols();
    rg = rg || p->requires_grad;
  }
  Matrix v(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    v.middleCols(c, p->value.cols()) = p->value;
    c += p->value.cols();
  }
  auto out = g.make(std::move(v), rg);
  out->parents = parts;
  if (rg) {
    out->backward_op = [](Node& self) {
      Eigen::Index c = 0;
      for (auto& p : self.parents) {
        if (p->requires_grad) {
          p->grad += self.grad.middleCols(c, p->value.cols());
        }
        c += p->value.cols();
      }
    };
  }
  return out;
}

NodePtr mean_all(Graph& g, const NodePtr& a) {
  Matrix v(1, 1);
  v(0, 0) = a->value.mean();
  const double inv = 1.0 / static_cast<double>(a->value.size());
  return unary(g, a, std::move(v), [inv](Node& self, Node& pa) {
    pa.grad.array() += self.grad(0, 0) * inv;
  });
}

NodePtr sigmoid(Graph& g, const NodePtr& a) {
  Matrix y = a->value.unaryExpr([](double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                    : std::exp(x) / (1.0 + std::exp(x));
  });
  return unary(g, a, y, [](Node& self, Node& pa) {
    pa.grad.array() +=
        self.grad.array() * self.value.array() * (1.0 - self.value.array());
  });
}

NodePtr embed_rows(Graph& g, Parameter& table, const std::vector<int>& ids) {
  Matrix v(static_cast<Eigen::Index>(ids.size()), table.value.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.value.rows()) {
      throw AutoadError(ErrorCode::InvalidArgument, "embedding id out of range");
    }
    v.row(static_cast<Eigen::Index>(i)) = table.value.row(ids[i]);
  }
  auto out = g.make(std::move(v), table.trainable);
  if (table.trainable) {
    Parameter* ptr = &table;
    out->backward_op = [ptr, ids](Node& self) {
      for (size_t i = 0; i < ids.size(); ++i) {
        ptr->grad.row(ids[i]) += self.grad.row(static_cast<Eigen::Index>(i));
      }
    };
  }
  return out;
}

NodePtr bce_with_logits(Graph& g, const NodePtr& logits, const Matrix& labels,
                        const Matrix& weights) {
  check(logits->value.cols() == 1 && labels.cols() == 1 && weights.cols() == 1,
        "bce expects column vectors");
  check(logits->value.rows() == labels.rows() &&
            logits->value.rows() == weights.rows(),
        "bce shapes");
  const double wsum = weights.sum();
  check(wsum > 0.0, "bce needs positive total weight");
  Matrix v(1, 1);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits->value.rows(); ++i) {
    const double z = logits->value(i, 0);
    const double y = labels(i, 0);
    loss += weights(i, 0) *
            (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))));
  }
  v(0, 0) = loss / wsum;
  auto out = unary(g, logits, std::move(v),
                   [labels, weights, wsum](Node& self, Node& pa) {
                     for (Eigen::Index i = 0; i < pa.value.rows(); ++i) {
                       const double z = pa.value(i, 0);
                       const double s = z >= 0.0
                                            ? 1.0 / (1.0 + std::exp(-z))
                                            : std::exp(z) / (1.0 + std::exp(z));
                       pa.grad(i, 0) += self.grad(0, 0) * weights(i, 0) *
                                        (s - labels(i, 0)) / wsum;
                     }
                   });
  return out;
}

NodePtr cross_entropy_rows(Graph& g, const NodePtr& logits,
                           const std::vector<int>& targets,
                           const std::vector<double>& row_weights) {
  const Eigen::Index T = logits->value.rows();
  check(static_cast<Eigen::Index>(targets.size()) == T &&
            static_cast<Eigen::Index>(row_weights.size()) == T,
        "cross_entropy row count");
  double wsum = 0.0;
  for (double w : row_weights) wsum += w;
  check(wsum > 0.0, "cross_entropy needs positive total weight");
  Matrix v(1, 1);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < T; ++r) {
    const double w = row_weights[static_cast<size_t>(r)];
    if (w == 0.0) continue;
    const auto row = logits->value.row(r);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    loss += w * (lse - row(targets[static_cast<size_t>(r)]));
  }
  v(0, 0) = loss / wsum;
  auto out = unary(
      g, logits, std::move(v), [targets, row_weights, wsum](Node& self, Node& pa) {
        for (Eigen::Index r = 0; r < pa.value.rows(); ++r) {
          const double w = row_weights[static_cast<size_t>(r)];
          if (w == 0.0) continue;
          const auto row = pa.value.row(r);
          const double m = row.maxCoeff();
          Eigen::RowVectorXd soft = (row.array() - m).exp();
          soft /= soft.sum();
          soft(targets[static_cast<size_t>(r)]) -= 1.0;
          pa.grad.row(r) += self.grad(0, 0) * (w / wsum) * soft;
        }
      });
  return out;
}

Matrix gauss_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.gauss() * stddev;
  }
  return m;
}

}  // namespace autoad::nn
