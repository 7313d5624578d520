#include "ddp/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ddp {

namespace {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Input: return "input";
    case OpKind::Param: return "param";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::Concat: return "concat";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::LeakyRelu: return "leaky_relu";
    case OpKind::RowSoftmax: return "row_softmax";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::AppendOnes: return "append_ones";
    case OpKind::Reshape: return "reshape";
    case OpKind::CrossEntropy: return "cross_entropy";
    case OpKind::BlockRowDot: return "block_row_dot";
    case OpKind::SumAll: return "sum_all";
    case OpKind::Scale: return "scale";
  }
  return "?";
}

[[noreturn]] void shape_fail(OpKind k, const Tensor& a) {
  throw ShapeError(std::string(op_name(k)) + ": bad operand shape " + a.shape_str());
}

[[noreturn]] void shape_fail(OpKind k, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op_name(k)) + ": incompatible shapes " + a.shape_str() + " and " +
                   b.shape_str());
}

double log_sum_exp(const double* row, int k) {
  double m = row[0];
  for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
  double s = 0.0;
  for (int j = 0; j < k; ++j) s += std::exp(row[j] - m);
  return m + std::log(s);
}

}  // namespace

Tape::Id Tape::push(Node n) {
  compute(n);
  check_finite(n);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

void Tape::check_finite(const Node& n) const {
  for (double v : n.value.data)
    if (!std::isfinite(v))
      throw NumericError(std::string("non-finite value produced by ") + op_name(n.kind));
}

Tape::Id Tape::input(Tensor value) {
  Node n;
  n.kind = OpKind::Input;
  n.value = std::move(value);
  check_finite(n);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::param(const std::string& name, const Tensor& value) {
  Node n;
  n.kind = OpKind::Param;
  n.name = name;
  n.value = value;
  check_finite(n);
  nodes_.push_back(std::move(n));
  Id id = static_cast<Id>(nodes_.size() - 1);
  params_.emplace_back(name, id);
  return id;
}

Tensor& Tape::param_value(Id id) {
  if (nodes_[id].kind != OpKind::Param && nodes_[id].kind != OpKind::Input)
    throw std::logic_error("param_value on non-leaf node");
  return nodes_[id].value;
}

Tape::Id Tape::matmul(Id a, Id b) { return push({OpKind::MatMul, {a, b}}); }
Tape::Id Tape::transpose(Id a) { return push({OpKind::Transpose, {a}}); }
Tape::Id Tape::add(Id a, Id b) { return push({OpKind::Add, {a, b}}); }
Tape::Id Tape::mul(Id a, Id b) { return push({OpKind::Mul, {a, b}}); }

Tape::Id Tape::concat(const std::vector<Id>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  Node n;
  n.kind = OpKind::Concat;
  n.inputs = parts;
  n.axis = axis;
  return push(std::move(n));
}

Tape::Id Tape::tanh_(Id a) { return push({OpKind::Tanh, {a}}); }
Tape::Id Tape::sigmoid(Id a) { return push({OpKind::Sigmoid, {a}}); }

Tape::Id Tape::leaky_relu(Id a, double slope) {
  Node n;
  n.kind = OpKind::LeakyRelu;
  n.inputs = {a};
  n.alpha = slope;
  return push(std::move(n));
}

Tape::Id Tape::row_softmax(Id a) { return push({OpKind::RowSoftmax, {a}}); }

Tape::Id Tape::gather_rows(Id a, std::vector<int> indices) {
  Node n;
  n.kind = OpKind::GatherRows;
  n.inputs = {a};
  n.indices = std::move(indices);
  return push(std::move(n));
}

Tape::Id Tape::append_ones(Id a) { return push({OpKind::AppendOnes, {a}}); }

Tape::Id Tape::reshape(Id a, std::vector<int> new_shape) {
  Node n;
  n.kind = OpKind::Reshape;
  n.inputs = {a};
  n.new_shape = std::move(new_shape);
  return push(std::move(n));
}

Tape::Id Tape::cross_entropy(Id logits, std::vector<int> targets) {
  Node n;
  n.kind = OpKind::CrossEntropy;
  n.inputs = {logits};
  n.indices = std::move(targets);
  return push(std::move(n));
}

Tape::Id Tape::block_row_dot(Id big, Id small, int blocks) {
  Node n;
  n.kind = OpKind::BlockRowDot;
  n.inputs = {big, small};
  n.blocks = blocks;
  return push(std::move(n));
}

Tape::Id Tape::sum_all(Id a) { return push({OpKind::SumAll, {a}}); }

Tape::Id Tape::scale(Id a, double factor) {
  Node n;
  n.kind = OpKind::Scale;
  n.inputs = {a};
  n.alpha = factor;
  return push(std::move(n));
}

void Tape::compute(Node& n) const {
  auto in = [&](int i) -> const Tensor& { return nodes_[n.inputs[i]].value; };
  switch (n.kind) {
    case OpKind::Input:
    case OpKind::Param:
      return;
    case OpKind::MatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) shape_fail(n.kind, a, b);
      Tensor out = Tensor::zeros({a.rows(), b.cols()});
      for (int i = 0; i < a.rows(); ++i)
        for (int k = 0; k < a.cols(); ++k) {
          double av = a.at(i, k);
          if (av == 0.0) continue;
          const double* brow = &b.data[static_cast<std::size_t>(k) * b.cols()];
          double* orow = &out.data[static_cast<std::size_t>(i) * out.cols()];
          for (int j = 0; j < b.cols(); ++j) orow[j] += av * brow[j];
        }
      n.value = std::move(out);
      return;
    }
    case OpKind::Transpose: {
      const Tensor& a = in(0);
      if (a.rank() != 2) shape_fail(n.kind, a);
      Tensor out = Tensor::zeros({a.cols(), a.rows()});
      for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
      n.value = std::move(out);
      return;
    }
    case OpKind::Add: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.same_shape(b)) {
        Tensor out = a;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
        n.value = std::move(out);
        return;
      }
      if (a.rank() == 2 && b.rank() == 2 && b.rows() == 1 && a.cols() == b.cols()) {
        Tensor out = a;
        for (int i = 0; i < a.rows(); ++i)
          for (int j = 0; j < a.cols(); ++j) out.at(i, j) += b.at(0, j);
        n.value = std::move(out);
        return;
      }
      shape_fail(n.kind, a, b);
    }
    case OpKind::Mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (!a.same_shape(b)) shape_fail(n.kind, a, b);
      Tensor out = a;
      for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
      n.value = std::move(out);
      return;
    }
    case OpKind::Concat: {
      const Tensor& first = in(0);
      if (first.rank() != 2 || (n.axis != 0 && n.axis != 1)) shape_fail(n.kind, first);
      if (n.axis == 0) {
        int cols = first.cols(), rows = 0;
        for (std::size_t p = 0; p < n.inputs.size(); ++p) {
          const Tensor& t = in(static_cast<int>(p));
          if (t.rank() != 2 || t.cols() != cols) shape_fail(n.kind, first, t);
          rows += t.rows();
        }
        Tensor out = Tensor::zeros({rows, cols});
        double* dst = out.data.data();
        for (std::size_t p = 0; p < n.inputs.size(); ++p) {
          const Tensor& t = in(static_cast<int>(p));
          std::copy(t.data.begin(), t.data.end(), dst);
          dst += t.data.size();
        }
        n.value = std::move(out);
      } else {
        int rows = first.rows(), cols = 0;
        for (std::size_t p = 0; p < n.inputs.size(); ++p) {
          const Tensor& t = in(static_cast<int>(p));
          if (t.rank() != 2 || t.rows() != rows) shape_fail(n.kind, first, t);
          cols += t.cols();
        }
        Tensor out = Tensor::zeros({rows, cols});
        int off = 0;
        for (std::size_t p = 0; p < n.inputs.size(); ++p) {
          const Tensor& t = in(static_cast<int>(p));
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < t.cols(); ++j) out.at(i, off + j) = t.at(i, j);
          off += t.cols();
        }
        n.value = std::move(out);
      }
      return;
    }
    case OpKind::Tanh: {
      Tensor out = in(0);
      for (double& v : out.data) v = std::tanh(v);
      n.value = std::move(out);
      return;
    }
    case OpKind::Sigmoid: {
      Tensor out = in(0);
      for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
      n.value = std::move(out);
      return;
    }
    case OpKind::LeakyRelu: {
      Tensor out = in(0);
      for (double& v : out.data)
        if (v < 0.0) v *= n.alpha;
      n.value = std::move(out);
      return;
    }
    case OpKind::RowSoftmax: {
      const Tensor& a = in(0);
      if (a.rank() != 2) shape_fail(n.kind, a);
      Tensor out = a;
      for (int i = 0; i < a.rows(); ++i) {
        const double* row = &a.data[static_cast<std::size_t>(i) * a.cols()];
        double lse = log_sum_exp(row, a.cols());
        for (int j = 0; j < a.cols(); ++j) out.at(i, j) = std::exp(row[j] - lse);
      }
      n.value = std::move(out);
      return;
    }
    case OpKind::GatherRows: {
      const Tensor& a = in(0);
      if (a.rank() != 2) shape_fail(n.kind, a);
      Tensor out = Tensor::zeros({static_cast<int>(n.indices.size()), a.cols()});
      for (std::size_t i = 0; i < n.indices.size(); ++i) {
        int r = n.indices[i];
        if (r < 0 || r >= a.rows())
          throw ShapeError("gather_rows: index " + std::to_string(r) + " out of range for " +
                           a.shape_str());
        for (int j = 0; j < a.cols(); ++j) out.at(static_cast<int>(i), j) = a.at(r, j);
      }
      n.value = std::move(out);
      return;
    }
    case OpKind::AppendOnes: {
      const Tensor& a = in(0);
      if (a.rank() != 2) shape_fail(n.kind, a);
      Tensor out = Tensor::zeros({a.rows(), a.cols() + 1});
      for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) out.at(i, j) = a.at(i, j);
        out.at(i, a.cols()) = 1.0;
      }
      n.value = std::move(out);
      return;
    }
    case OpKind::Reshape: {
      const Tensor& a = in(0);
      if (Tensor::count(n.new_shape) != a.size()) shape_fail(n.kind, a);
      n.value = Tensor(n.new_shape, a.data);
      return;
    }
    case OpKind::CrossEntropy: {
      const Tensor& a = in(0);
      if (a.rank() != 2 || static_cast<int>(n.indices.size()) != a.rows()) shape_fail(n.kind, a);
      Tensor out = Tensor::zeros({a.rows(), 1});
      for (int i = 0; i < a.rows(); ++i) {
        int t = n.indices[i];
        if (t < 0 || t >= a.cols()) throw ShapeError("cross_entropy: target out of range");
        const double* row = &a.data[static_cast<std::size_t>(i) * a.cols()];
        out.at(i, 0) = log_sum_exp(row, a.cols()) - row[t];
      }
      n.value = std::move(out);
      return;
    }
    case OpKind::BlockRowDot: {
      const Tensor& big = in(0);
      const Tensor& small = in(1);
      int k = small.cols();
      if (big.rank() != 2 || small.rank() != 2 || big.rows() != small.rows() ||
          big.cols() != n.blocks * k)
        shape_fail(n.kind, big, small);
      Tensor out = Tensor::zeros({big.rows(), n.blocks});
      for (int i = 0; i < big.rows(); ++i)
        for (int l = 0; l < n.blocks; ++l) {
          double s = 0.0;
          for (int j = 0; j < k; ++j) s += big.at(i, l * k + j) * small.at(i, j);
          out.at(i, l) = s;
        }
      n.value = std::move(out);
      return;
    }
    case OpKind::SumAll: {
      double s = 0.0;
      for (double v : in(0).data) s += v;
      n.value = Tensor({1, 1}, {s});
      return;
    }
    case OpKind::Scale: {
      Tensor out = in(0);
      for (double& v : out.data) v *= n.alpha;
      n.value = std::move(out);
      return;
    }
  }
}

void Tape::recompute() {
  for (Node& n : nodes_) {
    if (n.kind == OpKind::Input || n.kind == OpKind::Param) continue;
    compute(n);
  }
}

GradientMap Tape::backward(Id loss) const {
  if (nodes_[loss].value.size() != 1)
    throw ShapeError("backward: loss must be scalar, got " + nodes_[loss].value.shape_str());

  std::vector<Tensor> grads(nodes_.size());
  std::vector<bool> touched(nodes_.size(), false);
  auto grad_of = [&](Id id) -> Tensor& {
    if (!touched[id]) {
      grads[id] = Tensor::zeros(nodes_[id].value.shape);
      touched[id] = true;
    }
    return grads[id];
  };

  grad_of(loss).data[0] = 1.0;

  for (Id id = loss; id >= 0; --id) {
    if (!touched[id]) continue;
    const Node& n = nodes_[id];
    const Tensor& g = grads[id];
    auto in = [&](int i) -> const Tensor& { return nodes_[n.inputs[i]].value; };
    switch (n.kind) {
      case OpKind::Input:
      case OpKind::Param:
        break;
      case OpKind::MatMul: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        Tensor& ga = grad_of(n.inputs[0]);
        Tensor& gb = grad_of(n.inputs[1]);
        // ga += g * b^T ; gb += a^T * g
        for (int i = 0; i < a.rows(); ++i)
          for (int k = 0; k < a.cols(); ++k) {
            double s = 0.0;
            const double* grow = &g.data[static_cast<std::size_t>(i) * g.cols()];
            const double* brow = &b.data[static_cast<std::size_t>(k) * b.cols()];
            for (int j = 0; j < b.cols(); ++j) s += grow[j] * brow[j];
            ga.at(i, k) += s;
          }
        for (int k = 0; k < b.rows(); ++k)
          for (int i = 0; i < a.rows(); ++i) {
            double av = a.at(i, k);
            if (av == 0.0) continue;
            const double* grow = &g.data[static_cast<std::size_t>(i) * g.cols()];
            double* gbrow = &gb.data[static_cast<std::size_t>(k) * gb.cols()];
            for (int j = 0; j < b.cols(); ++j) gbrow[j] += av * grow[j];
          }
        break;
      }
      case OpKind::Transpose: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (int i = 0; i < g.rows(); ++i)
          for (int j = 0; j < g.cols(); ++j) ga.at(j, i) += g.at(i, j);
        break;
      }
      case OpKind::Add: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        Tensor& ga = grad_of(n.inputs[0]);
        Tensor& gb = grad_of(n.inputs[1]);
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
        if (a.same_shape(b)) {
          for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i];
        } else {
          for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) gb.at(0, j) += g.at(i, j);
        }
        break;
      }
      case OpKind::Mul: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        Tensor& ga = grad_of(n.inputs[0]);
        Tensor& gb = grad_of(n.inputs[1]);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          ga.data[i] += g.data[i] * b.data[i];
          gb.data[i] += g.data[i] * a.data[i];
        }
        break;
      }
      case OpKind::Concat: {
        if (n.axis == 0) {
          std::size_t off = 0;
          for (std::size_t p = 0; p < n.inputs.size(); ++p) {
            Tensor& gp = grad_of(n.inputs[static_cast<int>(p)]);
            for (std::size_t i = 0; i < gp.data.size(); ++i) gp.data[i] += g.data[off + i];
            off += gp.data.size();
          }
        } else {
          int off = 0;
          for (std::size_t p = 0; p < n.inputs.size(); ++p) {
            Tensor& gp = grad_of(n.inputs[static_cast<int>(p)]);
            for (int i = 0; i < gp.rows(); ++i)
              for (int j = 0; j < gp.cols(); ++j) gp.at(i, j) += g.at(i, off + j);
            off += gp.cols();
          }
        }
        break;
      }
      case OpKind::Tanh: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          double y = n.value.data[i];
          ga.data[i] += g.data[i] * (1.0 - y * y);
        }
        break;
      }
      case OpKind::Sigmoid: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          double y = n.value.data[i];
          ga.data[i] += g.data[i] * y * (1.0 - y);
        }
        break;
      }
      case OpKind::LeakyRelu: {
        const Tensor& a = in(0);
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i)
          ga.data[i] += g.data[i] * (a.data[i] < 0.0 ? n.alpha : 1.0);
        break;
      }
      case OpKind::RowSoftmax: {
        Tensor& ga = grad_of(n.inputs[0]);
        const Tensor& y = n.value;
        for (int i = 0; i < y.rows(); ++i) {
          double dot = 0.0;
          for (int j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
          for (int j = 0; j < y.cols(); ++j) ga.at(i, j) += (g.at(i, j) - dot) * y.at(i, j);
        }
        break;
      }
      case OpKind::GatherRows: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < n.indices.size(); ++i)
          for (int j = 0; j < ga.cols(); ++j)
            ga.at(n.indices[i], j) += g.at(static_cast<int>(i), j);
        break;
      }
      case OpKind::AppendOnes: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (int i = 0; i < ga.rows(); ++i)
          for (int j = 0; j < ga.cols(); ++j) ga.at(i, j) += g.at(i, j);
        break;
      }
      case OpKind::Reshape: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
        break;
      }
      case OpKind::CrossEntropy: {
        const Tensor& a = in(0);
        Tensor& ga = grad_of(n.inputs[0]);
        for (int i = 0; i < a.rows(); ++i) {
          double go = g.at(i, 0);
          if (go == 0.0) continue;
          const double* row = &a.data[static_cast<std::size_t>(i) * a.cols()];
          double lse = log_sum_exp(row, a.cols());
          for (int j = 0; j < a.cols(); ++j)
            ga.at(i, j) += go * (std::exp(row[j] - lse) - (j == n.indices[i] ? 1.0 : 0.0));
        }
        break;
      }
      case OpKind::BlockRowDot: {
        const Tensor& big = in(0);
        const Tensor& small = in(1);
        Tensor& gbig = grad_of(n.inputs[0]);
        Tensor& gsmall = grad_of(n.inputs[1]);
        int k = small.cols();
        for (int i = 0; i < big.rows(); ++i)
          for (int l = 0; l < n.blocks; ++l) {
            double go = g.at(i, l);
            if (go == 0.0) continue;
            for (int j = 0; j < k; ++j) {
              gbig.at(i, l * k + j) += go * small.at(i, j);
              gsmall.at(i, j) += go * big.at(i, l * k + j);
            }
          }
        break;
      }
      case OpKind::SumAll: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (double& v : ga.data) v += g.data[0];
        break;
      }
      case OpKind::Scale: {
        Tensor& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * n.alpha;
        break;
      }
    }
  }

  GradientMap out;
  for (const auto& [name, id] : params_) {
    Tensor gp = touched[id] ? grads[id] : Tensor::zeros(nodes_[id].value.shape);
    auto it = out.find(name);
    if (it == out.end()) {
      out.emplace(name, std::move(gp));
    } else {
      // same parameter registered under several leaves (e.g. reused tables)
      for (std::size_t i = 0; i < gp.data.size(); ++i) it->second.data[i] += gp.data[i];
    }
  }
  return out;
}

// Forward evaluation of the recorded trace in long double, reading parameter
// and input storage from the f64 tensors. Central differences divide a tiny
// loss difference by 2*eps, so the f64 rounding of the loss (~1 ulp) would
// swamp coordinates whose true gradient is near zero; the extra mantissa
// bits keep the quotient accurate there. Shapes are taken from the already
// validated f64 values.
long double Tape::eval_scalar_ld(Id loss) const {
  std::vector<std::vector<long double>> vals(static_cast<std::size_t>(loss) + 1);
  auto lse = [](const long double* row, int n) {
    long double m = row[0];
    for (int j = 1; j < n; ++j) m = std::max(m, row[j]);
    long double s = 0.0L;
    for (int j = 0; j < n; ++j) s += std::exp(row[j] - m);
    return m + std::log(s);
  };
  for (Id id = 0; id <= loss; ++id) {
    const Node& n = nodes_[id];
    auto in = [&](int i) -> const std::vector<long double>& { return vals[n.inputs[i]]; };
    auto shape_of = [&](int i) -> const Tensor& { return nodes_[n.inputs[i]].value; };
    std::vector<long double>& out = vals[id];
    switch (n.kind) {
      case OpKind::Input:
      case OpKind::Param:
        out.assign(n.value.data.begin(), n.value.data.end());
        break;
      case OpKind::MatMul: {
        const Tensor& a = shape_of(0);
        const Tensor& b = shape_of(1);
        out.assign(static_cast<std::size_t>(a.rows()) * b.cols(), 0.0L);
        for (int i = 0; i < a.rows(); ++i)
          for (int k = 0; k < a.cols(); ++k) {
            long double av = in(0)[static_cast<std::size_t>(i) * a.cols() + k];
            if (av == 0.0L) continue;
            const long double* brow = &in(1)[static_cast<std::size_t>(k) * b.cols()];
            long double* orow = &out[static_cast<std::size_t>(i) * b.cols()];
            for (int j = 0; j < b.cols(); ++j) orow[j] += av * brow[j];
          }
        break;
      }
      case OpKind::Transpose: {
        const Tensor& a = shape_of(0);
        out.resize(in(0).size());
        for (int i = 0; i < a.rows(); ++i)
          for (int j = 0; j < a.cols(); ++j)
            out[static_cast<std::size_t>(j) * a.rows() + i] =
                in(0)[static_cast<std::size_t>(i) * a.cols() + j];
        break;
      }
      case OpKind::Add: {
        const Tensor& a = shape_of(0);
        const Tensor& b = shape_of(1);
        out = in(0);
        if (a.same_shape(b)) {
          for (std::size_t i = 0; i < out.size(); ++i) out[i] += in(1)[i];
        } else {
          for (int i = 0; i < a.rows(); ++i)
            for (int j = 0; j < a.cols(); ++j)
              out[static_cast<std::size_t>(i) * a.cols() + j] += in(1)[j];
        }
        break;
      }
      case OpKind::Mul: {
        out = in(0);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= in(1)[i];
        break;
      }
      case OpKind::Concat: {
        if (n.axis == 0) {
          for (std::size_t p = 0; p < n.inputs.size(); ++p) {
            const std::vector<long double>& t = in(static_cast<int>(p));
            out.insert(out.end(), t.begin(), t.end());
          }
        } else {
          int rows = shape_of(0).rows(), cols = n.value.cols();
          out.assign(n.value.data.size(), 0.0L);
          int off = 0;
          for (std::size_t p = 0; p < n.inputs.size(); ++p) {
            int tc = shape_of(static_cast<int>(p)).cols();
            for (int i = 0; i < rows; ++i)
              for (int j = 0; j < tc; ++j)
                out[static_cast<std::size_t>(i) * cols + off + j] =
                    in(static_cast<int>(p))[static_cast<std::size_t>(i) * tc + j];
            off += tc;
          }
        }
        break;
      }
      case OpKind::Tanh:
        out = in(0);
        for (long double& v : out) v = std::tanh(v);
        break;
      case OpKind::Sigmoid:
        out = in(0);
        for (long double& v : out) v = 1.0L / (1.0L + std::exp(-v));
        break;
      case OpKind::LeakyRelu:
        out = in(0);
        for (long double& v : out)
          if (v < 0.0L) v *= n.alpha;
        break;
      case OpKind::RowSoftmax: {
        const Tensor& a = shape_of(0);
        out = in(0);
        for (int i = 0; i < a.rows(); ++i) {
          long double* row = &out[static_cast<std::size_t>(i) * a.cols()];
          long double l = lse(row, a.cols());
          for (int j = 0; j < a.cols(); ++j) row[j] = std::exp(row[j] - l);
        }
        break;
      }
      case OpKind::GatherRows: {
        int cols = shape_of(0).cols();
        out.reserve(n.indices.size() * cols);
        for (int r : n.indices) {
          const long double* row = &in(0)[static_cast<std::size_t>(r) * cols];
          out.insert(out.end(), row, row + cols);
        }
        break;
      }
      case OpKind::AppendOnes: {
        const Tensor& a = shape_of(0);
        out.reserve(static_cast<std::size_t>(a.rows()) * (a.cols() + 1));
        for (int i = 0; i < a.rows(); ++i) {
          const long double* row = &in(0)[static_cast<std::size_t>(i) * a.cols()];
          out.insert(out.end(), row, row + a.cols());
          out.push_back(1.0L);
        }
        break;
      }
      case OpKind::Reshape:
        out = in(0);
        break;
      case OpKind::CrossEntropy: {
        const Tensor& a = shape_of(0);
        out.resize(a.rows());
        for (int i = 0; i < a.rows(); ++i) {
          const long double* row = &in(0)[static_cast<std::size_t>(i) * a.cols()];
          out[i] = lse(row, a.cols()) - row[n.indices[i]];
        }
        break;
      }
      case OpKind::BlockRowDot: {
        const Tensor& small = shape_of(1);
        int k = small.cols();
        out.assign(static_cast<std::size_t>(small.rows()) * n.blocks, 0.0L);
        for (int i = 0; i < small.rows(); ++i)
          for (int l = 0; l < n.blocks; ++l) {
            long double s = 0.0L;
            for (int j = 0; j < k; ++j)
              s += in(0)[static_cast<std::size_t>(i) * n.blocks * k + l * k + j] *
                   in(1)[static_cast<std::size_t>(i) * k + j];
            out[static_cast<std::size_t>(i) * n.blocks + l] = s;
          }
        break;
      }
      case OpKind::SumAll: {
        long double s = 0.0L;
        for (long double v : in(0)) s += v;
        out.assign(1, s);
        break;
      }
      case OpKind::Scale:
        out = in(0);
        for (long double& v : out) v *= static_cast<long double>(n.alpha);
        break;
    }
  }
  return vals[loss][0];
}

double Tape::grad_check(Id loss, double epsilon) {
  if (epsilon < 1e-7 || epsilon > 1e-3)
    throw std::invalid_argument("grad_check: epsilon out of [1e-7, 1e-3]");
  GradientMap analytic = backward(loss);

  // Numeric gradients accumulate across duplicate leaves of a parameter
  // automatically since perturbing one leaf perturbs only that leaf; to
  // match the analytic map we perturb per-leaf and sum into the name slot.
  GradientMap numeric;
  for (const auto& [name, id] : params_)
    if (!numeric.count(name)) numeric.emplace(name, Tensor::zeros(nodes_[id].value.shape));

  for (const auto& [name, id] : params_) {
    Tensor& theta = nodes_[id].value;
    Tensor& slot = numeric.at(name);
    for (std::size_t c = 0; c < theta.data.size(); ++c) {
      double saved = theta.data[c];
      double up = saved + epsilon, down = saved - epsilon;
      theta.data[c] = up;
      long double lp = eval_scalar_ld(loss);
      theta.data[c] = down;
      long double lm = eval_scalar_ld(loss);
      theta.data[c] = saved;
      // divide by the realized perturbation; up/down are rounded once
      slot.data[c] += static_cast<double>((lp - lm) / (static_cast<long double>(up) - down));
    }
  }

  double max_rel = 0.0;
  for (const auto& [name, a] : analytic) {
    const Tensor& nu = numeric.at(name);
    for (std::size_t c = 0; c < a.data.size(); ++c) {
      double av = a.data[c], nv = nu.data[c];
      double rel = std::abs(av - nv) / std::max({std::abs(av), std::abs(nv), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace ddp
