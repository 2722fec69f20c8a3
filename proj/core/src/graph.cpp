#include "spade/graph.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "spade/errors.hpp"

namespace spade {

Parameter::Parameter(std::string n, Tensor t) : name(std::move(n)), tensor(std::move(t)) {
  tensor.requires_grad = true;
  if (!tensor.grad) tensor.grad.emplace(tensor.values.size(), 0.0);
}

void Parameter::zero_grad() {
  if (!tensor.grad) tensor.grad.emplace(tensor.values.size(), 0.0);
  std::fill(tensor.grad->begin(), tensor.grad->end(), 0.0);
}

void Parameter::accumulate_grad(const std::vector<double>& g) {
  if (g.size() != tensor.values.size()) {
    throw ShapeError("gradient size " + std::to_string(g.size()) + " does not match parameter " +
                     name + " " + shape_str(tensor.shape));
  }
  if (!tensor.grad) tensor.grad.emplace(tensor.values.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) (*tensor.grad)[i] += g[i];
}

const Graph::Node& Graph::node(TensorRef r) const {
  if (r.id < 0 || r.id >= static_cast<int>(nodes_.size())) {
    throw ShapeError("tensor ref " + std::to_string(r.id) + " not in graph");
  }
  return nodes_[static_cast<std::size_t>(r.id)];
}

TensorRef Graph::push(Node n) {
  for (int in : n.inputs) {
    if (in < 0 || in >= static_cast<int>(nodes_.size())) {
      throw ShapeError("op input refers to a node not yet in the graph");
    }
  }
  nodes_.push_back(std::move(n));
  return TensorRef{static_cast<int>(nodes_.size()) - 1};
}

std::vector<double>& Graph::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() != n.value.values.size()) n.grad.assign(n.value.values.size(), 0.0);
  return n.grad;
}

bool Graph::needs_grad(TensorRef r) const { return node(r).value.requires_grad; }

TensorRef Graph::constant(Tensor t) {
  t.requires_grad = false;
  Node n;
  n.op = OpKind::Leaf;
  n.value = std::move(t);
  return push(std::move(n));
}

TensorRef Graph::input(Tensor t, bool requires_grad) {
  t.requires_grad = requires_grad;
  Node n;
  n.op = OpKind::Leaf;
  n.value = std::move(t);
  return push(std::move(n));
}

TensorRef Graph::param(Parameter& p) {
  Node n;
  n.op = OpKind::Leaf;
  n.value = p.tensor;
  n.value.requires_grad = true;
  n.value.grad.reset();
  n.bound = &p;
  return push(std::move(n));
}

namespace {

void check_2d(const Tensor& t, const char* what) {
  if (t.shape.size() != 2) throw ShapeError(std::string(what) + " expects a matrix, got " + shape_str(t.shape));
}

}  // namespace

TensorRef Graph::matmul(TensorRef a, TensorRef b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_2d(ta, "matmul");
  check_2d(tb, "matmul");
  if (ta.cols() != tb.rows()) {
    throw ShapeError("matmul inner dimensions disagree: " + shape_str(ta.shape) + " x " +
                     shape_str(tb.shape));
  }
  const int m = ta.rows(), k = ta.cols(), n = tb.cols();
  Tensor out(Shape{m, n});
  const double* A = ta.values.data();
  const double* B = tb.values.data();
  double* C = out.values.data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = A[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const double* brow = B + static_cast<std::size_t>(p) * n;
      double* crow = C + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  out.requires_grad = needs_grad(a) || needs_grad(b);
  Node node;
  node.op = OpKind::Matmul;
  node.inputs = {a.id, b.id};
  node.value = std::move(out);
  if (node.value.requires_grad) {
    const int aid = a.id, bid = b.id;
    node.backward = [aid, bid, m, k, n](Graph& g, const Node& self) {
      const double* G = self.grad.data();
      const Tensor& A2 = g.nodes_[static_cast<std::size_t>(aid)].value;
      const Tensor& B2 = g.nodes_[static_cast<std::size_t>(bid)].value;
      if (A2.requires_grad) {
        std::vector<double>& ga = g.grad_buffer(aid);
        // ga += G * B^T
        for (int i = 0; i < m; ++i) {
          for (int p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* grow = G + static_cast<std::size_t>(i) * n;
            const double* brow = B2.values.data() + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[static_cast<std::size_t>(i) * k + p] += acc;
          }
        }
      }
      if (B2.requires_grad) {
        std::vector<double>& gb = g.grad_buffer(bid);
        // gb += A^T * G
        for (int i = 0; i < m; ++i) {
          const double* arow = A2.values.data() + static_cast<std::size_t>(i) * k;
          const double* grow = G + static_cast<std::size_t>(i) * n;
          for (int p = 0; p < k; ++p) {
            const double aip = arow[p];
            if (aip == 0.0) continue;
            double* gbrow = gb.data() + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
          }
        }
      }
    };
  }
  return push(std::move(node));
}

TensorRef Graph::transpose(TensorRef a) {
  const Tensor& ta = value(a);
  check_2d(ta, "transpose");
  const int m = ta.rows(), n = ta.cols();
  Tensor out(Shape{n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.values[static_cast<std::size_t>(j) * m + i] = ta.values[static_cast<std::size_t>(i) * n + j];
  out.requires_grad = needs_grad(a);
  Node node;
  node.op = OpKind::Transpose;
  node.inputs = {a.id};
  node.value = std::move(out);
  if (node.value.requires_grad) {
    const int aid = a.id;
    node.backward = [aid, m, n](Graph& g, const Node& self) {
      std::vector<double>& ga = g.grad_buffer(aid);
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i)
          ga[static_cast<std::size_t>(i) * n + j] += self.grad[static_cast<std::size_t>(j) * m + i];
    };
  }
  return push(std::move(node));
}

TensorRef Graph::add(TensorRef a, TensorRef b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.shape != tb.shape) {
    throw ShapeError("add shapes disagree: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = ta.values[i] + tb.values[i];
  out.requires_grad = needs_grad(a) || needs_grad(b);
  Node node;
  node.op = OpKind::Add;
  node.inputs = {a.id, b.id};
  node.value = std::move(out);
  if (node.value.requires_grad) {
    const int aid = a.id, bid = b.id;
    node.backward = [aid, bid](Graph& g, const Node& self) {
      for (int id : {aid, bid}) {
        if (!g.nodes_[static_cast<std::size_t>(id)].value.requires_grad) continue;
        std::vector<double>& gi = g.grad_buffer(id);
        for (std::size_t i = 0; i < self.grad.size(); ++i) gi[i] += self.grad[i];
      }
    };
  }
  return push(std::move(node));
}

TensorRef Graph::add_bias(TensorRef a, TensorRef bias) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(bias);
  check_2d(ta, "add_bias");
  if (tb.rows() != ta.rows() || tb.cols() != 1) {
    throw ShapeError("add_bias expects bias [" + std::to_string(ta.rows()) + "x1], got " +
                     shape_str(tb.shape));
  }
  const int m = ta.rows(), n = ta.cols();
  Tensor out(ta.shape);
  for (int i = 0; i < m; ++i) {
    const double bi = tb.values[static_cast<std::size_t>(i)];
    const double* arow = ta.values.data() + static_cast<std::size_t>(i) * n;
    double* orow = out.values.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) orow[j] = arow[j] + bi;
  }
  out.requires_grad = needs_grad(a) || needs_grad(bias);
  Node node;
  node.op = OpKind::AddBias;
  node.inputs = {a.id, bias.id};
  node.value = std::move(out);
  if (node.value.requires_grad) {
    const int aid = a.id, bid = bias.id;
    node.backward = [aid, bid, m, n](Graph& g, const Node& self) {
      if (g.nodes_[static_cast<std::size_t>(aid)].value.requires_grad) {
        std::vector<double>& ga = g.grad_buffer(aid);
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
      }
      if (g.nodes_[static_cast<std::size_t>(bid)].value.requires_grad) {
        std::vector<double>& gb = g.grad_buffer(bid);
        for (int i = 0; i < m; ++i) {
          double acc = 0.0;
          const double* grow = self.grad.data() + static_cast<std::size_t>(i) * n;
          for (int j = 0; j < n; ++j) acc += grow[j];
          gb[static_cast<std::size_t>(i)] += acc;
        }
      }
    };
  }
  return push(std::move(node));
}

TensorRef Graph::mul(TensorRef a, TensorRef b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.shape != tb.shape) {
    throw ShapeError("mul shapes disagree: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = ta.values[i] * tb.values[i];
  out.requires_grad = needs_grad(a) || needs_grad(b);
  Node node;
  node.op = OpKind::Mul;
  node.inputs = {a.id, b.id};
  node.value = std::move(out);
  if (node.value.requires_grad) {
    const int aid = a.id, bid = b.id;
    node.backward = [aid, bid](Graph& g, const Node& self) {
      const Tensor& A2 = g.nodes_[static_cast<std::size_t>(aid)].value;
      const Tensor& B2 = g.nodes_[static_cast<std::size_t>(bid)].value;
      if (A2.requires_grad) {
        std::vector<double>& ga = g.grad_buffer(aid);
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * B2.values[i];
      }
      if (B2.requires_grad) {
        std::vector<double>& gb = g.grad_buffer(bid);
        for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i] * A2.values[i];
      }
    };
  }
  return push(std::move(node));
}

TensorRef Graph::scale(TensorRef a, double c) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = ta.values[i] * c;
  out.requires_grad = needs_grad(a);
  Node node;
  node.op = OpKind::Scale;
  node.inputs = {a.id};
  node.value = std::move(out);
  if (node.value.requires_grad) {
    const int aid = a.id;
    node.backward = [aid, c](Graph& g, const Node& self) {
      std::vector<double>& ga = g.grad_buffer(aid);
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * c;
    };
  }
  return push(std::move(node));
}

TensorRef Graph::relu(TensorRef a) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = ta.values[i] > 0.0 ? ta.values[i] : 0.0;
  out.requires_grad = needs_grad(a);
  Node node;
  node.op = OpKind::Relu;
  node.inputs = {a.id};
  node.value = std::move(out);
  if (node.value.requires_grad) {
    const int aid = a.id;
    node.backward = [aid](Graph& g, const Node& self) {
      const Tensor& A2 = g.nodes_[static_cast<std::size_t>(aid)].value;
      std::vector<double>& ga = g.grad_buffer(aid);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (A2.values[i] > 0.0) ga[i] += self.grad[i];
      }
    };
  }
  return push(std::move(node));
}

TensorRef Graph::conv1d_causal(TensorRef x, TensorRef kernel, int dilation) {
  const Tensor& tx = value(x);
  const Tensor& tk = value(kernel);
  if (dilation < 1) throw ShapeError("conv1d_causal dilation must be >= 1, got " + std::to_string(dilation));
  check_2d(tx, "conv1d_causal input");
  if (tk.shape.size() != 3) {
    throw ShapeError("conv1d_causal kernel expects [out x in x k], got " + shape_str(tk.shape));
  }
  const int C = tx.rows(), T = tx.cols();
  const int F = tk.shape[0], Cin = tk.shape[1], K = tk.shape[2];
  if (Cin != C) {
    throw ShapeError("conv1d_causal channel mismatch: input has " + std::to_string(C) +
                     " channels, kernel expects " + std::to_string(Cin));
  }
  // out[f][t] = sum_{c,j} w[f][c][j] * x[c][t - dilation*(K-1-j)], zero-padded left.
  Tensor out(Shape{F, T});
  for (int f = 0; f < F; ++f) {
    double* orow = out.values.data() + static_cast<std::size_t>(f) * T;
    for (int c = 0; c < C; ++c) {
      const double* xrow = tx.values.data() + static_cast<std::size_t>(c) * T;
      const double* w = tk.values.data() + (static_cast<std::size_t>(f) * C + c) * K;
      for (int j = 0; j < K; ++j) {
        const double wj = w[j];
        if (wj == 0.0) continue;
        const int shift = dilation * (K - 1 - j);
        for (int t = shift; t < T; ++t) orow[t] += wj * xrow[t - shift];
      }
    }
  }
  out.requires_grad = needs_grad(x) || needs_grad(kernel);
  Node node;
  node.op = OpKind::Conv1dCausal;
  node.inputs = {x.id, kernel.id};
  node.value = std::move(out);
  if (node.value.requires_grad) {
    const int xid = x.id, kid = kernel.id;
    node.backward = [xid, kid, C, T, F, K, dilation](Graph& g, const Node& self) {
      const Tensor& X2 = g.nodes_[static_cast<std::size_t>(xid)].value;
      const Tensor& W2 = g.nodes_[static_cast<std::size_t>(kid)].value;
      if (X2.requires_grad) {
        std::vector<double>& gx = g.grad_buffer(xid);
        for (int f = 0; f < F; ++f) {
          const double* grow = self.grad.data() + static_cast<std::size_t>(f) * T;
          for (int c = 0; c < C; ++c) {
            const double* w = W2.values.data() + (static_cast<std::size_t>(f) * C + c) * K;
            double* gxrow = gx.data() + static_cast<std::size_t>(c) * T;
            for (int j = 0; j < K; ++j) {
              const double wj = w[j];
              if (wj == 0.0) continue;
              const int shift = dilation * (K - 1 - j);
              for (int t = shift; t < T; ++t) gxrow[t - shift] += wj * grow[t];
            }
          }
        }
      }
      if (W2.requires_grad) {
        std::vector<double>& gw = g.grad_buffer(kid);
        for (int f = 0; f < F; ++f) {
          const double* grow = self.grad.data() + static_cast<std::size_t>(f) * T;
          for (int c = 0; c < C; ++c) {
            const double* xrow = X2.values.data() + static_cast<std::size_t>(c) * T;
            double* gwrow = gw.data() + (static_cast<std::size_t>(f) * C + c) * K;
            for (int j = 0; j < K; ++j) {
              const int shift = dilation * (K - 1 - j);
              double acc = 0.0;
              for (int t = shift; t < T; ++t) acc += grow[t] * xrow[t - shift];
              gwrow[j] += acc;
            }
          }
        }
      }
    };
  }
  return push(std::move(node));
}

TensorRef Graph::softmax_masked(TensorRef logits, TensorRef mask) {
  const Tensor& tl = value(logits);
  const Tensor& tm = value(mask);
  if (tl.shape != tm.shape) {
    throw ShapeError("softmax_masked mask shape " + shape_str(tm.shape) + " does not match logits " +
                     shape_str(tl.shape));
  }
  if (needs_grad(mask)) throw ShapeError("softmax_masked mask must not require gradients");
  const int R = tl.rows(), C = tl.cols();
  // Max subtraction runs over unmasked entries only, so any finite logits
  // are safe. Fully masked rows come out identically zero.
  Tensor out(tl.shape);
  for (int r = 0; r < R; ++r) {
    const double* lrow = tl.values.data() + static_cast<std::size_t>(r) * C;
    const double* mrow = tm.values.data() + static_cast<std::size_t>(r) * C;
    double* orow = out.values.data() + static_cast<std::size_t>(r) * C;
    double mx = 0.0;
    bool any = false;
    for (int j = 0; j < C; ++j) {
      if (mrow[j] != 0.0 && (!any || lrow[j] > mx)) {
        mx = lrow[j];
        any = true;
      }
    }
    if (!any) continue;  // all-masked row stays zero
    double denom = 0.0;
    for (int j = 0; j < C; ++j) {
      if (mrow[j] != 0.0) {
        orow[j] = std::exp(lrow[j] - mx);
        denom += orow[j];
      }
    }
    for (int j = 0; j < C; ++j) orow[j] /= denom;
  }
  out.requires_grad = needs_grad(logits);
  Node node;
  node.op = OpKind::SoftmaxMasked;
  node.inputs = {logits.id, mask.id};
  node.value = std::move(out);
  if (node.value.requires_grad) {
    const int lid = logits.id;
    node.backward = [lid, R, C](Graph& g, const Node& self) {
      const Tensor& Y = self.value;
      std::vector<double>& gl = g.grad_buffer(lid);
      for (int r = 0; r < R; ++r) {
        const double* yrow = Y.values.data() + static_cast<std::size_t>(r) * C;
        const double* grow = self.grad.data() + static_cast<std::size_t>(r) * C;
        double dot = 0.0;
        for (int j = 0; j < C; ++j) dot += grow[j] * yrow[j];
        double* glrow = gl.data() + static_cast<std::size_t>(r) * C;
        for (int j = 0; j < C; ++j) glrow[j] += yrow[j] * (grow[j] - dot);
      }
    };
  }
  return push(std::move(node));
}

TensorRef Graph::concat_rows(const std::vector<TensorRef>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows needs at least one part");
  int cols = value(parts[0]).cols();
  int rows = 0;
  bool rg = false;
  for (TensorRef p : parts) {
    const Tensor& t = value(p);
    check_2d(t, "concat_rows");
    if (t.cols() != cols) {
      throw ShapeError("concat_rows column mismatch: " + std::to_string(t.cols()) + " vs " +
                       std::to_string(cols));
    }
    rows += t.rows();
    rg = rg || t.requires_grad;
  }
  Tensor out(Shape{rows, cols});
  std::vector<int> offsets;
  int at = 0;
  for (TensorRef p : parts) {
    const Tensor& t = value(p);
    offsets.push_back(at);
    std::copy(t.values.begin(), t.values.end(),
              out.values.begin() + static_cast<std::size_t>(at) * cols);
    at += t.rows();
  }
  out.requires_grad = rg;
  Node node;
  node.op = OpKind::ConcatRows;
  for (TensorRef p : parts) node.inputs.push_back(p.id);
  node.value = std::move(out);
  if (node.value.requires_grad) {
    std::vector<int> ids;
    for (TensorRef p : parts) ids.push_back(p.id);
    node.backward = [ids, offsets, cols](Graph& g, const Node& self) {
      for (std::size_t k = 0; k < ids.size(); ++k) {
        Node& in = g.nodes_[static_cast<std::size_t>(ids[k])];
        if (!in.value.requires_grad) continue;
        std::vector<double>& gi = g.grad_buffer(ids[k]);
        const std::size_t base = static_cast<std::size_t>(offsets[k]) * cols;
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[base + i];
      }
    };
  }
  return push(std::move(node));
}

TensorRef Graph::slice_rows(TensorRef a, int begin, int count) {
  const Tensor& ta = value(a);
  check_2d(ta, "slice_rows");
  if (begin < 0 || count <= 0 || begin + count > ta.rows()) {
    throw ShapeError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + shape_str(ta.shape));
  }
  const int n = ta.cols();
  Tensor out(Shape{count, n});
  std::copy(ta.values.begin() + static_cast<std::size_t>(begin) * n,
            ta.values.begin() + static_cast<std::size_t>(begin + count) * n, out.values.begin());
  out.requires_grad = needs_grad(a);
  Node node;
  node.op = OpKind::SliceRows;
  node.inputs = {a.id};
  node.value = std::move(out);
  if (node.value.requires_grad) {
    const int aid = a.id;
    node.backward = [aid, begin, n](Graph& g, const Node& self) {
      std::vector<double>& ga = g.grad_buffer(aid);
      const std::size_t base = static_cast<std::size_t>(begin) * n;
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[base + i] += self.grad[i];
    };
  }
  return push(std::move(node));
}

TensorRef Graph::gather_cols(TensorRef a, std::vector<int> indices) {
  const Tensor& ta = value(a);
  check_2d(ta, "gather_cols");
  const int m = ta.rows(), n = ta.cols();
  for (int j : indices) {
    if (j < 0 || j >= n) {
      throw ShapeError("gather_cols index " + std::to_string(j) + " out of range for " +
                       shape_str(ta.shape));
    }
  }
  const int k = static_cast<int>(indices.size());
  if (k == 0) throw ShapeError("gather_cols needs at least one index");
  Tensor out(Shape{m, k});
  for (int i = 0; i < m; ++i) {
    const double* arow = ta.values.data() + static_cast<std::size_t>(i) * n;
    double* orow = out.values.data() + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < k; ++j) orow[j] = arow[indices[static_cast<std::size_t>(j)]];
  }
  out.requires_grad = needs_grad(a);
  Node node;
  node.op = OpKind::GatherCols;
  node.inputs = {a.id};
  node.value = std::move(out);
  if (node.value.requires_grad) {
    const int aid = a.id;
    auto idx = std::move(indices);
    node.backward = [aid, idx, m, n, k](Graph& g, const Node& self) {
      std::vector<double>& ga = g.grad_buffer(aid);
      for (int i = 0; i < m; ++i) {
        double* garow = ga.data() + static_cast<std::size_t>(i) * n;
        const double* grow = self.grad.data() + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < k; ++j) garow[idx[static_cast<std::size_t>(j)]] += grow[j];
      }
    };
  }
  return push(std::move(node));
}

TensorRef Graph::tile_cols(TensorRef a, int n) {
  const Tensor& ta = value(a);
  check_2d(ta, "tile_cols");
  if (ta.cols() != 1) throw ShapeError("tile_cols expects [m x 1], got " + shape_str(ta.shape));
  if (n <= 0) throw ShapeError("tile_cols needs n >= 1");
  const int m = ta.rows();
  Tensor out(Shape{m, n});
  for (int i = 0; i < m; ++i) {
    const double v = ta.values[static_cast<std::size_t>(i)];
    double* orow = out.values.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) orow[j] = v;
  }
  out.requires_grad = needs_grad(a);
  Node node;
  node.op = OpKind::TileCols;
  node.inputs = {a.id};
  node.value = std::move(out);
  if (node.value.requires_grad) {
    const int aid = a.id;
    node.backward = [aid, m, n](Graph& g, const Node& self) {
      std::vector<double>& ga = g.grad_buffer(aid);
      for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        const double* grow = self.grad.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += grow[j];
        ga[static_cast<std::size_t>(i)] += acc;
      }
    };
  }
  return push(std::move(node));
}

TensorRef Graph::sum(TensorRef a) {
  const Tensor& ta = value(a);
  double acc = 0.0;
  for (double v : ta.values) acc += v;
  Tensor out = scalar(acc);
  out.requires_grad = needs_grad(a);
  Node node;
  node.op = OpKind::Sum;
  node.inputs = {a.id};
  node.value = std::move(out);
  if (node.value.requires_grad) {
    const int aid = a.id;
    node.backward = [aid](Graph& g, const Node& self) {
      std::vector<double>& ga = g.grad_buffer(aid);
      const double gv = self.grad[0];
      for (double& v : ga) v += gv;
    };
  }
  return push(std::move(node));
}

TensorRef Graph::pinball(TensorRef pred, TensorRef targets, std::vector<double> quantiles) {
  const Tensor& tp = value(pred);
  const Tensor& ty = value(targets);
  check_2d(tp, "pinball pred");
  const int K = tp.rows(), N = tp.cols();
  if (static_cast<int>(quantiles.size()) != K) {
    throw ShapeError("pinball expects one quantile per prediction row: " +
                     std::to_string(quantiles.size()) + " vs " + std::to_string(K));
  }
  for (double q : quantiles) {
    if (!(q > 0.0 && q < 1.0)) throw ShapeError("quantile must lie in (0, 1), got " + std::to_string(q));
  }
  if (ty.rows() != 1 || ty.cols() != N) {
    throw ShapeError("pinball targets must be [1 x " + std::to_string(N) + "], got " +
                     shape_str(ty.shape));
  }
  if (needs_grad(targets)) throw ShapeError("pinball targets must not require gradients");
  Tensor out(Shape{K, N});
  for (int r = 0; r < K; ++r) {
    const double q = quantiles[static_cast<std::size_t>(r)];
    const double* prow = tp.values.data() + static_cast<std::size_t>(r) * N;
    double* orow = out.values.data() + static_cast<std::size_t>(r) * N;
    for (int j = 0; j < N; ++j) {
      const double y = ty.values[static_cast<std::size_t>(j)];
      const double diff = y - prow[j];
      orow[j] = diff > 0.0 ? q * diff : (q - 1.0) * diff;
    }
  }
  out.requires_grad = needs_grad(pred);
  Node node;
  node.op = OpKind::Pinball;
  node.inputs = {pred.id, targets.id};
  node.value = std::move(out);
  if (node.value.requires_grad) {
    const int pid = pred.id, yid = targets.id;
    auto qs = std::move(quantiles);
    node.backward = [pid, yid, qs, K, N](Graph& g, const Node& self) {
      const Tensor& P2 = g.nodes_[static_cast<std::size_t>(pid)].value;
      const Tensor& Y2 = g.nodes_[static_cast<std::size_t>(yid)].value;
      std::vector<double>& gp = g.grad_buffer(pid);
      for (int r = 0; r < K; ++r) {
        const double q = qs[static_cast<std::size_t>(r)];
        const double* prow = P2.values.data() + static_cast<std::size_t>(r) * N;
        const double* grow = self.grad.data() + static_cast<std::size_t>(r) * N;
        double* gprow = gp.data() + static_cast<std::size_t>(r) * N;
        for (int j = 0; j < N; ++j) {
          const double y = Y2.values[static_cast<std::size_t>(j)];
          // at pred == y the over-forecast branch applies
          gprow[j] += grow[j] * (prow[j] >= y ? (1.0 - q) : -q);
        }
      }
    };
  }
  return push(std::move(node));
}

void Graph::backward(TensorRef loss) {
  const Node& ln = node(loss);
  if (numel(ln.value.shape) != 1) {
    throw ShapeError("backward needs a scalar loss, got " + shape_str(ln.value.shape));
  }
  grad_buffer(loss.id)[0] = 1.0;
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.value.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n);
    if (n.bound) n.bound->accumulate_grad(n.grad);
    if (n.op == OpKind::Leaf && !n.bound) n.value.grad = n.grad;
  }
}

}  // namespace spade
