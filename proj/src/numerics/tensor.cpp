#include "hsrl/numerics/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "hsrl/numerics/errors.hpp"

namespace hsrl::numerics {

using detail::Node;

namespace {

thread_local bool t_grad_enabled = true;
std::atomic<std::uint64_t> g_next_id{1};

using NodePtr = std::shared_ptr<Node>;

void check_finite(const char* op, const std::vector<double>& values) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
}

NodePtr new_node(const char* op, Shape shape, std::vector<double> value) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  node->op = op;
  return node;
}

Tensor finish(const char* op, Shape shape, std::vector<double> value,
              std::initializer_list<const Tensor*> inputs,
              std::function<void(Node&)> fn) {
  check_finite(op, value);
  NodePtr node = new_node(op, std::move(shape), std::move(value));
  if (t_grad_enabled) {
    bool any = false;
    for (const Tensor* t : inputs) any = any || t->requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (const Tensor* t : inputs) node->parents.push_back(t->node_ptr());
      node->backward = std::move(fn);
    }
  }
  return Tensor::from_node(std::move(node));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  require_defined(t, op);
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got shape " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// Gradient buffer of parent i, or an empty span when it needs no gradient.
std::span<double> parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return {};
  return p.ensure_grad();
}

const std::vector<double>& parent_value(const Node& self, std::size_t i) {
  return self.parents[i]->value;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::span<double> detail::Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  return Tensor(std::move(node));
}

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) +
                         " values, data has " + std::to_string(data.size()));
  }
  check_finite("constant", data);
  return Tensor(new_node("leaf", std::move(shape), std::move(data)));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  Tensor t = constant(std::move(shape), std::move(data));
  t.node_->requires_grad = true;
  t.node_->ensure_grad();
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> data(shape_numel(shape), 0.0);
  return requires_grad ? parameter(std::move(shape), std::move(data))
                       : constant(std::move(shape), std::move(data));
}

Tensor Tensor::scalar(double value) { return constant({}, {value}); }

Tensor Tensor::vector(std::vector<double> data) {
  const std::size_t n = data.size();
  return constant({n}, std::move(data));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> data) {
  return constant({rows, cols}, std::move(data));
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("shape of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows() needs a matrix");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols() needs a matrix");
  return node_->shape[1];
}

std::span<const double> Tensor::data() const {
  if (!node_) throw ContractError("data of undefined tensor");
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw ContractError("data of undefined tensor");
  return node_->value;
}

std::vector<double> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

std::span<const double> Tensor::grad() const {
  if (!node_) throw ContractError("grad of undefined tensor");
  return node_->ensure_grad();
}

std::span<double> Tensor::mutable_grad() {
  if (!node_) throw ContractError("grad of undefined tensor");
  return node_->ensure_grad();
}

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->value.size(), 0.0);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::is_leaf() const { return node_ && node_->is_leaf(); }

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->value[0];
}

Tensor Tensor::detach() const {
  return Tensor(new_node("leaf", shape(), node_->value));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  if (requires_grad()) {
    t.node_->requires_grad = true;
    t.node_->ensure_grad();
  }
  return t;
}

std::uint64_t Tensor::id() const { return node_ ? node_->id : 0; }

// ---- tape -----------------------------------------------------------------

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) {
  t_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

Graph collect_graph(const Tensor& loss) {
  Graph graph;
  if (!loss.requires_grad()) return graph;
  std::unordered_set<const Node*> seen;
  std::vector<Node*> stack{loss.node_ptr().get()};
  seen.insert(stack.back());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    graph.nodes.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) {
        stack.push_back(p.get());
      }
    }
  }
  // Parents are always recorded before their children, so id order is a
  // topological order.
  std::sort(graph.nodes.begin(), graph.nodes.end(),
            [](const Node* a, const Node* b) { return a->id < b->id; });
  return graph;
}

void backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss does not depend on any parameter");
  }
  Graph graph = collect_graph(loss);
  for (Node* n : graph.nodes) {
    if (!n->is_leaf()) n->grad.assign(n->value.size(), 0.0);
  }
  Node* root = loss.node_ptr().get();
  root->ensure_grad()[0] += 1.0;
  for (auto it = graph.nodes.rbegin(); it != graph.nodes.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
  for (Node* n : graph.nodes) {
    if (!n->is_leaf()) continue;
    for (double g : n->grad) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient reached a parameter");
      }
    }
  }
}

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return finish("add", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto g = parent_grad(self, k);
      if (g.empty()) continue;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return finish("sub", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    if (auto g = parent_grad(self, 0); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (auto g = parent_grad(self, 1); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return finish("mul", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& av = parent_value(self, 0);
    const auto& bv = parent_value(self, 1);
    if (auto g = parent_grad(self, 0); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (auto g = parent_grad(self, 1); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  require_defined(a, "scale");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  return finish("scale", a.shape(), std::move(out), {&a},
                [factor](Node& self) {
                  auto g = parent_grad(self, 0);
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    g[i] += factor * self.grad[i];
                  }
                });
}

Tensor add_scalar(const Tensor& a, double offset) {
  require_defined(a, "add_scalar");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v += offset;
  return finish("add_scalar", a.shape(), std::move(out), {&a}, [](Node& self) {
    auto g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// ---- linear algebra -------------------------------------------------------

Tensor matvec(const Tensor& w, const Tensor& x) {
  require_rank(w, 2, "matvec");
  require_rank(x, 1, "matvec");
  const std::size_t m = w.rows(), n = w.cols();
  if (x.numel() != n) {
    throw DimensionError("matvec: matrix " + shape_string(w.shape()) +
                         " cannot multiply vector " + shape_string(x.shape()));
  }
  std::vector<double> out(m, 0.0);
  auto wv = w.data(), xv = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* wr = wv.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += wr[j] * xv[j];
    out[i] = acc;
  }
  return finish("matvec", {m}, std::move(out), {&w, &x}, [m, n](Node& self) {
    const auto& wv = parent_value(self, 0);
    const auto& xv = parent_value(self, 1);
    if (auto g = parent_grad(self, 0); !g.empty()) {
      for (std::size_t i = 0; i < m; ++i) {
        const double gi = self.grad[i];
        double* gr = g.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) gr[j] += gi * xv[j];
      }
    }
    if (auto g = parent_grad(self, 1); !g.empty()) {
      for (std::size_t i = 0; i < m; ++i) {
        const double gi = self.grad[i];
        const double* wr = wv.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) g[j] += gi * wr[j];
      }
    }
  });
}

Tensor vecmat(const Tensor& p, const Tensor& e) {
  require_rank(p, 1, "vecmat");
  require_rank(e, 2, "vecmat");
  const std::size_t m = e.rows(), n = e.cols();
  if (p.numel() != m) {
    throw DimensionError("vecmat: vector " + shape_string(p.shape()) +
                         " cannot weight rows of " + shape_string(e.shape()));
  }
  std::vector<double> out(n, 0.0);
  auto pv = p.data(), ev = e.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double pi = pv[i];
    const double* er = ev.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += pi * er[j];
  }
  return finish("vecmat", {n}, std::move(out), {&p, &e}, [m, n](Node& self) {
    const auto& pv = parent_value(self, 0);
    const auto& ev = parent_value(self, 1);
    if (auto g = parent_grad(self, 0); !g.empty()) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* er = ev.data() + i * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += self.grad[j] * er[j];
        g[i] += acc;
      }
    }
    if (auto g = parent_grad(self, 1); !g.empty()) {
      for (std::size_t i = 0; i < m; ++i) {
        double* gr = g.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) gr[j] += pv[i] * self.grad[j];
      }
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.rows(), k = a.cols();
  const std::size_t bk = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  if (bk != k) {
    throw DimensionError("matmul: " + shape_string(a.shape()) + " times " +
                         shape_string(b.shape()) +
                         (transpose_b ? "^T" : "") + " does not conform");
  }
  // b_at(l, j) is element (l, j) of the effective right operand.
  auto bv = b.data(), av = a.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = av.data() + i * k;
    double* orow = out.data() + i * n;
    if (transpose_b) {
      for (std::size_t j = 0; j < n; ++j) {
        const double* br = bv.data() + j * k;
        double acc = 0.0;
        for (std::size_t l = 0; l < k; ++l) acc += ar[l] * br[l];
        orow[j] = acc;
      }
    } else {
      for (std::size_t l = 0; l < k; ++l) {
        const double al = ar[l];
        const double* br = bv.data() + l * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += al * br[j];
      }
    }
  }
  return finish(
      "matmul", {m, n}, std::move(out), {&a, &b},
      [m, k, n, transpose_b](Node& self) {
        const auto& av = parent_value(self, 0);
        const auto& bv = parent_value(self, 1);
        const double* gout = self.grad.data();
        if (auto g = parent_grad(self, 0); !g.empty()) {
          // dA = G B_eff^T
          for (std::size_t i = 0; i < m; ++i) {
            const double* gr = gout + i * n;
            double* gar = g.data() + i * k;
            for (std::size_t j = 0; j < n; ++j) {
              const double gij = gr[j];
              if (transpose_b) {
                const double* br = bv.data() + j * k;
                for (std::size_t l = 0; l < k; ++l) gar[l] += gij * br[l];
              } else {
                for (std::size_t l = 0; l < k; ++l) {
                  gar[l] += gij * bv[l * n + j];
                }
              }
            }
          }
        }
        if (auto g = parent_grad(self, 1); !g.empty()) {
          // dB_eff = A^T G
          for (std::size_t i = 0; i < m; ++i) {
            const double* ar = av.data() + i * k;
            const double* gr = gout + i * n;
            for (std::size_t j = 0; j < n; ++j) {
              const double gij = gr[j];
              if (transpose_b) {
                double* gbr = g.data() + j * k;
                for (std::size_t l = 0; l < k; ++l) gbr[l] += gij * ar[l];
              } else {
                for (std::size_t l = 0; l < k; ++l) {
                  g[l * n + j] += gij * ar[l];
                }
              }
            }
          }
        }
      });
}

Tensor add_rows(const Tensor& x, const Tensor& r) {
  require_rank(x, 2, "add_rows");
  require_rank(r, 1, "add_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (r.numel() != n) {
    throw DimensionError("add_rows: row " + shape_string(r.shape()) +
                         " does not match " + shape_string(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto rv = r.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += rv[j];
  }
  return finish("add_rows", {m, n}, std::move(out), {&x, &r},
                [m, n](Node& self) {
                  if (auto g = parent_grad(self, 0); !g.empty()) {
                    for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
                  }
                  if (auto g = parent_grad(self, 1); !g.empty()) {
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t j = 0; j < n; ++j) {
                        g[j] += self.grad[i * n + j];
                      }
                    }
                  }
                });
}

// ---- indexing -------------------------------------------------------------

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows) {
  require_rank(table, 2, "gather_rows");
  const std::size_t r = table.rows(), n = table.cols();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out(idx.size() * n);
  auto tv = table.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= r) {
      throw LookupError("gather_rows: row " + std::to_string(idx[i]) +
                        " outside table of " + std::to_string(r) + " rows");
    }
    std::copy_n(tv.data() + idx[i] * n, n, out.data() + i * n);
  }
  const std::size_t count = idx.size();
  return finish("gather_rows", {count, n}, std::move(out), {&table},
                [idx = std::move(idx), n](Node& self) {
                  auto g = parent_grad(self, 0);
                  for (std::size_t i = 0; i < idx.size(); ++i) {
                    double* gr = g.data() + idx[i] * n;
                    const double* sr = self.grad.data() + i * n;
                    for (std::size_t j = 0; j < n; ++j) gr[j] += sr[j];
                  }
                });
}

Tensor row(const Tensor& x, std::size_t index) {
  require_rank(x, 2, "row");
  const std::size_t m = x.rows(), n = x.cols();
  if (index >= m) {
    throw DimensionError("row: index " + std::to_string(index) +
                         " outside " + shape_string(x.shape()));
  }
  auto xv = x.data();
  std::vector<double> out(xv.begin() + index * n, xv.begin() + (index + 1) * n);
  return finish("row", {n}, std::move(out), {&x}, [index, n](Node& self) {
    auto g = parent_grad(self, 0);
    for (std::size_t j = 0; j < n; ++j) g[index * n + j] += self.grad[j];
  });
}

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (m == 0) throw DimensionError("mean_rows: empty matrix");
  std::vector<double> out(n, 0.0);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j] += xv[i * n + j];
  }
  const double inv = 1.0 / static_cast<double>(m);
  for (double& v : out) v *= inv;
  return finish("mean_rows", {n}, std::move(out), {&x},
                [m, n, inv](Node& self) {
                  auto g = parent_grad(self, 0);
                  for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                      g[i * n + j] += inv * self.grad[j];
                    }
                  }
                });
}

Tensor concat(const Tensor& a, const Tensor& b) {
  require_rank(a, 1, "concat");
  require_rank(b, 1, "concat");
  const std::size_t na = a.numel(), nb = b.numel();
  std::vector<double> out;
  out.reserve(na + nb);
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  return finish("concat", {na + nb}, std::move(out), {&a, &b},
                [na, nb](Node& self) {
                  if (auto g = parent_grad(self, 0); !g.empty()) {
                    for (std::size_t i = 0; i < na; ++i) g[i] += self.grad[i];
                  }
                  if (auto g = parent_grad(self, 1); !g.empty()) {
                    for (std::size_t i = 0; i < nb; ++i) {
                      g[i] += self.grad[na + i];
                    }
                  }
                });
}

Tensor stack(std::span<const Tensor> scalars) {
  std::vector<double> out;
  out.reserve(scalars.size());
  bool any_grad = false;
  for (const Tensor& s : scalars) {
    require_defined(s, "stack");
    if (s.numel() != 1) {
      throw DimensionError("stack: element of shape " +
                           shape_string(s.shape()) + " is not a scalar");
    }
    out.push_back(s.data()[0]);
    any_grad = any_grad || s.requires_grad();
  }
  check_finite("stack", out);
  const std::size_t n = out.size();
  NodePtr node = new_node("stack", {n}, std::move(out));
  if (grad_enabled() && any_grad) {
    node->requires_grad = true;
    for (const Tensor& s : scalars) node->parents.push_back(s.node_ptr());
    node->backward = [](Node& self) {
      for (std::size_t i = 0; i < self.parents.size(); ++i) {
        auto g = parent_grad(self, i);
        if (!g.empty()) g[0] += self.grad[i];
      }
    };
  }
  return Tensor::from_node(std::move(node));
}

Tensor at(const Tensor& x, std::size_t index) {
  require_defined(x, "at");
  if (index >= x.numel()) {
    throw DimensionError("at: index " + std::to_string(index) + " outside " +
                         shape_string(x.shape()));
  }
  return finish("at", {}, {x.data()[index]}, {&x}, [index](Node& self) {
    auto g = parent_grad(self, 0);
    g[index] += self.grad[0];
  });
}

// ---- normalization --------------------------------------------------------

namespace {

void softmax_into(const double* x, double* y, std::size_t n) {
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - mx);
    total += y[i];
  }
  const double inv = 1.0 / total;
  for (std::size_t i = 0; i < n; ++i) y[i] *= inv;
}

void softmax_backward(const double* y, const double* gy, double* gx,
                      std::size_t n) {
  double inner = 0.0;
  for (std::size_t i = 0; i < n; ++i) inner += gy[i] * y[i];
  for (std::size_t i = 0; i < n; ++i) gx[i] += y[i] * (gy[i] - inner);
}

}  // namespace

Tensor softmax(const Tensor& x) {
  require_rank(x, 1, "softmax");
  const std::size_t n = x.numel();
  if (n == 0) throw DimensionError("softmax: empty input");
  std::vector<double> out(n);
  softmax_into(x.data().data(), out.data(), n);
  return finish("softmax", {n}, std::move(out), {&x}, [n](Node& self) {
    auto g = parent_grad(self, 0);
    softmax_backward(self.value.data(), self.grad.data(), g.data(), n);
  });
}

Tensor log_softmax(const Tensor& x) {
  require_rank(x, 1, "log_softmax");
  const std::size_t n = x.numel();
  if (n == 0) throw DimensionError("log_softmax: empty input");
  auto xv = x.data();
  double mx = xv[0];
  for (double v : xv) mx = std::max(mx, v);
  double total = 0.0;
  for (double v : xv) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[i] - lse;
  return finish("log_softmax", {n}, std::move(out), {&x}, [n](Node& self) {
    auto g = parent_grad(self, 0);
    double gsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) gsum += self.grad[i];
    for (std::size_t i = 0; i < n; ++i) {
      g[i] += self.grad[i] - std::exp(self.value[i]) * gsum;
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (n == 0) throw DimensionError("softmax_rows: empty rows");
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    softmax_into(x.data().data() + i * n, out.data() + i * n, n);
  }
  return finish("softmax_rows", {m, n}, std::move(out), {&x},
                [m, n](Node& self) {
                  auto g = parent_grad(self, 0);
                  for (std::size_t i = 0; i < m; ++i) {
                    softmax_backward(self.value.data() + i * n,
                                     self.grad.data() + i * n,
                                     g.data() + i * n, n);
                  }
                });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  require_rank(x, 1, "layer_norm");
  require_same_shape(x, gain, "layer_norm");
  require_same_shape(x, bias, "layer_norm");
  const std::size_t n = x.numel();
  if (n < 2) throw DimensionError("layer_norm: needs at least 2 features");
  auto xv = x.data(), gv = gain.data(), bv = bias.data();
  double mu = 0.0;
  for (double v : xv) mu += v;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double v : xv) var += (v - mu) * (v - mu);
  var /= static_cast<double>(n);
  const double inv_std = 1.0 / std::sqrt(var + eps);
  std::vector<double> xhat(n), out(n);
  for (std::size_t i = 0; i < n; ++i) {
    xhat[i] = (xv[i] - mu) * inv_std;
    out[i] = gv[i] * xhat[i] + bv[i];
  }
  return finish(
      "layer_norm", {n}, std::move(out), {&x, &gain, &bias},
      [n, inv_std, xhat = std::move(xhat)](Node& self) {
        const auto& gv = parent_value(self, 1);
        if (auto g = parent_grad(self, 1); !g.empty()) {
          for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * xhat[i];
        }
        if (auto g = parent_grad(self, 2); !g.empty()) {
          for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i];
        }
        if (auto g = parent_grad(self, 0); !g.empty()) {
          double mean_gh = 0.0, mean_ghx = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const double gh = self.grad[i] * gv[i];
            mean_gh += gh;
            mean_ghx += gh * xhat[i];
          }
          mean_gh /= static_cast<double>(n);
          mean_ghx /= static_cast<double>(n);
          for (std::size_t i = 0; i < n; ++i) {
            const double gh = self.grad[i] * gv[i];
            g[i] += inv_std * (gh - mean_gh - xhat[i] * mean_ghx);
          }
        }
      });
}

// ---- pointwise nonlinearities ---------------------------------------------

namespace {

template <typename Fwd, typename Deriv>
Tensor pointwise(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  require_defined(x, op);
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return finish(op, x.shape(), std::move(out), {&x}, [deriv](Node& self) {
    auto g = parent_grad(self, 0);
    const auto& xv = parent_value(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * deriv(xv[i], self.value[i]);
    }
  });
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor tanh(const Tensor& x) {
  return pointwise(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return pointwise(
      "sigmoid", x, stable_sigmoid,
      [](double, double y) { return y * (1.0 - y); });
}

Tensor log_sigmoid(const Tensor& x) {
  return pointwise(
      "log_sigmoid", x,
      [](double v) { return std::min(v, 0.0) - std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) { return 1.0 - stable_sigmoid(v); });
}

Tensor exp(const Tensor& x) {
  return pointwise(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return pointwise(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double total = 0.0;
  for (double v : x.data()) total += v;
  return finish("sum", {}, {total}, {&x}, [](Node& self) {
    auto g = parent_grad(self, 0);
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  require_defined(x, "mean");
  const std::size_t n = x.numel();
  if (n == 0) throw DimensionError("mean: empty input");
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double inv = 1.0 / static_cast<double>(n);
  return finish("mean", {}, {total * inv}, {&x}, [inv](Node& self) {
    auto g = parent_grad(self, 0);
    for (double& v : g) v += inv * self.grad[0];
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_rank(a, 1, "dot");
  require_same_shape(a, b, "dot");
  double total = 0.0;
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < av.size(); ++i) total += av[i] * bv[i];
  return finish("dot", {}, {total}, {&a, &b}, [](Node& self) {
    const auto& av = parent_value(self, 0);
    const auto& bv = parent_value(self, 1);
    const double g0 = self.grad[0];
    if (auto g = parent_grad(self, 0); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * bv[i];
    }
    if (auto g = parent_grad(self, 1); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * av[i];
    }
  });
}

}  // namespace hsrl::numerics
