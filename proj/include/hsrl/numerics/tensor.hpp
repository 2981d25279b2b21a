#pragma once

// Dense double-precision tensors with a dynamic reverse-mode tape.
//
// Every primitive records a node holding its value, its parents and a closure
// that pushes the node's gradient back to the parents. The tape is rebuilt on
// every forward pass; parameters are leaf nodes that live across passes and
// accumulate gradients until zero_grad() is called.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hsrl::numerics {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and adds into the parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return parents.empty(); }
  std::span<double> ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> data);
  static Tensor parameter(Shape shape, std::vector<double> data);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> data);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  // Direct write access is reserved for leaves (parameters, inputs); writing
  // into an interior node invalidates the tape that produced it.
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;

  // Gradient accumulated by backward(); all zeros before the first pass.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  bool requires_grad() const;
  bool is_leaf() const;
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  // Same values, no history.
  Tensor detach() const;
  // Deep copy with the same requires_grad flag and no history.
  Tensor clone() const;

  std::uint64_t id() const;
  const detail::Node* node() const { return node_.get(); }

  static Tensor from_node(std::shared_ptr<detail::Node> node);
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

// Recording is on by default. While a guard is alive on a thread, primitives
// compute values only.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Nodes reachable from a loss that participate in differentiation, in
// recording order.
struct Graph {
  std::vector<detail::Node*> nodes;
};

Graph collect_graph(const Tensor& loss);

// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
// Interior gradients are recomputed from zero on every call, so two calls
// without zeroing double every leaf gradient exactly.
void backward(const Tensor& loss);

// ---- primitives -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

Tensor matvec(const Tensor& w, const Tensor& x);
// p^T E for p of length m and E of shape m x n.
Tensor vecmat(const Tensor& p, const Tensor& e);
// A B for A m x k and B k x n; with transpose_b, B is n x k and A B^T is used.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);
// Adds a length-n vector to every row of an m x n matrix.
Tensor add_rows(const Tensor& x, const Tensor& row);

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows);
Tensor row(const Tensor& x, std::size_t index);
Tensor mean_rows(const Tensor& x);
Tensor concat(const Tensor& a, const Tensor& b);
Tensor stack(std::span<const Tensor> scalars);
Tensor at(const Tensor& x, std::size_t index);

Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log_sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace hsrl::numerics
