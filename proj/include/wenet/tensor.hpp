#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace wenet {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

// Dense row-major tensor of 64-bit floats. Value-semantic: copies are
// independent and tensors move freely between threads. When produced by (or
// registered with) a Tape, `node` and `tape_id` link the value into that
// record; detached tensors have node == -1.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  std::int64_t node = -1;
  std::uint64_t tape_id = 0;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> v);

  std::size_t numel() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  // Rank-2 accessors.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  double scalar() const;  // numel()==1 or ArgumentError
  bool all_finite() const;

  Tensor detached() const;
};

Tensor zeros(Shape shape);
Tensor full(Shape shape, double value);
Tensor row(std::vector<double> v);                 // [1 x n]
Tensor vec(std::vector<double> v);                 // [n]
Tensor matrix(std::size_t r, std::size_t c, std::vector<double> v);

// Recorded computation supporting one forward pass and one reverse sweep.
// Nodes are append-only, so every node's inputs precede it. A Tape is
// confined to a single thread for its lifetime.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a value (input or parameter) as a leaf of this record.
  Tensor track(const Tensor& t);

  // a[m x k] * b[k x n] -> [m x n]
  Tensor matmul(const Tensor& a, const Tensor& b);
  // Elementwise; also accepts [k x n] + [1 x n] (row broadcast of b).
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);  // Hadamard
  Tensor scale(const Tensor& a, double c);
  Tensor sub_from(double c, const Tensor& a);  // c - a, elementwise
  Tensor sigmoid(const Tensor& x);
  Tensor tanh(const Tensor& x);
  // Vector softmax (rank-1, or rank-2 with a single row or column).
  Tensor softmax(const Tensor& x);
  Tensor concat(std::span<const Tensor> parts, std::size_t axis = 0);
  Tensor reshape(const Tensor& x, Shape shape);
  // table[v x e] gathered by ids -> [len x e]
  Tensor lookup(const Tensor& table, std::span<const int> ids);
  // Mean of -log softmax(logits[t])[target[t]] over targets != ignore_id.
  Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_id);
  Tensor sum(const Tensor& x);                  // scalar [1]
  Tensor mean(std::span<const Tensor> scalars);  // mean of scalar nodes

  // Reverse accumulation from a scalar root. May be called once per tape.
  void backward(const Tensor& root);

  // Gradient of the root w.r.t. a tracked tensor; zeros if unreachable.
  // Valid after backward().
  const Tensor& grad(const Tensor& t) const;

  std::size_t node_count() const { return nodes_.size(); }
  std::uint64_t id() const { return id_; }

 private:
  enum class Op : std::uint8_t {
    Leaf,
    MatMul,
    Add,
    AddRow,
    Sub,
    Mul,
    Scale,
    SubFrom,
    Sigmoid,
    Tanh,
    Softmax,
    Concat,
    Reshape,
    Lookup,
    CrossEntropy,
    Sum,
    Mean,
  };

  struct Node {
    Op op;
    std::vector<std::int64_t> inputs;
    Shape shape;
    std::vector<double> value;
    std::vector<int> ids;          // lookup ids / cross-entropy targets
    std::vector<double> aux;       // cross-entropy: softmax probabilities
    double c = 0.0;                // scalar operand / concat axis / ignore_id
  };

  std::int64_t check_operand(const Tensor& t, const char* op_name);
  Tensor emit(Node node);
  const Node& input_node(const Node& n, std::size_t i) const { return nodes_[static_cast<std::size_t>(n.inputs[i])]; }

  std::uint64_t id_;
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool backward_done_ = false;
};

}  // namespace wenet
