#include "wenet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "wenet/error.hpp"
#include "wenet/kernels.hpp"

namespace wenet {

namespace {

std::atomic<std::uint64_t> g_next_tape_id{1};

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ArgumentError("tensor shape must have at least one dimension");
  for (std::size_t d : shape) {
    if (d == 0) throw ArgumentError("tensor dimensions must be positive, got " + shape_str(shape));
  }
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  check_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  }
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows() requires a rank-2 tensor, got " + shape_str(shape));
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols() requires a rank-2 tensor, got " + shape_str(shape));
  return shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) {
  if (r >= rows() || c >= cols()) throw IndexError("tensor index out of range");
  return values[r * shape[1] + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (r >= rows() || c >= cols()) throw IndexError("tensor index out of range");
  return values[r * shape[1] + c];
}

double Tensor::scalar() const {
  if (numel() != 1) throw ArgumentError("scalar() requires a single-element tensor, got " + shape_str(shape));
  return values[0];
}

bool Tensor::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::detached() const {
  Tensor t;
  t.shape = shape;
  t.values = values;
  return t;
}

Tensor zeros(Shape shape) {
  check_shape(shape);
  std::vector<double> v(shape_numel(shape), 0.0);
  return Tensor(std::move(shape), std::move(v));
}

Tensor full(Shape shape, double value) {
  check_shape(shape);
  std::vector<double> v(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(v));
}

Tensor row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({1, n}, std::move(v));
}

Tensor vec(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor matrix(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor({r, c}, std::move(v)); }

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) {}

std::int64_t Tape::check_operand(const Tensor& t, const char* op_name) {
  if (t.node < 0) {
    // Untracked value: record it as a constant leaf of this tape.
    Node leaf;
    leaf.op = Op::Leaf;
    leaf.shape = t.shape;
    leaf.value = t.values;
    nodes_.push_back(std::move(leaf));
    return static_cast<std::int64_t>(nodes_.size() - 1);
  }
  if (t.tape_id != id_ || t.node >= static_cast<std::int64_t>(nodes_.size())) {
    throw ArgumentError(std::string(op_name) + ": tensor belongs to a different computation record");
  }
  return t.node;
}

Tensor Tape::emit(Node node) {
  nodes_.push_back(std::move(node));
  const Node& n = nodes_.back();
  Tensor out;
  out.shape = n.shape;
  out.values = n.value;
  out.node = static_cast<std::int64_t>(nodes_.size() - 1);
  out.tape_id = id_;
  return out;
}

Tensor Tape::track(const Tensor& t) {
  check_shape(t.shape);
  Node leaf;
  leaf.op = Op::Leaf;
  leaf.shape = t.shape;
  leaf.value = t.values;
  return emit(std::move(leaf));
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul: expects rank-2 tensors, got " + shape_str(a.shape) + " and " + shape_str(b.shape));
  }
  if (a.shape[1] != b.shape[0]) {
    throw DimensionError("matmul: inner dimensions differ: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  }
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Node node;
  node.op = Op::MatMul;
  node.inputs = {check_operand(a, "matmul"), check_operand(b, "matmul")};
  node.shape = {m, n};
  node.value.resize(m * n);
  kernels::matmul(a.values.data(), b.values.data(), node.value.data(), m, k, n);
  return emit(std::move(node));
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  if (a.shape == b.shape) {
    Node node;
    node.op = Op::Add;
    node.inputs = {check_operand(a, "add"), check_operand(b, "add")};
    node.shape = a.shape;
    node.value.resize(a.numel());
    for (std::size_t i = 0; i < a.numel(); ++i) node.value[i] = a.values[i] + b.values[i];
    return emit(std::move(node));
  }
  if (a.rank() == 2 && b.rank() == 2 && b.shape[0] == 1 && a.shape[1] == b.shape[1]) {
    // Row broadcast: every row of a gets b added.
    Node node;
    node.op = Op::AddRow;
    node.inputs = {check_operand(a, "add"), check_operand(b, "add")};
    node.shape = a.shape;
    node.value.resize(a.numel());
    const std::size_t rows = a.shape[0], cols = a.shape[1];
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        node.value[r * cols + c] = a.values[r * cols + c] + b.values[c];
      }
    }
    return emit(std::move(node));
  }
  throw DimensionError("add: incompatible shapes " + shape_str(a.shape) + " and " + shape_str(b.shape));
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) {
    throw DimensionError("sub: incompatible shapes " + shape_str(a.shape) + " and " + shape_str(b.shape));
  }
  Node node;
  node.op = Op::Sub;
  node.inputs = {check_operand(a, "sub"), check_operand(b, "sub")};
  node.shape = a.shape;
  node.value.resize(a.numel());
  for (std::size_t i = 0; i < a.numel(); ++i) node.value[i] = a.values[i] - b.values[i];
  return emit(std::move(node));
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) {
    throw DimensionError("mul: incompatible shapes " + shape_str(a.shape) + " and " + shape_str(b.shape));
  }
  Node node;
  node.op = Op::Mul;
  node.inputs = {check_operand(a, "mul"), check_operand(b, "mul")};
  node.shape = a.shape;
  node.value.resize(a.numel());
  for (std::size_t i = 0; i < a.numel(); ++i) node.value[i] = a.values[i] * b.values[i];
  return emit(std::move(node));
}

Tensor Tape::scale(const Tensor& a, double c) {
  Node node;
  node.op = Op::Scale;
  node.inputs = {check_operand(a, "scale")};
  node.shape = a.shape;
  node.c = c;
  node.value.resize(a.numel());
  for (std::size_t i = 0; i < a.numel(); ++i) node.value[i] = c * a.values[i];
  return emit(std::move(node));
}

Tensor Tape::sub_from(double c, const Tensor& a) {
  Node node;
  node.op = Op::SubFrom;
  node.inputs = {check_operand(a, "sub_from")};
  node.shape = a.shape;
  node.c = c;
  node.value.resize(a.numel());
  for (std::size_t i = 0; i < a.numel(); ++i) node.value[i] = c - a.values[i];
  return emit(std::move(node));
}

Tensor Tape::sigmoid(const Tensor& x) {
  Node node;
  node.op = Op::Sigmoid;
  node.inputs = {check_operand(x, "sigmoid")};
  node.shape = x.shape;
  node.value.resize(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = x.values[i];
    // Branch by sign so neither exp can overflow.
    if (v >= 0.0) {
      node.value[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      node.value[i] = e / (1.0 + e);
    }
  }
  return emit(std::move(node));
}

Tensor Tape::tanh(const Tensor& x) {
  Node node;
  node.op = Op::Tanh;
  node.inputs = {check_operand(x, "tanh")};
  node.shape = x.shape;
  node.value.resize(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) node.value[i] = std::tanh(x.values[i]);
  return emit(std::move(node));
}

Tensor Tape::softmax(const Tensor& x) {
  if (x.numel() == 0) throw ArgumentError("softmax: empty input");
  const bool vector_like = x.rank() == 1 || (x.rank() == 2 && (x.shape[0] == 1 || x.shape[1] == 1));
  if (!vector_like) throw DimensionError("softmax: expects a vector, got " + shape_str(x.shape));
  Node node;
  node.op = Op::Softmax;
  node.inputs = {check_operand(x, "softmax")};
  node.shape = x.shape;
  node.value.resize(x.numel());
  const double mx = *std::max_element(x.values.begin(), x.values.end());
  double total = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    node.value[i] = std::exp(x.values[i] - mx);
    total += node.value[i];
  }
  for (double& v : node.value) v /= total;
  return emit(std::move(node));
}

Tensor Tape::concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ArgumentError("concat: needs at least one part");
  const Shape& first = parts[0].shape;
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(first));
  }
  std::size_t axis_total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != first.size()) {
      throw DimensionError("concat: rank mismatch between " + shape_str(first) + " and " + shape_str(p.shape));
    }
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && p.shape[d] != first[d]) {
        throw DimensionError("concat: incompatible shapes " + shape_str(first) + " and " + shape_str(p.shape) +
                             " along axis " + std::to_string(axis));
      }
    }
    axis_total += p.shape[axis];
  }

  Node node;
  node.op = Op::Concat;
  node.c = static_cast<double>(axis);
  node.shape = first;
  node.shape[axis] = axis_total;
  node.inputs.reserve(parts.size());
  for (const Tensor& p : parts) node.inputs.push_back(check_operand(p, "concat"));

  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  node.value.resize(shape_numel(node.shape));
  const std::size_t out_stride = axis_total * inner;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t block = p.shape[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.values.data() + o * block, block, node.value.data() + o * out_stride + offset);
    }
    offset += block;
  }
  return emit(std::move(node));
}

Tensor Tape::reshape(const Tensor& x, Shape shape) {
  check_shape(shape);
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape) + " as " + shape_str(shape));
  }
  Node node;
  node.op = Op::Reshape;
  node.inputs = {check_operand(x, "reshape")};
  node.shape = std::move(shape);
  node.value = x.values;
  return emit(std::move(node));
}

Tensor Tape::lookup(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) throw DimensionError("lookup: table must be rank-2, got " + shape_str(table.shape));
  if (ids.empty()) throw ArgumentError("lookup: empty id sequence");
  const std::size_t v = table.shape[0], e = table.shape[1];
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw IndexError("lookup: id " + std::to_string(id) + " out of range for table with " +
                       std::to_string(v) + " rows");
    }
  }
  Node node;
  node.op = Op::Lookup;
  node.inputs = {check_operand(table, "lookup")};
  node.ids.assign(ids.begin(), ids.end());
  node.shape = {ids.size(), e};
  node.value.resize(ids.size() * e);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    std::copy_n(table.values.data() + static_cast<std::size_t>(ids[r]) * e, e, node.value.data() + r * e);
  }
  return emit(std::move(node));
}

Tensor Tape::cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_id) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy: logits must be rank-2, got " + shape_str(logits.shape));
  const std::size_t t_len = logits.shape[0], v = logits.shape[1];
  if (targets.size() != t_len) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(t_len) + " logit rows");
  }
  for (int id : targets) {
    if (id == ignore_id) continue;
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw IndexError("cross_entropy: target id " + std::to_string(id) + " out of range for vocab " +
                       std::to_string(v));
    }
  }

  Node node;
  node.op = Op::CrossEntropy;
  node.inputs = {check_operand(logits, "cross_entropy")};
  node.ids.assign(targets.begin(), targets.end());
  node.c = static_cast<double>(ignore_id);
  node.shape = {1};
  node.aux.assign(t_len * v, 0.0);

  double total = 0.0;
  std::size_t counted = 0;
  // Row-wise log-softmax; rows are independent so this loop distributes
  // cleanly, each row keeping its own accumulation order.
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (t_len * v >= 1u << 15)
#endif
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(t_len); ++r) {
    if (node.ids[static_cast<std::size_t>(r)] == ignore_id) continue;
    const double* xrow = logits.values.data() + static_cast<std::size_t>(r) * v;
    double* prow = node.aux.data() + static_cast<std::size_t>(r) * v;
    const double mx = *std::max_element(xrow, xrow + v);
    double denom = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      prow[j] = std::exp(xrow[j] - mx);
      denom += prow[j];
    }
    for (std::size_t j = 0; j < v; ++j) prow[j] /= denom;
  }
  for (std::size_t r = 0; r < t_len; ++r) {
    if (node.ids[r] == ignore_id) continue;
    const double p = node.aux[r * v + static_cast<std::size_t>(node.ids[r])];
    total += -std::log(p);
    ++counted;
  }
  if (counted == 0) throw ArgumentError("cross_entropy: every position carries the ignored id");
  node.value = {total / static_cast<double>(counted)};
  return emit(std::move(node));
}

Tensor Tape::sum(const Tensor& x) {
  Node node;
  node.op = Op::Sum;
  node.inputs = {check_operand(x, "sum")};
  node.shape = {1};
  double total = 0.0;
  for (double v : x.values) total += v;
  node.value = {total};
  return emit(std::move(node));
}

Tensor Tape::mean(std::span<const Tensor> scalars) {
  if (scalars.empty()) throw ArgumentError("mean: needs at least one input");
  Node node;
  node.op = Op::Mean;
  node.shape = {1};
  double total = 0.0;
  for (const Tensor& s : scalars) {
    if (s.numel() != 1) throw DimensionError("mean: expects scalar inputs, got " + shape_str(s.shape));
    node.inputs.push_back(check_operand(s, "mean"));
    total += s.values[0];
  }
  node.value = {total / static_cast<double>(scalars.size())};
  return emit(std::move(node));
}

void Tape::backward(const Tensor& root) {
  if (backward_done_) throw ArgumentError("backward: record already swept; use a fresh record");
  if (root.numel() != 1) {
    throw ArgumentError("backward: root must be scalar, got " + shape_str(root.shape));
  }
  if (root.node < 0 || root.tape_id != id_) {
    throw ArgumentError("backward: root does not belong to this computation record");
  }

  grads_.clear();
  grads_.reserve(nodes_.size());
  for (const Node& n : nodes_) grads_.push_back(zeros(n.shape));

  const std::size_t root_id = static_cast<std::size_t>(root.node);
  std::vector<char> reachable(nodes_.size(), 0);
  reachable[root_id] = 1;
  grads_[root_id].values[0] = 1.0;

  for (std::size_t id = root_id + 1; id-- > 0;) {
    if (!reachable[id]) continue;
    const Node& n = nodes_[id];
    for (std::int64_t in : n.inputs) reachable[static_cast<std::size_t>(in)] = 1;
    const std::vector<double>& g = grads_[id].values;

    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::MatMul: {
        const Node& a = input_node(n, 0);
        const Node& b = input_node(n, 1);
        const std::size_t m = a.shape[0], k = a.shape[1], cols = b.shape[1];
        std::vector<double> tmp_a(m * k);
        kernels::matmul_bt(g.data(), b.value.data(), tmp_a.data(), m, cols, k);
        std::vector<double>& da = grads_[n.inputs[0]].values;
        for (std::size_t i = 0; i < tmp_a.size(); ++i) da[i] += tmp_a[i];
        std::vector<double> tmp_b(k * cols);
        kernels::matmul_at(a.value.data(), g.data(), tmp_b.data(), m, k, cols);
        std::vector<double>& db = grads_[n.inputs[1]].values;
        for (std::size_t i = 0; i < tmp_b.size(); ++i) db[i] += tmp_b[i];
        break;
      }
      case Op::Add: {
        std::vector<double>& da = grads_[n.inputs[0]].values;
        std::vector<double>& db = grads_[n.inputs[1]].values;
        for (std::size_t i = 0; i < g.size(); ++i) {
          da[i] += g[i];
          db[i] += g[i];
        }
        break;
      }
      case Op::AddRow: {
        std::vector<double>& da = grads_[n.inputs[0]].values;
        std::vector<double>& db = grads_[n.inputs[1]].values;
        const std::size_t cols = n.shape[1];
        for (std::size_t i = 0; i < g.size(); ++i) {
          da[i] += g[i];
          db[i % cols] += g[i];
        }
        break;
      }
      case Op::Sub: {
        std::vector<double>& da = grads_[n.inputs[0]].values;
        std::vector<double>& db = grads_[n.inputs[1]].values;
        for (std::size_t i = 0; i < g.size(); ++i) {
          da[i] += g[i];
          db[i] -= g[i];
        }
        break;
      }
      case Op::Mul: {
        const Node& a = input_node(n, 0);
        const Node& b = input_node(n, 1);
        std::vector<double>& da = grads_[n.inputs[0]].values;
        std::vector<double>& db = grads_[n.inputs[1]].values;
        for (std::size_t i = 0; i < g.size(); ++i) {
          da[i] += b.value[i] * g[i];
          db[i] += a.value[i] * g[i];
        }
        break;
      }
      case Op::Scale: {
        std::vector<double>& da = grads_[n.inputs[0]].values;
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += n.c * g[i];
        break;
      }
      case Op::SubFrom: {
        std::vector<double>& da = grads_[n.inputs[0]].values;
        for (std::size_t i = 0; i < g.size(); ++i) da[i] -= g[i];
        break;
      }
      case Op::Sigmoid: {
        std::vector<double>& dx = grads_[n.inputs[0]].values;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = n.value[i];
          dx[i] += y * (1.0 - y) * g[i];
        }
        break;
      }
      case Op::Tanh: {
        std::vector<double>& dx = grads_[n.inputs[0]].values;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = n.value[i];
          dx[i] += (1.0 - y * y) * g[i];
        }
        break;
      }
      case Op::Softmax: {
        std::vector<double>& dx = grads_[n.inputs[0]].values;
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * n.value[i];
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += n.value[i] * (g[i] - dot);
        break;
      }
      case Op::Concat: {
        const std::size_t axis = static_cast<std::size_t>(n.c);
        std::size_t outer = 1, inner = 1;
        for (std::size_t d = 0; d < axis; ++d) outer *= n.shape[d];
        for (std::size_t d = axis + 1; d < n.shape.size(); ++d) inner *= n.shape[d];
        const std::size_t out_stride = n.shape[axis] * inner;
        std::size_t offset = 0;
        for (std::int64_t in : n.inputs) {
          const Node& part = nodes_[static_cast<std::size_t>(in)];
          std::vector<double>& dp = grads_[in].values;
          const std::size_t block = part.shape[axis] * inner;
          for (std::size_t o = 0; o < outer; ++o) {
            const double* src = g.data() + o * out_stride + offset;
            double* dst = dp.data() + o * block;
            for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
          }
          offset += block;
        }
        break;
      }
      case Op::Reshape: {
        std::vector<double>& dx = grads_[n.inputs[0]].values;
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
        break;
      }
      case Op::Lookup: {
        const Node& table = input_node(n, 0);
        std::vector<double>& dt = grads_[n.inputs[0]].values;
        const std::size_t e = table.shape[1];
        for (std::size_t r = 0; r < n.ids.size(); ++r) {
          double* drow = dt.data() + static_cast<std::size_t>(n.ids[r]) * e;
          const double* grow = g.data() + r * e;
          for (std::size_t i = 0; i < e; ++i) drow[i] += grow[i];
        }
        break;
      }
      case Op::CrossEntropy: {
        const Node& logits = input_node(n, 0);
        std::vector<double>& dl = grads_[n.inputs[0]].values;
        const std::size_t v = logits.shape[1];
        const int ignore = static_cast<int>(n.c);
        std::size_t counted = 0;
        for (int id : n.ids) counted += (id != ignore);
        const double gscale = g[0] / static_cast<double>(counted);
        for (std::size_t r = 0; r < n.ids.size(); ++r) {
          if (n.ids[r] == ignore) continue;
          const double* prow = n.aux.data() + r * v;
          double* drow = dl.data() + r * v;
          for (std::size_t j = 0; j < v; ++j) drow[j] += prow[j] * gscale;
          drow[static_cast<std::size_t>(n.ids[r])] -= gscale;
        }
        break;
      }
      case Op::Sum: {
        std::vector<double>& dx = grads_[n.inputs[0]].values;
        for (double& d : dx) d += g[0];
        break;
      }
      case Op::Mean: {
        const double share = g[0] / static_cast<double>(n.inputs.size());
        for (std::int64_t in : n.inputs) grads_[static_cast<std::size_t>(in)].values[0] += share;
        break;
      }
    }
  }
  backward_done_ = true;
}

const Tensor& Tape::grad(const Tensor& t) const {
  if (!backward_done_) throw ArgumentError("grad: backward has not run on this record");
  if (t.node < 0 || t.tape_id != id_) {
    throw ArgumentError("grad: tensor does not belong to this computation record");
  }
  return grads_[static_cast<std::size_t>(t.node)];
}

}  // namespace wenet
