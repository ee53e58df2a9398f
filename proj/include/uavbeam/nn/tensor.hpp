#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace uavbeam::nn {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Trainable parameter or persistent buffer. Owns its storage; gradients are
// accumulated here by Graph::backward.
struct Variable {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool trainable = true;

  Variable() = default;
  Variable(std::string n, Shape s, bool train = true);
  std::int64_t size() const { return static_cast<std::int64_t>(value.size()); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

class Graph;

// Lightweight handle into a Graph's tape.
struct Tensor {
  Graph* graph = nullptr;
  int id = -1;

  const Shape& shape() const;
  std::span<const double> values() const;
  double scalar() const;
};

// Reverse-mode tape. Build the computation with the op methods, then call
// backward once on a scalar; gradients land in the leaf Variables. The tape
// is single-use: a second backward throws GraphConsumed.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Tensor leaf(Variable& v);
  Tensor input(Shape shape, std::vector<double> values);

  // x: (B, T, Cin), w: (Cout, Cin, K), b: (Cout); stride 1,
  // output (B, T + 2*pad - K + 1, Cout)
  Tensor conv1d(Tensor x, Tensor w, Tensor b, int pad);

  // x: (..., C); normalizes each trailing-dim channel over all leading
  // positions. Train mode uses batch statistics and optionally folds them
  // into the running buffers; eval mode reads the running buffers.
  Tensor batchnorm(Tensor x, Tensor scale, Tensor shift, Variable& running_mean,
                   Variable& running_var, bool train, bool update_running, double eps = 1e-5,
                   double momentum = 0.1);

  Tensor relu(Tensor x);
  Tensor sigmoid(Tensor x);
  Tensor tanh_op(Tensor x);
  Tensor one_minus(Tensor x);      // 1 - x
  Tensor add(Tensor a, Tensor b);  // same shape
  Tensor mul(Tensor a, Tensor b);  // elementwise, same shape

  // x: (B, I), w: (O, I), b: (O) -> (B, O)
  Tensor linear(Tensor x, Tensor w, Tensor b);

  // x: (B, T, C) -> (B, C) at time step t
  Tensor time_slice(Tensor x, int t);

  // row-wise softmax with max subtraction, x: (B, M)
  Tensor softmax_rows(Tensor x);

  // probs: (B, M); out: (B,) with -ln(max(p[label], floor))
  Tensor nll_rows(Tensor probs, std::vector<int> labels, double floor = 1e-12);

  Tensor mean_all(Tensor x);  // -> scalar

  void backward(Tensor loss);

  // introspection used by ops and tests
  std::span<const double> values(int id) const;
  const Shape& shape(int id) const;
  bool wants_grad(int id) const;
  std::span<double> grad_buf(int id);       // allocates zeroed storage on demand
  std::span<const double> grad(int id) const;
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;                  // owned unless leaf
    std::vector<double> grad;                   // sized lazily during backward
    const std::vector<double>* leaf_value = nullptr;
    Variable* leaf_var = nullptr;
    bool needs_grad = false;
    std::function<void()> backprop;             // empty for leaves and inputs
  };

  int push(Node n);
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Tensor make(int id) { return Tensor{this, id}; }
  void check_same_graph(Tensor t) const;

  std::deque<Node> nodes_;
  bool consumed_ = false;
};

// One recurrent gate bank: input weight (H, I), recurrent weight (H, H), and
// the two bias vectors (H).
struct GruCellTensors {
  Tensor w_update, u_update, bi_update, bh_update;
  Tensor w_reset, u_reset, bi_reset, bh_reset;
  Tensor w_cand, u_cand, bi_cand, bh_cand;
};

// Gated recurrent unit step. x: (B, I), h: (B, H) -> (B, H).
//   z = sigmoid(W_z x + b_iz + U_z h + b_hz)
//   r = sigmoid(W_r x + b_ir + U_r h + b_hr)
//   n = tanh(W_n x + b_in + r * (U_n h + b_hn))
//   h' = (1 - z) * n + z * h
Tensor gru_cell(Graph& g, Tensor x, Tensor h, const GruCellTensors& p);

}  // namespace uavbeam::nn
