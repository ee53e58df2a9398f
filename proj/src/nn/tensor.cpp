#include "uavbeam/nn/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "uavbeam/errors.hpp"

namespace uavbeam::nn {

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;
}  // namespace

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

Variable::Variable(std::string n, Shape s, bool train)
    : name(std::move(n)), shape(std::move(s)), trainable(train) {
  const auto count = static_cast<std::size_t>(numel(shape));
  value.assign(count, 0.0);
  grad.assign(count, 0.0);
}

const Shape& Tensor::shape() const { return graph->shape(id); }
std::span<const double> Tensor::values() const { return graph->values(id); }

double Tensor::scalar() const {
  auto v = values();
  if (v.size() != 1) {
    throw ShapeMismatch("scalar() on tensor of shape " + shape_str(shape()));
  }
  return v[0];
}

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Graph::check_same_graph(Tensor t) const {
  if (t.graph != this || t.id < 0 || t.id >= static_cast<int>(nodes_.size())) {
    throw Error("tensor does not belong to this graph");
  }
}

std::span<const double> Graph::values(int id) const {
  const Node& n = node(id);
  return n.leaf_value ? std::span<const double>(*n.leaf_value) : std::span<const double>(n.value);
}

const Shape& Graph::shape(int id) const { return node(id).shape; }

bool Graph::wants_grad(int id) const { return node(id).needs_grad; }

std::span<double> Graph::grad_buf(int id) {
  Node& n = node(id);
  if (n.grad.empty()) n.grad.assign(static_cast<std::size_t>(numel(n.shape)), 0.0);
  return n.grad;
}

std::span<const double> Graph::grad(int id) const { return node(id).grad; }

Tensor Graph::leaf(Variable& v) {
  Node n;
  n.shape = v.shape;
  n.leaf_value = &v.value;
  n.leaf_var = &v;
  n.needs_grad = v.trainable;
  return make(push(std::move(n)));
}

Tensor Graph::input(Shape shape, std::vector<double> values) {
  if (numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw ShapeMismatch("input values do not fill shape " + shape_str(shape));
  }
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(values);
  n.needs_grad = false;
  return make(push(std::move(n)));
}

Tensor Graph::conv1d(Tensor x, Tensor w, Tensor b, int pad) {
  check_same_graph(x);
  check_same_graph(w);
  check_same_graph(b);
  const Shape& xs = shape(x.id);
  const Shape& ws = shape(w.id);
  const Shape& bs = shape(b.id);
  if (xs.size() != 3 || ws.size() != 3 || bs.size() != 1) {
    throw ShapeMismatch("conv1d expects x (B,T,C), w (Co,Ci,K), b (Co)");
  }
  const int batch = xs[0], tin = xs[1], cin = xs[2];
  const int cout = ws[0], k = ws[2];
  if (ws[1] != cin) {
    throw ShapeMismatch("conv1d channel mismatch: input " + std::to_string(cin) + ", kernel " +
                        std::to_string(ws[1]));
  }
  if (bs[0] != cout) throw ShapeMismatch("conv1d bias length mismatch");
  if (pad < 0) throw ShapeMismatch("negative padding");
  const int tout = tin + 2 * pad - k + 1;
  if (tout < 1) throw ShapeMismatch("conv1d output length would be empty");

  const int cols = cin * k;
  auto xcol = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(batch) * tout * cols, 0.0);
  {
    auto xv = values(x.id);
    for (int bi = 0; bi < batch; ++bi) {
      const double* xrow = xv.data() + static_cast<std::size_t>(bi) * tin * cin;
      double* dst = xcol->data() + static_cast<std::size_t>(bi) * tout * cols;
      for (int to = 0; to < tout; ++to) {
        for (int ci = 0; ci < cin; ++ci) {
          for (int j = 0; j < k; ++j) {
            const int ti = to - pad + j;
            if (ti >= 0 && ti < tin) {
              dst[static_cast<std::size_t>(to) * cols + ci * k + j] =
                  xrow[static_cast<std::size_t>(ti) * cin + ci];
            }
          }
        }
      }
    }
  }

  Node n;
  n.shape = {batch, tout, cout};
  n.value.resize(static_cast<std::size_t>(batch) * tout * cout);
  {
    CMapRM xc(xcol->data(), static_cast<std::int64_t>(batch) * tout, cols);
    CMapRM wm(values(w.id).data(), cout, cols);
    CMapVec bv(values(b.id).data(), cout);
    MapRM y(n.value.data(), static_cast<std::int64_t>(batch) * tout, cout);
    y.noalias() = xc * wm.transpose();
    y.rowwise() += bv.transpose();
  }
  n.needs_grad = wants_grad(x.id) || wants_grad(w.id) || wants_grad(b.id);
  const int xid = x.id, wid = w.id, bid = b.id;
  const int id = push(std::move(n));
  node(id).backprop = [this, id, xid, wid, bid, xcol, batch, tin, tout, cin, cout, k, pad]() {
    const Node& self = node(id);
    const int cols2 = cin * k;
    CMapRM dy(self.grad.data(), static_cast<std::int64_t>(batch) * tout, cout);
    if (wants_grad(wid)) {
      CMapRM xc(xcol->data(), static_cast<std::int64_t>(batch) * tout, cols2);
      MapRM dw(grad_buf(wid).data(), cout, cols2);
      dw.noalias() += dy.transpose() * xc;
    }
    if (wants_grad(bid)) {
      MapVec db(grad_buf(bid).data(), cout);
      db.noalias() += dy.colwise().sum().transpose();
    }
    if (wants_grad(xid)) {
      RowMat dxcol = dy * CMapRM(values(wid).data(), cout, cols2);
      auto dx = grad_buf(xid);
      for (int bi = 0; bi < batch; ++bi) {
        const double* src = dxcol.data() + static_cast<std::size_t>(bi) * tout * cols2;
        double* dxrow = dx.data() + static_cast<std::size_t>(bi) * tin * cin;
        for (int to = 0; to < tout; ++to) {
          for (int ci = 0; ci < cin; ++ci) {
            for (int j = 0; j < k; ++j) {
              const int ti = to - pad + j;
              if (ti >= 0 && ti < tin) {
                dxrow[static_cast<std::size_t>(ti) * cin + ci] +=
                    src[static_cast<std::size_t>(to) * cols2 + ci * k + j];
              }
            }
          }
        }
      }
    }
  };
  return make(id);
}

Tensor Graph::batchnorm(Tensor x, Tensor scale, Tensor shift, Variable& running_mean,
                        Variable& running_var, bool train, bool update_running, double eps,
                        double momentum) {
  check_same_graph(x);
  check_same_graph(scale);
  check_same_graph(shift);
  const Shape& xs = shape(x.id);
  if (xs.empty()) throw ShapeMismatch("batchnorm needs at least one dimension");
  const int c = xs.back();
  const std::int64_t rows = numel(xs) / c;
  if (shape(scale.id) != Shape{c} || shape(shift.id) != Shape{c} ||
      running_mean.shape != Shape{c} || running_var.shape != Shape{c}) {
    throw ShapeMismatch("batchnorm parameter length does not match channel count " +
                        std::to_string(c));
  }

  auto xv = values(x.id);
  auto sv = values(scale.id);
  auto hv = values(shift.id);

  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c));

  if (train) {
    std::vector<double> mean(static_cast<std::size_t>(c), 0.0);
    std::vector<double> var(static_cast<std::size_t>(c), 0.0);
    for (std::int64_t r = 0; r < rows; ++r) {
      for (int ch = 0; ch < c; ++ch) {
        mean[static_cast<std::size_t>(ch)] += xv[static_cast<std::size_t>(r * c + ch)];
      }
    }
    for (int ch = 0; ch < c; ++ch) mean[static_cast<std::size_t>(ch)] /= static_cast<double>(rows);
    for (std::int64_t r = 0; r < rows; ++r) {
      for (int ch = 0; ch < c; ++ch) {
        const double d = xv[static_cast<std::size_t>(r * c + ch)] - mean[static_cast<std::size_t>(ch)];
        var[static_cast<std::size_t>(ch)] += d * d;
      }
    }
    for (int ch = 0; ch < c; ++ch) var[static_cast<std::size_t>(ch)] /= static_cast<double>(rows);
    for (int ch = 0; ch < c; ++ch) {
      (*inv_std)[static_cast<std::size_t>(ch)] =
          1.0 / std::sqrt(var[static_cast<std::size_t>(ch)] + eps);
    }
    if (update_running) {
      // running variance keeps the unbiased estimate
      const double unbias = rows > 1 ? static_cast<double>(rows) / static_cast<double>(rows - 1) : 1.0;
      for (int ch = 0; ch < c; ++ch) {
        auto i = static_cast<std::size_t>(ch);
        running_mean.value[i] = (1.0 - momentum) * running_mean.value[i] + momentum * mean[i];
        running_var.value[i] =
            (1.0 - momentum) * running_var.value[i] + momentum * var[i] * unbias;
      }
    }
    for (std::int64_t r = 0; r < rows; ++r) {
      for (int ch = 0; ch < c; ++ch) {
        const auto i = static_cast<std::size_t>(r * c + ch);
        (*xhat)[i] = (xv[i] - mean[static_cast<std::size_t>(ch)]) *
                     (*inv_std)[static_cast<std::size_t>(ch)];
      }
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      (*inv_std)[static_cast<std::size_t>(ch)] =
          1.0 / std::sqrt(running_var.value[static_cast<std::size_t>(ch)] + eps);
    }
    for (std::int64_t r = 0; r < rows; ++r) {
      for (int ch = 0; ch < c; ++ch) {
        const auto i = static_cast<std::size_t>(r * c + ch);
        (*xhat)[i] = (xv[i] - running_mean.value[static_cast<std::size_t>(ch)]) *
                     (*inv_std)[static_cast<std::size_t>(ch)];
      }
    }
  }

  Node n;
  n.shape = xs;
  n.value.resize(xv.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    for (int ch = 0; ch < c; ++ch) {
      const auto i = static_cast<std::size_t>(r * c + ch);
      n.value[i] = sv[static_cast<std::size_t>(ch)] * (*xhat)[i] + hv[static_cast<std::size_t>(ch)];
    }
  }
  n.needs_grad = wants_grad(x.id) || wants_grad(scale.id) || wants_grad(shift.id);
  const int xid = x.id, sid = scale.id, hid = shift.id;
  const int id = push(std::move(n));
  node(id).backprop = [this, id, xid, sid, hid, xhat, inv_std, rows, c, train]() {
    const Node& self = node(id);
    const auto& dy = self.grad;
    auto sv2 = values(sid);
    if (wants_grad(hid)) {
      auto dh = grad_buf(hid);
      for (std::int64_t r = 0; r < rows; ++r) {
        for (int ch = 0; ch < c; ++ch) {
          dh[static_cast<std::size_t>(ch)] += dy[static_cast<std::size_t>(r * c + ch)];
        }
      }
    }
    if (wants_grad(sid)) {
      auto ds = grad_buf(sid);
      for (std::int64_t r = 0; r < rows; ++r) {
        for (int ch = 0; ch < c; ++ch) {
          const auto i = static_cast<std::size_t>(r * c + ch);
          ds[static_cast<std::size_t>(ch)] += dy[i] * (*xhat)[i];
        }
      }
    }
    if (wants_grad(xid)) {
      auto dx = grad_buf(xid);
      if (train) {
        // full backward through the batch statistics
        std::vector<double> sum_dxhat(static_cast<std::size_t>(c), 0.0);
        std::vector<double> sum_dxhat_xhat(static_cast<std::size_t>(c), 0.0);
        for (std::int64_t r = 0; r < rows; ++r) {
          for (int ch = 0; ch < c; ++ch) {
            const auto i = static_cast<std::size_t>(r * c + ch);
            const double dxh = dy[i] * sv2[static_cast<std::size_t>(ch)];
            sum_dxhat[static_cast<std::size_t>(ch)] += dxh;
            sum_dxhat_xhat[static_cast<std::size_t>(ch)] += dxh * (*xhat)[i];
          }
        }
        const double inv_rows = 1.0 / static_cast<double>(rows);
        for (std::int64_t r = 0; r < rows; ++r) {
          for (int ch = 0; ch < c; ++ch) {
            const auto i = static_cast<std::size_t>(r * c + ch);
            const auto chs = static_cast<std::size_t>(ch);
            const double dxh = dy[i] * sv2[chs];
            dx[i] += (*inv_std)[chs] *
                     (dxh - inv_rows * (sum_dxhat[chs] + (*xhat)[i] * sum_dxhat_xhat[chs]));
          }
        }
      } else {
        for (std::int64_t r = 0; r < rows; ++r) {
          for (int ch = 0; ch < c; ++ch) {
            const auto i = static_cast<std::size_t>(r * c + ch);
            const auto chs = static_cast<std::size_t>(ch);
            dx[i] += dy[i] * sv2[chs] * (*inv_std)[chs];
          }
        }
      }
    }
  };
  return make(id);
}

Tensor Graph::relu(Tensor x) {
  check_same_graph(x);
  auto xv = values(x.id);
  Node n;
  n.shape = shape(x.id);
  n.value.resize(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) n.value[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  n.needs_grad = wants_grad(x.id);
  const int xid = x.id;
  const int id = push(std::move(n));
  if (node(id).needs_grad) {
    node(id).backprop = [this, id, xid]() {
      const auto& dy = node(id).grad;
      auto xv2 = values(xid);
      auto dx = grad_buf(xid);
      for (std::size_t i = 0; i < dy.size(); ++i) {
        if (xv2[i] > 0.0) dx[i] += dy[i];
      }
    };
  }
  return make(id);
}

Tensor Graph::sigmoid(Tensor x) {
  check_same_graph(x);
  auto xv = values(x.id);
  Node n;
  n.shape = shape(x.id);
  n.value.resize(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) n.value[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  n.needs_grad = wants_grad(x.id);
  const int xid = x.id;
  const int id = push(std::move(n));
  if (node(id).needs_grad) {
    node(id).backprop = [this, id, xid]() {
      const Node& self = node(id);
      auto dx = grad_buf(xid);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        dx[i] += self.grad[i] * self.value[i] * (1.0 - self.value[i]);
      }
    };
  }
  return make(id);
}

Tensor Graph::tanh_op(Tensor x) {
  check_same_graph(x);
  auto xv = values(x.id);
  Node n;
  n.shape = shape(x.id);
  n.value.resize(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) n.value[i] = std::tanh(xv[i]);
  n.needs_grad = wants_grad(x.id);
  const int xid = x.id;
  const int id = push(std::move(n));
  if (node(id).needs_grad) {
    node(id).backprop = [this, id, xid]() {
      const Node& self = node(id);
      auto dx = grad_buf(xid);
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        dx[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
      }
    };
  }
  return make(id);
}

Tensor Graph::one_minus(Tensor x) {
  check_same_graph(x);
  auto xv = values(x.id);
  Node n;
  n.shape = shape(x.id);
  n.value.resize(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) n.value[i] = 1.0 - xv[i];
  n.needs_grad = wants_grad(x.id);
  const int xid = x.id;
  const int id = push(std::move(n));
  if (node(id).needs_grad) {
    node(id).backprop = [this, id, xid]() {
      const auto& dy = node(id).grad;
      auto dx = grad_buf(xid);
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] -= dy[i];
    };
  }
  return make(id);
}

Tensor Graph::add(Tensor a, Tensor b) {
  check_same_graph(a);
  check_same_graph(b);
  if (shape(a.id) != shape(b.id)) {
    throw ShapeMismatch("add: " + shape_str(shape(a.id)) + " vs " + shape_str(shape(b.id)));
  }
  auto av = values(a.id);
  auto bv = values(b.id);
  Node n;
  n.shape = shape(a.id);
  n.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] + bv[i];
  n.needs_grad = wants_grad(a.id) || wants_grad(b.id);
  const int aid = a.id, bid = b.id;
  const int id = push(std::move(n));
  if (node(id).needs_grad) {
    node(id).backprop = [this, id, aid, bid]() {
      const auto& dy = node(id).grad;
      if (wants_grad(aid)) {
        auto da = grad_buf(aid);
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (wants_grad(bid)) {
        auto db = grad_buf(bid);
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
      }
    };
  }
  return make(id);
}

Tensor Graph::mul(Tensor a, Tensor b) {
  check_same_graph(a);
  check_same_graph(b);
  if (shape(a.id) != shape(b.id)) {
    throw ShapeMismatch("mul: " + shape_str(shape(a.id)) + " vs " + shape_str(shape(b.id)));
  }
  auto av = values(a.id);
  auto bv = values(b.id);
  Node n;
  n.shape = shape(a.id);
  n.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] * bv[i];
  n.needs_grad = wants_grad(a.id) || wants_grad(b.id);
  const int aid = a.id, bid = b.id;
  const int id = push(std::move(n));
  if (node(id).needs_grad) {
    node(id).backprop = [this, id, aid, bid]() {
      const auto& dy = node(id).grad;
      auto av2 = values(aid);
      auto bv2 = values(bid);
      if (wants_grad(aid)) {
        auto da = grad_buf(aid);
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv2[i];
      }
      if (wants_grad(bid)) {
        auto db = grad_buf(bid);
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av2[i];
      }
    };
  }
  return make(id);
}

Tensor Graph::linear(Tensor x, Tensor w, Tensor b) {
  check_same_graph(x);
  check_same_graph(w);
  check_same_graph(b);
  const Shape& xs = shape(x.id);
  const Shape& ws = shape(w.id);
  const Shape& bs = shape(b.id);
  if (xs.size() != 2 || ws.size() != 2 || bs.size() != 1) {
    throw ShapeMismatch("linear expects x (B,I), w (O,I), b (O)");
  }
  const int batch = xs[0], in = xs[1], out = ws[0];
  if (ws[1] != in || bs[0] != out) {
    throw ShapeMismatch("linear: x " + shape_str(xs) + ", w " + shape_str(ws) + ", b " +
                        shape_str(bs));
  }
  Node n;
  n.shape = {batch, out};
  n.value.resize(static_cast<std::size_t>(batch) * out);
  {
    CMapRM xm(values(x.id).data(), batch, in);
    CMapRM wm(values(w.id).data(), out, in);
    CMapVec bv(values(b.id).data(), out);
    MapRM y(n.value.data(), batch, out);
    y.noalias() = xm * wm.transpose();
    y.rowwise() += bv.transpose();
  }
  n.needs_grad = wants_grad(x.id) || wants_grad(w.id) || wants_grad(b.id);
  const int xid = x.id, wid = w.id, bid = b.id;
  const int id = push(std::move(n));
  node(id).backprop = [this, id, xid, wid, bid, batch, in, out]() {
    const Node& self = node(id);
    CMapRM dy(self.grad.data(), batch, out);
    if (wants_grad(wid)) {
      CMapRM xm(values(xid).data(), batch, in);
      MapRM dw(grad_buf(wid).data(), out, in);
      dw.noalias() += dy.transpose() * xm;
    }
    if (wants_grad(bid)) {
      MapVec db(grad_buf(bid).data(), out);
      db.noalias() += dy.colwise().sum().transpose();
    }
    if (wants_grad(xid)) {
      CMapRM wm(values(wid).data(), out, in);
      MapRM dx(grad_buf(xid).data(), batch, in);
      dx.noalias() += dy * wm;
    }
  };
  return make(id);
}

Tensor Graph::time_slice(Tensor x, int t) {
  check_same_graph(x);
  const Shape& xs = shape(x.id);
  if (xs.size() != 3) throw ShapeMismatch("time_slice expects (B,T,C)");
  const int batch = xs[0], tin = xs[1], c = xs[2];
  if (t < 0 || t >= tin) {
    throw ShapeMismatch("time_slice index " + std::to_string(t) + " outside T=" +
                        std::to_string(tin));
  }
  auto xv = values(x.id);
  Node n;
  n.shape = {batch, c};
  n.value.resize(static_cast<std::size_t>(batch) * c);
  for (int bi = 0; bi < batch; ++bi) {
    const double* src = xv.data() + (static_cast<std::size_t>(bi) * tin + t) * c;
    std::copy(src, src + c, n.value.begin() + static_cast<std::size_t>(bi) * c);
  }
  n.needs_grad = wants_grad(x.id);
  const int xid = x.id;
  const int id = push(std::move(n));
  if (node(id).needs_grad) {
    node(id).backprop = [this, id, xid, batch, tin, c, t]() {
      const auto& dy = node(id).grad;
      auto dx = grad_buf(xid);
      for (int bi = 0; bi < batch; ++bi) {
        double* dst = dx.data() + (static_cast<std::size_t>(bi) * tin + t) * c;
        const double* src = dy.data() + static_cast<std::size_t>(bi) * c;
        for (int i = 0; i < c; ++i) dst[i] += src[i];
      }
    };
  }
  return make(id);
}

Tensor Graph::softmax_rows(Tensor x) {
  check_same_graph(x);
  const Shape& xs = shape(x.id);
  if (xs.size() != 2) throw ShapeMismatch("softmax_rows expects (B,M)");
  const int batch = xs[0], m = xs[1];
  auto xv = values(x.id);
  Node n;
  n.shape = xs;
  n.value.resize(xv.size());
  for (int bi = 0; bi < batch; ++bi) {
    const double* row = xv.data() + static_cast<std::size_t>(bi) * m;
    double* out = n.value.data() + static_cast<std::size_t>(bi) * m;
    double mx = row[0];
    for (int i = 1; i < m; ++i) mx = std::max(mx, row[i]);
    double sum = 0.0;
    for (int i = 0; i < m; ++i) {
      out[i] = std::exp(row[i] - mx);
      sum += out[i];
    }
    for (int i = 0; i < m; ++i) out[i] /= sum;
  }
  n.needs_grad = wants_grad(x.id);
  const int xid = x.id;
  const int id = push(std::move(n));
  if (node(id).needs_grad) {
    node(id).backprop = [this, id, xid, batch, m]() {
      const Node& self = node(id);
      auto dx = grad_buf(xid);
      for (int bi = 0; bi < batch; ++bi) {
        const double* y = self.value.data() + static_cast<std::size_t>(bi) * m;
        const double* dy = self.grad.data() + static_cast<std::size_t>(bi) * m;
        double* dxr = dx.data() + static_cast<std::size_t>(bi) * m;
        double dot = 0.0;
        for (int i = 0; i < m; ++i) dot += dy[i] * y[i];
        for (int i = 0; i < m; ++i) dxr[i] += y[i] * (dy[i] - dot);
      }
    };
  }
  return make(id);
}

Tensor Graph::nll_rows(Tensor probs, std::vector<int> labels, double floor) {
  check_same_graph(probs);
  const Shape& ps = shape(probs.id);
  if (ps.size() != 2) throw ShapeMismatch("nll_rows expects (B,M)");
  const int batch = ps[0], m = ps[1];
  if (static_cast<int>(labels.size()) != batch) {
    throw ShapeMismatch("nll_rows: got " + std::to_string(labels.size()) + " labels for batch " +
                        std::to_string(batch));
  }
  for (int l : labels) {
    if (l < 0 || l >= m) throw ShapeMismatch("label " + std::to_string(l) + " outside codebook");
  }
  auto pv = values(probs.id);
  Node n;
  n.shape = {batch};
  n.value.resize(static_cast<std::size_t>(batch));
  for (int bi = 0; bi < batch; ++bi) {
    const double p = pv[static_cast<std::size_t>(bi) * m + labels[static_cast<std::size_t>(bi)]];
    n.value[static_cast<std::size_t>(bi)] = -std::log(std::max(p, floor));
  }
  n.needs_grad = wants_grad(probs.id);
  const int pid = probs.id;
  auto lab = std::make_shared<std::vector<int>>(std::move(labels));
  const int id = push(std::move(n));
  if (node(id).needs_grad) {
    node(id).backprop = [this, id, pid, lab, m, floor]() {
      const auto& dy = node(id).grad;
      auto pv2 = values(pid);
      auto dp = grad_buf(pid);
      for (std::size_t bi = 0; bi < dy.size(); ++bi) {
        const std::size_t i = bi * static_cast<std::size_t>(m) +
                              static_cast<std::size_t>((*lab)[bi]);
        if (pv2[i] > floor) dp[i] += -dy[bi] / pv2[i];
      }
    };
  }
  return make(id);
}

Tensor Graph::mean_all(Tensor x) {
  check_same_graph(x);
  auto xv = values(x.id);
  if (xv.empty()) throw ShapeMismatch("mean of an empty tensor");
  Node n;
  n.shape = {1};
  double sum = 0.0;
  for (double v : xv) sum += v;
  n.value = {sum / static_cast<double>(xv.size())};
  n.needs_grad = wants_grad(x.id);
  const int xid = x.id;
  const std::size_t count = xv.size();
  const int id = push(std::move(n));
  if (node(id).needs_grad) {
    node(id).backprop = [this, id, xid, count]() {
      const double g = node(id).grad[0] / static_cast<double>(count);
      auto dx = grad_buf(xid);
      for (std::size_t i = 0; i < count; ++i) dx[i] += g;
    };
  }
  return make(id);
}

void Graph::backward(Tensor loss) {
  check_same_graph(loss);
  if (consumed_) {
    throw GraphConsumed("backward was already called on this graph");
  }
  if (numel(shape(loss.id)) != 1) {
    throw ShapeMismatch("backward needs a scalar loss, got " + shape_str(shape(loss.id)));
  }
  consumed_ = true;
  grad_buf(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = node(id);
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backprop) n.backprop();
    if (n.leaf_var && n.leaf_var->trainable) {
      auto& g = n.leaf_var->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  }
}

Tensor gru_cell(Graph& g, Tensor x, Tensor h, const GruCellTensors& p) {
  Tensor z = g.sigmoid(g.add(g.linear(x, p.w_update, p.bi_update),
                             g.linear(h, p.u_update, p.bh_update)));
  Tensor r = g.sigmoid(g.add(g.linear(x, p.w_reset, p.bi_reset),
                             g.linear(h, p.u_reset, p.bh_reset)));
  Tensor n = g.tanh_op(g.add(g.linear(x, p.w_cand, p.bi_cand),
                             g.mul(r, g.linear(h, p.u_cand, p.bh_cand))));
  return g.add(g.mul(g.one_minus(z), n), g.mul(z, h));
}

}  // namespace uavbeam::nn
