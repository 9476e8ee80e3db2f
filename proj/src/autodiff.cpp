#include "trajcluster/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <numeric>

namespace trajcluster::ad {

namespace {

Tensor* grad_target(Graph& g, const Node& self, std::size_t k) {
  Node& p = g.node(self.parents[k]);
  return p.requires_grad ? &p.grad : nullptr;
}

void check_same_graph(Var a, Var b, const char* op) {
  if (a.graph() != b.graph())
    throw std::logic_error(std::string(op) + ": operands belong to different graphs");
}

void check_same_shape(Var a, Var b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + a.value().shape_str() +
                                " vs " + b.value().shape_str() + ")");
}

}  // namespace

Var Graph::push(Tensor value, const char* op, std::vector<int> parents,
                std::function<void(Graph&, Node&)> backward, bool requires_grad_override) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  n.parents = std::move(parents);
  n.backward = std::move(backward);
  n.requires_grad = requires_grad_override;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::push_op(Tensor value, const char* op, std::vector<int> parents,
                   std::function<void(Graph&, Node&)> backward) {
  bool rg = false;
  for (int p : parents) rg = rg || node(p).requires_grad;
  return push(std::move(value), op, std::move(parents), std::move(backward), rg);
}

void Graph::backward(Var loss) {
  if (loss.graph() != this) throw std::logic_error("Graph::backward: foreign Var");
  const int last = loss.index();
  const Tensor& lv = node(last).value;
  if (lv.rows() != 1 || lv.cols() != 1)
    throw std::invalid_argument("Graph::backward: loss must be scalar, got " + lv.shape_str());
  for (int i = 0; i <= last; ++i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.requires_grad) n.grad = Tensor(n.value.rows(), n.value.cols());
  }
  if (!node(last).requires_grad) return;  // loss independent of every leaf
  node(last).grad(0, 0) = 1.0;
  for (int i = last; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.requires_grad && n.backward) n.backward(*this, n);
  }
}

// ---------------------------------------------------------------------------
// ParamSet / Binding

Tensor& ParamSet::add(const std::string& name, Tensor init, bool trainable, bool weight_decay) {
  if (entries_.count(name)) throw std::invalid_argument("ParamSet::add: duplicate name " + name);
  order_.push_back(name);
  auto& e = entries_[name];
  e.value = std::move(init);
  e.trainable = trainable;
  e.weight_decay = weight_decay;
  return e.value;
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ParamSet: unknown tensor " + name);
  return it->second.value;
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ParamSet: unknown tensor " + name);
  return it->second.value;
}

ParamSet::Entry& ParamSet::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ParamSet: unknown tensor " + name);
  return it->second;
}

const ParamSet::Entry& ParamSet::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("ParamSet: unknown tensor " + name);
  return it->second;
}

namespace {
constexpr char kCheckpointMagic[4] = {'T', 'J', 'C', '1'};

void write_bytes(std::FILE* f, const void* p, std::size_t n) {
  if (std::fwrite(p, 1, n, f) != n) throw std::runtime_error("checkpoint write failed");
}
void read_bytes(std::FILE* f, void* p, std::size_t n) {
  if (std::fread(p, 1, n, f) != n) throw std::runtime_error("checkpoint read failed");
}
}  // namespace

void ParamSet::save(const std::string& path) const {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  write_bytes(f, kCheckpointMagic, 4);
  const std::uint64_t n = order_.size();
  write_bytes(f, &n, 8);
  for (const auto& name : order_) {
    const Entry& e = entries_.at(name);
    const std::uint64_t len = name.size();
    write_bytes(f, &len, 8);
    write_bytes(f, name.data(), name.size());
    const std::uint8_t tr = e.trainable ? 1 : 0, wd = e.weight_decay ? 1 : 0;
    write_bytes(f, &tr, 1);
    write_bytes(f, &wd, 1);
    const std::int64_t r = e.value.rows(), c = e.value.cols();
    write_bytes(f, &r, 8);
    write_bytes(f, &c, 8);
    write_bytes(f, e.value.data(), e.value.size() * sizeof(double));
  }
  std::fclose(f);
}

ParamSet ParamSet::load(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  read_bytes(f, magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    std::fclose(f);
    throw std::runtime_error("bad checkpoint magic in " + path);
  }
  std::uint64_t n = 0;
  read_bytes(f, &n, 8);
  ParamSet ps;
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t len = 0;
    read_bytes(f, &len, 8);
    std::string name(len, '\0');
    read_bytes(f, name.data(), len);
    std::uint8_t tr = 0, wd = 0;
    read_bytes(f, &tr, 1);
    read_bytes(f, &wd, 1);
    std::int64_t r = 0, c = 0;
    read_bytes(f, &r, 8);
    read_bytes(f, &c, 8);
    Tensor t(static_cast<int>(r), static_cast<int>(c));
    read_bytes(f, t.data(), t.size() * sizeof(double));
    ps.add(name, std::move(t), tr != 0, wd != 0);
  }
  std::fclose(f);
  return ps;
}

Var Binding::operator[](const std::string& name) {
  auto it = leaves_.find(name);
  if (it != leaves_.end()) return it->second;
  Var v = g_->leaf(params_->at(name));
  leaves_.emplace(name, v);
  return v;
}

// ---------------------------------------------------------------------------
// Primitive ops

Var matmul(Var a, Var b) {
  check_same_graph(a, b, "matmul");
  Graph& g = *a.graph();
  Tensor out;
  matmul_nn(out, a.value(), b.value(), false);
  return g.push_op(std::move(out), "matmul", {a.index(), b.index()}, [](Graph& g, Node& self) {
    const Tensor& ga = g.node(self.parents[0]).value;
    const Tensor& gb = g.node(self.parents[1]).value;
    if (Tensor* t = grad_target(g, self, 0)) matmul_nt(*t, self.grad, gb, true);
    if (Tensor* t = grad_target(g, self, 1)) matmul_tn(*t, ga, self.grad, true);
  });
}

Var add(Var a, Var b) {
  check_same_graph(a, b, "add");
  check_same_shape(a, b, "add");
  Graph& g = *a.graph();
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return g.push_op(std::move(out), "add", {a.index(), b.index()}, [](Graph& g, Node& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (Tensor* t = grad_target(g, self, k))
        for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] += self.grad[i];
  });
}

Var sub(Var a, Var b) {
  check_same_graph(a, b, "sub");
  check_same_shape(a, b, "sub");
  Graph& g = *a.graph();
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return g.push_op(std::move(out), "sub", {a.index(), b.index()}, [](Graph& g, Node& self) {
    if (Tensor* t = grad_target(g, self, 0))
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] += self.grad[i];
    if (Tensor* t = grad_target(g, self, 1))
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] -= self.grad[i];
  });
}

Var mul(Var a, Var b) {
  check_same_graph(a, b, "mul");
  check_same_shape(a, b, "mul");
  Graph& g = *a.graph();
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return g.push_op(std::move(out), "mul", {a.index(), b.index()}, [](Graph& g, Node& self) {
    const Tensor& av = g.node(self.parents[0]).value;
    const Tensor& bvv = g.node(self.parents[1]).value;
    if (Tensor* t = grad_target(g, self, 0))
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] += self.grad[i] * bvv[i];
    if (Tensor* t = grad_target(g, self, 1))
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] += self.grad[i] * av[i];
  });
}

Var add_rowvec(Var x, Var b) {
  check_same_graph(x, b, "add_rowvec");
  if (b.value().rows() != 1 || b.value().cols() != x.value().cols())
    throw std::invalid_argument("add_rowvec: bias shape " + b.value().shape_str() +
                                " incompatible with " + x.value().shape_str());
  Graph& g = *x.graph();
  Tensor out = x.value();
  const Tensor& bv = b.value();
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) += bv(0, j);
  return g.push_op(std::move(out), "add_rowvec", {x.index(), b.index()}, [](Graph& g, Node& self) {
    if (Tensor* t = grad_target(g, self, 0))
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] += self.grad[i];
    if (Tensor* t = grad_target(g, self, 1))
      for (int i = 0; i < self.grad.rows(); ++i)
        for (int j = 0; j < self.grad.cols(); ++j) (*t)(0, j) += self.grad(i, j);
  });
}

Var add_colvec(Var x, Var c) {
  check_same_graph(x, c, "add_colvec");
  if (c.value().cols() != 1 || c.value().rows() != x.value().rows())
    throw std::invalid_argument("add_colvec: column shape " + c.value().shape_str() +
                                " incompatible with " + x.value().shape_str());
  Graph& g = *x.graph();
  Tensor out = x.value();
  const Tensor& cv = c.value();
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) += cv(i, 0);
  return g.push_op(std::move(out), "add_colvec", {x.index(), c.index()}, [](Graph& g, Node& self) {
    if (Tensor* t = grad_target(g, self, 0))
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] += self.grad[i];
    if (Tensor* t = grad_target(g, self, 1))
      for (int i = 0; i < self.grad.rows(); ++i)
        for (int j = 0; j < self.grad.cols(); ++j) (*t)(i, 0) += self.grad(i, j);
  });
}

Var mul_colvec(Var x, Var c) {
  check_same_graph(x, c, "mul_colvec");
  if (c.value().cols() != 1 || c.value().rows() != x.value().rows())
    throw std::invalid_argument("mul_colvec: column shape " + c.value().shape_str() +
                                " incompatible with " + x.value().shape_str());
  Graph& g = *x.graph();
  Tensor out = x.value();
  const Tensor& cv = c.value();
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) *= cv(i, 0);
  return g.push_op(std::move(out), "mul_colvec", {x.index(), c.index()}, [](Graph& g, Node& self) {
    const Tensor& xv = g.node(self.parents[0]).value;
    const Tensor& cvv = g.node(self.parents[1]).value;
    if (Tensor* t = grad_target(g, self, 0))
      for (int i = 0; i < self.grad.rows(); ++i)
        for (int j = 0; j < self.grad.cols(); ++j) (*t)(i, j) += self.grad(i, j) * cvv(i, 0);
    if (Tensor* t = grad_target(g, self, 1))
      for (int i = 0; i < self.grad.rows(); ++i)
        for (int j = 0; j < self.grad.cols(); ++j) (*t)(i, 0) += self.grad(i, j) * xv(i, j);
  });
}

Var div_colvec(Var x, Var c) {
  check_same_graph(x, c, "div_colvec");
  if (c.value().cols() != 1 || c.value().rows() != x.value().rows())
    throw std::invalid_argument("div_colvec: column shape " + c.value().shape_str() +
                                " incompatible with " + x.value().shape_str());
  Graph& g = *x.graph();
  Tensor out = x.value();
  const Tensor& cv = c.value();
  for (int i = 0; i < out.rows(); ++i) {
    if (cv(i, 0) == 0.0) throw std::domain_error("div_colvec: zero divisor in row " + std::to_string(i));
    for (int j = 0; j < out.cols(); ++j) out(i, j) /= cv(i, 0);
  }
  return g.push_op(std::move(out), "div_colvec", {x.index(), c.index()}, [](Graph& g, Node& self) {
    const Tensor& xv = g.node(self.parents[0]).value;
    const Tensor& cvv = g.node(self.parents[1]).value;
    if (Tensor* t = grad_target(g, self, 0))
      for (int i = 0; i < self.grad.rows(); ++i)
        for (int j = 0; j < self.grad.cols(); ++j) (*t)(i, j) += self.grad(i, j) / cvv(i, 0);
    if (Tensor* t = grad_target(g, self, 1))
      for (int i = 0; i < self.grad.rows(); ++i) {
        const double inv2 = 1.0 / (cvv(i, 0) * cvv(i, 0));
        for (int j = 0; j < self.grad.cols(); ++j)
          (*t)(i, 0) -= self.grad(i, j) * xv(i, j) * inv2;
      }
  });
}

Var scale(Var x, double s) {
  Graph& g = *x.graph();
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return g.push_op(std::move(out), "scale", {x.index()}, [s](Graph& g, Node& self) {
    if (Tensor* t = grad_target(g, self, 0))
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] += s * self.grad[i];
  });
}

Var add_scalar(Var x, double s) {
  Graph& g = *x.graph();
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s;
  return g.push_op(std::move(out), "add_scalar", {x.index()}, [](Graph& g, Node& self) {
    if (Tensor* t = grad_target(g, self, 0))
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] += self.grad[i];
  });
}

Var relu(Var x) {
  Graph& g = *x.graph();
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  // Subgradient 0 at the kink.
  return g.push_op(std::move(out), "relu", {x.index()}, [](Graph& g, Node& self) {
    const Tensor& xv = g.node(self.parents[0]).value;
    if (Tensor* t = grad_target(g, self, 0))
      for (std::size_t i = 0; i < t->size(); ++i)
        if (xv[i] > 0.0) (*t)[i] += self.grad[i];
  });
}

Var sigmoid(Var x) {
  Graph& g = *x.graph();
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = out[i];
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return g.push_op(std::move(out), "sigmoid", {x.index()}, [](Graph& g, Node& self) {
    if (Tensor* t = grad_target(g, self, 0))
      for (std::size_t i = 0; i < t->size(); ++i) {
        const double y = self.value[i];
        (*t)[i] += self.grad[i] * y * (1.0 - y);
      }
  });
}

Var tanh_(Var x) {
  Graph& g = *x.graph();
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  return g.push_op(std::move(out), "tanh", {x.index()}, [](Graph& g, Node& self) {
    if (Tensor* t = grad_target(g, self, 0))
      for (std::size_t i = 0; i < t->size(); ++i) {
        const double y = self.value[i];
        (*t)[i] += self.grad[i] * (1.0 - y * y);
      }
  });
}

Var exp_(Var x) {
  Graph& g = *x.graph();
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
  return g.push_op(std::move(out), "exp", {x.index()}, [](Graph& g, Node& self) {
    if (Tensor* t = grad_target(g, self, 0))
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] += self.grad[i] * self.value[i];
  });
}

Var log_(Var x) {
  Graph& g = *x.graph();
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
  return g.push_op(std::move(out), "log", {x.index()}, [](Graph& g, Node& self) {
    const Tensor& xv = g.node(self.parents[0]).value;
    if (Tensor* t = grad_target(g, self, 0))
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] += self.grad[i] / xv[i];
  });
}

Var pow_scalar(Var x, double p) {
  Graph& g = *x.graph();
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::pow(out[i], p);
  return g.push_op(std::move(out), "pow", {x.index()}, [p](Graph& g, Node& self) {
    const Tensor& xv = g.node(self.parents[0]).value;
    if (Tensor* t = grad_target(g, self, 0))
      for (std::size_t i = 0; i < t->size(); ++i)
        (*t)[i] += self.grad[i] * p * std::pow(xv[i], p - 1.0);
  });
}

Var clamp(Var x, double lo, double hi) {
  Graph& g = *x.graph();
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, out[i]));
  return g.push_op(std::move(out), "clamp", {x.index()}, [lo, hi](Graph& g, Node& self) {
    const Tensor& xv = g.node(self.parents[0]).value;
    if (Tensor* t = grad_target(g, self, 0))
      for (std::size_t i = 0; i < t->size(); ++i)
        if (xv[i] > lo && xv[i] < hi) (*t)[i] += self.grad[i];
  });
}

Var sum_all(Var x) {
  Graph& g = *x.graph();
  double s = 0.0;
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
  Tensor out(1, 1, s);
  return g.push_op(std::move(out), "sum_all", {x.index()}, [](Graph& g, Node& self) {
    if (Tensor* t = grad_target(g, self, 0))
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] += self.grad(0, 0);
  });
}

Var mean_all(Var x) {
  const double n = static_cast<double>(x.value().size());
  if (n == 0) throw std::invalid_argument("mean_all: empty tensor");
  return scale(sum_all(x), 1.0 / n);
}

Var row_sum(Var x) {
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  Tensor out(xv.rows(), 1);
  for (int i = 0; i < xv.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < xv.cols(); ++j) s += xv(i, j);
    out(i, 0) = s;
  }
  return g.push_op(std::move(out), "row_sum", {x.index()}, [](Graph& g, Node& self) {
    Tensor* t = grad_target(g, self, 0);
    if (!t) return;
    for (int i = 0; i < t->rows(); ++i)
      for (int j = 0; j < t->cols(); ++j) (*t)(i, j) += self.grad(i, 0);
  });
}

Var concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty input");
  Graph& g = *xs[0].graph();
  const int rows = xs[0].value().rows();
  int total = 0;
  std::vector<int> parents;
  std::vector<int> widths;
  for (const Var& v : xs) {
    check_same_graph(xs[0], v, "concat_cols");
    if (v.value().rows() != rows)
      throw std::invalid_argument("concat_cols: row mismatch " + v.value().shape_str());
    total += v.value().cols();
    widths.push_back(v.value().cols());
    parents.push_back(v.index());
  }
  Tensor out(rows, total);
  int off = 0;
  for (const Var& v : xs) {
    const Tensor& t = v.value();
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < t.cols(); ++j) out(i, off + j) = t(i, j);
    off += t.cols();
  }
  return g.push_op(std::move(out), "concat_cols", std::move(parents),
                   [widths](Graph& g, Node& self) {
                     int off = 0;
                     for (std::size_t k = 0; k < widths.size(); ++k) {
                       if (Tensor* t = grad_target(g, self, k))
                         for (int i = 0; i < t->rows(); ++i)
                           for (int j = 0; j < widths[k]; ++j)
                             (*t)(i, j) += self.grad(i, off + j);
                       off += widths[k];
                     }
                   });
}

Var slice_cols(Var x, int begin, int width) {
  const Tensor& xv = x.value();
  if (begin < 0 || width < 0 || begin + width > xv.cols())
    throw std::invalid_argument("slice_cols: slice [" + std::to_string(begin) + ", " +
                                std::to_string(begin + width) + ") out of " + xv.shape_str());
  Graph& g = *x.graph();
  Tensor out(xv.rows(), width);
  for (int i = 0; i < xv.rows(); ++i)
    for (int j = 0; j < width; ++j) out(i, j) = xv(i, begin + j);
  return g.push_op(std::move(out), "slice_cols", {x.index()}, [begin, width](Graph& g, Node& self) {
    if (Tensor* t = grad_target(g, self, 0))
      for (int i = 0; i < self.grad.rows(); ++i)
        for (int j = 0; j < width; ++j) (*t)(i, begin + j) += self.grad(i, j);
  });
}

Var repeat_rows(Var x, int n) {
  const Tensor& xv = x.value();
  if (xv.rows() != 1) throw std::invalid_argument("repeat_rows: expected 1xC, got " + xv.shape_str());
  if (n < 1) throw std::invalid_argument("repeat_rows: n must be >= 1");
  Graph& g = *x.graph();
  Tensor out(n, xv.cols());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < xv.cols(); ++j) out(i, j) = xv(0, j);
  return g.push_op(std::move(out), "repeat_rows", {x.index()}, [](Graph& g, Node& self) {
    if (Tensor* t = grad_target(g, self, 0))
      for (int i = 0; i < self.grad.rows(); ++i)
        for (int j = 0; j < self.grad.cols(); ++j) (*t)(0, j) += self.grad(i, j);
  });
}

Var transpose_var(Var x) {
  Graph& g = *x.graph();
  return g.push_op(transpose(x.value()), "transpose", {x.index()}, [](Graph& g, Node& self) {
    if (Tensor* t = grad_target(g, self, 0)) {
      for (int i = 0; i < self.grad.rows(); ++i)
        for (int j = 0; j < self.grad.cols(); ++j) (*t)(j, i) += self.grad(i, j);
    }
  });
}

Var sigmoid_masked(Var x, const Tensor& apply_mask) {
  const Tensor& xv = x.value();
  if (!xv.same_shape(apply_mask))
    throw std::invalid_argument("sigmoid_masked: mask shape mismatch");
  Graph& g = *x.graph();
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (apply_mask[i] == 0.0) continue;
    const double v = out[i];
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return g.push_op(std::move(out), "sigmoid_masked", {x.index()},
                   [apply_mask](Graph& g, Node& self) {
                     if (Tensor* t = grad_target(g, self, 0))
                       for (std::size_t i = 0; i < t->size(); ++i) {
                         if (apply_mask[i] == 0.0) {
                           (*t)[i] += self.grad[i];
                         } else {
                           const double y = self.value[i];
                           (*t)[i] += self.grad[i] * y * (1.0 - y);
                         }
                       }
                   });
}

Var dropout(Var x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0, 1)");
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  Tensor mask(xv.rows(), xv.cols());
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return g.push_op(std::move(out), "dropout", {x.index()},
                   [mask](Graph& g, Node& self) {
                     if (Tensor* t = grad_target(g, self, 0))
                       for (std::size_t i = 0; i < t->size(); ++i)
                         (*t)[i] += self.grad[i] * mask[i];
                   });
}

Var cox_neg_partial_likelihood(Var risks, const std::vector<double>& times,
                               const std::vector<int>& events, bool* all_censored_flag) {
  const Tensor& rv = risks.value();
  if (rv.cols() != 1) throw std::invalid_argument("cox: risks must be Nx1, got " + rv.shape_str());
  const std::size_t n = static_cast<std::size_t>(rv.rows());
  if (times.size() != n || events.size() != n)
    throw std::invalid_argument("cox: times/events length mismatch");
  if (n == 0) throw std::invalid_argument("cox: empty batch");
  for (double t : times)
    if (!(t > 0.0)) throw std::invalid_argument("cox: times must be positive");

  bool any_event = false;
  for (int e : events) any_event = any_event || (e != 0);
  if (all_censored_flag) *all_censored_flag = !any_event;

  Graph& g = *risks.graph();

  if (!any_event) {
    // No events: the partial likelihood has no terms; value and gradient are 0.
    return g.push_op(Tensor(1, 1, 0.0), "cox", {risks.index()}, [](Graph&, Node&) {});
  }

  // Sort descending by time; walk tie groups maintaining a streaming
  // max-shifted log-sum-exp so every patient gets log S(s_n) over the risk
  // set {j : s_j >= s_n}.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return times[a] > times[b]; });

  std::vector<double> log_s(n, 0.0);
  double lse_max = -std::numeric_limits<double>::infinity();
  double lse_sum = 0.0;
  std::size_t pos = 0;
  while (pos < n) {
    std::size_t end = pos;
    while (end < n && times[order[end]] == times[order[pos]]) ++end;
    for (std::size_t k = pos; k < end; ++k) {
      const double r = rv(static_cast<int>(order[k]), 0);
      if (r <= lse_max) {
        lse_sum += std::exp(r - lse_max);
      } else {
        lse_sum = lse_sum * std::exp(lse_max - r) + 1.0;
        lse_max = r;
      }
    }
    const double ls = lse_max + std::log(lse_sum);
    for (std::size_t k = pos; k < end; ++k) log_s[order[k]] = ls;
    pos = end;
  }

  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (events[i]) loss -= rv(static_cast<int>(i), 0) - log_s[i];
  loss /= static_cast<double>(n);

  // dL/dr_m = -(1/N) (c_m - sum_{n: s_n <= s_m, c_n = 1} exp(r_m - log S_n)).
  // Each summand is <= 1 because m belongs to the risk set of every such n,
  // so the pairwise form stays finite even for extreme risks.
  auto cox_backward = [log_s, times, events, n](Graph& g, Node& self) {
    Tensor* t = grad_target(g, self, 0);
    if (!t) return;
    const Tensor& r = g.node(self.parents[0]).value;
    const double gout = self.grad(0, 0);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t m = 0; m < n; ++m) {
      const double rm = r(static_cast<int>(m), 0);
      double weight = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (events[i] && times[i] <= times[m]) weight += std::exp(rm - log_s[i]);
      const double c = events[m] ? 1.0 : 0.0;
      (*t)(static_cast<int>(m), 0) += gout * -inv_n * (c - weight);
    }
  };
  return g.push_op(Tensor(1, 1, loss), "cox", {risks.index()}, cox_backward);
}

// ---------------------------------------------------------------------------
// Layer helpers

Var dense(Var x, Var w, Var b, Activation act) {
  Var y = matmul(x, w);
  if (b.valid()) y = add_rowvec(y, b);
  switch (act) {
    case Activation::identity: return y;
    case Activation::relu: return relu(y);
    case Activation::sigmoid: return sigmoid(y);
    case Activation::tanh: return tanh_(y);
  }
  throw std::logic_error("dense: unknown activation");
}

std::vector<std::pair<std::string, std::pair<int, int>>> gru_param_shapes(
    const std::string& prefix, int input_width, int hidden_width) {
  if (hidden_width <= 0)
    throw std::invalid_argument("gru: hidden width must be positive, got " +
                                std::to_string(hidden_width));
  std::vector<std::pair<std::string, std::pair<int, int>>> out;
  for (const char* gate : {"z", "r", "h"}) {
    out.push_back({prefix + ".wx" + gate, {input_width, hidden_width}});
    out.push_back({prefix + ".wh" + gate, {hidden_width, hidden_width}});
    out.push_back({prefix + ".b" + gate, {1, hidden_width}});
  }
  return out;
}

GruParams bind_gru(Binding& bind, const std::string& prefix) {
  GruParams p;
  p.wxz = bind[prefix + ".wxz"];
  p.whz = bind[prefix + ".whz"];
  p.bz = bind[prefix + ".bz"];
  p.wxr = bind[prefix + ".wxr"];
  p.whr = bind[prefix + ".whr"];
  p.br = bind[prefix + ".br"];
  p.wxh = bind[prefix + ".wxh"];
  p.whh = bind[prefix + ".whh"];
  p.bh = bind[prefix + ".bh"];
  return p;
}

Var gru_cell(Var x_t, Var h_prev, const GruParams& p) {
  if (h_prev.value().cols() == 0) throw std::invalid_argument("gru_cell: zero-length hidden state");
  Var update = sigmoid(add_rowvec(add(matmul(x_t, p.wxz), matmul(h_prev, p.whz)), p.bz));
  Var reset = sigmoid(add_rowvec(add(matmul(x_t, p.wxr), matmul(h_prev, p.whr)), p.br));
  Var candidate =
      tanh_(add_rowvec(add(matmul(x_t, p.wxh), matmul(mul(reset, h_prev), p.whh)), p.bh));
  // h + z*(candidate - h)  ==  (1-z)*h + z*candidate
  return add(h_prev, mul(update, sub(candidate, h_prev)));
}

BiGruOut bidirectional_gru(const std::vector<Var>& sequence,
                           const std::vector<GruParams>& forward_layers,
                           const std::vector<GruParams>& backward_layers,
                           double dropout_p, bool training, Rng* rng) {
  if (sequence.empty()) throw std::invalid_argument("bidirectional_gru: empty sequence");
  if (forward_layers.size() != backward_layers.size() || forward_layers.empty())
    throw std::invalid_argument("bidirectional_gru: layer parameter mismatch");
  if (training && dropout_p > 0.0 && rng == nullptr)
    throw std::invalid_argument("bidirectional_gru: training dropout needs an Rng");

  Graph& g = *sequence[0].graph();
  const int batch = sequence[0].value().rows();
  const std::size_t t_len = sequence.size();
  const std::size_t n_layers = forward_layers.size();

  BiGruOut out;
  std::vector<Var> inputs = sequence;
  for (std::size_t layer = 0; layer < n_layers; ++layer) {
    const int hidden = forward_layers[layer].whz.value().rows();
    Var h0f = g.constant(Tensor(batch, hidden));
    Var h0b = g.constant(Tensor(batch, hidden));

    std::vector<Var> fwd(t_len), bwd(t_len);
    Var h = h0f;
    for (std::size_t t = 0; t < t_len; ++t) {
      h = gru_cell(inputs[t], h, forward_layers[layer]);
      fwd[t] = h;
    }
    Var hb = h0b;
    for (std::size_t t = t_len; t > 0; --t) {
      hb = gru_cell(inputs[t - 1], hb, backward_layers[layer]);
      bwd[t - 1] = hb;
    }
    out.final_states.push_back(fwd[t_len - 1]);
    out.final_states.push_back(bwd[0]);

    if (layer + 1 < n_layers) {
      std::vector<Var> next(t_len);
      for (std::size_t t = 0; t < t_len; ++t) {
        Var cat = concat_cols({fwd[t], bwd[t]});
        next[t] = (training && dropout_p > 0.0) ? dropout(cat, dropout_p, *rng) : cat;
      }
      inputs = std::move(next);
    }
  }
  return out;
}

Var reparameterize(Var mu, Var logvar, const Tensor& noise) {
  check_same_shape(mu, logvar, "reparameterize");
  if (!mu.value().same_shape(noise))
    throw std::invalid_argument("reparameterize: noise shape mismatch");
  Graph& g = *mu.graph();
  Var sigma = exp_(scale(logvar, 0.5));
  return add(mu, mul(sigma, g.constant(noise)));
}

// ---------------------------------------------------------------------------
// Gradient checking

GradCheckResult grad_check(const LossBuilder& build, ParamSet& params, double h,
                           const std::set<std::pair<std::string, int>>* exclude) {
  auto eval = [&]() {
    Graph g;
    Binding bind(g, params);
    Var loss = build(g, bind);
    const double v = loss.value()(0, 0);
    if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite loss");
    return v;
  };

  Graph g;
  Binding bind(g, params);
  Var loss = build(g, bind);
  if (!std::isfinite(loss.value()(0, 0))) throw std::runtime_error("grad_check: non-finite loss");
  g.backward(loss);

  std::map<std::string, Tensor> analytic;
  for (const auto& [name, var] : bind.leaves()) analytic[name] = var.grad();

  GradCheckResult result;
  for (const auto& name : params.names()) {
    if (!params.entry(name).trainable) continue;
    auto it = analytic.find(name);
    if (it == analytic.end()) continue;
    Tensor& value = params.at(name);
    const Tensor& a = it->second;
    for (int i = 0; i < static_cast<int>(value.size()); ++i) {
      if (exclude && exclude->count({name, i})) continue;
      const double orig = value[static_cast<std::size_t>(i)];
      value[static_cast<std::size_t>(i)] = orig + h;
      const double f_plus = eval();
      value[static_cast<std::size_t>(i)] = orig - h;
      const double f_minus = eval();
      value[static_cast<std::size_t>(i)] = orig;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double ana = a.empty() ? 0.0 : a[static_cast<std::size_t>(i)];
      const double mag = std::abs(ana) + std::abs(numeric);
      // Relative error with an absolute fallback for near-zero gradients.
      const double err = mag < 1e-6 ? std::abs(ana - numeric) : std::abs(ana - numeric) / mag;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_name = name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace trajcluster::ad
