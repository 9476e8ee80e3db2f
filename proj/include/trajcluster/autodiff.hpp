#pragma once

#include <deque>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "trajcluster/rng.hpp"
#include "trajcluster/tensor.hpp"

namespace trajcluster::ad {

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Tensor& grad() const;
  int rows() const { return value().rows(); }
  int cols() const { return value().cols(); }
  bool valid() const { return g_ != nullptr; }
  Graph* graph() const { return g_; }
  int index() const { return idx_; }

 private:
  friend class Graph;
  Var(Graph* g, int idx) : g_(g), idx_(idx) {}
  Graph* g_ = nullptr;
  int idx_ = -1;
};

/// One node of the computation graph: a value tensor, a gradient tensor of
/// the same shape filled by the backward pass, the op tag, and parent links.
struct Node {
  Tensor value;
  Tensor grad;
  const char* op = "leaf";
  std::vector<int> parents;
  std::function<void(Graph&, Node&)> backward;
  bool requires_grad = false;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so iterating
/// in reverse index order is a reverse topological traversal that touches
/// each node exactly once; fan-out gradients accumulate by summation.
class Graph {
 public:
  Var constant(Tensor value) { return push(std::move(value), "const", {}, nullptr, false); }
  Var leaf(Tensor value) { return push(std::move(value), "leaf", {}, nullptr, true); }

  Var push(Tensor value, const char* op, std::vector<int> parents,
           std::function<void(Graph&, Node&)> backward, bool requires_grad_override);
  Var push_op(Tensor value, const char* op, std::vector<int> parents,
              std::function<void(Graph&, Node&)> backward);

  Node& node(int idx) { return nodes_[static_cast<std::size_t>(idx)]; }
  const Node& node(int idx) const { return nodes_[static_cast<std::size_t>(idx)]; }
  std::size_t size() const { return nodes_.size(); }

  /// Seed d(loss)/d(loss) = 1 and propagate. `loss` must be scalar (1x1).
  void backward(Var loss);

 private:
  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const {
  if (!g_) throw std::logic_error("Var::value on empty handle");
  return g_->node(idx_).value;
}
inline const Tensor& Var::grad() const {
  if (!g_) throw std::logic_error("Var::grad on empty handle");
  return g_->node(idx_).grad;
}

// ---------------------------------------------------------------------------
// Parameters

/// Named tensors with fixed shapes; the single owner of trainable state.
class ParamSet {
 public:
  struct Entry {
    Tensor value;
    bool trainable = true;
    bool weight_decay = false;
  };

  Tensor& add(const std::string& name, Tensor init, bool trainable = true,
              bool weight_decay = false);
  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }

  /// Binary checkpoint, bit-exact round trip.
  void save(const std::string& path) const;
  static ParamSet load(const std::string& path);

 private:
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

/// Lazily creates one leaf per parameter name used by a graph build, so the
/// trainer can map gradients back to ParamSet entries afterwards.
class Binding {
 public:
  Binding(Graph& g, const ParamSet& params) : g_(&g), params_(&params) {}
  Var operator[](const std::string& name);
  const std::map<std::string, Var>& leaves() const { return leaves_; }

 private:
  Graph* g_;
  const ParamSet* params_;
  std::map<std::string, Var> leaves_;
};

// ---------------------------------------------------------------------------
// Primitive ops

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_rowvec(Var x, Var b);   // b: 1xC broadcast over rows
Var add_colvec(Var x, Var c);   // c: Nx1 broadcast over cols
Var mul_colvec(Var x, Var c);
Var div_colvec(Var x, Var c);
Var scale(Var x, double s);
Var add_scalar(Var x, double s);
Var relu(Var x);
Var sigmoid(Var x);
Var tanh_(Var x);
Var exp_(Var x);
Var log_(Var x);
Var pow_scalar(Var x, double p);
Var clamp(Var x, double lo, double hi);
Var sum_all(Var x);             // 1x1
Var mean_all(Var x);            // 1x1
Var row_sum(Var x);             // Nx1
Var concat_cols(const std::vector<Var>& xs);
Var slice_cols(Var x, int begin, int width);
Var repeat_rows(Var x, int n);  // 1xC -> NxC
Var transpose_var(Var x);
/// Sigmoid applied only where apply_mask != 0; other entries pass through.
Var sigmoid_masked(Var x, const Tensor& apply_mask);
/// Inverted dropout: scales kept entries by 1/(1-p). Training-mode only;
/// callers skip the op entirely in evaluation mode.
Var dropout(Var x, double p, Rng& rng);

/// Negative mean Cox partial likelihood of `risks` (Nx1) under right
/// censoring. Risk sets use >= on times, so tied event times share one
/// risk set. Log-sum-exp is computed with max-shift. All-censored input
/// yields 0 and sets *all_censored_flag when provided.
Var cox_neg_partial_likelihood(Var risks, const std::vector<double>& times,
                               const std::vector<int>& events,
                               bool* all_censored_flag = nullptr);

// ---------------------------------------------------------------------------
// Layer helpers

enum class Activation { identity, relu, sigmoid, tanh };

/// y = act(x W + b); b may be an invalid Var to skip the bias.
Var dense(Var x, Var w, Var b, Activation act);

struct GruParams {
  Var wxz, whz, bz;
  Var wxr, whr, br;
  Var wxh, whh, bh;
};

/// Bind GRU parameters by prefix (creates leaves; tensors must exist).
GruParams bind_gru(Binding& bind, const std::string& prefix);

/// Names of the tensors bind_gru expects, for initialization code.
std::vector<std::pair<std::string, std::pair<int, int>>> gru_param_shapes(
    const std::string& prefix, int input_width, int hidden_width);

/// h_t = (1-z) .* h_prev + z .* candidate, with
///   z = sigmoid(x Wxz + h Whz + bz), r = sigmoid(x Wxr + h Whr + br),
///   candidate = tanh(x Wxh + (r .* h) Whh + bh).
/// The update gate multiplies the candidate; this convention is fixed.
Var gru_cell(Var x_t, Var h_prev, const GruParams& p);

struct BiGruOut {
  std::vector<Var> final_states;  // layer-major: L0 fwd, L0 bwd, L1 fwd, L1 bwd, ...
};

/// Stacked bidirectional GRU over a window sequence. Dropout sits between
/// layers only and is skipped when `training` is false.
BiGruOut bidirectional_gru(const std::vector<Var>& sequence,
                           const std::vector<GruParams>& forward_layers,
                           const std::vector<GruParams>& backward_layers,
                           double dropout_p, bool training, Rng* rng);

/// z = mu + exp(0.5 * logvar) .* noise; gradients reach mu and logvar only.
Var reparameterize(Var mu, Var logvar, const Tensor& noise);

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_name;
  int worst_index = -1;
};

using LossBuilder = std::function<Var(Graph&, Binding&)>;

/// Central-difference check of every trainable parameter entry against the
/// analytic gradient from one backward pass. Entries listed in `exclude`
/// (e.g. inputs sitting exactly on a ReLU kink) are skipped. The builder
/// must be deterministic: any stochastic inputs have to be frozen constants.
GradCheckResult grad_check(const LossBuilder& build, ParamSet& params, double h = 1e-5,
                           const std::set<std::pair<std::string, int>>* exclude = nullptr);

}  // namespace trajcluster::ad
