#pragma once
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "reltab/rng.hpp"

namespace reltab {

enum class Precision { F64, F32 };

/// Process-wide numeric mode. F32 rounds every primitive's outputs (and
/// propagated gradients) through single precision; storage stays f64 so
/// checkpoints are unaffected.
void set_default_precision(Precision p);
Precision default_precision();

namespace detail {

struct Node {
  std::vector<size_t> shape;
  std::vector<double> val;
  std::vector<double> grad;
  bool requires_grad = false;  // leaf parameter flag
  bool traced = false;         // op node recorded on the tape
  uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  size_t numel() const { return val.size(); }
  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
  }
  bool grad_flows() const { return requires_grad || traced; }
};

}  // namespace detail

/// Handle to a tape node. Copies share the underlying storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<size_t> shape, bool requires_grad = false);
  static Tensor from_values(std::vector<size_t> shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor randn(std::vector<size_t> shape, Rng& rng, double stddev,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<size_t>& shape() const { return node_->shape; }
  size_t numel() const { return node_->numel(); }
  size_t rows() const;
  size_t cols() const;

  const std::vector<double>& values() const { return node_->val; }
  std::vector<double>& raw() { return node_->val; }  // untraced mutation
  double item() const;
  double at(size_t r, size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  const std::vector<double>& grad() const;
  void zero_grad();

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Named trainable tensor (requires_grad is always set).
struct Parameter {
  std::string name;
  Tensor value;
};

/// RAII guard disabling tape recording (evaluation / finite differences).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// --- primitives -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// Elementwise add; also broadcasts a [1,m] (or [m]) bias over [n,m].
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor transpose(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, size_t axis);
Tensor slice(const Tensor& a, size_t axis, size_t start, size_t len);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// log(1 + e^x), computed stably; building block for NSP log-likelihoods.
Tensor softplus(const Tensor& a);
/// Normalizes over the last dimension, then applies gain/shift ([1,m] or [m]).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                  double eps = 1e-5);
Tensor row_softmax(const Tensor& a);
Tensor embedding_lookup(const Tensor& table, const std::vector<uint32_t>& ids);
/// Inverted dropout; identity when !train or p == 0.
Tensor dropout(const Tensor& a, double p, Rng& rng, bool train);
Tensor sum(const Tensor& a);
/// -log softmax(logits)[target]; logits must be a vector or [1,n].
Tensor cross_entropy(const Tensor& logits, size_t target);

/// Reverse-mode sweep from a scalar loss; accumulates into every
/// requires_grad leaf and consumes the tape.
void backward(const Tensor& loss);

// --- gradient checking -------------------------------------------------------

struct GradCheckReport {
  double max_rel_err = 0.0;
  size_t worst_input = 0;
  size_t worst_coord = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double tolerance = 0.0;
  bool pass = true;
};

/// Central finite differences vs reverse-mode gradients for a scalar-valued
/// f over the given inputs.
GradCheckReport grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    std::vector<Tensor> point, double h = 1e-5, double tol = 1e-4);

}  // namespace reltab
