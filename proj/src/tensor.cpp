#include "reltab/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

#include "reltab/error.hpp"

namespace reltab {

namespace {

std::atomic<uint64_t> g_node_counter{1};
std::atomic<int> g_precision{static_cast<int>(Precision::F64)};
thread_local bool g_grad_enabled = true;

constexpr double kPi = 3.14159265358979323846;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void round_f32(std::vector<double>& v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v)
    if (!std::isfinite(x))
      throw NonFiniteError(std::string(op) + " produced a non-finite value");
}

std::shared_ptr<detail::Node> make_node(std::vector<size_t> shape,
                                        std::vector<double> values,
                                        const char* op) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  if (shape.empty() || shape.size() > 2)
    throw ShapeError(std::string(op) + ": rank must be 1 or 2");
  if (n != values.size())
    throw ShapeError(std::string(op) + ": value count does not match shape");
  if (default_precision() == Precision::F32) round_f32(values);
  check_finite(values, op);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->val = std::move(values);
  node->id = g_node_counter.fetch_add(1, std::memory_order_relaxed);
  return node;
}

size_t nrows(const detail::Node& n) {
  return n.shape.size() == 2 ? n.shape[0] : 1;
}
size_t ncols(const detail::Node& n) {
  return n.shape.size() == 2 ? n.shape[1] : n.shape[0];
}

// Marks the node as an op node when gradients flow from any parent.
void trace(const std::shared_ptr<detail::Node>& out,
           std::vector<std::shared_ptr<detail::Node>> parents,
           std::function<void(detail::Node&)> fn) {
  if (!g_grad_enabled) return;
  bool flows = false;
  for (const auto& p : parents)
    if (p->grad_flows()) { flows = true; break; }
  if (!flows) return;
  out->traced = true;
  out->parents = std::move(parents);
  out->backward_fn = std::move(fn);
}

}  // namespace

void set_default_precision(Precision p) {
  g_precision.store(static_cast<int>(p), std::memory_order_relaxed);
}
Precision default_precision() {
  return static_cast<Precision>(g_precision.load(std::memory_order_relaxed));
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

// --- Tensor basics -----------------------------------------------------------

Tensor Tensor::zeros(std::vector<size_t> shape, bool requires_grad) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  auto node = make_node(std::move(shape), std::vector<double>(n, 0.0), "zeros");
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::from_values(std::vector<size_t> shape, std::vector<double> values,
                           bool requires_grad) {
  auto node = make_node(std::move(shape), std::move(values), "from_values");
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_values({1}, {v}, requires_grad);
}

Tensor Tensor::randn(std::vector<size_t> shape, Rng& rng, double stddev,
                     bool requires_grad) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  std::vector<double> vals(n);
  for (double& v : vals) v = rng.normal(0.0, stddev);
  return from_values(std::move(shape), std::move(vals), requires_grad);
}

size_t Tensor::rows() const { return nrows(*node_); }
size_t Tensor::cols() const { return ncols(*node_); }

double Tensor::item() const {
  if (numel() != 1) throw NotScalarError("item() on non-scalar tensor");
  return node_->val[0];
}

double Tensor::at(size_t r, size_t c) const {
  if (r >= rows() || c >= cols()) throw IndexError("Tensor::at out of range");
  return node_->val[r * cols() + c];
}

const std::vector<double>& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->ensure_grad();
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

// --- primitives ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  auto an = a.node(), bn = b.node();
  size_t n = nrows(*an), k = ncols(*an), k2 = nrows(*bn), m = ncols(*bn);
  if (k != k2) throw ShapeError("matmul: inner dimensions differ");
  std::vector<double> out(n * m, 0.0);
  const double* A = an->val.data();
  const double* B = bn->val.data();
  for (size_t i = 0; i < n; ++i) {
    double* Ci = out.data() + i * m;
    for (size_t kk = 0; kk < k; ++kk) {
      double aik = A[i * k + kk];
      if (aik == 0.0) continue;
      const double* Bk = B + kk * m;
      for (size_t j = 0; j < m; ++j) Ci[j] += aik * Bk[j];
    }
  }
  auto node = make_node({n, m}, std::move(out), "matmul");
  trace(node, {an, bn}, [an, bn, n, k, m](detail::Node& self) {
    const double* G = self.grad.data();
    if (an->grad_flows()) {
      an->ensure_grad();
      double* dA = an->grad.data();
      const double* B = bn->val.data();
      // dA = G * B^T
      for (size_t i = 0; i < n; ++i)
        for (size_t kk = 0; kk < k; ++kk) {
          double acc = 0.0;
          const double* Gi = G + i * m;
          const double* Bk = B + kk * m;
          for (size_t j = 0; j < m; ++j) acc += Gi[j] * Bk[j];
          dA[i * k + kk] += acc;
        }
    }
    if (bn->grad_flows()) {
      bn->ensure_grad();
      double* dB = bn->grad.data();
      const double* A = an->val.data();
      // dB = A^T * G
      for (size_t kk = 0; kk < k; ++kk)
        for (size_t i = 0; i < n; ++i) {
          double aik = A[i * k + kk];
          if (aik == 0.0) continue;
          const double* Gi = G + i * m;
          double* dBk = dB + kk * m;
          for (size_t j = 0; j < m; ++j) dBk[j] += aik * Gi[j];
        }
    }
  });
  return Tensor(node);
}

Tensor add(const Tensor& a, const Tensor& b) {
  auto an = a.node(), bn = b.node();
  size_t n = nrows(*an), m = ncols(*an);
  bool broadcast;
  if (nrows(*bn) == n && ncols(*bn) == m) {
    broadcast = false;
  } else if (nrows(*bn) == 1 && ncols(*bn) == m) {
    broadcast = true;
  } else {
    throw ShapeError("add: incompatible shapes");
  }
  std::vector<double> out(an->val);
  if (broadcast) {
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < m; ++j) out[i * m + j] += bn->val[j];
  } else {
    for (size_t i = 0; i < out.size(); ++i) out[i] += bn->val[i];
  }
  auto node = make_node(an->shape, std::move(out), "add");
  trace(node, {an, bn}, [an, bn, n, m, broadcast](detail::Node& self) {
    if (an->grad_flows()) {
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->grad_flows()) {
      bn->ensure_grad();
      if (broadcast) {
        for (size_t i = 0; i < n; ++i)
          for (size_t j = 0; j < m; ++j) bn->grad[j] += self.grad[i * m + j];
      } else {
        for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
      }
    }
  });
  return Tensor(node);
}

Tensor scale(const Tensor& a, double c) {
  auto an = a.node();
  std::vector<double> out(an->val);
  for (double& v : out) v *= c;
  auto node = make_node(an->shape, std::move(out), "scale");
  trace(node, {an}, [an, c](detail::Node& self) {
    if (!an->grad_flows()) return;
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += c * self.grad[i];
  });
  return Tensor(node);
}

Tensor transpose(const Tensor& a) {
  auto an = a.node();
  size_t n = nrows(*an), m = ncols(*an);
  std::vector<double> out(n * m);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < m; ++j) out[j * n + i] = an->val[i * m + j];
  auto node = make_node({m, n}, std::move(out), "transpose");
  trace(node, {an}, [an, n, m](detail::Node& self) {
    if (!an->grad_flows()) return;
    an->ensure_grad();
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < m; ++j) an->grad[i * m + j] += self.grad[j * n + i];
  });
  return Tensor(node);
}

Tensor concat(const std::vector<Tensor>& parts, size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  std::vector<std::shared_ptr<detail::Node>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());

  size_t rows0 = nrows(*nodes[0]), cols0 = ncols(*nodes[0]);
  size_t total = 0;
  for (const auto& n : nodes) {
    if (axis == 0) {
      if (ncols(*n) != cols0) throw ShapeError("concat: column mismatch");
      total += nrows(*n);
    } else {
      if (nrows(*n) != rows0) throw ShapeError("concat: row mismatch");
      total += ncols(*n);
    }
  }
  size_t out_rows = axis == 0 ? total : rows0;
  size_t out_cols = axis == 0 ? cols0 : total;
  std::vector<double> out(out_rows * out_cols);
  size_t offset = 0;
  for (const auto& n : nodes) {
    size_t r = nrows(*n), c = ncols(*n);
    if (axis == 0) {
      std::copy(n->val.begin(), n->val.end(), out.begin() + offset * out_cols);
      offset += r;
    } else {
      for (size_t i = 0; i < r; ++i)
        std::copy(n->val.begin() + i * c, n->val.begin() + (i + 1) * c,
                  out.begin() + i * out_cols + offset);
      offset += c;
    }
  }
  auto node = make_node({out_rows, out_cols}, std::move(out), "concat");
  trace(node, nodes, [nodes, axis, out_cols](detail::Node& self) {
    size_t offset = 0;
    for (const auto& n : nodes) {
      size_t r = nrows(*n), c = ncols(*n);
      if (n->grad_flows()) {
        n->ensure_grad();
        if (axis == 0) {
          for (size_t i = 0; i < r * c; ++i)
            n->grad[i] += self.grad[offset * out_cols + i];
        } else {
          for (size_t i = 0; i < r; ++i)
            for (size_t j = 0; j < c; ++j)
              n->grad[i * c + j] += self.grad[i * out_cols + offset + j];
        }
      }
      offset += axis == 0 ? r : c;
    }
  });
  return Tensor(node);
}

Tensor slice(const Tensor& a, size_t axis, size_t start, size_t len) {
  auto an = a.node();
  size_t n = nrows(*an), m = ncols(*an);
  if (axis > 1) throw ShapeError("slice: axis must be 0 or 1");
  size_t limit = axis == 0 ? n : m;
  if (start + len > limit || len == 0)
    throw ShapeError("slice: range out of bounds");
  size_t out_rows = axis == 0 ? len : n;
  size_t out_cols = axis == 0 ? m : len;
  std::vector<double> out(out_rows * out_cols);
  if (axis == 0) {
    std::copy(an->val.begin() + start * m, an->val.begin() + (start + len) * m,
              out.begin());
  } else {
    for (size_t i = 0; i < n; ++i)
      std::copy(an->val.begin() + i * m + start,
                an->val.begin() + i * m + start + len, out.begin() + i * len);
  }
  auto node = make_node({out_rows, out_cols}, std::move(out), "slice");
  trace(node, {an}, [an, axis, start, len, n, m](detail::Node& self) {
    if (!an->grad_flows()) return;
    an->ensure_grad();
    if (axis == 0) {
      for (size_t i = 0; i < len * m; ++i)
        an->grad[start * m + i] += self.grad[i];
    } else {
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < len; ++j)
          an->grad[i * m + start + j] += self.grad[i * len + j];
    }
  });
  return Tensor(node);
}

Tensor relu(const Tensor& a) {
  auto an = a.node();
  std::vector<double> out(an->val);
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  auto node = make_node(an->shape, std::move(out), "relu");
  trace(node, {an}, [an](detail::Node& self) {
    if (!an->grad_flows()) return;
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (an->val[i] > 0.0) an->grad[i] += self.grad[i];
  });
  return Tensor(node);
}

Tensor gelu(const Tensor& a) {
  auto an = a.node();
  std::vector<double> out(an->val.size());
  for (size_t i = 0; i < out.size(); ++i) {
    double x = an->val[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  auto node = make_node(an->shape, std::move(out), "gelu");
  trace(node, {an}, [an](detail::Node& self) {
    if (!an->grad_flows()) return;
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      double x = an->val[i];
      double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      an->grad[i] += self.grad[i] * (cdf + x * pdf);
    }
  });
  return Tensor(node);
}

Tensor sigmoid(const Tensor& a) {
  auto an = a.node();
  std::vector<double> out(an->val.size());
  for (size_t i = 0; i < out.size(); ++i) {
    double x = an->val[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
  }
  auto node = make_node(an->shape, std::move(out), "sigmoid");
  auto saved = node->val;
  trace(node, {an}, [an, saved](detail::Node& self) {
    if (!an->grad_flows()) return;
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      double y = saved[i];
      an->grad[i] += self.grad[i] * y * (1.0 - y);
    }
  });
  return Tensor(node);
}

Tensor softplus(const Tensor& a) {
  auto an = a.node();
  std::vector<double> out(an->val.size());
  for (size_t i = 0; i < out.size(); ++i) {
    double x = an->val[i];
    out[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
  }
  auto node = make_node(an->shape, std::move(out), "softplus");
  trace(node, {an}, [an](detail::Node& self) {
    if (!an->grad_flows()) return;
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      double x = an->val[i];
      double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                            : std::exp(x) / (1.0 + std::exp(x));
      an->grad[i] += self.grad[i] * sig;
    }
  });
  return Tensor(node);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                  double eps) {
  auto xn = x.node(), gn = gain.node(), bn = shift.node();
  size_t n = nrows(*xn), m = ncols(*xn);
  if (ncols(*gn) != m || nrows(*gn) != 1 || ncols(*bn) != m || nrows(*bn) != 1)
    throw ShapeError("layer_norm: gain/shift must be [1,m]");
  std::vector<double> out(n * m);
  std::vector<double> xhat(n * m);
  std::vector<double> inv_std(n);
  for (size_t i = 0; i < n; ++i) {
    const double* xi = xn->val.data() + i * m;
    double mu = 0.0;
    for (size_t j = 0; j < m; ++j) mu += xi[j];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (size_t j = 0; j < m; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<double>(m);
    double inv = 1.0 / std::sqrt(var + eps);
    inv_std[i] = inv;
    for (size_t j = 0; j < m; ++j) {
      double h = (xi[j] - mu) * inv;
      xhat[i * m + j] = h;
      out[i * m + j] = gn->val[j] * h + bn->val[j];
    }
  }
  auto node = make_node(xn->shape, std::move(out), "layer_norm");
  trace(node, {xn, gn, bn}, [xn, gn, bn, n, m, xhat, inv_std](detail::Node& self) {
    if (gn->grad_flows()) {
      gn->ensure_grad();
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < m; ++j)
          gn->grad[j] += self.grad[i * m + j] * xhat[i * m + j];
    }
    if (bn->grad_flows()) {
      bn->ensure_grad();
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < m; ++j) bn->grad[j] += self.grad[i * m + j];
    }
    if (xn->grad_flows()) {
      xn->ensure_grad();
      // dx = inv * (p - mean(p) - xhat * mean(p*xhat)), where p = dy * gain
      for (size_t i = 0; i < n; ++i) {
        double mean_p = 0.0, mean_ph = 0.0;
        for (size_t j = 0; j < m; ++j) {
          double p = self.grad[i * m + j] * gn->val[j];
          mean_p += p;
          mean_ph += p * xhat[i * m + j];
        }
        mean_p /= static_cast<double>(m);
        mean_ph /= static_cast<double>(m);
        for (size_t j = 0; j < m; ++j) {
          double p = self.grad[i * m + j] * gn->val[j];
          xn->grad[i * m + j] +=
              inv_std[i] * (p - mean_p - xhat[i * m + j] * mean_ph);
        }
      }
    }
  });
  return Tensor(node);
}

Tensor row_softmax(const Tensor& a) {
  auto an = a.node();
  size_t n = nrows(*an), m = ncols(*an);
  std::vector<double> out(n * m);
  for (size_t i = 0; i < n; ++i) {
    const double* xi = an->val.data() + i * m;
    double mx = xi[0];
    for (size_t j = 1; j < m; ++j) mx = std::max(mx, xi[j]);
    double z = 0.0;
    for (size_t j = 0; j < m; ++j) {
      double e = std::exp(xi[j] - mx);
      out[i * m + j] = e;
      z += e;
    }
    for (size_t j = 0; j < m; ++j) out[i * m + j] /= z;
  }
  auto node = make_node(an->shape, std::move(out), "row_softmax");
  auto saved = node->val;
  trace(node, {an}, [an, saved, n, m](detail::Node& self) {
    if (!an->grad_flows()) return;
    an->ensure_grad();
    // dx_j = y_j * (dy_j - sum_k dy_k y_k) per row
    for (size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (size_t j = 0; j < m; ++j)
        dot += self.grad[i * m + j] * saved[i * m + j];
      for (size_t j = 0; j < m; ++j)
        an->grad[i * m + j] +=
            saved[i * m + j] * (self.grad[i * m + j] - dot);
    }
  });
  return Tensor(node);
}

Tensor embedding_lookup(const Tensor& table, const std::vector<uint32_t>& ids) {
  auto tn = table.node();
  if (tn->shape.size() != 2) throw ShapeError("embedding_lookup: table must be 2-D");
  size_t v = tn->shape[0], d = tn->shape[1];
  if (ids.empty()) throw ShapeError("embedding_lookup: empty index list");
  std::vector<double> out(ids.size() * d);
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= v)
      throw IndexError("embedding_lookup: id " + std::to_string(ids[i]) +
                       " out of range for table of " + std::to_string(v));
    std::copy(tn->val.begin() + ids[i] * d, tn->val.begin() + (ids[i] + 1) * d,
              out.begin() + i * d);
  }
  auto node = make_node({ids.size(), d}, std::move(out), "embedding_lookup");
  trace(node, {tn}, [tn, ids, d](detail::Node& self) {
    if (!tn->grad_flows()) return;
    tn->ensure_grad();
    for (size_t i = 0; i < ids.size(); ++i)
      for (size_t j = 0; j < d; ++j)
        tn->grad[ids[i] * d + j] += self.grad[i * d + j];
  });
  return Tensor(node);
}

Tensor dropout(const Tensor& a, double p, Rng& rng, bool train) {
  auto an = a.node();
  if (!train || p <= 0.0) {
    // identity pass-through that still participates in the tape
    std::vector<double> out(an->val);
    auto node = make_node(an->shape, std::move(out), "dropout");
    trace(node, {an}, [an](detail::Node& self) {
      if (!an->grad_flows()) return;
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
    return Tensor(node);
  }
  if (p >= 1.0) throw ShapeError("dropout: p must be < 1");
  double keep = 1.0 - p;
  std::vector<double> mask(an->val.size());
  for (double& m : mask) m = rng.uniform_real() < p ? 0.0 : 1.0 / keep;
  std::vector<double> out(an->val.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = an->val[i] * mask[i];
  auto node = make_node(an->shape, std::move(out), "dropout");
  trace(node, {an}, [an, mask](detail::Node& self) {
    if (!an->grad_flows()) return;
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      an->grad[i] += self.grad[i] * mask[i];
  });
  return Tensor(node);
}

Tensor sum(const Tensor& a) {
  auto an = a.node();
  double s = 0.0;
  for (double v : an->val) s += v;
  auto node = make_node({1}, {s}, "sum");
  trace(node, {an}, [an](detail::Node& self) {
    if (!an->grad_flows()) return;
    an->ensure_grad();
    for (double& g : an->grad) g += self.grad[0];
  });
  return Tensor(node);
}

Tensor cross_entropy(const Tensor& logits, size_t target) {
  auto ln = logits.node();
  if (nrows(*ln) != 1) throw ShapeError("cross_entropy: logits must be a vector");
  size_t m = ncols(*ln);
  if (m == 0) throw ShapeError("cross_entropy: empty logits");
  if (target >= m)
    throw IndexError("cross_entropy: target " + std::to_string(target) +
                     " out of range for " + std::to_string(m) + " classes");
  double mx = ln->val[0];
  for (size_t j = 1; j < m; ++j) mx = std::max(mx, ln->val[j]);
  double z = 0.0;
  for (size_t j = 0; j < m; ++j) z += std::exp(ln->val[j] - mx);
  // z >= 1 since the max term contributes exp(0), so loss >= 0 exactly
  double lse = mx + std::log(z);
  double loss = lse - ln->val[target];
  auto node = make_node({1}, {loss}, "cross_entropy");
  std::vector<double> probs(m);
  for (size_t j = 0; j < m; ++j) probs[j] = std::exp(ln->val[j] - lse);
  trace(node, {ln}, [ln, probs, target, m](detail::Node& self) {
    if (!ln->grad_flows()) return;
    ln->ensure_grad();
    double g = self.grad[0];
    for (size_t j = 0; j < m; ++j) {
      double delta = j == target ? 1.0 : 0.0;
      ln->grad[j] += g * (probs[j] - delta);
    }
  });
  return Tensor(node);
}

// --- backward ------------------------------------------------------------------

void backward(const Tensor& loss) {
  auto root = loss.node();
  if (!root) throw NotScalarError("backward: undefined tensor");
  if (root->numel() != 1)
    throw NotScalarError("backward: loss must be a scalar");

  // hold shared ownership while walking so tape consumption cannot free
  // nodes still in the order list
  std::vector<std::shared_ptr<detail::Node>> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::shared_ptr<detail::Node>> stack{root};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    for (const auto& p : n->parents)
      if (seen.insert(p.get()).second) stack.push_back(p);
    order.push_back(std::move(n));
  }
  std::sort(order.begin(), order.end(),
            [](const std::shared_ptr<detail::Node>& a,
               const std::shared_ptr<detail::Node>& b) { return a->id > b->id; });

  root->ensure_grad();
  root->grad[0] = 1.0;
  const bool f32 = default_precision() == Precision::F32;
  for (const auto& n : order) {
    n->ensure_grad();
    if (f32) round_f32(n->grad);
    if (n->traced && n->backward_fn) n->backward_fn(*n);
  }
  // consume the tape so graph memory is released even while handles live
  for (const auto& n : order) {
    if (n->traced) {
      n->backward_fn = nullptr;
      n->parents.clear();
      n->traced = false;
    }
  }
}

// --- gradient checking -----------------------------------------------------------

GradCheckReport grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    std::vector<Tensor> point, double h, double tol) {
  std::vector<Tensor> inputs;
  inputs.reserve(point.size());
  for (const auto& p : point)
    inputs.push_back(Tensor::from_values(p.shape(), p.values(), true));

  Tensor loss = f(inputs);
  if (loss.numel() != 1)
    throw NotScalarError("grad_check: f must be scalar-valued");
  backward(loss);

  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    t.node()->ensure_grad();
    analytic.push_back(t.node()->grad);
  }

  GradCheckReport rep;
  rep.tolerance = tol;
  NoGradGuard no_grad;
  for (size_t i = 0; i < inputs.size(); ++i) {
    auto& vals = inputs[i].raw();
    for (size_t c = 0; c < vals.size(); ++c) {
      double orig = vals[c];
      vals[c] = orig + h;
      double up = f(inputs).item();
      vals[c] = orig - h;
      double down = f(inputs).item();
      vals[c] = orig;
      double numeric = (up - down) / (2.0 * h);
      double a = analytic[i][c];
      double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-4});
      double rel = std::fabs(a - numeric) / denom;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_input = i;
        rep.worst_coord = c;
        rep.analytic = a;
        rep.numeric = numeric;
      }
    }
  }
  rep.pass = rep.max_rel_err < tol;
  return rep;
}

}  // namespace reltab
