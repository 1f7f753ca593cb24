#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridplan::ad {

struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::vector<size_t> s, double fill = 0.0);
  static Tensor scalar(double x);
  static Tensor vec(std::vector<double> xs);

  size_t size() const { return v.size(); }
  size_t dim(size_t i) const { return shape[i]; }
  double& operator[](size_t i) { return v[i]; }
  double operator[](size_t i) const { return v[i]; }
};

size_t shape_size(const std::vector<size_t>& shape);

// A learnable tensor with its Adam state.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;      // accumulated across a batch, zeroed by the caller
  Tensor adam_m;
  Tensor adam_v;

  explicit Parameter(std::string n = {}, Tensor init = {});
  void zero_grad();
};

class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor init);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) != 0; }
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  size_t total_values() const;
  void zero_grads();

 private:
  std::map<std::string, Parameter> params_;  // ordered for determinism
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update; `step` counts from 1.
void adam_step(std::vector<Parameter*> params, const AdamConfig& cfg,
               int64_t step);

// --- reverse-mode tape ----------------------------------------------------

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& val() const;
};

class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad = false);
  // Leaf bound to a Parameter; repeated calls return the same Var.
  Var param(Parameter& p);

  // elementwise
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var affine(Var a, double mul, double add);  // mul * a + add
  Var scale(Var a, double c) { return affine(a, c, 0.0); }
  Var relu(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  Var log(Var a);

  // shape / structure
  Var reshape(Var a, std::vector<size_t> shape);
  Var concat(const std::vector<Var>& parts);  // 1-D concatenation
  Var slice(Var a, size_t start, size_t len);  // 1-D
  Var pick(Var a, size_t i) { return slice(a, i, 1); }

  // linear algebra
  Var matmul(Var a, Var b);               // (m,k) x (k,n)
  Var matmul_tb(Var a, Var b);            // (m,k) x (n,k)^T -> (m,n)
  Var linear(Var w, Var x, Var b);        // (out,in) * (in) + (out)
  Var softmax_rows(Var a);                // vector or matrix, per row
  Var sum(Var a);                         // -> scalar {1}
  Var mean(Var a);

  // nn
  Var conv2d(Var x, Var w, Var b, int stride, int pad);  // x:(H,W,Ci) w:(kh,kw,Ci,Co)
  Var maxpool2(Var x);                                   // 2x2, stride 2

  // Runs reverse-mode accumulation from a scalar loss, then adds every
  // bound parameter's gradient into Parameter::grad.
  void backward(Var loss);
  const Tensor& value(Var v) const;
  const Tensor& gradient(Var v) const;  // valid after backward

  size_t node_count() const { return nodes_.size(); }

 private:
  friend struct Var;
  struct Node {
    Tensor val;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::function<void(Tape&)> back;  // may be empty (leaf)
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<Parameter*, int>> bound_params_;
  bool backward_done_ = false;

  int push(Tensor value, bool requires_grad, std::function<void(Tape&)> back);
  Tensor& grad_buf(int id);
  void add_grad(int id, const Tensor& g);
  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
};

// --- composite layers -------------------------------------------------------

// Residual single-head self-attention over an (N,C) matrix with CxC
// projections: m + softmax(Q K^T / sqrt(C)) V.
Var attention(Tape& t, Var m, Var wq, Var wk, Var wv);

struct GruVars {
  Var wz, bz, wr, br, wh, bh;  // each W: (hidden, in+hidden)
};

// z = sig(Wz[x;h]+bz), r = sig(Wr[x;h]+br), htil = tanh(Wh[x;r*h]+bh),
// h' = (1-z)*h + z*htil.
Var gru_step(Tape& t, Var h, Var x, const GruVars& g);

struct LstmVars {
  Var wi, bi, wf, bf, wo, bo, wg, bg;  // each W: (hidden, in+hidden)
};

struct LstmState {
  Var h, c;
};

LstmState lstm_step(Tape& t, LstmState s, Var x, const LstmVars& p);

// Concatenation of the final forward and final backward hidden states.
Var bilstm_encode(Tape& t, const std::vector<Var>& seq, const LstmVars& fwd,
                  const LstmVars& bwd, size_t hidden);

// KL(q || p) for in-graph categorical vectors (strictly positive entries).
Var categorical_kl_var(Tape& t, Var q, Var p);

// Negative log density of a bivariate Gaussian parameterized by mean {2},
// log_sigma {2} and an unbounded correlation (rho = 0.99 * tanh(rho_raw)),
// evaluated at the constant point y.
Var bvn_nll_var(Tape& t, const double y[2], Var mean, Var log_sigma,
                Var rho_raw);

// --- plain (non-tape) distributions ----------------------------------------

struct Categorical {
  std::vector<double> probs;
};

struct BivariateGaussian {
  double mean[2] = {0.0, 0.0};
  double cov[2][2] = {{1.0, 0.0}, {0.0, 1.0}};
};

class InfiniteKlError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// sum_k q_k (ln q_k - ln p_k), with 0 ln 0 := 0. Throws InfiniteKlError when
// q puts mass where p has none.
double categorical_kl(const Categorical& q, const Categorical& p);

// -ln N(y; mu, Sigma) for a 2-D Gaussian. Throws std::domain_error for a
// non-positive-definite covariance.
double bvn_nll(const double y[2], const BivariateGaussian& g);

// --- checkpoint io ----------------------------------------------------------

// TNV2 container: named f64 tensors plus an opaque config blob, CRC32 trailer.
void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& config_json);
std::string load_checkpoint(const std::string& path, ParamStore& params);
std::string checkpoint_bytes(const ParamStore& params,
                             const std::string& config_json);

}  // namespace gridplan::ad
