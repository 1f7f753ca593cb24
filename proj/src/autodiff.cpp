#include "autodiff.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace gridplan::ad {

size_t shape_size(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<size_t> s, double fill)
    : shape(std::move(s)), v(shape_size(shape), fill) {}

Tensor Tensor::scalar(double x) {
  Tensor t({1});
  t.v[0] = x;
  return t;
}

Tensor Tensor::vec(std::vector<double> xs) {
  Tensor t;
  t.shape = {xs.size()};
  t.v = std::move(xs);
  return t;
}

Parameter::Parameter(std::string n, Tensor init)
    : name(std::move(n)),
      value(std::move(init)),
      grad(value.shape),
      adam_m(value.shape),
      adam_v(value.shape) {}

void Parameter::zero_grad() { std::fill(grad.v.begin(), grad.v.end(), 0.0); }

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  auto [it, inserted] = params_.emplace(name, Parameter(name, std::move(init)));
  if (!inserted) throw std::invalid_argument("duplicate parameter " + name);
  return it->second;
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::invalid_argument("unknown parameter " + name);
  return it->second;
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::invalid_argument("unknown parameter " + name);
  return it->second;
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& [_, p] : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParamStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (auto& [_, p] : params_) out.push_back(&p);
  return out;
}

size_t ParamStore::total_values() const {
  size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [_, p] : params_) p.zero_grad();
}

void adam_step(std::vector<Parameter*> params, const AdamConfig& cfg,
               int64_t step) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (Parameter* p : params) {
    for (size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      p->adam_m[i] = cfg.beta1 * p->adam_m[i] + (1.0 - cfg.beta1) * g;
      p->adam_v[i] = cfg.beta2 * p->adam_v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = p->adam_m[i] / bc1;
      const double vhat = p->adam_v[i] / bc2;
      p->value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// --- tape -------------------------------------------------------------------

const Tensor& Var::val() const { return tape->value(*this); }

int Tape::push(Tensor value, bool requires_grad,
               std::function<void(Tape&)> back) {
  Node n;
  n.val = std::move(value);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size() - 1);
}

Tensor& Tape::grad_buf(int id) {
  Node& n = node(id);
  if (!n.has_grad) {
    n.grad = Tensor(n.val.shape);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::add_grad(int id, const Tensor& g) {
  Tensor& buf = grad_buf(id);
  for (size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

const Tensor& Tape::value(Var v) const {
  return nodes_[static_cast<size_t>(v.id)].val;
}

const Tensor& Tape::gradient(Var v) const {
  const Node& n = nodes_[static_cast<size_t>(v.id)];
  if (!n.has_grad)
    throw std::logic_error("gradient requested before backward touched node");
  return n.grad;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  return Var{this, push(std::move(value), requires_grad, nullptr)};
}

Var Tape::param(Parameter& p) {
  for (const auto& [bp, id] : bound_params_)
    if (bp == &p) return Var{this, id};
  Var v = leaf(p.value, /*requires_grad=*/true);
  bound_params_.emplace_back(&p, v.id);
  return v;
}

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape)
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}
}  // namespace

Var Tape::add(Var a, Var b) {
  check_same_shape(value(a), value(b), "add");
  Tensor out = value(a);
  const Tensor& bv = value(b);
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  bool rg = node(a.id).requires_grad || node(b.id).requires_grad;
  int self = push(std::move(out), rg, nullptr);
  if (rg)
    node(self).back = [a, b, self](Tape& t) {
      const Tensor& g = t.node(self).grad;
      if (t.node(a.id).requires_grad) t.add_grad(a.id, g);
      if (t.node(b.id).requires_grad) t.add_grad(b.id, g);
    };
  return Var{this, self};
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(value(a), value(b), "sub");
  Tensor out = value(a);
  const Tensor& bv = value(b);
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  bool rg = node(a.id).requires_grad || node(b.id).requires_grad;
  int self = push(std::move(out), rg, nullptr);
  if (rg)
    node(self).back = [a, b, self](Tape& t) {
      const Tensor& g = t.node(self).grad;
      if (t.node(a.id).requires_grad) t.add_grad(a.id, g);
      if (t.node(b.id).requires_grad) {
        Tensor neg = g;
        for (double& x : neg.v) x = -x;
        t.add_grad(b.id, neg);
      }
    };
  return Var{this, self};
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(value(a), value(b), "mul");
  Tensor out = value(a);
  const Tensor& bv = value(b);
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  bool rg = node(a.id).requires_grad || node(b.id).requires_grad;
  int self = push(std::move(out), rg, nullptr);
  if (rg)
    node(self).back = [a, b, self](Tape& t) {
      const Tensor& g = t.node(self).grad;
      const Tensor& av = t.value(a);
      const Tensor& bv2 = t.value(b);
      if (t.node(a.id).requires_grad) {
        Tensor ga(av.shape);
        for (size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] * bv2[i];
        t.add_grad(a.id, ga);
      }
      if (t.node(b.id).requires_grad) {
        Tensor gb(bv2.shape);
        for (size_t i = 0; i < gb.size(); ++i) gb[i] = g[i] * av[i];
        t.add_grad(b.id, gb);
      }
    };
  return Var{this, self};
}

Var Tape::div(Var a, Var b) {
  check_same_shape(value(a), value(b), "div");
  Tensor out = value(a);
  const Tensor& bv = value(b);
  for (size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
  bool rg = node(a.id).requires_grad || node(b.id).requires_grad;
  int self = push(std::move(out), rg, nullptr);
  if (rg)
    node(self).back = [a, b, self](Tape& t) {
      const Tensor& g = t.node(self).grad;
      const Tensor& av = t.value(a);
      const Tensor& bv2 = t.value(b);
      if (t.node(a.id).requires_grad) {
        Tensor ga(av.shape);
        for (size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] / bv2[i];
        t.add_grad(a.id, ga);
      }
      if (t.node(b.id).requires_grad) {
        Tensor gb(bv2.shape);
        for (size_t i = 0; i < gb.size(); ++i)
          gb[i] = -g[i] * av[i] / (bv2[i] * bv2[i]);
        t.add_grad(b.id, gb);
      }
    };
  return Var{this, self};
}

Var Tape::affine(Var a, double m, double c) {
  Tensor out = value(a);
  for (double& x : out.v) x = m * x + c;
  bool rg = node(a.id).requires_grad;
  int self = push(std::move(out), rg, nullptr);
  if (rg)
    node(self).back = [a, m, self](Tape& t) {
      const Tensor& g = t.node(self).grad;
      Tensor ga(g.shape);
      for (size_t i = 0; i < ga.size(); ++i) ga[i] = m * g[i];
      t.add_grad(a.id, ga);
    };
  return Var{this, self};
}

Var Tape::relu(Var a) {
  Tensor out = value(a);
  for (double& x : out.v) x = x > 0.0 ? x : 0.0;
  bool rg = node(a.id).requires_grad;
  int self = push(std::move(out), rg, nullptr);
  if (rg)
    node(self).back = [a, self](Tape& t) {
      const Tensor& g = t.node(self).grad;
      const Tensor& av = t.value(a);
      Tensor ga(av.shape);
      for (size_t i = 0; i < ga.size(); ++i)
        ga[i] = av[i] > 0.0 ? g[i] : 0.0;
      t.add_grad(a.id, ga);
    };
  return Var{this, self};
}

Var Tape::tanh(Var a) {
  Tensor out = value(a);
  for (double& x : out.v) x = std::tanh(x);
  bool rg = node(a.id).requires_grad;
  int self = push(std::move(out), rg, nullptr);
  if (rg)
    node(self).back = [a, self](Tape& t) {
      const Tensor& g = t.node(self).grad;
      const Tensor& ov = t.node(self).val;
      Tensor ga(ov.shape);
      for (size_t i = 0; i < ga.size(); ++i)
        ga[i] = g[i] * (1.0 - ov[i] * ov[i]);
      t.add_grad(a.id, ga);
    };
  return Var{this, self};
}

Var Tape::sigmoid(Var a) {
  Tensor out = value(a);
  for (double& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
  bool rg = node(a.id).requires_grad;
  int self = push(std::move(out), rg, nullptr);
  if (rg)
    node(self).back = [a, self](Tape& t) {
      const Tensor& g = t.node(self).grad;
      const Tensor& ov = t.node(self).val;
      Tensor ga(ov.shape);
      for (size_t i = 0; i < ga.size(); ++i)
        ga[i] = g[i] * ov[i] * (1.0 - ov[i]);
      t.add_grad(a.id, ga);
    };
  return Var{this, self};
}

Var Tape::exp(Var a) {
  Tensor out = value(a);
  for (double& x : out.v) x = std::exp(x);
  bool rg = node(a.id).requires_grad;
  int self = push(std::move(out), rg, nullptr);
  if (rg)
    node(self).back = [a, self](Tape& t) {
      const Tensor& g = t.node(self).grad;
      const Tensor& ov = t.node(self).val;
      Tensor ga(ov.shape);
      for (size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] * ov[i];
      t.add_grad(a.id, ga);
    };
  return Var{this, self};
}

Var Tape::log(Var a) {
  Tensor out = value(a);
  for (double& x : out.v) x = std::log(x);
  bool rg = node(a.id).requires_grad;
  int self = push(std::move(out), rg, nullptr);
  if (rg)
    node(self).back = [a, self](Tape& t) {
      const Tensor& g = t.node(self).grad;
      const Tensor& av = t.value(a);
      Tensor ga(av.shape);
      for (size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] / av[i];
      t.add_grad(a.id, ga);
    };
  return Var{this, self};
}

Var Tape::reshape(Var a, std::vector<size_t> shape) {
  if (shape_size(shape) != value(a).size())
    throw std::invalid_argument("reshape: size mismatch");
  Tensor out = value(a);
  out.shape = std::move(shape);
  bool rg = node(a.id).requires_grad;
  int self = push(std::move(out), rg, nullptr);
  if (rg)
    node(self).back = [a, self](Tape& t) {
      Tensor g = t.node(self).grad;
      g.shape = t.value(a).shape;
      t.add_grad(a.id, g);
    };
  return Var{this, self};
}

Var Tape::concat(const std::vector<Var>& parts) {
  size_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    total += value(p).size();
    rg = rg || node(p.id).requires_grad;
  }
  Tensor out({total});
  size_t off = 0;
  for (Var p : parts) {
    const Tensor& pv = value(p);
    std::copy(pv.v.begin(), pv.v.end(), out.v.begin() + off);
    off += pv.size();
  }
  int self = push(std::move(out), rg, nullptr);
  if (rg) {
    std::vector<Var> ps = parts;
    node(self).back = [ps, self](Tape& t) {
      const Tensor& g = t.node(self).grad;
      size_t o = 0;
      for (Var p : ps) {
        const size_t n = t.value(p).size();
        if (t.node(p.id).requires_grad) {
          Tensor gp(t.value(p).shape);
          std::copy(g.v.begin() + o, g.v.begin() + o + n, gp.v.begin());
          t.add_grad(p.id, gp);
        }
        o += n;
      }
    };
  }
  return Var{this, self};
}

Var Tape::slice(Var a, size_t start, size_t len) {
  const Tensor& av = value(a);
  if (start + len > av.size())
    throw std::invalid_argument("slice: out of range");
  Tensor out({len});
  std::copy(av.v.begin() + start, av.v.begin() + start + len, out.v.begin());
  bool rg = node(a.id).requires_grad;
  int self = push(std::move(out), rg, nullptr);
  if (rg)
    node(self).back = [a, start, len, self](Tape& t) {
      const Tensor& g = t.node(self).grad;
      Tensor ga(t.value(a).shape);
      for (size_t i = 0; i < len; ++i) ga[start + i] = g[i];
      t.add_grad(a.id, ga);
    };
  return Var{this, self};
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.shape.size() != 2 || bv.shape.size() != 2 ||
      av.shape[1] != bv.shape[0])
    throw std::invalid_argument("matmul: bad shapes");
  const size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  Tensor out({m, n});
  for (size_t i = 0; i < m; ++i)
    for (size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      for (size_t j = 0; j < n; ++j) out[i * n + j] += x * bv[p * n + j];
    }
  bool rg = node(a.id).requires_grad || node(b.id).requires_grad;
  int self = push(std::move(out), rg, nullptr);
  if (rg)
    node(self).back = [a, b, m, k, n, self](Tape& t) {
      const Tensor& g = t.node(self).grad;
      const Tensor& av2 = t.value(a);
      const Tensor& bv2 = t.value(b);
      if (t.node(a.id).requires_grad) {
        Tensor ga({m, k});
        for (size_t i = 0; i < m; ++i)
          for (size_t j = 0; j < n; ++j) {
            const double gi = g[i * n + j];
            for (size_t p = 0; p < k; ++p)
              ga[i * k + p] += gi * bv2[p * n + j];
          }
        t.add_grad(a.id, ga);
      }
      if (t.node(b.id).requires_grad) {
        Tensor gb({k, n});
        for (size_t i = 0; i < m; ++i)
          for (size_t p = 0; p < k; ++p) {
            const double x = av2[i * k + p];
            for (size_t j = 0; j < n; ++j)
              gb[p * n + j] += x * g[i * n + j];
          }
        t.add_grad(b.id, gb);
      }
    };
  return Var{this, self};
}

Var Tape::matmul_tb(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.shape.size() != 2 || bv.shape.size() != 2 ||
      av.shape[1] != bv.shape[1])
    throw std::invalid_argument("matmul_tb: bad shapes");
  const size_t m = av.shape[0], k = av.shape[1], n = bv.shape[0];
  Tensor out({m, n});
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (size_t p = 0; p < k; ++p) acc += av[i * k + p] * bv[j * k + p];
      out[i * n + j] = acc;
    }
  bool rg = node(a.id).requires_grad || node(b.id).requires_grad;
  int self = push(std::move(out), rg, nullptr);
  if (rg)
    node(self).back = [a, b, m, k, n, self](Tape& t) {
      const Tensor& g = t.node(self).grad;
      const Tensor& av2 = t.value(a);
      const Tensor& bv2 = t.value(b);
      if (t.node(a.id).requires_grad) {
        Tensor ga({m, k});
        for (size_t i = 0; i < m; ++i)
          for (size_t j = 0; j < n; ++j) {
            const double gi = g[i * n + j];
            for (size_t p = 0; p < k; ++p)
              ga[i * k + p] += gi * bv2[j * k + p];
          }
        t.add_grad(a.id, ga);
      }
      if (t.node(b.id).requires_grad) {
        Tensor gb({n, k});
        for (size_t i = 0; i < m; ++i)
          for (size_t j = 0; j < n; ++j) {
            const double gi = g[i * n + j];
            for (size_t p = 0; p < k; ++p)
              gb[j * k + p] += gi * av2[i * k + p];
          }
        t.add_grad(b.id, gb);
      }
    };
  return Var{this, self};
}

Var Tape::linear(Var w, Var x, Var b) {
  const Tensor& wv = value(w);
  const Tensor& xv = value(x);
  const Tensor& bv = value(b);
  if (wv.shape.size() != 2 || xv.shape.size() != 1 || bv.shape.size() != 1 ||
      wv.shape[1] != xv.shape[0] || wv.shape[0] != bv.shape[0])
    throw std::invalid_argument("linear: bad shapes");
  const size_t out_n = wv.shape[0], in_n = wv.shape[1];
  Tensor out({out_n});
  for (size_t o = 0; o < out_n; ++o) {
    double acc = bv[o];
    const double* wrow = wv.v.data() + o * in_n;
    for (size_t i = 0; i < in_n; ++i) acc += wrow[i] * xv[i];
    out[o] = acc;
  }
  bool rg = node(w.id).requires_grad || node(x.id).requires_grad ||
            node(b.id).requires_grad;
  int self = push(std::move(out), rg, nullptr);
  if (rg)
    node(self).back = [w, x, b, out_n, in_n, self](Tape& t) {
      const Tensor& g = t.node(self).grad;
      const Tensor& wv2 = t.value(w);
      const Tensor& xv2 = t.value(x);
      if (t.node(w.id).requires_grad) {
        Tensor gw({out_n, in_n});
        for (size_t o = 0; o < out_n; ++o)
          for (size_t i = 0; i < in_n; ++i)
            gw[o * in_n + i] = g[o] * xv2[i];
        t.add_grad(w.id, gw);
      }
      if (t.node(x.id).requires_grad) {
        Tensor gx({in_n});
        for (size_t o = 0; o < out_n; ++o) {
          const double* wrow = wv2.v.data() + o * in_n;
          for (size_t i = 0; i < in_n; ++i) gx[i] += g[o] * wrow[i];
        }
        t.add_grad(x.id, gx);
      }
      if (t.node(b.id).requires_grad) {
        Tensor gb({out_n});
        for (size_t o = 0; o < out_n; ++o) gb[o] = g[o];
        t.add_grad(b.id, gb);
      }
    };
  return Var{this, self};
}

Var Tape::softmax_rows(Var a) {
  const Tensor& av = value(a);
  size_t rows = 1, cols = av.size();
  if (av.shape.size() == 2) {
    rows = av.shape[0];
    cols = av.shape[1];
  } else if (av.shape.size() != 1) {
    throw std::invalid_argument("softmax_rows: need vector or matrix");
  }
  Tensor out = av;
  for (size_t r = 0; r < rows; ++r) {
    double* row = out.v.data() + r * cols;
    double mx = row[0];
    for (size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (size_t j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (size_t j = 0; j < cols; ++j) row[j] /= sum;
  }
  bool rg = node(a.id).requires_grad;
  int self = push(std::move(out), rg, nullptr);
  if (rg)
    node(self).back = [a, rows, cols, self](Tape& t) {
      const Tensor& g = t.node(self).grad;
      const Tensor& s = t.node(self).val;
      Tensor ga(t.value(a).shape);
      for (size_t r = 0; r < rows; ++r) {
        const double* gr = g.v.data() + r * cols;
        const double* sr = s.v.data() + r * cols;
        double dot = 0.0;
        for (size_t j = 0; j < cols; ++j) dot += gr[j] * sr[j];
        double* out_r = ga.v.data() + r * cols;
        for (size_t j = 0; j < cols; ++j) out_r[j] = sr[j] * (gr[j] - dot);
      }
      t.add_grad(a.id, ga);
    };
  return Var{this, self};
}

Var Tape::sum(Var a) {
  const Tensor& av = value(a);
  double s = 0.0;
  for (double x : av.v) s += x;
  bool rg = node(a.id).requires_grad;
  int self = push(Tensor::scalar(s), rg, nullptr);
  if (rg)
    node(self).back = [a, self](Tape& t) {
      const double g = t.node(self).grad[0];
      Tensor ga(t.value(a).shape, g);
      t.add_grad(a.id, ga);
    };
  return Var{this, self};
}

Var Tape::mean(Var a) {
  return scale(sum(a), 1.0 / static_cast<double>(value(a).size()));
}

Var Tape::conv2d(Var x, Var w, Var b, int stride, int pad) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  if (xv.shape.size() != 3 || wv.shape.size() != 4 || bv.shape.size() != 1)
    throw std::invalid_argument("conv2d: bad ranks");
  const int H = static_cast<int>(xv.shape[0]);
  const int W = static_cast<int>(xv.shape[1]);
  const int Ci = static_cast<int>(xv.shape[2]);
  const int kh = static_cast<int>(wv.shape[0]);
  const int kw = static_cast<int>(wv.shape[1]);
  const int Co = static_cast<int>(wv.shape[3]);
  if (static_cast<int>(wv.shape[2]) != Ci ||
      static_cast<int>(bv.shape[0]) != Co)
    throw std::invalid_argument("conv2d: channel mismatch");
  const int OH = (H + 2 * pad - kh) / stride + 1;
  const int OW = (W + 2 * pad - kw) / stride + 1;
  if (OH <= 0 || OW <= 0) throw std::invalid_argument("conv2d: empty output");

  Tensor out({static_cast<size_t>(OH), static_cast<size_t>(OW),
              static_cast<size_t>(Co)});
  for (int oh = 0; oh < OH; ++oh)
    for (int ow = 0; ow < OW; ++ow) {
      double* orow = out.v.data() + (static_cast<size_t>(oh) * OW + ow) * Co;
      for (int co = 0; co < Co; ++co) orow[co] = bv[static_cast<size_t>(co)];
      for (int dh = 0; dh < kh; ++dh) {
        const int ih = oh * stride - pad + dh;
        if (ih < 0 || ih >= H) continue;
        for (int dw = 0; dw < kw; ++dw) {
          const int iw = ow * stride - pad + dw;
          if (iw < 0 || iw >= W) continue;
          const double* xrow =
              xv.v.data() + (static_cast<size_t>(ih) * W + iw) * Ci;
          const double* wrow =
              wv.v.data() + ((static_cast<size_t>(dh) * kw + dw) * Ci) * Co;
          for (int ci = 0; ci < Ci; ++ci) {
            const double xval = xrow[ci];
            const double* wp = wrow + static_cast<size_t>(ci) * Co;
            for (int co = 0; co < Co; ++co) orow[co] += xval * wp[co];
          }
        }
      }
    }
  bool rg = node(x.id).requires_grad || node(w.id).requires_grad ||
            node(b.id).requires_grad;
  int self = push(std::move(out), rg, nullptr);
  if (rg)
    node(self).back = [x, w, b, H, W, Ci, kh, kw, Co, OH, OW, stride, pad,
                       self](Tape& t) {
      const Tensor& g = t.node(self).grad;
      const Tensor& xv2 = t.value(x);
      const Tensor& wv2 = t.value(w);
      const bool need_x = t.node(x.id).requires_grad;
      const bool need_w = t.node(w.id).requires_grad;
      const bool need_b = t.node(b.id).requires_grad;
      Tensor gx = need_x ? Tensor(xv2.shape) : Tensor();
      Tensor gw = need_w ? Tensor(wv2.shape) : Tensor();
      Tensor gb = need_b ? Tensor({static_cast<size_t>(Co)}) : Tensor();
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          const double* grow =
              g.v.data() + (static_cast<size_t>(oh) * OW + ow) * Co;
          if (need_b)
            for (int co = 0; co < Co; ++co) gb[static_cast<size_t>(co)] += grow[co];
          for (int dh = 0; dh < kh; ++dh) {
            const int ih = oh * stride - pad + dh;
            if (ih < 0 || ih >= H) continue;
            for (int dw = 0; dw < kw; ++dw) {
              const int iw = ow * stride - pad + dw;
              if (iw < 0 || iw >= W) continue;
              const size_t xoff = (static_cast<size_t>(ih) * W + iw) * Ci;
              const size_t woff =
                  ((static_cast<size_t>(dh) * kw + dw) * Ci) * Co;
              for (int ci = 0; ci < Ci; ++ci) {
                const double* wp = wv2.v.data() + woff + static_cast<size_t>(ci) * Co;
                double acc = 0.0;
                for (int co = 0; co < Co; ++co) acc += grow[co] * wp[co];
                if (need_x) gx[xoff + static_cast<size_t>(ci)] += acc;
                if (need_w) {
                  const double xval = xv2[xoff + static_cast<size_t>(ci)];
                  double* gwp = gw.v.data() + woff + static_cast<size_t>(ci) * Co;
                  for (int co = 0; co < Co; ++co) gwp[co] += xval * grow[co];
                }
              }
            }
          }
        }
      if (need_x) t.add_grad(x.id, gx);
      if (need_w) t.add_grad(w.id, gw);
      if (need_b) t.add_grad(b.id, gb);
    };
  return Var{this, self};
}

Var Tape::maxpool2(Var x) {
  const Tensor& xv = value(x);
  if (xv.shape.size() != 3) throw std::invalid_argument("maxpool2: bad rank");
  const int H = static_cast<int>(xv.shape[0]);
  const int W = static_cast<int>(xv.shape[1]);
  const int C = static_cast<int>(xv.shape[2]);
  const int OH = H / 2, OW = W / 2;
  if (OH == 0 || OW == 0) throw std::invalid_argument("maxpool2: too small");
  Tensor out({static_cast<size_t>(OH), static_cast<size_t>(OW),
              static_cast<size_t>(C)});
  std::vector<size_t> argmax(out.size());
  for (int oh = 0; oh < OH; ++oh)
    for (int ow = 0; ow < OW; ++ow)
      for (int c = 0; c < C; ++c) {
        double best = -1e300;
        size_t best_i = 0;
        for (int dh = 0; dh < 2; ++dh)
          for (int dw = 0; dw < 2; ++dw) {
            size_t i =
                (static_cast<size_t>(2 * oh + dh) * W + (2 * ow + dw)) * C + c;
            if (xv[i] > best) {
              best = xv[i];
              best_i = i;
            }
          }
        size_t o = (static_cast<size_t>(oh) * OW + ow) * C + c;
        out[o] = best;
        argmax[o] = best_i;
      }
  bool rg = node(x.id).requires_grad;
  int self = push(std::move(out), rg, nullptr);
  if (rg)
    node(self).back = [x, argmax, self](Tape& t) {
      const Tensor& g = t.node(self).grad;
      Tensor gx(t.value(x).shape);
      for (size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
      t.add_grad(x.id, gx);
    };
  return Var{this, self};
}

void Tape::backward(Var loss) {
  if (backward_done_) throw std::logic_error("backward already run");
  if (value(loss).size() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  backward_done_ = true;
  grad_buf(loss.id)[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.has_grad && n.back) n.back(*this);
  }
  for (const auto& [p, id] : bound_params_) {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.has_grad) continue;
    for (size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += n.grad[i];
  }
}

// --- composite layers --------------------------------------------------------

Var attention(Tape& t, Var m, Var wq, Var wk, Var wv) {
  const size_t C = m.val().shape[1];
  Var q = t.matmul(m, wq);
  Var k = t.matmul(m, wk);
  Var v = t.matmul(m, wv);
  Var scores = t.scale(t.matmul_tb(q, k), 1.0 / std::sqrt(double(C)));
  Var a = t.softmax_rows(scores);
  return t.add(m, t.matmul(a, v));
}

Var gru_step(Tape& t, Var h, Var x, const GruVars& g) {
  Var xh = t.concat({x, h});
  Var z = t.sigmoid(t.linear(g.wz, xh, g.bz));
  Var r = t.sigmoid(t.linear(g.wr, xh, g.br));
  Var xrh = t.concat({x, t.mul(r, h)});
  Var htil = t.tanh(t.linear(g.wh, xrh, g.bh));
  return t.add(t.mul(t.affine(z, -1.0, 1.0), h), t.mul(z, htil));
}

LstmState lstm_step(Tape& t, LstmState s, Var x, const LstmVars& p) {
  Var xh = t.concat({x, s.h});
  Var i = t.sigmoid(t.linear(p.wi, xh, p.bi));
  Var f = t.sigmoid(t.linear(p.wf, xh, p.bf));
  Var o = t.sigmoid(t.linear(p.wo, xh, p.bo));
  Var g = t.tanh(t.linear(p.wg, xh, p.bg));
  Var c = t.add(t.mul(f, s.c), t.mul(i, g));
  Var h = t.mul(o, t.tanh(c));
  return {h, c};
}

Var bilstm_encode(Tape& t, const std::vector<Var>& seq, const LstmVars& fwd,
                  const LstmVars& bwd, size_t hidden) {
  LstmState sf{t.leaf(Tensor({hidden})), t.leaf(Tensor({hidden}))};
  for (const Var& x : seq) sf = lstm_step(t, sf, x, fwd);
  LstmState sb{t.leaf(Tensor({hidden})), t.leaf(Tensor({hidden}))};
  for (auto it = seq.rbegin(); it != seq.rend(); ++it)
    sb = lstm_step(t, sb, *it, bwd);
  return t.concat({sf.h, sb.h});
}

Var categorical_kl_var(Tape& t, Var q, Var p) {
  return t.sum(t.mul(q, t.sub(t.log(q), t.log(p))));
}

Var bvn_nll_var(Tape& t, const double y[2], Var mean, Var log_sigma,
                Var rho_raw) {
  Var yv = t.leaf(Tensor::vec({y[0], y[1]}));
  Var d = t.sub(yv, mean);
  Var sigma = t.exp(log_sigma);
  Var rho = t.scale(t.tanh(rho_raw), 0.99);
  Var one_minus_r2 = t.affine(t.mul(rho, rho), -1.0, 1.0);
  Var dn = t.div(d, sigma);
  Var s2 = t.sum(t.mul(dn, dn));
  Var cross = t.scale(t.mul(rho, t.mul(t.pick(dn, 0), t.pick(dn, 1))), 2.0);
  Var quad = t.div(t.sub(s2, cross), one_minus_r2);
  Var logdet_half =
      t.add(t.sum(log_sigma), t.scale(t.log(one_minus_r2), 0.5));
  Var c = t.leaf(Tensor::scalar(std::log(2.0 * std::numbers::pi)));
  return t.add(t.scale(quad, 0.5), t.add(logdet_half, c));
}

// --- plain distributions -----------------------------------------------------

double categorical_kl(const Categorical& q, const Categorical& p) {
  if (q.probs.size() != p.probs.size())
    throw std::invalid_argument("categorical_kl: size mismatch");
  double kl = 0.0;
  for (size_t k = 0; k < q.probs.size(); ++k) {
    if (q.probs[k] <= 0.0) continue;  // 0 ln 0 := 0
    if (p.probs[k] <= 0.0)
      throw InfiniteKlError("q has mass where p is zero (k=" +
                            std::to_string(k) + ")");
    kl += q.probs[k] * (std::log(q.probs[k]) - std::log(p.probs[k]));
  }
  return kl;
}

double bvn_nll(const double y[2], const BivariateGaussian& g) {
  const double a = g.cov[0][0], b = g.cov[0][1], c = g.cov[1][0],
               d = g.cov[1][1];
  if (std::abs(b - c) > 1e-12)
    throw std::domain_error("bvn_nll: covariance not symmetric");
  const double det = a * d - b * c;
  if (det <= 0.0 || a <= 0.0)
    throw std::domain_error("bvn_nll: covariance not positive definite");
  const double dx = y[0] - g.mean[0];
  const double dy = y[1] - g.mean[1];
  // inverse of [[a,b],[b,d]] is 1/det [[d,-b],[-b,a]]
  const double quad = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
  return 0.5 * quad + 0.5 * std::log(det) + std::log(2.0 * std::numbers::pi);
}

// --- checkpoint io -------------------------------------------------------------

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& data, size_t& pos) {
  if (pos + sizeof(T) > data.size())
    throw std::runtime_error("checkpoint: truncated");
  T v;
  std::memcpy(&v, data.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

constexpr uint8_t kDtypeF64 = 0;
constexpr uint8_t kDtypeU8 = 1;

void put_entry(std::string& out, const std::string& name, uint8_t dtype,
               const std::vector<size_t>& shape, const char* data,
               size_t bytes) {
  put<uint32_t>(out, static_cast<uint32_t>(name.size()));
  out += name;
  put<uint8_t>(out, dtype);
  put<uint32_t>(out, static_cast<uint32_t>(shape.size()));
  for (size_t d : shape) put<uint64_t>(out, static_cast<uint64_t>(d));
  out.append(data, bytes);
}

}  // namespace

std::string checkpoint_bytes(const ParamStore& params,
                             const std::string& config_json) {
  std::string out = "TNV2";
  put<uint32_t>(out, 1);  // version
  auto all = params.all();
  put<uint32_t>(out, static_cast<uint32_t>(all.size() + 1));
  put_entry(out, "__config__", kDtypeU8, {config_json.size()},
            config_json.data(), config_json.size());
  for (const Parameter* p : all)
    put_entry(out, p->name, kDtypeF64, p->value.shape,
              reinterpret_cast<const char*>(p->value.v.data()),
              p->value.size() * sizeof(double));
  uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(out.data()),
            static_cast<uInt>(out.size())));
  put<uint32_t>(out, crc);
  return out;
}

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& config_json) {
  std::string bytes = checkpoint_bytes(params, config_json);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string load_checkpoint(const std::string& path, ParamStore& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  if (data.size() < 16 || data.compare(0, 4, "TNV2") != 0)
    throw std::runtime_error("checkpoint: bad magic");
  const size_t body = data.size() - 4;
  uint32_t expect;
  std::memcpy(&expect, data.data() + body, 4);
  uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data.data()),
            static_cast<uInt>(body)));
  if (crc != expect) throw std::runtime_error("checkpoint: CRC mismatch");

  size_t pos = 4;
  uint32_t version = get<uint32_t>(data, pos);
  if (version != 1) throw std::runtime_error("checkpoint: bad version");
  uint32_t count = get<uint32_t>(data, pos);
  std::string config;
  for (uint32_t e = 0; e < count; ++e) {
    uint32_t name_len = get<uint32_t>(data, pos);
    if (pos + name_len > body) throw std::runtime_error("checkpoint: truncated");
    std::string name = data.substr(pos, name_len);
    pos += name_len;
    uint8_t dtype = get<uint8_t>(data, pos);
    uint32_t ndim = get<uint32_t>(data, pos);
    std::vector<size_t> shape;
    for (uint32_t i = 0; i < ndim; ++i)
      shape.push_back(static_cast<size_t>(get<uint64_t>(data, pos)));
    const size_t n = shape_size(shape);
    if (dtype == kDtypeU8) {
      if (pos + n > body) throw std::runtime_error("checkpoint: truncated");
      if (name == "__config__") config = data.substr(pos, n);
      pos += n;
    } else if (dtype == kDtypeF64) {
      if (pos + n * 8 > body) throw std::runtime_error("checkpoint: truncated");
      Tensor t(shape);
      std::memcpy(t.v.data(), data.data() + pos, n * 8);
      pos += n * 8;
      if (params.has(name)) {
        Parameter& p = params.get(name);
        if (p.value.shape != t.shape)
          throw std::runtime_error("checkpoint: shape mismatch for " + name);
        p.value = std::move(t);
      } else {
        params.add(name, std::move(t));
      }
    } else {
      throw std::runtime_error("checkpoint: unknown dtype");
    }
  }
  return config;
}

}  // namespace gridplan::ad
