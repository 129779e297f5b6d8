#include "tspkit/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tspkit::ad {

namespace {

// C += A(n,k) * B(k,m)
void mm_nn(double* C, const double* A, const double* B, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    double* c_row = C + static_cast<size_t>(i) * m;
    const double* a_row = A + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double a = a_row[p];
      const double* b_row = B + static_cast<size_t>(p) * m;
      for (int j = 0; j < m; ++j) c_row[j] += a * b_row[j];
    }
  }
}

// C += A(n,k) * B(m,k)^T
void mm_nt(double* C, const double* A, const double* B, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const double* a_row = A + static_cast<size_t>(i) * k;
    double* c_row = C + static_cast<size_t>(i) * m;
    for (int j = 0; j < m; ++j) {
      const double* b_row = B + static_cast<size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
      c_row[j] += acc;
    }
  }
}

// C(k,m) += A(n,k)^T * B(n,m)
void mm_tn(double* C, const double* A, const double* B, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const double* a_row = A + static_cast<size_t>(i) * k;
    const double* b_row = B + static_cast<size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      const double a = a_row[p];
      double* c_row = C + static_cast<size_t>(p) * m;
      for (int j = 0; j < m; ++j) c_row[j] += a * b_row[j];
    }
  }
}

}  // namespace

Tensor::Tensor(int r, int c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
  if (static_cast<size_t>(rows) * cols != data.size())
    throw std::invalid_argument("Tensor: value count does not match shape");
}

Tensor Tensor::row_vector(std::span<const double> values) {
  Tensor t;
  t.rows = 1;
  t.cols = static_cast<int>(values.size());
  t.data.assign(values.begin(), values.end());
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t(1, 1);
  t.data[0] = v;
  return t;
}

double Tensor::scalar_value() const {
  if (size() != 1) throw std::invalid_argument("Tensor: not a scalar");
  return data[0];
}

GradBuffer::GradBuffer(const ParameterStore& store) {
  tensors_.reserve(store.slot_count());
  for (int s = 0; s < store.slot_count(); ++s)
    tensors_.emplace_back(store.value(s).rows, store.value(s).cols);
}

void GradBuffer::zero() {
  for (Tensor& t : tensors_) std::fill(t.data.begin(), t.data.end(), 0.0);
}

void GradBuffer::add(const GradBuffer& other) {
  if (other.tensors_.size() != tensors_.size())
    throw std::invalid_argument("GradBuffer::add: layout mismatch");
  for (size_t s = 0; s < tensors_.size(); ++s)
    for (size_t i = 0; i < tensors_[s].data.size(); ++i)
      tensors_[s].data[i] += other.tensors_[s].data[i];
}

void GradBuffer::scale(double factor) {
  for (Tensor& t : tensors_)
    for (double& v : t.data) v *= factor;
}

double GradBuffer::global_norm() const {
  double sq = 0.0;
  for (const Tensor& t : tensors_)
    for (double v : t.data) sq += v * v;
  return std::sqrt(sq);
}

ParameterStore ParameterStore::init(std::span<const ParamSpec> specs, uint64_t seed) {
  ParameterStore store;
  Rng rng(seed);
  for (const ParamSpec& spec : specs) {
    if (spec.rows < 1 || spec.cols < 1)
      throw std::invalid_argument("init_parameters: non-positive shape for '" + spec.name + "'");
    if (store.index_.contains(spec.name))
      throw std::invalid_argument("init_parameters: duplicate name '" + spec.name + "'");
    Tensor t(spec.rows, spec.cols);
    if (spec.init == ParamInit::UniformFanIn) {
      const int fan_in = spec.rows > 1 ? spec.rows : spec.cols;
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (double& v : t.data) v = rng.uniform(-bound, bound);
    }
    store.add_slot(spec.name, std::move(t));
  }
  store.finalize_grads();
  return store;
}

int ParameterStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? -1 : it->second;
}

Tensor& ParameterStore::value(std::string_view name) {
  const int slot = find(name);
  if (slot < 0) throw std::invalid_argument("unknown parameter '" + std::string(name) + "'");
  return slots_[slot].value;
}

const Tensor& ParameterStore::value(std::string_view name) const {
  const int slot = find(name);
  if (slot < 0) throw std::invalid_argument("unknown parameter '" + std::string(name) + "'");
  return slots_[slot].value;
}

void ParameterStore::add_slot(const std::string& name, Tensor value) {
  if (index_.contains(name))
    throw std::invalid_argument("duplicate parameter name '" + name + "'");
  index_[name] = static_cast<int>(slots_.size());
  slots_.push_back({name, std::move(value)});
}

void Tape::check_finite(const Tensor& t, const char* op) const {
  for (double v : t.data)
    if (!std::isfinite(v))
      throw std::runtime_error(std::string("non-finite value produced by op '") + op + "'");
}

Value Tape::push(Tensor val, std::function<void()> back, int param_slot) {
  Node node;
  node.val = std::move(val);
  node.back = std::move(back);
  node.param_slot = param_slot;
  nodes_.push_back(std::move(node));
  const Node& n = nodes_.back();
  return Value{static_cast<int>(nodes_.size()) - 1, n.val.rows, n.val.cols};
}

Tensor& Tape::grad_of(int id) {
  Node& node = nodes_[id];
  if (node.grad.data.empty()) node.grad = Tensor(node.val.rows, node.val.cols);
  return node.grad;
}

Value Tape::input(Tensor t) {
  check_finite(t, "input");
  return push(std::move(t));
}

Value Tape::input(std::span<const double> row) { return input(Tensor::row_vector(row)); }

Value Tape::scalar_input(double v) { return input(Tensor::scalar(v)); }

Value Tape::param(int slot) {
  if (store_ == nullptr) throw std::invalid_argument("Tape::param: no parameter store bound");
  if (slot < 0 || slot >= store_->slot_count())
    throw std::invalid_argument("Tape::param: slot out of range");
  return push(store_->value(slot), nullptr, slot);
}

Value Tape::param(std::string_view name) {
  if (store_ == nullptr) throw std::invalid_argument("Tape::param: no parameter store bound");
  const int slot = store_->find(name);
  if (slot < 0)
    throw std::invalid_argument("Tape::param: unknown parameter '" + std::string(name) + "'");
  return param(slot);
}

Value Tape::matmul(Value a, Value b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
  Tensor out(a.rows, b.cols);
  mm_nn(out.data.data(), nodes_[a.id].val.data.data(), nodes_[b.id].val.data.data(), a.rows,
        a.cols, b.cols);
  check_finite(out, "matmul");
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), [this, a, b, out_id]() {
    const Tensor& g = nodes_[out_id].grad;
    // dA += g * B^T ; dB += A^T * g
    mm_nt(grad_of(a.id).data.data(), g.data.data(), nodes_[b.id].val.data.data(), a.rows,
          b.cols, a.cols);
    mm_tn(grad_of(b.id).data.data(), nodes_[a.id].val.data.data(), g.data.data(), a.rows,
          a.cols, b.cols);
  });
}

Value Tape::matmul_nt(Value a, Value b) {
  if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: inner dimensions differ");
  Tensor out(a.rows, b.rows);
  mm_nt(out.data.data(), nodes_[a.id].val.data.data(), nodes_[b.id].val.data.data(), a.rows,
        a.cols, b.rows);
  check_finite(out, "matmul_nt");
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), [this, a, b, out_id]() {
    const Tensor& g = nodes_[out_id].grad;
    // out = A * B^T: dA += g * B ; dB += g^T * A
    mm_nn(grad_of(a.id).data.data(), g.data.data(), nodes_[b.id].val.data.data(), a.rows,
          b.rows, a.cols);
    mm_tn(grad_of(b.id).data.data(), g.data.data(), nodes_[a.id].val.data.data(), a.rows,
          b.rows, a.cols);
  });
}

Value Tape::add(Value a, Value b) {
  if (a.rows != b.rows || a.cols != b.cols) throw std::invalid_argument("add: shape mismatch");
  Tensor out = nodes_[a.id].val;
  const Tensor& bv = nodes_[b.id].val;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), [this, a, b, out_id]() {
    const Tensor& g = nodes_[out_id].grad;
    Tensor& ga = grad_of(a.id);
    Tensor& gb = grad_of(b.id);
    for (size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] += g.data[i];
    }
  });
}

Value Tape::sub(Value a, Value b) {
  if (a.rows != b.rows || a.cols != b.cols) throw std::invalid_argument("sub: shape mismatch");
  Tensor out = nodes_[a.id].val;
  const Tensor& bv = nodes_[b.id].val;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), [this, a, b, out_id]() {
    const Tensor& g = nodes_[out_id].grad;
    Tensor& ga = grad_of(a.id);
    Tensor& gb = grad_of(b.id);
    for (size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] -= g.data[i];
    }
  });
}

Value Tape::mul(Value a, Value b) {
  if (a.rows != b.rows || a.cols != b.cols) throw std::invalid_argument("mul: shape mismatch");
  Tensor out = nodes_[a.id].val;
  const Tensor& bv = nodes_[b.id].val;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), [this, a, b, out_id]() {
    const Tensor& g = nodes_[out_id].grad;
    Tensor& ga = grad_of(a.id);
    Tensor& gb = grad_of(b.id);
    const Tensor& av = nodes_[a.id].val;
    const Tensor& bv2 = nodes_[b.id].val;
    for (size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] += g.data[i] * bv2.data[i];
      gb.data[i] += g.data[i] * av.data[i];
    }
  });
}

Value Tape::add_rowvec(Value m, Value v) {
  if (v.rows != 1 || v.cols != m.cols)
    throw std::invalid_argument("add_rowvec: vector must be [1, cols]");
  Tensor out = nodes_[m.id].val;
  const Tensor& vv = nodes_[v.id].val;
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) out.at(i, j) += vv.data[j];
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), [this, m, v, out_id]() {
    const Tensor& g = nodes_[out_id].grad;
    Tensor& gm = grad_of(m.id);
    Tensor& gv = grad_of(v.id);
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) {
        gm.at(i, j) += g.at(i, j);
        gv.data[j] += g.at(i, j);
      }
  });
}

Value Tape::smul(Value scalar, Value t) {
  if (scalar.rows != 1 || scalar.cols != 1)
    throw std::invalid_argument("smul: first operand must be a scalar");
  const double s = nodes_[scalar.id].val.data[0];
  Tensor out = nodes_[t.id].val;
  for (double& x : out.data) x *= s;
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), [this, scalar, t, out_id]() {
    const Tensor& g = nodes_[out_id].grad;
    const Tensor& tv = nodes_[t.id].val;
    const double sv = nodes_[scalar.id].val.data[0];
    Tensor& gs = grad_of(scalar.id);
    Tensor& gt = grad_of(t.id);
    double acc = 0.0;
    for (size_t i = 0; i < g.data.size(); ++i) {
      acc += g.data[i] * tv.data[i];
      gt.data[i] += sv * g.data[i];
    }
    gs.data[0] += acc;
  });
}

Value Tape::affine(Value v, double a, double b) {
  Tensor out = nodes_[v.id].val;
  for (double& x : out.data) x = a * x + b;
  check_finite(out, "affine");
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), [this, v, a, out_id]() {
    const Tensor& g = nodes_[out_id].grad;
    Tensor& gv = grad_of(v.id);
    for (size_t i = 0; i < g.data.size(); ++i) gv.data[i] += a * g.data[i];
  });
}

Value Tape::tanh(Value v) {
  Tensor out = nodes_[v.id].val;
  for (double& x : out.data) x = std::tanh(x);
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), [this, v, out_id]() {
    const Tensor& g = nodes_[out_id].grad;
    const Tensor& y = nodes_[out_id].val;
    Tensor& gv = grad_of(v.id);
    for (size_t i = 0; i < g.data.size(); ++i)
      gv.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
  });
}

Value Tape::relu(Value v) {
  Tensor out = nodes_[v.id].val;
  for (double& x : out.data) x = x > 0.0 ? x : 0.0;
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), [this, v, out_id]() {
    const Tensor& g = nodes_[out_id].grad;
    const Tensor& x = nodes_[v.id].val;
    Tensor& gv = grad_of(v.id);
    for (size_t i = 0; i < g.data.size(); ++i)
      if (x.data[i] > 0.0) gv.data[i] += g.data[i];
  });
}

Value Tape::logistic(Value v) {
  Tensor out = nodes_[v.id].val;
  for (double& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), [this, v, out_id]() {
    const Tensor& g = nodes_[out_id].grad;
    const Tensor& y = nodes_[out_id].val;
    Tensor& gv = grad_of(v.id);
    for (size_t i = 0; i < g.data.size(); ++i)
      gv.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
  });
}

Value Tape::log(Value v) {
  Tensor out = nodes_[v.id].val;
  for (double& x : out.data) x = std::log(x);
  check_finite(out, "log");
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), [this, v, out_id]() {
    const Tensor& g = nodes_[out_id].grad;
    const Tensor& x = nodes_[v.id].val;
    Tensor& gv = grad_of(v.id);
    for (size_t i = 0; i < g.data.size(); ++i) gv.data[i] += g.data[i] / x.data[i];
  });
}

Value Tape::sum_other_rows(Value m) {
  const Tensor& x = nodes_[m.id].val;
  std::vector<double> col_sum(m.cols, 0.0);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) col_sum[j] += x.at(i, j);
  Tensor out(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) out.at(i, j) = col_sum[j] - x.at(i, j);
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), [this, m, out_id]() {
    const Tensor& g = nodes_[out_id].grad;
    Tensor& gm = grad_of(m.id);
    std::vector<double> gcol(g.cols, 0.0);
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) gcol[j] += g.at(i, j);
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) gm.at(i, j) += gcol[j] - g.at(i, j);
  });
}

Value Tape::masked_softmax(Value v, std::vector<uint8_t> mask) {
  const Tensor& x = nodes_[v.id].val;
  if (mask.size() != x.data.size())
    throw std::invalid_argument("masked_softmax: mask size mismatch");
  double max_val = 0.0;
  bool any_unmasked = false;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) continue;
    if (!any_unmasked || x.data[i] > max_val) max_val = x.data[i];
    any_unmasked = true;
  }
  if (!any_unmasked) throw std::invalid_argument("masked_softmax: every entry is masked");
  Tensor out(x.rows, x.cols);
  double total = 0.0;
  for (size_t i = 0; i < mask.size(); ++i) {
    // equivalent to an additive -1e9 on masked logits, without inf - inf
    const double e = mask[i] ? 0.0 : std::exp(x.data[i] - max_val);
    out.data[i] = e;
    total += e;
  }
  for (double& p : out.data) p /= total;
  check_finite(out, "masked_softmax");
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), [this, v, out_id]() {
    const Tensor& g = nodes_[out_id].grad;
    const Tensor& p = nodes_[out_id].val;
    Tensor& gv = grad_of(v.id);
    double dot = 0.0;
    for (size_t i = 0; i < g.data.size(); ++i) dot += g.data[i] * p.data[i];
    for (size_t i = 0; i < g.data.size(); ++i)
      gv.data[i] += p.data[i] * (g.data[i] - dot);
  });
}

Value Tape::pick(Value v, int flat_index) {
  const Tensor& x = nodes_[v.id].val;
  if (flat_index < 0 || flat_index >= x.size())
    throw std::invalid_argument("pick: index out of range");
  Tensor out = Tensor::scalar(x.data[flat_index]);
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), [this, v, flat_index, out_id]() {
    grad_of(v.id).data[flat_index] += nodes_[out_id].grad.data[0];
  });
}

Value Tape::row(Value m, int i) {
  const Tensor& x = nodes_[m.id].val;
  if (i < 0 || i >= m.rows) throw std::invalid_argument("row: index out of range");
  Tensor out(1, m.cols);
  for (int j = 0; j < m.cols; ++j) out.data[j] = x.at(i, j);
  const int out_id = static_cast<int>(nodes_.size());
  return push(std::move(out), [this, m, i, out_id]() {
    const Tensor& g = nodes_[out_id].grad;
    Tensor& gm = grad_of(m.id);
    for (int j = 0; j < g.cols; ++j) gm.at(i, j) += g.data[j];
  });
}

Value Tape::sum_all(Value v) {
  const Tensor& x = nodes_[v.id].val;
  double total = 0.0;
  for (double d : x.data) total += d;
  const int out_id = static_cast<int>(nodes_.size());
  return push(Tensor::scalar(total), [this, v, out_id]() {
    const double g = nodes_[out_id].grad.data[0];
    Tensor& gv = grad_of(v.id);
    for (double& d : gv.data) d += g;
  });
}

Value Tape::mean_all(Value v) {
  const Tensor& x = nodes_[v.id].val;
  double total = 0.0;
  for (double d : x.data) total += d;
  const double inv = 1.0 / x.size();
  const int out_id = static_cast<int>(nodes_.size());
  return push(Tensor::scalar(total * inv), [this, v, inv, out_id]() {
    const double g = nodes_[out_id].grad.data[0] * inv;
    Tensor& gv = grad_of(v.id);
    for (double& d : gv.data) d += g;
  });
}

void Tape::backward(Value root, double seed) {
  if (root.id < 0 || root.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("backward: invalid root");
  if (nodes_[root.id].val.size() != 1)
    throw std::invalid_argument("backward: gradient root must be a scalar");
  grad_of(root.id).data[0] += seed;
  for (int id = root.id; id >= 0; --id) {
    Node& node = nodes_[id];
    if (node.grad.data.empty()) continue;  // does not influence the root
    check_finite(node.grad, "backward");
    if (node.back) node.back();
    if (node.param_slot >= 0) {
      if (grad_sink_ == nullptr)
        throw std::invalid_argument("backward: tape has no gradient sink");
      Tensor& sink = (*grad_sink_)[node.param_slot];
      for (size_t i = 0; i < sink.data.size(); ++i) sink.data[i] += node.grad.data[i];
    }
  }
}

double finite_difference_check(ParameterStore& params,
                               const std::function<Value(Tape&)>& build_scalar,
                               int probe_count, double epsilon, Rng& rng) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("finite_difference_check: epsilon must be > 0");

  GradBuffer analytic(params);
  {
    Tape tape(&params, &analytic);
    const Value root = build_scalar(tape);
    tape.backward(root);
  }

  auto eval = [&]() {
    Tape tape(&params, nullptr);
    return tape.scalar(build_scalar(tape));
  };

  long total = 0;
  for (int s = 0; s < params.slot_count(); ++s) total += params.value(s).size();

  auto locate = [&](long flat) -> std::pair<int, int> {
    for (int s = 0; s < params.slot_count(); ++s) {
      const long sz = params.value(s).size();
      if (flat < sz) return {s, static_cast<int>(flat)};
      flat -= sz;
    }
    throw std::logic_error("finite_difference_check: bad flat index");
  };

  std::vector<std::pair<int, int>> probes;
  if (probe_count <= 0 || probe_count >= total) {
    for (long f = 0; f < total; ++f) probes.push_back(locate(f));
  } else {
    for (int k = 0; k < probe_count; ++k)
      probes.push_back(locate(static_cast<long>(rng.below(total))));
  }

  double worst = 0.0;
  for (const auto& [slot, idx] : probes) {
    double& cell = params.value(slot).data[idx];
    const double original = cell;
    cell = original + epsilon;
    const double f_plus = eval();
    cell = original - epsilon;
    const double f_minus = eval();
    cell = original;
    const double numeric = (f_plus - f_minus) / (2.0 * epsilon);
    const double a = analytic[slot].data[idx];
    // the guard floor sits above the FD roundoff scale eps_mach*|f|/(2*eps),
    // so zero-gradient entries that agree to machine precision score ~0
    const double err =
        std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace tspkit::ad
