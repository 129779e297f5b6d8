#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tspkit/rng.hpp"

// Minimal reverse-mode differentiable computation, sized for the policy
// model: dense products, element-wise maps, masked softmax, gathers and
// reductions over 64-bit reals. Tensors are rank <= 2; a vector is stored
// as a single row.
namespace tspkit::ad {

struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
  Tensor(int r, int c, std::vector<double> values);

  static Tensor row_vector(std::span<const double> values);
  static Tensor scalar(double v);

  int size() const { return rows * cols; }
  double& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  double at(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }
  double scalar_value() const;
};

enum class ParamInit {
  UniformFanIn,  // uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
  Zero,          // raw zero (gate scalars: logistic(0) = 0.5)
};

struct ParamSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  ParamInit init = ParamInit::UniformFanIn;
};

class ParameterStore;

// Gradient (or moment) tensors matching a store's slot layout.
class GradBuffer {
 public:
  GradBuffer() = default;
  explicit GradBuffer(const ParameterStore& store);

  void zero();
  void add(const GradBuffer& other);
  void scale(double factor);
  double global_norm() const;

  Tensor& operator[](int slot) { return tensors_[slot]; }
  const Tensor& operator[](int slot) const { return tensors_[slot]; }
  size_t slot_count() const { return tensors_.size(); }

 private:
  std::vector<Tensor> tensors_;
};

// Named trainable tensors plus a same-shape gradient accumulator per slot.
class ParameterStore {
 public:
  ParameterStore() = default;

  // Weights drawn uniform per ParamInit; deterministic per seed. Throws
  // std::invalid_argument on duplicate names or non-positive shapes.
  static ParameterStore init(std::span<const ParamSpec> specs, uint64_t seed);

  int slot_count() const { return static_cast<int>(slots_.size()); }
  int find(std::string_view name) const;  // -1 when absent
  const std::string& name(int slot) const { return slots_[slot].name; }
  Tensor& value(int slot) { return slots_[slot].value; }
  const Tensor& value(int slot) const { return slots_[slot].value; }
  Tensor& value(std::string_view name);
  const Tensor& value(std::string_view name) const;

  GradBuffer& grads() { return grads_; }
  const GradBuffer& grads() const { return grads_; }
  void zero_grads() { grads_.zero(); }

  // Restores a tensor set saved from the same layout (checkpoint loading).
  void add_slot(const std::string& name, Tensor value);
  void finalize_grads() { grads_ = GradBuffer(*this); }

 private:
  struct Slot {
    std::string name;
    Tensor value;
  };
  std::vector<Slot> slots_;
  std::unordered_map<std::string, int> index_;
  GradBuffer grads_;
};

struct Value {
  int id = -1;
  int rows = 0;
  int cols = 0;
};

// Records a computation; backward() accumulates exact reverse-mode
// gradients of one scalar output into a gradient sink. A tape reads
// parameter values from the store it was built against and must not
// outlive it.
class Tape {
 public:
  explicit Tape(const ParameterStore* store = nullptr, GradBuffer* grad_sink = nullptr)
      : store_(store), grad_sink_(grad_sink) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value input(Tensor t);
  Value input(std::span<const double> row);
  Value scalar_input(double v);
  Value param(int slot);
  Value param(std::string_view name);

  Value matmul(Value a, Value b);     // [n,k] x [k,m]
  Value matmul_nt(Value a, Value b);  // [n,k] x [m,k]^T -> [n,m]
  Value add(Value a, Value b);        // same shape
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);         // element-wise
  Value add_rowvec(Value m, Value v);  // [n,c] + [1,c] broadcast over rows
  Value smul(Value scalar, Value t);   // graph scalar times tensor
  Value affine(Value v, double a, double b);  // a*v + b element-wise
  Value tanh(Value v);
  Value relu(Value v);
  Value logistic(Value v);
  Value log(Value v);
  // row i of the output is the sum of all input rows except row i
  Value sum_other_rows(Value m);
  // softmax over all entries; masked entries (mask != 0) get exactly 0
  Value masked_softmax(Value v, std::vector<uint8_t> mask);
  Value pick(Value v, int flat_index);  // one entry as a scalar
  Value row(Value m, int i);
  Value sum_all(Value v);
  Value mean_all(Value v);

  const Tensor& value(Value v) const { return nodes_[v.id].val; }
  double scalar(Value v) const { return nodes_[v.id].val.scalar_value(); }

  // Reverse pass from a scalar root; gradients of parameters accumulate
  // (+=) into the gradient sink. seed scales every gradient.
  void backward(Value root, double seed = 1.0);

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;  // allocated lazily during backward
    std::function<void()> back;
    int param_slot = -1;
  };

  Value push(Tensor val, std::function<void()> back = nullptr, int param_slot = -1);
  Tensor& grad_of(int id);
  void check_finite(const Tensor& t, const char* op) const;

  const ParameterStore* store_;
  GradBuffer* grad_sink_;
  std::vector<Node> nodes_;
  friend class TapeTestPeer;
};

// Compares reverse-mode parameter gradients of the builder's scalar output
// against central finite differences on `probe_count` randomly chosen
// parameter entries (probe_count <= 0 probes every entry). Returns the
// worst relative error, with denominator max(|analytic|, |numeric|, 1e-6);
// the guard keeps double-precision FD roundoff on zero-gradient entries
// from registering as error.
double finite_difference_check(ParameterStore& params,
                               const std::function<Value(Tape&)>& build_scalar,
                               int probe_count, double epsilon, Rng& rng);

}  // namespace tspkit::ad
