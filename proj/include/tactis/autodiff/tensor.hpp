#pragma once

// Dense row-major tensors of doubles with reverse-mode differentiation.
//
// Every operation in ops.hpp records itself on the thread's active Tape
// (see TapeScope) when at least one input requires a gradient. Without an
// active tape the same operations run as plain numerics, which is how the
// sampling and evaluation paths use them.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tactis/error.hpp"

namespace tactis::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised when operand shapes are incompatible for an operation.
class ShapeError : public Error {
 public:
  ShapeError(std::string_view op, const std::vector<Shape>& shapes,
             std::string_view detail = {});
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

struct TensorImpl {
  TensorImpl(Shape s, std::vector<double> d);
  ~TensorImpl();
  TensorImpl(const TensorImpl&) = delete;
  TensorImpl& operator=(const TensorImpl&) = delete;

  std::vector<double>& ensure_grad();

  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;
  bool is_leaf = true;
  std::uint64_t tape_id = 0;
  std::size_t tape_index = 0;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor constant(Shape shape, std::vector<double> data);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  /// Leaf tensor that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> data);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim() const { return impl_->shape.size(); }
  std::size_t size(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double operator[](std::size_t flat_index) const { return impl_->data[flat_index]; }

  /// Accumulated gradient; zeros when nothing reached this tensor.
  std::vector<double> grad() const;
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad() { impl_->grad.clear(); }
  std::span<double> mutable_grad() { return impl_->ensure_grad(); }

  bool requires_grad() const { return impl_->requires_grad; }
  bool is_leaf() const { return impl_->is_leaf; }

  /// Copy of the values with no gradient history.
  Tensor detach() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Ordered record of differentiable operations.
///
/// Entries are appended in execution order, so inputs always precede the
/// operations that consume them. backward() may be called several times;
/// leaf gradients accumulate additively across calls while intermediate
/// gradients are released after each pass.
class Tape {
 public:
  struct Entry {
    std::string_view op;
    std::shared_ptr<TensorImpl> output;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::function<void()> backward;
  };

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void backward(const Tensor& root);
  void clear();
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::uint64_t id() const { return id_; }

  void record(Entry entry);

 private:
  std::uint64_t id_;
  std::vector<Entry> entries_;
};

/// Makes `tape` the active tape of the calling thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording on the calling thread for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Live and peak bytes held by tensor value buffers, process-wide.
struct MemoryStats {
  std::size_t current_bytes = 0;
  std::size_t peak_bytes = 0;
};
MemoryStats memory_stats();
/// Resets the peak to the current live size.
void reset_peak_memory();

}  // namespace tactis::ad
