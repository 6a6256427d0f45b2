#include "tactis/autodiff/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

namespace tactis::ad {

namespace {

std::atomic<std::size_t> g_current_bytes{0};
std::atomic<std::size_t> g_peak_bytes{0};
std::atomic<std::uint64_t> g_next_tape_id{1};
thread_local Tape* t_active_tape = nullptr;

void track_alloc(std::size_t bytes) {
  const std::size_t now = g_current_bytes.fetch_add(bytes) + bytes;
  std::size_t peak = g_peak_bytes.load();
  while (now > peak && !g_peak_bytes.compare_exchange_weak(peak, now)) {
  }
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

static std::string shape_message(std::string_view op, const std::vector<Shape>& shapes,
                                 std::string_view detail) {
  std::ostringstream os;
  os << "shape mismatch in '" << op << "':";
  for (const auto& s : shapes) os << ' ' << to_string(s);
  if (!detail.empty()) os << " (" << detail << ')';
  return os.str();
}

ShapeError::ShapeError(std::string_view op, const std::vector<Shape>& shapes,
                       std::string_view detail)
    : Error(shape_message(op, shapes, detail)), op_(op) {}

TensorImpl::TensorImpl(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (data.size() != ad::numel(shape)) {
    throw ShapeError("tensor", {shape}, "data length " + std::to_string(data.size()));
  }
  track_alloc(data.size() * sizeof(double));
}

TensorImpl::~TensorImpl() { g_current_bytes.fetch_sub(data.size() * sizeof(double)); }

std::vector<double>& TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
  return Tensor(std::make_shared<TensorImpl>(std::move(shape), std::move(data)));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = ad::numel(shape);
  return constant(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return constant({}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  Tensor t = constant(std::move(shape), std::move(data));
  t.impl_->requires_grad = true;
  return t;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item", {shape()}, "expected a single element");
  return impl_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(impl_->data.size(), 0.0);
  return impl_->grad;
}

Tensor Tensor::detach() const { return constant(shape(), impl_->data); }

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) {}

void Tape::record(Entry entry) {
  entry.output->requires_grad = true;
  entry.output->is_leaf = false;
  entry.output->tape_id = id_;
  entry.output->tape_index = entries_.size();
  entries_.push_back(std::move(entry));
}

void Tape::backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1 || !root.shape().empty()) {
    throw ShapeError("backward", {root.defined() ? root.shape() : Shape{}},
                     "root must be a scalar");
  }
  auto* r = root.impl().get();
  if (!r->requires_grad) return;
  if (r->is_leaf) {
    r->ensure_grad()[0] += 1.0;
    return;
  }
  if (r->tape_id != id_) throw Error("backward: root was not recorded on this tape");

  r->ensure_grad()[0] += 1.0;
  for (std::size_t i = r->tape_index + 1; i-- > 0;) {
    auto& e = entries_[i];
    if (e.output->grad.empty()) continue;
    e.backward();
  }
  // Only leaves keep their gradients; intermediates start fresh next time.
  for (auto& e : entries_) {
    e.output->grad.clear();
    e.output->grad.shrink_to_fit();
  }
}

void Tape::clear() { entries_.clear(); }

TapeScope::TapeScope(Tape& tape) : previous_(t_active_tape) { t_active_tape = &tape; }
TapeScope::~TapeScope() { t_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(t_active_tape) { t_active_tape = nullptr; }
NoGradScope::~NoGradScope() { t_active_tape = previous_; }

Tape* active_tape() { return t_active_tape; }

MemoryStats memory_stats() { return {g_current_bytes.load(), g_peak_bytes.load()}; }

void reset_peak_memory() { g_peak_bytes.store(g_current_bytes.load()); }

}  // namespace tactis::ad
