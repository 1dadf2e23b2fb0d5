#include "svlab/tape.hpp"

#include <stdexcept>

namespace svlab {

namespace {
thread_local Tape* g_current_tape = nullptr;
}

Tape* Tape::current() { return g_current_tape; }

void Tape::record(std::function<void()> backward_step) {
  nodes_.push_back(std::move(backward_step));
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw std::invalid_argument("Tape::backward: loss must be a scalar, got shape " +
                                shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw std::invalid_argument(
        "Tape::backward: loss is detached from the tape (no gradient path)");
  }
  const_cast<Tensor&>(loss).grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void Tape::clear() { nodes_.clear(); }

TapeScope::TapeScope(Tape& tape) : previous_(g_current_tape) {
  g_current_tape = &tape;
}

TapeScope::~TapeScope() { g_current_tape = previous_; }

}  // namespace svlab
