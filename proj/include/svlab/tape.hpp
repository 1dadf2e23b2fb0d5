// Reverse-mode differentiation tape.
//
// Ops append nodes in execution order, so the list is already a topological
// order; backward() replays it once in reverse. The tape is not cleared
// automatically: the owner runs forward, backward, reads gradients, then
// clear()s (or destroys) the tape before the next step. A second backward()
// without clearing replays the same nodes and re-accumulates gradients.
//
// A tape is bound to one thread at a time via TapeScope. Ops called with no
// active scope run forward-only, which doubles as inference mode.
#pragma once

#include <functional>
#include <vector>

#include "svlab/tensor.hpp"

namespace svlab {

class Tape {
 public:
  void record(std::function<void()> backward_step);
  // Seeds d(loss)/d(loss) = 1 and walks the tape in reverse. loss must be a
  // scalar that was recorded on this tape (requires_grad propagated to it).
  void backward(const Tensor& loss);
  void clear();
  size_t size() const { return nodes_.size(); }

  static Tape* current();

 private:
  friend class TapeScope;
  std::vector<std::function<void()>> nodes_;
};

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

inline bool grad_enabled() { return Tape::current() != nullptr; }

}  // namespace svlab
