#include "uunet/tensor.hpp"

#include <cmath>

namespace uunet {

bool Tensor::all_finite() const {
  for (Scalar x : v_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace uunet
