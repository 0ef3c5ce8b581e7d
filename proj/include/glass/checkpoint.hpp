#pragma once

#include <string>
#include <utility>
#include <vector>

#include "glass/tensor.hpp"

namespace glass {

// Named parameters in a stable registration order. Holds both learnable
// tensors and non-learnable state (batchnorm running stats).
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  bool has(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const {
    return entries_;
  }
  std::vector<Tensor> learnable() const;
  int64_t param_count() const;  // learnable scalars only
  void zero_grads();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Checkpoint: <path>.json manifest (name -> shape -> byte offset, in store
// order) plus <path>.bin of little-endian float32 blobs at those offsets.
// Loading upcasts to float64.
void save_checkpoint(const ParamStore& store, const std::string& path_prefix);
void load_checkpoint(ParamStore& store, const std::string& path_prefix);

}  // namespace glass
