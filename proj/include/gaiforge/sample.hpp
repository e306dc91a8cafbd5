#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "gaiforge/tensor.hpp"

namespace gaiforge {

/// Image plus class label. Label 0 is real, 1..n are majority forgeries and
/// n+1 is the minority class. `id` is the generation stream id of the sample;
/// train and test splits never share ids.
struct LabeledSample {
  std::shared_ptr<const Tensor> image;
  int label = 0;
  std::uint64_t id = 0;
};

inline LabeledSample make_sample(Tensor image, int label, std::uint64_t id = 0) {
  return {std::make_shared<const Tensor>(std::move(image)), label, id};
}

/// A bag of samples plus the class list the dataset is declared to contain.
/// Class-balanced sampling draws uniformly over declared_classes and treats an
/// empty declared class as a contract violation.
struct Dataset {
  std::vector<LabeledSample> samples;
  std::vector<int> declared_classes;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
};

}  // namespace gaiforge
