#include <stdexcept>

#include "maskforge/segment.hpp"

namespace maskforge {

LabelMask OracleBackend::predict(const std::string& id, const RgbImage& image) const {
  const auto it = truth_.find(id);
  if (it == truth_.end()) {
    throw std::out_of_range("oracle backend has no ground truth for '" + id + "'");
  }
  if (!it->second.same_shape(image)) {
    throw std::invalid_argument("oracle ground truth for '" + id +
                                "' does not match the image size");
  }
  // Ignore pixels carry no class; predict them as background.
  LabelMask out = it->second;
  for (auto& v : out.data()) {
    if (v == kIgnoreLabel) v = kBackgroundLabel;
  }
  return out;
}

}  // namespace maskforge
