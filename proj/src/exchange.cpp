#include <cstdlib>
#include <fstream>
#include <set>

#include <json.hpp>

#include "maskforge/segment.hpp"

namespace maskforge {

namespace fs = std::filesystem;

void export_training_round(const fs::path& round_dir,
                           std::span<const ExchangeRecord> records,
                           std::span<const TrainingExample> examples) {
  const fs::path labels_dir = round_dir / "labels";
  fs::create_directories(labels_dir);
  fs::create_directories(round_dir / "predictions");

  std::set<std::string> trained;
  for (const auto& ex : examples) {
    write_label_mask(*ex.labels, labels_dir / (ex.id + ".png"));
    trained.insert(ex.id);
  }

  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json entry = {{"id", r.id},
                            {"image", fs::absolute(r.image).generic_string()},
                            {"category", r.category}};
    if (trained.count(r.id)) entry["label_mask"] = "labels/" + r.id + ".png";
    manifest.push_back(std::move(entry));
  }
  std::ofstream out(round_dir / "train_manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) {
    throw ExchangeError("cannot write " + (round_dir / "train_manifest.json").string());
  }
}

LabelMask import_prediction(const fs::path& round_dir, const std::string& id, int width,
                            int height) {
  const fs::path file = round_dir / "predictions" / (id + ".png");
  if (!fs::exists(file)) {
    throw ExchangeError("missing prediction for '" + id + "': " + file.string());
  }
  LabelMask mask;
  try {
    mask = read_label_mask(file);
  } catch (const ImageIoError& e) {
    throw ExchangeError("malformed prediction " + file.string() + ": " + e.what());
  }
  if (mask.width() != width || mask.height() != height) {
    throw ExchangeError("prediction " + file.string() + " is " +
                        std::to_string(mask.width()) + "x" +
                        std::to_string(mask.height()) + ", expected " +
                        std::to_string(width) + "x" + std::to_string(height));
  }
  for (std::uint8_t v : mask.data()) {
    if (!is_valid_label(v)) {
      throw ExchangeError("prediction " + file.string() + " holds label " +
                          std::to_string(v) + " outside 0..20 and 255");
    }
  }
  return mask;
}

ExternalExchangeBackend::ExternalExchangeBackend(fs::path root,
                                                 std::vector<ExchangeRecord> records,
                                                 std::string command)
    : root_(std::move(root)), records_(std::move(records)), command_(std::move(command)) {}

fs::path ExternalExchangeBackend::current_round_dir() const {
  return root_ / ("round_" + std::to_string(round_));
}

void ExternalExchangeBackend::train(std::span<const TrainingExample> examples) {
  ++round_;
  const fs::path dir = current_round_dir();
  export_training_round(dir, records_, examples);
  if (!command_.empty()) {
    const std::string line = command_ + " '" + fs::absolute(dir).string() + "'";
    const int status = std::system(line.c_str());
    if (status != 0) {
      throw ExchangeError("external trainer failed (status " + std::to_string(status) +
                          "): " + line);
    }
  }
}

LabelMask ExternalExchangeBackend::predict(const std::string& id,
                                           const RgbImage& image) const {
  if (round_ == 0) throw std::logic_error("external backend used before training");
  LabelMask out = import_prediction(current_round_dir(), id, image.width(), image.height());
  // As with the oracle, ignore pixels carry no class.
  for (auto& v : out.data()) {
    if (v == kIgnoreLabel) v = kBackgroundLabel;
  }
  return out;
}

}  // namespace maskforge
