#include <fstream>
#include <sstream>

#include <json.hpp>

#include "maskforge/image.hpp"

namespace maskforge {

namespace fs = std::filesystem;
using nlohmann::json;

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ImageIoError(ImageIoError::Kind::kMissingFile,
                       "cannot open manifest '" + path.string() + "'");
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("manifest '" + path.string() + "' is not valid JSON: " +
                             e.what());
  }
  if (!doc.is_array()) {
    throw std::runtime_error("manifest '" + path.string() + "' must be a JSON array");
  }

  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path candidate(p);
    return candidate.is_relative() ? base / candidate : candidate;
  };

  DatasetManifest manifest;
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& entry = doc[i];
    const std::string where = "record " + std::to_string(i);
    if (!entry.is_object() || !entry.contains("image") || !entry["image"].is_string() ||
        !entry.contains("category") || !entry["category"].is_number_integer()) {
      problems.push_back(where + ": needs string 'image' and integer 'category'");
      continue;
    }
    DatasetRecord record;
    record.image = resolve(entry["image"].get<std::string>());
    record.category = entry["category"].get<int>();
    if (record.category < 1 || record.category > kMaxCategory) {
      problems.push_back(where + ": category " + std::to_string(record.category) +
                         " outside 1..20");
    }
    if (!fs::exists(record.image)) {
      problems.push_back(where + ": missing image " + record.image.string());
    }
    for (const char* key : {"coarse_mask", "gt_mask"}) {
      if (!entry.contains(key) || entry[key].is_null()) continue;
      if (!entry[key].is_string()) {
        problems.push_back(where + ": '" + key + "' must be a string");
        continue;
      }
      fs::path p = resolve(entry[key].get<std::string>());
      if (!fs::exists(p)) problems.push_back(where + ": missing " + key + " " + p.string());
      (std::string(key) == "coarse_mask" ? record.coarse_mask : record.gt_mask) = p;
    }
    manifest.records.push_back(std::move(record));
  }
  if (!problems.empty()) {
    std::ostringstream msg;
    msg << "invalid manifest '" << path.string() << "':";
    for (const auto& p : problems) msg << "\n  " << p;
    throw std::runtime_error(msg.str());
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  const fs::path base = path.parent_path();
  auto relative = [&](const fs::path& p) {
    return base.empty() ? p.generic_string() : p.lexically_relative(base).generic_string();
  };
  json doc = json::array();
  for (const auto& r : manifest.records) {
    json entry = {{"image", relative(r.image)}, {"category", r.category}};
    if (r.coarse_mask) entry["coarse_mask"] = relative(*r.coarse_mask);
    if (r.gt_mask) entry["gt_mask"] = relative(*r.gt_mask);
    doc.push_back(std::move(entry));
  }
  if (!base.empty()) fs::create_directories(base);
  std::ofstream out(path);
  out << doc.dump(2) << "\n";
  if (!out) {
    throw ImageIoError(ImageIoError::Kind::kWriteFailure,
                       "cannot write manifest '" + path.string() + "'");
  }
}

}  // namespace maskforge
