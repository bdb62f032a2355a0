#include "speedy/instance.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace speedy {

using nlohmann::json;

const BaseFeatureField& StructuredInstance::base_field(std::uint32_t group) const {
  require(group < base_features.size(), "instance has no base features for group " + std::to_string(group));
  return base_features[group];
}

void StructuredInstance::validate() const {
  require(width > 0 && height > 0, "instance: empty grid");
  require(num_classes >= 2, "instance: need at least two classes");
  require_dims(labels.rows() == num_pixels() && labels.cols() == num_classes, "instance: label matrix shape");
  for (std::size_t j = 0; j < labels.rows(); ++j) {
    double sum = 0.0;
    for (double p : labels.row(j)) {
      require(p >= 0.0 && p <= 1.0, "instance: label probability outside [0,1]");
      sum += p;
    }
    require(std::abs(sum - 1.0) <= 1e-9, "instance: label distribution does not sum to 1");
  }
  require(hierarchy != nullptr, "instance: missing hierarchy");
  require_dims(hierarchy->width() == width && hierarchy->height() == height, "instance: hierarchy grid size");
  for (std::size_t g = 0; g < base_features.size(); ++g) {
    require(base_features[g].group == g, "instance: base feature groups must be ordered by id");
    require_dims(base_features[g].values.size() == num_pixels() * base_features[g].dim,
                 "instance: base feature array size");
  }
}

std::vector<std::uint32_t> label_map(const StructuredInstance& instance) {
  std::vector<std::uint32_t> out(instance.num_pixels());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = static_cast<std::uint32_t>(argmax(instance.labels.row(j)));
  return out;
}

Matrix one_hot_labels(std::span<const std::uint32_t> labels, std::size_t num_classes) {
  Matrix out(labels.size(), num_classes);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    require(labels[j] < num_classes, "label outside class range");
    out(j, labels[j]) = 1.0;
  }
  return out;
}

namespace {

bool labels_are_one_hot(const Matrix& labels) {
  for (double p : labels.data())
    if (p != 0.0 && p != 1.0) return false;
  return true;
}

}  // namespace

std::string instance_to_text(const StructuredInstance& instance) {
  json j;
  j["format"] = "speedy-instance";
  j["version"] = kInstanceFormatVersion;
  j["width"] = instance.width;
  j["height"] = instance.height;
  j["num_classes"] = instance.num_classes;
  j["label_map"] = label_map(instance);
  if (!labels_are_one_hot(instance.labels)) j["soft_labels"] = instance.labels.data();
  json levels = json::array();
  for (std::size_t l = 0; l < instance.hierarchy->num_levels(); ++l) levels.push_back(instance.hierarchy->level_map(l));
  j["hierarchy"] = {{"levels", levels}};
  json features = json::array();
  for (const auto& f : instance.base_features)
    features.push_back({{"group", f.group}, {"dim", f.dim}, {"values", f.values}});
  j["base_features"] = features;
  return j.dump() + "\n";
}

StructuredInstance instance_from_text(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != "speedy-instance") throw IoError("not a speedy instance file");
    if (j.at("version").get<int>() != kInstanceFormatVersion)
      throw IoError("unsupported instance version " + j.at("version").dump());
    StructuredInstance inst;
    inst.width = j.at("width");
    inst.height = j.at("height");
    inst.num_classes = j.at("num_classes");
    if (j.contains("soft_labels")) {
      inst.labels = Matrix(inst.num_pixels(), inst.num_classes);
      inst.labels.data() = j.at("soft_labels").get<std::vector<double>>();
      require_dims(inst.labels.data().size() == inst.num_pixels() * inst.num_classes, "soft label array size");
    } else {
      const auto map = j.at("label_map").get<std::vector<std::uint32_t>>();
      require_dims(map.size() == inst.num_pixels(), "label map size");
      inst.labels = one_hot_labels(map, inst.num_classes);
    }
    auto maps = j.at("hierarchy").at("levels").get<std::vector<std::vector<std::uint32_t>>>();
    inst.hierarchy = std::make_shared<const SegmentationHierarchy>(
        SegmentationHierarchy::from_level_maps(inst.width, inst.height, std::move(maps)));
    for (const auto& f : j.at("base_features")) {
      BaseFeatureField field;
      field.group = f.at("group");
      field.dim = f.at("dim");
      field.values = f.at("values").get<std::vector<double>>();
      inst.base_features.push_back(std::move(field));
    }
    inst.validate();
    return inst;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed instance file: ") + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << contents;
  if (!out) throw IoError("write failed for " + path.string());
}

void save_instance(const StructuredInstance& instance, const std::filesystem::path& path) {
  write_file(path, instance_to_text(instance));
}

StructuredInstance load_instance(const std::filesystem::path& path) { return instance_from_text(read_file(path)); }

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace speedy
