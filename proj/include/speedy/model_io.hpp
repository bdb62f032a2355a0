#pragma once

// Versioned JSON container for AdditiveModel. Doubles are written in
// shortest round-trip form, so save -> load -> save is byte-identical.

#include <filesystem>
#include <string>

#include "speedy/boosting.hpp"

namespace speedy {

inline constexpr int kModelFormatVersion = 1;

std::string model_to_text(const AdditiveModel& model);
AdditiveModel model_from_text(const std::string& text);
void save_model(const AdditiveModel& model, const std::filesystem::path& path);
AdditiveModel load_model(const std::filesystem::path& path);

}  // namespace speedy
