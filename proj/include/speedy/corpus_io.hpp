#pragma once

// Corpus directories: one JSON file per instance plus manifest.json carrying
// the generating seed, the scene-config hash and per-file hashes.

#include <filesystem>
#include <string>
#include <vector>

#include "speedy/instance.hpp"
#include "speedy/scene.hpp"

namespace speedy {

struct CorpusFile {
  std::string name;
  std::string text;
};

struct RenderedCorpus {
  std::vector<CorpusFile> files;
  std::string manifest;
};

std::string instance_file_name(std::size_t index);

/// Serialized scenes and manifest of a synthetic corpus, without touching disk.
RenderedCorpus render_corpus(const SyntheticSceneConfig& config, std::size_t count, std::uint64_t seed);

/// Writes files and manifest.json into `dir` (created if needed). Throws IoError.
void write_corpus(const std::filesystem::path& dir, const RenderedCorpus& corpus);

struct LoadedCorpus {
  std::vector<std::string> names;
  std::vector<StructuredInstance> instances;
};

/// Reads manifest.json and every listed file, checking their hashes. Throws
/// IoError for unreadable files and DimensionMismatch for inconsistent data.
LoadedCorpus load_corpus(const std::filesystem::path& dir);

}  // namespace speedy
