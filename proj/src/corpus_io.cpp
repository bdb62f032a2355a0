#include "speedy/corpus_io.hpp"

#include <cstdio>

#include "json.hpp"
#include "speedy/config.hpp"

namespace speedy {

using nlohmann::json;

std::string instance_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04zu.json", index);
  return buf;
}

RenderedCorpus render_corpus(const SyntheticSceneConfig& config, std::size_t count, std::uint64_t seed) {
  config.validate();
  RenderedCorpus out;
  json files = json::array();
  std::string hashes;
  SyntheticSceneConfig c = config;
  for (std::size_t i = 0; i < count; ++i) {
    c.rng_seed = scene_seed(seed, i);
    CorpusFile f{instance_file_name(i), instance_to_text(generate_scene(c))};
    const std::string h = hex64(fnv1a(f.text));
    files.push_back({{"name", f.name}, {"hash", h}});
    hashes += h;
    out.files.push_back(std::move(f));
  }
  SyntheticSceneConfig recorded = config;
  recorded.rng_seed = seed;
  const json manifest = {{"format", "speedy-manifest"},
                         {"version", 1},
                         {"count", count},
                         {"seed", seed},
                         {"config_hash", scene_config_hash(recorded)},
                         {"scene", json::parse(scene_config_json(recorded))},
                         {"files", files},
                         {"corpus_hash", hex64(fnv1a(hashes))}};
  out.manifest = manifest.dump(1) + "\n";
  return out;
}

void write_corpus(const std::filesystem::path& dir, const RenderedCorpus& corpus) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  for (const auto& f : corpus.files) write_file(dir / f.name, f.text);
  write_file(dir / "manifest.json", corpus.manifest);
}

LoadedCorpus load_corpus(const std::filesystem::path& dir) {
  const std::string text = read_file(dir / "manifest.json");
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw DimensionMismatch("manifest " + (dir / "manifest.json").string() + " is not valid JSON");
  }
  if (manifest.value("format", "") != "speedy-manifest")
    throw DimensionMismatch((dir / "manifest.json").string() + " is not a corpus manifest");
  LoadedCorpus out;
  for (const auto& f : manifest.at("files")) {
    const std::string name = f.at("name").get<std::string>();
    const std::string body = read_file(dir / name);
    if (hex64(fnv1a(body)) != f.at("hash").get<std::string>())
      throw DimensionMismatch(name + " does not match the hash recorded in the manifest");
    out.names.push_back(name);
    out.instances.push_back(instance_from_text(body));
  }
  for (const auto& inst : out.instances) {
    require_dims(inst.num_classes == out.instances.front().num_classes, "corpus: instances disagree on the class count");
    require_dims(inst.hierarchy->num_levels() == out.instances.front().hierarchy->num_levels(),
                 "corpus: instances disagree on the hierarchy depth");
  }
  return out;
}

}  // namespace speedy
