#include "opbil/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace opbil {
namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian");

json layers_to_json(const std::vector<ConvLayer>& layers) {
  json out = json::array();
  for (const ConvLayer& l : layers) out.push_back({l.kernel, l.channels, l.stride});
  return out;
}

std::vector<ConvLayer> layers_from_json(const json& j) {
  std::vector<ConvLayer> out;
  for (const json& l : j) out.push_back({l.at(0).get<Index>(), l.at(1).get<Index>(), l.at(2).get<Index>()});
  return out;
}

json spec_json(const ModelSpec& s) {
  return {{"variant", std::string(to_string(s.variant))},
          {"visual_size", s.visual_size},
          {"seismic_length", s.seismic_length},
          {"visual_stream", layers_to_json(s.visual_stream)},
          {"seismic_stream", layers_to_json(s.seismic_stream)},
          {"reduced_visual", s.reduced_visual},
          {"reduced_seismic", s.reduced_seismic},
          {"l1", s.l1},
          {"head3d", layers_to_json(s.head3d)},
          {"fc_hidden", s.fc_hidden},
          {"seed", s.seed}};
}

ModelSpec spec_from(const json& j) {
  ModelSpec s;
  s.variant = parse_variant(j.at("variant").get<std::string>());
  s.visual_size = j.at("visual_size").get<Index>();
  s.seismic_length = j.at("seismic_length").get<Index>();
  s.visual_stream = layers_from_json(j.at("visual_stream"));
  s.seismic_stream = layers_from_json(j.at("seismic_stream"));
  s.reduced_visual = j.at("reduced_visual").get<Index>();
  s.reduced_seismic = j.at("reduced_seismic").get<Index>();
  s.l1 = j.at("l1").get<double>();
  s.head3d = layers_from_json(j.at("head3d"));
  s.fc_hidden = j.at("fc_hidden").get<Index>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

}  // namespace

std::string spec_to_json(const ModelSpec& spec) { return spec_json(spec).dump(); }

ModelSpec spec_from_json(const std::string& text) {
  try {
    return spec_from(json::parse(text));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("model spec: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, int epoch) {
  json params = json::array();
  std::size_t values = 0;
  for (const Parameter& p : model.parameters()) {
    params.push_back({{"name", p.name}, {"shape", p.value.shape()}});
    values += std::size_t(p.value.size());
  }
  const json header = {{"format", "opbil-checkpoint"},
                       {"version", 1},
                       {"spec", spec_json(model.spec())},
                       {"seed", model.spec().seed},
                       {"epoch", epoch},
                       {"parameters", params},
                       {"blob_bytes", values * sizeof(double)}};

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out << header.dump() << '\n';
  for (const Parameter& p : model.parameters())
    out.write(reinterpret_cast<const char*>(p.value.data().data()),
              std::streamsize(p.value.size() * Index(sizeof(double))));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw CheckpointError(path.string() + ": missing header");

  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": malformed header: " + e.what());
  }

  try {
    if (header.at("format") != "opbil-checkpoint" || header.at("version") != 1)
      throw CheckpointError(path.string() + ": unsupported checkpoint format");
    LoadedCheckpoint loaded{build_model(spec_from(header.at("spec"))), header.at("epoch").get<int>()};
    const json& params = header.at("parameters");
    auto& model_params = loaded.model.parameters();
    if (params.size() != model_params.size())
      throw CheckpointError(path.string() + ": parameter count does not match the model spec");

    const std::string blob(std::istreambuf_iterator<char>(in), {});
    const auto expected = header.at("blob_bytes").get<std::size_t>();
    if (blob.size() != expected)
      throw CheckpointError(path.string() + ": blob has " + std::to_string(blob.size()) +
                            " bytes, header says " + std::to_string(expected));

    std::size_t offset = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter& p = model_params[i];
      if (params[i].at("name") != p.name || params[i].at("shape").get<Shape>() != p.value.shape())
        throw CheckpointError(path.string() + ": parameter " + std::to_string(i) +
                              " does not match " + p.name);
      const auto bytes = std::size_t(p.value.size()) * sizeof(double);
      if (offset + bytes > blob.size()) throw CheckpointError(path.string() + ": blob too short");
      std::memcpy(p.value.data().data(), blob.data() + offset, bytes);
      offset += bytes;
    }
    if (offset != blob.size()) throw CheckpointError(path.string() + ": trailing bytes in blob");
    return loaded;
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": malformed header: " + e.what());
  } catch (const ModelSpecError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace opbil
