#include "reina/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "reina/error.hpp"

namespace reina {

using json = nlohmann::ordered_json;

Checkpoint fresh_checkpoint(const ArchConfig& arch, std::uint64_t seed) {
  Checkpoint c;
  c.params = init_params(arch, seed);
  c.seed = seed;
  return c;
}

json checkpoint_to_json(const Checkpoint& ckpt) {
  json j;
  j["format"] = "reina-lab-checkpoint";
  j["version"] = kCheckpointVersion;
  j["arch"] = json(nlohmann::json(ckpt.params.arch));
  j["stage"] = ckpt.stage;
  j["seed"] = ckpt.seed;
  json prov = json::array();
  for (const auto& p : ckpt.provenance) {
    prov.push_back({{"stage", p.stage}, {"seed", p.seed}, {"steps", p.steps}, {"note", p.note}});
  }
  j["provenance"] = prov;
  j["train_config"] = ckpt.train_config;
  j["rng_state"] = ckpt.rng_state;
  j["counters"] = ckpt.counters;
  json params = json::object();
  const ModelParams& mp = ckpt.params;
  for (std::size_t i = 0; i < mp.names.size(); ++i) {
    params[mp.names[i]] = {{"shape", mp.tensors[i].shape()}, {"data", mp.tensors[i].storage()}};
  }
  j["params"] = std::move(params);
  j["log"] = ckpt.log;
  return j;
}

Checkpoint checkpoint_from_json(const json& j) {
  try {
    if (j.value("format", "") != "reina-lab-checkpoint") throw LoadError("not a reina-lab checkpoint");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw LoadError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint c;
    const ArchConfig arch = nlohmann::json::parse(j.at("arch").dump()).get<ArchConfig>();
    c.params = init_params(arch, 0);
    c.stage = j.at("stage").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& p : j.at("provenance")) {
      c.provenance.push_back({p.at("stage").get<int>(), p.at("seed").get<std::uint64_t>(), p.at("steps").get<int>(),
                              p.at("note").get<std::string>()});
    }
    c.train_config = j.at("train_config");
    c.rng_state = j.at("rng_state");
    c.counters = j.at("counters");
    c.log = j.at("log");
    const json& params = j.at("params");
    if (params.size() != c.params.names.size()) throw LoadError("checkpoint parameter count does not match arch");
    for (std::size_t i = 0; i < c.params.names.size(); ++i) {
      const std::string& name = c.params.names[i];
      if (!params.contains(name)) throw LoadError("checkpoint missing parameter " + name);
      const json& entry = params.at(name);
      ad::Tensor& t = c.params.tensors[i];
      if (entry.at("shape").get<ad::Shape>() != t.shape()) throw LoadError("shape mismatch for " + name);
      auto data = entry.at("data").get<std::vector<double>>();
      if (data.size() != t.size()) throw LoadError("data length mismatch for " + name);
      t.storage() = std::move(data);
      if (!t.all_finite()) throw LoadError("non-finite values in " + name);
    }
    return c;
  } catch (const LoadError&) {
    throw;
  } catch (const std::exception& e) {
    throw LoadError(std::string("corrupt checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(ckpt).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const std::exception& e) {
    throw LoadError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace reina
