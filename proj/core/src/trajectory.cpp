#include "invdes/trajectory.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace invdes {

namespace fs = std::filesystem;
using nlohmann::json;

void write_trajectory(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write("IDTRAJ1\0", 8);

  json header;
  header["num_steps"] = traj.num_frames();
  header["num_particles"] = traj.num_particles();
  header["dt"] = traj.dt;
  header["radius"] = traj.radius;
  header["node_types"] = traj.node_types;
  const std::string h = header.dump();
  const std::uint32_t len = static_cast<std::uint32_t>(h.size());
  os.write(reinterpret_cast<const char*>(&len), 4);
  os.write(h.data(), h.size());

  std::vector<float> buf;
  for (const Tensor& frame : traj.frames) {
    if (frame.shape() != Tensor::Shape{traj.num_particles(), 2})
      throw ShapeError("write_trajectory: bad frame shape");
    buf.resize(frame.size());
    for (int i = 0; i < frame.size(); ++i) buf[i] = static_cast<float>(frame.data()[i]);
    os.write(reinterpret_cast<const char*>(buf.data()), sizeof(float) * buf.size());
  }
  if (!os) throw std::runtime_error("write failure on " + path);
}

Trajectory read_trajectory(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != std::string("IDTRAJ1\0", 8))
    throw ConfigError("not an IDTRAJ1 file: " + path);
  std::uint32_t len = 0;
  is.read(reinterpret_cast<char*>(&len), 4);
  std::string h(len, '\0');
  is.read(h.data(), len);
  const json header = json::parse(h);

  Trajectory traj;
  traj.dt = header.at("dt").get<double>();
  traj.radius = header.at("radius").get<double>();
  traj.node_types = header.at("node_types").get<std::vector<int>>();
  const int steps = header.at("num_steps").get<int>();
  const int n = header.at("num_particles").get<int>();
  if (n != traj.num_particles()) throw ConfigError("IDTRAJ1 header inconsistent: " + path);

  traj.frames.reserve(steps);
  std::vector<float> buf(static_cast<size_t>(n) * 2);
  for (int s = 0; s < steps; ++s) {
    is.read(reinterpret_cast<char*>(buf.data()), sizeof(float) * buf.size());
    if (!is) throw ConfigError("truncated IDTRAJ1 file: " + path);
    std::vector<double> d(buf.begin(), buf.end());
    traj.frames.emplace_back(Tensor::Shape{n, 2}, std::move(d));
  }
  return traj;
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  json j;
  j["seed"] = manifest.seed;
  j["count"] = manifest.count;
  j["files"] = manifest.files;
  j["config"] = json::parse(manifest.config_json.empty() ? "{}" : manifest.config_json);
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open manifest " + path);
  json j;
  is >> j;
  DatasetManifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.count = j.at("count").get<int>();
  m.files = j.at("files").get<std::vector<std::string>>();
  m.config_json = j.at("config").dump();
  m.directory = fs::path(path).parent_path().string();
  return m;
}

std::vector<Trajectory> load_manifest_trajectories(const DatasetManifest& manifest) {
  std::vector<Trajectory> out;
  out.reserve(manifest.files.size());
  for (const std::string& f : manifest.files) {
    const fs::path p = manifest.directory.empty() ? fs::path(f) : fs::path(manifest.directory) / f;
    out.push_back(read_trajectory(p.string()));
  }
  return out;
}

}  // namespace invdes
