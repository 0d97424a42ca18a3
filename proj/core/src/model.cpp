#include "invdes/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "invdes/rng.hpp"

namespace invdes {

using nlohmann::json;

Tensor apply_mlp(const Mlp& mlp, const Tensor& x) {
  Tensor h = relu(add_row(matmul(x, mlp.w1), mlp.b1));
  h = relu(add_row(matmul(h, mlp.w2), mlp.b2));
  return add_row(matmul(h, mlp.w3), mlp.b3);
}

namespace {

Mlp init_mlp(int in, int width, int out, Rng& rng) {
  auto init_layer = [&](int fan_in, int fan_out) {
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> w(static_cast<size_t>(fan_in) * fan_out);
    for (double& v : w) v = rng.uniform(-s, s);
    return Tensor({fan_in, fan_out}, std::move(w));
  };
  Mlp mlp;
  mlp.w1 = init_layer(in, width);
  mlp.b1 = Tensor::zeros({width});
  mlp.w2 = init_layer(width, width);
  mlp.b2 = Tensor::zeros({width});
  mlp.w3 = init_layer(width, out);
  mlp.b3 = Tensor::zeros({out});
  return mlp;
}

void collect(const Mlp& mlp, std::vector<const Tensor*>& out) {
  out.insert(out.end(), {&mlp.w1, &mlp.b1, &mlp.w2, &mlp.b2, &mlp.w3, &mlp.b3});
}

void collect(Mlp& mlp, std::vector<Tensor*>& out) {
  out.insert(out.end(), {&mlp.w1, &mlp.b1, &mlp.w2, &mlp.b2, &mlp.w3, &mlp.b3});
}

double clamped(double sd) { return std::max(sd, 1e-8); }

}  // namespace

ModelParams ModelParams::init(const ModelHyper& hyper, std::uint64_t seed) {
  Rng rng(seed);
  ModelParams p;
  p.hyper = hyper;
  p.node_encoder = init_mlp(node_input_width(), hyper.width, hyper.width, rng);
  p.edge_encoder = init_mlp(edge_input_width(), hyper.width, hyper.width, rng);
  p.processors.resize(hyper.blocks);
  for (ProcessorBlock& block : p.processors) {
    block.edge = init_mlp(3 * hyper.width, hyper.width, hyper.width, rng);
    block.node = init_mlp(2 * hyper.width, hyper.width, hyper.width, rng);
  }
  p.decoder = init_mlp(hyper.width, hyper.width, 2, rng);
  return p;
}

std::vector<Tensor*> ModelParams::weights() {
  std::vector<Tensor*> out;
  collect(node_encoder, out);
  collect(edge_encoder, out);
  for (ProcessorBlock& block : processors) {
    collect(block.edge, out);
    collect(block.node, out);
  }
  collect(decoder, out);
  return out;
}

std::vector<const Tensor*> ModelParams::weights() const {
  std::vector<const Tensor*> out;
  collect(node_encoder, out);
  collect(edge_encoder, out);
  for (const ProcessorBlock& block : processors) {
    collect(block.edge, out);
    collect(block.node, out);
  }
  collect(decoder, out);
  return out;
}

int ModelParams::num_parameters() const {
  int n = 0;
  for (const Tensor* t : weights()) n += t->size();
  return n;
}

ModelParams ModelParams::attach(Tape& tape) const {
  ModelParams copy = *this;
  for (Tensor* t : copy.weights()) *t = tape.leaf(*t);
  return copy;
}

LatentGraph encode(const ParticleState& state, const ModelParams& params, const Box& walls) {
  const int n = state.num_particles();
  const double r = params.hyper.radius;

  LatentGraph latent;
  latent.edge_set = build_radius_edges(state.positions.detached(), r);
  // removed (frozen) particles no longer interact with anything
  bool any_removed = false;
  for (char c : state.removed) any_removed = any_removed || c;
  if (any_removed) {
    EdgeSet filtered;
    std::vector<double> disp, dist;
    for (int k = 0; k < latent.edge_set.size(); ++k) {
      const int s = latent.edge_set.senders[k], rc = latent.edge_set.receivers[k];
      if (state.removed[s] || state.removed[rc]) continue;
      filtered.senders.push_back(s);
      filtered.receivers.push_back(rc);
      disp.push_back(latent.edge_set.rel_disp.at(k, 0));
      disp.push_back(latent.edge_set.rel_disp.at(k, 1));
      dist.push_back(latent.edge_set.dist.at(k, 0));
    }
    const int e = filtered.size();
    filtered.rel_disp = Tensor({e, 2}, std::move(disp));
    filtered.dist = Tensor({e, 1}, std::move(dist));
    latent.edge_set = std::move(filtered);
  }

  // velocity history, normalized per component
  std::vector<double> mean_row(2 * kHistory), inv_row(2 * kHistory);
  for (int h = 0; h < kHistory; ++h)
    for (int c = 0; c < 2; ++c) {
      mean_row[2 * h + c] = -params.stats.vel_mean[c];
      inv_row[2 * h + c] = 1.0 / clamped(params.stats.vel_std[c]);
    }
  const Tensor vel = mul_row(add_row(state.velocity_history, Tensor({2 * kHistory}, mean_row)),
                             Tensor({2 * kHistory}, inv_row));

  std::vector<double> onehot(static_cast<size_t>(n) * kNumNodeTypes, 0.0);
  for (int i = 0; i < n; ++i)
    onehot[static_cast<size_t>(i) * kNumNodeTypes + state.node_types[i]] = 1.0;

  const Tensor x = slice_cols(state.positions, 0, 1);
  const Tensor y = slice_cols(state.positions, 1, 2);
  auto clamp_scaled = [&](const Tensor& d) {
    // min(d, r) = r - relu(r - d), then scaled to O(1)
    return scalar_mul(sub(Tensor::full({n, 1}, r), relu(sub(Tensor::full({n, 1}, r), d))),
                      1.0 / r);
  };
  const Tensor d_left = clamp_scaled(add_scalar(x, -walls.x_min));
  const Tensor d_right = clamp_scaled(add_scalar(scalar_mul(x, -1.0), walls.x_max));
  const Tensor d_bottom = clamp_scaled(add_scalar(y, -walls.y_min));
  const Tensor d_top = clamp_scaled(add_scalar(scalar_mul(y, -1.0), walls.y_max));

  const Tensor node_in = concat_cols(
      {vel, Tensor({n, kNumNodeTypes}, std::move(onehot)), d_left, d_right, d_bottom, d_top});
  latent.nodes = layer_norm(apply_mlp(params.node_encoder, node_in));

  const Tensor us = gather(state.positions, latent.edge_set.senders);
  const Tensor ur = gather(state.positions, latent.edge_set.receivers);
  const Tensor du = sub(ur, us);
  const Tensor dist = sqrt(matmul(square(du), Tensor::full({2, 1}, 1.0)));
  const Tensor edge_in = concat_cols({scalar_mul(du, 1.0 / r), scalar_mul(dist, 1.0 / r)});
  latent.edges = layer_norm(apply_mlp(params.edge_encoder, edge_in));
  return latent;
}

LatentGraph process(LatentGraph latent, const ModelParams& params) {
  const int n = latent.nodes.shape()[0];
  for (const ProcessorBlock& block : params.processors) {
    const Tensor sender_lat = gather(latent.nodes, latent.edge_set.senders);
    const Tensor receiver_lat = gather(latent.nodes, latent.edge_set.receivers);
    const Tensor edge_in = concat_cols({latent.edges, sender_lat, receiver_lat});
    latent.edges = add(latent.edges, layer_norm(apply_mlp(block.edge, edge_in)));

    const Tensor agg = scatter_add(latent.edges, latent.edge_set.receivers, n);
    const Tensor node_in = concat_cols({latent.nodes, agg});
    latent.nodes = add(latent.nodes, layer_norm(apply_mlp(block.node, node_in)));
  }
  return latent;
}

Tensor decode(const LatentGraph& latent, const ModelParams& params) {
  const Tensor raw = apply_mlp(params.decoder, latent.nodes);
  const Tensor std_row({2}, {clamped(params.stats.acc_std[0]), clamped(params.stats.acc_std[1])});
  const Tensor mean_row({2}, {params.stats.acc_mean[0], params.stats.acc_mean[1]});
  return add_row(mul_row(raw, std_row), mean_row);
}

ParticleState model_step(const ParticleState& state, const ModelParams& params, double dt,
                         const FloorSpec& floor, const Box& walls) {
  const Tensor accel = decode(process(encode(state, params, walls), params), params);
  return advance_state(state, accel, dt, floor);
}

std::vector<ParticleState> rollout_model(const ParticleState& initial,
                                         const ModelParams& params, int num_steps, double dt,
                                         const FloorSpec& floor, const Box& walls) {
  std::vector<ParticleState> out;
  out.reserve(num_steps + 1);
  out.push_back(initial);
  for (int t = 0; t < num_steps; ++t) {
    try {
      out.push_back(model_step(out.back(), params, dt, floor, walls));
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at step " + std::to_string(t));
    }
  }
  return out;
}

void save_weights(const std::string& path, const ModelParams& params,
                  const std::string& provenance_json) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write("IDWTS1\0", 7);

  json header;
  header["width"] = params.hyper.width;
  header["blocks"] = params.hyper.blocks;
  header["radius"] = params.hyper.radius;
  header["noise_scale"] = params.hyper.noise_scale;
  header["history"] = kHistory;
  header["stats"] = {{"vel_mean", params.stats.vel_mean},
                     {"vel_std", params.stats.vel_std},
                     {"acc_mean", params.stats.acc_mean},
                     {"acc_std", params.stats.acc_std}};
  if (!provenance_json.empty()) header["provenance"] = json::parse(provenance_json);
  const std::string h = header.dump();
  const std::uint32_t len = static_cast<std::uint32_t>(h.size());
  os.write(reinterpret_cast<const char*>(&len), 4);
  os.write(h.data(), h.size());

  for (const Tensor* t : params.weights())
    os.write(reinterpret_cast<const char*>(t->data().data()), sizeof(double) * t->size());
  if (!os) throw std::runtime_error("write failure on " + path);
}

ModelParams load_weights(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open weights file " + path);
  char magic[7];
  is.read(magic, 7);
  if (!is || std::string(magic, 7) != std::string("IDWTS1\0", 7))
    throw ConfigError("not an IDWTS1 file: " + path);
  std::uint32_t len = 0;
  is.read(reinterpret_cast<char*>(&len), 4);
  std::string h(len, '\0');
  is.read(h.data(), len);
  const json header = json::parse(h);

  ModelHyper hyper;
  hyper.width = header.at("width").get<int>();
  hyper.blocks = header.at("blocks").get<int>();
  hyper.radius = header.at("radius").get<double>();
  hyper.noise_scale = header.at("noise_scale").get<double>();
  if (header.at("history").get<int>() != kHistory)
    throw ConfigError("weights file history length mismatch: " + path);

  ModelParams params = ModelParams::init(hyper, 0);
  params.stats.vel_mean = header.at("stats").at("vel_mean").get<std::array<double, 2>>();
  params.stats.vel_std = header.at("stats").at("vel_std").get<std::array<double, 2>>();
  params.stats.acc_mean = header.at("stats").at("acc_mean").get<std::array<double, 2>>();
  params.stats.acc_std = header.at("stats").at("acc_std").get<std::array<double, 2>>();

  for (Tensor* t : params.weights()) {
    std::vector<double> buf(t->size());
    is.read(reinterpret_cast<char*>(buf.data()), sizeof(double) * buf.size());
    *t = Tensor(t->shape(), std::move(buf));
  }
  if (!is) throw ConfigError("truncated weights file: " + path);
  return params;
}

Ensemble::Ensemble(std::vector<ModelParams> m) : members(std::move(m)) {
  if (members.empty()) throw ConfigError("ensemble needs at least one member");
  for (const ModelParams& p : members)
    if (!(p.hyper == members.front().hyper))
      throw ConfigError("ensemble members must share hyperparameters");
}

ValueGrad ensemble_value_and_grad(const std::function<ValueGrad(const ModelParams&)>& objective,
                                  const Ensemble& ensemble) {
  ValueGrad total;
  for (const ModelParams& member : ensemble.members) {
    ValueGrad vg = objective(member);
    if (total.grad.empty()) total.grad.assign(vg.grad.size(), 0.0);
    if (vg.grad.size() != total.grad.size())
      throw ShapeError("ensemble members returned gradients of different sizes");
    total.value += vg.value;
    for (size_t i = 0; i < vg.grad.size(); ++i) total.grad[i] += vg.grad[i];
  }
  const double inv = 1.0 / ensemble.size();
  total.value *= inv;
  for (double& g : total.grad) g *= inv;
  return total;
}

}  // namespace invdes
