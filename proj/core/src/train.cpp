#include "invdes/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "invdes/optimizers.hpp"
#include "invdes/rng.hpp"

namespace invdes {

namespace {

bool alive(const Trajectory& traj, int frame, int particle, const FloorSpec& floor) {
  if (!floor.removes) return true;
  return traj.frames[frame].at(particle, 1) > floor.height;
}

// Particles usable as a training row at time t: fluid, with a full history
// window and the target frame all above the floor.
std::vector<int> valid_rows(const Trajectory& traj, int t, const FloorSpec& floor) {
  std::vector<int> rows;
  for (int i = 0; i < traj.num_particles(); ++i) {
    if (traj.node_types[i] != kFluidNode) continue;
    bool ok = true;
    for (int f = t - kHistory; f <= t + 1; ++f) ok = ok && alive(traj, f, i, floor);
    if (ok) rows.push_back(i);
  }
  return rows;
}

struct Sample {
  ParticleState state;
  std::vector<int> rows;
  Tensor target_norm;  // rows x 2
};

Sample make_sample(const Trajectory& traj, int t, const std::vector<int>& rows,
                   const NormStats& stats, double noise_scale, const FloorSpec& floor,
                   Rng& rng) {
  const int n = traj.num_particles();
  const double dt = traj.dt;

  // Noised copies of the history frames t-H..t; noise only on usable rows.
  std::vector<std::vector<double>> noised(kHistory + 1);
  for (int h = 0; h <= kHistory; ++h) noised[h] = traj.frames[t - kHistory + h].data();
  for (int h = 0; h <= kHistory; ++h)
    for (int i : rows)
      for (int c = 0; c < 2; ++c)
        noised[h][static_cast<size_t>(i) * 2 + c] += rng.normal() * noise_scale;

  std::vector<double> hist(static_cast<size_t>(n) * 2 * kHistory);
  for (int i = 0; i < n; ++i)
    for (int h = 0; h < kHistory; ++h)
      for (int c = 0; c < 2; ++c)
        hist[static_cast<size_t>(i) * 2 * kHistory + 2 * h + c] =
            (noised[h + 1][static_cast<size_t>(i) * 2 + c] -
             noised[h][static_cast<size_t>(i) * 2 + c]) /
            dt;

  std::vector<double> target(rows.size() * 2);
  for (size_t k = 0; k < rows.size(); ++k) {
    const int i = rows[k];
    for (int c = 0; c < 2; ++c) {
      const double u_next = traj.frames[t + 1].at(i, c);
      const double u_t = noised[kHistory][static_cast<size_t>(i) * 2 + c];
      const double v_last = hist[static_cast<size_t>(i) * 2 * kHistory + 2 * (kHistory - 1) + c];
      const double accel = ((u_next - u_t) / dt - v_last) / dt;
      target[2 * k + c] =
          (accel - stats.acc_mean[c]) / std::max(stats.acc_std[c], 1e-8);
    }
  }

  Sample sample{
      ParticleState(Tensor({n, 2}, std::move(noised[kHistory])),
                    Tensor({n, 2 * kHistory}, std::move(hist)), traj.node_types),
      rows,
      Tensor({static_cast<int>(rows.size()), 2}, std::move(target))};
  if (floor.removes) {
    for (int i = 0; i < n; ++i)
      sample.state.removed[i] = traj.node_types[i] == kFluidNode &&
                                sample.state.positions.at(i, 1) <= floor.height;
  }
  return sample;
}

}  // namespace

NormStats compute_norm_stats(const std::vector<Trajectory>& dataset, const FloorSpec& floor) {
  double v_sum[2] = {0, 0}, v_sq[2] = {0, 0};
  double a_sum[2] = {0, 0}, a_sq[2] = {0, 0};
  long v_count = 0, a_count = 0;
  for (const Trajectory& traj : dataset) {
    const double dt = traj.dt;
    for (int t = 1; t < traj.num_frames(); ++t)
      for (int i = 0; i < traj.num_particles(); ++i) {
        if (traj.node_types[i] != kFluidNode) continue;
        if (!alive(traj, t, i, floor) || !alive(traj, t - 1, i, floor)) continue;
        for (int c = 0; c < 2; ++c) {
          const double v = (traj.frames[t].at(i, c) - traj.frames[t - 1].at(i, c)) / dt;
          v_sum[c] += v;
          v_sq[c] += v * v;
        }
        ++v_count;
        if (t + 1 >= traj.num_frames() || !alive(traj, t + 1, i, floor)) continue;
        for (int c = 0; c < 2; ++c) {
          const double a = (traj.frames[t + 1].at(i, c) - 2 * traj.frames[t].at(i, c) +
                            traj.frames[t - 1].at(i, c)) /
                           (dt * dt);
          a_sum[c] += a;
          a_sq[c] += a * a;
        }
        ++a_count;
      }
  }
  NormStats stats;
  for (int c = 0; c < 2; ++c) {
    if (v_count > 0) {
      stats.vel_mean[c] = v_sum[c] / v_count;
      stats.vel_std[c] =
          std::sqrt(std::max(v_sq[c] / v_count - stats.vel_mean[c] * stats.vel_mean[c], 0.0));
    }
    if (a_count > 0) {
      stats.acc_mean[c] = a_sum[c] / a_count;
      stats.acc_std[c] =
          std::sqrt(std::max(a_sq[c] / a_count - stats.acc_mean[c] * stats.acc_mean[c], 0.0));
    }
    stats.vel_std[c] = std::max(stats.vel_std[c], 1e-8);
    stats.acc_std[c] = std::max(stats.acc_std[c], 1e-8);
  }
  return stats;
}

TrainResult train_model(const std::vector<Trajectory>& dataset, const TrainConfig& cfg) {
  if (dataset.empty()) throw ConfigError("train_model: empty dataset");
  for (const Trajectory& traj : dataset)
    if (traj.num_frames() < kHistory + 2)
      throw ConfigError("train_model: trajectory too short for the history window");

  TrainResult result;
  result.params = ModelParams::init(cfg.hyper, mix_seed(cfg.seed, 0x1717));
  result.params.stats = compute_norm_stats(dataset, cfg.floor);

  GDConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  adam_cfg.grad_clip = 0;
  AdamState adam;

  Rng rng(mix_seed(cfg.seed, 0x7a41));
  const int lr_drop_step = static_cast<int>(cfg.lr_drop_fraction * cfg.steps);
  result.losses.reserve(cfg.steps);

  for (int step = 0; step < cfg.steps; ++step) {
    Tape tape;
    ModelParams attached = result.params.attach(tape);

    Tensor loss;
    for (int b = 0; b < cfg.batch_size; ++b) {
      int ti = 0, t = 0;
      std::vector<int> rows;
      for (int attempt = 0; attempt < 128 && rows.empty(); ++attempt) {
        ti = rng.uniform_int(static_cast<int>(dataset.size()));
        t = kHistory + rng.uniform_int(dataset[ti].num_frames() - kHistory - 1);
        rows = valid_rows(dataset[ti], t, cfg.floor);
      }
      if (rows.empty()) throw ConfigError("train_model: no usable training rows found");
      const Sample sample = make_sample(dataset[ti], t, rows, result.params.stats,
                                        cfg.hyper.noise_scale, cfg.floor, rng);

      const LatentGraph latent = process(encode(sample.state, attached), attached);
      const Tensor raw = apply_mlp(attached.decoder, latent.nodes);
      const Tensor sample_loss =
          mean(square(sub(gather(raw, sample.rows), sample.target_norm)));
      loss = b == 0 ? sample_loss : add(loss, sample_loss);
    }
    if (cfg.batch_size > 1) loss = scalar_mul(loss, 1.0 / cfg.batch_size);

    const double loss_value = loss.value();
    if (!std::isfinite(loss_value))
      throw NumericError("training loss non-finite at step " + std::to_string(step));
    result.losses.push_back(loss_value);

    auto grads = tape.backward(loss);
    std::vector<Tensor*> weights = attached.weights();
    std::vector<Tensor*> targets = result.params.weights();
    std::vector<double> flat_phi, flat_grad;
    for (size_t w = 0; w < weights.size(); ++w) {
      const auto& val = targets[w]->data();
      flat_phi.insert(flat_phi.end(), val.begin(), val.end());
      const auto& g = grads.at(weights[w]->node()).data();
      flat_grad.insert(flat_grad.end(), g.begin(), g.end());
    }
    const double lr_t = step < lr_drop_step ? cfg.lr : cfg.lr * 0.5;
    adam_step(flat_phi, std::move(flat_grad), adam, adam_cfg, lr_t);

    size_t offset = 0;
    for (Tensor* w : targets) {
      std::vector<double> chunk(flat_phi.begin() + offset, flat_phi.begin() + offset + w->size());
      offset += w->size();
      *w = Tensor(w->shape(), std::move(chunk));
    }
  }
  return result;
}

void write_loss_csv(const std::string& path, const std::vector<double>& losses) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << "step,loss\n";
  char buf[48];
  for (size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, losses[i]);
    os << buf;
  }
}

namespace {

double position_mse(const std::vector<Trajectory>& dataset, const FloorSpec& floor,
                    const ModelParams* params) {
  double total = 0;
  long count = 0;
  for (const Trajectory& traj : dataset) {
    const double dt = traj.dt;
    const int n = traj.num_particles();
    for (int t = kHistory; t + 1 < traj.num_frames(); ++t) {
      const std::vector<int> rows = valid_rows(traj, t, floor);
      if (rows.empty()) continue;

      std::vector<double> hist(static_cast<size_t>(n) * 2 * kHistory);
      for (int i = 0; i < n; ++i)
        for (int h = 0; h < kHistory; ++h)
          for (int c = 0; c < 2; ++c)
            hist[static_cast<size_t>(i) * 2 * kHistory + 2 * h + c] =
                (traj.frames[t - kHistory + h + 1].at(i, c) -
                 traj.frames[t - kHistory + h].at(i, c)) /
                dt;
      ParticleState state(traj.frames[t].detached(), Tensor({n, 2 * kHistory}, std::move(hist)),
                          traj.node_types);
      if (floor.removes)
        for (int i = 0; i < n; ++i)
          state.removed[i] = traj.node_types[i] == kFluidNode &&
                             state.positions.at(i, 1) <= floor.height;

      Tensor accel;
      if (params) accel = decode(process(encode(state, *params), *params), *params);
      for (int i : rows) {
        for (int c = 0; c < 2; ++c) {
          const double v_last =
              state.velocity_history.at(i, 2 * (kHistory - 1) + c);
          const double a = params ? accel.at(i, c) : 0.0;
          const double u_pred = state.positions.at(i, c) + (v_last + a * dt) * dt;
          const double diff = u_pred - traj.frames[t + 1].at(i, c);
          total += diff * diff;
        }
        ++count;
      }
    }
  }
  return count > 0 ? total / count : 0.0;
}

}  // namespace

double one_step_position_mse(const ModelParams& params, const std::vector<Trajectory>& dataset,
                             const FloorSpec& floor) {
  return position_mse(dataset, floor, &params);
}

double baseline_position_mse(const std::vector<Trajectory>& dataset, const FloorSpec& floor) {
  return position_mse(dataset, floor, nullptr);
}

std::vector<double> sample_position_noise(int count, double scale, Rng& rng) {
  std::vector<double> out(count);
  for (double& v : out) v = rng.normal() * scale;
  return out;
}

std::vector<Trajectory> dataset_split(const std::vector<Trajectory>& dataset, int split,
                                      int num_splits) {
  if (num_splits < 1 || split < 0 || split >= num_splits)
    throw ConfigError("dataset_split: bad split index");
  const size_t n = dataset.size();
  const size_t lo = n * split / num_splits;
  const size_t hi = n * (split + 1) / num_splits;
  if (lo == hi) throw ConfigError("dataset_split: split is empty");
  return {dataset.begin() + lo, dataset.begin() + hi};
}

}  // namespace invdes
