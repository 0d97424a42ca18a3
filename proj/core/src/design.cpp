#include "invdes/design.hpp"

#include <cmath>

#include "invdes/rng.hpp"

namespace invdes {

std::string design_kind_name(DesignKind kind) {
  switch (kind) {
    case DesignKind::RelativeJoints: return "relative-joints";
    case DesignKind::AbsoluteJoints: return "absolute-joints";
    case DesignKind::RotorGrid: return "rotor-grid";
    case DesignKind::Heightfield: return "heightfield";
    case DesignKind::HeightfieldControlPoints: return "heightfield-control-points";
  }
  return "?";
}

DesignKind design_kind_from_name(const std::string& name) {
  if (name == "relative-joints") return DesignKind::RelativeJoints;
  if (name == "absolute-joints") return DesignKind::AbsoluteJoints;
  if (name == "rotor-grid") return DesignKind::RotorGrid;
  if (name == "heightfield") return DesignKind::Heightfield;
  if (name == "heightfield-control-points") return DesignKind::HeightfieldControlPoints;
  throw ConfigError("unknown design kind '" + name + "'");
}

namespace {

// Interpolation matrix sampling a polyline of `nodes` vertices: every
// inter-node span gets `counts[i]` points at fractions j/counts[i], plus the
// final vertex.
Tensor polyline_sampling_matrix(int nodes, const std::vector<int>& counts) {
  int total = 1;
  for (int c : counts) total += c;
  std::vector<double> s(static_cast<size_t>(total) * nodes, 0.0);
  int row = 0;
  for (int seg = 0; seg < nodes - 1; ++seg) {
    for (int j = 0; j < counts[seg]; ++j, ++row) {
      const double f = static_cast<double>(j) / counts[seg];
      s[static_cast<size_t>(row) * nodes + seg] = 1.0 - f;
      s[static_cast<size_t>(row) * nodes + seg + 1] = f;
    }
  }
  s[static_cast<size_t>(row) * nodes + (nodes - 1)] = 1.0;
  return Tensor({total, nodes}, std::move(s));
}

std::vector<Segment> polyline_segments(const Tensor& vertices) {
  std::vector<Segment> out;
  for (int i = 0; i + 1 < vertices.shape()[0]; ++i)
    out.push_back({{vertices.at(i, 0), vertices.at(i, 1)},
                   {vertices.at(i + 1, 0), vertices.at(i + 1, 1)}});
  return out;
}

ToolGeometry jointed_tool(const Tensor& phi, const JointedToolSpec& spec, bool relative) {
  const int k = spec.joints;
  const int expected = k + (spec.with_offset ? 2 : 0);
  if (phi.shape() != Tensor::Shape{expected})
    throw ShapeError("jointed tool: expected " + std::to_string(expected) + " parameters");
  if (spec.tool_length <= 0) throw ConfigError("tool length must be positive");

  const Tensor angles_flat = spec.with_offset ? slice_rows(phi, 0, k) : phi;
  const Tensor phi_col = reshape(angles_flat, {k, 1});

  Tensor theta = phi_col;
  if (relative) {
    std::vector<double> tri(static_cast<size_t>(k) * k, 0.0);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j <= i; ++j) tri[static_cast<size_t>(i) * k + j] = 1.0;
    theta = matmul(Tensor({k, k}, std::move(tri)), phi_col);
  }

  const Tensor dirs = concat_cols({cos(theta), sin(theta)});  // k x 2
  const double seg_len = spec.tool_length / k;
  std::vector<double> tri(static_cast<size_t>(k) * k, 0.0);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j <= i; ++j) tri[static_cast<size_t>(i) * k + j] = 1.0;
  const Tensor joint_offsets = scalar_mul(matmul(Tensor({k, k}, std::move(tri)), dirs), seg_len);

  Tensor vertices = concat_rows({Tensor::zeros({1, 2}), joint_offsets});  // (k+1) x 2
  vertices = add_row(vertices, Tensor({2}, {spec.anchor[0], spec.anchor[1]}));
  if (spec.with_offset)
    vertices = add_row(vertices, reshape(slice_rows(phi, k, k + 2), {1, 2}));

  std::vector<int> counts(k, std::max(1, static_cast<int>(std::round(seg_len / spec.spacing))));
  ToolGeometry geom;
  geom.particles = matmul(polyline_sampling_matrix(k + 1, counts), vertices);
  geom.segments = polyline_segments(vertices.detached());
  return geom;
}

}  // namespace

ToolGeometry tool_from_relative_angles(const Tensor& phi, const JointedToolSpec& spec) {
  return jointed_tool(phi, spec, true);
}

ToolGeometry tool_from_absolute_angles(const Tensor& phi, const JointedToolSpec& spec) {
  return jointed_tool(phi, spec, false);
}

ToolGeometry rotor_grid(const Tensor& phi, const RotorGridSpec& spec) {
  const int n = spec.n;
  const int rotors = n * n;
  if (phi.shape() != Tensor::Shape{rotors})
    throw ShapeError("rotor grid: expected " + std::to_string(rotors) + " parameters");

  std::vector<std::array<double, 2>> centers(rotors);
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      const double fx = n == 1 ? 0.5 : static_cast<double>(ix) / (n - 1);
      const double fy = n == 1 ? 0.5 : static_cast<double>(iy) / (n - 1);
      centers[iy * n + ix] = {spec.domain.x_min + fx * spec.domain.width(),
                              spec.domain.y_min + fy * spec.domain.height()};
    }

  const Tensor phi_col = reshape(phi, {rotors, 1});
  const Tensor dirs = concat_cols({cos(phi_col), sin(phi_col)});  // rotors x 2

  const double hl = spec.rotor_length / 2;
  const int m = std::max(2, static_cast<int>(std::round(spec.rotor_length / spec.spacing)) + 1);
  const int total = rotors * m;
  std::vector<double> sel(static_cast<size_t>(total) * rotors, 0.0);
  std::vector<double> center_rep(static_cast<size_t>(total) * 2);
  for (int r = 0; r < rotors; ++r)
    for (int i = 0; i < m; ++i) {
      const int row = r * m + i;
      const double a = -hl + i * (2 * hl / (m - 1));
      sel[static_cast<size_t>(row) * rotors + r] = a;
      center_rep[static_cast<size_t>(row) * 2] = centers[r][0];
      center_rep[static_cast<size_t>(row) * 2 + 1] = centers[r][1];
    }

  ToolGeometry geom;
  geom.particles = add(matmul(Tensor({total, rotors}, std::move(sel)), dirs),
                       Tensor({total, 2}, std::move(center_rep)));
  for (int r = 0; r < rotors; ++r) {
    const double c = std::cos(phi[r]), s = std::sin(phi[r]);
    geom.segments.push_back({{centers[r][0] - hl * c, centers[r][1] - hl * s},
                             {centers[r][0] + hl * c, centers[r][1] + hl * s}});
  }
  return geom;
}

Tensor heightfield_offsets(const Tensor& phi, double gamma_h) {
  return scalar_mul(tanh(phi), gamma_h);
}

Tensor interpolate_control_points(const Tensor& phi_ctrl, int resolution) {
  const int c = phi_ctrl.shape()[0];
  if (c < 1) throw ShapeError("interpolate_control_points: empty control vector");
  std::vector<double> w(static_cast<size_t>(resolution) * c, 0.0);
  for (int i = 0; i < resolution; ++i) {
    if (c == 1) {
      w[static_cast<size_t>(i) * c] = 1.0;
      continue;
    }
    const double x = resolution == 1 ? 0.0
                                     : static_cast<double>(i) * (c - 1) / (resolution - 1);
    int j = static_cast<int>(std::floor(x));
    if (j >= c - 1) j = c - 2;
    const double f = x - j;
    w[static_cast<size_t>(i) * c + j] = 1.0 - f;
    w[static_cast<size_t>(i) * c + j + 1] = f;
  }
  return reshape(matmul(Tensor({resolution, c}, std::move(w)), reshape(phi_ctrl, {c, 1})),
                 {resolution});
}

ToolGeometry heightfield_tool(const Tensor& phi, const HeightfieldSpec& spec) {
  const int m = spec.resolution;
  if (m < 2) throw ConfigError("heightfield resolution must be at least 2");
  Tensor field = phi;
  if (spec.control_points > 0) {
    if (phi.shape() != Tensor::Shape{spec.control_points})
      throw ShapeError("heightfield: expected " + std::to_string(spec.control_points) +
                       " control points");
    field = interpolate_control_points(phi, m);
  } else if (phi.shape() != Tensor::Shape{m}) {
    throw ShapeError("heightfield: expected " + std::to_string(m) + " field parameters");
  }

  const Tensor y = add_scalar(reshape(heightfield_offsets(field, spec.gamma_h), {m, 1}),
                              spec.base_y);
  std::vector<double> xs(m);
  for (int i = 0; i < m; ++i)
    xs[i] = spec.x_min + (spec.x_max - spec.x_min) * i / (m - 1);
  const Tensor vertices = concat_cols({Tensor({m, 1}, std::move(xs)), y});

  const double node_dx = (spec.x_max - spec.x_min) / (m - 1);
  std::vector<int> counts(m - 1, std::max(1, static_cast<int>(std::round(node_dx / spec.spacing))));
  ToolGeometry geom;
  geom.particles = matmul(polyline_sampling_matrix(m, counts), vertices);
  geom.segments = polyline_segments(vertices.detached());
  return geom;
}

ParticleState assemble_initial_state(const ToolGeometry& tool, const SceneTemplate& scene) {
  if (scene.fluid_box.width() <= 0 || scene.fluid_box.height() <= 0)
    throw ConfigError("fluid box is degenerate");
  const int nx = static_cast<int>(std::floor(scene.fluid_box.width() / scene.fluid_spacing));
  const int ny = static_cast<int>(std::floor(scene.fluid_box.height() / scene.fluid_spacing));
  if (nx <= 0 || ny <= 0) throw ConfigError("fluid box is smaller than the particle spacing");

  Rng rng(scene.jitter_seed);
  const double jitter = 0.1 * scene.fluid_spacing;
  std::vector<double> fluid(static_cast<size_t>(nx) * ny * 2);
  int p = 0;
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      fluid[2 * p] = scene.fluid_box.x_min + (ix + 0.5) * scene.fluid_spacing +
                     rng.uniform(-jitter, jitter);
      fluid[2 * p + 1] = scene.fluid_box.y_min + (iy + 0.5) * scene.fluid_spacing +
                         rng.uniform(-jitter, jitter);
      ++p;
    }

  const int num_fluid = nx * ny;
  const int num_design = tool.particles.empty() ? 0 : tool.particles.shape()[0];
  const Tensor positions =
      num_design > 0
          ? concat_rows({Tensor({num_fluid, 2}, std::move(fluid)), tool.particles})
          : Tensor({num_fluid, 2}, std::move(fluid));

  std::vector<int> types(num_fluid, kFluidNode);
  types.insert(types.end(), num_design, kDesignNode);
  const int n = num_fluid + num_design;
  return ParticleState(positions, Tensor::zeros({n, 2 * kHistory}), std::move(types));
}

}  // namespace invdes
