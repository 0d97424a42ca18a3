#pragma once

#include <array>
#include <string>
#include <vector>

#include "invdes/oracle.hpp"
#include "invdes/state.hpp"
#include "invdes/tensor.hpp"

namespace invdes {

enum class DesignKind {
  RelativeJoints,
  AbsoluteJoints,
  RotorGrid,
  Heightfield,
  HeightfieldControlPoints,
};

std::string design_kind_name(DesignKind kind);
DesignKind design_kind_from_name(const std::string& name);

/// Design geometry realized from parameters: particle positions for the
/// learned model (differentiable in phi) and the underlying line segments
/// for the oracle's collision handling (plain values).
struct ToolGeometry {
  Tensor particles;  // P x 2
  std::vector<Segment> segments;
};

/// Multi-segment tool grown from an anchor; segment length is
/// tool length / #joints, particles sampled along each segment.
struct JointedToolSpec {
  std::array<double, 2> anchor{0.15, 0.35};
  double tool_length = 0.8;
  int joints = 16;
  double spacing = 0.015;
  /// Appends a global [x, y] position offset to the parameter vector.
  bool with_offset = false;
};

/// Joint angles accumulate along the tool: theta_k = theta_{k-1} + phi_k.
ToolGeometry tool_from_relative_angles(const Tensor& phi, const JointedToolSpec& spec);
/// Joint angles are read directly: theta_k = phi_k.
ToolGeometry tool_from_absolute_angles(const Tensor& phi, const JointedToolSpec& spec);

/// n x n grid of single-segment rotors, centers evenly spaced across the
/// domain box (corners included), each rotated by its own angle.
struct RotorGridSpec {
  int n = 6;
  Box domain{0.14, 0.25, 0.77, 0.65};
  double rotor_length = 0.105;
  double spacing = 0.015;
};

ToolGeometry rotor_grid(const Tensor& phi, const RotorGridSpec& spec);

/// 1-D heightfield over a horizontal span: node i sits at
/// (x_i, base_y + gamma_h * tanh(field_i)). Field parameters are either the
/// design vector itself or linear interpolation of control points.
struct HeightfieldSpec {
  int resolution = 25;  // field nodes M
  double x_min = 0.15;
  double x_max = 0.85;
  double base_y = 0.45;
  double gamma_h = 0.3;
  double spacing = 0.015;
  int control_points = 0;  // 0: direct parameterization
};

/// Amplitude-bounded vertical offsets gamma_h * tanh(phi); offsets stay
/// strictly inside (-gamma_h, gamma_h).
Tensor heightfield_offsets(const Tensor& phi, double gamma_h);
/// Evenly placed control values linearly interpolated onto `resolution` nodes.
Tensor interpolate_control_points(const Tensor& phi_ctrl, int resolution);
ToolGeometry heightfield_tool(const Tensor& phi, const HeightfieldSpec& spec);

/// Fixed initial conditions: fluid block on a jittered grid plus rollout
/// constants. Deterministic for a fixed jitter seed.
struct SceneTemplate {
  Box fluid_box{0.2, 0.5, 0.3, 0.6};
  double fluid_spacing = 0.02;
  std::uint64_t jitter_seed = 0;
  FloorSpec floor;
};

/// Fluid particles (type 0, zero history) followed by design particles
/// (type 1). Fluid positions are constants; design positions keep their
/// tape attachment, so gradients flow only into the design.
ParticleState assemble_initial_state(const ToolGeometry& tool, const SceneTemplate& scene);

}  // namespace invdes
