/**
 * @file kinematics.hpp
 * @brief Inverted five-bar linkage kinematics for the three-contact palm display.
 *
 * Each linkage lives in its own plane. The left dyad is anchored at (0, 0)
 * with proximal link l2 and distal link l3; the right dyad is anchored at
 * (l1, 0) with proximal link l5 and distal link l4. Both distal links meet at
 * the contact point C = (x, y). Servo angles tau_a / tau_e are measured from
 * the +x axis at the respective anchor.
 *
 * Inverse kinematics uses the tangent half-angle substitution t = tan(tau/2)
 * on  D cos(tau) + E sin(tau) + H = 0, i.e.
 *
 *   (H - D) t^2 + 2 E t + (H + D) = 0,   tau = 2 atan(t)
 *
 * with D = -2 l2 x, E = -2 l2 y, H = l2^2 + x^2 + y^2 - l3^2 on the left and
 * I = -2 l5 (x - l1), J = -2 l5 y, K = l5^2 + (x - l1)^2 + y^2 - l4^2 on the
 * right. The branch sign picks the root.
 */

#pragma once

#include <array>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "palmpipe/core_types.hpp"
#include "palmpipe/text_util.hpp"

namespace palmpipe {

class KinematicsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Target outside the reachable annulus of at least one dyad.
class OutOfWorkspaceError : public KinematicsError {
 public:
  using KinematicsError::KinematicsError;
};

/// Singular configuration with no isolated solution.
class SingularConfigurationError : public KinematicsError {
 public:
  using KinematicsError::KinematicsError;
};

struct LinkageGeometry {
  double l1 = 40.0;  // base separation, mm
  double l2 = 25.0;  // left proximal
  double l3 = 40.0;  // left distal
  double l4 = 40.0;  // right distal
  double l5 = 25.0;  // right proximal

  /// Throws std::invalid_argument for non-positive lengths or an empty workspace.
  void validate() const;
  bool operator==(const LinkageGeometry&) const = default;
};

struct ContactTarget {
  double x = 0.0;  // mm
  double y = 0.0;  // mm
};

struct Branch {
  int sign_a = +1;
  int sign_e = -1;
  bool operator==(const Branch&) const = default;
};

struct ServoAngles {
  double tau_a = 0.0;  // rad, (-pi, pi]
  double tau_e = 0.0;  // rad, (-pi, pi]
  Branch branch;
  // Side of the elbow-to-elbow line the contact sits on (+1 left of A->E,
  // -1 right, 0 unknown). Both sides can share the same elbow angles.
  int assembly = 0;
};

ServoAngles inverse_kinematics(const ContactTarget& c, const LinkageGeometry& g,
                               Branch branch = {});

/// Intersects the two distal-link circles and returns the point on the
/// a.assembly side; with assembly 0, the point whose inverse kinematics
/// under a.branch reproduces a.
ContactTarget forward_kinematics(const ServoAngles& a, const LinkageGeometry& g);

bool reachable(const ContactTarget& c, const LinkageGeometry& g);

struct DisplayMap {
  std::array<double, 3> x_presets{8.0, 20.0, 32.0};  // mm, one per stimulus column
  double y_retracted = 45.0;
  double y_engaged = 30.0;
  Branch branch;

  ContactTarget retracted_target(const LinkageGeometry& g) const { return {g.l1 / 2.0, y_retracted}; }
  ContactTarget target(int column, double intensity) const;

  /// Throws OutOfWorkspaceError if any preset (or the retracted pose) is unreachable.
  void validate(const LinkageGeometry& g) const;
};

struct ContactCommand {
  int linkage = 0;  // = stimulus row
  bool active = false;
  int column = -1;
  double intensity = 0.0;
  ContactTarget target;
  ServoAngles angles;
};

std::array<ContactCommand, 3> grid_to_contacts(const StimulusGrid& s, const DisplayMap& m,
                                               const LinkageGeometry& g);

struct DisplayConfig {
  LinkageGeometry geometry;
  DisplayMap map;
};

/// Keys: l1..l5, x_presets (three comma-separated values), y_retracted,
/// y_engaged, branch_a, branch_e. Missing keys keep their defaults.
DisplayConfig display_config_from(const KeyValues& kv, DisplayConfig base = {});
bool is_display_config_key(std::string_view key);
DisplayConfig load_display_config(const std::filesystem::path& path);

}  // namespace palmpipe
