#include "palmpipe/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "palmpipe/downsample.hpp"

namespace palmpipe {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

// Solve p cos(tau) + q sin(tau) + h = 0 by tangent half-angle.
double solve_dyad(double p, double q, double h, int sign, const char* side) {
  double disc = q * q + p * p - h * h;
  // Tolerate rounding on the workspace boundary.
  if (disc < 0.0 && disc > -1e-12 * (q * q + p * p + h * h)) disc = 0.0;
  if (disc < 0.0) {
    throw OutOfWorkspaceError(std::string("target outside workspace of the ") + side + " dyad");
  }
  const double root = sign * std::sqrt(disc);
  // Roots of (h - p) t^2 + 2 q t + (h + p) = 0. Use whichever of the two
  // equivalent forms avoids cancellation; when h == p the second form is the
  // linear solution t = -(h + p) / (2 q) and the first gives tau = pi.
  double t = 0.0;
  if (-q * root >= 0.0) {
    const double num = -q + root;
    const double den = h - p;
    if (num == 0.0 && den == 0.0) {
      throw SingularConfigurationError(std::string("singular ") + side + " dyad configuration");
    }
    t = num / den;
  } else {
    t = (h + p) / (-q - root);
  }
  return wrap_angle(2.0 * std::atan(t));
}

std::optional<int> parse_sign(std::string_view s) {
  s = trim(s);
  if (s == "+" || s == "+1" || s == "1") return 1;
  if (s == "-" || s == "-1") return -1;
  return std::nullopt;
}

}  // namespace

void LinkageGeometry::validate() const {
  for (double l : {l1, l2, l3, l4, l5}) {
    if (!(l > 0.0) || !std::isfinite(l)) throw std::invalid_argument("link lengths must be positive");
  }
  // Sample the plane above the base; any point reachable by both dyads will do.
  const double reach = std::max(l2 + l3, l5 + l4);
  for (int i = 0; i <= 40; ++i) {
    for (int j = 1; j <= 40; ++j) {
      const ContactTarget c{-reach + (l1 + 2.0 * reach) * i / 40.0, reach * j / 40.0};
      if (reachable(c, *this)) return;
    }
  }
  throw std::invalid_argument("linkage geometry has an empty workspace");
}

bool reachable(const ContactTarget& c, const LinkageGeometry& g) {
  if (!std::isfinite(c.x) || !std::isfinite(c.y)) return false;
  const double dl = std::hypot(c.x, c.y);
  const double dr = std::hypot(c.x - g.l1, c.y);
  return dl <= g.l2 + g.l3 && dl >= std::abs(g.l2 - g.l3) && dr <= g.l5 + g.l4 &&
         dr >= std::abs(g.l5 - g.l4);
}

ServoAngles inverse_kinematics(const ContactTarget& c, const LinkageGeometry& g, Branch branch) {
  if (!std::isfinite(c.x) || !std::isfinite(c.y)) {
    throw std::invalid_argument("contact target must be finite");
  }
  const double x = c.x;
  const double y = c.y;
  const double D = -2.0 * g.l2 * x;
  const double E = -2.0 * g.l2 * y;
  const double H = g.l2 * g.l2 + x * x + y * y - g.l3 * g.l3;
  const double xr = x - g.l1;
  const double I = -2.0 * g.l5 * xr;
  const double J = -2.0 * g.l5 * y;
  const double K = g.l5 * g.l5 + xr * xr + y * y - g.l4 * g.l4;

  ServoAngles a;
  a.branch = branch;
  a.tau_a = solve_dyad(D, E, H, branch.sign_a, "left");
  a.tau_e = solve_dyad(I, J, K, branch.sign_e, "right");
  const double ax = g.l2 * std::cos(a.tau_a);
  const double ay = g.l2 * std::sin(a.tau_a);
  const double ex = g.l1 + g.l5 * std::cos(a.tau_e);
  const double ey = g.l5 * std::sin(a.tau_e);
  const double side = (ex - ax) * (y - ay) - (ey - ay) * (x - ax);
  a.assembly = side > 0.0 ? 1 : (side < 0.0 ? -1 : 0);
  return a;
}

ContactTarget forward_kinematics(const ServoAngles& a, const LinkageGeometry& g) {
  const double ax = g.l2 * std::cos(a.tau_a);
  const double ay = g.l2 * std::sin(a.tau_a);
  const double ex = g.l1 + g.l5 * std::cos(a.tau_e);
  const double ey = g.l5 * std::sin(a.tau_e);

  const double dx = ex - ax;
  const double dy = ey - ay;
  const double d = std::hypot(dx, dy);
  const double scale = g.l1 + g.l2 + g.l3 + g.l4 + g.l5;
  if (d <= 1e-12 * scale) {
    throw SingularConfigurationError(
        std::abs(g.l3 - g.l4) <= 1e-12 * scale
            ? "coincident elbow circles: contact point undetermined"
            : "concentric elbow circles: no contact point");
  }
  if (d > g.l3 + g.l4 || d < std::abs(g.l3 - g.l4)) {
    throw KinematicsError("distal links cannot meet for these servo angles");
  }
  const double along = (g.l3 * g.l3 - g.l4 * g.l4 + d * d) / (2.0 * d);
  const double h = std::sqrt(std::max(g.l3 * g.l3 - along * along, 0.0));
  const double mx = ax + along * dx / d;
  const double my = ay + along * dy / d;
  const ContactTarget candidates[2] = {{mx - h * dy / d, my + h * dx / d},
                                       {mx + h * dy / d, my - h * dx / d}};
  if (a.assembly > 0) return candidates[0];
  if (a.assembly < 0) return candidates[1];

  // Choose the assembly whose inverse kinematics reproduces the given angles.
  double best_err = INFINITY;
  ContactTarget best = candidates[0];
  for (const auto& cand : candidates) {
    double err = INFINITY;
    try {
      const ServoAngles back = inverse_kinematics(cand, g, a.branch);
      err = std::abs(wrap_angle(back.tau_a - a.tau_a)) + std::abs(wrap_angle(back.tau_e - a.tau_e));
    } catch (const KinematicsError&) {
    }
    if (err < best_err) {
      best_err = err;
      best = cand;
    }
  }
  if (!std::isfinite(best_err)) throw KinematicsError("no assembly consistent with the branch");
  return best;
}

ContactTarget DisplayMap::target(int column, double intensity) const {
  if (column < 0 || column > 2) throw std::out_of_range("display column must be in [0, 2]");
  return {x_presets[column], y_retracted + intensity * (y_engaged - y_retracted)};
}

void DisplayMap::validate(const LinkageGeometry& g) const {
  auto check = [&](const ContactTarget& c, const std::string& what) {
    try {
      inverse_kinematics(c, g, branch);
    } catch (const KinematicsError& e) {
      throw OutOfWorkspaceError("display target " + what + " unreachable: " + e.what());
    }
  };
  check(retracted_target(g), "retracted");
  for (int c = 0; c < 3; ++c) {
    check(target(c, 0.0), "column " + std::to_string(c) + " at rest");
    check(target(c, 1.0), "column " + std::to_string(c) + " engaged");
  }
}

std::array<ContactCommand, 3> grid_to_contacts(const StimulusGrid& s, const DisplayMap& m,
                                               const LinkageGeometry& g) {
  std::array<ContactCommand, 3> out;
  for (int r = 0; r < 3; ++r) {
    const RowStimulus rs = row_stimulus(s, r);
    ContactCommand& cmd = out[r];
    cmd.linkage = r;
    if (rs.column) {
      cmd.active = true;
      cmd.column = *rs.column;
      cmd.intensity = rs.intensity;
      cmd.target = m.target(*rs.column, rs.intensity);
    } else {
      cmd.target = m.retracted_target(g);
    }
    cmd.angles = inverse_kinematics(cmd.target, g, m.branch);
  }
  return out;
}

DisplayConfig display_config_from(const KeyValues& kv, DisplayConfig base) {
  auto number = [&](const char* key, double& field) {
    if (auto it = kv.find(key); it != kv.end()) {
      const auto v = parse_double(it->second);
      if (!v) throw std::invalid_argument(std::string("bad number for ") + key + ": " + it->second);
      field = *v;
    }
  };
  auto sign = [&](const char* key, int& field) {
    if (auto it = kv.find(key); it != kv.end()) {
      const auto v = parse_sign(it->second);
      if (!v) throw std::invalid_argument(std::string("bad sign for ") + key + ": " + it->second);
      field = *v;
    }
  };
  auto& g = base.geometry;
  auto& m = base.map;
  number("l1", g.l1);
  number("l2", g.l2);
  number("l3", g.l3);
  number("l4", g.l4);
  number("l5", g.l5);
  number("y_retracted", m.y_retracted);
  number("y_engaged", m.y_engaged);
  sign("branch_a", m.branch.sign_a);
  sign("branch_e", m.branch.sign_e);
  if (auto it = kv.find("x_presets"); it != kv.end()) {
    const auto parts = split(it->second, ',');
    if (parts.size() != 3) throw std::invalid_argument("x_presets needs three values");
    for (std::size_t i = 0; i < 3; ++i) {
      const auto v = parse_double(parts[i]);
      if (!v) throw std::invalid_argument("bad x_presets value: " + std::string(parts[i]));
      m.x_presets[i] = *v;
    }
  }
  g.validate();
  m.validate(g);
  return base;
}

bool is_display_config_key(std::string_view key) {
  static constexpr std::array<std::string_view, 10> kKeys{
      "l1", "l2", "l3", "l4", "l5", "x_presets", "y_retracted", "y_engaged", "branch_a", "branch_e"};
  return std::find(kKeys.begin(), kKeys.end(), key) != kKeys.end();
}

DisplayConfig load_display_config(const std::filesystem::path& path) {
  return display_config_from(load_key_values(path));
}

}  // namespace palmpipe
