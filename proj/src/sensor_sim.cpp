#include "palmpipe/sensor_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "palmpipe/text_util.hpp"

namespace palmpipe {

namespace {

constexpr double kCenter = 4.5;
constexpr double kHalfSqrt2 = 0.70710678118654752440;

struct Direction {
  double col;
  double row;
};

// Unit line direction in (col, row) coordinates, rows growing downwards.
Direction line_direction(AngleClass a) {
  switch (a) {
    case AngleClass::Deg0: return {1.0, 0.0};
    case AngleClass::Deg45: return {kHalfSqrt2, kHalfSqrt2};
    case AngleClass::Deg90: return {0.0, 1.0};
    case AngleClass::Deg135: return {-kHalfSqrt2, kHalfSqrt2};
  }
  return {1.0, 0.0};
}

// Signed displacement along the line normal (-dir.row, dir.col). That normal
// points left (negative col) for 45/90/135 and down for 0, so "Left" at 0 deg
// (which reads as Up) takes the opposite sign.
double offset_sign(AngleClass a, PositionClass p) {
  if (p == PositionClass::Center) return 0.0;
  const double left = a == AngleClass::Deg0 ? -1.0 : 1.0;
  return p == PositionClass::Left ? left : -left;
}

void check_grip_step(int grip_step) {
  if (grip_step < 0 || grip_step > kMaxGripStep) {
    throw std::out_of_range("grip step must be in [0, 30], got " + std::to_string(grip_step));
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Grid10 add_noise(Grid10 g, double sigma, Rng& rng) {
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (double& v : g.cells) v += noise(rng);
  }
  for (double& v : g.cells) v = std::clamp(v, 0.0, kMaxForceN);
  return g;
}

}  // namespace

void SimConfig::validate() const {
  if (!(line_width_sigma > 0.0)) throw std::invalid_argument("line_width_sigma must be positive");
  if (!(peak_force_per_step > 0.0)) throw std::invalid_argument("peak_force_per_step must be positive");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be non-negative");
  if (!(offset_cells > 0.0)) throw std::invalid_argument("offset_cells must be positive");
  if (reps_per_config < 1) throw std::invalid_argument("reps_per_config must be at least 1");
  if (peak_force_per_step * kMaxGripStep > kMaxForceN) {
    throw std::invalid_argument("peak_force_per_step x 30 exceeds the 9 N sensor range");
  }
}

Rng make_stream(std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t a = splitmix64(seed);
  const std::uint64_t b = splitmix64(a ^ splitmix64(index + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

double stripe_force(const SimConfig& cfg, AngleClass angle, PositionClass position, int grip_step,
                    double row, double col) {
  const Direction dir = line_direction(angle);
  const double shift = offset_sign(angle, position) * cfg.offset_cells;
  // Signed distance along the normal (-dir.row, dir.col), minus the offset.
  const double along_normal = -(col - kCenter) * dir.row + (row - kCenter) * dir.col;
  const double d = along_normal - shift;
  const double amplitude = grip_step * cfg.peak_force_per_step;
  const double s = cfg.line_width_sigma;
  return amplitude * std::exp(-(d * d) / (2.0 * s * s));
}

Grid10 stripe_grid(const SimConfig& cfg, AngleClass angle, PositionClass position, int grip_step) {
  check_grip_step(grip_step);
  Grid10 g;
  for (std::size_t r = 0; r < 10; ++r) {
    for (std::size_t c = 0; c < 10; ++c) {
      g(r, c) = stripe_force(cfg, angle, position, grip_step, static_cast<double>(r),
                             static_cast<double>(c));
    }
  }
  return g;
}

TactileFrame synth_frame(const SimConfig& cfg, AngleClass angle, PositionClass position,
                         int grip_step, Rng& rng, double timestamp) {
  const Grid10 a = stripe_grid(cfg, angle, position, grip_step);
  Grid10 b;
  for (std::size_t r = 0; r < 10; ++r) {
    for (std::size_t c = 0; c < 10; ++c) b(r, c) = a(r, 9 - c);
  }
  TactileFrame f;
  f.finger_a = ForceGrid10(add_noise(a, cfg.noise_sigma, rng));
  f.finger_b = ForceGrid10(add_noise(b, cfg.noise_sigma, rng));
  f.timestamp = timestamp;
  return f;
}

Dataset generate_dataset(const SimConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Dataset d;
  d.seed = seed;
  d.config = cfg;
  d.samples.reserve(static_cast<std::size_t>(kPatternCount) * kGripStepCount * cfg.reps_per_config);
  std::uint64_t index = 0;
  for (int id = 0; id < kPatternCount; ++id) {
    const auto [angle, position] = pattern_of(id);
    for (int step = 0; step <= kMaxGripStep; ++step) {
      for (int rep = 0; rep < cfg.reps_per_config; ++rep, ++index) {
        Rng rng = make_stream(seed, index);
        GripSample s;
        s.frame = synth_frame(cfg, angle, position, step, rng, static_cast<double>(index) / 120.0);
        s.angle = angle;
        s.position = position;
        s.grip_step = step;
        d.samples.push_back(std::move(s));
      }
    }
  }
  return d;
}

std::tuple<Dataset, Dataset, Dataset> split_dataset(const Dataset& d, SplitRatios ratios,
                                                    std::uint64_t seed) {
  if (!(ratios.train > 0.0) || !(ratios.val > 0.0) || !(ratios.test > 0.0)) {
    throw std::invalid_argument("split ratios must all be positive");
  }
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must sum to 1");
  }

  std::array<std::vector<std::size_t>, kPatternCount> by_class;
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    by_class[d.samples[i].pattern().value()].push_back(i);
  }

  Rng rng = make_stream(seed, 0x5b11);
  std::array<std::vector<std::size_t>, 3> parts;
  for (auto& idx : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<double>(idx.size());
    const auto n_train = static_cast<std::size_t>(std::llround(n * ratios.train));
    const auto n_val = std::min(idx.size() - n_train,
                                static_cast<std::size_t>(std::llround(n * ratios.val)));
    parts[0].insert(parts[0].end(), idx.begin(), idx.begin() + n_train);
    parts[1].insert(parts[1].end(), idx.begin() + n_train, idx.begin() + n_train + n_val);
    parts[2].insert(parts[2].end(), idx.begin() + n_train + n_val, idx.end());
  }

  auto build = [&](std::vector<std::size_t>& idx) {
    std::shuffle(idx.begin(), idx.end(), rng);
    Dataset out;
    out.seed = d.seed;
    out.config = d.config;
    out.samples.reserve(idx.size());
    for (auto i : idx) out.samples.push_back(d.samples[i]);
    return out;
  };
  Dataset train = build(parts[0]);
  Dataset val = build(parts[1]);
  Dataset test = build(parts[2]);
  return {std::move(train), std::move(val), std::move(test)};
}

DatasetParseError::DatasetParseError(std::size_t line, const std::string& what)
    : std::runtime_error("dataset line " + std::to_string(line) + ": " + what), line_(line) {}

void write_dataset(std::ostream& out, const Dataset& d) {
  out << "palmpipe-dataset v1,count=" << d.samples.size() << ",seed=" << d.seed << '\n';
  std::string line;
  for (const auto& s : d.samples) {
    line.clear();
    line += std::to_string(s.pattern().value());
    line += ',';
    line += std::to_string(s.grip_step);
    for (const ForceGrid10* g : {&s.frame.finger_a, &s.frame.finger_b}) {
      for (double v : g->values()) {
        line += ',';
        append_double(line, v);
      }
    }
    line += '\n';
    out << line;
  }
}

void save_dataset(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_dataset(out, d);
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DatasetParseError(1, "missing header");
  const auto header = split(trim(line), ',');
  if (header.size() != 3 || header[0] != "palmpipe-dataset v1" ||
      !header[1].starts_with("count=") || !header[2].starts_with("seed=")) {
    throw DatasetParseError(1, "bad header, expected 'palmpipe-dataset v1,count=N,seed=S'");
  }
  const auto count = parse_int(header[1].substr(6));
  const auto seed = parse_int(header[2].substr(5));
  if (!count || *count < 0 || !seed) throw DatasetParseError(1, "bad count or seed in header");

  Dataset d;
  d.seed = static_cast<std::uint64_t>(*seed);
  d.samples.reserve(static_cast<std::size_t>(*count));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(trim(line), ',');
    if (fields.size() != 202) {
      throw DatasetParseError(line_no, "expected 202 fields, got " + std::to_string(fields.size()));
    }
    const auto id = parse_int(fields[0]);
    const auto step = parse_int(fields[1]);
    if (!id || *id < 0 || *id >= kPatternCount) throw DatasetParseError(line_no, "bad pattern id");
    if (!step || *step < 0 || *step > kMaxGripStep) throw DatasetParseError(line_no, "bad grip step");
    Grid10 a, b;
    for (std::size_t i = 0; i < 200; ++i) {
      const auto v = parse_double(fields[2 + i]);
      if (!v) throw DatasetParseError(line_no, "bad force value in field " + std::to_string(3 + i));
      (i < 100 ? a.cells[i] : b.cells[i - 100]) = *v;
    }
    GripSample s;
    try {
      s.frame.finger_a = ForceGrid10(a);
      s.frame.finger_b = ForceGrid10(b);
    } catch (const std::domain_error& e) {
      throw DatasetParseError(line_no, e.what());
    }
    s.frame.timestamp = static_cast<double>(d.samples.size()) / 120.0;
    std::tie(s.angle, s.position) = pattern_of(static_cast<int>(*id));
    s.grip_step = static_cast<int>(*step);
    d.samples.push_back(std::move(s));
  }
  if (d.samples.size() != static_cast<std::size_t>(*count)) {
    throw DatasetParseError(line_no, "header count " + std::to_string(*count) + " but " +
                                         std::to_string(d.samples.size()) + " records");
  }
  return d;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  return read_dataset(in);
}

}  // namespace palmpipe
