#pragma once

// Track geometry: piecewise straight/arc centerline, Frenet projection,
// edge ray casting and the track description document loader.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "trackgym/errors.hpp"
#include "trackgym/geometry.hpp"

namespace trackgym {

enum class SegmentKind { straight, arc };

struct TrackSegment {
  SegmentKind kind = SegmentKind::straight;
  double length = 0.0;  // straight only
  double radius = 0.0;  // arc only
  double sweep = 0.0;   // arc only, signed: positive turns left
  double width = 10.0;
  double friction = 1.0;

  double centerline_length() const {
    return kind == SegmentKind::straight ? length : radius * std::abs(sweep);
  }
  double curvature() const {
    return kind == SegmentKind::straight ? 0.0 : (sweep > 0 ? 1.0 : -1.0) / radius;
  }
};

struct Pose2 {
  Vec2 position;
  double heading = 0.0;
};

struct FrenetPose {
  double s = 0.0;
  double lateral = 0.0;    // positive left of travel direction
  double track_pos = 0.0;  // lateral / (width / 2)
  double angle = 0.0;      // vehicle heading minus centerline tangent, in [-pi, pi]
  std::size_t segment = 0;
};

class Track {
 public:
  Track() = default;

  // Validates and lays out the segments; throws ValidationError naming the
  // offending segment index.
  Track(std::string name, std::vector<TrackSegment> segments, bool closed, Pose2 start = {})
      : name_(std::move(name)), segments_(std::move(segments)), closed_(closed) {
    if (segments_.empty()) throw ValidationError("track '" + name_ + "' has no segments");
    for (std::size_t i = 0; i < segments_.size(); ++i) validate_segment(i);
    Pose2 pose = start;
    double s = 0.0;
    starts_.reserve(segments_.size());
    s0_.reserve(segments_.size());
    for (const auto& seg : segments_) {
      starts_.push_back(pose);
      s0_.push_back(s);
      pose = advance(seg, pose, seg.centerline_length());
      s += seg.centerline_length();
    }
    end_pose_ = pose;
    total_length_ = s;
    if (closed_) {
      const double gap = norm(end_pose_.position - starts_.front().position);
      const double turn = std::abs(wrap_angle(end_pose_.heading - starts_.front().heading));
      if (gap > 1e-6 || turn > 1e-6) {
        std::ostringstream os;
        os << "segment " << segments_.size() - 1 << ": closed track does not close (gap "
           << gap << " m, heading mismatch " << turn << " rad)";
        throw ValidationError(os.str());
      }
    }
  }

  const std::string& name() const { return name_; }
  const std::vector<TrackSegment>& segments() const { return segments_; }
  bool closed() const { return closed_; }
  double total_length() const { return total_length_; }
  Pose2 start_pose() const { return starts_.front(); }
  double segment_start_s(std::size_t i) const { return s0_[i]; }

  // Index of the segment containing arc length s (already wrapped).
  std::size_t segment_at(double s) const {
    auto it = std::upper_bound(s0_.begin(), s0_.end(), s);
    if (it == s0_.begin()) return 0;
    return static_cast<std::size_t>(std::distance(s0_.begin(), it) - 1);
  }

  // Wraps s onto [0, total_length) for closed tracks; throws for open tracks
  // when s is out of range.
  double normalize_s(double s) const {
    if (closed_) {
      double w = std::fmod(s, total_length_);
      if (w < 0.0) w += total_length_;
      if (w >= total_length_) w = 0.0;
      return w;
    }
    if (s < 0.0 || s > total_length_) {
      std::ostringstream os;
      os << "s=" << s << " outside open track [0, " << total_length_ << "]";
      throw std::out_of_range(os.str());
    }
    return s;
  }

  // Signed forward displacement from s_from to s_to along the track,
  // taking the short way round on closed tracks.
  double delta_s(double s_from, double s_to) const {
    double d = s_to - s_from;
    if (closed_) {
      if (d > 0.5 * total_length_) d -= total_length_;
      if (d < -0.5 * total_length_) d += total_length_;
    }
    return d;
  }

  double width_at(double s) const { return segments_[segment_at(normalize_s(s))].width; }
  double friction_at(double s) const { return segments_[segment_at(normalize_s(s))].friction; }

  // Centerline pose at s (closed tracks wrap).
  Pose2 centerline(double s) const {
    s = normalize_s(s);
    const std::size_t i = segment_at(s);
    return advance(segments_[i], starts_[i], s - s0_[i]);
  }

  // World position and tangent heading of the Frenet point (s, lateral).
  std::pair<Vec2, double> frenet_to_world(double s, double lateral) const {
    const Pose2 c = centerline(s);
    return {c.position + left_normal(c.heading) * lateral, c.heading};
  }

  // Nearest-centerline-point projection. Equidistant candidates resolve to
  // the smallest s.
  FrenetPose project(Vec2 p, double heading) const {
    double best_dist = std::numeric_limits<double>::infinity();
    double best_s = 0.0;
    std::size_t best_i = 0;
    Pose2 best_pose;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      const auto [u, pose] = closest_on_segment(i, p);
      const double d = norm(p - pose.position);
      const double s = s0_[i] + u;
      if (d < best_dist - 1e-12 || (std::abs(d - best_dist) <= 1e-12 && s < best_s)) {
        best_dist = d;
        best_s = s;
        best_i = i;
        best_pose = pose;
      }
    }
    FrenetPose out;
    out.segment = best_i;
    out.s = best_s;
    if (closed_ && out.s >= total_length_) out.s -= total_length_;
    out.lateral = dot(p - best_pose.position, left_normal(best_pose.heading));
    out.track_pos = out.lateral / (0.5 * segments_[best_i].width);
    out.angle = wrap_angle(heading - best_pose.heading);
    return out;
  }

  // Distance along the ray to the first track edge, or max_range.
  double cast_ray(Vec2 origin, double direction, double max_range) const {
    const Vec2 d = unit(direction);
    double best = max_range;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      const auto& seg = segments_[i];
      for (double side : {1.0, -1.0}) {
        const double off = side * 0.5 * seg.width;
        const double t = seg.kind == SegmentKind::straight ? ray_vs_straight_edge(i, off, origin, d)
                                                           : ray_vs_arc_edge(i, off, origin, d);
        if (t < best) best = t;
      }
    }
    return best;
  }

 private:
  static Pose2 advance(const TrackSegment& seg, const Pose2& start, double u) {
    if (seg.kind == SegmentKind::straight) {
      return {start.position + unit(start.heading) * u, start.heading};
    }
    const double sgn = seg.sweep > 0 ? 1.0 : -1.0;
    const Vec2 center = start.position + left_normal(start.heading) * (sgn * seg.radius);
    const double h = start.heading + sgn * u / seg.radius;
    return {center - left_normal(h) * (sgn * seg.radius), h};
  }

  Vec2 arc_center(std::size_t i) const {
    const auto& seg = segments_[i];
    const double sgn = seg.sweep > 0 ? 1.0 : -1.0;
    return starts_[i].position + left_normal(starts_[i].heading) * (sgn * seg.radius);
  }

  // Angular position along arc i of a point seen from its center, in [0, 2pi).
  double arc_param(std::size_t i, Vec2 p) const {
    const auto& seg = segments_[i];
    const Vec2 c = arc_center(i);
    const double sgn = seg.sweep > 0 ? 1.0 : -1.0;
    const Vec2 q = p - c;
    // Centerline point at heading h sits at polar angle h - sgn*pi/2.
    const double h = std::atan2(q.y, q.x) + sgn * 0.5 * kPi;
    return wrap_positive(sgn * (h - starts_[i].heading));
  }

  std::pair<double, Pose2> closest_on_segment(std::size_t i, Vec2 p) const {
    const auto& seg = segments_[i];
    const Pose2& st = starts_[i];
    const double len = seg.centerline_length();
    double u = 0.0;
    if (seg.kind == SegmentKind::straight) {
      u = clamp(dot(p - st.position, unit(st.heading)), 0.0, len);
    } else {
      const double phi = arc_param(i, p);
      const double sweep = std::abs(seg.sweep);
      if (phi <= sweep) {
        u = phi * seg.radius;
      } else {
        const double d0 = norm(p - st.position);
        const double d1 = norm(p - advance(seg, st, len).position);
        u = d0 <= d1 ? 0.0 : len;
      }
    }
    return {u, advance(seg, st, u)};
  }

  double ray_vs_straight_edge(std::size_t i, double offset, Vec2 o, Vec2 d) const {
    const auto& seg = segments_[i];
    const Vec2 a = starts_[i].position + left_normal(starts_[i].heading) * offset;
    const Vec2 e = unit(starts_[i].heading) * seg.length;
    const double denom = cross(d, e);
    if (std::abs(denom) < 1e-15) return std::numeric_limits<double>::infinity();
    const Vec2 ao = a - o;
    const double t = cross(ao, e) / denom;
    const double v = cross(ao, d) / denom;
    if (t <= 1e-12 || v < -1e-12 || v > 1.0 + 1e-12) return std::numeric_limits<double>::infinity();
    return t;
  }

  double ray_vs_arc_edge(std::size_t i, double offset, Vec2 o, Vec2 d) const {
    const auto& seg = segments_[i];
    const double sgn = seg.sweep > 0 ? 1.0 : -1.0;
    const double rho = seg.radius - sgn * offset;
    const Vec2 c = arc_center(i);
    const Vec2 oc = o - c;
    const double b = dot(d, oc);
    const double cc = dot(oc, oc) - rho * rho;
    const double disc = b * b - cc;
    if (disc < 0.0) return std::numeric_limits<double>::infinity();
    const double sq = std::sqrt(disc);
    for (double t : {-b - sq, -b + sq}) {
      if (t <= 1e-12) continue;
      const double phi = arc_param(i, o + d * t);
      if (phi <= std::abs(seg.sweep) + 1e-12 || phi >= kTwoPi - 1e-12) return t;
    }
    return std::numeric_limits<double>::infinity();
  }

  void validate_segment(std::size_t i) const {
    const auto& seg = segments_[i];
    auto fail = [&](const std::string& what) {
      throw ValidationError("segment " + std::to_string(i) + ": " + what);
    };
    if (!(seg.width > 0.0)) fail("width must be > 0");
    if (!(seg.friction > 0.0 && seg.friction <= 2.0)) fail("friction must be in (0, 2]");
    if (seg.kind == SegmentKind::straight) {
      if (!(seg.length > 0.0)) fail("straight length must be > 0");
    } else {
      if (!(seg.radius > 0.5 * seg.width)) fail("arc radius must exceed half the width");
      const double a = std::abs(seg.sweep);
      if (!(a > 0.0 && a < kTwoPi)) fail("arc sweep magnitude must be in (0, 2pi)");
    }
  }

  std::string name_;
  std::vector<TrackSegment> segments_;
  bool closed_ = false;
  std::vector<Pose2> starts_;
  std::vector<double> s0_;
  Pose2 end_pose_;
  double total_length_ = 0.0;
};

inline double lap_fraction(const Track& track, double distance_raced) {
  return distance_raced / track.total_length();
}

namespace detail {

inline void reject_unknown_keys(const YAML::Node& node, std::initializer_list<const char*> allowed,
                                const std::string& where) {
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ParseError(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
T scalar_as(const YAML::Node& n, const std::string& where) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ParseError(where + ": type mismatch");
  }
}

}  // namespace detail

// Track description document (YAML):
//   name: <identifier>
//   closed: <bool>
//   segments:
//     - {kind: straight, length: <m>, width: <m>, friction: <mu>}
//     - {kind: arc, radius: <m>, sweep: <rad, + = left>, width: <m>, friction: <mu>}
// friction defaults to 1.0. Unknown keys are rejected.
inline Track load_track(std::istream& in) {
  YAML::Node doc;
  try {
    doc = YAML::Load(in);
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("track document: ") + e.what());
  }
  if (!doc.IsMap()) throw ParseError("track document: expected a mapping");
  detail::reject_unknown_keys(doc, {"name", "closed", "segments"}, "track");
  if (!doc["name"] || !doc["segments"]) throw ParseError("track: 'name' and 'segments' are required");
  const auto name = detail::scalar_as<std::string>(doc["name"], "track.name");
  const bool closed = doc["closed"] ? detail::scalar_as<bool>(doc["closed"], "track.closed") : true;
  if (!doc["segments"].IsSequence()) throw ParseError("track.segments: expected a list");
  std::vector<TrackSegment> segs;
  std::size_t idx = 0;
  for (const auto& n : doc["segments"]) {
    const std::string where = "segment " + std::to_string(idx);
    if (!n.IsMap()) throw ParseError(where + ": expected a mapping");
    detail::reject_unknown_keys(n, {"kind", "length", "radius", "sweep", "width", "friction"}, where);
    TrackSegment seg;
    if (!n["kind"]) throw ParseError(where + ": missing 'kind'");
    const auto kind = detail::scalar_as<std::string>(n["kind"], where + ".kind");
    if (kind == "straight") {
      seg.kind = SegmentKind::straight;
      if (!n["length"]) throw ParseError(where + ": straight needs 'length'");
      if (n["radius"] || n["sweep"]) throw ParseError(where + ": straight takes no radius/sweep");
      seg.length = detail::scalar_as<double>(n["length"], where + ".length");
    } else if (kind == "arc") {
      seg.kind = SegmentKind::arc;
      if (!n["radius"] || !n["sweep"]) throw ParseError(where + ": arc needs 'radius' and 'sweep'");
      if (n["length"]) throw ParseError(where + ": arc takes no length");
      seg.radius = detail::scalar_as<double>(n["radius"], where + ".radius");
      seg.sweep = detail::scalar_as<double>(n["sweep"], where + ".sweep");
    } else {
      throw ParseError(where + ": unknown kind '" + kind + "'");
    }
    if (!n["width"]) throw ParseError(where + ": missing 'width'");
    seg.width = detail::scalar_as<double>(n["width"], where + ".width");
    if (n["friction"]) seg.friction = detail::scalar_as<double>(n["friction"], where + ".friction");
    segs.push_back(seg);
    ++idx;
  }
  return Track(name, std::move(segs), closed);
}

inline Track load_track_string(const std::string& text) {
  std::istringstream in(text);
  return load_track(in);
}

inline Track load_track_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open track file '" + path + "'");
  return load_track(in);
}

}  // namespace trackgym
