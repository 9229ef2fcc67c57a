// Exit domains and the discretized width J (minimal number of truncated
// jumps, interleaved with the drift flow, that carry the origin out of I).

#pragma once

#include "htexit/fields.hpp"
#include "htexit/flow.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace htexit {

class DomainSpec {
 public:
  struct Interval {
    double left = -1.0;
    double right = 1.0;
  };
  struct Ball {
    Vector center;
    double radius = 1.0;
  };
  struct Box {
    Vector lo, hi;
  };
  struct Predicate {
    std::function<bool(const Vector&)> contains;
    /// Optional: negative inside, positive outside.
    std::function<double(const Vector&)> signed_distance;
    Vector lo, hi;  // bounding box
  };
  using Variant = std::variant<Interval, Ball, Box, Predicate>;

  /// Unvalidated; prefer the named factories.
  explicit DomainSpec(Variant v) : v_(std::move(v)) {}

  static DomainSpec interval(double left, double right);
  static DomainSpec ball(int dim, double radius);
  static DomainSpec ball(Vector center, double radius);
  static DomainSpec box(Vector lo, Vector hi);
  static DomainSpec predicate(Predicate p);

  int dim() const;
  bool contains(const Vector& x) const;
  const Variant& variant() const { return v_; }
  /// Axis-aligned bounding box (lo, hi).
  std::pair<Vector, Vector> bounding_box() const;
  std::string describe() const;

 private:
  Variant v_;
};

/// Euclidean distance from x to the complement of I (0 when x is outside).
/// Exact for Interval/Ball/Box; ray-sampled (512 directions + bisection) for
/// Predicate domains.
double distance_to_complement(const DomainSpec& domain, const Vector& x);

/// Negative inside (minus the distance to the complement), positive outside
/// (distance to I) for the exact variants.
double signed_distance(const DomainSpec& domain, const Vector& x);

/// Unit vector from 0 toward the nearest point of the complement.
Vector nearest_exit_direction(const DomainSpec& domain);

/// The domain shifted by -origin (so `origin` maps to 0).
DomainSpec translate(const DomainSpec& domain, const Vector& origin);

struct ShrinkResult {
  DomainSpec domain;
  bool empty = false;
};

/// The eps-shrinkage {y : |x - y| < eps implies x in I}.
ShrinkResult shrink(const DomainSpec& domain, double eps);

/// Witness that k truncated jumps from the origin reach the complement:
/// the first jump is applied at the origin, jumps 2..k follow after flow
/// gaps. `times[j]` is measured from the first jump (times[0] == 0).
struct EscapeCertificate {
  int k = 0;
  std::vector<Vector> jumps;
  std::vector<double> times;
  Vector endpoint;
  double slack = 0.0;
  std::string to_json() const;
};

/// Endpoint of the certificate's jump chain evaluated with step dt.
Vector certificate_endpoint(const FieldPair& fields, const EscapeCertificate& cert, double b,
                            double dt);

/// Re-evaluates the certificate at dt / 2 and checks the endpoint leaves I.
bool verify_certificate(const FieldPair& fields, const DomainSpec& domain,
                        const EscapeCertificate& cert, double b, double dt);

enum class JMethod { Auto, OneDimensional, Contractive, Search };
enum class JStatus { Proven, SearchFound, SearchExhausted, NotApplicable, Degenerate };
const char* to_string(JMethod m);
const char* to_string(JStatus s);

struct SearchOptions {
  int k_max = 6;
  int population = 96;
  int elite = 12;
  int iterations = 30;
  int restarts = 3;
  /// Flow step used while searching; certificates are re-verified at the
  /// integrator dt and dt / 2.
  double search_dt = 1e-2;
  /// Upper bound on inter-jump gaps; <= 0 means 3 x hitting-time envelope.
  double max_gap = 0.0;
  /// Radius of optional pre-jump perturbations v_j (0 disables them).
  double perturbation = 0.0;
  std::uint64_t seed = 0x5EA4C4;
  int threads = 1;
};

struct JResult {
  /// 0 when undetermined (SearchExhausted, NotApplicable, Degenerate).
  int J = 0;
  JStatus status = JStatus::NotApplicable;
  JMethod method = JMethod::Auto;
  std::optional<EscapeCertificate> certificate;
  double best_slack = -kInf;
};

/// J = min{k >= 1 : k-jump coverage set meets the complement of I}.
JResult j_index(const DomainSpec& domain, const FieldPair& fields, double b,
                JMethod method = JMethod::Auto, const SearchOptions& options = {},
                const IntegratorConfig& cfg = {});

/// Sampled check of a(x) . x <= 0 over points of I.
bool check_contractive(const DomainSpec& domain, const FieldPair& fields, int samples = 10000,
                       std::uint64_t seed = 0xC0111);

struct Envelope {
  double time = 0.0;
  bool capped = false;
};

/// max over start points in I_eps of the flow's hitting time of the ball of
/// radius `ball_radius` around 0. Start points: a grid for 1D, corners/axis
/// points plus samples otherwise.
Envelope hitting_envelope(const FieldPair& fields, const DomainSpec& domain, double eps,
                          double ball_radius, double t_max = 200.0,
                          const IntegratorConfig& cfg = {});

/// Default envelope used by the search and the measure estimators:
/// eps = ball radius = 0.1 * distance_to_complement(0).
Envelope default_envelope(const FieldPair& fields, const DomainSpec& domain,
                          const IntegratorConfig& cfg = {});

}  // namespace htexit
