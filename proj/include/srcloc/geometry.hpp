#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace srcloc {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

constexpr Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
constexpr Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
constexpr Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }
constexpr double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
inline double norm(Point a) { return std::hypot(a.x, a.y); }
inline double distance(Point a, Point b) { return norm(a - b); }

/// K known detector positions and the propagation speed.
class DetectorArray {
 public:
  DetectorArray() = default;
  DetectorArray(std::vector<Point> positions, double nu);

  std::size_t size() const { return positions_.size(); }
  const Point& operator[](std::size_t k) const { return positions_[k]; }
  std::span<const Point> positions() const { return positions_; }
  double nu() const { return nu_; }

  DetectorArray translated(Point offset) const;

 private:
  std::vector<Point> positions_;
  double nu_ = 1.0;
};

/// theta = (x1', y1', x2', y2'): positions of source 1 and source 2.
struct ThetaVector {
  std::array<double, 4> values{};

  ThetaVector() = default;
  ThetaVector(double x1, double y1, double x2, double y2) : values{x1, y1, x2, y2} {}
  ThetaVector(Point s1, Point s2) : values{s1.x, s1.y, s2.x, s2.y} {}
  explicit ThetaVector(const std::array<double, 4>& v) : values(v) {}

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  Point source(std::size_t i) const { return {values[2 * i], values[2 * i + 1]}; }
  ThetaVector swapped() const { return {source(1), source(0)}; }
  ThetaVector translated(Point offset) const { return {source(0) + offset, source(1) + offset}; }
  bool finite() const;
};

/// Euclidean norm in R^4.
double distance(const ThetaVector& a, const ThetaVector& b);

/// min(|a - b|, |a - swap(b)|): error up to source relabelling.
double permutation_min_distance(const ThetaVector& estimate, const ThetaVector& truth);

/// Returns `estimate` or its label swap, whichever is closer to `truth`.
ThetaVector align_labels(const ThetaVector& estimate, const ThetaVector& truth);

/// Axis-aligned box realizing the parameter set. Coordinates (0,1) bound
/// source 1 and (2,3) bound source 2.
class ParameterBox {
 public:
  ParameterBox() = default;
  ParameterBox(std::array<double, 4> lower, std::array<double, 4> upper);

  const std::array<double, 4>& lower() const { return lower_; }
  const std::array<double, 4>& upper() const { return upper_; }
  double width(std::size_t i) const { return upper_[i] - lower_[i]; }
  double volume() const;
  ThetaVector center() const;

  bool contains(const ThetaVector& theta, double tol = 0.0) const;
  /// Index of the first coordinate outside the closed box, or -1.
  int first_violation(const ThetaVector& theta) const;
  ThetaVector clamp(const ThetaVector& theta) const;
  /// True if any coordinate lies within `tol` (relative to the width) of a face.
  bool near_boundary(const ThetaVector& theta, double tol) const;

  /// Corners of the rectangle swept by source i.
  std::array<Point, 4> source_corners(std::size_t i) const;
  /// Throws DomainError if a detector lies in a source rectangle (closed).
  void check_detectors(const DetectorArray& array) const;

  ParameterBox translated(Point offset) const;

 private:
  std::array<double, 4> lower_{};
  std::array<double, 4> upper_{};
};

/// tau = |D_k - S| / nu. Throws DomainError when source and detector coincide.
double arrival_time(const DetectorArray& array, std::size_t k, Point source);
/// Unit vector (D_k - S) / |D_k - S|.
Point direction_vector(const DetectorArray& array, std::size_t k, Point source);
/// Gradient of arrival_time in the source position: -m / nu.
Point arrival_time_gradient(const DetectorArray& array, std::size_t k, Point source);

/// Line in point-direction form; `direction` has unit length.
struct Line {
  Point point;
  Point direction{1.0, 0.0};

  static Line through(Point a, Point b);
  Line perpendicular_through(Point p) const;
  Point normal() const { return {-direction.y, direction.x}; }
  double distance(Point p) const;
  Point reflect(Point p) const;
};

std::optional<Point> intersection(const Line& a, const Line& b);

/// Two orthogonal lines covering a point set. assignment[j] is 0 or 1 for
/// the line carrying point j.
struct CrossWitness {
  Line line1;
  Line line2;
  std::vector<int> assignment;
};

constexpr double kGeometryTolerance = 1e-9;

/// Decides whether the points lie on a cross and returns a witness if so.
/// Throws DomainError on duplicate points or non-positive tolerance.
std::optional<CrossWitness> lies_on_cross(std::span<const Point> points, double tol = kGeometryTolerance);

/// Checks that a witness is valid for `points` at tolerance `tol`.
bool verify_witness(const CrossWitness& witness, std::span<const Point> points, double tol);

struct ConfusablePairs {
  std::array<Point, 2> first;   // {S1, S2}
  std::array<Point, 2> second;  // {S1', S2'}
};

/// Reflection construction: S1' and S2' are the mirror images of `s1` in
/// `line1` and `line2`, S2 its point reflection through their intersection.
ConfusablePairs confusable_pair(const Line& line1, const Line& line2, Point s1,
                                double tol = kGeometryTolerance);

/// True iff every detector sees the same unordered pair of arrival times
/// from both configurations, within `tol`.
bool arrival_signature_equal(const ThetaVector& a, const ThetaVector& b, const DetectorArray& array,
                             double tol);

}  // namespace srcloc
