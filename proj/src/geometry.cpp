#include "srcloc/geometry.hpp"

#include <algorithm>
#include <sstream>

#include "srcloc/errors.hpp"

namespace srcloc {

DetectorArray::DetectorArray(std::vector<Point> positions, double nu) : positions_(std::move(positions)), nu_(nu) {
  if (positions_.empty()) throw DomainError("detector array must contain at least one detector");
  if (!(nu_ > 0.0) || !std::isfinite(nu_)) throw DomainError("propagation speed nu must be positive");
  for (std::size_t a = 0; a < positions_.size(); ++a) {
    if (!std::isfinite(positions_[a].x) || !std::isfinite(positions_[a].y))
      throw DomainError("detector " + std::to_string(a) + " has a non-finite coordinate");
    for (std::size_t b = 0; b < a; ++b)
      if (positions_[a].x == positions_[b].x && positions_[a].y == positions_[b].y)
        throw DomainError("detectors " + std::to_string(b) + " and " + std::to_string(a) + " coincide");
  }
}

DetectorArray DetectorArray::translated(Point offset) const {
  std::vector<Point> moved;
  moved.reserve(positions_.size());
  for (const auto& p : positions_) moved.push_back(p + offset);
  return DetectorArray(std::move(moved), nu_);
}

bool ThetaVector::finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

double distance(const ThetaVector& a, const ThetaVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < 4; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double permutation_min_distance(const ThetaVector& estimate, const ThetaVector& truth) {
  return std::min(distance(estimate, truth), distance(estimate, truth.swapped()));
}

ThetaVector align_labels(const ThetaVector& estimate, const ThetaVector& truth) {
  return distance(estimate, truth) <= distance(estimate.swapped(), truth) ? estimate : estimate.swapped();
}

ParameterBox::ParameterBox(std::array<double, 4> lower, std::array<double, 4> upper) : lower_(lower), upper_(upper) {
  for (std::size_t i = 0; i < 4; ++i) {
    if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]))
      throw DomainError("box bound " + std::to_string(i) + " is not finite");
    if (!(lower_[i] < upper_[i]))
      throw DomainError("box coordinate " + std::to_string(i) + ": lower bound must be below upper bound");
  }
}

double ParameterBox::volume() const {
  double v = 1.0;
  for (std::size_t i = 0; i < 4; ++i) v *= width(i);
  return v;
}

ThetaVector ParameterBox::center() const {
  ThetaVector c;
  for (std::size_t i = 0; i < 4; ++i) c[i] = 0.5 * (lower_[i] + upper_[i]);
  return c;
}

bool ParameterBox::contains(const ThetaVector& theta, double tol) const {
  for (std::size_t i = 0; i < 4; ++i)
    if (!(theta[i] >= lower_[i] - tol && theta[i] <= upper_[i] + tol)) return false;
  return true;
}

int ParameterBox::first_violation(const ThetaVector& theta) const {
  for (std::size_t i = 0; i < 4; ++i)
    if (!(theta[i] >= lower_[i] && theta[i] <= upper_[i])) return static_cast<int>(i);
  return -1;
}

ThetaVector ParameterBox::clamp(const ThetaVector& theta) const {
  ThetaVector c;
  for (std::size_t i = 0; i < 4; ++i) c[i] = std::clamp(theta[i], lower_[i], upper_[i]);
  return c;
}

bool ParameterBox::near_boundary(const ThetaVector& theta, double tol) const {
  for (std::size_t i = 0; i < 4; ++i) {
    const double margin = tol * width(i);
    if (theta[i] - lower_[i] <= margin || upper_[i] - theta[i] <= margin) return true;
  }
  return false;
}

std::array<Point, 4> ParameterBox::source_corners(std::size_t i) const {
  const std::size_t a = 2 * i;
  const std::size_t b = 2 * i + 1;
  return {Point{lower_[a], lower_[b]}, Point{upper_[a], lower_[b]}, Point{upper_[a], upper_[b]},
          Point{lower_[a], upper_[b]}};
}

void ParameterBox::check_detectors(const DetectorArray& array) const {
  for (std::size_t k = 0; k < array.size(); ++k)
    for (std::size_t i = 0; i < 2; ++i) {
      const Point d = array[k];
      if (d.x >= lower_[2 * i] && d.x <= upper_[2 * i] && d.y >= lower_[2 * i + 1] && d.y <= upper_[2 * i + 1])
        throw DomainError("detector " + std::to_string(k) + " lies inside the box of source " +
                          std::to_string(i + 1));
    }
}

ParameterBox ParameterBox::translated(Point offset) const {
  auto lo = lower_;
  auto hi = upper_;
  for (std::size_t i = 0; i < 2; ++i) {
    lo[2 * i] += offset.x;
    hi[2 * i] += offset.x;
    lo[2 * i + 1] += offset.y;
    hi[2 * i + 1] += offset.y;
  }
  return ParameterBox(lo, hi);
}

namespace {

double checked_range(const DetectorArray& array, std::size_t k, Point source) {
  if (k >= array.size()) throw DomainError("detector index " + std::to_string(k) + " out of range");
  const double rho = distance(array[k], source);
  if (!(rho > 0.0)) throw DomainError("source coincides with detector " + std::to_string(k));
  return rho;
}

}  // namespace

double arrival_time(const DetectorArray& array, std::size_t k, Point source) {
  return checked_range(array, k, source) / array.nu();
}

Point direction_vector(const DetectorArray& array, std::size_t k, Point source) {
  const double rho = checked_range(array, k, source);
  return (1.0 / rho) * (array[k] - source);
}

Point arrival_time_gradient(const DetectorArray& array, std::size_t k, Point source) {
  return (-1.0 / array.nu()) * direction_vector(array, k, source);
}

Line Line::through(Point a, Point b) {
  const Point d = b - a;
  const double len = norm(d);
  if (!(len > 0.0)) throw DomainError("a line needs two distinct points");
  return {a, (1.0 / len) * d};
}

Line Line::perpendicular_through(Point p) const { return {p, normal()}; }

double Line::distance(Point p) const { return std::abs(dot(p - point, normal())); }

Point Line::reflect(Point p) const {
  const Point nrm = normal();
  const double s = dot(p - point, nrm);
  return p - (2.0 * s) * nrm;
}

std::optional<Point> intersection(const Line& a, const Line& b) {
  const double det = a.direction.x * b.direction.y - a.direction.y * b.direction.x;
  if (std::abs(det) < 1e-15) return std::nullopt;
  const Point w = b.point - a.point;
  const double t = (w.x * b.direction.y - w.y * b.direction.x) / det;
  return a.point + t * a.direction;
}

bool verify_witness(const CrossWitness& witness, std::span<const Point> points, double tol) {
  if (witness.assignment.size() != points.size()) return false;
  if (std::abs(dot(witness.line1.direction, witness.line2.direction)) > tol) return false;
  for (std::size_t j = 0; j < points.size(); ++j) {
    const Line& l = witness.assignment[j] == 0 ? witness.line1 : witness.line2;
    if (l.distance(points[j]) > tol) return false;
  }
  return true;
}

namespace {

void check_distinct(std::span<const Point> points) {
  for (std::size_t a = 0; a < points.size(); ++a)
    for (std::size_t b = 0; b < a; ++b)
      if (points[a].x == points[b].x && points[a].y == points[b].y)
        throw DomainError("points " + std::to_string(b) + " and " + std::to_string(a) + " coincide");
}

CrossWitness small_witness(std::span<const Point> points) {
  CrossWitness w;
  w.assignment.assign(points.size(), 0);
  if (points.empty()) {
    w.line1 = {{0.0, 0.0}, {1.0, 0.0}};
  } else if (points.size() == 1) {
    w.line1 = {points[0], {1.0, 0.0}};
  } else {
    w.line1 = Line::through(points[0], points[1]);
  }
  const Point anchor = points.size() == 3 ? points[2] : w.line1.point;
  w.line2 = w.line1.perpendicular_through(anchor);
  if (points.size() == 3) w.assignment[2] = 1;
  return w;
}

}  // namespace

std::optional<CrossWitness> lies_on_cross(std::span<const Point> points, double tol) {
  if (!(tol > 0.0)) throw DomainError("cross tolerance must be positive");
  check_distinct(points);
  if (points.size() <= 3) return small_witness(points);

  const std::size_t count = points.size();
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = i + 1; j < count; ++j) {
      CrossWitness w;
      w.line1 = Line::through(points[i], points[j]);
      w.assignment.assign(count, 0);
      std::vector<std::size_t> residue;
      for (std::size_t q = 0; q < count; ++q)
        if (w.line1.distance(points[q]) > tol) {
          residue.push_back(q);
          w.assignment[q] = 1;
        }
      if (residue.empty()) {
        w.line2 = w.line1.perpendicular_through(points[i]);
        return w;
      }
      // Every residue point must share one coordinate along line1.
      double mean = 0.0;
      for (auto q : residue) mean += dot(points[q] - w.line1.point, w.line1.direction);
      mean /= static_cast<double>(residue.size());
      w.line2 = w.line1.perpendicular_through(w.line1.point + mean * w.line1.direction);
      if (verify_witness(w, points, tol)) return w;
    }
  return std::nullopt;
}

ConfusablePairs confusable_pair(const Line& line1, const Line& line2, Point s1, double tol) {
  if (std::abs(dot(line1.direction, line2.direction)) > tol) throw DomainError("cross lines are not orthogonal");
  if (line1.distance(s1) <= tol || line2.distance(s1) <= tol)
    throw DomainError("source lies on a cross line; the confusable pairs would coincide");
  const auto o = intersection(line1, line2);
  if (!o) throw DomainError("cross lines do not intersect");
  const Point s2 = 2.0 * *o - s1;
  return {{s1, s2}, {line1.reflect(s1), line2.reflect(s1)}};
}

bool arrival_signature_equal(const ThetaVector& a, const ThetaVector& b, const DetectorArray& array, double tol) {
  for (std::size_t k = 0; k < array.size(); ++k) {
    double ta[2] = {arrival_time(array, k, a.source(0)), arrival_time(array, k, a.source(1))};
    double tb[2] = {arrival_time(array, k, b.source(0)), arrival_time(array, k, b.source(1))};
    if (ta[0] > ta[1]) std::swap(ta[0], ta[1]);
    if (tb[0] > tb[1]) std::swap(tb[0], tb[1]);
    if (std::abs(ta[0] - tb[0]) > tol || std::abs(ta[1] - tb[1]) > tol) return false;
  }
  return true;
}

}  // namespace srcloc
