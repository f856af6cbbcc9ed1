#pragma once

#include "slowfast/quadrature.hpp"
#include "slowfast/types.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>

namespace slowfast {

/// A probability measure on the real line, either an empirical measure
/// (sorted atoms, uniform weights) or a density sampled on a uniform grid.
/// Coefficient callbacks integrate against it through one interface.
class MeasureHandle {
 public:
  enum class Kind { empirical, grid_density };

  static MeasureHandle empirical(ArrayXd atoms) {
    MeasureHandle m;
    m.kind_ = Kind::empirical;
    std::sort(atoms.begin(), atoms.end());
    m.atoms_ = std::move(atoms);
    if (m.atoms_.size() == 0)
      fault(FaultKind::usage, "empirical measure needs at least one atom");
    m.second_moment_ = (m.atoms_ * m.atoms_).mean();
    m.mean_ = m.atoms_.mean();
    m.finalize();
    return m;
  }

  static MeasureHandle dirac(double x) {
    ArrayXd a(1);
    a(0) = x;
    return empirical(std::move(a));
  }

  static MeasureHandle grid_density(ArrayXd nodes, ArrayXd values) {
    MeasureHandle m;
    m.kind_ = Kind::grid_density;
    if (nodes.size() != values.size() || nodes.size() < 2)
      fault(FaultKind::usage, "grid density needs matching nodes/values");
    if ((values < 0.0).any())
      fault(FaultKind::usage, "grid density must be nonnegative");
    const double dx = nodes(1) - nodes(0);
    const double tot = trapezoid(values, dx);
    if (!(std::fabs(tot - 1.0) < 1e-8))
      values /= tot;
    m.nodes_ = std::move(nodes);
    m.values_ = std::move(values);
    m.mean_ = trapezoid(m.nodes_ * m.values_, dx);
    m.second_moment_ = trapezoid(m.nodes_ * m.nodes_ * m.values_, dx);
    m.finalize();
    return m;
  }

  Kind kind() const { return kind_; }
  const ArrayXd& atoms() const { return atoms_; }
  const ArrayXd& nodes() const { return nodes_; }
  const ArrayXd& values() const { return values_; }
  double mean() const { return mean_; }
  double second_moment() const { return second_moment_; }
  std::uint64_t fingerprint() const { return fingerprint_; }

  double integrate(const std::function<double(double)>& fn) const {
    if (kind_ == Kind::empirical) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < atoms_.size(); ++i) acc += fn(atoms_(i));
      return acc / static_cast<double>(atoms_.size());
    }
    ArrayXd f(nodes_.size());
    for (Eigen::Index i = 0; i < nodes_.size(); ++i)
      f(i) = fn(nodes_(i)) * values_(i);
    return trapezoid(f, nodes_(1) - nodes_(0));
  }

  /// Lazily cached scalar functional, keyed by name. Models use this for
  /// interaction terms that do not depend on the evaluation point, so a
  /// frozen measure is integrated once per macro step instead of once per
  /// callback.
  double cached(const std::string& key,
                const std::function<double(double)>& fn) const {
    std::lock_guard<std::mutex> lock(cache_->mu);
    auto it = cache_->vals.find(key);
    if (it != cache_->vals.end()) return it->second;
    const double v = integrate(fn);
    cache_->vals.emplace(key, v);
    return v;
  }

  /// New empirical measure with atom j moved to z (atom order re-sorted).
  MeasureHandle with_atom_moved(Eigen::Index j, double z) const {
    require_empirical();
    ArrayXd a = atoms_;
    a(j) = z;
    return empirical(std::move(a));
  }

  /// New empirical measure with one extra atom at z.
  MeasureHandle with_atom_inserted(double z) const {
    require_empirical();
    ArrayXd a(atoms_.size() + 1);
    a.head(atoms_.size()) = atoms_;
    a(atoms_.size()) = z;
    return empirical(std::move(a));
  }

  /// New empirical measure with every atom duplicated.
  MeasureHandle duplicated() const {
    require_empirical();
    ArrayXd a(2 * atoms_.size());
    a.head(atoms_.size()) = atoms_;
    a.tail(atoms_.size()) = atoms_;
    return empirical(std::move(a));
  }

 private:
  void require_empirical() const {
    if (kind_ != Kind::empirical)
      fault(FaultKind::usage, "operation needs an empirical measure");
  }

  void finalize() {
    if (!std::isfinite(second_moment_))
      fault(FaultKind::usage, "measure second moment must be finite");
    // FNV-1a over the raw samples; used as a cache key downstream.
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const ArrayXd& a) {
      const auto* p = reinterpret_cast<const unsigned char*>(a.data());
      for (std::size_t i = 0; i < sizeof(double) * a.size(); ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
      }
    };
    mix(kind_ == Kind::empirical ? atoms_ : values_);
    if (kind_ == Kind::grid_density) mix(nodes_);
    fingerprint_ = h;
    cache_ = std::make_shared<Cache>();
  }

  struct Cache {
    std::mutex mu;
    std::unordered_map<std::string, double> vals;
  };

  Kind kind_ = Kind::empirical;
  ArrayXd atoms_;
  ArrayXd nodes_, values_;
  double mean_ = 0.0;
  double second_moment_ = 0.0;
  std::uint64_t fingerprint_ = 0;
  std::shared_ptr<Cache> cache_;
};

}  // namespace slowfast
