#pragma once

// Micro-cluster based continuous outlier detection (MCOD) over a count-based
// window, with read-only probes that classify a point without storing it.
//
// A micro-cluster is a fixed center plus at least k+1 members, all within R/2
// of the center. Points that belong to no micro-cluster are "dispersed".

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsce/kernels.hpp"

namespace dsce {

enum class Verdict { ND, CE };
enum class ProbeMode { McStrict, McodStandard };

std::string to_string(Verdict v);
std::string to_string(ProbeMode m);
ProbeMode parse_probe_mode(const std::string& s);

// Points of one micro-cluster (or of the dispersed set) in arrival order,
// coordinates stored row-major so the neighbor kernels can scan them directly.
struct PointBlock {
  std::vector<std::uint64_t> arrivals;
  std::vector<double> coords;

  std::size_t size() const noexcept { return arrivals.size(); }
  std::span<const double> point(std::size_t i, std::size_t dim) const {
    return {coords.data() + i * dim, dim};
  }
  friend bool operator==(const PointBlock&, const PointBlock&) = default;
};

struct MicroCluster {
  std::uint64_t id = 0;  // creation order
  std::vector<double> center;
  PointBlock members;

  friend bool operator==(const MicroCluster&, const MicroCluster&) = default;
};

struct ProbeResult {
  Verdict verdict = Verdict::CE;
  std::optional<double> nearest_center_distance;
  std::size_t neighbor_count = 0;  // stored points within R
  ProbeMode mode = ProbeMode::McStrict;
};

class Clusterer {
 public:
  // k >= 1, radius > 0, window >= 1; parameters are fixed for the lifetime.
  Clusterer(std::uint32_t k, double radius, std::uint64_t window);

  // Inserts `p`, evicting the oldest stored point first when the window is
  // full. The point dimension is fixed by the first insertion.
  void add(std::span<const double> p);

  // Classifies `p` against the stored points without modifying them.
  ProbeResult probe(std::span<const double> p, ProbeMode mode,
                    kernels::Backend backend = kernels::Backend::Serial) const;

  // Removes the point with the smallest arrival index. A micro-cluster left
  // with k or fewer members is dissolved into the dispersed set.
  void evict_oldest();

  std::uint32_t k() const noexcept { return k_; }
  double radius() const noexcept { return radius_; }
  std::uint64_t window() const noexcept { return window_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept;
  bool empty() const noexcept { return size() == 0; }
  std::uint64_t arrivals() const noexcept { return arrival_counter_; }

  const std::vector<MicroCluster>& micro_clusters() const noexcept { return clusters_; }
  const PointBlock& dispersed() const noexcept { return dispersed_; }

  // Throws dsce::Error describing the first violated structural invariant.
  void check_invariants() const;

  friend bool operator==(const Clusterer&, const Clusterer&) = default;

  friend std::vector<std::uint8_t> encode_clusterer(const Clusterer& c);
  friend Clusterer decode_clusterer(std::span<const std::uint8_t> bytes, const std::string& label);

 private:
  void check_dim(std::span<const double> p) const;

  std::uint32_t k_;
  double radius_;
  std::uint64_t window_;
  std::size_t dim_ = 0;
  std::uint64_t arrival_counter_ = 0;
  std::uint64_t next_cluster_id_ = 0;
  std::vector<MicroCluster> clusters_;
  PointBlock dispersed_;
};

// DSMC1: magic, u32 k, f64 R, u64 W, u32 dim, u64 arrival counter,
// u64 next cluster id, u32 cluster count, per cluster {u64 id, f64[dim] center,
// u32 member count, per member {u64 arrival, f64[dim]}}, u32 dispersed count,
// per dispersed point {u64 arrival, f64[dim]}.
std::vector<std::uint8_t> encode_clusterer(const Clusterer& c);
Clusterer decode_clusterer(std::span<const std::uint8_t> bytes,
                           const std::string& label = "<memory>");

}  // namespace dsce
