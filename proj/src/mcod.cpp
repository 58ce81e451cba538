#include "dsce/mcod.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dsce/binary_io.hpp"
#include "dsce/error.hpp"

namespace dsce {

namespace {

constexpr std::string_view kMagic = "DSMC1";

// Relative slack on the triangle-inequality shortcuts, so a shortcut never
// decides a pair whose directly computed distance could land on the other
// side of R.
constexpr double kShortcutSlack = 1e-9;

std::size_t count_block(const PointBlock& block, std::size_t dim, std::span<const double> p,
                        double radius, kernels::Backend backend) {
  if (backend == kernels::Backend::Parallel) {
    return kernels::parallel::count_within(block.coords, dim, p, radius);
  }
  return kernels::serial::count_within(block.coords, dim, p, radius);
}

void append(PointBlock& block, std::uint64_t arrival, std::span<const double> p) {
  block.arrivals.push_back(arrival);
  block.coords.insert(block.coords.end(), p.begin(), p.end());
}

void erase_at(PointBlock& block, std::size_t i, std::size_t dim) {
  block.arrivals.erase(block.arrivals.begin() + static_cast<std::ptrdiff_t>(i));
  const auto first = block.coords.begin() + static_cast<std::ptrdiff_t>(i * dim);
  block.coords.erase(first, first + static_cast<std::ptrdiff_t>(dim));
}

// Merges two arrival-ordered blocks.
PointBlock merge(const PointBlock& a, const PointBlock& b, std::size_t dim) {
  PointBlock out;
  out.arrivals.reserve(a.size() + b.size());
  out.coords.reserve(a.coords.size() + b.coords.size());
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    const bool take_a = j == b.size() || (i < a.size() && a.arrivals[i] < b.arrivals[j]);
    const PointBlock& src = take_a ? a : b;
    std::size_t& idx = take_a ? i : j;
    append(out, src.arrivals[idx], src.point(idx, dim));
    ++idx;
  }
  return out;
}

}  // namespace

std::string to_string(Verdict v) { return v == Verdict::ND ? "ND" : "CE"; }

std::string to_string(ProbeMode m) {
  return m == ProbeMode::McStrict ? "mc-strict" : "mcod-standard";
}

ProbeMode parse_probe_mode(const std::string& s) {
  if (s == "mc-strict") return ProbeMode::McStrict;
  if (s == "mcod-standard") return ProbeMode::McodStandard;
  throw InvalidArgument("unknown decision mode \"" + s + "\"");
}

Clusterer::Clusterer(std::uint32_t k, double radius, std::uint64_t window)
    : k_(k), radius_(radius), window_(window) {
  if (k < 1) throw InvalidArgument("clusterer k must be >= 1");
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw InvalidArgument("clusterer radius must be positive");
  }
  if (window < 1) throw InvalidArgument("clusterer window must be >= 1");
}

std::size_t Clusterer::size() const noexcept {
  std::size_t n = dispersed_.size();
  for (const auto& mc : clusters_) n += mc.members.size();
  return n;
}

void Clusterer::check_dim(std::span<const double> p) const {
  if (dim_ != 0 && p.size() != dim_) {
    throw DimensionError("clusterer holds dimension " + std::to_string(dim_) + ", got " +
                         std::to_string(p.size()));
  }
  if (p.empty()) throw DimensionError("clusterer points must be non-empty");
}

void Clusterer::add(std::span<const double> p) {
  check_dim(p);
  dim_ = p.size();
  while (size() + 1 > window_) evict_oldest();
  const std::uint64_t arrival = arrival_counter_++;
  const double half = radius_ / 2.0;

  // (1) join the nearest micro-cluster whose center is within R/2
  MicroCluster* best = nullptr;
  double best_dist = std::numeric_limits<double>::infinity();
  for (auto& mc : clusters_) {
    const double d = kernels::euclidean(mc.center, p);
    if (d <= half && d < best_dist) {
      best = &mc;
      best_dist = d;
    }
  }
  if (best != nullptr) {
    append(best->members, arrival, p);
    return;
  }

  // (2) promote p to a new micro-cluster when >= k dispersed points are within R/2
  std::vector<double> dist(dispersed_.size());
  kernels::serial::distances(dispersed_.coords, dim_, p, dist);
  const auto close = static_cast<std::size_t>(
      std::count_if(dist.begin(), dist.end(), [half](double d) { return d <= half; }));
  if (close >= k_) {
    MicroCluster mc;
    mc.id = next_cluster_id_++;
    mc.center.assign(p.begin(), p.end());
    PointBlock rest;
    for (std::size_t i = 0; i < dispersed_.size(); ++i) {
      append(dist[i] <= half ? mc.members : rest, dispersed_.arrivals[i],
             dispersed_.point(i, dim_));
    }
    append(mc.members, arrival, p);
    dispersed_ = std::move(rest);
    clusters_.push_back(std::move(mc));
    return;
  }

  // (3) otherwise p is dispersed
  append(dispersed_, arrival, p);
}

void Clusterer::evict_oldest() {
  if (empty()) throw Error("cannot evict from an empty clusterer");
  // Blocks are arrival-ordered, so the oldest point heads one of them.
  std::uint64_t oldest = std::numeric_limits<std::uint64_t>::max();
  std::ptrdiff_t owner = -1;  // -1: dispersed
  if (dispersed_.size() > 0) oldest = dispersed_.arrivals.front();
  for (std::size_t c = 0; c < clusters_.size(); ++c) {
    const auto& members = clusters_[c].members;
    if (members.size() > 0 && members.arrivals.front() < oldest) {
      oldest = members.arrivals.front();
      owner = static_cast<std::ptrdiff_t>(c);
    }
  }
  if (owner < 0) {
    erase_at(dispersed_, 0, dim_);
    return;
  }
  auto& mc = clusters_[static_cast<std::size_t>(owner)];
  erase_at(mc.members, 0, dim_);
  if (mc.members.size() < std::size_t{k_} + 1) {
    dispersed_ = merge(dispersed_, mc.members, dim_);
    clusters_.erase(clusters_.begin() + owner);
  }
}

ProbeResult Clusterer::probe(std::span<const double> p, ProbeMode mode,
                             kernels::Backend backend) const {
  ProbeResult result;
  result.mode = mode;
  if (empty()) {
    result.verdict = Verdict::CE;
    return result;
  }
  check_dim(p);
  const double half = radius_ / 2.0;
  const double inside = radius_ * (0.5 - kShortcutSlack);
  const double outside = radius_ * (1.5 + kShortcutSlack);

  std::size_t neighbors = count_block(dispersed_, dim_, p, radius_, backend);
  for (const auto& mc : clusters_) {
    const double d = kernels::euclidean(mc.center, p);
    if (!result.nearest_center_distance || d < *result.nearest_center_distance) {
      result.nearest_center_distance = d;
    }
    if (d <= inside) {
      neighbors += mc.members.size();  // every member is within R/2 + R/2
    } else if (d <= outside) {
      neighbors += count_block(mc.members, dim_, p, radius_, backend);
    }
  }
  result.neighbor_count = neighbors;

  if (mode == ProbeMode::McStrict) {
    result.verdict = result.nearest_center_distance && *result.nearest_center_distance <= half
                         ? Verdict::ND
                         : Verdict::CE;
  } else {
    result.verdict = neighbors >= k_ ? Verdict::ND : Verdict::CE;
  }
  return result;
}

void Clusterer::check_invariants() const {
  const double half = radius_ / 2.0;
  std::vector<std::uint64_t> seen;
  auto collect = [&](const PointBlock& block, const std::string& where) {
    if (block.coords.size() != block.size() * dim_) {
      throw Error(where + ": coordinate storage does not match point count");
    }
    if (!std::is_sorted(block.arrivals.begin(), block.arrivals.end())) {
      throw Error(where + ": points are not in arrival order");
    }
    for (const auto a : block.arrivals) {
      if (a >= arrival_counter_) throw Error(where + ": arrival index from the future");
      seen.push_back(a);
    }
  };
  collect(dispersed_, "dispersed set");
  for (const auto& mc : clusters_) {
    const std::string where = "micro-cluster " + std::to_string(mc.id);
    collect(mc.members, where);
    if (mc.center.size() != dim_) throw Error(where + ": center dimension mismatch");
    if (mc.members.size() < std::size_t{k_} + 1) {
      throw Error(where + ": has " + std::to_string(mc.members.size()) +
                  " members, needs at least k+1 = " + std::to_string(k_ + 1));
    }
    for (std::size_t i = 0; i < mc.members.size(); ++i) {
      if (kernels::euclidean(mc.center, mc.members.point(i, dim_)) > half) {
        throw Error(where + ": member " + std::to_string(mc.members.arrivals[i]) +
                    " lies beyond R/2 of the center");
      }
    }
  }
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
    throw Error("a stored point appears in more than one place");
  }
  if (seen.size() > window_) {
    throw Error("clusterer stores " + std::to_string(seen.size()) + " points, window is " +
                std::to_string(window_));
  }
}

// --- DSMC1 ----------------------------------------------------------------------------

std::vector<std::uint8_t> encode_clusterer(const Clusterer& c) {
  io::ByteWriter w;
  w.magic(kMagic);
  w.put(c.k_);
  w.put(c.radius_);
  w.put(c.window_);
  w.put(static_cast<std::uint32_t>(c.dim_));
  w.put(c.arrival_counter_);
  w.put(c.next_cluster_id_);
  auto put_block = [&](const PointBlock& block) {
    w.put(static_cast<std::uint32_t>(block.size()));
    for (std::size_t i = 0; i < block.size(); ++i) {
      w.put(block.arrivals[i]);
      w.put_array(block.point(i, c.dim_));
    }
  };
  w.put(static_cast<std::uint32_t>(c.clusters_.size()));
  for (const auto& mc : c.clusters_) {
    w.put(mc.id);
    w.put_array(std::span<const double>(mc.center));
    put_block(mc.members);
  }
  put_block(c.dispersed_);
  return std::move(w).take();
}

Clusterer decode_clusterer(std::span<const std::uint8_t> bytes, const std::string& label) {
  io::ByteReader r(bytes, label);
  r.expect_magic(kMagic);
  const auto k = r.get<std::uint32_t>();
  const auto radius = r.get<double>();
  const auto window = r.get<std::uint64_t>();
  std::optional<Clusterer> c;
  try {
    c.emplace(k, radius, window);
  } catch (const InvalidArgument& e) {
    throw LoadError(LoadError::Kind::Malformed, label + ": " + e.what());
  }
  c->dim_ = r.get<std::uint32_t>();
  c->arrival_counter_ = r.get<std::uint64_t>();
  c->next_cluster_id_ = r.get<std::uint64_t>();
  const std::size_t dim = c->dim_;
  auto get_block = [&](PointBlock& block) {
    const auto n = r.get<std::uint32_t>();
    if (r.remaining() < std::size_t{n} * (sizeof(std::uint64_t) + dim * sizeof(double))) {
      throw LoadError(LoadError::Kind::Truncated, label + ": truncated point block");
    }
    block.arrivals.resize(n);
    block.coords.resize(std::size_t{n} * dim);
    for (std::size_t i = 0; i < n; ++i) {
      block.arrivals[i] = r.get<std::uint64_t>();
      r.get_array(std::span<double>(block.coords.data() + i * dim, dim));
    }
  };
  const auto n_clusters = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_clusters; ++i) {
    MicroCluster mc;
    mc.id = r.get<std::uint64_t>();
    mc.center.resize(dim);
    r.get_array(std::span<double>(mc.center));
    get_block(mc.members);
    c->clusters_.push_back(std::move(mc));
  }
  get_block(c->dispersed_);
  r.expect_end();
  try {
    c->check_invariants();
  } catch (const Error& e) {
    throw LoadError(LoadError::Kind::Malformed, label + ": " + e.what());
  }
  return std::move(*c);
}

}  // namespace dsce
