#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace rbdsde {

/// Time mesh t_0 = 0 < t_1 < ... < t_N = T.
class TimeGrid {
public:
    static TimeGrid uniform(double horizon, std::size_t steps);
    /// Custom mesh; nodes must start at 0 and be strictly increasing.
    static TimeGrid from_nodes(std::vector<double> nodes);

    double horizon() const { return nodes_.back(); }
    std::size_t num_steps() const { return nodes_.size() - 1; }
    std::size_t num_nodes() const { return nodes_.size(); }
    double node(std::size_t i) const { return nodes_[i]; }
    double dt(std::size_t i) const { return nodes_[i + 1] - nodes_[i]; }
    std::span<const double> nodes() const { return nodes_; }
    bool is_uniform() const { return uniform_; }

    /// Index of the node equal to t (within tol), if any.
    std::optional<std::size_t> index_of(double t, double tol = 1e-12) const;

    bool operator==(const TimeGrid&) const = default;

private:
    TimeGrid(std::vector<double> nodes, bool uniform) : nodes_(std::move(nodes)), uniform_(uniform) {}
    std::vector<double> nodes_;
    bool uniform_ = true;
};

/// Uniform grid with spacing T/N. Throws std::invalid_argument for T <= 0 or N < 1.
TimeGrid build_grid(double horizon, long steps);

/// Sampled increments of the forward Brownian motion W (one row per path)
/// and a single realized path of the independent backward motion B.
///
/// Increment (path k, step i, component c) of W is drawn from Philox block
/// (index, k, stream 0) under the seed key, so it does not depend on the
/// number of paths or on the order of generation. B uses stream 1 with the
/// path slot set to b_index.
class NoiseEnsemble {
public:
    NoiseEnsemble(TimeGrid grid, std::size_t paths, std::size_t d, std::size_t ell,
                  std::uint64_t seed, std::uint64_t b_index, std::vector<double> w,
                  std::vector<double> b);

    const TimeGrid& grid() const { return grid_; }
    std::size_t num_paths() const { return paths_; }
    std::size_t w_dim() const { return d_; }
    std::size_t b_dim() const { return ell_; }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t b_index() const { return b_index_; }

    double w(std::size_t path, std::size_t step, std::size_t c = 0) const {
        return w_[(path * grid_.num_steps() + step) * d_ + c];
    }
    std::span<const double> w_step(std::size_t path, std::size_t step) const {
        return {w_.data() + (path * grid_.num_steps() + step) * d_, d_};
    }
    std::span<const double> b_step(std::size_t step) const {
        return {b_.data() + step * ell_, ell_};
    }
    std::span<const double> w_increments() const { return w_; }
    std::span<const double> b_increments() const { return b_; }

    /// B_T - B_{t_i} accumulated from the terminal node backwards.
    std::vector<double> b_tail(std::size_t step) const;

    bool operator==(const NoiseEnsemble&) const = default;

private:
    TimeGrid grid_;
    std::size_t paths_;
    std::size_t d_;
    std::size_t ell_;
    std::uint64_t seed_;
    std::uint64_t b_index_;
    std::vector<double> w_;
    std::vector<double> b_;
};

NoiseEnsemble sample_noise(const TimeGrid& grid, long paths, long d, long ell, std::uint64_t seed,
                           std::uint64_t b_index = 0);

/// Same W increments, fresh B path drawn from (b_seed, b_index).
NoiseEnsemble resample_b(const NoiseEnsemble& noise, std::uint64_t b_seed,
                         std::uint64_t b_index = 0);

/// Sums consecutive groups of `factor` increments (coarser uniform grid, same paths).
NoiseEnsemble coarsen(const NoiseEnsemble& noise, std::size_t factor);

/// CSV with header `path,step,component,value`. W rows carry the path index;
/// B rows carry path -1.
void write_noise_csv(std::ostream& out, const NoiseEnsemble& noise);
NoiseEnsemble read_noise_csv(std::istream& in, const TimeGrid& grid, std::uint64_t seed,
                             std::uint64_t b_index = 0);

enum class ProcessKind { YLike, ZLike, KLike };

/// Discrete adapted process: values[path][node][component].
class ProcessSample {
public:
    /// Zero process.
    ProcessSample(TimeGrid grid, std::size_t paths, std::size_t dim, ProcessKind kind);
    /// Throws std::invalid_argument on size mismatch, or for K-like samples
    /// that do not start at 0 or decrease along a path.
    ProcessSample(TimeGrid grid, std::size_t paths, std::size_t dim, ProcessKind kind,
                  std::vector<double> values);

    const TimeGrid& grid() const { return grid_; }
    std::size_t num_paths() const { return paths_; }
    std::size_t dim() const { return dim_; }
    ProcessKind kind() const { return kind_; }

    double operator()(std::size_t path, std::size_t node, std::size_t c = 0) const {
        return values_[(path * grid_.num_nodes() + node) * dim_ + c];
    }
    std::span<const double> at(std::size_t path, std::size_t node) const {
        return {values_.data() + (path * grid_.num_nodes() + node) * dim_, dim_};
    }
    std::span<const double> values() const { return values_; }

    /// Mean over paths of component c at a node.
    double mean_at(std::size_t node, std::size_t c = 0) const;

private:
    TimeGrid grid_;
    std::size_t paths_;
    std::size_t dim_;
    ProcessKind kind_;
    std::vector<double> values_;
};

enum class NormKind { S2, M2, A2 };

/// Squared empirical norms: S2 = mean sup_t |p|^2, M2 = mean sum |p_i|^2 dt_i
/// (left endpoint), A2 = mean |p_T|^2. Throws std::invalid_argument on an
/// empty sample.
double empirical_norm(const ProcessSample& p, NormKind kind);

/// Same, restricted to the node window [first, last].
double empirical_norm(const ProcessSample& p, NormKind kind, std::size_t first, std::size_t last);

void write_process_csv(std::ostream& out, const ProcessSample& p);

}  // namespace rbdsde
