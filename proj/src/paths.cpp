#include "rbdsde/paths.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "rbdsde/parallel.hpp"
#include "rbdsde/philox.hpp"

namespace rbdsde {

TimeGrid TimeGrid::uniform(double horizon, std::size_t steps) {
    std::vector<double> nodes(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i)
        nodes[i] = horizon * static_cast<double>(i) / static_cast<double>(steps);
    nodes.back() = horizon;
    return TimeGrid(std::move(nodes), true);
}

TimeGrid TimeGrid::from_nodes(std::vector<double> nodes) {
    if (nodes.size() < 2) throw std::invalid_argument("time grid needs at least two nodes");
    if (nodes.front() != 0.0) throw std::invalid_argument("time grid must start at 0");
    for (std::size_t i = 1; i < nodes.size(); ++i)
        if (!(nodes[i] > nodes[i - 1]))
            throw std::invalid_argument("time grid nodes must be strictly increasing");
    return TimeGrid(std::move(nodes), false);
}

std::optional<std::size_t> TimeGrid::index_of(double t, double tol) const {
    const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t - tol);
    if (it != nodes_.end() && std::abs(*it - t) <= tol)
        return static_cast<std::size_t>(it - nodes_.begin());
    return std::nullopt;
}

TimeGrid build_grid(double horizon, long steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw std::invalid_argument("horizon T must be positive");
    if (steps < 1) throw std::invalid_argument("number of steps N must be at least 1");
    return TimeGrid::uniform(horizon, static_cast<std::size_t>(steps));
}

namespace {

constexpr std::uint32_t kStreamW = 0;
constexpr std::uint32_t kStreamB = 1;

PhiloxKey key_from_seed(std::uint64_t seed) {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

// Fills `count` standard normals scaled per step into out; normal j belongs to
// step j / dim.
void fill_stream(std::span<double> out, std::size_t dim, const TimeGrid& grid,
                 std::uint64_t slot, std::uint32_t stream, const PhiloxKey& key) {
    const auto slot_lo = static_cast<std::uint32_t>(slot);
    const auto slot_hi = static_cast<std::uint32_t>(slot >> 32);
    for (std::size_t j = 0; j < out.size(); j += 2) {
        const std::uint64_t block = j / 2;
        const PhiloxCounter ctr{static_cast<std::uint32_t>(block),
                                static_cast<std::uint32_t>(block >> 32), slot_lo,
                                stream | (slot_hi << 1)};
        const auto pair = philox_normal_pair(ctr, key);
        for (std::size_t m = 0; m < 2 && j + m < out.size(); ++m) {
            const std::size_t step = (j + m) / dim;
            out[j + m] = pair[m] * std::sqrt(grid.dt(step));
        }
    }
}

std::vector<double> sample_b_path(const TimeGrid& grid, std::size_t ell, std::uint64_t seed,
                                  std::uint64_t b_index) {
    std::vector<double> b(grid.num_steps() * ell);
    fill_stream(b, ell, grid, b_index, kStreamB, key_from_seed(seed));
    return b;
}

}  // namespace

NoiseEnsemble::NoiseEnsemble(TimeGrid grid, std::size_t paths, std::size_t d, std::size_t ell,
                             std::uint64_t seed, std::uint64_t b_index, std::vector<double> w,
                             std::vector<double> b)
    : grid_(std::move(grid)), paths_(paths), d_(d), ell_(ell), seed_(seed), b_index_(b_index),
      w_(std::move(w)), b_(std::move(b)) {
    if (paths_ < 1 || d_ < 1 || ell_ < 1)
        throw std::invalid_argument("noise ensemble dimensions must be positive");
    if (w_.size() != paths_ * grid_.num_steps() * d_)
        throw std::invalid_argument("W increment array has wrong size");
    if (b_.size() != grid_.num_steps() * ell_)
        throw std::invalid_argument("B increment array has wrong size");
}

std::vector<double> NoiseEnsemble::b_tail(std::size_t step) const {
    std::vector<double> tail(ell_, 0.0);
    for (std::size_t i = grid_.num_steps(); i-- > step;)
        for (std::size_t l = 0; l < ell_; ++l) tail[l] += b_[i * ell_ + l];
    return tail;
}

NoiseEnsemble sample_noise(const TimeGrid& grid, long paths, long d, long ell, std::uint64_t seed,
                           std::uint64_t b_index) {
    if (paths < 1) throw std::invalid_argument("number of paths must be at least 1");
    if (d < 1 || ell < 1) throw std::invalid_argument("Brownian dimensions must be at least 1");
    const auto m = static_cast<std::size_t>(paths);
    const auto dw = static_cast<std::size_t>(d);
    const std::size_t per_path = grid.num_steps() * dw;
    const PhiloxKey key = key_from_seed(seed);

    std::vector<double> w(m * per_path);
    for_each_block(m, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k)
            fill_stream(std::span<double>(w.data() + k * per_path, per_path), dw, grid, k,
                        kStreamW, key);
    });
    auto b = sample_b_path(grid, static_cast<std::size_t>(ell), seed, b_index);
    return NoiseEnsemble(grid, m, dw, static_cast<std::size_t>(ell), seed, b_index, std::move(w),
                         std::move(b));
}

NoiseEnsemble resample_b(const NoiseEnsemble& noise, std::uint64_t b_seed, std::uint64_t b_index) {
    auto b = sample_b_path(noise.grid(), noise.b_dim(), b_seed, b_index);
    std::vector<double> w(noise.w_increments().begin(), noise.w_increments().end());
    return NoiseEnsemble(noise.grid(), noise.num_paths(), noise.w_dim(), noise.b_dim(),
                         noise.seed(), b_index, std::move(w), std::move(b));
}

NoiseEnsemble coarsen(const NoiseEnsemble& noise, std::size_t factor) {
    const TimeGrid& fine = noise.grid();
    if (factor < 1 || fine.num_steps() % factor != 0)
        throw std::invalid_argument("coarsening factor must divide the number of steps");
    const std::size_t coarse_steps = fine.num_steps() / factor;
    std::vector<double> nodes(coarse_steps + 1);
    for (std::size_t i = 0; i <= coarse_steps; ++i) nodes[i] = fine.node(i * factor);
    TimeGrid grid = fine.is_uniform() ? TimeGrid::uniform(fine.horizon(), coarse_steps)
                                      : TimeGrid::from_nodes(std::move(nodes));

    const std::size_t d = noise.w_dim();
    const std::size_t ell = noise.b_dim();
    std::vector<double> w(noise.num_paths() * coarse_steps * d, 0.0);
    for (std::size_t k = 0; k < noise.num_paths(); ++k)
        for (std::size_t i = 0; i < coarse_steps; ++i)
            for (std::size_t c = 0; c < d; ++c) {
                double s = 0.0;
                for (std::size_t f = 0; f < factor; ++f) s += noise.w(k, i * factor + f, c);
                w[(k * coarse_steps + i) * d + c] = s;
            }
    std::vector<double> b(coarse_steps * ell, 0.0);
    for (std::size_t i = 0; i < coarse_steps; ++i)
        for (std::size_t f = 0; f < factor; ++f) {
            const auto inc = noise.b_step(i * factor + f);
            for (std::size_t l = 0; l < ell; ++l) b[i * ell + l] += inc[l];
        }
    return NoiseEnsemble(std::move(grid), noise.num_paths(), d, ell, noise.seed(),
                         noise.b_index(), std::move(w), std::move(b));
}

void write_noise_csv(std::ostream& out, const NoiseEnsemble& noise) {
    out << "path,step,component,value\n";
    out << std::setprecision(17);
    const std::size_t steps = noise.grid().num_steps();
    for (std::size_t k = 0; k < noise.num_paths(); ++k)
        for (std::size_t i = 0; i < steps; ++i)
            for (std::size_t c = 0; c < noise.w_dim(); ++c)
                out << k << ',' << i << ',' << c << ',' << noise.w(k, i, c) << '\n';
    for (std::size_t i = 0; i < steps; ++i)
        for (std::size_t l = 0; l < noise.b_dim(); ++l)
            out << -1 << ',' << i << ',' << l << ',' << noise.b_step(i)[l] << '\n';
}

NoiseEnsemble read_noise_csv(std::istream& in, const TimeGrid& grid, std::uint64_t seed,
                             std::uint64_t b_index) {
    std::string line;
    if (!std::getline(in, line) || line != "path,step,component,value")
        throw std::invalid_argument("noise CSV: missing header");
    struct Row {
        long path;
        std::size_t step, comp;
        double value;
    };
    std::vector<Row> rows;
    std::size_t max_path = 0, max_wc = 0, max_bc = 0;
    bool any_w = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        Row r{};
        char c1 = 0, c2 = 0, c3 = 0;
        if (!(ls >> r.path >> c1 >> r.step >> c2 >> r.comp >> c3 >> r.value) || c1 != ',' ||
            c2 != ',' || c3 != ',')
            throw std::invalid_argument("noise CSV: malformed row '" + line + "'");
        if (r.step >= grid.num_steps()) throw std::invalid_argument("noise CSV: step out of range");
        if (r.path >= 0) {
            any_w = true;
            max_path = std::max(max_path, static_cast<std::size_t>(r.path));
            max_wc = std::max(max_wc, r.comp);
        } else {
            max_bc = std::max(max_bc, r.comp);
        }
        rows.push_back(r);
    }
    if (!any_w) throw std::invalid_argument("noise CSV: no W rows");
    const std::size_t paths = max_path + 1, d = max_wc + 1, ell = max_bc + 1;
    const std::size_t steps = grid.num_steps();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> w(paths * steps * d, nan), b(steps * ell, nan);
    for (const Row& r : rows) {
        if (r.path >= 0)
            w[(static_cast<std::size_t>(r.path) * steps + r.step) * d + r.comp] = r.value;
        else
            b[r.step * ell + r.comp] = r.value;
    }
    auto complete = [](const std::vector<double>& v) {
        return std::none_of(v.begin(), v.end(), [](double x) { return std::isnan(x); });
    };
    if (!complete(w) || !complete(b)) throw std::invalid_argument("noise CSV: missing entries");
    return NoiseEnsemble(grid, paths, d, ell, seed, b_index, std::move(w), std::move(b));
}

ProcessSample::ProcessSample(TimeGrid grid, std::size_t paths, std::size_t dim, ProcessKind kind)
    : grid_(std::move(grid)), paths_(paths), dim_(dim), kind_(kind),
      values_(paths * grid_.num_nodes() * dim, 0.0) {}

ProcessSample::ProcessSample(TimeGrid grid, std::size_t paths, std::size_t dim, ProcessKind kind,
                             std::vector<double> values)
    : grid_(std::move(grid)), paths_(paths), dim_(dim), kind_(kind), values_(std::move(values)) {
    if (dim_ < 1) throw std::invalid_argument("process dimension must be positive");
    if (values_.size() != paths_ * grid_.num_nodes() * dim_)
        throw std::invalid_argument("process sample has wrong size");
    if (kind_ != ProcessKind::KLike) return;
    for (std::size_t k = 0; k < paths_; ++k)
        for (std::size_t c = 0; c < dim_; ++c) {
            if ((*this)(k, 0, c) != 0.0)
                throw std::invalid_argument("K-like process must start at 0");
            for (std::size_t i = 1; i < grid_.num_nodes(); ++i)
                if ((*this)(k, i, c) < (*this)(k, i - 1, c))
                    throw std::invalid_argument("K-like process must be non-decreasing (path " +
                                                std::to_string(k) + ", node " +
                                                std::to_string(i) + ")");
        }
}

double ProcessSample::mean_at(std::size_t node, std::size_t c) const {
    if (paths_ == 0) return 0.0;
    return block_sum(paths_, [&](std::size_t k) { return (*this)(k, node, c); }) /
           static_cast<double>(paths_);
}

namespace {

double squared_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

}  // namespace

double empirical_norm(const ProcessSample& p, NormKind kind) {
    return empirical_norm(p, kind, 0, p.grid().num_steps());
}

double empirical_norm(const ProcessSample& p, NormKind kind, std::size_t first, std::size_t last) {
    if (p.num_paths() == 0) throw std::invalid_argument("empirical norm of an empty sample");
    if (first > last || last >= p.grid().num_nodes())
        throw std::invalid_argument("empirical norm: invalid node window");
    const TimeGrid& grid = p.grid();
    const double total = block_sum(p.num_paths(), [&](std::size_t k) {
        switch (kind) {
            case NormKind::S2: {
                double sup = 0.0;
                for (std::size_t i = first; i <= last; ++i)
                    sup = std::max(sup, squared_norm(p.at(k, i)));
                return sup;
            }
            case NormKind::M2: {
                double integral = 0.0;
                for (std::size_t i = first; i < last; ++i)
                    integral += squared_norm(p.at(k, i)) * grid.dt(i);
                return integral;
            }
            case NormKind::A2:
                return squared_norm(p.at(k, last));
        }
        return 0.0;
    });
    return total / static_cast<double>(p.num_paths());
}

void write_process_csv(std::ostream& out, const ProcessSample& p) {
    out << "path,step,component,value\n" << std::setprecision(17);
    for (std::size_t k = 0; k < p.num_paths(); ++k)
        for (std::size_t i = 0; i < p.grid().num_nodes(); ++i)
            for (std::size_t c = 0; c < p.dim(); ++c)
                out << k << ',' << i << ',' << c << ',' << p(k, i, c) << '\n';
}

}  // namespace rbdsde
