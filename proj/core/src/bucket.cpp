#include "dforce/bucket.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace dforce {

int fps_normalize(double original_fps) {
    if (!std::isfinite(original_fps) || original_fps <= 0.0) {
        throw std::invalid_argument("fps_normalize: fps must be finite and > 0");
    }
    const double r16 = std::fmod(original_fps, 16.0);
    const double r24 = std::fmod(original_fps, 24.0);
    return r24 <= r16 ? 24 : 16;
}

void validate_grid(const BucketGrid& grid) {
    if (grid.duration_centers.empty() || grid.ar_centers.empty()) {
        throw std::invalid_argument("bucket grid: center lists must be non-empty");
    }
    const auto check_axis = [](const std::vector<double>& centers, const char* name) {
        double prev = 0.0;
        for (double c : centers) {
            if (!std::isfinite(c) || c <= 0.0) {
                throw std::invalid_argument(std::string("bucket grid: ") + name +
                                            " centers must be finite and > 0");
            }
            if (c <= prev) {
                throw std::invalid_argument(std::string("bucket grid: ") + name +
                                            " centers must be strictly increasing");
            }
            prev = c;
        }
    };
    check_axis(grid.duration_centers, "duration");
    check_axis(grid.ar_centers, "aspect-ratio");
    if (grid.max_batch < 1) {
        throw std::invalid_argument("bucket grid: max_batch must be >= 1");
    }
}

int flat_bucket_id(const BucketGrid& grid, const Bucket& bucket) {
    const int n_ar = static_cast<int>(grid.ar_centers.size());
    if (bucket.duration_idx < 0 ||
        bucket.duration_idx >= static_cast<int>(grid.duration_centers.size()) ||
        bucket.ar_idx < 0 || bucket.ar_idx >= n_ar) {
        throw std::invalid_argument("flat_bucket_id: bucket outside the grid");
    }
    return bucket.duration_idx * n_ar + bucket.ar_idx;
}

int bucket_count(const BucketGrid& grid) {
    return static_cast<int>(grid.duration_centers.size() * grid.ar_centers.size());
}

namespace {

// index of the nearest center in log space; strict improvement keeps the
// lower index on exact ties
int nearest_log(double value, const std::vector<double>& centers) {
    int best = 0;
    double best_dist = std::abs(std::log(value / centers[0]));
    for (std::size_t i = 1; i < centers.size(); ++i) {
        const double dist = std::abs(std::log(value / centers[i]));
        if (dist < best_dist) {
            best_dist = dist;
            best = static_cast<int>(i);
        }
    }
    return best;
}

}  // namespace

Bucket assign_bucket(double duration_s, double aspect_ratio, const BucketGrid& grid) {
    validate_grid(grid);
    if (!std::isfinite(duration_s) || duration_s <= 0.0 || !std::isfinite(aspect_ratio) ||
        aspect_ratio <= 0.0) {
        throw std::invalid_argument("assign_bucket: duration and ratio must be > 0");
    }
    Bucket bucket;
    bucket.duration_idx = nearest_log(duration_s, grid.duration_centers);
    bucket.ar_idx = nearest_log(aspect_ratio, grid.ar_centers);
    return bucket;
}

int pick_bucket_weighted(const std::vector<std::size_t>& occupancy, Rng& rng) {
    std::uint64_t total = 0;
    for (std::size_t occ : occupancy) total += occ;
    if (total == 0) {
        throw std::invalid_argument("pick_bucket_weighted: all buckets are empty");
    }
    std::uint64_t draw = rng.uniform_int(total);
    for (std::size_t i = 0; i < occupancy.size(); ++i) {
        if (draw < occupancy[i]) return static_cast<int>(i);
        draw -= occupancy[i];
    }
    // unreachable: draw < total = sum of occupancies
    throw std::logic_error("pick_bucket_weighted: inverse-CDF walk overran");
}

EpochSampler::EpochSampler(const BucketGrid& grid,
                           std::vector<std::vector<int>> items_by_bucket)
    : grid_(grid), items_(std::move(items_by_bucket)) {
    validate_grid(grid_);
    if (items_.size() != static_cast<std::size_t>(bucket_count(grid_))) {
        throw std::invalid_argument(
            "EpochSampler: need one item list per bucket in the grid");
    }
    occupancy_.resize(items_.size());
    for (std::size_t i = 0; i < items_.size(); ++i) {
        occupancy_[i] = items_[i].size();
        remaining_ += items_[i].size();
    }
    if (remaining_ == 0) {
        throw std::invalid_argument("EpochSampler: at least one bucket must be non-empty");
    }
}

EpochSampler::Draw EpochSampler::next(Rng& rng) {
    if (remaining_ == 0) {
        throw std::runtime_error("EpochSampler: epoch exhausted");
    }
    Draw draw;
    draw.bucket_id = pick_bucket_weighted(occupancy_, rng);
    std::vector<int>& pool = items_[draw.bucket_id];
    const std::size_t take =
        std::min(static_cast<std::size_t>(grid_.max_batch), pool.size());
    draw.items.assign(pool.end() - static_cast<std::ptrdiff_t>(take), pool.end());
    pool.resize(pool.size() - take);
    occupancy_[draw.bucket_id] = pool.size();
    remaining_ -= take;
    return draw;
}

}  // namespace dforce
