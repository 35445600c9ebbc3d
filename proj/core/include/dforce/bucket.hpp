#pragma once

#include <cstddef>
#include <vector>

#include "dforce/rng.hpp"

// Temporal/spatial bucketing for heterogeneous clips: residue-aware fps
// normalization, nearest-bucket assignment on a duration x aspect-ratio grid
// under log distance, and occupancy-proportional stochastic batch assembly.
namespace dforce {

// argmin over {16, 24} of fmod(original_fps, target); ties resolve to 24 (the
// rate kept by the high-quality fine-tuning stage). Fixed points: 16 and 24.
int fps_normalize(double original_fps);

struct BucketGrid {
    std::vector<double> duration_centers;  // seconds, strictly increasing
    std::vector<double> ar_centers;        // width/height, strictly increasing
    int max_batch = 1;                     // items emitted per draw, at most
};

void validate_grid(const BucketGrid& grid);

struct Bucket {
    int duration_idx = 0;
    int ar_idx = 0;
    bool operator==(const Bucket&) const = default;
};

// Flat id = duration_idx * |ar_centers| + ar_idx.
int flat_bucket_id(const BucketGrid& grid, const Bucket& bucket);
int bucket_count(const BucketGrid& grid);

// Nearest bucket under |log(dur/center_d)| + |log(ar/center_ar)|. The sum
// splits per axis, so each index minimizes its own log distance; ties take
// the lower index. Invariant to rescaling all durations together with the
// duration grid (log-ratio property).
Bucket assign_bucket(double duration_s, double aspect_ratio, const BucketGrid& grid);

// Index drawn with probability exactly proportional to occupancy (integer
// inverse-CDF on an unbiased draw). Rejects all-zero occupancy.
int pick_bucket_weighted(const std::vector<std::size_t>& occupancy, Rng& rng);

// One epoch over a bucketed dataset: each draw picks a bucket in proportion
// to its remaining occupancy and emits up to max_batch of its items. Every
// item is emitted exactly once per epoch.
class EpochSampler {
  public:
    // items_by_bucket[flat id] lists the dataset indices in that bucket.
    EpochSampler(const BucketGrid& grid, std::vector<std::vector<int>> items_by_bucket);

    struct Draw {
        int bucket_id = 0;
        std::vector<int> items;
    };

    bool done() const { return remaining_ == 0; }
    std::size_t remaining() const { return remaining_; }
    const std::vector<std::size_t>& occupancy() const { return occupancy_; }

    // Draws the next batch; throws when the epoch is exhausted.
    Draw next(Rng& rng);

  private:
    BucketGrid grid_;
    std::vector<std::vector<int>> items_;
    std::vector<std::size_t> occupancy_;
    std::size_t remaining_ = 0;
};

}  // namespace dforce
