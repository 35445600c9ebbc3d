#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dforce/rng.hpp"

// Frame-geometry side of the data-curation pipeline: largest interior
// rectangle over a detection mask, candidate detection regions, crop
// acceptance, dark-border trimming, and portable-bitmap mask I/O.
namespace dforce {

// 0 marks detected subtitle/logo pixels, 1 marks clean pixels.
struct BinaryMask {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> cells;  // rows * cols, row-major, each 0 or 1

    std::uint8_t at(int i, int j) const {
        return cells[static_cast<std::size_t>(i) * cols + j];
    }
    std::uint8_t& at(int i, int j) {
        return cells[static_cast<std::size_t>(i) * cols + j];
    }
};

void validate_mask(const BinaryMask& mask);

// Inclusive pixel coordinates.
struct Rect {
    int top = 0;
    int left = 0;
    int bottom = 0;
    int right = 0;

    int width() const { return right - left + 1; }
    int height() const { return bottom - top + 1; }
    long long area() const {
        return static_cast<long long>(width()) * static_cast<long long>(height());
    }
    bool operator==(const Rect&) const = default;
};

// Requires 0 <= top <= bottom < rows and 0 <= left <= right < cols.
void validate_rect_in(const Rect& rect, int rows, int cols);

struct RectResult {
    Rect rect;
    long long area = 0;
    bool degenerate = false;  // no all-ones rectangle exists (area 0)
};

// Maximum-area axis-aligned rectangle of 1s via per-row histogram heights and
// monotonic-stack left/right boundaries; O(rows*cols). On equal areas the
// first maximum in the row-major scan wins. An all-zero mask yields area 0
// with the degenerate flag set.
RectResult max_interior_rectangle(const BinaryMask& mask);

// Exhaustive O(m^2 n^2) reference (prefix-sum rectangle checks); guarded to
// masks with at most 10^4 cells. Areas always agree with the fast version;
// coordinates may differ on ties.
RectResult max_interior_rectangle_bruteforce(const BinaryMask& mask);

// True iff every cell inside rect is 1.
bool rect_all_ones(const BinaryMask& mask, const Rect& rect);

// Bands where subtitles live (full-width top 20% / bottom 40%, full-height
// left 20% / right 20%) and the four 15% x 15% corner boxes where logos live.
// Fractions are rounded half-up to pixels and clamped to at least one pixel.
struct CandidateRegions {
    Rect subtitle_top;
    Rect subtitle_bottom;
    Rect subtitle_left;
    Rect subtitle_right;
    Rect logo_top_left;
    Rect logo_top_right;
    Rect logo_bottom_left;
    Rect logo_bottom_right;

    std::vector<Rect> all() const {
        return {subtitle_top,  subtitle_bottom,  subtitle_left,     subtitle_right,
                logo_top_left, logo_top_right,   logo_bottom_left,  logo_bottom_right};
    }
};

CandidateRegions candidate_regions(int width, int height);

struct CropVerdict {
    bool accepted = false;
    bool area_ok = false;
    bool ar_ok = false;
    double area_fraction = 0.0;  // rect area / frame area
    double ar_ratio = 0.0;       // rect aspect ratio / frame aspect ratio
};

// Accepts iff the rect covers strictly more than area_threshold of the frame
// AND its aspect ratio is within ar_tolerance (relative) of the frame's.
CropVerdict accept_crop_explain(const Rect& rect, int frame_w, int frame_h,
                                double area_threshold = 0.8, double ar_tolerance = 0.1);
bool accept_crop(const Rect& rect, int frame_w, int frame_h,
                 double area_threshold = 0.8, double ar_tolerance = 0.1);

// Rows/columns whose mean intensity across all frames stays below threshold
// are trimmed from the outside in; returns the surviving interior (degenerate
// when everything is dark). Each frame is rows x cols, row-major, in [0, 1].
RectResult trim_dark_borders(const std::vector<std::vector<double>>& frames, int rows,
                             int cols, double threshold = 16.0 / 255.0);

// Mask with 0 inside every given box and 1 elsewhere (the bridge from
// detection boxes to the rectangle search). Boxes must lie inside the mask.
BinaryMask mask_from_boxes(int rows, int cols, const std::vector<Rect>& boxes);

// Synthetic detections for tests and demos: each box lands inside one of the
// candidate regions of the frame, with random size and position.
std::vector<Rect> random_detection_boxes(int rows, int cols, int count, Rng& rng);

// Portable-bitmap mask I/O (P1 ASCII and P4 binary). PBM stores 1 for black;
// black pixels are the detections, so they load as mask value 0.
BinaryMask read_pbm_mask(std::istream& in);
BinaryMask read_pbm_mask(const std::string& path);
void write_pbm_mask(const BinaryMask& mask, std::ostream& out, bool binary);
void write_pbm_mask(const BinaryMask& mask, const std::string& path, bool binary);

}  // namespace dforce
