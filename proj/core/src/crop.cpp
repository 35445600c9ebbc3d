#include "dforce/crop.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace dforce {

void validate_mask(const BinaryMask& mask) {
    if (mask.rows < 1 || mask.cols < 1) {
        throw std::invalid_argument("mask: rows and cols must be >= 1");
    }
    if (mask.cells.size() !=
        static_cast<std::size_t>(mask.rows) * static_cast<std::size_t>(mask.cols)) {
        throw std::invalid_argument("mask: cell buffer size mismatch");
    }
    for (std::uint8_t c : mask.cells) {
        if (c != 0 && c != 1) {
            throw std::invalid_argument("mask: cells must be 0 or 1");
        }
    }
}

void validate_rect_in(const Rect& rect, int rows, int cols) {
    if (rect.top < 0 || rect.left < 0 || rect.top > rect.bottom ||
        rect.left > rect.right || rect.bottom >= rows || rect.right >= cols) {
        throw std::invalid_argument("rect: out of bounds or inverted");
    }
}

RectResult max_interior_rectangle(const BinaryMask& mask) {
    validate_mask(mask);
    const int m = mask.rows;
    const int n = mask.cols;

    RectResult result;
    result.rect = Rect{0, 0, 0, 0};
    long long max_area = 0;
    std::vector<int> heights(n, 0);
    std::vector<int> left(n), right(n), stack;
    stack.reserve(n);

    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            heights[j] = mask.at(i, j) == 1 ? heights[j] + 1 : 0;
        }

        // nearest column to the left whose bar is strictly shorter
        stack.clear();
        for (int j = 0; j < n; ++j) {
            while (!stack.empty() && heights[j] <= heights[stack.back()]) stack.pop_back();
            left[j] = stack.empty() ? -1 : stack.back();
            stack.push_back(j);
        }

        // nearest column to the right whose bar is strictly shorter
        stack.clear();
        for (int j = n - 1; j >= 0; --j) {
            while (!stack.empty() && heights[j] <= heights[stack.back()]) stack.pop_back();
            right[j] = stack.empty() ? n : stack.back();
            stack.push_back(j);
        }

        for (int j = 0; j < n; ++j) {
            const long long area =
                static_cast<long long>(heights[j]) * (right[j] - left[j] - 1);
            if (area > max_area) {
                max_area = area;
                result.rect = Rect{i - heights[j] + 1, left[j] + 1, i, right[j] - 1};
            }
        }
    }
    result.area = max_area;
    result.degenerate = max_area == 0;
    return result;
}

RectResult max_interior_rectangle_bruteforce(const BinaryMask& mask) {
    validate_mask(mask);
    const int m = mask.rows;
    const int n = mask.cols;
    if (static_cast<long long>(m) * n > 10000) {
        throw std::invalid_argument(
            "max_interior_rectangle_bruteforce: mask larger than 10^4 cells");
    }

    // prefix[i][j] = number of zero cells in the i x j top-left submask
    std::vector<std::vector<long long>> prefix(m + 1, std::vector<long long>(n + 1, 0));
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            prefix[i + 1][j + 1] = prefix[i][j + 1] + prefix[i + 1][j] - prefix[i][j] +
                                   (mask.at(i, j) == 0 ? 1 : 0);
        }
    }
    const auto zeros_in = [&prefix](int top, int left, int bottom, int right) {
        return prefix[bottom + 1][right + 1] - prefix[top][right + 1] -
               prefix[bottom + 1][left] + prefix[top][left];
    };

    RectResult result;
    result.rect = Rect{0, 0, 0, 0};
    long long max_area = 0;
    for (int top = 0; top < m; ++top) {
        for (int left = 0; left < n; ++left) {
            for (int bottom = top; bottom < m; ++bottom) {
                for (int right = left; right < n; ++right) {
                    if (zeros_in(top, left, bottom, right) != 0) continue;
                    const long long area = static_cast<long long>(bottom - top + 1) *
                                           (right - left + 1);
                    if (area > max_area) {
                        max_area = area;
                        result.rect = Rect{top, left, bottom, right};
                    }
                }
            }
        }
    }
    result.area = max_area;
    result.degenerate = max_area == 0;
    return result;
}

bool rect_all_ones(const BinaryMask& mask, const Rect& rect) {
    validate_mask(mask);
    validate_rect_in(rect, mask.rows, mask.cols);
    for (int i = rect.top; i <= rect.bottom; ++i) {
        for (int j = rect.left; j <= rect.right; ++j) {
            if (mask.at(i, j) != 1) return false;
        }
    }
    return true;
}

namespace {

// half-up fraction of an extent, at least one pixel
int band_pixels(double fraction, int extent) {
    const int px = static_cast<int>(std::floor(fraction * extent + 0.5));
    return std::clamp(px, 1, extent);
}

}  // namespace

CandidateRegions candidate_regions(int width, int height) {
    if (width < 1 || height < 1) {
        throw std::invalid_argument("candidate_regions: width and height must be >= 1");
    }
    const int top_band = band_pixels(0.20, height);
    const int bottom_band = band_pixels(0.40, height);
    const int left_band = band_pixels(0.20, width);
    const int right_band = band_pixels(0.20, width);
    const int logo_h = band_pixels(0.15, height);
    const int logo_w = band_pixels(0.15, width);

    CandidateRegions regions;
    regions.subtitle_top = Rect{0, 0, top_band - 1, width - 1};
    regions.subtitle_bottom = Rect{height - bottom_band, 0, height - 1, width - 1};
    regions.subtitle_left = Rect{0, 0, height - 1, left_band - 1};
    regions.subtitle_right = Rect{0, width - right_band, height - 1, width - 1};
    regions.logo_top_left = Rect{0, 0, logo_h - 1, logo_w - 1};
    regions.logo_top_right = Rect{0, width - logo_w, logo_h - 1, width - 1};
    regions.logo_bottom_left = Rect{height - logo_h, 0, height - 1, logo_w - 1};
    regions.logo_bottom_right = Rect{height - logo_h, width - logo_w, height - 1, width - 1};
    return regions;
}

CropVerdict accept_crop_explain(const Rect& rect, int frame_w, int frame_h,
                                double area_threshold, double ar_tolerance) {
    if (frame_w < 1 || frame_h < 1) {
        throw std::invalid_argument("accept_crop: frame dims must be >= 1");
    }
    validate_rect_in(rect, frame_h, frame_w);
    if (!(area_threshold >= 0.0) || !(ar_tolerance >= 0.0)) {
        throw std::invalid_argument("accept_crop: thresholds must be non-negative");
    }
    CropVerdict verdict;
    const double frame_area = static_cast<double>(frame_w) * frame_h;
    verdict.area_fraction = static_cast<double>(rect.area()) / frame_area;
    const double rect_ar = static_cast<double>(rect.width()) / rect.height();
    const double frame_ar = static_cast<double>(frame_w) / frame_h;
    verdict.ar_ratio = rect_ar / frame_ar;
    verdict.area_ok = verdict.area_fraction > area_threshold;
    verdict.ar_ok = std::abs(verdict.ar_ratio - 1.0) <= ar_tolerance;
    verdict.accepted = verdict.area_ok && verdict.ar_ok;
    return verdict;
}

bool accept_crop(const Rect& rect, int frame_w, int frame_h, double area_threshold,
                 double ar_tolerance) {
    return accept_crop_explain(rect, frame_w, frame_h, area_threshold, ar_tolerance)
        .accepted;
}

RectResult trim_dark_borders(const std::vector<std::vector<double>>& frames, int rows,
                             int cols, double threshold) {
    if (rows < 1 || cols < 1) {
        throw std::invalid_argument("trim_dark_borders: dims must be >= 1");
    }
    if (frames.empty()) {
        throw std::invalid_argument("trim_dark_borders: need at least one frame");
    }
    const std::size_t want = static_cast<std::size_t>(rows) * cols;
    for (const std::vector<double>& f : frames) {
        if (f.size() != want) {
            throw std::invalid_argument("trim_dark_borders: frame size mismatch");
        }
    }

    // mean intensity per row and per column across all frames
    std::vector<double> row_mean(rows, 0.0), col_mean(cols, 0.0);
    for (const std::vector<double>& f : frames) {
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < cols; ++j) {
                const double v = f[static_cast<std::size_t>(i) * cols + j];
                row_mean[i] += v;
                col_mean[j] += v;
            }
        }
    }
    const double row_norm = 1.0 / (static_cast<double>(frames.size()) * cols);
    const double col_norm = 1.0 / (static_cast<double>(frames.size()) * rows);
    for (double& v : row_mean) v *= row_norm;
    for (double& v : col_mean) v *= col_norm;

    int top = 0, bottom = rows - 1, left = 0, right = cols - 1;
    while (top <= bottom && row_mean[top] < threshold) ++top;
    while (bottom >= top && row_mean[bottom] < threshold) --bottom;
    while (left <= right && col_mean[left] < threshold) ++left;
    while (right >= left && col_mean[right] < threshold) --right;

    RectResult result;
    if (top > bottom || left > right) {
        result.rect = Rect{0, 0, 0, 0};
        result.area = 0;
        result.degenerate = true;
        return result;
    }
    result.rect = Rect{top, left, bottom, right};
    result.area = result.rect.area();
    result.degenerate = false;
    return result;
}

BinaryMask mask_from_boxes(int rows, int cols, const std::vector<Rect>& boxes) {
    if (rows < 1 || cols < 1) {
        throw std::invalid_argument("mask_from_boxes: dims must be >= 1");
    }
    BinaryMask mask;
    mask.rows = rows;
    mask.cols = cols;
    mask.cells.assign(static_cast<std::size_t>(rows) * cols, 1);
    for (const Rect& box : boxes) {
        validate_rect_in(box, rows, cols);
        for (int i = box.top; i <= box.bottom; ++i) {
            for (int j = box.left; j <= box.right; ++j) mask.at(i, j) = 0;
        }
    }
    return mask;
}

std::vector<Rect> random_detection_boxes(int rows, int cols, int count, Rng& rng) {
    if (count < 0) {
        throw std::invalid_argument("random_detection_boxes: count must be >= 0");
    }
    const std::vector<Rect> regions = candidate_regions(cols, rows).all();
    std::vector<Rect> boxes;
    boxes.reserve(count);
    for (int b = 0; b < count; ++b) {
        const Rect& region = regions[rng.uniform_int(regions.size())];
        const int rh = region.height();
        const int rw = region.width();
        const int h = 1 + static_cast<int>(rng.uniform_int(rh));
        const int w = 1 + static_cast<int>(rng.uniform_int(rw));
        const int top = region.top + static_cast<int>(rng.uniform_int(rh - h + 1));
        const int left = region.left + static_cast<int>(rng.uniform_int(rw - w + 1));
        boxes.push_back(Rect{top, left, top + h - 1, left + w - 1});
    }
    return boxes;
}

namespace {

// next token after whitespace and '#' comments
std::string pbm_token(std::istream& in) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c) && c != '#') {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    if (c == '#') in.unget();
    if (tok.empty()) throw std::runtime_error("pbm: truncated header");
    return tok;
}

int pbm_int(std::istream& in) {
    const std::string tok = pbm_token(in);
    try {
        return std::stoi(tok);
    } catch (...) {
        throw std::runtime_error("pbm: bad integer '" + tok + "'");
    }
}

}  // namespace

BinaryMask read_pbm_mask(std::istream& in) {
    const std::string magic = pbm_token(in);
    if (magic != "P1" && magic != "P4") {
        throw std::runtime_error("pbm: expected magic P1 or P4, got '" + magic + "'");
    }
    const int cols = pbm_int(in);
    const int rows = pbm_int(in);
    if (rows < 1 || cols < 1) throw std::runtime_error("pbm: non-positive dimensions");

    BinaryMask mask;
    mask.rows = rows;
    mask.cols = cols;
    mask.cells.assign(static_cast<std::size_t>(rows) * cols, 1);

    if (magic == "P1") {
        for (std::size_t k = 0; k < mask.cells.size(); ++k) {
            int c = in.get();
            while (c != EOF && (std::isspace(c) || c == '#')) {
                if (c == '#') {
                    while (c != EOF && c != '\n') c = in.get();
                }
                c = in.get();
            }
            if (c != '0' && c != '1') throw std::runtime_error("pbm: bad P1 pixel");
            // PBM 1 = black = detected -> mask 0
            mask.cells[k] = c == '1' ? 0 : 1;
        }
    } else {
        // P4: exactly one whitespace byte after the header, then packed rows
        const int row_bytes = (cols + 7) / 8;
        std::vector<char> buf(static_cast<std::size_t>(row_bytes));
        for (int i = 0; i < rows; ++i) {
            in.read(buf.data(), row_bytes);
            if (in.gcount() != row_bytes) throw std::runtime_error("pbm: truncated P4 data");
            for (int j = 0; j < cols; ++j) {
                const int bit =
                    (static_cast<unsigned char>(buf[j / 8]) >> (7 - j % 8)) & 1;
                mask.at(i, j) = bit == 1 ? 0 : 1;
            }
        }
    }
    return mask;
}

BinaryMask read_pbm_mask(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pbm: cannot open '" + path + "'");
    return read_pbm_mask(in);
}

void write_pbm_mask(const BinaryMask& mask, std::ostream& out, bool binary) {
    validate_mask(mask);
    if (!binary) {
        out << "P1\n" << mask.cols << " " << mask.rows << "\n";
        for (int i = 0; i < mask.rows; ++i) {
            for (int j = 0; j < mask.cols; ++j) {
                if (j > 0) out << ' ';
                out << (mask.at(i, j) == 0 ? '1' : '0');  // detected -> black
            }
            out << '\n';
        }
        return;
    }
    out << "P4\n" << mask.cols << " " << mask.rows << "\n";
    const int row_bytes = (mask.cols + 7) / 8;
    std::vector<char> buf(static_cast<std::size_t>(row_bytes));
    for (int i = 0; i < mask.rows; ++i) {
        std::fill(buf.begin(), buf.end(), 0);
        for (int j = 0; j < mask.cols; ++j) {
            if (mask.at(i, j) == 0) {
                buf[j / 8] |= static_cast<char>(1 << (7 - j % 8));
            }
        }
        out.write(buf.data(), row_bytes);
    }
}

void write_pbm_mask(const BinaryMask& mask, const std::string& path, bool binary) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pbm: cannot open '" + path + "' for writing");
    write_pbm_mask(mask, out, binary);
}

}  // namespace dforce
