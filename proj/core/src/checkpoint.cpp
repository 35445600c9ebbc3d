#include "dforce/checkpoint.hpp"

#include <bit>
#include <cstddef>
#include <stdexcept>

#include "dforce/io.hpp"

namespace dforce {
namespace {

constexpr std::uint32_t kKindDenoiser = 1;
constexpr std::uint32_t kKindReward = 2;
constexpr char kMagic[4] = {'D', 'F', 'C', 'P'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
  public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

    void check_magic() {
        need(4, "magic");
        for (int i = 0; i < 4; ++i) {
            if (bytes_[pos_ + i] != kMagic[i]) {
                throw std::runtime_error("checkpoint: bad magic (not a DFCP file)");
            }
        }
        pos_ += 4;
    }

    void expect_end() {
        if (pos_ != bytes_.size()) {
            throw std::runtime_error("checkpoint: trailing bytes after payload");
        }
    }

  private:
    void need(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw std::runtime_error(std::string("checkpoint: truncated reading ") + what);
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

void check_header(Reader& r, std::uint32_t expected_kind, const char* expected_name) {
    r.check_magic();
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    const std::uint32_t kind = r.u32("record kind");
    if (kind != expected_kind) {
        throw std::runtime_error(std::string("checkpoint: record is not a ") + expected_name +
                                 " (kind " + std::to_string(kind) + ")");
    }
}

int shape_dim(Reader& r, const char* what) {
    const std::uint32_t v = r.u32(what);
    if (v == 0 || v > (1u << 24)) {
        throw std::runtime_error(std::string("checkpoint: implausible ") + what + " " +
                                 std::to_string(v));
    }
    return static_cast<int>(v);
}

std::vector<double> read_values(Reader& r, std::size_t expected) {
    const std::uint64_t count = r.u64("value count");
    if (count != expected) {
        throw std::runtime_error("checkpoint: value count " + std::to_string(count) +
                                 " does not match the shape's " + std::to_string(expected));
    }
    std::vector<double> values(expected);
    for (std::size_t i = 0; i < expected; ++i) values[i] = r.f64("values");
    r.expect_end();
    return values;
}

}  // namespace

std::string serialize_denoiser(const DenoiserParams& params) {
    validate_params(params);
    std::string out;
    out.reserve(4 + 4 + 4 + 16 + 8 + 8 * params.values.size());
    out.append(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, kKindDenoiser);
    put_u32(out, static_cast<std::uint32_t>(params.config.dim));
    put_u32(out, static_cast<std::uint32_t>(params.config.hidden));
    put_u32(out, static_cast<std::uint32_t>(params.config.max_frames));
    put_u32(out, static_cast<std::uint32_t>(params.config.num_conds));
    put_u64(out, params.values.size());
    for (const double v : params.values) put_f64(out, v);
    return out;
}

DenoiserParams deserialize_denoiser(const std::string& bytes) {
    Reader r(bytes);
    check_header(r, kKindDenoiser, "denoiser");
    DenoiserParams params;
    params.config.dim = shape_dim(r, "dim");
    params.config.hidden = shape_dim(r, "hidden");
    params.config.max_frames = shape_dim(r, "max_frames");
    params.config.num_conds = shape_dim(r, "num_conds");
    params.values = read_values(r, param_count(params.config));
    validate_params(params);
    return params;
}

void save_denoiser_checkpoint(const std::filesystem::path& path, const DenoiserParams& params) {
    write_file_atomic(path, serialize_denoiser(params));
}

DenoiserParams load_denoiser_checkpoint(const std::filesystem::path& path) {
    return deserialize_denoiser(read_file(path));
}

std::string serialize_reward(const RewardParams& params) {
    validate_reward_params(params);
    std::string out;
    out.reserve(4 + 4 + 4 + 16 + 8 + 8 * params.values.size());
    out.append(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, kKindReward);
    put_u32(out, static_cast<std::uint32_t>(params.config.dim));
    put_u32(out, static_cast<std::uint32_t>(params.config.hidden));
    put_f64(out, params.theta_tie);
    put_u64(out, params.values.size());
    for (const double v : params.values) put_f64(out, v);
    return out;
}

RewardParams deserialize_reward(const std::string& bytes) {
    Reader r(bytes);
    check_header(r, kKindReward, "reward scorer");
    RewardParams params;
    params.config.dim = shape_dim(r, "dim");
    params.config.hidden = shape_dim(r, "hidden");
    params.theta_tie = r.f64("theta_tie");
    params.values = read_values(r, reward_param_count(params.config));
    validate_reward_params(params);
    return params;
}

void save_reward_checkpoint(const std::filesystem::path& path, const RewardParams& params) {
    write_file_atomic(path, serialize_reward(params));
}

RewardParams load_reward_checkpoint(const std::filesystem::path& path) {
    return deserialize_reward(read_file(path));
}

}  // namespace dforce
