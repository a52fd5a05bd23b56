#pragma once

// Checkpoint layout, all integers u32 and all values f32, little-endian:
//
//   magic    8 bytes "TEACKPT\0"
//   version  u32 (kCheckpointVersion)
//   config   u32 byte length + UTF-8 JSON of ModelConfig
//   vocab    u32 token count, then per token: u32 byte length + bytes
//   params   u32 tensor count, then per tensor in model registration order:
//            u32 name length + name, u32 rows, u32 cols, rows*cols f32 row-major
//
// Float models round-trip bit-exactly; double models are narrowed to f32.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "tea/model.hpp"
#include "tea/model_config_io.hpp"

namespace tea {

inline constexpr std::array<char, 8> kCheckpointMagic{'T', 'E', 'A', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw CheckpointError("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
  const auto n = get_u32(in);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) throw CheckpointError("checkpoint truncated");
  return s;
}

inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline float get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }

}  // namespace detail

template <typename Scalar>
void save_checkpoint(const Model<Scalar>& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_u32(out, kCheckpointVersion);
  detail::put_string(out, model_config_to_json(model.config()));
  const auto& tokens = model.vocab().tokens();
  detail::put_u32(out, static_cast<std::uint32_t>(tokens.size()));
  for (const auto& tok : tokens) detail::put_string(out, tok);
  const auto& params = model.params();
  detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (int i = 0; i < params.size(); ++i) {
    const auto& m = params.value(i);
    detail::put_string(out, params.name(i));
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index k = 0; k < m.size(); ++k) detail::put_f32(out, static_cast<float>(m.data()[k]));
  }
  if (!out) throw CheckpointError("error while writing checkpoint '" + path + "'");
}

template <typename Scalar>
Model<Scalar> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw CheckpointError("'" + path + "' is not a checkpoint");
  }
  const auto version = detail::get_u32(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const ModelConfig cfg = model_config_from_json(detail::get_string(in));
  std::vector<std::string> tokens(detail::get_u32(in));
  for (auto& tok : tokens) tok = detail::get_string(in);
  Model<Scalar> model(cfg, TokenVocab::from_tokens(tokens), 0);
  auto& params = model.params();
  const auto count = detail::get_u32(in);
  if (static_cast<int>(count) != params.size()) throw CheckpointError("checkpoint parameter count mismatch");
  for (int i = 0; i < params.size(); ++i) {
    const auto name = detail::get_string(in);
    const auto rows = detail::get_u32(in);
    const auto cols = detail::get_u32(in);
    auto& m = params.value(i);
    if (name != params.name(i) || rows != m.rows() || cols != m.cols()) {
      throw CheckpointError("checkpoint tensor '" + name + "' does not match the model layout");
    }
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<Scalar>(detail::get_f32(in));
  }
  return model;
}

}  // namespace tea
