#include "autoad/nn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace autoad::nn {

namespace {

constexpr char kMagic[4] = {'A', 'D', 'C', 'K'};

void write_u64(std::ofstream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (in.gcount() != 8) {
    throw AutoadError(ErrorCode::MalformedFixture, "truncated checkpoint");
  }
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file,
                     const std::vector<Parameter*>& params,
                     const nlohmann::json& config) {
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw AutoadError(ErrorCode::MissingFile, "cannot write " + file.string());
  }
  out.write(kMagic, 4);
  const std::string cfg = config.dump();
  write_u64(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  write_u64(out, params.size());
  for (const auto* p : params) {
    write_u64(out, p->name.size());
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_u64(out, static_cast<uint64_t>(p->value.rows()));
    write_u64(out, static_cast<uint64_t>(p->value.cols()));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(sizeof(double) * p->value.size()));
  }
}

namespace {

nlohmann::json read_header(std::ifstream& in, const std::filesystem::path& file) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw AutoadError(ErrorCode::MalformedFixture,
                      file.string() + ": not a checkpoint file");
  }
  const uint64_t cfg_len = read_u64(in);
  std::string cfg(cfg_len, '\0');
  in.read(cfg.data(), static_cast<std::streamsize>(cfg_len));
  try {
    return nlohmann::json::parse(cfg);
  } catch (const nlohmann::json::exception& e) {
    throw AutoadError(ErrorCode::MalformedFixture,
                      file.string() + ": bad config echo: " + e.what());
  }
}

}  // namespace

nlohmann::json load_checkpoint(const std::filesystem::path& file,
                               const std::vector<Parameter*>& params) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw AutoadError(ErrorCode::MissingFile, file.string());
  }
  auto config = read_header(in, file);
  const uint64_t count = read_u64(in);
  if (count != params.size()) {
    throw AutoadError(ErrorCode::ConfigMismatch,
                      "checkpoint holds " + std::to_string(count) +
                          " tensors, model expects " + std::to_string(params.size()));
  }
  for (auto* p : params) {
    const uint64_t name_len = read_u64(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    const auto rows = static_cast<Eigen::Index>(read_u64(in));
    const auto cols = static_cast<Eigen::Index>(read_u64(in));
    if (name != p->name || rows != p->value.rows() || cols != p->value.cols()) {
      throw AutoadError(ErrorCode::ConfigMismatch,
                        "checkpoint tensor '" + name + "' does not match model '" +
                            p->name + "'");
    }
    in.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(sizeof(double) * p->value.size()));
    if (!in) {
      throw AutoadError(ErrorCode::MalformedFixture, "truncated checkpoint payload");
    }
  }
  return config;
}

nlohmann::json peek_checkpoint_config(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw AutoadError(ErrorCode::MissingFile, file.string());
  }
  return read_header(in, file);
}

}  // namespace autoad::nn
