#include "rpulstm/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace rpulstm {

using nlohmann::json;

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

std::uint64_t get_u64(std::string_view in, std::size_t at) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) {
    v |= std::uint64_t{static_cast<unsigned char>(in[at + b])} << (8 * b);
  }
  return v;
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) {
    v |= std::uint32_t{static_cast<unsigned char>(in[at + b])} << (8 * b);
  }
  return v;
}

std::uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t at = 0; at < bytes.size(); at += kChunk) {
    const std::size_t len = std::min(kChunk, bytes.size() - at);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + at), static_cast<uInt>(len));
  }
  return static_cast<std::uint32_t>(crc);
}

struct ArrayRef {
  std::size_t tile;
  std::string name;
};

std::vector<ArrayRef> manifest_for(const LstmNetwork& net) {
  std::vector<ArrayRef> refs;
  for (std::size_t k = 0; k < net.tile_count(); ++k) {
    refs.push_back({k, "w"});
    if (net.tile(k).mode() == TileMode::analog) {
      for (const char* name : {"dw_plus", "dw_minus", "w_max", "w_min"}) refs.push_back({k, name});
    }
  }
  return refs;
}

const Matrix& array_of(const AnalogTile& tile, const std::string& name) {
  if (name == "w") return tile.weights();
  if (name == "dw_plus") return tile.devices().dw_plus;
  if (name == "dw_minus") return tile.devices().dw_minus;
  if (name == "w_max") return tile.devices().w_max;
  return tile.devices().w_min;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const LstmNetwork& net = ckpt.network;
  const LstmShape& shape = net.shape();

  json header;
  header["version"] = kCheckpointVersion;
  header["config"] = to_json(ckpt.config);
  json vocab = json::array();
  for (char32_t cp : ckpt.vocab) vocab.push_back(static_cast<std::uint32_t>(cp));
  header["vocab"] = vocab;
  header["shape"] = {{"n", shape.n}, {"m", shape.m}, {"depth", shape.depth}, {"vocab", shape.vocab}};
  json tiles = json::array();
  for (std::size_t k = 0; k < net.tile_count(); ++k) {
    const AnalogTile& tile = net.tile(k);
    json t{{"rows", tile.rows()},
           {"cols", tile.cols()},
           {"mode", tile.mode() == TileMode::analog ? "analog" : "fp"}};
    if (tile.mode() == TileMode::analog) {
      t["rpu"] = rpu_to_json(tile.config());
      t["rng"] = tile.rng().state();
    }
    tiles.push_back(t);
  }
  header["tiles"] = tiles;
  header["dropout_rng"] = net.dropout_rng().state();
  header["trainer"] = {{"epochs_done", ckpt.state.epochs_done},
                       {"windows_seen", ckpt.state.windows_seen},
                       {"wall_seconds", ckpt.state.wall_seconds}};
  const auto refs = manifest_for(net);
  json arrays = json::array();
  for (const ArrayRef& ref : refs) {
    const AnalogTile& tile = net.tile(ref.tile);
    arrays.push_back({{"tile", ref.tile}, {"name", ref.name}, {"rows", tile.rows()},
                      {"cols", tile.cols()}});
  }
  header["arrays"] = arrays;

  const std::string header_text = header.dump();
  std::string body;
  put_u64(body, header_text.size());
  body += header_text;
  for (const ArrayRef& ref : refs) {
    for (double v : array_of(net.tile(ref.tile), ref.name).data()) {
      put_u64(body, std::bit_cast<std::uint64_t>(v));
    }
  }

  std::string out(kCheckpointMagic);
  out += body;
  put_u32(out, crc_of(body));
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  const std::size_t magic_len = kCheckpointMagic.size();
  if (bytes.size() < magic_len + 8 + 4 || bytes.substr(0, magic_len) != kCheckpointMagic) {
    throw CheckpointError("checkpoint: bad magic bytes or truncated file");
  }
  const std::string_view body = bytes.substr(magic_len, bytes.size() - magic_len - 4);
  if (crc_of(body) != get_u32(bytes, bytes.size() - 4)) {
    throw CheckpointError("checkpoint: checksum mismatch (corrupt payload)");
  }
  const std::uint64_t header_len = get_u64(body, 0);
  if (header_len > body.size() - 8) throw CheckpointError("checkpoint: header length overflow");

  json header;
  try {
    header = json::parse(body.substr(8, header_len));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
  }

  try {
    const int version = header.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError("checkpoint: version " + std::to_string(version) +
                            " is not supported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    }

    Checkpoint ckpt;
    ckpt.config = parse_config(header.at("config"));
    for (const auto& cp : header.at("vocab")) {
      ckpt.vocab.push_back(static_cast<char32_t>(cp.get<std::uint32_t>()));
    }
    const json& s = header.at("shape");
    const LstmShape shape{s.at("n").get<std::size_t>(), s.at("m").get<std::size_t>(),
                          s.at("depth").get<std::size_t>(), s.at("vocab").get<std::size_t>()};
    if (!(shape == ckpt.config.shape(ckpt.vocab.size()))) {
      throw CheckpointError("checkpoint: stored shape does not match the stored config and vocab");
    }
    const auto expected = shape.tile_shapes();
    const json& tiles = header.at("tiles");
    if (tiles.size() != expected.size()) {
      throw CheckpointError("checkpoint: tile count does not match the config");
    }

    std::size_t offset = 8 + header_len;
    auto read_matrix = [&](std::size_t rows, std::size_t cols) {
      Matrix m(rows, cols);
      if (body.size() < offset || (body.size() - offset) / 8 < m.size()) {
        throw CheckpointError("checkpoint: payload shorter than the array manifest");
      }
      for (double& v : m.data()) {
        v = std::bit_cast<double>(get_u64(body, offset));
        offset += 8;
      }
      return m;
    };

    std::vector<AnalogTile> restored;
    for (std::size_t k = 0; k < tiles.size(); ++k) {
      const json& t = tiles[k];
      const std::size_t rows = t.at("rows").get<std::size_t>();
      const std::size_t cols = t.at("cols").get<std::size_t>();
      if (rows != expected[k].first || cols != expected[k].second) {
        throw CheckpointError("checkpoint: tile " + std::to_string(k) + " has shape " +
                              std::to_string(rows) + "x" + std::to_string(cols) +
                              ", config implies " + std::to_string(expected[k].first) + "x" +
                              std::to_string(expected[k].second));
      }
      Matrix w = read_matrix(rows, cols);
      if (t.at("mode").get<std::string>() == "analog") {
        RpuConfig rpu = parse_config(json{{"rpu", t.at("rpu")}}).rpu;
        DeviceArray dev;
        dev.rows = rows;
        dev.cols = cols;
        dev.dw_plus = read_matrix(rows, cols);
        dev.dw_minus = read_matrix(rows, cols);
        dev.w_max = read_matrix(rows, cols);
        dev.w_min = read_matrix(rows, cols);
        Rng rng;
        rng.set_state(t.at("rng").get<std::string>());
        // Weights were within bounds when saved, so clipping on restore is a no-op.
        restored.push_back(AnalogTile::make_analog(std::move(w), std::move(dev), rpu, rng));
      } else {
        restored.push_back(AnalogTile::make_fp(std::move(w)));
      }
    }
    if (offset != body.size()) throw CheckpointError("checkpoint: trailing bytes after arrays");

    Rng dropout;
    dropout.set_state(header.at("dropout_rng").get<std::string>());
    ckpt.network = LstmNetwork(shape, std::move(restored), dropout);
    const json& tr = header.at("trainer");
    ckpt.state.epochs_done = tr.at("epochs_done").get<int>();
    ckpt.state.windows_seen = tr.at("windows_seen").get<std::uint64_t>();
    ckpt.state.wall_seconds = tr.at("wall_seconds").get<double>();
    return ckpt;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: invalid content: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace rpulstm
