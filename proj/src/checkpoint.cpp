#include "treeattn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <utility>

#include "json.hpp"
#include "treeattn/errors.hpp"

namespace treeattn {

namespace {

constexpr char kMagic[8] = {'T', 'A', 'T', 'N', 'C', 'K', 'P', '1'};

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f64_le(std::string& out, double d) {
  put_u64_le(out, std::bit_cast<std::uint64_t>(d));
}

double get_f64_le(const unsigned char* p) {
  return std::bit_cast<double>(get_u64_le(p));
}

constexpr char kB64[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::string& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= bytes.size()) {
    const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                       (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                       static_cast<unsigned char>(bytes[i + 2]);
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(kB64[(v >> 6) & 63]);
    out.push_back(kB64[v & 63]);
    i += 3;
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back('=');
    out.push_back('=');
  } else if (rest == 2) {
    const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                       (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(kB64[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

std::string base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) {
    throw FormatError("base64 payload length is not a multiple of 4");
  }
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=') {
        // Padding may only close the final quartet.
        if (i + 4 != text.size() || k < 2) {
          throw FormatError("misplaced base64 padding");
        }
        vals[k] = 0;
        ++pad;
      } else {
        if (pad > 0) throw FormatError("base64 data after padding");
        vals[k] = b64_value(c);
        if (vals[k] < 0) {
          throw FormatError(std::string("invalid base64 character '") + c +
                            "'");
        }
      }
    }
    const unsigned v = (static_cast<unsigned>(vals[0]) << 18) |
                       (static_cast<unsigned>(vals[1]) << 12) |
                       (static_cast<unsigned>(vals[2]) << 6) |
                       static_cast<unsigned>(vals[3]);
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    if (pad < 2) out.push_back(static_cast<char>((v >> 8) & 0xFF));
    if (pad < 1) out.push_back(static_cast<char>(v & 0xFF));
  }
  return out;
}

std::string tensor_bytes_le(const Tensor& t) {
  std::string out;
  out.reserve(t.size() * 8);
  const double* d = t.data();
  for (std::size_t i = 0; i < t.size(); ++i) put_f64_le(out, d[i]);
  return out;
}

Tensor tensor_from_bytes_le(const std::string& bytes, int rows, int cols) {
  const std::size_t want = static_cast<std::size_t>(rows) * cols * 8;
  if (bytes.size() != want) {
    throw FormatError("tensor payload is " + std::to_string(bytes.size()) +
                      " bytes, expected " + std::to_string(want));
  }
  std::vector<double> v(static_cast<std::size_t>(rows) * cols);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = get_f64_le(p + i * 8);
  return Tensor(rows, cols, std::move(v));
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path + "'");
}

std::pair<int, int> tensor_dims(const nlohmann::json& jt) {
  if (!jt.contains("rows") || !jt.contains("cols") ||
      !jt["rows"].is_number_integer() || !jt["cols"].is_number_integer()) {
    throw FormatError("tensor entry needs integer rows/cols");
  }
  const int rows = jt["rows"].get<int>();
  const int cols = jt["cols"].get<int>();
  if (rows < 1 || cols < 1) throw FormatError("tensor dims must be >= 1");
  return {rows, cols};
}

std::vector<std::string> vocab_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw FormatError("vocab must be an array of words");
  std::vector<std::string> words;
  words.reserve(j.size());
  for (const auto& w : j) {
    if (!w.is_string()) throw FormatError("vocab entries must be strings");
    words.push_back(w.get<std::string>());
  }
  return words;
}

Checkpoint read_binary(const std::string& blob) {
  // magic(8) + header_len(8) + header + payload
  if (blob.size() < 16) throw FormatError("checkpoint file truncated");
  const std::uint64_t header_len =
      get_u64_le(reinterpret_cast<const unsigned char*>(blob.data()) + 8);
  if (16 + header_len > blob.size()) {
    throw FormatError("checkpoint header runs past end of file");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(16, header_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  if (!header.contains("config") || !header.contains("vocab") ||
      !header.contains("tensors")) {
    throw FormatError("checkpoint header needs config, vocab and tensors");
  }

  Checkpoint cp;
  cp.config = config_from_json_text(header["config"].dump());
  cp.vocab_words = vocab_from_json(header["vocab"]);

  const std::string payload = blob.substr(16 + header_len);
  if (payload.size() % 8 != 0) {
    throw FormatError("checkpoint payload is not a whole number of float64s");
  }
  const std::uint64_t total = payload.size() / 8;
  for (const auto& jt : header["tensors"]) {
    if (!jt.contains("name") || !jt["name"].is_string()) {
      throw FormatError("tensor entry needs a name");
    }
    const std::string name = jt["name"].get<std::string>();
    const auto [rows, cols] = tensor_dims(jt);
    if (!jt.contains("offset") || !jt["offset"].is_number_unsigned()) {
      throw FormatError("tensor '" + name + "' needs an unsigned offset");
    }
    const std::uint64_t offset = jt["offset"].get<std::uint64_t>();
    const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
    if (offset + count > total) {
      throw FormatError("tensor '" + name + "' runs past the payload");
    }
    std::vector<double> v(count);
    const unsigned char* p =
        reinterpret_cast<const unsigned char*>(payload.data()) + offset * 8;
    for (std::size_t i = 0; i < count; ++i) v[i] = get_f64_le(p + i * 8);
    if (!cp.tensors.emplace(name, Tensor(rows, cols, std::move(v))).second) {
      throw FormatError("duplicate tensor '" + name + "'");
    }
  }
  return cp;
}

Checkpoint read_json(const std::string& blob) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(blob);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("config") || !j.contains("vocab") ||
      !j.contains("tensors")) {
    throw FormatError("checkpoint JSON needs config, vocab and tensors");
  }
  Checkpoint cp;
  cp.config = config_from_json_text(j["config"].dump());
  cp.vocab_words = vocab_from_json(j["vocab"]);
  for (const auto& jt : j["tensors"]) {
    if (!jt.contains("name") || !jt["name"].is_string()) {
      throw FormatError("tensor entry needs a name");
    }
    const std::string name = jt["name"].get<std::string>();
    const auto [rows, cols] = tensor_dims(jt);
    if (!jt.contains("data") || !jt["data"].is_string()) {
      throw FormatError("tensor '" + name + "' needs base64 data");
    }
    Tensor t = tensor_from_bytes_le(base64_decode(jt["data"].get<std::string>()),
                                    rows, cols);
    if (!cp.tensors.emplace(name, std::move(t)).second) {
      throw FormatError("duplicate tensor '" + name + "'");
    }
  }
  return cp;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model,
                     CheckpointFormat format) {
  nlohmann::json config = nlohmann::json::parse(config_to_json_text(model.config()));
  nlohmann::json vocab = nlohmann::json::array();
  for (const std::string& w : model.vocab().words()) vocab.push_back(w);

  if (format == CheckpointFormat::json) {
    nlohmann::json j;
    j["format"] = "treeattn-checkpoint";
    j["version"] = 1;
    j["config"] = std::move(config);
    j["vocab"] = std::move(vocab);
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, entry] : model.store().entries()) {
      nlohmann::json jt;
      jt["name"] = name;
      jt["rows"] = entry.value.rows();
      jt["cols"] = entry.value.cols();
      jt["data"] = base64_encode(tensor_bytes_le(entry.value));
      tensors.push_back(std::move(jt));
    }
    j["tensors"] = std::move(tensors);
    write_file(path, j.dump(2) + "\n");
    return;
  }

  nlohmann::json tensors = nlohmann::json::array();
  std::string payload;
  std::uint64_t offset = 0;  // in float64 elements
  for (const auto& [name, entry] : model.store().entries()) {
    nlohmann::json jt;
    jt["name"] = name;
    jt["rows"] = entry.value.rows();
    jt["cols"] = entry.value.cols();
    jt["offset"] = offset;
    tensors.push_back(std::move(jt));
    payload += tensor_bytes_le(entry.value);
    offset += entry.value.size();
  }
  nlohmann::json header;
  header["config"] = std::move(config);
  header["vocab"] = std::move(vocab);
  header["tensors"] = std::move(tensors);
  const std::string header_text = header.dump();

  std::string blob(kMagic, sizeof(kMagic));
  put_u64_le(blob, header_text.size());
  blob += header_text;
  blob += payload;
  write_file(path, blob);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string blob((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (blob.size() >= 8 && std::memcmp(blob.data(), kMagic, 8) == 0) {
    return read_binary(blob);
  }
  const std::size_t first = blob.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && blob[first] == '{') return read_json(blob);
  throw FormatError("'" + path + "' is neither a binary nor a JSON checkpoint");
}

Model model_from_checkpoint(const Checkpoint& cp) {
  Model model(cp.config, Vocabulary::from_words(cp.vocab_words));
  ParamStore& store = model.store();
  for (auto& [name, entry] : store.entries()) {
    auto it = cp.tensors.find(name);
    if (it == cp.tensors.end()) {
      throw ConsistencyError("checkpoint is missing tensor '" + name + "'");
    }
    if (it->second.rows() != entry.value.rows() ||
        it->second.cols() != entry.value.cols()) {
      throw ConsistencyError("tensor '" + name + "' is " +
                             std::to_string(it->second.rows()) + "x" +
                             std::to_string(it->second.cols()) +
                             " but the config implies " +
                             std::to_string(entry.value.rows()) + "x" +
                             std::to_string(entry.value.cols()));
    }
    entry.value = it->second.clone();
  }
  for (const auto& [name, t] : cp.tensors) {
    if (!store.has(name)) {
      throw ConsistencyError("checkpoint tensor '" + name +
                             "' has no slot in this configuration");
    }
  }
  return model;
}

}  // namespace treeattn
