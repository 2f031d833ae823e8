#include "cnf/experiments/archive.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "cnf/errors.hpp"

namespace cnf::experiments {

namespace {

using nlohmann::json;

constexpr std::size_t kPrefix = 16;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(std::string_view bytes, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  }
  return v;
}

void put_block(std::string& out, std::span<const double> xs) {
  for (double x : xs) put_u64(out, std::bit_cast<std::uint64_t>(x));
}

// JSON cannot hold non-finite numbers; they are written as strings.
json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double read_number(const json& j, const std::string& what) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw SchemaError("archive header: '" + what + "' must be a number");
}

json state_json(const State& s) {
  json a = json::array();
  for (double x : s) a.push_back(number(x));
  return a;
}

State read_state(const json& j, std::size_t dim, const std::string& what) {
  if (!j.is_array()) throw SchemaError("archive header: '" + what + "' must be an array");
  if (j.size() != dim) {
    throw SchemaError("archive header: '" + what + "' has " + std::to_string(j.size()) +
                      " entries, declared d = " + std::to_string(dim));
  }
  State out;
  for (const auto& x : j) out.push_back(read_number(x, what));
  return out;
}

template <class T>
T field(const json& h, const char* key) {
  if (!h.contains(key)) throw SchemaError(std::string("archive header: missing '") + key + "'");
  try {
    return h.at(key).get<T>();
  } catch (const json::exception&) {
    throw SchemaError(std::string("archive header: '") + key + "' has the wrong type");
  }
}

std::size_t positive(const json& h, const char* key) {
  const auto v = field<std::int64_t>(h, key);
  if (v < 1) throw SchemaError(std::string("archive header: '") + key + "' must be positive");
  return static_cast<std::size_t>(v);
}

std::string encode(const json& header, const std::string& payload) {
  const std::string text = header.dump();
  std::string out(kArchiveMagic);
  put_u64(out, text.size());
  out += text;
  out += payload;
  return out;
}

struct Decoded {
  json header;
  std::string_view payload;
  std::size_t payload_offset = 0;
};

Decoded decode(std::string_view bytes) {
  if (bytes.size() < kArchiveMagic.size()) throw ParseError("truncated archive magic", bytes.size());
  if (bytes.substr(0, kArchiveMagic.size()) != kArchiveMagic) {
    throw ParseError("not a weight archive (bad magic)", 0);
  }
  if (bytes.size() < kPrefix) throw ParseError("truncated header length", bytes.size());
  const std::uint64_t len = get_u64(bytes, 8);
  if (len > bytes.size() - kPrefix) throw ParseError("truncated JSON header", bytes.size());
  Decoded d;
  try {
    d.header = json::parse(bytes.substr(kPrefix, len));
  } catch (const json::parse_error& e) {
    const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
    throw ParseError(std::string("malformed JSON header: ") + e.what(), kPrefix + at);
  }
  if (!d.header.is_object()) throw SchemaError("archive header must be a JSON object");
  d.payload_offset = kPrefix + len;
  d.payload = bytes.substr(d.payload_offset);
  return d;
}

// Checks the payload holds exactly `count` doubles.
void check_payload(const Decoded& d, std::size_t count) {
  const std::size_t want = count * 8;
  if (d.payload.size() < want) {
    throw ParseError("truncated weight payload (expected " + std::to_string(count) + " values)",
                     d.payload_offset + d.payload.size());
  }
  if (d.payload.size() > want) {
    throw SchemaError("weight payload holds " + std::to_string(d.payload.size()) +
                      " bytes, declared shape needs " + std::to_string(want));
  }
}

void read_block(const Decoded& d, std::size_t& cursor, std::span<double> out) {
  for (double& x : out) {
    x = std::bit_cast<double>(get_u64(d.payload, cursor));
    cursor += 8;
  }
}

void write_file(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("cannot move archive into place at '" + path + "': " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string encode_solution(const FragmentedSolution& sol, const std::string& problem) {
  json h;
  h["kind"] = "solution";
  h["problem"] = problem;
  h["variant"] = to_string(sol.variant);
  h["d"] = sol.dim;
  h["h"] = sol.frag.subdomain_count();
  h["trained"] = sol.subdomains.size();
  h["m"] = sol.order;
  h["H"] = sol.hidden;
  h["n"] = sol.frag.points_per_interval();
  h["t0"] = number(sol.frag.t0());
  h["t_end"] = number(sol.frag.t_end());
  h["initial"] = state_json(sol.initial);
  json anchors = json::array(), handoffs = json::array(), costs = json::array();
  for (std::size_t l = 0; l < sol.subdomains.size(); ++l) {
    anchors.push_back(state_json(sol.anchor(l)));
    handoffs.push_back(state_json(sol.subdomains[l].handoff));
    costs.push_back(number(sol.subdomains[l].final_cost));
  }
  h["anchors"] = anchors;
  h["handoffs"] = handoffs;
  h["final_costs"] = costs;
  h["failed_at"] = sol.failed_at ? json(*sol.failed_at) : json(nullptr);
  h["failure"] = sol.failure;

  std::string payload;
  for (const auto& sub : sol.subdomains) {
    if (sub.Ps.size() != sol.dim) throw ConfigError("subdomain component count differs from d");
    for (const auto& P : sub.Ps) {
      if (P.order() != sol.order || P.hidden() != sol.hidden) {
        throw ConfigError("weight matrix shape differs from the declared (m, H)");
      }
      for (const auto& net : P.networks) put_block(payload, net.flat());
    }
  }
  return encode(h, payload);
}

LoadedSolution decode_solution(std::string_view bytes) {
  const Decoded d = decode(bytes);
  const json& h = d.header;
  if (field<std::string>(h, "kind") != "solution") throw SchemaError("archive does not hold a solution");

  LoadedSolution out;
  FragmentedSolution& s = out.solution;
  out.problem = field<std::string>(h, "problem");
  try {
    s.variant = parse_variant(field<std::string>(h, "variant"));
  } catch (const ConfigError& e) {
    throw SchemaError(std::string("archive header: ") + e.what());
  }
  s.dim = positive(h, "d");
  s.order = positive(h, "m");
  s.hidden = positive(h, "H");
  const std::size_t sub_count = positive(h, "h");
  const std::size_t n = positive(h, "n");
  const auto trained = field<std::int64_t>(h, "trained");
  if (trained < 0 || static_cast<std::size_t>(trained) > sub_count) {
    throw SchemaError("archive header: 'trained' must lie in [0, h]");
  }
  if (!h.contains("t0") || !h.contains("t_end")) throw SchemaError("archive header: missing domain");
  const double t0 = read_number(h["t0"], "t0");
  const double t_end = read_number(h["t_end"], "t_end");
  try {
    s.frag = Fragmentation(t0, t_end, sub_count, n);
  } catch (const ConfigError& e) {
    throw SchemaError(std::string("archive header: ") + e.what());
  }
  if (!h.contains("initial")) throw SchemaError("archive header: missing 'initial'");
  s.initial = read_state(h["initial"], s.dim, "initial");

  const auto k = static_cast<std::size_t>(trained);
  for (const char* key : {"anchors", "handoffs", "final_costs"}) {
    if (!h.contains(key) || !h[key].is_array() || h[key].size() != k) {
      throw SchemaError(std::string("archive header: '") + key + "' must list every trained subdomain");
    }
  }
  if (h.contains("failed_at") && !h["failed_at"].is_null()) {
    s.failed_at = field<std::size_t>(h, "failed_at");
  }
  if (h.contains("failure")) s.failure = field<std::string>(h, "failure");

  const std::size_t block = NetworkWeights::size_for(s.hidden);
  check_payload(d, k * s.dim * s.order * block);

  std::size_t cursor = 0;
  s.subdomains.resize(k);
  for (std::size_t l = 0; l < k; ++l) {
    auto& sub = s.subdomains[l];
    sub.handoff = read_state(h["handoffs"][l], s.dim, "handoffs");
    sub.final_cost = read_number(h["final_costs"][l], "final_costs");
    for (std::size_t c = 0; c < s.dim; ++c) {
      std::vector<NetworkWeights> nets;
      for (std::size_t net = 0; net < s.order; ++net) {
        NetworkWeights w(s.hidden);
        read_block(d, cursor, w.flat());
        nets.push_back(std::move(w));
      }
      sub.Ps.emplace_back(std::move(nets));
    }
  }
  // Stored anchors are redundant with initial and handoffs; they must agree.
  for (std::size_t l = 0; l < k; ++l) {
    const State a = read_state(h["anchors"][l], s.dim, "anchors");
    const State& want = s.anchor(l);
    for (std::size_t c = 0; c < s.dim; ++c) {
      if (std::bit_cast<std::uint64_t>(a[c]) != std::bit_cast<std::uint64_t>(want[c])) {
        throw SchemaError("archive header: anchor of subdomain " + std::to_string(l) +
                          " disagrees with the stored handoff");
      }
    }
  }
  return out;
}

std::string encode_matrix(const WeightMatrix& P) {
  json h;
  h["kind"] = "matrix";
  h["m"] = P.order();
  h["H"] = P.hidden();
  std::string payload;
  for (const auto& net : P.networks) put_block(payload, net.flat());
  return encode(h, payload);
}

WeightMatrix decode_matrix(std::string_view bytes) {
  const Decoded d = decode(bytes);
  if (field<std::string>(d.header, "kind") != "matrix") {
    throw SchemaError("archive does not hold a weight matrix");
  }
  const std::size_t m = positive(d.header, "m");
  const std::size_t hidden = positive(d.header, "H");
  check_payload(d, m * NetworkWeights::size_for(hidden));
  std::size_t cursor = 0;
  std::vector<NetworkWeights> nets;
  for (std::size_t k = 0; k < m; ++k) {
    NetworkWeights w(hidden);
    read_block(d, cursor, w.flat());
    nets.push_back(std::move(w));
  }
  return WeightMatrix(std::move(nets));
}

void save_weights(const FragmentedSolution& sol, const std::string& problem, const std::string& path) {
  write_file(path, encode_solution(sol, problem));
}

LoadedSolution load_weights(const std::string& path) { return decode_solution(read_file(path)); }

void save_weights(const WeightMatrix& P, const std::string& path) {
  write_file(path, encode_matrix(P));
}

WeightMatrix load_weight_matrix(const std::string& path) { return decode_matrix(read_file(path)); }

}  // namespace cnf::experiments
