#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "cnf/errors.hpp"
#include "cnf/experiments/archive.hpp"
#include "cnf/oracle.hpp"
#include "test_support.hpp"

using namespace cnf;
using namespace cnf::experiments;
namespace fs = std::filesystem;

namespace {

FragmentedSolution trained(std::size_t h, Variant v = Variant::mTSM) {
  TrainingConfig cfg;
  cfg.epochs = 40;
  cfg.init = UniformInit{-0.5, 0.5, 2};
  return solve_scnf(oscillating_problem(), v, 2, 4, cfg, Fragmentation(0.0, 1.0, h, 4));
}

std::uint64_t header_length(const std::string& bytes) {
  std::uint64_t len = 0;
  for (int i = 7; i >= 0; --i) len = (len << 8) | static_cast<unsigned char>(bytes[8 + i]);
  return len;
}

// Applies `edit` to the JSON header text and rebuilds the length prefix.
std::string edit_header(const std::string& bytes, const std::string& from, const std::string& to) {
  const std::uint64_t len = header_length(bytes);
  std::string header = bytes.substr(16, len);
  const auto at = header.find(from);
  REQUIRE(at != std::string::npos);
  header.replace(at, from.size(), to);
  std::string out = bytes.substr(0, 8);
  std::uint64_t n = header.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xFF));
  return out + header + bytes.substr(16 + len);
}

std::size_t parse_offset(const std::string& bytes) {
  try {
    decode_solution(bytes);
  } catch (const ParseError& e) {
    return e.offset();
  }
  FAIL("expected ParseError");
  return 0;
}

}  // namespace

TEST_CASE("magic and layout") {
  const std::string bytes = encode_matrix(testing::random_matrix(2, 3));
  CHECK(bytes.substr(0, 8) == std::string("CNFW\0\0\0\1", 8));
  const std::uint64_t len = header_length(bytes);
  CHECK(bytes.size() == 16 + len + 2 * 10 * 8);
  CHECK(bytes[16] == '{');
}

TEST_CASE("weight matrix round trip is bitwise") {
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + static_cast<std::size_t>(trial % 5);
    WeightMatrix P = testing::random_matrix(m, 1 + static_cast<std::size_t>(trial % 7), -1e3, 1e3);
    if (trial == 0) {
      P.networks[0].flat()[0] = std::numeric_limits<double>::denorm_min();
      P.networks[0].flat()[1] = -0.0;
    }
    const WeightMatrix Q = decode_matrix(encode_matrix(P));
    REQUIRE(Q.order() == P.order());
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t i = 0; i < P.networks[k].size(); ++i) {
        const double a = P.networks[k].flat()[i], b = Q.networks[k].flat()[i];
        CHECK(std::memcmp(&a, &b, sizeof a) == 0);
      }
    }
  }
}

TEST_CASE("payload is little endian in flat order") {
  WeightMatrix P({NetworkWeights(1)});
  P.networks[0].flat()[3] = 1.0;
  const std::string bytes = encode_matrix(P);
  const std::string tail = bytes.substr(bytes.size() - 8);
  CHECK(tail == std::string("\0\0\0\0\0\0\xF0\x3F", 8));
}

TEST_CASE("solution round trip") {
  const auto sol = trained(3);
  REQUIRE(sol.complete());
  const auto loaded = decode_solution(encode_solution(sol, "oscillating"));
  const auto& s = loaded.solution;
  CHECK(loaded.problem == "oscillating");
  CHECK(s.variant == sol.variant);
  CHECK(s.order == 2);
  CHECK(s.hidden == 4);
  CHECK(s.frag.subdomain_count() == 3);
  CHECK(s.frag.points_per_interval() == 4);
  CHECK(s.initial == sol.initial);
  REQUIRE(s.subdomains.size() == 3);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(s.subdomains[l].Ps == sol.subdomains[l].Ps);
    CHECK(s.subdomains[l].handoff == sol.subdomains[l].handoff);
    CHECK(s.subdomains[l].final_cost == sol.subdomains[l].final_cost);
  }
  for (double t : {0.0, 0.1, 1.0 / 3.0, 0.77, 1.0}) CHECK(s.evaluate(t) == sol.evaluate(t));
}

TEST_CASE("errors recomputed from an archive are identical") {
  const auto sol = trained(4, Variant::TSM);
  const fs::path path = fs::temp_directory_path() / "cnf_archive_test.cnfw";
  save_weights(sol, "oscillating", path.string());
  const auto loaded = load_weights(path.string());
  const IvpSystem p = problem_by_name(loaded.problem);
  const auto a = delta_u_fragmented(sol, p);
  const auto b = delta_u_fragmented(loaded.solution, p);
  CHECK(a.delta_u == b.delta_u);
  CHECK(a.delta_u_l == b.delta_u_l);
  CHECK(a.interface_linf == b.interface_linf);
  CHECK_FALSE(fs::exists(path.string() + ".tmp"));
  fs::remove(path);
}

TEST_CASE("partial solutions keep their failure") {
  auto sol = trained(3);
  sol.subdomains.pop_back();
  sol.failed_at = 2;
  sol.failure = "non-finite gradient";
  sol.subdomains[1].final_cost = std::numeric_limits<double>::infinity();
  const auto s = decode_solution(encode_solution(sol, "oscillating")).solution;
  CHECK(s.failed_at == std::optional<std::size_t>(2));
  CHECK(s.failure == "non-finite gradient");
  CHECK(s.subdomains.size() == 2);
  CHECK(std::isinf(s.subdomains[1].final_cost));
}

TEST_CASE("truncation reports the byte where reading stopped") {
  const std::string bytes = encode_solution(trained(2), "oscillating");
  const std::size_t len = header_length(bytes);
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{8}, std::size_t{12}, std::size_t{16},
                          16 + len / 2, 16 + len, 16 + len + 3, bytes.size() - 1}) {
    INFO(cut);
    CHECK(parse_offset(bytes.substr(0, cut)) == cut);
  }
}

TEST_CASE("malformed inputs") {
  const std::string bytes = encode_solution(trained(2), "oscillating");
  SUBCASE("bad magic") {
    std::string b = bytes;
    b[0] = 'X';
    CHECK(parse_offset(b) == 0);
  }
  SUBCASE("broken JSON points into the header") {
    const std::string b = edit_header(bytes, "\"kind\":", "\"kind\";");
    const std::size_t off = parse_offset(b);
    CHECK(off >= 16);
    CHECK(off < 16 + header_length(b));
    CHECK(b[off] == ';');
  }
  SUBCASE("header that is not an object") {
    std::string b = bytes.substr(0, 8);
    b += std::string("\x02\0\0\0\0\0\0\0", 8);
    b += "[]";
    CHECK_THROWS_AS(decode_solution(b), SchemaError);
  }
  SUBCASE("declared shape smaller than the payload") {
    CHECK_THROWS_AS(decode_solution(edit_header(bytes, "\"H\":4", "\"H\":3")), SchemaError);
  }
  SUBCASE("missing field") {
    CHECK_THROWS_AS(decode_solution(edit_header(bytes, "\"variant\"", "\"flavour\"")), SchemaError);
  }
  SUBCASE("unknown variant") {
    CHECK_THROWS_AS(decode_solution(edit_header(bytes, "\"mTSM\"", "\"QTSM\"")), SchemaError);
  }
  SUBCASE("matrix archive read as a solution") {
    CHECK_THROWS_AS(decode_solution(encode_matrix(testing::random_matrix(1, 2))), SchemaError);
    CHECK_THROWS_AS(decode_matrix(bytes), SchemaError);
  }
  SUBCASE("anchor disagreeing with the previous handoff") {
    auto sol = trained(2);
    std::string b = encode_solution(sol, "oscillating");
    const std::uint64_t len = header_length(b);
    const std::string header = b.substr(16, len);
    const auto at = header.find("\"anchors\":[[");
    REQUIRE(at != std::string::npos);
    const auto second = header.find("],[", at) + 3;
    const auto stop = header.find(']', second);
    b = edit_header(b, header.substr(at, stop - at), header.substr(at, second - at) + "12345.0");
    CHECK_THROWS_AS(decode_solution(b), SchemaError);
  }
  SUBCASE("unreadable file") {
    CHECK_THROWS_AS(load_weights("/nonexistent/dir/w.cnfw"), IoError);
  }
}

TEST_CASE("random corruption never crashes") {
  const std::string bytes = encode_solution(trained(2), "oscillating");
  std::mt19937_64 gen(5);
  for (int i = 0; i < 500; ++i) {
    std::string b = bytes;
    const int flips = 1 + static_cast<int>(gen() % 4);
    for (int f = 0; f < flips; ++f) b[gen() % b.size()] = static_cast<char>(gen());
    try {
      decode_solution(b);
    } catch (const ParseError&) {
    } catch (const SchemaError&) {
    } catch (...) {
      FAIL("unexpected exception type");
    }
  }
}
