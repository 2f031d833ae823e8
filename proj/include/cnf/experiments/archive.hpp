#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cnf/fragmentation.hpp"
#include "cnf/neural_form.hpp"

namespace cnf::experiments {

/// Weight archive layout:
///
///   bytes 0..7    magic "CNFW\0\0\0\1"
///   bytes 8..15   header length L, unsigned 64-bit little endian
///   next L bytes  UTF-8 JSON header
///   remainder     IEEE-754 binary64 values, little endian
///
/// Weight blocks follow subdomain-major, then component, then network k,
/// each block in the flat network order [nu.., eta.., rho.., gamma].
/// Handoff values, anchors and final costs travel in the JSON header.
inline constexpr std::string_view kArchiveMagic{"CNFW\0\0\0\1", 8};

/// Whole-solution archive. `problem` is recorded for later re-evaluation.
void save_weights(const FragmentedSolution& sol, const std::string& problem,
                  const std::string& path);

struct LoadedSolution {
  FragmentedSolution solution;
  std::string problem;
};

/// Throws ParseError (with byte offset) on malformed bytes, SchemaError when
/// the header disagrees with the payload, IoError when the file is unreadable.
LoadedSolution load_weights(const std::string& path);

/// A bare weight matrix (one neural form, one component).
void save_weights(const WeightMatrix& P, const std::string& path);
WeightMatrix load_weight_matrix(const std::string& path);

/// In-memory encoders used by the file functions.
std::string encode_solution(const FragmentedSolution& sol, const std::string& problem);
LoadedSolution decode_solution(std::string_view bytes);
std::string encode_matrix(const WeightMatrix& P);
WeightMatrix decode_matrix(std::string_view bytes);

}  // namespace cnf::experiments
