#pragma once

#include <stdexcept>
#include <string>

#include "stackmf/game.hpp"

namespace stackmf {

/// Thrown on malformed or invalid game/grid files; the message names the
/// offending field or row.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Loads a game document (JSON: key/value with nested arrays). Probabilities
/// are decimal literals; any file failing validate_game is rejected with the
/// first violations in the message. File games are constant in the mean
/// field; mu-varying kernels are constructed programmatically.
GameSpec load_game(const std::string& path);
GameSpec parse_game(const std::string& text);

void save_game(const GameSpec& spec, const std::string& path);

void export_policy_csv(const Policy& p, const std::string& path);
Policy read_policy_csv(const std::string& path);

}  // namespace stackmf
