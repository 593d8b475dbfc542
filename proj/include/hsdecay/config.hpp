#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"

#include "hsdecay/error.hpp"

#ifndef HSDECAY_VERSION
#define HSDECAY_VERSION "0.0.0"
#endif

namespace hsdecay {

using json = nlohmann::json;

inline std::string sha256_hex(std::string const& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    fail(error_kind::solver, "SHA-256 computation failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return out.str();
}

// Object keys sorted (nlohmann::json default), doubles in shortest
// round-trip form: one byte string per value.
inline std::string canonical_dump(json const& j) { return j.dump(); }

inline std::string format_real(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

struct run_config {
  std::string command;
  json params = json::object();
  std::uint64_t seed = 0;
  std::optional<std::string> output;
  json tolerances = json::object();

  // Everything that can change results; the output location does not.
  json resolved() const {
    return json{{"command", command}, {"params", params}, {"seed", seed}, {"tolerances", tolerances}};
  }
  std::string hash() const { return sha256_hex(canonical_dump(resolved())); }
};

inline std::vector<std::string> const& tolerance_keys() {
  static std::vector<std::string> const keys{"resolution", "certificate"};
  return keys;
}

// {"command": "...", "params": {...}, "seed": n, "output": "dir", "tolerances": {...}}
inline run_config parse_run_config(json const& doc) {
  if (!doc.is_object()) fail(error_kind::schema, "run config must be a JSON object");
  for (auto const& [key, _] : doc.items())
    if (key != "command" && key != "params" && key != "seed" && key != "output" && key != "tolerances")
      fail(error_kind::schema, "unknown key '" + key + "' in run config");
  run_config cfg;
  if (!doc.contains("command") || !doc["command"].is_string()) fail(error_kind::schema, "run config needs a 'command' string");
  cfg.command = doc["command"].get<std::string>();
  if (doc.contains("params")) {
    if (!doc["params"].is_object()) fail(error_kind::schema, "'params' must be an object");
    cfg.params = doc["params"];
  }
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned() && !(doc["seed"].is_number_integer() && doc["seed"].get<long long>() >= 0))
      fail(error_kind::schema, "'seed' must be a nonnegative integer");
    cfg.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("output")) {
    if (!doc["output"].is_string()) fail(error_kind::schema, "'output' must be a string");
    cfg.output = doc["output"].get<std::string>();
  }
  if (doc.contains("tolerances")) {
    if (!doc["tolerances"].is_object()) fail(error_kind::schema, "'tolerances' must be an object");
    for (auto const& [key, v] : doc["tolerances"].items()) {
      bool known = false;
      for (auto const& k : tolerance_keys()) known = known || k == key;
      if (!known) fail(error_kind::schema, "unknown tolerance '" + key + "'");
      if (!v.is_number() || !(v.get<double>() > 0.0)) fail(error_kind::schema, "tolerance '" + key + "' must be a positive number");
    }
    cfg.tolerances = doc["tolerances"];
  }
  return cfg;
}

inline run_config load_run_config(std::string const& path) {
  std::ifstream in(path);
  if (!in) fail(error_kind::io, "cannot open config file '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (json::exception const& e) {
    fail(error_kind::schema, "config file '" + path + "': " + e.what());
  }
  return parse_run_config(doc);
}

struct run_manifest {
  std::string tool = "hsdecay";
  std::string version = HSDECAY_VERSION;
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  json cases = json::array();             // per-case verdicts in case order
  std::map<std::string, std::string> files;  // output name -> SHA-256 of its content
  int exit_code = 0;
  double wall_clock_seconds = 0.0;

  // Hash over everything except wall-clock time.
  json reproducible() const {
    return json{{"tool", tool},       {"version", version}, {"command", command},     {"config_hash", config_hash},
                {"seed", seed},       {"cases", cases},     {"files", files},         {"exit_code", exit_code}};
  }
  std::string hash() const { return sha256_hex(canonical_dump(reproducible())); }

  json to_json() const {
    json j = reproducible();
    j["manifest_hash"] = hash();
    j["wall_clock_seconds"] = wall_clock_seconds;
    return j;
  }
};

}  // namespace hsdecay
