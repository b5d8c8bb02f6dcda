/*
 * Copyright 2026 The ranklab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "ranklab/common.hpp"
#include "ranklab/data.hpp"
#include "ranklab/encoder.hpp"
#include "ranklab/paradigms.hpp"
#include "ranklab/training.hpp"

namespace ranklab {

/// The flat key=value run configuration. Parse order: defaults, then config
/// file, then flag overrides; unknown keys are rejected. The effective
/// settings round-trip through to_text()/parse() and are emitted as a
/// resolved-config file next to every run's outputs.
struct RunConfig {
  // model
  int layers = 2;
  int heads = 4;
  int model_dim = 64;
  int ff_dim = 256;
  int max_len = 512;
  double dropout = 0.0;
  std::string aggregation = "avg";
  bool include_special_in_avg = true;
  // paradigm
  std::string paradigm = "uni";
  std::string scheme = "repeated";
  bool context_sees_candidates = true;
  int poly_codes = 4;
  // optimization
  double peak_lr = 2e-4;
  int warmup_steps = 1000;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double weight_decay = 0.01;
  double adam_eps = 1e-8;
  int batch_size = 8;
  int epochs = 10;
  int max_steps = 0;
  double mlm_rate = 0.15;
  double mlm_weight = 1.0;
  int patience = 3;
  // data / io
  std::string train_data;
  std::string valid_data;
  std::string test_data;
  std::string vocab_file;
  std::string out_dir = "runs/default";
  std::uint64_t seed = 42;

  EncoderConfig encoder_config(int vocab_size) const {
    EncoderConfig cfg;
    cfg.layers = layers;
    cfg.heads = heads;
    cfg.model_dim = model_dim;
    cfg.ff_dim = ff_dim;
    cfg.max_len = max_len;
    cfg.vocab_size = vocab_size;
    cfg.dropout = dropout;
    cfg.aggregation = aggregation_from_string(aggregation);
    cfg.average_includes_special = include_special_in_avg;
    return cfg;
  }

  OptimConfig optim_config() const {
    OptimConfig cfg;
    cfg.beta1 = beta1;
    cfg.beta2 = beta2;
    cfg.weight_decay = weight_decay;
    cfg.peak_lr = peak_lr;
    cfg.eps = adam_eps;
    cfg.warmup_steps = warmup_steps;
    return cfg;
  }

  TrainConfig train_config() const {
    TrainConfig cfg;
    cfg.paradigm = paradigm_from_string(paradigm);
    cfg.scheme = position_scheme_from_string(scheme);
    cfg.batch_size = batch_size;
    cfg.epochs = epochs;
    cfg.max_steps = max_steps;
    cfg.mlm_rate = mlm_rate;
    cfg.mlm_weight = mlm_weight;
    cfg.patience = patience;
    cfg.poly_codes = poly_codes;
    cfg.context_sees_candidates = context_sees_candidates;
    cfg.seed = seed;
    cfg.max_len = static_cast<std::size_t>(max_len);
    cfg.out_dir = out_dir;
    return cfg;
  }

  void validate() const {
    paradigm_from_string(paradigm);
    position_scheme_from_string(scheme);
    aggregation_from_string(aggregation);
    check_config(batch_size >= 2, "config: batch_size must be >= 2");
    check_config(poly_codes >= 1, "config: poly_codes must be >= 1");
    check_config(mlm_rate >= 0.0 && mlm_rate < 1.0, "config: bad mlm_rate");
    check_config(patience >= 1, "config: patience must be >= 1");
  }

  void set(const std::string& key, const std::string& value);
  std::string to_text() const;

  static RunConfig from_file(const std::string& path) {
    std::ifstream is(path);
    check_config(is.good(), "config: cannot open ", path);
    RunConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      // trim
      const auto b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos) continue;
      const auto e = line.find_last_not_of(" \t\r");
      line = line.substr(b, e - b + 1);
      const auto eq = line.find('=');
      check_config(eq != std::string::npos, "config: ", path, ":", lineno,
                   ": expected key=value, got '", line, "'");
      auto strip = [](std::string s) {
        const auto sb = s.find_first_not_of(" \t");
        if (sb == std::string::npos) return std::string();
        const auto se = s.find_last_not_of(" \t");
        return s.substr(sb, se - sb + 1);
      };
      cfg.set(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    }
    return cfg;
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    check_config(os.good(), "config: cannot write ", path);
    os << to_text();
  }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: key '" + key + "' expects true|false, got '" +
                    v + "'");
}

template <typename T>
T parse_num(const std::string& v, const std::string& key) {
  std::istringstream ss(v);
  T out;
  ss >> out;
  if (ss.fail() || !ss.eof())
    throw ConfigError("config: key '" + key + "' has malformed value '" + v +
                      "'");
  return out;
}

} // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_num;
  if (key == "layers") layers = parse_num<int>(value, key);
  else if (key == "heads") heads = parse_num<int>(value, key);
  else if (key == "model_dim") model_dim = parse_num<int>(value, key);
  else if (key == "ff_dim") ff_dim = parse_num<int>(value, key);
  else if (key == "max_len") max_len = parse_num<int>(value, key);
  else if (key == "dropout") dropout = parse_num<double>(value, key);
  else if (key == "aggregation") aggregation = value;
  else if (key == "include_special_in_avg")
    include_special_in_avg = parse_bool(value, key);
  else if (key == "paradigm") paradigm = value;
  else if (key == "scheme") scheme = value;
  else if (key == "context_sees_candidates")
    context_sees_candidates = parse_bool(value, key);
  else if (key == "poly_codes") poly_codes = parse_num<int>(value, key);
  else if (key == "peak_lr") peak_lr = parse_num<double>(value, key);
  else if (key == "warmup_steps") warmup_steps = parse_num<int>(value, key);
  else if (key == "beta1") beta1 = parse_num<double>(value, key);
  else if (key == "beta2") beta2 = parse_num<double>(value, key);
  else if (key == "weight_decay") weight_decay = parse_num<double>(value, key);
  else if (key == "adam_eps") adam_eps = parse_num<double>(value, key);
  else if (key == "batch_size") batch_size = parse_num<int>(value, key);
  else if (key == "epochs") epochs = parse_num<int>(value, key);
  else if (key == "max_steps") max_steps = parse_num<int>(value, key);
  else if (key == "mlm_rate") mlm_rate = parse_num<double>(value, key);
  else if (key == "mlm_weight") mlm_weight = parse_num<double>(value, key);
  else if (key == "patience") patience = parse_num<int>(value, key);
  else if (key == "train_data") train_data = value;
  else if (key == "valid_data") valid_data = value;
  else if (key == "test_data") test_data = value;
  else if (key == "vocab_file") vocab_file = value;
  else if (key == "out_dir") out_dir = value;
  else if (key == "seed") seed = parse_num<std::uint64_t>(value, key);
  else
    throw ConfigError("config: unknown key '" + key + "'");
}

inline std::string RunConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "layers=" << layers << "\n";
  os << "heads=" << heads << "\n";
  os << "model_dim=" << model_dim << "\n";
  os << "ff_dim=" << ff_dim << "\n";
  os << "max_len=" << max_len << "\n";
  os << "dropout=" << dropout << "\n";
  os << "aggregation=" << aggregation << "\n";
  os << "include_special_in_avg=" << (include_special_in_avg ? "true" : "false")
     << "\n";
  os << "paradigm=" << paradigm << "\n";
  os << "scheme=" << scheme << "\n";
  os << "context_sees_candidates="
     << (context_sees_candidates ? "true" : "false") << "\n";
  os << "poly_codes=" << poly_codes << "\n";
  os << "peak_lr=" << peak_lr << "\n";
  os << "warmup_steps=" << warmup_steps << "\n";
  os << "beta1=" << beta1 << "\n";
  os << "beta2=" << beta2 << "\n";
  os << "weight_decay=" << weight_decay << "\n";
  os << "adam_eps=" << adam_eps << "\n";
  os << "batch_size=" << batch_size << "\n";
  os << "epochs=" << epochs << "\n";
  os << "max_steps=" << max_steps << "\n";
  os << "mlm_rate=" << mlm_rate << "\n";
  os << "mlm_weight=" << mlm_weight << "\n";
  os << "patience=" << patience << "\n";
  os << "train_data=" << train_data << "\n";
  os << "valid_data=" << valid_data << "\n";
  os << "test_data=" << test_data << "\n";
  os << "vocab_file=" << vocab_file << "\n";
  os << "out_dir=" << out_dir << "\n";
  os << "seed=" << seed << "\n";
  return os.str();
}

} // namespace ranklab
