#pragma once

#include <string>

#include "udr/model.hpp"
#include "udr/rain.hpp"
#include "udr/train.hpp"

namespace udr::config {

// Flat key=value run configuration covering the model, training, and rain
// synthesis knobs. Unknown keys are rejected; serialize() emits every key so
// parse(serialize(c)) == c.
struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  rain::RainConfig rain;
  std::string precision = "f32";  // f32 | f64

  void set_key(const std::string& key, const std::string& value);
  std::string get_key(const std::string& key) const;
  std::string serialize() const;

  static RunConfig parse_text(const std::string& text);
  static RunConfig parse_file(const std::string& path);

  bool operator==(const RunConfig& other) const;
};

}  // namespace udr::config
