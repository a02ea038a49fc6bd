#ifndef LINDBLAD_MODEL_IO_HPP
#define LINDBLAD_MODEL_IO_HPP

// JSON model files.
//
//   {
//     "type": "ising",                 // or "custom-dense"
//     "d": 6, "K": 2, "a": 1.5, "b": 1.0, "gamma": 0.05,
//     "T": 1.0,                        // optional horizon, default 1
//     "control": {"kind": "sine", "amplitude": 1, "frequency": 1, "phase": 0}
//   }
//
// Control kinds: "sine" {amplitude, frequency, phase}, "constant" {value} and
// "samples" {dt, values}, the last interpolated linearly and held constant
// past the final sample. A custom-dense model gives "H0", "V" and "jumps" as
// matrices {"re": [[...]], "im": [[...]]} (rows first, "im" optional) and
// "gamma" as one number or one rate per jump.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lindblad/model.hpp"

namespace lindblad {

struct ControlSpec {
  std::string kind = "sine";
  double amplitude = 1.0;
  double frequency = 1.0;
  double phase = 0.0;
  double value = 0.0;
  double dt = 0.0;
  std::vector<double> samples;
};

struct ModelSpec {
  std::string type = "ising";
  int d = 0;
  int sites = 0;
  double a = 1.5;
  double b = 1.0;
  std::vector<double> rates;  // one entry means a common rate
  double horizon = 1.0;
  ControlSpec control;
  ComplexMatrix h0;
  ComplexMatrix coupling;
  std::vector<ComplexMatrix> jumps;
  std::string name;

  Index dim() const { return type == "ising" ? int_pow(d, sites) : h0.rows(); }
};

namespace detail {

inline ComplexMatrix parse_matrix(const nlohmann::json& j, const std::string& what) {
  if (!j.is_object() || !j.contains("re")) {
    throw ParameterError("model file: " + what + " must be an object with \"re\" (and \"im\")");
  }
  const auto& re = j.at("re");
  const nlohmann::json im = j.value("im", nlohmann::json());
  if (!re.is_array() || re.empty()) throw ParameterError("model file: " + what + " is empty");
  const auto rows = static_cast<Index>(re.size());
  const auto cols = static_cast<Index>(re.at(0).size());
  ComplexMatrix out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = re.at(static_cast<std::size_t>(i));
    if (static_cast<Index>(row.size()) != cols) {
      throw DimensionError("model file: ragged rows in " + what);
    }
    for (Index k = 0; k < cols; ++k) {
      const double x = row.at(static_cast<std::size_t>(k)).get<double>();
      const double y = im.is_null() ? 0.0
                                    : im.at(static_cast<std::size_t>(i))
                                          .at(static_cast<std::size_t>(k))
                                          .get<double>();
      out(i, k) = Complex{x, y};
    }
  }
  return out;
}

inline ControlSpec parse_control(const nlohmann::json& j) {
  ControlSpec c;
  if (j.is_null()) {
    c.kind = "constant";
    return c;
  }
  c.kind = j.value("kind", std::string("sine"));
  if (c.kind == "sine") {
    c.amplitude = j.value("amplitude", 1.0);
    c.frequency = j.value("frequency", 1.0);
    c.phase = j.value("phase", 0.0);
  } else if (c.kind == "constant") {
    c.value = j.value("value", 0.0);
  } else if (c.kind == "samples") {
    c.dt = j.at("dt").get<double>();
    c.samples = j.at("values").get<std::vector<double>>();
    if (!(c.dt > 0.0) || c.samples.empty()) {
      throw ParameterError("model file: sampled control needs dt > 0 and at least one value");
    }
  } else {
    throw ParameterError("model file: unknown control kind \"" + c.kind + "\"");
  }
  return c;
}

}  // namespace detail

inline ModelSpec parse_model_spec(const nlohmann::json& j) {
  ModelSpec s;
  try {
    s.type = j.value("type", std::string("ising"));
    s.name = j.value("name", std::string());
    s.horizon = j.value("T", 1.0);
    s.control = detail::parse_control(j.value("control", nlohmann::json()));
    if (j.contains("gamma")) {
      const auto& g = j.at("gamma");
      s.rates = g.is_array() ? g.get<std::vector<double>>() : std::vector<double>{g.get<double>()};
    } else {
      s.rates = {0.05};
    }
    if (s.type == "ising") {
      s.d = j.at("d").get<int>();
      s.sites = j.at("K").get<int>();
      s.a = j.value("a", 1.5);
      s.b = j.value("b", 1.0);
      if (s.d < 2 || s.sites < 1) throw ParameterError("model file: need d >= 2 and K >= 1");
      if (s.rates.size() != 1 && s.rates.size() != static_cast<std::size_t>(s.sites)) {
        throw ParameterError("model file: gamma must be one number or K numbers");
      }
    } else if (s.type == "custom-dense") {
      s.h0 = detail::parse_matrix(j.at("H0"), "H0");
      s.coupling = j.contains("V") ? detail::parse_matrix(j.at("V"), "V")
                                   : ComplexMatrix::Zero(s.h0.rows(), s.h0.cols());
      for (const auto& l : j.value("jumps", nlohmann::json::array())) {
        s.jumps.push_back(detail::parse_matrix(l, "jump operator"));
      }
      if (s.rates.size() != 1 && s.rates.size() != s.jumps.size()) {
        throw ParameterError("model file: gamma must be one number or one per jump");
      }
    } else {
      throw ParameterError("model file: unknown type \"" + s.type + "\"");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("model file: ") + e.what());
  }
  if (!(s.horizon > 0.0)) throw ParameterError("model file: T must be positive");
  for (const double g : s.rates) {
    if (!(g >= 0.0)) throw ParameterError("model file: rates must be nonnegative");
  }
  return s;
}

inline ModelSpec load_model_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open model file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError("model file " + path.string() + ": " + e.what());
  }
  ModelSpec s = parse_model_spec(j);
  if (s.name.empty()) s.name = path.stem().string();
  return s;
}

/// The control amplitude u(t); empty for a zero control.
inline ScalarFunction make_control(const ControlSpec& c) {
  if (c.kind == "sine") return sine_control(c.amplitude, c.frequency, c.phase);
  if (c.kind == "constant") {
    if (c.value == 0.0) return {};
    return constant_function(c.value);
  }
  return [dt = c.dt, v = c.samples](double t) {
    const double x = std::max(0.0, t / dt);
    const auto i = static_cast<std::size_t>(x);
    if (i + 1 >= v.size()) return v.back();
    const double w = x - static_cast<double>(i);
    return (1.0 - w) * v[i] + w * v[i + 1];
  };
}

inline LindbladModel build_model(const ModelSpec& s) {
  const bool static_h = s.control.kind == "constant";
  std::vector<ComplexMatrix> jumps;
  ComplexMatrix h0;
  ComplexMatrix coupling;
  if (s.type == "ising") {
    IsingChainParts parts = ising_chain_parts(s.d, s.sites, s.a, s.b);
    h0 = std::move(parts.h0);
    coupling = std::move(parts.coupling);
    jumps = std::move(parts.jumps);
  } else {
    h0 = s.h0;
    coupling = s.coupling;
    jumps = s.jumps;
  }
  std::vector<ScalarFunction> rates;
  for (std::size_t k = 0; k < jumps.size(); ++k) {
    rates.push_back(constant_function(s.rates.size() == 1 ? s.rates[0] : s.rates[k]));
  }
  return make_controlled_model(std::move(h0), ControlProfile{make_control(s.control), std::move(coupling)},
                               std::move(jumps), std::move(rates), static_h);
}

}  // namespace lindblad

#endif  // LINDBLAD_MODEL_IO_HPP
