#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gbn/distributions.hpp"
#include "gbn/errors.hpp"
#include "gbn/rng.hpp"

namespace gbn {

inline constexpr const char* kModelVersion = "gbn-model-v1";

// p_j^(1) is fixed by the augmentation, and -ln(1 - p^(1)) = 1 exactly.
inline constexpr double kLayerOneP = 1.0 - 0.36787944117144233;  // 1 - e^{-1}

enum class LinkType { kCount, kBinary, kPrg };

inline std::string link_name(LinkType link) {
  switch (link) {
    case LinkType::kCount: return "count";
    case LinkType::kBinary: return "binary";
    case LinkType::kPrg: return "prg";
  }
  return "count";
}

inline LinkType link_from_name(const std::string& name) {
  if (name == "count") return LinkType::kCount;
  if (name == "binary") return LinkType::kBinary;
  if (name == "prg") return LinkType::kPrg;
  throw ModelFormatError("unknown link function '" + name + "'");
}

struct Hyperparams {
  // Dirichlet concentration per layer; the last value carries over to deeper
  // layers. eta_rows_for() expands it to the per-row vector form.
  std::vector<double> eta = {0.05};
  double a0 = 0.01;
  double b0 = 0.01;
  double e0 = 1.0;
  double f0 = 1.0;
  double gamma0_init = 1.0;
  double c0_init = 1.0;

  double eta_for_layer(int t) const {
    if (eta.empty()) throw ParameterError("hyperparams: eta must not be empty");
    const std::size_t i = static_cast<std::size_t>(t) - 1;
    return i < eta.size() ? eta[i] : eta.back();
  }

  Vector eta_rows_for(int t, int rows) const {
    return Vector::Constant(rows, eta_for_layer(t));
  }

  void validate() const {
    if (eta.empty()) throw ModelFormatError("hyperparams: eta must not be empty");
    for (double e : eta) {
      if (!(e > 0.0)) throw ModelFormatError("hyperparams: eta must be positive");
    }
    for (double x : {a0, b0, e0, f0, gamma0_init, c0_init}) {
      if (!(x > 0.0)) throw ModelFormatError("hyperparams: all values must be positive");
    }
  }
};

// Global network state shared across documents: per-layer column-stochastic
// factor matrices Phi^(t), the top-layer gamma shapes r, and the gamma0/c0
// hyperlevel of the r prior.
struct GbnNetwork {
  LinkType link = LinkType::kCount;
  Hyperparams hyper;
  std::vector<Matrix> phi;  // phi[t-1] = Phi^(t), shape K_{t-1} x K_t
  Vector r;                 // K_T
  double gamma0 = 1.0;
  double c0 = 1.0;

  // Median of the per-document scales c_j^(t) for t = 2..T+1, filled in by
  // training for synthetic generation. Runtime annotation; not serialized.
  std::optional<std::vector<double>> c_median;

  int depth() const { return static_cast<int>(phi.size()); }
  int data_dim() const { return static_cast<int>(phi.front().rows()); }
  int width(int t) const { return static_cast<int>(phi[t - 1].cols()); }
  std::vector<int> widths() const {
    std::vector<int> w;
    for (int t = 1; t <= depth(); ++t) w.push_back(width(t));
    return w;
  }
  const Matrix& phi_at(int t) const { return phi[t - 1]; }
  Matrix& phi_at(int t) { return phi[t - 1]; }

  void validate(double tol = 1e-10) const {
    hyper.validate();
    if (phi.empty()) throw ModelFormatError("network: needs at least one layer");
    for (int t = 1; t <= depth(); ++t) {
      const Matrix& m = phi_at(t);
      if (m.rows() < 1 || m.cols() < 1) {
        throw ModelFormatError("network: empty factor matrix at layer " + std::to_string(t));
      }
      if (t > 1 && m.rows() != phi_at(t - 1).cols()) {
        throw ModelFormatError("network: layer width mismatch at layer " + std::to_string(t));
      }
      for (Eigen::Index k = 0; k < m.cols(); ++k) {
        double sum = 0.0;
        for (Eigen::Index v = 0; v < m.rows(); ++v) {
          const double x = m(v, k);
          if (!(x >= 0.0) || !(x <= 1.0)) {
            throw ModelFormatError("network: factor entry outside [0,1] at layer " +
                                   std::to_string(t));
          }
          sum += x;
        }
        if (std::fabs(sum - 1.0) > tol) {
          throw ModelFormatError("network: column " + std::to_string(k + 1) + " of layer " +
                                 std::to_string(t) + " sums to " + std::to_string(sum));
        }
      }
    }
    if (r.size() != phi.back().cols()) {
      throw ModelFormatError("network: r dimension does not match top layer width");
    }
    for (Eigen::Index k = 0; k < r.size(); ++k) {
      if (!(r[k] > 0.0)) throw ModelFormatError("network: r must be strictly positive");
    }
    if (!(gamma0 > 0.0) || !(c0 > 0.0)) {
      throw ModelFormatError("network: gamma0 and c0 must be positive");
    }
  }
};

// Single-hidden-layer network: Phi^(1) columns from the Dirichlet prior and
// r from Gam(gamma0/K_1max, 1/c0), with gamma0 = c0 = 1 before their first
// resample.
inline GbnNetwork init_network(int v_count, int k1max, LinkType link,
                               const Hyperparams& hyper, RngStream& rng) {
  if (v_count < 1 || k1max < 1) {
    throw ParameterError("init_network: need V >= 1 and k1max >= 1");
  }
  hyper.validate();
  GbnNetwork net;
  net.link = link;
  net.hyper = hyper;
  net.gamma0 = hyper.gamma0_init;
  net.c0 = hyper.c0_init;
  Matrix phi1(v_count, k1max);
  const Vector eta_rows = hyper.eta_rows_for(1, v_count);
  for (int k = 0; k < k1max; ++k) phi1.col(k) = sample_dirichlet(eta_rows, rng);
  net.phi.push_back(std::move(phi1));
  net.r.resize(k1max);
  for (int k = 0; k < k1max; ++k) {
    net.r[k] = sample_gamma(net.gamma0 / k1max, 1.0 / net.c0, rng);
  }
  return net;
}

// ---------------------------------------------------------------------------
// Per-document latent state, stored layerwise with one column per document.
// theta_at(t) is K_t x J; c and p are indexed directly by the layer subscript
// used in the model (c: 2..T+1, p: 1..T+1).
// ---------------------------------------------------------------------------

struct DocLatentState {
  std::vector<Matrix> theta;   // theta[t-1]: K_t x J
  Vector p2;                   // p_j^(2)
  std::vector<Vector> c;       // c[t], valid for t in [2, T+1]
  std::vector<Vector> p;       // p[t], valid for t in [1, T+1]
  Vector prg_scale;            // a_j, PRG link only

  int depth() const { return static_cast<int>(theta.size()); }
  int docs() const { return theta.empty() ? 0 : static_cast<int>(theta.front().cols()); }
  Matrix& theta_at(int t) { return theta[t - 1]; }
  const Matrix& theta_at(int t) const { return theta[t - 1]; }
};

// Augmented latent counts for one sweep. m[t] holds m^{(t)(t+1)} = x^{(t)}
// summed over rows, x_above[t] the CRT counts x^{(t+1)}; term_topic[t] the
// per-layer aggregates x^{(t)}_{v.k} feeding the Dirichlet updates.
struct LatentCountState {
  std::vector<CountMatrix> term_topic;  // [t-1]: K_{t-1} x K_t
  std::vector<CountMatrix> m;           // [t-1]: K_t x J
  std::vector<CountMatrix> x_above;     // [t-1]: x^{(t+1)}, K_t x J

  int depth() const { return static_cast<int>(m.size()); }
  CountMatrix& term_topic_at(int t) { return term_topic[t - 1]; }
  const CountMatrix& term_topic_at(int t) const { return term_topic[t - 1]; }
  CountMatrix& m_at(int t) { return m[t - 1]; }
  const CountMatrix& m_at(int t) const { return m[t - 1]; }
  CountMatrix& x_above_at(int t) { return x_above[t - 1]; }
  const CountMatrix& x_above_at(int t) const { return x_above[t - 1]; }
};

// ---------------------------------------------------------------------------
// Model file format: a JSON envelope {version, link, hyper, widths, r,
// gamma0, c0, phi} with per-layer column-major coefficient arrays at full
// precision. Loading checks the version tag and every network invariant.
// ---------------------------------------------------------------------------

inline std::string serialize(const GbnNetwork& net) {
  net.validate();
  nlohmann::json j;
  j["version"] = kModelVersion;
  j["link"] = link_name(net.link);
  j["hyper"] = {{"eta", net.hyper.eta},     {"a0", net.hyper.a0},
                {"b0", net.hyper.b0},       {"e0", net.hyper.e0},
                {"f0", net.hyper.f0},       {"gamma0_init", net.hyper.gamma0_init},
                {"c0_init", net.hyper.c0_init}};
  j["widths"] = net.widths();
  std::vector<double> r(net.r.data(), net.r.data() + net.r.size());
  j["r"] = r;
  j["gamma0"] = net.gamma0;
  j["c0"] = net.c0;
  std::vector<std::vector<double>> layers;
  for (int t = 1; t <= net.depth(); ++t) {
    const Matrix& m = net.phi_at(t);
    layers.emplace_back(m.data(), m.data() + m.size());  // column-major
  }
  j["phi"] = layers;
  return j.dump(1);
}

inline GbnNetwork deserialize(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (!j.contains("version") || j.at("version").get<std::string>() != kModelVersion) {
      throw ModelFormatError("unsupported model version tag");
    }
    GbnNetwork net;
    net.link = link_from_name(j.at("link").get<std::string>());
    const auto& h = j.at("hyper");
    net.hyper.eta = h.at("eta").get<std::vector<double>>();
    net.hyper.a0 = h.at("a0").get<double>();
    net.hyper.b0 = h.at("b0").get<double>();
    net.hyper.e0 = h.at("e0").get<double>();
    net.hyper.f0 = h.at("f0").get<double>();
    net.hyper.gamma0_init = h.at("gamma0_init").get<double>();
    net.hyper.c0_init = h.at("c0_init").get<double>();
    const auto widths = j.at("widths").get<std::vector<int>>();
    const auto layers = j.at("phi").get<std::vector<std::vector<double>>>();
    if (widths.empty() || layers.size() != widths.size()) {
      throw ModelFormatError("widths and phi layer counts disagree");
    }
    for (std::size_t t = 0; t < layers.size(); ++t) {
      const int cols = widths[t];
      if (cols < 1 || layers[t].empty() ||
          layers[t].size() % static_cast<std::size_t>(cols) != 0) {
        throw ModelFormatError("phi layer " + std::to_string(t + 1) + " has bad shape");
      }
      const int rows = static_cast<int>(layers[t].size()) / cols;
      Matrix m(rows, cols);
      std::copy(layers[t].begin(), layers[t].end(), m.data());
      net.phi.push_back(std::move(m));
    }
    const auto r = j.at("r").get<std::vector<double>>();
    net.r = Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size()));
    net.gamma0 = j.at("gamma0").get<double>();
    net.c0 = j.at("c0").get<double>();
    net.validate();
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("model file missing or mistyped field: ") + e.what());
  }
}

inline void save_network(const GbnNetwork& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << serialize(net) << "\n";
}

inline GbnNetwork load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelFormatError("cannot open model file " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(text);
}

// Exact field-by-field equality (bitwise on floating point).
inline bool networks_equal(const GbnNetwork& a, const GbnNetwork& b) {
  if (a.link != b.link || a.depth() != b.depth()) return false;
  if (a.hyper.eta != b.hyper.eta || a.hyper.a0 != b.hyper.a0 || a.hyper.b0 != b.hyper.b0 ||
      a.hyper.e0 != b.hyper.e0 || a.hyper.f0 != b.hyper.f0 ||
      a.hyper.gamma0_init != b.hyper.gamma0_init || a.hyper.c0_init != b.hyper.c0_init) {
    return false;
  }
  if (a.gamma0 != b.gamma0 || a.c0 != b.c0) return false;
  if (a.r.size() != b.r.size() || (a.r.array() != b.r.array()).any()) return false;
  for (int t = 1; t <= a.depth(); ++t) {
    if (a.phi_at(t).rows() != b.phi_at(t).rows() || a.phi_at(t).cols() != b.phi_at(t).cols()) {
      return false;
    }
    if ((a.phi_at(t).array() != b.phi_at(t).array()).any()) return false;
  }
  return true;
}

}  // namespace gbn
