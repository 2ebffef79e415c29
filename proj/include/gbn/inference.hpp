#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gbn/corpus.hpp"
#include "gbn/distributions.hpp"
#include "gbn/errors.hpp"
#include "gbn/model.hpp"
#include "gbn/rng.hpp"

namespace gbn {

// ---------------------------------------------------------------------------
// Reusable sweep components (Gibbs conditionals), usable on their own.
// ---------------------------------------------------------------------------

// Scale-probability recursion: p^{(t+1)} = -ln(1-p^{(t)}) / (c^{(t+1)} - ln(1-p^{(t)})).
inline double p_next(double p, double c) {
  const double neg_log = -std::log1p(-p);
  return neg_log / (c + neg_log);
}

// x^{(t+1)}_{kj} ~ CRT(m_{kj}, rate_{kj}); the upward count propagator.
inline CountMatrix crt_propagate(const CountMatrix& m, const Matrix& rate, RngStream& rng) {
  CountMatrix out(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index k = 0; k < m.rows(); ++k) {
      const std::int64_t count = m(k, j);
      if (count == 0) {
        out(k, j) = 0;
        continue;
      }
      if (!(rate(k, j) > 0.0)) {
        throw ParameterError("crt_propagate: nonpositive CRT rate under a positive count");
      }
      out(k, j) = sample_crt(count, rate(k, j), rng);
    }
  }
  return out;
}

// Dirichlet update for the factor columns given per-(row, factor) counts.
inline Matrix sample_phi_columns(const CountMatrix& term_topic, const Vector& eta_rows,
                                 RngStream& rng) {
  Matrix phi(term_topic.rows(), term_topic.cols());
  Vector conc(term_topic.rows());
  for (Eigen::Index k = 0; k < term_topic.cols(); ++k) {
    for (Eigen::Index v = 0; v < term_topic.rows(); ++v) {
      conc[v] = eta_rows[v] + static_cast<double>(term_topic(v, k));
    }
    phi.col(k) = sample_dirichlet(conc, rng);
  }
  return phi;
}

// ---------------------------------------------------------------------------

enum class Layer1Mode { kCollapsed, kExplicit };

struct SweepOptions {
  Layer1Mode layer1 = Layer1Mode::kCollapsed;  // count link only; others are explicit
  int threads = 1;
  bool update_phi = true;
  bool update_r = true;       // r together with its gamma0/c0 hyperlevel
  bool update_scales = true;  // p_j^(2) and the c_j^(t)
  bool validate = false;      // check all state invariants after each sweep
  double init_theta = 0.1;
};

// Joint sampler state: the network, all per-document latent variables, the
// augmented counts of the last sweep, and the observations. One sweep() is a
// full upward-downward pass over all layers.
class GibbsState {
 public:
  GibbsState(GbnNetwork net, SparseCountMatrix observations, SweepOptions options,
             RngStream rng)
      : net_(std::move(net)), opt_(options), rng_(std::move(rng)) {
    if (net_.link == LinkType::kPrg) {
      throw ConfigError("PRG link requires dense nonnegative real observations");
    }
    if (observations.rows() != net_.data_dim()) {
      throw DataError("observation rows do not match the network's data dimension");
    }
    count_data_ = std::move(observations);
    if (net_.link == LinkType::kBinary) {
      count_data_ = binarize(count_data_);
    }
    docs_ = count_data_.cols();
    if (net_.link == LinkType::kCount && opt_.threads > 1) {
      // Collapsed token sampling is defined single-threaded only.
      opt_.layer1 = Layer1Mode::kExplicit;
    }
    if (net_.link != LinkType::kCount) opt_.layer1 = Layer1Mode::kExplicit;
    init_state();
  }

  GibbsState(GbnNetwork net, const DenseNonnegMatrix& observations, SweepOptions options,
             RngStream rng)
      : net_(std::move(net)), opt_(options), rng_(std::move(rng)) {
    if (net_.link != LinkType::kPrg) {
      throw ConfigError("dense nonnegative real observations require the PRG link");
    }
    if (observations.rows() != net_.data_dim()) {
      throw DataError("observation rows do not match the network's data dimension");
    }
    opt_.layer1 = Layer1Mode::kExplicit;
    docs_ = observations.cols();
    real_data_.resize(docs_);
    for (int j = 0; j < docs_; ++j) {
      for (int v = 0; v < observations.rows(); ++v) {
        const double y = observations.values(v, j);
        if (y < 0.0) throw DataError("PRG observations must be nonnegative");
        if (y > 0.0) real_data_[j].push_back({v, y});
      }
    }
    init_state();
  }

  const GbnNetwork& network() const { return net_; }
  GbnNetwork& network_mutable() { return net_; }
  const DocLatentState& doc_state() const { return doc_; }
  DocLatentState& doc_state_mutable() { return doc_; }
  const LatentCountState& counts() const { return counts_; }
  LatentCountState& counts_mutable() { return counts_; }
  const SweepOptions& options() const { return opt_; }
  RngStream& rng() { return rng_; }
  int depth() const { return net_.depth(); }
  int docs() const { return docs_; }
  bool collapsed() const {
    return net_.link == LinkType::kCount && opt_.layer1 == Layer1Mode::kCollapsed;
  }

  // x^{(1)} as currently held (the data for the count link, the sampled
  // latent counts for binary/PRG).
  const std::vector<std::vector<SparseEntry>>& x1() const { return x1_; }

  // Collapsed-mode token state: per-document factor assignment of each token
  // (document-major, term-sorted, token-index order).
  const std::vector<int>& token_assignments(int j) const { return tokens_[j].z; }

  // Replaces the observations of a count/binary state (dimensions fixed).
  // In collapsed mode the token assignments are rebuilt by a conditional
  // multinomial partition given the current phi^(1) and theta^(1), which is
  // itself a valid Gibbs move; used by joint-distribution (Geweke) testing
  // where data are resimulated between sweeps.
  void set_observations(const SparseCountMatrix& data) {
    if (net_.link == LinkType::kPrg) {
      throw ConfigError("set_observations: PRG states take dense real data");
    }
    if (data.rows() != net_.data_dim() || data.cols() != docs_) {
      throw DataError("set_observations: dimensions must match the existing state");
    }
    count_data_ = (net_.link == LinkType::kBinary) ? binarize(data) : data;
    for (int j = 0; j < docs_; ++j) x1_[j] = count_data_.column(j);
    if (collapsed()) init_tokens();
  }

  std::int64_t layer_total(int t) const {
    if (t == 1) {
      std::int64_t s = 0;
      for (const auto& col : x1_) {
        for (const auto& e : col) s += e.count;
      }
      return s;
    }
    return counts_.x_above_at(t - 1).sum();
  }

  // -------------------------------------------------------------------------
  // Sweep components. Each is a draw from a full conditional of the
  // augmented model; sweep() composes them in upward-downward order.
  // -------------------------------------------------------------------------

  // x^{(1)} for binary data: zero where b = 0 (never stored), truncated
  // Poisson at the observed ones. Work is proportional to nnz(b).
  void sample_x1_binary() {
    run_over_docs(0x01, [this](int j, RngStream& rng) {
      const Matrix& phi1 = net_.phi_at(1);
      auto theta = doc_.theta_at(1).col(j);
      for (auto& e : x1_[j]) {
        const double lambda = phi1.row(e.term).dot(theta);
        if (!(lambda > 0.0)) {
          throw DegenerateRateError("binary link: zero rate at an observed one");
        }
        e.count = sample_truncated_poisson(lambda, rng);
      }
    });
  }

  // x^{(1)} for nonnegative real data: zero where y = 0, truncated Bessel at
  // positive observations.
  void sample_x1_real() {
    run_over_docs(0x02, [this](int j, RngStream& rng) {
      const Matrix& phi1 = net_.phi_at(1);
      auto theta = doc_.theta_at(1).col(j);
      auto& col = x1_[j];
      for (std::size_t i = 0; i < col.size(); ++i) {
        const auto [v, y] = real_data_[j][i];
        const double rate = phi1.row(v).dot(theta);
        if (!(rate > 0.0)) {
          throw DegenerateRateError("PRG link: zero rate at a positive observation");
        }
        col[i].count = sample_truncated_bessel(
            2.0 * std::sqrt(doc_.prg_scale[j] * y * rate), rng);
      }
    });
  }

  // a_j ~ Gam(e0 + sum_v x^{(1)}_{vj}, 1/(f0 + sum_v y_{vj})).
  void sample_prg_scale() {
    run_over_docs(0x03, [this](int j, RngStream& rng) {
      std::int64_t x_sum = 0;
      double y_sum = 0.0;
      for (std::size_t i = 0; i < x1_[j].size(); ++i) {
        x_sum += x1_[j][i].count;
        y_sum += real_data_[j][i].second;
      }
      doc_.prg_scale[j] = sample_gamma(net_.hyper.e0 + static_cast<double>(x_sum),
                                       1.0 / (net_.hyper.f0 + y_sum), rng);
    });
  }

  // Multinomial split of x^{(t)} across the K_t factors (explicit path);
  // fills m^{(t)(t+1)} and the term-topic aggregates.
  void partition_layer(int t) {
    const Matrix& phi = net_.phi_at(t);
    const Matrix& theta = doc_.theta_at(t);
    const int k_t = net_.width(t);
    const int rows = (t == 1) ? net_.data_dim() : net_.width(t - 1);
    CountMatrix& m = counts_.m_at(t);
    m.setZero(k_t, docs_);
    const int chunks = std::max(1, std::min(opt_.threads, docs_));
    const bool trace = opt_.validate && chunks == 1;
    if (trace) {
      if (partition_trace_.size() < static_cast<std::size_t>(depth())) {
        partition_trace_.resize(depth());
      }
      partition_trace_[t - 1].clear();
    }

    std::vector<CountMatrix> local(chunks, CountMatrix::Zero(rows, k_t));
    run_over_chunks(0x10 + t, chunks, [&](int chunk, int j_begin, int j_end,
                                          RngStream& rng) {
      Vector w(k_t);
      CountMatrix& tt = local[chunk];
      for (int j = j_begin; j < j_end; ++j) {
        auto process = [&](int v, std::int64_t count) {
          if (count == 0) return;
          for (int k = 0; k < k_t; ++k) w[k] = phi(v, k) * theta(k, j);
          CountVector part;
          try {
            part = sample_multinomial_partition(count, w, rng);
          } catch (const DegenerateRateError&) {
            throw DegenerateRateError("partition: zero total rate at layer " +
                                      std::to_string(t) + " (row " + std::to_string(v) +
                                      ", doc " + std::to_string(j) + ")");
          }
          for (int k = 0; k < k_t; ++k) {
            tt(v, k) += part[k];
            m(k, j) += part[k];
          }
          if (trace) partition_trace_[t - 1][{v, j}] = part;
        };
        if (t == 1) {
          for (const auto& e : x1_[j]) process(e.term, e.count);
        } else {
          const CountMatrix& x = counts_.x_above_at(t - 1);
          for (int v = 0; v < rows; ++v) process(v, x(v, j));
        }
      }
    });
    CountMatrix& tt = counts_.term_topic_at(t);
    tt.setZero(rows, k_t);
    for (const auto& l : local) tt += l;
  }

  // Collapsed resampling of per-token factor assignments with Phi^(1) and
  // theta^(1) marginalized out; doc-major, then term, then token index.
  void collapsed_token_pass() {
    const int k1 = net_.width(1);
    const double eta1 = net_.hyper.eta_for_layer(1);
    const double v_eta = eta1 * static_cast<double>(net_.data_dim());
    Vector proj(k1), w(k1);
    const bool top = depth() == 1;
    for (int j = 0; j < docs_; ++j) {
      if (top) {
        proj = net_.r;
      } else {
        proj.noalias() = net_.phi_at(2) * doc_.theta_at(2).col(j);
      }
      auto& td = tokens_[j];
      for (std::size_t i = 0; i < td.term.size(); ++i) {
        const int v = td.term[i];
        const int k_old = td.z[i];
        token_term_topic_(v, k_old) -= 1;
        token_topic_total_[k_old] -= 1;
        token_doc_topic_(k_old, j) -= 1;
        for (int k = 0; k < k1; ++k) {
          w[k] = (eta1 + static_cast<double>(token_term_topic_(v, k))) /
                 (v_eta + static_cast<double>(token_topic_total_[k])) *
                 (static_cast<double>(token_doc_topic_(k, j)) + proj[k]);
        }
        const int k_new = categorical(w);
        td.z[i] = k_new;
        token_term_topic_(v, k_new) += 1;
        token_topic_total_[k_new] += 1;
        token_doc_topic_(k_new, j) += 1;
      }
    }
    counts_.m_at(1) = token_doc_topic_;
    counts_.term_topic_at(1) = token_term_topic_;
  }

  // Phi^{(t)} columns from their Dirichlet conditionals.
  void sample_phi_layer(int t) {
    const int rows = (t == 1) ? net_.data_dim() : net_.width(t - 1);
    const CountMatrix& stats =
        (t == 1 && collapsed()) ? token_term_topic_ : counts_.term_topic_at(t);
    net_.phi_at(t) = sample_phi_columns(stats, net_.hyper.eta_rows_for(t, rows), rng_);
  }

  // x^{(t+1)} ~ CRT(m^{(t)(t+1)}, rate) with the layer-(t+1) product rate, or
  // r at the top.
  void propagate_crt(int t) {
    counts_.x_above_at(t) = crt_propagate(counts_.m_at(t), rate_above(t), rng_);
  }

  // CRT shape for propagating layer t's counts upward: phi^{(t+1)} theta^{(t+1)}
  // below the top, the shared weight vector r at the top.
  Matrix rate_above(int t) const {
    if (t < depth()) {
      return net_.phi_at(t + 1) * doc_.theta_at(t + 1);
    }
    return net_.r.replicate(1, docs_);
  }

  // p_j^{(2)}, the c_j^{(t)} for t >= 3, and the derived probabilities.
  void sample_scales() {
    const int t_depth = depth();
    const double r_sum = net_.r.sum();
    const Hyperparams& h = net_.hyper;
    run_over_docs(0x30, [&](int j, RngStream& rng) {
      const double m1 = static_cast<double>(counts_.m_at(1).col(j).sum());
      const double theta2 = (t_depth >= 2) ? doc_.theta_at(2).col(j).sum() : r_sum;
      const double p2 = sample_beta(h.a0 + m1, h.b0 + theta2, rng);
      doc_.p2[j] = p2;
      doc_.c[2][j] = (1.0 - p2) / p2;
      doc_.p[2][j] = p2;
      for (int t = 3; t <= t_depth + 1; ++t) {
        const double theta_t = (t <= t_depth) ? doc_.theta_at(t).col(j).sum() : r_sum;
        const double theta_below = doc_.theta_at(t - 1).col(j).sum();
        doc_.c[t][j] = sample_gamma(h.e0 + theta_t, 1.0 / (h.f0 + theta_below), rng);
        doc_.p[t][j] = p_next(doc_.p[t - 1][j], doc_.c[t][j]);
      }
    });
  }

  // c0 from its full conditional, then gamma0 with r marginalized via CRT
  // augmentation of the top-layer NB counts. r must be redrawn right after
  // (sweep() follows with sample_r()).
  void sample_gamma0_c0() {
    const int t_top = depth();
    const int k_top = net_.width(t_top);
    const Hyperparams& h = net_.hyper;
    net_.c0 = sample_gamma(h.e0 + net_.gamma0, 1.0 / (h.f0 + net_.r.sum()), rng_);
    const double neg_log_total = neg_log_one_minus_p_top();
    const double p_tilde = neg_log_total / (net_.c0 + neg_log_total);
    std::int64_t tables = 0;
    for (int k = 0; k < k_top; ++k) {
      const std::int64_t x_k = counts_.x_above_at(t_top).row(k).sum();
      if (x_k > 0) tables += sample_crt(x_k, net_.gamma0 / k_top, rng_);
    }
    net_.gamma0 = sample_gamma(h.a0 + static_cast<double>(tables),
                               1.0 / (h.b0 - std::log1p(-p_tilde)), rng_);
  }

  // r_k ~ Gam(gamma0/K_T + x^{(T+1)}_{k.}, 1/(c0 - sum_j ln(1 - p_j^{(T+1)}))).
  void sample_r() {
    const int t_top = depth();
    const int k_top = net_.width(t_top);
    const double neg_log_total = neg_log_one_minus_p_top();
    for (int k = 0; k < k_top; ++k) {
      const double shape = net_.gamma0 / k_top +
                           static_cast<double>(counts_.x_above_at(t_top).row(k).sum());
      net_.r[k] = sample_gamma(shape, 1.0 / (net_.c0 + neg_log_total), rng_);
    }
  }

  // theta^{(t)} ~ Gam(shape + m^{(t)(t+1)}, 1/(c^{(t+1)} - ln(1-p^{(t)}))),
  // with shape phi^{(t+1)} theta^{(t+1)} below the top and r at the top.
  void sample_theta_layer(int t) {
    Matrix shape;
    if (t == depth()) {
      shape = net_.r.replicate(1, docs_);
    } else {
      shape = net_.phi_at(t + 1) * doc_.theta_at(t + 1);
    }
    run_over_docs(0x40 + t, [&, t](int j, RngStream& rng) {
      // -ln(1 - p^{(1)}) = 1 exactly; use the literal for layer one.
      const double denom =
          doc_.c[t + 1][j] + ((t == 1) ? 1.0 : -std::log1p(-doc_.p[t][j]));
      const double scale = 1.0 / denom;
      for (int k = 0; k < net_.width(t); ++k) {
        const double a = shape(k, j) + static_cast<double>(counts_.m_at(t)(k, j));
        doc_.theta_at(t)(k, j) = sample_gamma(a, scale, rng);
      }
    });
  }

  // One full upward-downward Gibbs sweep: link-specific layer-one counts,
  // upward partition/CRT propagation with factor updates, scale parameters,
  // then the weight vector and gamma units downward.
  void sweep() {
    // ---- upward ----
    switch (net_.link) {
      case LinkType::kCount:
        if (collapsed()) {
          collapsed_token_pass();
        } else {
          partition_layer(1);
          if (opt_.update_phi) sample_phi_layer(1);
        }
        break;
      case LinkType::kBinary:
        sample_x1_binary();
        partition_layer(1);
        if (opt_.update_phi) sample_phi_layer(1);
        break;
      case LinkType::kPrg:
        sample_x1_real();
        sample_prg_scale();
        partition_layer(1);
        if (opt_.update_phi) sample_phi_layer(1);
        break;
    }
    propagate_crt(1);
    for (int t = 2; t <= depth(); ++t) {
      partition_layer(t);
      if (opt_.update_phi) sample_phi_layer(t);
      propagate_crt(t);
    }

    // ---- scale parameters ----
    if (opt_.update_scales) sample_scales();

    // ---- downward ----
    if (opt_.update_r) {
      sample_gamma0_c0();
      sample_r();
    }
    const int t_low = collapsed() ? 2 : 1;
    for (int t = depth(); t >= t_low; --t) sample_theta_layer(t);
    if (collapsed()) {
      // phi(1) and theta(1) are marginalized by the token pass; drawing them
      // from their conditionals keeps the state fully populated for
      // snapshots and per-sample evaluation.
      if (opt_.update_phi) sample_phi_layer(1);
      sample_theta_layer(1);
    }

    swept_ = true;
    if (opt_.validate) validate_state();
  }

  // ---- structural operations (used by layer-wise training) ----

  // Removes layer-T factors whose aggregate latent count x^{(T)}_{..k} is
  // zero. If every factor is inactive, the single highest-weight factor is
  // kept. Returns the retained factor count.
  int prune_top_layer() {
    const int t = depth();
    const int k_old = net_.width(t);
    std::vector<int> keep;
    for (int k = 0; k < k_old; ++k) {
      if (counts_.m_at(t).row(k).sum() > 0) keep.push_back(k);
    }
    if (keep.empty()) {
      int best = 0;
      net_.r.maxCoeff(&best);
      keep.push_back(best);
      degenerate_prune_ = true;
    }
    if (static_cast<int>(keep.size()) == k_old) return k_old;

    const int k_new = static_cast<int>(keep.size());
    Matrix phi(net_.phi_at(t).rows(), k_new);
    Vector r(k_new);
    Matrix theta(k_new, docs_);
    CountMatrix m(k_new, docs_), x_above(k_new, docs_);
    CountMatrix term_topic(counts_.term_topic_at(t).rows(), k_new);
    for (int i = 0; i < k_new; ++i) {
      phi.col(i) = net_.phi_at(t).col(keep[i]);
      r[i] = net_.r[keep[i]];
      theta.row(i) = doc_.theta_at(t).row(keep[i]);
      m.row(i) = counts_.m_at(t).row(keep[i]);
      x_above.row(i) = counts_.x_above_at(t).row(keep[i]);
      term_topic.col(i) = counts_.term_topic_at(t).col(keep[i]);
    }
    net_.phi_at(t) = std::move(phi);
    net_.r = std::move(r);
    doc_.theta_at(t) = std::move(theta);
    counts_.m_at(t) = std::move(m);
    counts_.x_above_at(t) = std::move(x_above);
    counts_.term_topic_at(t) = std::move(term_topic);

    if (t == 1 && collapsed()) relabel_tokens(keep);
    return k_new;
  }

  bool degenerate_prune() const { return degenerate_prune_; }

  // Adds one layer on top: Phi^{(T+1)} gets width capped at the current K_T,
  // columns drawn from the Dirichlet prior; r is redrawn at the cap.
  void add_layer() {
    const int t_new = depth() + 1;
    const int k_below = net_.width(depth());
    const int cap = k_below;
    Matrix phi(k_below, cap);
    const Vector eta_rows = net_.hyper.eta_rows_for(t_new, k_below);
    for (int k = 0; k < cap; ++k) phi.col(k) = sample_dirichlet(eta_rows, rng_);
    net_.phi.push_back(std::move(phi));
    net_.r.resize(cap);
    for (int k = 0; k < cap; ++k) {
      net_.r[k] = sample_gamma(net_.gamma0 / cap, 1.0 / net_.c0, rng_);
    }
    doc_.theta.push_back(Matrix::Constant(cap, docs_, opt_.init_theta));
    doc_.c.push_back(Vector::Constant(docs_, 1.0));  // c^{(T_new+1)}
    doc_.p.push_back(Vector::Constant(docs_, 0.5));  // p^{(T_new+1)}
    refresh_scale_probs();
    counts_.term_topic.push_back(CountMatrix::Zero(k_below, cap));
    counts_.m.push_back(CountMatrix::Zero(cap, docs_));
    counts_.x_above.push_back(CountMatrix::Zero(cap, docs_));
  }

  // Network snapshot with Phi and r replaced by their conditional posterior
  // means given the latest sweep's latent counts; per-layer c medians are
  // attached for downstream synthetic generation.
  GbnNetwork snapshot() const {
    GbnNetwork out = net_;
    if (!swept_) return out;
    for (int t = 1; t <= depth(); ++t) {
      const CountMatrix& stats =
          (t == 1 && collapsed()) ? token_term_topic_ : counts_.term_topic_at(t);
      const double eta = net_.hyper.eta_for_layer(t);
      Matrix& phi = out.phi_at(t);
      for (Eigen::Index k = 0; k < phi.cols(); ++k) {
        const double total = eta * static_cast<double>(phi.rows()) +
                             static_cast<double>(stats.col(k).sum());
        for (Eigen::Index v = 0; v < phi.rows(); ++v) {
          phi(v, k) = (eta + static_cast<double>(stats(v, k))) / total;
        }
      }
    }
    const int t_top = depth();
    const double h = neg_log_one_minus_p_top();
    const int k_top = net_.width(t_top);
    for (int k = 0; k < k_top; ++k) {
      const double shape = net_.gamma0 / k_top +
                           static_cast<double>(counts_.x_above_at(t_top).row(k).sum());
      out.r[k] = shape / (net_.c0 + h);
    }
    std::vector<double> medians;
    for (int t = 2; t <= depth() + 1; ++t) medians.push_back(median_of(doc_.c[t]));
    out.c_median = medians;
    return out;
  }

  // ---- invariant validation (debug/validation mode) ----

  void validate_state(double tol = 1e-10) const {
    net_.validate(tol);
    for (int t = 1; t <= depth(); ++t) {
      if (!(doc_.theta_at(t).array() > 0.0).all()) {
        throw Error("validate: theta must stay strictly positive");
      }
    }
    for (int j = 0; j < docs_; ++j) {
      if (doc_.p[1][j] != kLayerOneP) throw Error("validate: p^(1) must equal 1-e^{-1}");
      const double p2 = doc_.p2[j];
      if (!(p2 > 0.0 && p2 < 1.0)) throw Error("validate: p^(2) must lie in (0,1)");
      if (doc_.c[2][j] != (1.0 - p2) / p2) {
        throw Error("validate: c^(2) must equal (1-p)/p exactly");
      }
      for (int t = 2; t <= depth() + 1; ++t) {
        if (!(doc_.c[t][j] > 0.0)) throw Error("validate: c must stay positive");
        if (!(doc_.p[t][j] > 0.0 && doc_.p[t][j] < 1.0)) {
          throw Error("validate: p must stay inside (0,1)");
        }
        if (t >= 3 && doc_.p[t][j] != p_next(doc_.p[t - 1][j], doc_.c[t][j])) {
          throw Error("validate: p recursion violated");
        }
      }
    }
    if (!swept_) return;
    for (int t = 1; t <= depth(); ++t) {
      // x^{(t)}_{.j} must equal m^{(t)(t+1)}_{.j} and the term-topic
      // aggregates must carry the same mass.
      for (int j = 0; j < docs_; ++j) {
        const std::int64_t xj =
            (t == 1) ? column_total_x1(j) : counts_.x_above_at(t - 1).col(j).sum();
        if (counts_.m_at(t).col(j).sum() != xj) {
          throw Error("validate: x_.j != m_.j at layer " + std::to_string(t));
        }
      }
      if (counts_.term_topic_at(t).sum() != counts_.m_at(t).sum()) {
        throw Error("validate: term-topic aggregate mass mismatch at layer " +
                    std::to_string(t));
      }
      for (int j = 0; j < docs_; ++j) {
        for (int k = 0; k < counts_.m_at(t).rows(); ++k) {
          const std::int64_t m = counts_.m_at(t)(k, j);
          const std::int64_t x = counts_.x_above_at(t)(k, j);
          if (x < 0 || x > m || ((x == 0) != (m == 0))) {
            throw Error("validate: CRT bound violated at layer " + std::to_string(t));
          }
        }
      }
    }
    if (collapsed()) validate_token_bookkeeping();
    // Entry-level conservation, when the sweep recorded partition traces.
    for (std::size_t ti = 0; ti < partition_trace_.size(); ++ti) {
      for (const auto& [key, parts] : partition_trace_[ti]) {
        const auto [v, j] = key;
        std::int64_t x;
        if (ti == 0) {
          x = 0;
          for (const auto& e : x1_[j]) {
            if (e.term == v) {
              x = e.count;
              break;
            }
          }
        } else {
          x = counts_.x_above_at(static_cast<int>(ti))(v, j);
        }
        if (parts.sum() != x) {
          throw Error("validate: partition does not conserve x at layer " +
                      std::to_string(ti + 1));
        }
      }
    }
  }

  double neg_log_one_minus_p_top() const {
    double h = 0.0;
    for (int j = 0; j < docs_; ++j) h += -std::log1p(-doc_.p[depth() + 1][j]);
    return h;
  }

 private:
  std::int64_t column_total_x1(int j) const {
    std::int64_t s = 0;
    for (const auto& e : x1_[j]) s += e.count;
    return s;
  }

  static double median_of(const Vector& v) {
    std::vector<double> xs(v.data(), v.data() + v.size());
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    if (n == 0) return 1.0;
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
  }

  void init_state() {
    net_.validate();
    const int t_depth = depth();
    doc_.theta.clear();
    for (int t = 1; t <= t_depth; ++t) {
      doc_.theta.push_back(Matrix::Constant(net_.width(t), docs_, opt_.init_theta));
    }
    doc_.p2 = Vector::Constant(docs_, 0.5);
    doc_.c.assign(t_depth + 2, Vector());
    doc_.p.assign(t_depth + 2, Vector());
    doc_.p[1] = Vector::Constant(docs_, kLayerOneP);
    for (int t = 2; t <= t_depth + 1; ++t) {
      doc_.c[t] = Vector::Constant(docs_, 1.0);
      doc_.p[t] = Vector::Constant(docs_, 0.5);
    }
    refresh_scale_probs();
    doc_.prg_scale = Vector::Constant(docs_, 1.0);

    counts_.term_topic.clear();
    counts_.m.clear();
    counts_.x_above.clear();
    for (int t = 1; t <= t_depth; ++t) {
      const int rows = (t == 1) ? net_.data_dim() : net_.width(t - 1);
      counts_.term_topic.push_back(CountMatrix::Zero(rows, net_.width(t)));
      counts_.m.push_back(CountMatrix::Zero(net_.width(t), docs_));
      counts_.x_above.push_back(CountMatrix::Zero(net_.width(t), docs_));
    }

    // Layer-one latent counts: the data itself for the count link; one count
    // per observed entry as the pre-sweep placeholder for binary/PRG.
    x1_.assign(docs_, {});
    if (net_.link == LinkType::kPrg) {
      for (int j = 0; j < docs_; ++j) {
        for (const auto& [v, y] : real_data_[j]) {
          (void)y;
          x1_[j].push_back({v, 1});
        }
      }
    } else {
      for (int j = 0; j < docs_; ++j) x1_[j] = count_data_.column(j);
    }

    if (collapsed()) init_tokens();
  }

  // Derived scale probabilities kept consistent with c (used after init and
  // after structural edits, before the next sweep recomputes them).
  void refresh_scale_probs() {
    const int t_depth = depth();
    if (static_cast<int>(doc_.p.size()) < t_depth + 2) return;
    for (int j = 0; j < docs_; ++j) {
      doc_.c[2][j] = (1.0 - doc_.p2[j]) / doc_.p2[j];
      doc_.p[2][j] = doc_.p2[j];
      for (int t = 3; t <= t_depth + 1; ++t) {
        doc_.p[t][j] = p_next(doc_.p[t - 1][j], doc_.c[t][j]);
      }
    }
  }

  void init_tokens() {
    tokens_.assign(docs_, {});
    const int k1 = net_.width(1);
    token_term_topic_ = CountMatrix::Zero(net_.data_dim(), k1);
    token_topic_total_ = CountVector::Zero(k1);
    token_doc_topic_ = CountMatrix::Zero(k1, docs_);
    Vector w(k1);
    for (int j = 0; j < docs_; ++j) {
      auto& td = tokens_[j];
      for (const auto& e : x1_[j]) {
        for (std::int64_t i = 0; i < e.count; ++i) td.term.push_back(e.term);
      }
      td.z.resize(td.term.size());
      for (std::size_t i = 0; i < td.term.size(); ++i) {
        const int v = td.term[i];
        for (int k = 0; k < k1; ++k) w[k] = net_.phi_at(1)(v, k) * doc_.theta_at(1)(k, j);
        const int k_new = categorical(w);
        td.z[i] = k_new;
        token_term_topic_(v, k_new) += 1;
        token_topic_total_[k_new] += 1;
        token_doc_topic_(k_new, j) += 1;
      }
    }
    counts_.m_at(1) = token_doc_topic_;
    counts_.term_topic_at(1) = token_term_topic_;
  }

  int categorical(const Vector& w) {
    const double total = w.sum();
    if (!(total > 0.0)) throw DegenerateRateError("categorical: all-zero weights");
    double u = rng_.uniform() * total;
    for (Eigen::Index k = 0; k + 1 < w.size(); ++k) {
      u -= w[k];
      if (u < 0.0) return static_cast<int>(k);
    }
    return static_cast<int>(w.size() - 1);
  }

  void relabel_tokens(const std::vector<int>& keep) {
    std::vector<int> new_index(static_cast<std::size_t>(token_topic_total_.size()), -1);
    for (std::size_t i = 0; i < keep.size(); ++i) new_index[keep[i]] = static_cast<int>(i);
    const int k1 = static_cast<int>(keep.size());
    CountMatrix tt = CountMatrix::Zero(net_.data_dim(), k1);
    CountVector tot = CountVector::Zero(k1);
    CountMatrix dt = CountMatrix::Zero(k1, docs_);
    for (int j = 0; j < docs_; ++j) {
      auto& td = tokens_[j];
      for (std::size_t i = 0; i < td.z.size(); ++i) {
        const int k = new_index[td.z[i]];
        // Pruned factors have zero aggregate count, so no token references them.
        td.z[i] = k;
        tt(td.term[i], k) += 1;
        tot[k] += 1;
        dt(k, j) += 1;
      }
    }
    token_term_topic_ = std::move(tt);
    token_topic_total_ = std::move(tot);
    token_doc_topic_ = std::move(dt);
  }

  void validate_token_bookkeeping() const {
    CountMatrix tt = CountMatrix::Zero(net_.data_dim(), net_.width(1));
    CountMatrix dt = CountMatrix::Zero(net_.width(1), docs_);
    for (int j = 0; j < docs_; ++j) {
      const auto& td = tokens_[j];
      for (std::size_t i = 0; i < td.z.size(); ++i) {
        tt(td.term[i], td.z[i]) += 1;
        dt(td.z[i], j) += 1;
      }
    }
    if ((tt.array() != token_term_topic_.array()).any() ||
        (dt.array() != token_doc_topic_.array()).any() ||
        (tt.colwise().sum().transpose().array() != token_topic_total_.array()).any()) {
      throw Error("validate: collapsed token bookkeeping out of sync");
    }
  }

  // ---- document-parallel scaffolding ----

  void run_over_docs(std::uint64_t tag, const std::function<void(int, RngStream&)>& body) {
    const int chunks = std::max(1, std::min(opt_.threads, docs_));
    run_over_chunks(tag, chunks, [&](int, int j_begin, int j_end, RngStream& rng) {
      for (int j = j_begin; j < j_end; ++j) body(j, rng);
    });
  }

  void run_over_chunks(std::uint64_t tag, int chunks,
                       const std::function<void(int, int, int, RngStream&)>& body) {
    if (chunks <= 1) {
      body(0, 0, docs_, rng_);
      return;
    }
    ++phase_counter_;
    std::vector<RngStream> streams;
    streams.reserve(chunks);
    for (int c = 0; c < chunks; ++c) {
      streams.push_back(rng_.substream(detail::mix64(phase_counter_ * 131 + tag) + c));
    }
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    const int per = (docs_ + chunks - 1) / chunks;
    for (int c = 0; c < chunks; ++c) {
      const int j_begin = c * per;
      const int j_end = std::min(docs_, j_begin + per);
      if (j_begin >= j_end) break;
      pool.emplace_back([&, c, j_begin, j_end] {
        try {
          body(c, j_begin, j_end, streams[c]);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  }

  struct TokenDoc {
    std::vector<int> term;
    std::vector<int> z;
  };

  GbnNetwork net_;
  DocLatentState doc_;
  LatentCountState counts_;
  SweepOptions opt_;
  RngStream rng_;
  int docs_ = 0;
  bool swept_ = false;
  bool degenerate_prune_ = false;
  std::uint64_t phase_counter_ = 0;

  SparseCountMatrix count_data_;  // count data / binary pattern
  std::vector<std::vector<std::pair<int, double>>> real_data_;  // PRG (term, y > 0)
  std::vector<std::vector<SparseEntry>> x1_;

  std::vector<TokenDoc> tokens_;
  CountMatrix token_term_topic_;   // V x K_1
  CountVector token_topic_total_;  // K_1
  CountMatrix token_doc_topic_;    // K_1 x J

  // validation-mode record of every (row, doc) partition, per layer
  std::vector<std::map<std::pair<int, int>, CountVector>> partition_trace_;
};

}  // namespace gbn
