#include "dagan/baselines.hpp"

#include "dagan/autodiff.hpp"
#include "dagan/models.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace dagan {

// ---------------------------------------------------------------------------
// Fixed-threshold rules
// ---------------------------------------------------------------------------

void FixedThresholdConfig::validate() const {
  if (!(r_ac > 0.0 && r_ss > 0.0 && r_vs > 0.0 && r_ya > 0.0))
    throw UsageError("fixed-threshold ranges must be positive");
  if (!(ac_smoothing_s >= 0.0)) throw UsageError("acceleration smoothing must be >= 0");
}

CanWindowStats can_window_stats(const Eigen::Ref<const Mat>& window, const FixedThresholdConfig& config) {
  if (window.rows() != kChannelCount)
    throw DimensionError("fixed-threshold window must have " + std::to_string(kChannelCount) + " rows");
  const Index n = window.cols();
  if (n < 2) throw DimensionError("fixed-threshold window needs at least two frames");
  const auto speed = window.row(channel_index(Channel::Speed));
  constexpr double kKmhToMs = 1.0 / 3.6;

  // Centered difference inside, one-sided at the ends.
  Vec accel(n);
  for (Index i = 0; i < n; ++i) {
    const Index lo = std::max<Index>(0, i - 1);
    const Index hi = std::min<Index>(n - 1, i + 1);
    accel(i) = (speed(hi) - speed(lo)) * kSampleRate / static_cast<double>(hi - lo) * kKmhToMs;
  }
  const Index half = static_cast<Index>(std::lround(config.ac_smoothing_s * kSampleRate)) / 2;
  Vec smooth(n);
  for (Index i = 0; i < n; ++i) {
    const Index lo = std::max<Index>(0, i - half);
    const Index hi = std::min<Index>(n - 1, i + half);
    smooth(i) = accel.segment(lo, hi - lo + 1).mean();
  }

  CanWindowStats s;
  s.ac = smooth.mean();
  s.ss = window.row(channel_index(Channel::SteerSpeed)).cwiseAbs().maxCoeff();
  s.vs = speed.cwiseAbs().maxCoeff();
  s.ya = window.row(channel_index(Channel::Yaw)).cwiseAbs().maxCoeff();
  return s;
}

bool fixed_threshold_flag(const CanWindowStats& s, double alpha, const FixedThresholdConfig& c) {
  const double t_ac = c.ac + alpha * c.r_ac;
  const double t_ss_low = c.ss_low - alpha * c.r_ss;
  const double t_vs = c.vs + alpha * c.r_vs;
  const double t_ss_high = c.ss_high + alpha * c.r_ss;
  const double t_ya = c.ya + alpha * c.r_ya;
  const bool speeding = std::abs(s.ac) > t_ac && s.ss < t_ss_low;
  const bool steering = s.vs > t_vs && s.ss > t_ss_high && s.ya > t_ya;
  return speeding || steering;
}

double fixed_threshold_score(const CanWindowStats& stats, const FixedThresholdConfig& config) {
  for (int i = 100; i >= -100; --i) {
    const double alpha = i / 100.0;
    if (fixed_threshold_flag(stats, alpha, config)) return alpha;
  }
  return kFixedThresholdNever;
}

// ---------------------------------------------------------------------------
// Standardization, PCA
// ---------------------------------------------------------------------------

Standardizer Standardizer::fit(const Mat& x) {
  if (x.rows() < 2) throw UsageError("standardization needs at least two rows");
  Standardizer s;
  s.mean = x.colwise().mean().transpose();
  s.scale.resize(x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.mean(j)).square().sum() / static_cast<double>(x.rows() - 1);
    s.scale(j) = std::sqrt(var);
    if (s.scale(j) > 1e-12 * std::max(1.0, std::abs(s.mean(j))))
      s.kept.push_back(j);
    else
      s.dropped.push_back(j);
  }
  if (s.kept.empty()) throw NumericError("every feature dimension has zero variance");
  return s;
}

Mat Standardizer::apply(const Mat& x) const {
  if (x.cols() != mean.size())
    throw DimensionError("standardizer fitted on " + std::to_string(mean.size()) + " columns, got " +
                         std::to_string(x.cols()));
  Mat out(x.rows(), static_cast<Index>(kept.size()));
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const Index j = kept[k];
    out.col(static_cast<Index>(k)) = (x.col(j).array() - mean(j)) / scale(j);
  }
  return out;
}

PcaModel pca_fit(const Mat& train) {
  if (train.rows() < kPcaMinSamples)
    throw UsageError("PCA needs at least " + std::to_string(kPcaMinSamples) + " training vectors, got " +
                     std::to_string(train.rows()));
  PcaModel m;
  m.standardizer = Standardizer::fit(train);
  const Mat z = m.standardizer.apply(train);
  const Eigen::MatrixXd cov = (z.transpose() * z) / static_cast<double>(z.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("PCA eigendecomposition failed");
  m.eigenvalues = solver.eigenvalues().reverse();
  m.axis = solver.eigenvectors().col(cov.cols() - 1);

  const Vec proj = z * m.axis;
  const double centered_mean = proj.mean();
  const double m2 = (proj.array() - centered_mean).square().mean();
  const double m3 = (proj.array() - centered_mean).cube().mean();
  const double scale = std::pow(std::max(m2, 1e-300), 1.5);
  if (std::abs(m3) > 1e-12 * scale) {
    if (m3 < 0.0) m.axis = -m.axis;
  } else {
    for (Index j = 0; j < m.axis.size(); ++j)
      if (m.axis(j) != 0.0) {
        if (m.axis(j) < 0.0) m.axis = -m.axis;
        break;
      }
  }
  return m;
}

Vec pca_score(const PcaModel& model, const Mat& x) { return model.standardizer.apply(x) * model.axis; }

// ---------------------------------------------------------------------------
// Gaussian mixture
// ---------------------------------------------------------------------------

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Component log-densities, n x k.
Mat component_log_densities(const GmmParams& p, const Mat& x) {
  const Index n = x.rows();
  const Index k = p.means.rows();
  const Index d = p.means.cols();
  if (x.cols() != d)
    throw DimensionError("GMM fitted on " + std::to_string(d) + " dimensions, got " + std::to_string(x.cols()));
  Mat out(n, k);
  for (Index c = 0; c < k; ++c) {
    const double log_w = std::log(std::max(p.weights(c), std::numeric_limits<double>::min()));
    if (p.covariance == CovarianceType::Diagonal) {
      const RowVec var = p.variances.row(c);
      const double log_det = var.array().log().sum();
      const RowVec inv = var.cwiseInverse();
      for (Index i = 0; i < n; ++i) {
        const double maha = ((x.row(i) - p.means.row(c)).array().square() * inv.array()).sum();
        out(i, c) = log_w - 0.5 * (d * kLog2Pi + log_det + maha);
      }
    } else {
      Eigen::LLT<Eigen::MatrixXd> llt(p.covariances[static_cast<std::size_t>(c)]);
      if (llt.info() != Eigen::Success) throw NumericError("GMM covariance is not positive definite");
      const Eigen::MatrixXd l = llt.matrixL();
      const double log_det = 2.0 * l.diagonal().array().log().sum();
      Eigen::MatrixXd diff = (x.rowwise() - p.means.row(c)).transpose();
      llt.matrixL().solveInPlace(diff);
      const Eigen::VectorXd maha = diff.colwise().squaredNorm().transpose();
      for (Index i = 0; i < n; ++i) out(i, c) = log_w - 0.5 * (d * kLog2Pi + log_det + maha(i));
    }
  }
  return out;
}

// Row-wise log-sum-exp; fills normalized responsibilities when asked.
Vec log_sum_exp_rows(const Mat& logs, Mat* resp) {
  Vec out(logs.rows());
  if (resp) resp->resize(logs.rows(), logs.cols());
  for (Index i = 0; i < logs.rows(); ++i) {
    const double mx = logs.row(i).maxCoeff();
    const double s = (logs.row(i).array() - mx).exp().sum();
    out(i) = mx + std::log(s);
    if (resp) resp->row(i) = (logs.row(i).array() - out(i)).exp();
  }
  return out;
}

std::vector<Index> kmeans_plus_plus(const Mat& x, int k, Rng& rng) {
  const Index n = x.rows();
  std::vector<Index> centers;
  std::uniform_int_distribution<Index> first(0, n - 1);
  centers.push_back(first(rng));
  Vec d2 = (x.rowwise() - x.row(centers[0])).rowwise().squaredNorm();
  while (static_cast<int>(centers.size()) < k) {
    Index next;
    if (d2.sum() <= 0.0) {
      next = first(rng);
    } else {
      std::discrete_distribution<Index> pick(d2.data(), d2.data() + d2.size());
      next = pick(rng);
    }
    centers.push_back(next);
    d2 = d2.cwiseMin((x.rowwise() - x.row(next)).rowwise().squaredNorm());
  }
  return centers;
}

void m_step(GmmParams& p, const Mat& x, const Mat& resp, const GmmConfig& cfg) {
  const Index n = x.rows();
  const Index d = x.cols();
  for (Index c = 0; c < p.means.rows(); ++c) {
    const double nk = resp.col(c).sum();
    p.weights(c) = nk / static_cast<double>(n);
    if (nk < 1e-12) continue;  // empty component keeps its shape
    const RowVec mean = (resp.col(c).transpose() * x) / nk;
    p.means.row(c) = mean;
    const Mat diff = x.rowwise() - mean;
    if (cfg.covariance == CovarianceType::Diagonal) {
      const RowVec var = (resp.col(c).transpose() * diff.array().square().matrix()) / nk;
      p.variances.row(c) = var.cwiseMax(cfg.variance_floor);
    } else {
      Eigen::MatrixXd cov = (diff.transpose() * resp.col(c).asDiagonal() * diff) / nk;
      cov.diagonal().array() = cov.diagonal().array().max(cfg.variance_floor) + cfg.ridge;
      p.covariances[static_cast<std::size_t>(c)] = cov;
    }
  }
  (void)d;
}

}  // namespace

GmmParams gmm_fit(const Mat& x, const GmmConfig& cfg) {
  if (cfg.components < 1) throw UsageError("GMM needs at least one component");
  if (x.rows() < cfg.components)
    throw UsageError("GMM with " + std::to_string(cfg.components) + " components needs at least that many vectors, got " +
                     std::to_string(x.rows()));
  if (cfg.max_iterations < 1) throw UsageError("GMM max_iterations must be >= 1");
  const Index k = cfg.components;
  const Index d = x.cols();
  Rng rng(cfg.seed);

  GmmParams p;
  p.covariance = cfg.covariance;
  p.weights = Vec::Constant(k, 1.0 / static_cast<double>(k));
  p.means.resize(k, d);
  const auto centers = kmeans_plus_plus(x, cfg.components, rng);
  for (Index c = 0; c < k; ++c) p.means.row(c) = x.row(centers[static_cast<std::size_t>(c)]);
  const RowVec mean = x.colwise().mean();
  const RowVec global_var =
      ((x.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(x.rows())).matrix().cwiseMax(cfg.variance_floor);
  if (cfg.covariance == CovarianceType::Diagonal) {
    p.variances = global_var.replicate(k, 1);
  } else {
    Eigen::MatrixXd cov = global_var.transpose().asDiagonal();
    cov.diagonal().array() += cfg.ridge;
    p.covariances.assign(static_cast<std::size_t>(k), cov);
  }

  Mat resp;
  double ll = log_sum_exp_rows(component_log_densities(p, x), &resp).sum();
  p.log_likelihood_trace.push_back(ll);
  for (int it = 0; it < cfg.max_iterations; ++it) {
    m_step(p, x, resp, cfg);
    const double next = log_sum_exp_rows(component_log_densities(p, x), &resp).sum();
    if (!std::isfinite(next)) throw NumericError("GMM log-likelihood became non-finite");
    p.log_likelihood_trace.push_back(next);
    const double gain = next - ll;
    ll = next;
    if (gain < cfg.tolerance) break;
  }
  return p;
}

Vec gmm_log_density(const GmmParams& params, const Mat& x) {
  return log_sum_exp_rows(component_log_densities(params, x), nullptr);
}

Vec gmm_score(const GmmParams& params, const Mat& x) { return -gmm_log_density(params, x); }

double gmm_log_likelihood(const GmmParams& params, const Mat& x) { return gmm_log_density(params, x).sum(); }

Index gmm_free_parameters(Index k, Index d, CovarianceType covariance) {
  const Index cov = covariance == CovarianceType::Diagonal ? d : d * (d + 1) / 2;
  return (k - 1) + k * d + k * cov;
}

ModelSelection gmm_model_select(const Mat& x, const std::vector<int>& candidates, const GmmConfig& config) {
  if (candidates.empty()) throw UsageError("model selection needs at least one candidate");
  ModelSelection sel;
  for (int k : candidates) {
    if (k < 1 || k > 16) throw UsageError("component candidates must lie in 1..16, got " + std::to_string(k));
    GmmConfig c = config;
    c.components = k;
    const GmmParams p = gmm_fit(x, c);
    ModelSelectionRow row;
    row.components = k;
    row.log_likelihood = gmm_log_likelihood(p, x);
    row.parameters = gmm_free_parameters(k, x.cols(), c.covariance);
    row.aic = aic(row.log_likelihood, static_cast<double>(row.parameters));
    row.bic = bic(row.log_likelihood, static_cast<double>(row.parameters), static_cast<double>(x.rows()));
    sel.rows.push_back(row);
  }
  auto best = [&](auto key) {
    return std::min_element(sel.rows.begin(), sel.rows.end(),
                            [&](const auto& a, const auto& b) { return key(a) < key(b); })
        ->components;
  };
  sel.best_aic = best([](const ModelSelectionRow& r) { return r.aic; });
  sel.best_bic = best([](const ModelSelectionRow& r) { return r.bic; });
  return sel;
}

// ---------------------------------------------------------------------------
// BeatGAN
// ---------------------------------------------------------------------------

namespace {

constexpr std::array<const char*, 8> kBeatGanGeneratorLayers = {"g.enc1", "g.enc2", "g.enc3", "g.enc4",
                                                                "g.dec1", "g.dec2", "g.dec3", "g.dec4"};
constexpr std::array<const char*, 4> kBeatGanDiscriminatorLayers = {"d.fc1", "d.fc2", "d.fc3", "d.out"};

void require_width(const Mat& windows) {
  if (windows.cols() != kBeatGanWidth)
    throw DimensionError("BeatGAN windows must be " + std::to_string(kBeatGanWidth) + " wide, got " +
                         std::to_string(windows.cols()));
}

Var layer(ParamBinder& p, const std::string& name, Var x) {
  return dense(p.tape(), x, p(name + ".w"), p(name + ".b"));
}

// Encoder-decoder; the code layer and the output are linear.
Var reconstruct(ParamBinder& g, Var x) {
  Tape& t = g.tape();
  for (std::size_t l = 0; l < kBeatGanGeneratorLayers.size(); ++l) {
    x = layer(g, kBeatGanGeneratorLayers[l], x);
    if (l != 3 && l + 1 != kBeatGanGeneratorLayers.size()) x = activate(t, x, kHiddenActivation);
  }
  return x;
}

Var critic(ParamBinder& d, Var x) {
  Tape& t = d.tape();
  for (std::size_t l = 0; l + 1 < kBeatGanDiscriminatorLayers.size(); ++l)
    x = activate(t, layer(d, kBeatGanDiscriminatorLayers[l], x), kHiddenActivation);
  return layer(d, kBeatGanDiscriminatorLayers.back(), x);
}

}  // namespace

BeatGan build_beatgan(std::uint64_t seed) {
  BeatGan m;
  m.seed = seed;
  Rng rng(seed);
  auto add = [&rng](ParamSet& ps, const std::string& name, Index in, Index out) {
    glorot_uniform(ps.add(name + ".w", {in, out}), in, out, rng);
    ps.add(name + ".b", {1, out});
  };
  // Widths come in (in, out) pairs; the code layer repeats its width.
  const auto& gw = kBeatGanGeneratorWidths;
  for (std::size_t l = 0; l < 4; ++l) add(m.generator, kBeatGanGeneratorLayers[l], gw[l], gw[l + 1]);
  for (std::size_t l = 0; l < 4; ++l) add(m.generator, kBeatGanGeneratorLayers[l + 4], gw[l + 5], gw[l + 6]);
  const auto& dw = kBeatGanDiscriminatorWidths;
  for (std::size_t l = 0; l < 4; ++l) add(m.discriminator, kBeatGanDiscriminatorLayers[l], dw[l], dw[l + 1]);
  return m;
}

std::vector<Index> beatgan_generator_widths(const BeatGan& model) {
  std::vector<Index> widths;
  for (std::size_t l = 0; l < kBeatGanGeneratorLayers.size(); ++l) {
    const auto& shape = model.generator.at(std::string(kBeatGanGeneratorLayers[l]) + ".w").shape;
    if (l == 0 || l == 4) widths.push_back(shape[0]);
    widths.push_back(shape[1]);
  }
  return widths;
}

Mat beatgan_windows(std::span<const WindowPair* const> pairs) {
  Mat out(static_cast<Index>(pairs.size()), kBeatGanWidth);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto target = pairs[i]->target();
    for (Index c = 0; c < kChannelCount; ++c)
      out.row(static_cast<Index>(i)).segment(c * kTargetFrames, kTargetFrames) = target.row(c);
  }
  return out;
}

void beatgan_train(BeatGan& model, const Mat& windows, const BeatGanConfig& config,
                   const BeatGanEpochCallback& on_epoch) {
  require_width(windows);
  if (config.epochs < 1 || config.batch_size < 1) throw UsageError("BeatGAN epochs and batch size must be >= 1");
  if (windows.rows() == 0) throw UsageError("BeatGAN needs training windows");
  Rng rng(config.seed);
  Adam opt_g(AdamConfig{config.lr, config.beta1});
  Adam opt_d(AdamConfig{config.lr, config.beta1});
  std::vector<Index> order(static_cast<std::size_t>(windows.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  const Index per_epoch = config.pairs_per_epoch > 0 ? std::min(config.pairs_per_epoch, windows.rows()) : windows.rows();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double g_sum = 0.0, d_sum = 0.0;
    int batches = 0;
    for (Index start = 0; start < per_epoch; start += config.batch_size) {
      const Index b = std::min(config.batch_size, per_epoch - start);
      Mat x(b, kBeatGanWidth);
      for (Index i = 0; i < b; ++i) x.row(i) = windows.row(order[static_cast<std::size_t>(start + i)]);
      {
        Tape t;
        Var real = t.constant_ref(x);
        ParamBinder g(t, std::as_const(model.generator));
        Var recon = reconstruct(g, real);
        ParamBinder d(t, model.discriminator);
        Var loss = weighted_sum(t, bce_logits(t, critic(d, real), 1.0), 1.0,
                                bce_logits(t, critic(d, recon), 0.0), 1.0);
        d_sum += t.value(loss)(0, 0);
        model.discriminator.zero_grad();
        t.backward(loss);
        model.discriminator.clip_grad_norm(config.clip_norm);
        opt_d.step(model.discriminator);
      }
      {
        Tape t;
        Var real = t.constant_ref(x);
        ParamBinder g(t, model.generator);
        Var recon = reconstruct(g, real);
        ParamBinder d(t, std::as_const(model.discriminator));
        Var loss = weighted_sum(t, mse(t, recon, real), 1.0, bce_logits(t, critic(d, recon), 1.0),
                                config.adversarial_weight);
        g_sum += t.value(loss)(0, 0);
        model.generator.zero_grad();
        t.backward(loss);
        model.generator.clip_grad_norm(config.clip_norm);
        opt_g.step(model.generator);
      }
      ++batches;
    }
    if (!std::isfinite(g_sum) || !std::isfinite(d_sum))
      throw NumericError("BeatGAN loss became non-finite at epoch " + std::to_string(epoch));
    if (on_epoch) on_epoch(epoch, g_sum / batches, d_sum / batches);
  }
}

Mat beatgan_reconstruct(const BeatGan& model, const Mat& windows) {
  require_width(windows);
  Tape t;
  ParamBinder g(t, model.generator);
  return t.value(reconstruct(g, t.constant_ref(windows)));
}

Vec beatgan_score(const BeatGan& model, const Mat& windows) {
  const Mat recon = beatgan_reconstruct(model, windows);
  return (recon - windows).array().square().rowwise().mean();
}

}  // namespace dagan
