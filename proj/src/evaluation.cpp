#include "mmdm/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "mmdm/nn.hpp"
#include "mmdm/optimizer.hpp"

namespace mmdm {

// ---------------------------------------------------------------------------
// Evaluator embedder

EvaluatorEmbedder::EvaluatorEmbedder(Skeleton skeleton, const EvaluatorConfig& config, std::uint64_t seed)
    : skeleton_(std::move(skeleton)),
      config_(config),
      vocab_(Vocabulary::captions()),
      params_(std::make_unique<ad::ParameterSet>()) {
  require(config_.embed_dim >= 1 && config_.hidden >= 1, ErrorKind::InvalidConfig, "evaluator dims must be >= 1");
  const int features = 9 * skeleton_.joint_count();
  stat_mean_ = RowVec::Zero(features);
  stat_scale_ = RowVec::Ones(features);
  std::mt19937_64 rng(seed);
  nn::add_linear(*params_, "motion.fc1", features, config_.hidden, rng);
  nn::add_linear(*params_, "motion.fc2", config_.hidden, config_.embed_dim, rng);
  params_->add("text.embed", nn::normal_init(vocab_.size(), config_.hidden, 1.0, rng));
  nn::add_linear(*params_, "text.fc", config_.hidden, config_.embed_dim, rng);
}

RowVec EvaluatorEmbedder::motion_statistics(const Mat& frames) const {
  const Mat pos = forward_kinematics(skeleton_, frames);
  const Eigen::Index n = pos.rows();
  require(n >= 2, ErrorKind::InvalidInput, "evaluator needs at least 2 frames");
  const RowVec mean = pos.colwise().mean();
  const RowVec spread = ((pos.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
  const RowVec speed = (pos.bottomRows(n - 1) - pos.topRows(n - 1)).cwiseAbs().colwise().mean();
  RowVec out(mean.size() * 3);
  out << mean, spread, speed;
  return out;
}

void EvaluatorEmbedder::set_normalization(RowVec mean, RowVec scale) {
  require(mean.size() == stat_mean_.size() && scale.size() == stat_scale_.size(), ErrorKind::InvalidInput,
          "normalization width mismatch");
  stat_mean_ = std::move(mean);
  stat_scale_ = std::move(scale);
}

ad::Var EvaluatorEmbedder::motion_graph(ad::Graph& g, const Mat& stats) const {
  auto& p = *params_;
  Mat normalized = (stats.rowwise() - stat_mean_).array().rowwise() / stat_scale_.array();
  ad::Var h = ad::gelu(nn::linear(g, p, "motion.fc1", g.constant(std::move(normalized))));
  return nn::linear(g, p, "motion.fc2", h);
}

ad::Var EvaluatorEmbedder::text_graph(ad::Graph& g, const std::vector<std::string>& captions) const {
  auto& p = *params_;
  ad::Var table = nn::param(g, p, "text.embed");
  std::vector<ad::Var> rows;
  for (const auto& c : captions) {
    std::vector<int> ids = vocab_.tokenize(c);
    if (ids.empty()) ids.push_back(Vocabulary::kUnknown);
    rows.push_back(ad::mean_rows(ad::gather_rows(table, ids)));
  }
  return nn::linear(g, p, "text.fc", ad::concat_rows(rows));
}

Mat EvaluatorEmbedder::embed_motions(const std::vector<Mat>& motions) const {
  require(!motions.empty(), ErrorKind::InvalidInput, "no motions to embed");
  Mat stats(static_cast<Eigen::Index>(motions.size()), stat_mean_.size());
  for (std::size_t i = 0; i < motions.size(); ++i) stats.row(i) = motion_statistics(motions[i]);
  ad::Graph g(false);
  return motion_graph(g, stats).value();
}

Mat EvaluatorEmbedder::embed_texts(const std::vector<std::string>& captions) const {
  require(!captions.empty(), ErrorKind::InvalidInput, "no captions to embed");
  ad::Graph g(false);
  return text_graph(g, captions).value();
}

namespace {

// Symmetric InfoNCE over logits −‖t_i − m_j‖²/τ; returns loss and gradients.
double contrastive_loss(const Mat& t, const Mat& m, double tau, Mat& dt, Mat& dm) {
  const Eigen::Index b = t.rows();
  const Vec tn = t.rowwise().squaredNorm();
  const Vec mn = m.rowwise().squaredNorm();
  Mat logits = -((tn.replicate(1, b) + mn.transpose().replicate(b, 1)) - 2.0 * t * m.transpose()) / tau;
  Mat row_p = logits;
  Mat col_p = logits;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const double rmax = logits.row(i).maxCoeff();
    row_p.row(i) = (logits.row(i).array() - rmax).exp();
    const double rs = row_p.row(i).sum();
    row_p.row(i) /= rs;
    loss -= logits(i, i) - rmax - std::log(rs);
    const double cmax = logits.col(i).maxCoeff();
    col_p.col(i) = (logits.col(i).array() - cmax).exp();
    const double cs = col_p.col(i).sum();
    col_p.col(i) /= cs;
    loss -= logits(i, i) - cmax - std::log(cs);
  }
  loss *= 0.5 / static_cast<double>(b);
  Mat grad = (row_p + col_p - 2.0 * Mat::Identity(b, b)) * (0.5 / static_cast<double>(b));
  const Vec row_sum = grad.rowwise().sum();
  const Vec col_sum = grad.colwise().sum().transpose();
  dt = (-2.0 / tau) * (row_sum.asDiagonal() * t - grad * m);
  dm = (2.0 / tau) * (grad.transpose() * t - col_sum.asDiagonal() * m);
  return loss;
}

}  // namespace

EvaluatorEmbedder train_evaluator(const Dataset& data, std::uint64_t seed, const EvaluatorConfig& config) {
  require(data.size() >= 2, ErrorKind::InvalidInput, "evaluator training needs at least 2 motions");
  EvaluatorEmbedder ev(data.skeleton, config, seed);
  Mat stats(static_cast<Eigen::Index>(data.size()), 9 * data.skeleton.joint_count());
  for (std::size_t i = 0; i < data.size(); ++i) stats.row(i) = ev.motion_statistics(data.motions[i].frames);
  const RowVec mean = stats.colwise().mean();
  // 1 cm floor: features that never vary in the data would otherwise turn
  // millimetre deviations into huge embedding offsets.
  constexpr double floor = 0.01;
  const RowVec scale = (stats.rowwise() - mean).array().square().colwise().mean().sqrt().max(floor).matrix();
  ev.set_normalization(mean, scale);

  std::mt19937_64 rng(mix_seed(seed, 1));
  AdamState adam;
  const AdamConfig opt{config.learning_rate, 0.9, 0.999, 1e-8};
  const int batch = std::min<int>(config.batch_size, static_cast<int>(data.size()));
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int step = 0; step < config.steps; ++step) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::string> captions;
    Mat batch_stats(batch, stats.cols());
    for (int k = 0; k < batch; ++k) {
      captions.push_back(data.motions[order[k]].caption);
      batch_stats.row(k) = stats.row(order[k]);
    }
    ev.params().zero_grad();
    ad::Graph g;
    ad::Var t = ev.text_graph(g, captions);
    ad::Var m = ev.motion_graph(g, batch_stats);
    Mat dt, dm;
    contrastive_loss(t.value(), m.value(), config.temperature, dt, dm);
    ad::Var both = ad::concat_rows({t, m});
    Mat seed_grad(2 * batch, dt.cols());
    seed_grad << dt, dm;
    g.backward(both, seed_grad);
    adam_update(ev.params(), adam, opt);
  }

  std::vector<Mat> frames;
  for (const auto& mo : data.motions) frames.push_back(mo.frames);
  const Mat emb = ev.embed_motions(frames);
  const double spread = (emb.rowwise() - emb.colwise().mean()).rowwise().norm().maxCoeff();
  if (!(spread > 1e-6)) throw Error(ErrorKind::TrainingFailure, "evaluator embeddings collapsed to a point");
  return ev;
}

// ---------------------------------------------------------------------------
// Metrics

double compute_fid(const Mat& a, const Mat& b, FidDiagnostics* diagnostics) {
  require(a.cols() == b.cols() && a.rows() >= 2 && b.rows() >= 2, ErrorKind::InvalidInput,
          "fid: need at least 2 samples of equal width");
  require(a.allFinite() && b.allFinite(), ErrorKind::InvalidInput, "fid: non-finite features");
  const Eigen::Index k = a.cols();
  constexpr double ridge = 1e-6;
  auto fit = [&](const Mat& x, RowVec& mu, Eigen::MatrixXd& cov) {
    mu = x.colwise().mean();
    const Mat centered = x.rowwise() - mu;
    cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
    cov += ridge * Eigen::MatrixXd::Identity(k, k);
  };
  RowVec mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  fit(a, mu_a, cov_a);
  fit(b, mu_b, cov_b);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(cov_a);
  const Eigen::VectorXd la = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sqrt_a = ea.eigenvectors() * la.asDiagonal() * ea.eigenvectors().transpose();
  Eigen::MatrixXd prod = sqrt_a * cov_b * sqrt_a;
  prod = 0.5 * (prod + prod.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ep(prod, Eigen::EigenvaluesOnly);
  double trace_sqrt = 0.0;
  double clamped = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double lambda = ep.eigenvalues()(i);
    if (lambda < 0.0) {
      if (lambda < -1e-8) clamped += -lambda;
      continue;
    }
    trace_sqrt += std::sqrt(lambda);
  }
  if (clamped > 0.0) std::cerr << "warning: fid clamped negative eigenvalue mass " << clamped << '\n';
  if (diagnostics) diagnostics->clamped_eigenvalue_mass = clamped;
  const double fid = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt;
  return std::max(0.0, fid);
}

RPrecision r_precision(const Mat& text_embs, const Mat& motion_embs, int pool_size, std::uint64_t seed,
                       const std::vector<int>* groups) {
  const Eigen::Index n = text_embs.rows();
  require(motion_embs.rows() == n && motion_embs.cols() == text_embs.cols(), ErrorKind::InvalidInput,
          "r_precision: embeddings are not aligned pairs");
  require(pool_size >= 1, ErrorKind::InvalidInput, "pool_size must be >= 1");
  require(n >= pool_size, ErrorKind::InvalidInput,
          "r_precision: " + std::to_string(n) + " samples is fewer than pool size " + std::to_string(pool_size));
  std::map<int, std::vector<int>> by_group;
  if (groups) {
    require(static_cast<Eigen::Index>(groups->size()) == n, ErrorKind::InvalidInput, "group labels size mismatch");
    for (Eigen::Index i = 0; i < n; ++i) by_group[(*groups)[i]].push_back(static_cast<int>(i));
    require(static_cast<int>(by_group.size()) >= pool_size, ErrorKind::InvalidInput,
            "r_precision: not enough groups for the distractor pool");
  }
  std::mt19937_64 rng(seed);
  std::array<int, 3> hits{0, 0, 0};
  std::vector<int> others;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<int> distractors;
    if (groups) {
      std::vector<int> keys;
      for (const auto& [gid, members] : by_group)
        if (gid != (*groups)[i]) keys.push_back(gid);
      std::shuffle(keys.begin(), keys.end(), rng);
      for (int k = 0; k < pool_size - 1; ++k) {
        const auto& members = by_group[keys[k]];
        std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
        distractors.push_back(members[pick(rng)]);
      }
    } else {
      others.clear();
      for (Eigen::Index j = 0; j < n; ++j)
        if (j != i) others.push_back(static_cast<int>(j));
      for (int k = 0; k < pool_size - 1; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, others.size() - 1);
        std::swap(others[k], others[pick(rng)]);
        distractors.push_back(others[k]);
      }
    }
    const double d_true = (motion_embs.row(i) - text_embs.row(i)).norm();
    int rank = 0;
    for (int j : distractors) rank += (motion_embs.row(i) - text_embs.row(j)).norm() < d_true ? 1 : 0;
    for (int k = 0; k < 3; ++k) hits[k] += rank <= k ? 1 : 0;
  }
  const double denom = static_cast<double>(n);
  return {hits[0] / denom, hits[1] / denom, hits[2] / denom};
}

double diversity(const Mat& features, int subset_size, std::uint64_t seed, int repeats) {
  require(subset_size >= 1 && repeats >= 1, ErrorKind::InvalidInput, "diversity: subset size and repeats must be >= 1");
  require(2 * static_cast<Eigen::Index>(subset_size) <= features.rows(), ErrorKind::InvalidInput,
          "diversity: need at least 2·S samples");
  std::mt19937_64 rng(seed);
  std::vector<int> idx(features.rows());
  std::iota(idx.begin(), idx.end(), 0);
  double total = 0.0;
  for (int r = 0; r < repeats; ++r) {
    std::shuffle(idx.begin(), idx.end(), rng);
    double sum = 0.0;
    for (int k = 0; k < subset_size; ++k) sum += (features.row(idx[k]) - features.row(idx[subset_size + k])).norm();
    total += sum / subset_size;
  }
  return total / repeats;
}

double multimodality(const std::vector<Mat>& groups) {
  require(!groups.empty(), ErrorKind::InvalidInput, "multimodality: no groups");
  double total = 0.0;
  for (const Mat& g : groups) {
    require(g.rows() >= 2, ErrorKind::InvalidInput, "multimodality: each group needs at least 2 members");
    double sum = 0.0;
    int pairs = 0;
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (Eigen::Index j = i + 1; j < g.rows(); ++j) {
        sum += (g.row(i) - g.row(j)).norm();
        ++pairs;
      }
    total += sum / pairs;
  }
  return total / static_cast<double>(groups.size());
}

double mm_dist(const Mat& text_embs, const Mat& motion_embs) {
  require(text_embs.rows() == motion_embs.rows() && text_embs.cols() == motion_embs.cols() && text_embs.rows() > 0,
          ErrorKind::InvalidInput, "mm_dist: embeddings are not aligned pairs");
  return (text_embs - motion_embs).rowwise().norm().mean();
}

MetricStat summarize(const std::vector<double>& values) {
  require(!values.empty(), ErrorKind::InvalidInput, "summarize: no values");
  MetricStat s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    var /= static_cast<double>(values.size() - 1);
    s.ci95 = 1.96 * std::sqrt(var / static_cast<double>(values.size()));
  }
  return s;
}

namespace {

nlohmann::json stat_json(const MetricStat& s, int repeats) {
  nlohmann::json j{{"mean", s.mean}};
  if (repeats > 1) j["ci95"] = s.ci95;
  return j;
}

MetricStat stat_from(const nlohmann::json& j) { return {j.at("mean").get<double>(), j.value("ci95", 0.0)}; }

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j{{"format", "mmdm-metrics"},
                   {"version", 1},
                   {"repeats", repeats},
                   {"fid", stat_json(fid, repeats)},
                   {"r_precision_top1", stat_json(r_precision_top1, repeats)},
                   {"r_precision_top2", stat_json(r_precision_top2, repeats)},
                   {"r_precision_top3", stat_json(r_precision_top3, repeats)},
                   {"mm_dist", stat_json(mm_dist, repeats)},
                   {"diversity", stat_json(diversity, repeats)}};
  j["multimodality"] = multimodality ? stat_json(*multimodality, repeats) : nlohmann::json(nullptr);
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  try {
    MetricsReport r;
    r.repeats = j.at("repeats").get<int>();
    r.fid = stat_from(j.at("fid"));
    r.r_precision_top1 = stat_from(j.at("r_precision_top1"));
    r.r_precision_top2 = stat_from(j.at("r_precision_top2"));
    r.r_precision_top3 = stat_from(j.at("r_precision_top3"));
    r.mm_dist = stat_from(j.at("mm_dist"));
    r.diversity = stat_from(j.at("diversity"));
    if (j.contains("multimodality") && !j.at("multimodality").is_null()) r.multimodality = stat_from(j.at("multimodality"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidInput, std::string("metrics report: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Generation and the repeated evaluation protocol

Mat generate_motion(const Denoiser& model, const std::string& caption, int length, const NoiseSchedule& schedule,
                    const SamplingConfig& sampling, std::uint64_t seed) {
  require(length >= 1 && length <= model.config().max_length, ErrorKind::InvalidInput,
          "length " + std::to_string(length) + " outside [1, max_length=" + std::to_string(model.config().max_length) +
              "]");
  const TextCondition text = model.text().tokenize(caption);
  std::optional<MaskSpec> mask;
  if (sampling.infer_mask_ratio > 0.0)
    mask = sample_mask(model.config().strategy, model.mask_slots(length), sampling.infer_mask_ratio,
                       mix_seed(seed, 0x3a5c));
  const DenoiseFn fn = [&](const Mat& x, int t, bool conditional) {
    return model.predict(x, t, conditional ? text : TextCondition::null(), mask ? &*mask : nullptr);
  };
  return p_sample_loop(fn, length, model.skeleton().feature_width(), schedule, sampling.guidance, seed);
}

MetricsReport evaluate(const Denoiser* model, const Dataset& data, const EvaluatorEmbedder& evaluator,
                       const SamplingConfig& sampling, const EvalConfig& config) {
  require(config.repeats >= 1, ErrorKind::InvalidConfig, "repeats must be >= 1");
  require(data.size() >= 2, ErrorKind::InvalidInput, "evaluation needs at least 2 motions");
  const NoiseSchedule schedule = make_cosine_schedule(sampling.diffusion_steps);
  std::vector<Mat> gt_frames;
  for (const auto& m : data.motions) gt_frames.push_back(m.frames);
  const Mat gt_embs = evaluator.embed_motions(gt_frames);

  std::vector<double> fid, top1, top2, top3, mmd, div, mm;
  for (int r = 0; r < config.repeats; ++r) {
    const std::uint64_t repeat_seed = mix_seed(config.seed, static_cast<std::uint64_t>(r));
    std::mt19937_64 rng(repeat_seed);
    std::vector<int> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (config.samples > 0 && config.samples < static_cast<int>(idx.size())) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(config.samples);
    }
    std::vector<Mat> motions;
    std::vector<std::string> captions;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const MotionSequence& m = data.motions[idx[k]];
      captions.push_back(m.caption);
      if (model) {
        try {
          motions.push_back(generate_motion(*model, m.caption, m.length(), schedule, sampling,
                                            mix_seed(repeat_seed, k + 1)));
        } catch (const Error& e) {
          throw Error(e.kind(), "repeat " + std::to_string(r) + ", caption '" + m.caption + "': " + e.what());
        }
      } else {
        motions.push_back(m.frames);
      }
    }
    const Mat text = evaluator.embed_texts(captions);
    const Mat gen = evaluator.embed_motions(motions);
    fid.push_back(compute_fid(gt_embs, gen));
    const RPrecision rp = r_precision(text, gen, config.pool_size, mix_seed(repeat_seed, 0x9e37));
    top1.push_back(rp.top1);
    top2.push_back(rp.top2);
    top3.push_back(rp.top3);
    mmd.push_back(mm_dist(text, gen));
    // Small evaluation sets cap the subset at half the sample count.
    const int subset = std::min<int>(config.diversity_subset, static_cast<int>(gen.rows()) / 2);
    div.push_back(diversity(gen, subset, mix_seed(repeat_seed, 0xd1f)));

    if (model && config.mm_prompts > 0 && config.mm_per_prompt >= 2) {
      std::vector<Mat> groups;
      for (int p = 0; p < config.mm_prompts; ++p) {
        std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
        const MotionSequence& m = data.motions[pick(rng)];
        std::vector<Mat> outs;
        for (int s = 0; s < config.mm_per_prompt; ++s)
          outs.push_back(generate_motion(*model, m.caption, m.length(), schedule, sampling,
                                         mix_seed(repeat_seed, 1000003ULL * (p + 1) + s)));
        groups.push_back(evaluator.embed_motions(outs));
      }
      mm.push_back(multimodality(groups));
    }
  }
  MetricsReport report;
  report.repeats = config.repeats;
  report.fid = summarize(fid);
  report.r_precision_top1 = summarize(top1);
  report.r_precision_top2 = summarize(top2);
  report.r_precision_top3 = summarize(top3);
  report.mm_dist = summarize(mmd);
  report.diversity = summarize(div);
  if (!mm.empty()) report.multimodality = summarize(mm);
  return report;
}

}  // namespace mmdm
