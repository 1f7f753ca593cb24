#include "cvae.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "rng.hpp"

namespace gridplan {

using ad::Tape;
using ad::Tensor;
using ad::Var;

std::string model_config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["past"] = c.past;
  j["future"] = c.future;
  j["crop_side"] = c.crop_side;
  j["crop_resolution"] = c.crop_resolution;
  j["horizon"] = c.horizon;
  j["num_modes"] = c.num_modes;
  j["plan_embed"] = c.plan_embed;
  j["scene_embed"] = c.scene_embed;
  j["gru_hidden"] = c.gru_hidden;
  j["lstm_hidden"] = c.lstm_hidden;
  j["lambda_mse"] = c.lambda_mse;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ModelConfig c;
  c.past = j.value("past", c.past);
  c.future = j.value("future", c.future);
  c.crop_side = j.value("crop_side", c.crop_side);
  c.crop_resolution = j.value("crop_resolution", c.crop_resolution);
  c.horizon = j.value("horizon", c.horizon);
  c.num_modes = j.value("num_modes", c.num_modes);
  c.plan_embed = j.value("plan_embed", c.plan_embed);
  c.scene_embed = j.value("scene_embed", c.scene_embed);
  c.gru_hidden = j.value("gru_hidden", c.gru_hidden);
  c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
  c.lambda_mse = j.value("lambda_mse", c.lambda_mse);
  return c;
}

namespace {

constexpr int kSceneChannels[] = {3, 8, 16, 32, 64, 64};
constexpr int kSceneConvs = 5;

int conv_out(int s) { return (s + 2 - 3) / 2 + 1; }  // 3x3, stride 2, pad 1

int scene_flat(const ModelConfig& c) {
  int s = c.crop_side;
  for (int i = 0; i < kSceneConvs; ++i) s = conv_out(s);
  return s * s * kSceneChannels[kSceneConvs];
}

Tensor xavier(Rng& rng, std::vector<size_t> shape, size_t fan_in,
              size_t fan_out) {
  Tensor t(shape);
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& x : t.v) x = rng.uniform(-a, a);
  return t;
}

}  // namespace

CvaeModel::CvaeModel(ModelConfig cfg) : cfg_(cfg) {
  if (cfg_.horizon < 1 || cfg_.num_modes < 1 || cfg_.plan_rows() < 1)
    throw std::invalid_argument("ModelConfig: non-positive dimension");
}

void CvaeModel::init(uint64_t seed) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  auto dense = [&](const std::string& name, size_t out, size_t in) {
    params_.add(name + ".w", xavier(rng, {out, in}, in, out));
    params_.add(name + ".b", Tensor({out}));
  };

  // plan encoder: residual self-attention over the (rows,3) plan matrix,
  // then a dense projection of the flattened result
  for (const char* n : {"plan.wq", "plan.wk", "plan.wv"})
    params_.add(n, xavier(rng, {3, 3}, 3, 3));
  dense("plan.fc1", cfg_.plan_embed, static_cast<size_t>(cfg_.plan_rows()) * 3);
  dense("plan.fc2", cfg_.plan_embed, cfg_.plan_embed);

  // scene encoder: five 3x3 stride-2 convolutions, then a dense projection
  for (int i = 0; i < kSceneConvs; ++i) {
    size_t ci = kSceneChannels[i], co = kSceneChannels[i + 1];
    params_.add("scene.conv" + std::to_string(i) + ".w",
                xavier(rng, {3, 3, ci, co}, 9 * ci, 9 * co));
    params_.add("scene.conv" + std::to_string(i) + ".b", Tensor({co}));
  }
  dense("scene.fc", cfg_.scene_embed, scene_flat(cfg_));

  const size_t ctx = cfg_.plan_embed + cfg_.scene_embed;
  dense("prior.fc", cfg_.num_modes, ctx);

  // recognition: bidirectional LSTM over the ground-truth waypoints
  const size_t lin = 2 + cfg_.lstm_hidden;
  for (const char* dir : {"recog.fwd", "recog.bwd"})
    for (const char* gate : {"wi", "wf", "wo", "wg"}) {
      params_.add(std::string(dir) + "." + gate,
                  xavier(rng, {static_cast<size_t>(cfg_.lstm_hidden), lin},
                         lin, cfg_.lstm_hidden));
      std::string bname = std::string(dir) + ".b" + (gate + 1);
      params_.add(bname, Tensor({static_cast<size_t>(cfg_.lstm_hidden)}));
    }
  dense("recog.fc", cfg_.num_modes, ctx + 2 * cfg_.lstm_hidden);

  // decoder: dense init from [h_g; h_s; onehot(z)], GRU unrolled over the
  // horizon with the previous mean and onehot(z) fed back, five-value
  // Gaussian head. Re-injecting the mode at every step keeps the latent
  // conditioning alive even when the init tanh saturates.
  dense("dec.init", cfg_.gru_hidden, ctx + cfg_.num_modes);
  const size_t gin = 2 + cfg_.num_modes + cfg_.gru_hidden;
  for (const char* gate : {"z", "r", "h"}) {
    params_.add(std::string("dec.gru.w") + gate,
                xavier(rng, {static_cast<size_t>(cfg_.gru_hidden), gin}, gin,
                       cfg_.gru_hidden));
    params_.add(std::string("dec.gru.b") + gate,
                Tensor({static_cast<size_t>(cfg_.gru_hidden)}));
  }
  dense("dec.head", 5, cfg_.gru_hidden);
}

Var CvaeModel::bind(Tape& t, const std::string& name, bool train) {
  ad::Parameter& p = params_.get(name);
  return train ? t.param(p) : t.leaf(p.value);
}

ad::GruVars CvaeModel::gru_vars(Tape& t, bool train) {
  return {bind(t, "dec.gru.wz", train), bind(t, "dec.gru.bz", train),
          bind(t, "dec.gru.wr", train), bind(t, "dec.gru.br", train),
          bind(t, "dec.gru.wh", train), bind(t, "dec.gru.bh", train)};
}

ad::LstmVars CvaeModel::lstm_vars(Tape& t, const std::string& prefix,
                                  bool train) {
  return {bind(t, prefix + ".wi", train), bind(t, prefix + ".bi", train),
          bind(t, prefix + ".wf", train), bind(t, prefix + ".bf", train),
          bind(t, prefix + ".wo", train), bind(t, prefix + ".bo", train),
          bind(t, prefix + ".wg", train), bind(t, prefix + ".bg", train)};
}

Var CvaeModel::encode_plan(Tape& t, const PlanGraph& plan, bool train) {
  const size_t rows = plan.rows.size();
  if (rows != static_cast<size_t>(cfg_.plan_rows()))
    throw std::invalid_argument("encode_plan: plan row count mismatch");
  Tensor m({rows, 3});
  for (size_t i = 0; i < rows; ++i) {
    m.v[3 * i + 0] = plan.rows[i].px;
    m.v[3 * i + 1] = plan.rows[i].py;
    m.v[3 * i + 2] = plan.rows[i].f;
  }
  Var att = ad::attention(t, t.leaf(m), bind(t, "plan.wq", train),
                          bind(t, "plan.wk", train), bind(t, "plan.wv", train));
  Var flat = t.reshape(att, {rows * 3});
  Var h = t.relu(t.linear(bind(t, "plan.fc1.w", train), flat,
                          bind(t, "plan.fc1.b", train)));
  return t.relu(t.linear(bind(t, "plan.fc2.w", train), h,
                         bind(t, "plan.fc2.b", train)));
}

Var CvaeModel::encode_scene(Tape& t, const std::vector<double>& scene_tensor,
                            bool train) {
  const size_t L = cfg_.crop_side;
  if (scene_tensor.size() != L * L * 3)
    throw std::invalid_argument("encode_scene: tensor size mismatch");
  Tensor x({L, L, 3});
  x.v = scene_tensor;
  Var h = t.leaf(x);
  for (int i = 0; i < kSceneConvs; ++i) {
    std::string n = "scene.conv" + std::to_string(i);
    h = t.relu(t.conv2d(h, bind(t, n + ".w", train), bind(t, n + ".b", train),
                        2, 1));
  }
  Var flat = t.reshape(h, {static_cast<size_t>(scene_flat(cfg_))});
  return t.relu(t.linear(bind(t, "scene.fc.w", train), flat,
                         bind(t, "scene.fc.b", train)));
}

Var CvaeModel::prior_probs(Tape& t, Var hg, Var hs, bool train) {
  Var logits = t.linear(bind(t, "prior.fc.w", train), t.concat({hg, hs}),
                        bind(t, "prior.fc.b", train));
  return t.softmax_rows(logits);
}

Var CvaeModel::recognition_probs(Tape& t, Var hg, Var hs, const Trajectory& gt,
                                 bool train) {
  if (gt.waypoints.size() != static_cast<size_t>(cfg_.horizon))
    throw std::invalid_argument("recognition: horizon mismatch");
  std::vector<Var> seq;
  for (const auto& wp : gt.waypoints)
    seq.push_back(t.leaf(Tensor::vec({wp.x, wp.y})));
  Var hy = ad::bilstm_encode(t, seq, lstm_vars(t, "recog.fwd", train),
                             lstm_vars(t, "recog.bwd", train),
                             static_cast<size_t>(cfg_.lstm_hidden));
  Var logits = t.linear(bind(t, "recog.fc.w", train), t.concat({hg, hs, hy}),
                        bind(t, "recog.fc.b", train));
  return t.softmax_rows(logits);
}

CvaeModel::DecodeOut CvaeModel::decode(Tape& t, Var hg, Var hs, int mode,
                                       bool train) {
  if (mode < 0 || mode >= cfg_.num_modes)
    throw std::invalid_argument("decode: mode out of range");
  Tensor onehot({static_cast<size_t>(cfg_.num_modes)});
  onehot.v[static_cast<size_t>(mode)] = 1.0;
  Var z1 = t.leaf(onehot);
  Var h = t.tanh(t.linear(bind(t, "dec.init.w", train),
                          t.concat({hg, hs, z1}),
                          bind(t, "dec.init.b", train)));
  ad::GruVars gru = gru_vars(t, train);
  Var head_w = bind(t, "dec.head.w", train);
  Var head_b = bind(t, "dec.head.b", train);
  Var x = t.leaf(Tensor({2}));
  DecodeOut out;
  for (int i = 0; i < cfg_.horizon; ++i) {
    h = ad::gru_step(t, h, t.concat({x, z1}), gru);
    Var o = t.linear(head_w, h, head_b);
    // The head emits a per-step displacement; the mean is its running sum.
    // Each step only spans the waypoint spacing, which keeps head weights
    // small even though the horizon reaches tens of meters.
    Var mean = t.add(x, t.slice(o, 0, 2));
    out.mean.push_back(mean);
    out.log_sigma.push_back(t.slice(o, 2, 2));
    out.rho_raw.push_back(t.slice(o, 4, 1));
    x = mean;  // self-feed the previous mean
  }
  return out;
}

CvaeModel::LossParts CvaeModel::loss_graph(Tape& t, const Sample& s) {
  Var hg = encode_plan(t, s.plan, true);
  Var hs = encode_scene(t, s.scene().tensor, true);
  Var p = prior_probs(t, hg, hs, true);
  Var q = recognition_probs(t, hg, hs, s.gt, true);
  Var kl = ad::categorical_kl_var(t, q, p);

  const int H = cfg_.horizon;
  Var recon, mse;
  std::vector<Var> yhat(H);  // q-weighted means
  for (int z = 0; z < cfg_.num_modes; ++z) {
    DecodeOut d = decode(t, hg, hs, z, true);
    Var qz = t.pick(q, static_cast<size_t>(z));
    Var qz2 = t.concat({qz, qz});
    Var nll;
    for (int i = 0; i < H; ++i) {
      double y[2] = {s.gt.waypoints[i].x, s.gt.waypoints[i].y};
      Var term = ad::bvn_nll_var(t, y, d.mean[i], d.log_sigma[i], d.rho_raw[i]);
      nll = nll.valid() ? t.add(nll, term) : term;
      Var wmean = t.mul(qz2, d.mean[i]);
      yhat[i] = yhat[i].valid() ? t.add(yhat[i], wmean) : wmean;
    }
    Var wnll = t.mul(qz, nll);
    recon = recon.valid() ? t.add(recon, wnll) : wnll;
  }
  for (int i = 0; i < H; ++i) {
    Var d = t.sub(yhat[i],
                  t.leaf(Tensor::vec({s.gt.waypoints[i].x,
                                      s.gt.waypoints[i].y})));
    Var sq = t.sum(t.mul(d, d));
    mse = mse.valid() ? t.add(mse, sq) : sq;
  }
  mse = t.scale(mse, 1.0 / H);

  LossParts parts;
  parts.recon = recon;
  parts.kl = kl;
  parts.mse = mse;
  parts.total = t.add(recon, t.add(kl, t.scale(mse, cfg_.lambda_mse)));
  return parts;
}

ad::Categorical CvaeModel::prior(const Sample& s) {
  Tape t;
  Var hg = encode_plan(t, s.plan, false);
  Var hs = encode_scene(t, s.scene().tensor, false);
  Var p = prior_probs(t, hg, hs, false);
  return {p.val().v};
}

Trajectory CvaeModel::infer_mode(const Sample& s, int mode) {
  Tape t;
  Var hg = encode_plan(t, s.plan, false);
  Var hs = encode_scene(t, s.scene().tensor, false);
  DecodeOut d = decode(t, hg, hs, mode, false);
  Trajectory out;
  for (const Var& m : d.mean)
    out.waypoints.push_back({m.val().v[0], m.val().v[1]});
  return out;
}

Trajectory CvaeModel::infer(const Sample& s) {
  ad::Categorical p = prior(s);
  size_t best = 0;
  for (size_t k = 1; k < p.probs.size(); ++k)
    if (p.probs[k] > p.probs[best]) best = k;  // smaller index wins ties
  return infer_mode(s, static_cast<int>(best));
}

void CvaeModel::save(const std::string& path) const {
  ad::save_checkpoint(path, params_, model_config_to_json(cfg_));
}

CvaeModel CvaeModel::load(const std::string& path) {
  ad::ParamStore probe;
  std::string config = ad::load_checkpoint(path, probe);
  CvaeModel model(model_config_from_json(config));
  model.init(0);
  ad::load_checkpoint(path, model.params_);
  return model;
}

// --- training ---------------------------------------------------------------

TrainStats train_model(CvaeModel& model, const Dataset& data,
                       const TrainOptions& opt) {
  if (data.samples.empty())
    throw std::invalid_argument("train_model: empty dataset");
  if (opt.batch_size < 1 || opt.epochs < 1)
    throw std::invalid_argument("train_model: bad options");
  namespace fs = std::filesystem;

  std::ofstream csv;
  if (!opt.loss_csv.empty()) {
    csv.open(opt.loss_csv);
    csv << "epoch,total,recon,kl,mse\n";
  }

  TrainStats stats;
  std::vector<size_t> order(data.samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  int64_t step = 0;

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    Rng shuffle_rng(opt.seed * 7919 + epoch);
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.integer(i)]);

    double etotal = 0.0, erecon = 0.0, ekl = 0.0, emse = 0.0;
    size_t pos = 0;
    int batch_idx = 0;
    while (pos < order.size()) {
      size_t n = std::min<size_t>(opt.batch_size, order.size() - pos);
      model.params().zero_grads();
      double btotal = 0.0;
      for (size_t b = 0; b < n; ++b) {
        const Sample& s = data.samples[order[pos + b]];
        ad::Tape tape;
        CvaeModel::LossParts parts = model.loss_graph(tape, s);
        tape.backward(parts.total);
        btotal += parts.total.val().v[0];
        etotal += parts.total.val().v[0];
        erecon += parts.recon.val().v[0];
        ekl += parts.kl.val().v[0];
        emse += parts.mse.val().v[0];
      }
      if (!std::isfinite(btotal))
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch) + " batch " +
                                 std::to_string(batch_idx));
      const double inv = 1.0 / static_cast<double>(n);
      double norm_sq = 0.0;
      for (ad::Parameter* p : model.params().all())
        for (double& g : p->grad.v) {
          g *= inv;
          norm_sq += g * g;
        }
      if (opt.clip_norm > 0.0 && norm_sq > opt.clip_norm * opt.clip_norm) {
        const double scale = opt.clip_norm / std::sqrt(norm_sq);
        for (ad::Parameter* p : model.params().all())
          for (double& g : p->grad.v) g *= scale;
      }
      ad::adam_step(model.params().all(), opt.adam, ++step);
      pos += n;
      ++batch_idx;
    }

    const double m = static_cast<double>(data.samples.size());
    stats.epoch_total.push_back(etotal / m);
    stats.epoch_recon.push_back(erecon / m);
    stats.epoch_kl.push_back(ekl / m);
    stats.epoch_mse.push_back(emse / m);
    if (csv.is_open())
      csv << epoch << ',' << etotal / m << ',' << erecon / m << ',' << ekl / m
          << ',' << emse / m << '\n';
    if (opt.verbose)
      std::printf("epoch %d loss %.6f\n", epoch, etotal / m);

    if (!opt.checkpoint_dir.empty()) {
      fs::create_directories(opt.checkpoint_dir);
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04d.tnv2", epoch);
      model.save((fs::path(opt.checkpoint_dir) / name).string());
      model.save((fs::path(opt.checkpoint_dir) / "latest.tnv2").string());
      if (opt.keep_last > 0 && epoch >= opt.keep_last) {
        char old[32];
        std::snprintf(old, sizeof(old), "epoch_%04d.tnv2",
                      epoch - opt.keep_last);
        fs::remove(fs::path(opt.checkpoint_dir) / old);
      }
    }
  }
  return stats;
}

}  // namespace gridplan
