#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "dataset.hpp"

namespace gridplan {

struct ModelConfig {
  int past = 20;                 // plan rows before the ego waypoint
  int future = 20;               // plan rows from the ego waypoint on
  int crop_side = 400;           // L
  double crop_resolution = 2.0;  // D, pixels per meter
  int horizon = 10;              // decoded waypoints
  int num_modes = 12;            // K, discrete latent modes
  int plan_embed = 128;          // h_g width
  int scene_embed = 256;         // h_s width
  int gru_hidden = 64;
  int lstm_hidden = 32;
  double lambda_mse = 1.0;       // weight of the MSE term in the loss

  int plan_rows() const { return past + future; }
};

std::string model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const std::string& text);

class CvaeModel {
 public:
  explicit CvaeModel(ModelConfig cfg);

  // Creates every parameter with Xavier-uniform weights (zero biases) in a
  // fixed order, so a seed fully determines the model.
  void init(uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

  // Graph builders. With train=false parameters enter the tape as constants.
  ad::Var encode_plan(ad::Tape& t, const PlanGraph& plan, bool train);
  ad::Var encode_scene(ad::Tape& t, const std::vector<double>& scene_tensor,
                       bool train);
  ad::Var prior_probs(ad::Tape& t, ad::Var hg, ad::Var hs, bool train);
  ad::Var recognition_probs(ad::Tape& t, ad::Var hg, ad::Var hs,
                            const Trajectory& gt, bool train);

  struct DecodeOut {
    std::vector<ad::Var> mean;       // horizon entries, each {2}
    std::vector<ad::Var> log_sigma;  // {2}
    std::vector<ad::Var> rho_raw;    // {1}
  };
  DecodeOut decode(ad::Tape& t, ad::Var hg, ad::Var hs, int mode, bool train);

  struct LossParts {
    ad::Var total, recon, kl, mse;
  };
  // Full training graph for one sample: exact marginalization over the
  // K modes with recognition weights, plus KL(q||p) and an MSE term on the
  // q-weighted mean trajectory.
  LossParts loss_graph(ad::Tape& t, const Sample& s);

  // Deterministic inference: decode the argmax prior mode (smaller index on
  // ties).
  Trajectory infer(const Sample& s);
  Trajectory infer_mode(const Sample& s, int mode);
  ad::Categorical prior(const Sample& s);

  void save(const std::string& path) const;
  static CvaeModel load(const std::string& path);

 private:
  ad::Var bind(ad::Tape& t, const std::string& name, bool train);
  ad::GruVars gru_vars(ad::Tape& t, bool train);
  ad::LstmVars lstm_vars(ad::Tape& t, const std::string& prefix, bool train);

  ModelConfig cfg_;
  ad::ParamStore params_;
};

struct TrainOptions {
  int epochs = 10;
  int batch_size = 8;
  uint64_t seed = 1;
  ad::AdamConfig adam;
  double clip_norm = 5.0;      // global gradient-norm clip, <= 0 disables
  std::string checkpoint_dir;  // per-epoch checkpoints when nonempty
  int keep_last = 3;           // older epoch checkpoints are deleted
  std::string loss_csv;        // per-epoch loss log when nonempty
  bool verbose = false;
};

struct TrainStats {
  std::vector<double> epoch_total, epoch_recon, epoch_kl, epoch_mse;
};

// Mini-batch Adam over the whole dataset. Throws std::runtime_error naming
// the epoch and batch if the loss goes non-finite.
TrainStats train_model(CvaeModel& model, const Dataset& data,
                       const TrainOptions& opt);

}  // namespace gridplan
