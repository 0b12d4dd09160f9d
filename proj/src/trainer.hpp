#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "datamodel.hpp"
#include "networks.hpp"
#include "optim.hpp"
#include "pairing.hpp"

namespace mduit {

// Weights ~ N(0, init_std^2) from a generator seeded by (seed, tensor name);
// biases zero; GeM exponent 3. With fan_in set, each weight tensor instead
// uses std sqrt(2 / fan_in), fan_in being its element count over dim 0.
void init_params(ModelParams& params, double init_std, std::uint64_t seed,
                 bool fan_in = false);
ModelParams init_params(const TrainConfig& config);

// Flat for the first epochs_flat epochs, then linear decay: the k-th decay
// epoch (1-based) runs at lr * (1 - k / epochs_decay).
double lr_at(int epoch, const HyperParams& hp);

struct TrainingSet {
  Manifest manifest;
  std::vector<Image> images;  // parallel to manifest.records
};

// Loads every image; all must be image_size x image_size.
TrainingSet load_training_set(const Manifest& manifest, int image_size);

struct Batch {
  int source = 0, target = 0, target_same = 0, source_neg = 0, target_neg = 0;
  std::vector<int> nce_negatives;
};

struct StepMetrics {
  long step = 0;
  int epoch = 0;
  double lr = 0.0;
  std::vector<std::pair<std::string, double>> values;

  double get(const std::string& name) const;
  std::string to_json() const;
};

class Trainer {
 public:
  Trainer(TrainConfig config, const TrainingSet& data);
  // Continues from a checkpoint; the data must match the original run.
  Trainer(Checkpoint checkpoint, const TrainingSet& data);

  const TrainConfig& config() const { return config_; }
  const Model& model() const { return model_; }
  Model& model() { return model_; }
  const Adam& optimizer() const { return adam_; }
  int epoch() const { return epoch_; }
  long step() const { return step_; }
  int total_epochs() const { return config_.hp.total_epochs(); }
  int steps_per_epoch() const;

  // Recomputes all embeddings with the current model, re-pairs sources with
  // targets and re-mines pose positives among reference records.
  void refresh_pairs();
  const std::vector<PairAssignment>& assignments() const { return assignments_; }
  const std::vector<Embedding>& embeddings() const { return bank_; }
  const std::vector<int>& positives_of(int record) const;

  // Samples I_t+, I_s-, I_t- and the contrastive negatives for one step.
  Batch assemble_batch(int source, int target, std::uint64_t seed) const;

  // One discriminator update then one generator-side update.
  StepMetrics train_step(const Batch& batch, double lr);
  // Same loss terms as train_step with no update and no graph.
  StepMetrics evaluate(const Batch& batch) const;

  // refresh_pairs + one pass over the shuffled assignments.
  std::vector<StepMetrics> run_epoch(
      const std::function<void(const StepMetrics&)>& on_step = {});

  void save(const std::filesystem::path& path) const;

  // Re-hash both parameter sides around each half-step and fail if a
  // half-step touched the other side.
  void set_check_isolation(bool on) { check_isolation_ = on; }

 private:
  void check_data() const;
  Image jittered(const Image& image, std::uint64_t seed) const;
  void check_grads(ParamCollection& pc) const;
  StepMetrics forward_losses(const Batch& batch, double lr, bool update);

  TrainConfig config_;
  const TrainingSet* data_;
  Model model_;
  Adam adam_;
  int epoch_ = 0;
  long step_ = 0;
  bool check_isolation_ = false;

  std::vector<Embedding> bank_;
  std::vector<PairAssignment> assignments_;
  std::vector<std::vector<int>> positives_;
};

struct FitOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume_from;
  // Stop once this many epochs are complete (simulates an interruption).
  std::optional<int> stop_after_epoch;
  std::function<void(const StepMetrics&)> on_step;
};

// Writes config.txt, metrics.jsonl, epoch checkpoints and final.ckpt under
// out_dir; returns the path of the last checkpoint written.
std::filesystem::path fit(const Manifest& manifest, const TrainConfig& config,
                          const FitOptions& options);

std::uint64_t params_checksum(const ParamCollection& pc);

}  // namespace mduit
