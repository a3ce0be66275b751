#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "aaa/tensor.hpp"
#include "aaa/unet.hpp"
#include "aaa/volume.hpp"

namespace aaa {

// ---------------------------------------------------------------------------
// Loss

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;  // d loss / d p, same shape as p
};

// Smoothed negative Dice: -(2 sum(p g) + 1) / (sum(p) + sum(g) + 1).
// p holds aorta probabilities, g the {0, 1} reference; shapes must match.
template <typename T>
LossResult<T> smoothed_dice_loss(const Tensor<T>& p, const Tensor<T>& g);

// Same loss against a mask; p is [1, 1, X, Y, Z] or [X, Y, Z] in tensor
// (z-fastest) layout matching the mask dims.
template <typename T>
LossResult<T> smoothed_dice_loss(const Tensor<T>& p, const MaskVolume& g);

// Loss on the aorta channel of a [1, 2, X, Y, Z] probability map. The
// returned gradient has the probability map's shape (zero for channel 0).
template <typename T>
LossResult<T> dice_loss_on_probabilities(const Tensor<T>& probabilities,
                                         const Tensor<T>& target);

// Mask as a [1, 1, X, Y, Z] tensor of zeros and ones.
template <typename T>
Tensor<T> mask_to_tensor(const MaskVolume& mask);

// ---------------------------------------------------------------------------
// RMSprop

struct RmspropOptions {
  double learning_rate = 1e-4;
  double rho = 0.9;
  double eps = 1e-7;
};

template <typename T>
struct RmspropState {
  RmspropOptions options;
  std::vector<Tensor<T>> accumulators;  // aligned with parameters
};

// v <- rho v + (1 - rho) g^2;  w <- w - lr g / (sqrt(v) + eps).
// Accumulators are created (zero) on first use.
template <typename T>
void rmsprop_step(std::vector<NamedTensor<T>>& params,
                  const std::vector<Tensor<T>>& grads, RmspropState<T>& state);

// ---------------------------------------------------------------------------
// Training loop

struct TrainingExample {
  std::string id;
  Tensor<float> input;   // normalized intensities [1, 1, X, Y, Z]
  Tensor<float> target;  // aorta indicator [1, 1, X, Y, Z]
};

TrainingExample make_example(std::string id, const StudyVolume& volume,
                             const MaskVolume& mask, const UNetConfig& config);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainOptions {
  int epochs = 100;
  std::uint64_t seed = 0;
  RmspropOptions optimizer;
  int threads = 1;  // validation fan-out
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  WeightStore<float> best;
  int best_epoch = 0;  // 0 means the initial weights
  std::vector<EpochRecord> history;
};

// Index of the minimal loss; ties resolve to the earliest entry.
std::size_t select_best_epoch(const std::vector<double>& val_losses);

// Mean smoothed Dice loss of inference-mode predictions.
double validation_loss(const WeightStore<float>& weights,
                       const UNetConfig& config,
                       const std::vector<TrainingExample>& examples,
                       int threads = 1);

// Trains with batch size 1, evaluating the inference-mode validation loss
// after every epoch; returns the snapshot with the lowest validation loss.
TrainResult train(const UNetConfig& config, WeightStore<float> weights,
                  const std::vector<TrainingExample>& train_set,
                  const std::vector<TrainingExample>& val_set,
                  const TrainOptions& options);

std::string history_csv(const std::vector<EpochRecord>& history);

// ---------------------------------------------------------------------------
// Cross-validation folds

struct StudyRef {
  std::string study_id;
  std::string patient_id;
};

struct FoldRoles {
  std::vector<int> train;
  int validation = 0;
  std::vector<int> test;
};

// Training folds {n, n+1, n+2} mod k, validation n+3 mod k, the rest test.
FoldRoles fold_roles(int n, int k = 5);

class FoldPlan {
 public:
  FoldPlan() = default;
  FoldPlan(int k, std::map<std::string, int> assignment)
      : k_(k), assignment_(std::move(assignment)) {}

  int k() const { return k_; }
  const std::map<std::string, int>& assignment() const { return assignment_; }
  int fold_of(const std::string& study_id) const;
  std::vector<std::string> studies_in(int fold) const;
  std::vector<std::size_t> fold_sizes() const;
  FoldRoles roles(int n) const { return fold_roles(n, k_); }

  bool operator==(const FoldPlan&) const = default;

 private:
  int k_ = 0;
  std::map<std::string, int> assignment_;
};

// Patients are shuffled by seed, then each (largest first) goes to the fold
// currently holding the fewest studies, so a patient's studies share a fold.
FoldPlan make_folds(const std::vector<StudyRef>& studies, int k,
                    std::uint64_t seed);

}  // namespace aaa
