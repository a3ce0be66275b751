#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "aaa/error.hpp"
#include "aaa/parallel.hpp"
#include "aaa/random.hpp"
#include "aaa/training.hpp"

namespace aaa {

namespace {

using Section = WeightStore<float>::Section;

void store_optimizer(WeightStore<float>& w, const RmspropState<float>& st) {
  w.clear(Section::kOptimizer);
  for (std::size_t k = 0; k < st.accumulators.size(); ++k)
    w.add(Section::kOptimizer, w.params()[k].name + "/rms",
          st.accumulators[k]);
}

// Resumes accumulators stored with the weights, if complete.
void load_optimizer(const WeightStore<float>& w, RmspropState<float>& st) {
  const auto& params = w.params();
  if (w.entries(Section::kOptimizer).size() != params.size()) return;
  for (const auto& p : params)
    if (!w.contains(Section::kOptimizer, p.name + "/rms")) return;
  for (const auto& p : params)
    st.accumulators.push_back(w.get(Section::kOptimizer, p.name + "/rms"));
}

}  // namespace

TrainingExample make_example(std::string id, const StudyVolume& volume,
                             const MaskVolume& mask, const UNetConfig& config) {
  if (volume.dims != mask.dims)
    throw DataError("study " + id + ": volume and mask dims differ");
  return {std::move(id), normalize_intensities(volume, config),
          mask_to_tensor<float>(mask)};
}

std::size_t select_best_epoch(const std::vector<double>& val_losses) {
  if (val_losses.empty())
    throw std::invalid_argument("select_best_epoch: no losses");
  std::size_t best = 0;
  for (std::size_t i = 1; i < val_losses.size(); ++i)
    if (val_losses[i] < val_losses[best]) best = i;
  return best;
}

double validation_loss(const WeightStore<float>& weights,
                       const UNetConfig& config,
                       const std::vector<TrainingExample>& examples,
                       int threads) {
  if (examples.empty()) throw std::invalid_argument("empty validation set");
  std::vector<double> losses(examples.size());
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    Tensor<float> prob = infer(weights, config, examples[i].input);
    losses[i] = dice_loss_on_probabilities(prob, examples[i].target).loss;
  });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(losses.size());
}

TrainResult train(const UNetConfig& config, WeightStore<float> weights,
                  const std::vector<TrainingExample>& train_set,
                  const std::vector<TrainingExample>& val_set,
                  const TrainOptions& options) {
  if (train_set.empty()) throw std::invalid_argument("empty training set");
  if (val_set.empty()) throw std::invalid_argument("empty validation set");
  if (options.epochs < 0) throw std::invalid_argument("epochs must be >= 0");

  RmspropState<float> opt{options.optimizer, {}};
  load_optimizer(weights, opt);

  TrainResult result;
  result.best = weights;
  double best_val = 0.0;

  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler(mix_seed(options.seed, static_cast<std::uint64_t>(epoch)));
    shuffler.shuffle(order.begin(), order.end());

    double train_sum = 0.0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const TrainingExample& ex = train_set[order[step]];
      const std::uint64_t drop_seed = mix_seed(
          options.seed ^ 0x5deece66dULL,
          static_cast<std::uint64_t>(epoch) * 1000003ULL + step);
      ForwardTape<float> tape;
      Tensor<float> prob =
          forward(weights, config, ex.input, Mode::kTrain, drop_seed, &tape);
      LossResult<float> loss = dice_loss_on_probabilities(prob, ex.target);
      if (!std::isfinite(loss.loss))
        throw NumericError("non-finite training loss in epoch " +
                           std::to_string(epoch) + " (study " + ex.id + ")");
      train_sum += loss.loss;
      std::vector<Tensor<float>> grads =
          backward(weights, config, tape, loss.grad);
      rmsprop_step(weights.params(), grads, opt);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_sum / static_cast<double>(order.size());
    rec.val_loss = validation_loss(weights, config, val_set, options.threads);
    if (!std::isfinite(rec.val_loss))
      throw NumericError("non-finite validation loss in epoch " +
                         std::to_string(epoch));
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);

    // Earlier epoch wins ties.
    if (result.best_epoch == 0 || rec.val_loss < best_val) {
      best_val = rec.val_loss;
      result.best_epoch = epoch;
      result.best = weights;
      store_optimizer(result.best, opt);
    }
  }
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_loss,val_loss\n";
  for (const auto& r : history)
    os << r.epoch << ',' << r.train_loss << ',' << r.val_loss << '\n';
  return os.str();
}

}  // namespace aaa
