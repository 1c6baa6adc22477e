#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "xtra/clustering.hpp"
#include "xtra/corpus.hpp"
#include "xtra/model.hpp"
#include "xtra/objectives.hpp"

namespace xtra {

struct TrainConfig {
  int epochs = 800;
  double lr = 0.002;
  double lr_decay_factor = 0.5;
  int lr_decay_every = 250;
  int batch_size = 64;
  std::uint64_t seed = 1;
  double lambda1 = 80.0;
  double lambda2 = 5.0;
  double lambda3 = 7.0;
  double grad_clip_norm = 5.0;
  bool allow_resample = true;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  LossBreakdown mean_loss;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

// One batch = row indices into the two per-language index lists.
struct Batch {
  std::vector<int> l1;  // indices into n1
  std::vector<int> l2;  // indices into n2
};

// Language-balanced batches for one epoch: the longer language is shuffled
// and consumed exactly once; the shorter one is resampled with replacement.
// A final shorter batch stays balanced at reduced size.
std::vector<Batch> make_balanced_batches(int n1, int n2, int batch_size,
                                         std::uint64_t seed, int epoch,
                                         bool allow_resample = true);

double lr_at(const TrainConfig& config, int epoch);

// Everything train() needs besides the model: vectorized corpora, external
// embeddings, and the cluster-derived prior.
struct TrainData {
  const BowMatrix* bow[2] = {nullptr, nullptr};
  const EmbeddingTable* embeddings = nullptr;
  const ClusterModel* clusters = nullptr;
  const PriorParams* prior = nullptr;
};

TrainLog train(ModelState& state, const TrainData& data,
               const TrainConfig& config);

void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

void save_train_log(const TrainLog& log, const std::filesystem::path& path);

}  // namespace xtra
