#pragma once

#include <vector>

#include "autoad/nn/tensor.hpp"

namespace autoad::nn {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWConfig config);

  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  void zero_grad();
  void step();  // only trainable parameters are updated

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  AdamWConfig config_;
  long step_count_ = 0;
};

// Linear warm-up into cosine decay; returns the lr for 0-based `step`.
double cosine_warmup_lr(double base_lr, long step, long total_steps,
                        long warmup_steps);

}  // namespace autoad::nn
