#pragma once

#include <Eigen/Dense>

#include "v2s/error.hpp"

namespace v2s {

// One-hot code selecting one of S enrolled speakers. Stored as (index, count);
// entries() materializes the indicator vector.
class SpeakerCode {
 public:
  SpeakerCode(int index, int count) : index_(index), count_(count) {
    if (count < 1) throw ValidationError("speaker count must be >= 1");
    if (index < 0 || index >= count)
      throw ValidationError("speaker index " + std::to_string(index) + " out of range [0, " +
                            std::to_string(count) + ")");
  }

  int index() const { return index_; }
  int count() const { return count_; }

  Eigen::VectorXd entries() const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(count_);
    v(index_) = 1.0;
    return v;
  }

 private:
  int index_;
  int count_;
};

inline SpeakerCode one_hot(int speaker, int count) { return SpeakerCode(speaker, count); }

}  // namespace v2s
