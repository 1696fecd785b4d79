#ifndef DUBEVAL_DUBEVAL_HPP
#define DUBEVAL_DUBEVAL_HPP

#include "dubeval/audio.hpp"
#include "dubeval/corpus.hpp"
#include "dubeval/dsp.hpp"
#include "dubeval/error.hpp"
#include "dubeval/eval.hpp"
#include "dubeval/matrix.hpp"
#include "dubeval/metrics.hpp"

#endif  // DUBEVAL_DUBEVAL_HPP
