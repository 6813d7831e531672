#pragma once

#include "opdial/corpus_io.hpp"
#include "opdial/decoding.hpp"
#include "opdial/distractors.hpp"
#include "opdial/error.hpp"
#include "opdial/metrics.hpp"
#include "opdial/pipeline.hpp"
#include "opdial/process.hpp"
#include "opdial/profile.hpp"
#include "opdial/resolution.hpp"
#include "opdial/scorer.hpp"
#include "opdial/sentiment.hpp"
#include "opdial/sequence.hpp"
#include "opdial/split.hpp"
#include "opdial/stats.hpp"
#include "opdial/string_metrics.hpp"
#include "opdial/text.hpp"
#include "opdial/tokenizer.hpp"
#include "opdial/types.hpp"
