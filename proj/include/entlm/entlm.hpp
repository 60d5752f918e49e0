#pragma once

#include "entlm/corpus.hpp"
#include "entlm/embedding.hpp"
#include "entlm/error.hpp"
#include "entlm/evalsuite.hpp"
#include "entlm/generate.hpp"
#include "entlm/lm/checkpoint.hpp"
#include "entlm/lm/config.hpp"
#include "entlm/lm/grad_check.hpp"
#include "entlm/lm/train.hpp"
#include "entlm/lm/transformer.hpp"
#include "entlm/ner.hpp"
#include "entlm/pipeline.hpp"
#include "entlm/plot.hpp"
#include "entlm/retrieval.hpp"
#include "entlm/run_config.hpp"
#include "entlm/serializer.hpp"
#include "entlm/special_tokens.hpp"
#include "entlm/synthetic.hpp"
#include "entlm/tokenizer.hpp"
#include "entlm/types.hpp"
#include "entlm/util.hpp"
