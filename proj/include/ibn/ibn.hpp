#pragma once

// Everything except the HTTP layer, which pulls in httplib.

#include "ibn/attention.hpp"
#include "ibn/autograd.hpp"
#include "ibn/errors.hpp"
#include "ibn/gradient_suite.hpp"
#include "ibn/nn/activation.hpp"
#include "ibn/nn/layers.hpp"
#include "ibn/nn/optimizer.hpp"
#include "ibn/pipeline/corpus.hpp"
#include "ibn/pipeline/inference.hpp"
#include "ibn/pipeline/intent.hpp"
#include "ibn/pipeline/model.hpp"
#include "ibn/pipeline/training.hpp"
#include "ibn/rng.hpp"
#include "ibn/service/config.hpp"
#include "ibn/service/intent_service.hpp"
#include "ibn/service/inventory.hpp"
#include "ibn/service/lifecycle.hpp"
#include "ibn/service/record.hpp"
#include "ibn/service/registry.hpp"
#include "ibn/service/store.hpp"
#include "ibn/tensor.hpp"
#include "ibn/tokenizer/document.hpp"
#include "ibn/tokenizer/text.hpp"
#include "ibn/tokenizer/vocabulary.hpp"
