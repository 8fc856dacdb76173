#pragma once

#include "kvwe/common.hpp"
#include "kvwe/embed_store.hpp"
#include "kvwe/evaluator.hpp"
#include "kvwe/exporter.hpp"
#include "kvwe/lexicon.hpp"
#include "kvwe/pipeline.hpp"
#include "kvwe/projector.hpp"
