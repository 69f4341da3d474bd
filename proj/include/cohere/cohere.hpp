#pragma once

#include "cohere/common.hpp"
#include "cohere/corpus.hpp"
#include "cohere/sampling.hpp"
#include "cohere/encoder.hpp"
#include "cohere/losses.hpp"
#include "cohere/trainer.hpp"
#include "cohere/discovery.hpp"
#include "cohere/cli.hpp"
