#pragma once

#include "fuseatlas/builtin_vocab.hpp"
#include "fuseatlas/error.hpp"
#include "fuseatlas/fusion.hpp"
#include "fuseatlas/harmonize.hpp"
#include "fuseatlas/index.hpp"
#include "fuseatlas/query.hpp"
#include "fuseatlas/schema.hpp"
#include "fuseatlas/vocab.hpp"
