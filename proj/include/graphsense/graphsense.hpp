#pragma once

#include "graphsense/autodiff.hpp"   // IWYU pragma: export
#include "graphsense/chat_http.hpp"  // IWYU pragma: export
#include "graphsense/corpus.hpp"     // IWYU pragma: export
#include "graphsense/expand.hpp"     // IWYU pragma: export
#include "graphsense/graph.hpp"      // IWYU pragma: export
#include "graphsense/model.hpp"      // IWYU pragma: export
#include "graphsense/rng.hpp"        // IWYU pragma: export
#include "graphsense/train.hpp"      // IWYU pragma: export
#include "graphsense/unicode.hpp"    // IWYU pragma: export
#include "graphsense/util.hpp"       // IWYU pragma: export
#include "graphsense/verify.hpp"     // IWYU pragma: export
