#pragma once

#include <cstdlib>
#include <string>

#include "fuseatlas/default_vocab.hpp"
#include "fuseatlas/vocab.hpp"

namespace fuseatlas {

/// Tables compiled in from data/vocab.tsv.
inline const Vocabulary& builtin_vocabulary() {
    static const Vocabulary v = Vocabulary::parse(kDefaultVocabulary);
    return v;
}

/// `path` if given, else $FUSEATLAS_VOCAB if set, else the built-in tables.
inline Vocabulary resolve_vocabulary(const std::string& path = {}) {
    if (!path.empty()) return Vocabulary::load_file(path);
    if (const char* env = std::getenv("FUSEATLAS_VOCAB"); env && *env) return Vocabulary::load_file(env);
    return builtin_vocabulary();
}

}  // namespace fuseatlas
