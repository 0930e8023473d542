#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "csas/filter/prompt.hpp"
#include "csas/filter/similarity.hpp"

namespace csas::filter {

struct ModerationResult {
    bool flagged = false;
    std::vector<std::string> categories;
};

/**
 * Text-model backend used by the submission pipeline.
 *
 * Implementations report transport or provider failures as BackendError so
 * the pipeline can park the submission instead of losing it.
 */
class Backend {
public:
    virtual ~Backend() = default;

    virtual std::string id() const = 0;

    // Every vector returned by embed() has this many components.
    virtual std::size_t dimension() const = 0;

    virtual std::string complete(const PromptTemplate& tmpl, const Variables& vars) = 0;
    virtual Embedding embed(const std::string& text) = 0;
    virtual ModerationResult moderate(const std::string& text) = 0;
};

}  // namespace csas::filter
