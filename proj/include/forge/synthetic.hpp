#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "forge/gateway.hpp"

namespace forge {

/// Offline stand-in for a chat model, used by `gateway.backend = mock`. Every
/// reply is a pure function of the prompt:
///  - generation prompts (template or generator meta-instruction) get a task
///    built from sentences of the target text; a hash-chosen share comes back
///    malformed or with invented content, so the filters have work to do;
///  - inversion prompts get a document assembled from the task fields;
///  - discriminator prompts get "Valid." / "Invalid ..." / "unsure";
///  - judge prompts get "yes";
///  - anything else is answered by echoing the prompt, with a hash-chosen
///    share of refusals.
std::string synthetic_reply(const std::string& prompt);

/// Hashed bag-of-words embedding, L2-normalized: texts sharing tokens point
/// in similar directions.
std::vector<double> synthetic_embedding(const std::string& text, std::size_t dim);

/// MockBackend wired to the two functions above.
std::shared_ptr<MockBackend> make_synthetic_backend(std::size_t dim = 64);

}  // namespace forge
