#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lager/record.hpp"

namespace lager::convert {

// Benchmark layouts the adapters understand (one JSON object per line):
//   helpsteer: {id?, helpfulness, correctness, coherence, complexity, verbosity, split?}
//              labels are 0..4 and shift by +1 onto the 1..5 judge scale.
//   flask:     {id | question_id | idx, human_score: {rubric: score | [scores]}}
//              a list of annotator scores is averaged.
//   biggen:    {id, human_score: score | [scores], capability?}
// Rows without an id are numbered by their 0-based position.
enum class Format { flask, helpsteer, biggen };

Format parse_format(const std::string& s);

struct ConvertOptions {
    // Added to every label; defaults to +1 for helpsteer and 0 otherwise.
    std::optional<double> score_offset;
};

/// One AnnotatedSample per (item, rubric); ids are "<item>:<rubric>" for
/// multi-rubric layouts.
std::vector<AnnotatedSample> convert_annotations(Format format, std::istream& in, const ConvertOptions& opts = {});

}  // namespace lager::convert
