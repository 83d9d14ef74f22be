#include "lager/convert.hpp"

#include <cmath>
#include <istream>

#include <fmt/format.h>
#include <json.hpp>

#include "lager/errors.hpp"

namespace lager::convert {

using json = nlohmann::json;

namespace {

constexpr const char* kHelpSteerAttributes[] = {"helpfulness", "correctness", "coherence", "complexity",
                                                "verbosity"};

std::string item_id(const json& j, std::size_t index) {
    for (const char* key : {"sample_id", "id", "question_id", "idx"}) {
        if (!j.contains(key) || j[key].is_null()) continue;
        const auto& v = j[key];
        return v.is_string() ? v.get<std::string>() : v.dump();
    }
    return std::to_string(index);
}

double score_value(const json& v, std::size_t lineno) {
    if (v.is_number()) return v.get<double>();
    if (v.is_array() && !v.empty()) {
        double sum = 0.0;
        for (const auto& x : v) sum += x.get<double>();
        return sum / static_cast<double>(v.size());
    }
    throw ParseError("score must be a number or a non-empty list of numbers", lineno);
}

std::optional<std::string> optional_string(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].is_string() ? j[key].get<std::string>() : j[key].dump();
}

}  // namespace

Format parse_format(const std::string& s) {
    if (s == "flask") return Format::flask;
    if (s == "helpsteer") return Format::helpsteer;
    if (s == "biggen") return Format::biggen;
    throw ArgumentError(fmt::format("unknown format '{}' (expected flask|helpsteer|biggen)", s));
}

std::vector<AnnotatedSample> convert_annotations(Format format, std::istream& in, const ConvertOptions& opts) {
    const double offset = opts.score_offset.value_or(format == Format::helpsteer ? 1.0 : 0.0);
    std::vector<AnnotatedSample> out;
    std::string line;
    std::size_t lineno = 0, index = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(fmt::format("malformed JSON: {}", e.what()), lineno);
        }
        const auto id = item_id(j, index++);
        const auto split = optional_string(j, "split");
        auto emit = [&](std::string sample_id, double score, std::optional<std::string> dim) {
            if (!std::isfinite(score))
                throw ParseError(fmt::format("item '{}': non-finite score", sample_id), lineno);
            out.push_back({std::move(sample_id), score, std::move(dim), split});
        };
        try {
            switch (format) {
                case Format::helpsteer:
                    for (const char* attr : kHelpSteerAttributes) {
                        if (!j.contains(attr)) throw ParseError(fmt::format("missing attribute '{}'", attr), lineno);
                        emit(fmt::format("{}:{}", id, attr), score_value(j[attr], lineno) + offset, attr);
                    }
                    break;
                case Format::flask: {
                    const auto& scores = j.at("human_score");
                    if (!scores.is_object())
                        throw ParseError("flask rows need human_score as a {rubric: score} object", lineno);
                    for (const auto& [rubric, v] : scores.items())
                        emit(fmt::format("{}:{}", id, rubric), score_value(v, lineno) + offset, rubric);
                    break;
                }
                case Format::biggen:
                    emit(id, score_value(j.at("human_score"), lineno) + offset, optional_string(j, "capability"));
                    break;
            }
        } catch (const json::exception& e) {
            throw ParseError(fmt::format("bad row: {}", e.what()), lineno);
        }
    }
    return out;
}

}  // namespace lager::convert
