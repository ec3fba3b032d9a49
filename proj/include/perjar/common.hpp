#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace perjar {

/// String identifier tagged with the entity it names, so annotator and
/// abstract ids cannot be swapped by accident.
template <class Tag>
struct StrongId {
    std::string value;

    StrongId() = default;
    explicit StrongId(std::string v) : value(std::move(v)) {}

    auto operator<=>(const StrongId&) const = default;
    bool operator==(const StrongId&) const = default;

    const std::string& str() const noexcept { return value; }
    bool empty() const noexcept { return value.empty(); }
};

template <class Tag>
std::ostream& operator<<(std::ostream& os, const StrongId<Tag>& id) {
    return os << id.value;
}

struct AnnotatorTag {};
struct AbstractTag {};
using AnnotatorId = StrongId<AnnotatorTag>;
using AbstractId = StrongId<AbstractTag>;

/// Binary label. For familiarity 0 = familiar, 1 = unfamiliar; for the
/// information-needs tasks 0 = no, 1 = yes.
using Label = std::uint8_t;
using LabelList = std::vector<Label>;

inline bool is_binary(int v) noexcept { return v == 0 || v == 1; }

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CorpusError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class BackendError : public Error {
public:
    BackendError(std::string request_id, const std::string& what)
        : Error(request_id.empty() ? what : "[" + request_id + "] " + what),
          request_id_(std::move(request_id)) {}

    const std::string& request_id() const noexcept { return request_id_; }

private:
    std::string request_id_;
};

std::string to_lower_ascii(std::string_view s);
std::string trim(std::string_view s);

}  // namespace perjar

template <class Tag>
struct std::hash<perjar::StrongId<Tag>> {
    std::size_t operator()(const perjar::StrongId<Tag>& id) const noexcept {
        return std::hash<std::string>{}(id.value);
    }
};
