#include "perjar/corpus.hpp"

#include "perjar/digest.hpp"

#include <json.hpp>

#include <chrono>
#include <fstream>
#include <set>
#include <tuple>
#include <unordered_map>

namespace perjar {

using nlohmann::json;

namespace {

int current_year() {
    const auto now = std::chrono::system_clock::now();
    const std::chrono::year_month_day ymd{std::chrono::floor<std::chrono::days>(now)};
    return static_cast<int>(ymd.year());
}

/// One parsed record together with where it came from, for error messages.
class Record {
public:
    Record(json obj, std::string where) : obj_(std::move(obj)), where_(std::move(where)) {}

    [[noreturn]] void fail(const std::string& msg) const { throw CorpusError(where_ + ": " + msg); }

    bool has(const char* key) const { return obj_.contains(key) && !obj_.at(key).is_null(); }

    std::string text(const char* key) const {
        if (!has(key)) fail(std::string("missing field '") + key + "'");
        const auto& v = obj_.at(key);
        if (!v.is_string()) fail(std::string("field '") + key + "' must be a string");
        return v.get<std::string>();
    }

    std::optional<std::string> opt_text(const char* key) const {
        if (!has(key)) return std::nullopt;
        return text(key);
    }

    long long integer(const char* key) const {
        if (!has(key)) fail(std::string("missing field '") + key + "'");
        const auto& v = obj_.at(key);
        if (!v.is_number_integer()) fail(std::string("field '") + key + "' must be an integer");
        return v.get<long long>();
    }

    std::optional<int> opt_int(const char* key) const {
        if (!has(key)) return std::nullopt;
        return static_cast<int>(integer(key));
    }

    double real(const char* key) const {
        if (!has(key)) fail(std::string("missing field '") + key + "'");
        const auto& v = obj_.at(key);
        if (!v.is_number()) fail(std::string("field '") + key + "' must be a number");
        return v.get<double>();
    }

    Label label(const char* key) const {
        const auto v = integer(key);
        if (!is_binary(static_cast<int>(v)) || v != static_cast<int>(v)) fail(std::string("field '") + key + "' must be 0 or 1");
        return static_cast<Label>(v);
    }

    std::optional<Label> opt_label(const char* key) const {
        if (!has(key)) return std::nullopt;
        return label(key);
    }

    void allow_only(std::initializer_list<const char*> keys) const {
        for (const auto& [k, v] : obj_.items()) {
            bool known = false;
            for (const char* allowed : keys) known = known || k == allowed;
            if (!known) fail("unknown field '" + k + "'");
            if (v.is_object() || v.is_array()) fail("field '" + k + "' must be a scalar (records are flat)");
        }
    }

private:
    json obj_;
    std::string where_;
};

std::vector<Record> read_stream(const std::filesystem::path& file, bool required) {
    std::vector<Record> out;
    if (!std::filesystem::exists(file)) {
        if (required) throw CorpusError("missing file " + file.string());
        return out;
    }
    std::ifstream in(file);
    if (!in) throw CorpusError("cannot open " + file.string());
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const std::string where = file.string() + ":" + std::to_string(line_no);
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw CorpusError(where + ": malformed record: " + e.what());
        }
        if (!obj.is_object()) throw CorpusError(where + ": record must be a JSON object");
        if (!saw_header) {
            if (!obj.contains("schema") || obj.size() != 1) throw CorpusError(where + ": expected header record {\"schema\": 1}");
            if (obj.at("schema") != kCorpusSchemaVersion) {
                throw CorpusError(where + ": unsupported schema " + obj.at("schema").dump());
            }
            saw_header = true;
            continue;
        }
        out.emplace_back(std::move(obj), where);
    }
    if (!saw_header) throw CorpusError(file.string() + ": missing header record {\"schema\": 1}");
    return out;
}

PublicationRecord parse_publication(const Record& r, PublicationSource default_source) {
    PublicationRecord p;
    p.title = r.opt_text("title").value_or("");
    p.abstract_text = r.text("abstract_text");
    p.year = r.opt_int("year");
    p.source = r.has("source") ? parse_publication_source(r.text("source")) : default_source;
    if (p.abstract_text.empty()) r.fail("abstract_text is empty");
    return p;
}

json publication_json(const PublicationRecord& p) {
    json j{{"title", p.title}, {"abstract_text", p.abstract_text}, {"source", std::string(to_string(p.source))}};
    if (p.year) j["year"] = *p.year;
    return j;
}

void write_stream(const std::filesystem::path& file, const std::vector<json>& records) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw CorpusError("cannot write " + file.string());
    out << json{{"schema", kCorpusSchemaVersion}}.dump() << '\n';
    for (const auto& r : records) out << r.dump() << '\n';
}

}  // namespace

std::string_view to_string(PublicationSource s) noexcept {
    switch (s) {
        case PublicationSource::annotator_authored: return "annotator_authored";
        case PublicationSource::subdomain_augmentation: return "subdomain_augmentation";
    }
    return "annotator_authored";
}

PublicationSource parse_publication_source(std::string_view s) {
    if (s == "annotator_authored") return PublicationSource::annotator_authored;
    if (s == "subdomain_augmentation") return PublicationSource::subdomain_augmentation;
    throw CorpusError("unknown publication source '" + std::string(s) + "'");
}

std::string normalize_subfield(std::string_view subfield) { return to_lower_ascii(trim(subfield)); }

const Annotator& Corpus::annotator(const AnnotatorId& id) const {
    const auto it = annotators.find(id);
    if (it == annotators.end()) throw CorpusError("unknown annotator '" + id.value + "'");
    return it->second;
}

const AbstractDoc& Corpus::abstract_doc(const AbstractId& id) const {
    const auto it = abstracts.find(id);
    if (it == abstracts.end()) throw CorpusError("unknown abstract '" + id.value + "'");
    return it->second;
}

std::span<const PublicationRecord> Corpus::pool_for(const Annotator& a) const {
    const auto it = augmentation_pool.find(normalize_subfield(a.subfield));
    if (it == augmentation_pool.end()) return {};
    return it->second;
}

void validate_corpus(const Corpus& corpus, std::vector<std::string>* warnings) {
    const int this_year = current_year();
    for (const auto& [id, a] : corpus.annotators) {
        if (id.empty() || id != a.id) throw CorpusError("annotator key/id mismatch for '" + id.value + "'");
        if (a.papers_published < 0) throw CorpusError("annotator '" + id.value + "': papers_published < 0");
        if (a.avg_references < 0) throw CorpusError("annotator '" + id.value + "': avg_references < 0");
        if (a.first_pub_year && *a.first_pub_year > this_year) {
            throw CorpusError("annotator '" + id.value + "': first_pub_year " + std::to_string(*a.first_pub_year) + " is in the future");
        }
        for (const auto& p : a.publications) {
            if (p.abstract_text.empty()) throw CorpusError("annotator '" + id.value + "': publication with empty abstract_text");
        }
    }
    for (const auto& [id, d] : corpus.abstracts) {
        if (id.empty() || id != d.id) throw CorpusError("abstract key/id mismatch for '" + id.value + "'");
        if (d.text.empty()) throw CorpusError("abstract '" + id.value + "': text is empty");
    }
    for (const auto& [key, pubs] : corpus.augmentation_pool) {
        for (const auto& p : pubs) {
            if (p.abstract_text.empty()) throw CorpusError("augmentation pool '" + key + "': empty abstract_text");
        }
    }
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for (std::size_t i = 0; i < corpus.annotations.size(); ++i) {
        const auto& t = corpus.annotations[i];
        const std::string where = "annotation #" + std::to_string(i);
        if (!corpus.annotators.contains(t.annotator_id)) {
            throw CorpusError(where + ": unknown annotator id '" + t.annotator_id.value + "'");
        }
        const auto doc = corpus.abstracts.find(t.abstract_id);
        if (doc == corpus.abstracts.end()) throw CorpusError(where + ": unknown abstract id '" + t.abstract_id.value + "'");
        if (t.term.empty()) throw CorpusError(where + ": empty term");
        if (!is_binary(t.familiarity)) throw CorpusError(where + ": familiarity must be 0 or 1");
        for (const auto& n : {t.needs_definition, t.needs_background, t.needs_example}) {
            if (n && !is_binary(*n)) throw CorpusError(where + ": needs label must be 0 or 1");
        }
        if (!seen.emplace(t.annotator_id.value, t.abstract_id.value, t.term).second) {
            throw CorpusError(where + ": duplicate (annotator, abstract, term) = (" + t.annotator_id.value + ", " + t.abstract_id.value +
                              ", " + t.term + ")");
        }
        if (warnings) {
            if (to_lower_ascii(doc->second.text).find(to_lower_ascii(t.term)) == std::string::npos) {
                warnings->push_back(where + ": term '" + t.term + "' does not occur in abstract '" + t.abstract_id.value + "'");
            }
            if (t.term.find(", ") != std::string::npos || t.term.find_first_of("[]") != std::string::npos) {
                warnings->push_back(where + ": term '" + t.term + "' contains list delimiters and will render ambiguously");
            }
        }
    }
}

Corpus load_corpus(const std::filesystem::path& dir, std::vector<std::string>* warnings) {
    if (!std::filesystem::is_directory(dir)) throw CorpusError("corpus directory not found: " + dir.string());
    Corpus c;

    for (const auto& r : read_stream(dir / "annotators.jsonl", true)) {
        r.allow_only({"id", "subfield", "papers_published", "avg_references", "first_pub_year", "profile_text"});
        Annotator a;
        a.id = AnnotatorId(r.text("id"));
        a.subfield = r.text("subfield");
        a.papers_published = static_cast<int>(r.integer("papers_published"));
        a.avg_references = r.real("avg_references");
        a.first_pub_year = r.opt_int("first_pub_year");
        a.profile_text = r.opt_text("profile_text");
        if (a.id.empty()) r.fail("empty annotator id");
        if (a.papers_published < 0) r.fail("papers_published must be >= 0");
        if (a.avg_references < 0) r.fail("avg_references must be >= 0");
        const auto id = a.id;
        if (!c.annotators.emplace(id, std::move(a)).second) r.fail("duplicate annotator id '" + id.value + "'");
    }

    for (const auto& r : read_stream(dir / "publications.jsonl", false)) {
        r.allow_only({"annotator_id", "title", "abstract_text", "year", "source"});
        const AnnotatorId owner(r.text("annotator_id"));
        const auto it = c.annotators.find(owner);
        if (it == c.annotators.end()) r.fail("unknown annotator id '" + owner.value + "'");
        it->second.publications.push_back(parse_publication(r, PublicationSource::annotator_authored));
    }

    for (const auto& r : read_stream(dir / "abstracts.jsonl", true)) {
        r.allow_only({"id", "title", "text", "domain"});
        AbstractDoc d;
        d.id = AbstractId(r.text("id"));
        d.title = r.opt_text("title");
        d.text = r.text("text");
        d.domain = r.opt_text("domain").value_or("");
        if (d.id.empty()) r.fail("empty abstract id");
        if (d.text.empty()) r.fail("abstract text is empty");
        const auto id = d.id;
        if (!c.abstracts.emplace(id, std::move(d)).second) r.fail("duplicate abstract id '" + id.value + "'");
    }

    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for (const auto& r : read_stream(dir / "annotations.jsonl", true)) {
        r.allow_only({"annotator_id", "abstract_id", "term", "familiarity", "needs_definition", "needs_background", "needs_example"});
        TermAnnotation t;
        t.annotator_id = AnnotatorId(r.text("annotator_id"));
        t.abstract_id = AbstractId(r.text("abstract_id"));
        t.term = r.text("term");
        t.familiarity = r.label("familiarity");
        t.needs_definition = r.opt_label("needs_definition");
        t.needs_background = r.opt_label("needs_background");
        t.needs_example = r.opt_label("needs_example");
        if (!c.annotators.contains(t.annotator_id)) r.fail("unknown annotator id '" + t.annotator_id.value + "'");
        if (!c.abstracts.contains(t.abstract_id)) r.fail("unknown abstract id '" + t.abstract_id.value + "'");
        if (!seen.emplace(t.annotator_id.value, t.abstract_id.value, t.term).second) {
            r.fail("duplicate (annotator, abstract, term) triple");
        }
        c.annotations.push_back(std::move(t));
    }

    for (const auto& r : read_stream(dir / "augmentation_pool.jsonl", false)) {
        r.allow_only({"subfield", "title", "abstract_text", "year", "source"});
        auto p = parse_publication(r, PublicationSource::subdomain_augmentation);
        c.augmentation_pool[normalize_subfield(r.text("subfield"))].push_back(std::move(p));
    }

    for (const auto& r : read_stream(dir / "profiles.jsonl", false)) {
        r.allow_only({"annotator_id", "profile_text"});
        const AnnotatorId owner(r.text("annotator_id"));
        const auto it = c.annotators.find(owner);
        if (it == c.annotators.end()) r.fail("unknown annotator id '" + owner.value + "'");
        it->second.profile_text = r.text("profile_text");
    }

    validate_corpus(c, warnings);
    return c;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<json> annotators;
    std::vector<json> publications;
    for (const auto& [id, a] : corpus.annotators) {
        json j{{"id", id.value}, {"subfield", a.subfield}, {"papers_published", a.papers_published}, {"avg_references", a.avg_references}};
        if (a.first_pub_year) j["first_pub_year"] = *a.first_pub_year;
        if (a.profile_text) j["profile_text"] = *a.profile_text;
        annotators.push_back(std::move(j));
        for (const auto& p : a.publications) {
            auto pj = publication_json(p);
            pj["annotator_id"] = id.value;
            publications.push_back(std::move(pj));
        }
    }
    std::vector<json> abstracts;
    for (const auto& [id, d] : corpus.abstracts) {
        json j{{"id", id.value}, {"text", d.text}, {"domain", d.domain}};
        if (d.title) j["title"] = *d.title;
        abstracts.push_back(std::move(j));
    }
    std::vector<json> annotations;
    for (const auto& t : corpus.annotations) {
        json j{{"annotator_id", t.annotator_id.value}, {"abstract_id", t.abstract_id.value}, {"term", t.term}, {"familiarity", t.familiarity}};
        if (t.needs_definition) j["needs_definition"] = *t.needs_definition;
        if (t.needs_background) j["needs_background"] = *t.needs_background;
        if (t.needs_example) j["needs_example"] = *t.needs_example;
        annotations.push_back(std::move(j));
    }
    std::vector<json> pool;
    for (const auto& [key, pubs] : corpus.augmentation_pool) {
        for (const auto& p : pubs) {
            auto pj = publication_json(p);
            pj["subfield"] = key;
            pool.push_back(std::move(pj));
        }
    }
    write_stream(dir / "annotators.jsonl", annotators);
    write_stream(dir / "publications.jsonl", publications);
    write_stream(dir / "abstracts.jsonl", abstracts);
    write_stream(dir / "annotations.jsonl", annotations);
    write_stream(dir / "augmentation_pool.jsonl", pool);
}

void save_profiles_sidecar(const Corpus& corpus, const std::filesystem::path& file) {
    std::vector<json> records;
    for (const auto& [id, a] : corpus.annotators) {
        if (a.profile_text) records.push_back(json{{"annotator_id", id.value}, {"profile_text", *a.profile_text}});
    }
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    write_stream(file, records);
}

std::string corpus_digest(const Corpus& corpus) {
    // Profiles are generated artifacts, not corpus content.
    json j;
    j["schema"] = kCorpusSchemaVersion;
    auto& ann = j["annotators"] = json::array();
    for (const auto& [id, a] : corpus.annotators) {
        json pubs = json::array();
        for (const auto& p : a.publications) pubs.push_back(publication_json(p));
        ann.push_back(json{{"id", id.value},
                           {"subfield", a.subfield},
                           {"papers_published", a.papers_published},
                           {"avg_references", a.avg_references},
                           {"first_pub_year", a.first_pub_year ? json(*a.first_pub_year) : json()},
                           {"publications", pubs}});
    }
    auto& abs = j["abstracts"] = json::array();
    for (const auto& [id, d] : corpus.abstracts) {
        abs.push_back(json{{"id", id.value}, {"title", d.title ? json(*d.title) : json()}, {"text", d.text}, {"domain", d.domain}});
    }
    auto& terms = j["annotations"] = json::array();
    const auto opt = [](const std::optional<Label>& l) { return l ? json(*l) : json(); };
    for (const auto& t : corpus.annotations) {
        terms.push_back(json{{"annotator_id", t.annotator_id.value},
                             {"abstract_id", t.abstract_id.value},
                             {"term", t.term},
                             {"familiarity", t.familiarity},
                             {"needs_definition", opt(t.needs_definition)},
                             {"needs_background", opt(t.needs_background)},
                             {"needs_example", opt(t.needs_example)}});
    }
    auto& pool = j["augmentation_pool"] = json::object();
    for (const auto& [key, pubs] : corpus.augmentation_pool) {
        json arr = json::array();
        for (const auto& p : pubs) arr.push_back(publication_json(p));
        pool[key] = arr;
    }
    return sha256_hex(j.dump());
}

std::vector<AnnotationGroup> group_annotations(const Corpus& corpus, std::span<const std::size_t> indices) {
    std::vector<AnnotationGroup> groups;
    std::map<std::pair<AnnotatorId, AbstractId>, std::size_t> slot;
    for (const std::size_t i : indices) {
        const auto& t = corpus.annotations.at(i);
        auto key = std::make_pair(t.annotator_id, t.abstract_id);
        auto [it, inserted] = slot.try_emplace(std::move(key), groups.size());
        if (inserted) groups.push_back(AnnotationGroup{t.annotator_id, t.abstract_id, {}});
        groups[it->second].indices.push_back(i);
    }
    return groups;
}

std::vector<std::size_t> all_annotation_indices(const Corpus& corpus) {
    std::vector<std::size_t> out(corpus.annotations.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
    return out;
}

}  // namespace perjar
