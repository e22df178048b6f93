#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace clickpath {

/// Reserved vocabulary entry: the visitor left the site.
inline constexpr std::string_view kNullPage = "<null>";
/// Reserved vocabulary entry for pages below the frequency threshold.
inline constexpr std::string_view kUnknownPage = "<unknown>";

struct PageEvent {
    std::string page;
    double dwell_seconds = 0.0;

    friend bool operator==(const PageEvent&, const PageEvent&) = default;
};

/// One visitor journey: search keywords (possibly empty) then the pages viewed.
struct Session {
    std::string session_id;
    std::string keywords;
    std::vector<PageEvent> events;

    friend bool operator==(const Session&, const Session&) = default;
};

/// Observed start of a journey that future steps are conditioned on.
struct JourneyPrefix {
    std::string keywords;
    std::vector<std::string> pages;

    friend bool operator==(const JourneyPrefix&, const JourneyPrefix&) = default;
};

// --- session log: one JSON object per line -------------------------------

/// Blank lines are skipped. Throws ParseError for malformed JSON and
/// SchemaError for missing or invalid fields, both carrying the line number.
std::vector<Session> parse_log(std::istream& in);
std::vector<Session> read_log(const std::filesystem::path& path);
std::string serialize_session(const Session& session);
void write_log(std::ostream& out, std::span<const Session> sessions);
void write_log(const std::filesystem::path& path, std::span<const Session> sessions);

// --- vocabulary -----------------------------------------------------------

/// Dense page-name <-> class-index map. Retained pages come first, followed
/// by the reserved NULL_PAGE and UNKNOWN entries.
class PageVocabulary {
public:
    /// Vocabulary over `pages` in the given order; throws ArgumentError on
    /// duplicates or reserved names.
    explicit PageVocabulary(std::vector<std::string> pages, std::size_t min_freq = 1);

    std::size_t size() const noexcept { return names_.size(); }
    std::size_t page_count() const noexcept { return names_.size() - 2; }
    std::size_t null_index() const noexcept { return names_.size() - 2; }
    std::size_t unknown_index() const noexcept { return names_.size() - 1; }
    std::size_t min_freq() const noexcept { return min_freq_; }

    /// Class of a page name; unretained names map to UNKNOWN.
    std::size_t index_of(std::string_view name) const;
    bool contains(std::string_view name) const;
    const std::string& name(std::size_t index) const { return names_.at(index); }
    std::span<const std::string> names() const noexcept { return names_; }

    friend bool operator==(const PageVocabulary& a, const PageVocabulary& b) {
        return a.names_ == b.names_ && a.min_freq_ == b.min_freq_;
    }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t min_freq_;
};

/// Pages seen at least `min_freq` times, ordered by descending count with
/// lexicographic tie-breaks. Throws ArgumentError for an empty corpus or
/// min_freq < 1.
PageVocabulary build_vocab(std::span<const Session> sessions, std::size_t min_freq);

// --- dwell replication ----------------------------------------------------

struct DwellPolicy {
    double unit_seconds = 30.0;
    std::size_t cap = 5;

    friend bool operator==(const DwellPolicy&, const DwellPolicy&) = default;
};

/// Copies of one page with the given dwell: min(cap, max(1, ceil(dwell / unit))).
std::size_t replication_factor(double dwell_seconds, const DwellPolicy& policy);

/// Page names with each event repeated by its replication factor, then a
/// single NULL_PAGE.
std::vector<std::string> replicate_dwell(const Session& session, double unit_seconds,
                                         std::size_t cap);
std::vector<std::string> replicate_dwell(const Session& session, const DwellPolicy& policy);

// --- train / evaluation split ---------------------------------------------

struct SessionSplit {
    std::vector<Session> train;
    std::vector<Session> eval;
};

/// Seeded shuffle then partition; round(train_fraction * n) training sessions,
/// clamped so both sides are non-empty.
SessionSplit split(std::span<const Session> sessions, double train_fraction, std::uint64_t seed);

}  // namespace clickpath
