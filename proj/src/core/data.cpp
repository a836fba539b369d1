// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0

#include "core/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace seqrec {

namespace {

std::vector<std::string_view> split_by(std::string_view line, std::string_view delim) {
    std::vector<std::string_view> parts;
    std::size_t pos = 0;
    while (true) {
        const std::size_t next = line.find(delim, pos);
        if (next == std::string_view::npos) {
            parts.push_back(line.substr(pos));
            break;
        }
        parts.push_back(line.substr(pos, next - pos));
        pos = next + delim.size();
    }
    return parts;
}

std::int64_t parse_timestamp(std::string_view s, std::size_t line_no) {
    std::int64_t value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ParseError("line " + std::to_string(line_no) + ": bad timestamp '" + std::string(s) +
                         "'");
    }
    if (value < 0) {
        throw ParseError("line " + std::to_string(line_no) + ": negative timestamp");
    }
    return value;
}

// Percent-escape for whitespace-delimited bundle tokens.
std::string escape_token(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '%' || c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            static const char* hex = "0123456789ABCDEF";
            out += '%';
            out += hex[(static_cast<unsigned char>(c) >> 4) & 0xF];
            out += hex[static_cast<unsigned char>(c) & 0xF];
        } else {
            out += c;
        }
    }
    return out;
}

std::string unescape_token(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '%') {
            if (i + 2 >= s.size()) throw ParseError("bundle: truncated escape in token");
            auto hexval = [](char c) -> int {
                if (c >= '0' && c <= '9') return c - '0';
                if (c >= 'A' && c <= 'F') return c - 'A' + 10;
                if (c >= 'a' && c <= 'f') return c - 'a' + 10;
                throw ParseError("bundle: bad escape digit");
            };
            out += static_cast<char>(hexval(s[i + 1]) * 16 + hexval(s[i + 2]));
            i += 2;
        } else {
            out += s[i];
        }
    }
    return out;
}

}  // namespace

std::int64_t SequenceDataset::total_interactions() const {
    std::int64_t total = 0;
    for (const auto& s : sequences) total += static_cast<std::int64_t>(s.size());
    return total;
}

double SequenceDataset::mean_sequence_length() const {
    if (num_users() == 0) return 0.0;
    return static_cast<double>(total_interactions()) / static_cast<double>(num_users());
}

double SequenceDataset::density() const {
    if (num_users() == 0 || num_items() == 0) return 0.0;
    return static_cast<double>(total_interactions()) /
           (static_cast<double>(num_users()) * static_cast<double>(num_items()));
}

InteractionLog load_interactions(const std::string& path, const LoadOptions& options,
                                 LoadReport* report) {
    if (options.columns != "uit" && options.columns != "uirt") {
        throw ContractError("load_interactions: unknown column layout '" + options.columns + "'");
    }
    if (options.delimiter.empty()) {
        throw ContractError("load_interactions: empty delimiter");
    }
    std::ifstream is(path);
    if (!is) throw IoError("cannot open interactions file: " + path);

    const std::size_t expected = options.columns.size();
    const std::size_t ts_col = options.columns == "uit" ? 2 : 3;

    InteractionLog log;
    LoadReport stats;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    bool skipped_header = false;
    while (std::getline(is, line)) {
        ++line_no;
        ++stats.lines;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (options.skip_header && !skipped_header) {
            skipped_header = true;
            continue;
        }
        if (line.empty()) continue;
        const auto parts = split_by(line, options.delimiter);
        if (parts.size() != expected) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(expected) + " fields, got " +
                             std::to_string(parts.size()));
        }
        Interaction rec;
        rec.user = std::string(parts[0]);
        rec.item = std::string(parts[1]);
        if (rec.user.empty() || rec.item.empty()) {
            throw ParseError("line " + std::to_string(line_no) + ": empty user or item id");
        }
        rec.timestamp = parse_timestamp(parts[ts_col], line_no);
        ++stats.parsed;

        std::string key = rec.user;
        key += '\x1f';
        key += rec.item;
        key += '\x1f';
        key += std::to_string(rec.timestamp);
        if (!seen.insert(std::move(key)).second) {
            ++stats.duplicates_removed;
            continue;
        }
        log.records.push_back(std::move(rec));
    }
    if (log.records.empty()) {
        throw EmptyInputError("no interactions found in " + path);
    }
    if (report) *report = stats;
    return log;
}

InteractionLog filter_min_interactions(const InteractionLog& log, int min_count) {
    if (min_count < 1) throw ContractError("filter_min_interactions: min_count must be >= 1");

    std::unordered_map<std::string, int> item_count;
    for (const auto& r : log.records) ++item_count[r.item];

    InteractionLog item_filtered;
    item_filtered.records.reserve(log.records.size());
    for (const auto& r : log.records) {
        if (item_count[r.item] >= min_count) item_filtered.records.push_back(r);
    }

    std::unordered_map<std::string, int> user_count;
    for (const auto& r : item_filtered.records) ++user_count[r.user];

    InteractionLog out;
    out.records.reserve(item_filtered.records.size());
    for (auto& r : item_filtered.records) {
        if (user_count[r.user] >= min_count) out.records.push_back(std::move(r));
    }
    if (out.records.empty()) {
        throw EmptyInputError("filter_min_interactions: all records filtered out");
    }
    return out;
}

SequenceDataset build_dataset(const InteractionLog& log, const BuildOptions& options,
                              BuildReport* report) {
    if (options.max_len < 1) throw ContractError("build_dataset: max_len must be >= 1");
    if (log.records.empty()) throw EmptyInputError("build_dataset: empty log");

    // Group per user preserving file order, then stable-sort by timestamp so
    // equal timestamps keep their original order.
    std::vector<std::string> user_order;
    std::unordered_map<std::string, std::vector<std::size_t>> per_user;
    for (std::size_t i = 0; i < log.records.size(); ++i) {
        auto [it, inserted] = per_user.try_emplace(log.records[i].user);
        if (inserted) user_order.push_back(log.records[i].user);
        it->second.push_back(i);
    }

    BuildReport stats;
    std::vector<std::pair<std::string, std::vector<std::size_t>>> kept;
    kept.reserve(user_order.size());
    for (const auto& user : user_order) {
        auto& idx = per_user[user];
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return log.records[a].timestamp < log.records[b].timestamp;
        });
        if (idx.size() < static_cast<std::size_t>(options.min_sequence_length)) {
            ++stats.dropped_short_users;
            continue;
        }
        kept.emplace_back(user, std::move(idx));
    }
    if (kept.empty()) {
        throw EmptyInputError("build_dataset: no user has enough interactions");
    }

    SequenceDataset ds;
    ds.max_len = options.max_len;
    ds.user_ids.push_back("");
    ds.item_ids.push_back("");
    ds.sequences.push_back({});

    // Item ids assigned by first appearance across kept users in file order.
    for (const auto& [user, idx] : kept) {
        const int uid = static_cast<int>(ds.user_ids.size());
        ds.user_ids.push_back(user);
        ds.user_index.emplace(user, uid);
        std::vector<int> seq;
        seq.reserve(idx.size());
        for (std::size_t ri : idx) {
            const std::string& item = log.records[ri].item;
            auto [it, inserted] = ds.item_index.try_emplace(item, static_cast<int>(ds.item_ids.size()));
            if (inserted) ds.item_ids.push_back(item);
            seq.push_back(it->second);
        }
        ds.sequences.push_back(std::move(seq));
    }

    ds.item_popularity.assign(ds.item_ids.size(), 0);
    for (const auto& seq : ds.sequences) {
        for (int item : seq) ++ds.item_popularity[static_cast<std::size_t>(item)];
    }
    if (report) *report = stats;
    return ds;
}

SplitView build_splits(const SequenceDataset& dataset) {
    SplitView view;
    const std::size_t n = dataset.sequences.size();
    view.train.resize(n);
    view.validation.assign(n, 0);
    view.test.assign(n, 0);
    for (std::size_t u = 1; u < n; ++u) {
        const auto& seq = dataset.sequences[u];
        if (seq.size() < 3) {
            ++view.dropped_users;
            continue;
        }
        view.train[u].assign(seq.begin(), seq.end() - 2);
        view.validation[u] = seq[seq.size() - 2];
        view.test[u] = seq.back();
    }
    return view;
}

std::vector<int> truncate_sequence(const std::vector<int>& seq, std::size_t max_len) {
    if (max_len < 1) throw ContractError("truncate_sequence: max_len must be >= 1");
    if (seq.size() <= max_len) return seq;
    return std::vector<int>(seq.end() - static_cast<std::ptrdiff_t>(max_len), seq.end());
}

std::vector<std::vector<int>> augment_duplicate(const std::vector<int>& seq, int k) {
    if (k < 1) throw ContractError("augment_duplicate: k must be >= 1");
    return std::vector<std::vector<int>>(static_cast<std::size_t>(k), seq);
}

std::vector<std::vector<int>> augment_sliding_window(const std::vector<int>& seq,
                                                     std::size_t max_len, std::size_t stride) {
    if (stride < 1) throw ContractError("augment_sliding_window: stride must be >= 1");
    if (max_len < 1) throw ContractError("augment_sliding_window: max_len must be >= 1");
    if (seq.size() <= max_len) return {seq};

    std::vector<std::vector<int>> windows;
    const std::size_t last_offset = seq.size() - max_len;
    std::size_t offset = 0;
    for (; offset <= last_offset; offset += stride) {
        windows.emplace_back(seq.begin() + static_cast<std::ptrdiff_t>(offset),
                             seq.begin() + static_cast<std::ptrdiff_t>(offset + max_len));
    }
    const std::size_t emitted_last = offset - stride;
    if (emitted_last != last_offset) {
        windows.emplace_back(seq.begin() + static_cast<std::ptrdiff_t>(last_offset), seq.end());
    }
    return windows;
}

std::vector<double> popularity_distribution(const SequenceDataset& dataset) {
    const std::int64_t total = dataset.total_interactions();
    if (total <= 0) throw EmptyInputError("popularity_distribution: empty dataset");
    std::vector<double> probs(dataset.item_popularity.size(), 0.0);
    for (std::size_t i = 1; i < probs.size(); ++i) {
        probs[i] = static_cast<double>(dataset.item_popularity[i]) / static_cast<double>(total);
    }
    return probs;
}

void save_dataset_bundle(const SequenceDataset& dataset, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open bundle for writing: " + path);
    os << "seqrec-bundle v1\n";
    os << "meta max_len " << dataset.max_len << " users " << dataset.num_users() << " items "
       << dataset.num_items() << "\n";
    for (int u = 1; u <= dataset.num_users(); ++u) {
        os << "user " << u << " " << escape_token(dataset.user_ids[static_cast<std::size_t>(u)])
           << "\n";
    }
    for (int i = 1; i <= dataset.num_items(); ++i) {
        os << "item " << i << " " << escape_token(dataset.item_ids[static_cast<std::size_t>(i)])
           << " " << dataset.item_popularity[static_cast<std::size_t>(i)] << "\n";
    }
    for (int u = 1; u <= dataset.num_users(); ++u) {
        const auto& seq = dataset.sequences[static_cast<std::size_t>(u)];
        os << "seq " << u << " " << seq.size();
        for (int item : seq) os << " " << item;
        os << "\n";
    }
    os << "end\n";
    if (!os) throw IoError("bundle write failed: " + path);
}

SequenceDataset load_dataset_bundle(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open bundle: " + path);
    std::string header;
    if (!std::getline(is, header)) throw ParseError("bundle: empty file " + path);
    if (header != "seqrec-bundle v1") {
        throw SchemaError("bundle: unsupported format line '" + header + "'");
    }

    SequenceDataset ds;
    std::string line;
    int users = -1, items = -1;
    bool saw_end = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "meta") {
            std::string key;
            while (ls >> key) {
                if (key == "max_len")
                    ls >> ds.max_len;
                else if (key == "users")
                    ls >> users;
                else if (key == "items")
                    ls >> items;
                else {
                    std::string ignored;
                    ls >> ignored;
                }
            }
            if (users < 0 || items < 0) throw ParseError("bundle: incomplete meta line");
            ds.user_ids.assign(static_cast<std::size_t>(users) + 1, "");
            ds.item_ids.assign(static_cast<std::size_t>(items) + 1, "");
            ds.item_popularity.assign(static_cast<std::size_t>(items) + 1, 0);
            ds.sequences.assign(static_cast<std::size_t>(users) + 1, {});
        } else if (tag == "user") {
            int id;
            std::string name;
            if (!(ls >> id >> name)) throw ParseError("bundle: bad user line");
            ds.user_ids.at(static_cast<std::size_t>(id)) = unescape_token(name);
            ds.user_index.emplace(ds.user_ids[static_cast<std::size_t>(id)], id);
        } else if (tag == "item") {
            int id;
            std::string name;
            std::int64_t count;
            if (!(ls >> id >> name >> count)) throw ParseError("bundle: bad item line");
            ds.item_ids.at(static_cast<std::size_t>(id)) = unescape_token(name);
            ds.item_index.emplace(ds.item_ids[static_cast<std::size_t>(id)], id);
            ds.item_popularity.at(static_cast<std::size_t>(id)) = count;
        } else if (tag == "seq") {
            int id;
            std::size_t n;
            if (!(ls >> id >> n)) throw ParseError("bundle: bad seq line");
            auto& seq = ds.sequences.at(static_cast<std::size_t>(id));
            seq.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                if (!(ls >> seq[i])) throw ParseError("bundle: truncated seq line");
            }
        } else if (tag == "end") {
            saw_end = true;
            break;
        } else {
            throw ParseError("bundle: unknown line tag '" + tag + "'");
        }
    }
    if (!saw_end) throw ParseError("bundle: missing end marker");
    return ds;
}

}  // namespace seqrec
