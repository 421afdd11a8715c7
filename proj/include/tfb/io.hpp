#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tfb/data.hpp"
#include "tfb/inference.hpp"
#include "tfb/metrics.hpp"
#include "tfb/netcore.hpp"
#include "tfb/search.hpp"

namespace tfb::io {

// --- primitives -----------------------------------------------------------

std::string base64_encode(const unsigned char* bytes, std::size_t len);
std::vector<unsigned char> base64_decode(const std::string& text);

// Doubles as base64 little-endian f64, the tensor wire format.
std::string encode_doubles(const std::vector<double>& xs);
std::vector<double> decode_doubles(const std::string& text);

// 17 significant digits: enough to round-trip any double through text.
std::string format_double(double x);

// RFC-4180: quote fields containing comma, quote or newline; double the
// quotes inside.
std::string csv_escape(const std::string& field);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// --- checkpoints ----------------------------------------------------------

// Single-JSON checkpoint: header {format_version, task, topology, meta},
// per-layer tensors {w0, bias, b, a} as base64 f64, optional posterior
// {family, sigma_q, d}. save(load(x)) is byte-identical.
void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

// --- datasets ---------------------------------------------------------------

// CSV with header: x0..x{d-1} then y (regression) / label (classification);
// unlabeled sets have input columns only. Loading infers the kind from the
// header.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// --- result tables ----------------------------------------------------------

void save_search_trace_csv(const SearchTrace& trace, const std::filesystem::path& path);
void save_search_trace_json(const SearchTrace& trace, const std::filesystem::path& path);
void save_grid_result_csv(const GridResult& result, const std::filesystem::path& path);
void save_grid_result_json(const GridResult& result, const std::filesystem::path& path);
void save_metric_reports_csv(const std::vector<MetricReport>& reports,
                             const std::vector<std::pair<int, std::uint64_t>>& mc_and_seed,
                             const std::filesystem::path& path);

// Band rows grouped by sigma section: columns sigma_q, x, mean, lo, hi.
void save_bands_csv(const std::vector<std::pair<double, std::vector<BandRow>>>& sections,
                    const std::filesystem::path& path);

}  // namespace tfb::io
