#include "sofia/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <string_view>

#include "sofia/errors.hpp"

namespace sofia {

namespace {

struct Record {
  Index index;
  std::size_t step;
  double value;
};

std::vector<std::string_view> split(std::string_view line, char delimiter) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delimiter, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

long long parse_integer(std::string_view field, std::size_t line, const char* what) {
  field = trim(field);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
    throw ParseError(line, std::string("non-integer ") + what + " '" + std::string(field) + "'");
  return v;
}

double parse_real(std::string_view field, std::size_t line) {
  field = trim(field);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
    throw ParseError(line, "non-numeric value '" + std::string(field) + "'");
  return v;
}

void write_row(std::FILE* f, const Index& idx, std::size_t t, double value) {
  for (std::size_t k : idx) std::fprintf(f, "%zu,", k);
  std::fprintf(f, "%zu,%.17g\n", t, value);
}

std::FILE* open_for_write(const std::filesystem::path& path, std::size_t modes) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (std::size_t k = 0; k < modes; ++k) std::fprintf(f, "i%zu,", k);
  std::fprintf(f, "t,value\n");
  return f;
}

}  // namespace

TripleSchema TripleSchema::positional(std::size_t index_modes) {
  TripleSchema s;
  for (std::size_t k = 0; k < index_modes; ++k) s.index_columns.push_back(k);
  s.time_column = index_modes;
  s.value_column = index_modes + 1;
  return s;
}

TensorStream ingest_triples(const std::filesystem::path& path, const IngestOptions& options) {
  const TripleSchema& schema = options.schema;
  if (schema.index_columns.empty()) throw ConfigError("schema needs at least one index column");
  if (options.granularity == 0) throw ConfigError("granularity must be positive");
  if (!options.shape.empty() && options.shape.size() != schema.index_columns.size())
    throw ConfigError("declared shape does not match the number of index columns");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  std::size_t width = std::max(schema.time_column, schema.value_column);
  for (std::size_t c : schema.index_columns) width = std::max(width, c);
  ++width;

  const std::size_t modes = schema.index_columns.size();
  std::vector<Record> records;
  Shape seen(modes, 0);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && schema.header) continue;
    if (trim(line).empty()) continue;
    const auto fields = split(line, schema.delimiter);
    if (fields.size() != width)
      throw ParseError(line_no, "expected " + std::to_string(width) + " columns, got " + std::to_string(fields.size()));
    Record rec;
    rec.index.resize(modes);
    for (std::size_t k = 0; k < modes; ++k) {
      const long long v = parse_integer(fields[schema.index_columns[k]], line_no, "index");
      if (v < 0 || (!options.shape.empty() && static_cast<std::size_t>(v) >= options.shape[k]))
        throw BoundsError("line " + std::to_string(line_no) + ": index " + std::to_string(v) +
                          " outside mode " + std::to_string(k));
      rec.index[k] = static_cast<std::size_t>(v);
      seen[k] = std::max(seen[k], rec.index[k] + 1);
    }
    const long long t = parse_integer(fields[schema.time_column], line_no, "time");
    if (t < 0) throw BoundsError("line " + std::to_string(line_no) + ": negative time");
    rec.step = static_cast<std::size_t>(t) / options.granularity;
    rec.value = parse_real(fields[schema.value_column], line_no);
    if (options.log2_transform) rec.value = std::log2(rec.value + 1.0);
    records.push_back(std::move(rec));
  }

  TensorStream stream;
  stream.shape = options.shape.empty() ? seen : options.shape;
  if (records.empty()) return stream;

  std::size_t steps = 0;
  for (const auto& r : records) steps = std::max(steps, r.step + 1);
  stream.slices.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t)
    stream.slices.push_back({DenseTensor(stream.shape), ObservationMask(stream.shape)});
  for (const auto& r : records) {
    MaskedSlice& slice = stream.slices[r.step];
    const std::size_t flat = slice.values.flat_index(r.index);
    if (slice.mask.test(flat)) ++stream.duplicates;
    slice.values[flat] = r.value;
    slice.mask.set(flat);
  }
  return stream;
}

void write_triples(const std::filesystem::path& path, const std::vector<MaskedSlice>& slices) {
  const std::size_t modes = slices.empty() ? 0 : slices.front().values.order();
  std::FILE* f = open_for_write(path, modes);
  for (std::size_t t = 0; t < slices.size(); ++t) {
    const auto& s = slices[t];
    for (std::size_t i = 0; i < s.values.size(); ++i)
      if (s.mask.test(i)) write_row(f, s.values.multi_index(i), t, s.values[i]);
  }
  std::fclose(f);
}

void write_dense_triples(const std::filesystem::path& path, const std::vector<DenseTensor>& slices) {
  const std::size_t modes = slices.empty() ? 0 : slices.front().order();
  std::FILE* f = open_for_write(path, modes);
  for (std::size_t t = 0; t < slices.size(); ++t)
    for (std::size_t i = 0; i < slices[t].size(); ++i) write_row(f, slices[t].multi_index(i), t, slices[t][i]);
  std::fclose(f);
}

}  // namespace sofia
