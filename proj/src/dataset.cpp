#include "svcam/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "svcam/error.hpp"

namespace svcam {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Schema: return "schema error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::EmptyData: return "empty data";
    case ErrorKind::InvalidData: return "invalid data";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::KnotPlacement: return "knot placement error";
    case ErrorKind::SingularFit: return "singular local fit";
    case ErrorKind::PilotSingular: return "singular pilot design";
    case ErrorKind::Selection: return "selection error";
    case ErrorKind::Extrapolation: return "extrapolation error";
    case ErrorKind::Degenerate: return "degenerate statistic";
    case ErrorKind::Unavailable: return "estimate unavailable";
    case ErrorKind::Argument: return "argument error";
    case ErrorKind::Io: return "I/O error";
  }
  return "error";
}

namespace {

Interval observed_range(std::span<const double> v) {
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return {*lo, *hi};
}

}  // namespace

LongitudinalDataset::LongitudinalDataset(std::vector<SubjectRecord> subjects, std::size_t p,
                                         std::size_t q, std::optional<Interval> time_support,
                                         std::vector<Interval> covariate_supports)
    : p_(p), q_(q) {
  if (subjects.empty()) throw Error(ErrorKind::EmptyData, "dataset has no subjects");
  std::size_t total = 0;
  for (const auto& s : subjects) {
    const std::size_t m = s.times.size();
    if (m == 0) throw Error(ErrorKind::InvalidData, "subject '" + s.id + "' has no observations");
    if (s.responses.size() != m || static_cast<std::size_t>(s.z.rows()) != (q ? m : s.z.rows()) ||
        static_cast<std::size_t>(s.x.rows()) != (p ? m : s.x.rows()))
      throw Error(ErrorKind::InvalidData, "subject '" + s.id + "' has unequal sequence lengths");
    if (static_cast<std::size_t>(s.z.cols()) != q || static_cast<std::size_t>(s.x.cols()) != p)
      throw Error(ErrorKind::InvalidData, "subject '" + s.id + "' has wrong covariate count");
    total += m;
  }

  times_.reserve(total);
  y_.reserve(total);
  obs_weight_.reserve(total);
  subject_of_.reserve(total);
  z_.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(q));
  x_.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(p));
  std::size_t row = 0;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    auto& s = subjects[i];
    const std::size_t m = s.times.size();
    for (std::size_t j = 0; j < m; ++j, ++row) {
      if (!std::isfinite(s.times[j]) || !std::isfinite(s.responses[j]))
        throw Error(ErrorKind::InvalidData, "non-finite value in subject '" + s.id + "'");
      times_.push_back(s.times[j]);
      y_.push_back(s.responses[j]);
      obs_weight_.push_back(1.0 / static_cast<double>(m));
      subject_of_.push_back(i);
      for (std::size_t l = 0; l < q; ++l) z_(row, l) = s.z(j, l);
      for (std::size_t k = 0; k < p; ++k) x_(row, k) = s.x(j, k);
    }
    ids_.push_back(std::move(s.id));
    offsets_.push_back(row);
  }
  if (!z_.allFinite() || !x_.allFinite())
    throw Error(ErrorKind::InvalidData, "non-finite covariate value");

  time_support_ = time_support.value_or(observed_range(times_));
  if (covariate_supports.empty()) {
    for (std::size_t k = 0; k < p; ++k) covariate_supports.push_back(observed_range(x_column(k)));
  }
  if (covariate_supports.size() != p)
    throw Error(ErrorKind::InvalidData, "covariate support count differs from p");
  covariate_supports_ = std::move(covariate_supports);

  for (double t : times_) {
    if (!time_support_.contains(t))
      throw Error(ErrorKind::InvalidData, "observation time outside the time support");
  }
}

Eigen::VectorXd LongitudinalDataset::z_aug(std::size_t obs) const {
  Eigen::VectorXd v(q_ + 1);
  v[0] = 1.0;
  for (std::size_t l = 0; l < q_; ++l) v[l + 1] = z_(obs, l);
  return v;
}

std::vector<double> LongitudinalDataset::x_column(std::size_t k) const {
  std::vector<double> col(N());
  for (std::size_t r = 0; r < N(); ++r) col[r] = x_(r, k);
  return col;
}

std::size_t LongitudinalDataset::singleton_count() const {
  std::size_t count = 0;
  for (std::size_t i = 0; i < n(); ++i) count += m(i) == 1;
  return count;
}

std::vector<SubjectRecord> LongitudinalDataset::records() const {
  std::vector<SubjectRecord> out;
  out.reserve(n());
  for (std::size_t i = 0; i < n(); ++i) {
    SubjectRecord s;
    s.id = ids_[i];
    const auto b = offsets_[i];
    const auto m_i = m(i);
    s.times.assign(times_.begin() + b, times_.begin() + b + m_i);
    s.responses.assign(y_.begin() + b, y_.begin() + b + m_i);
    s.z = z_.middleRows(b, m_i);
    s.x = x_.middleRows(b, m_i);
    out.push_back(std::move(s));
  }
  return out;
}

LongitudinalDataset LongitudinalDataset::with_responses(std::span<const double> y) const {
  if (y.size() != N()) throw Error(ErrorKind::InvalidData, "response vector length differs from N");
  LongitudinalDataset copy = *this;
  copy.y_.assign(y.begin(), y.end());
  return copy;
}

LongitudinalDataset LongitudinalDataset::without_subject(std::size_t i) const {
  if (i >= n()) throw Error(ErrorKind::Argument, "subject index out of range");
  auto recs = records();
  recs.erase(recs.begin() + static_cast<std::ptrdiff_t>(i));
  return LongitudinalDataset(std::move(recs), p_, q_);
}

LongitudinalDataset LongitudinalDataset::with_supports(Interval time_support,
                                                       std::vector<Interval> covariate_supports) const {
  return LongitudinalDataset(records(), p_, q_, time_support, std::move(covariate_supports));
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

// Columns named <prefix><integer>, ordered by the integer.
std::vector<std::string> detect_indexed(const std::vector<std::string>& header, char prefix) {
  std::vector<std::pair<int, std::string>> found;
  for (const auto& h : header) {
    if (h.size() < 2 || h[0] != prefix) continue;
    int idx = 0;
    auto [ptr, ec] = std::from_chars(h.data() + 1, h.data() + h.size(), idx);
    if (ec == std::errc() && ptr == h.data() + h.size()) found.emplace_back(idx, h);
  }
  std::sort(found.begin(), found.end());
  std::vector<std::string> names;
  for (auto& f : found) names.push_back(f.second);
  return names;
}

double parse_number(const std::string& cell, std::size_t line_no, const std::string& column) {
  double v = 0.0;
  const char* b = cell.data();
  const char* e = cell.data() + cell.size();
  if (!cell.empty() && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (cell.empty() || ec != std::errc() || ptr != e || !std::isfinite(v))
    throw Error(ErrorKind::Parse, "non-numeric value '" + cell + "' in column '" + column +
                                      "' at line " + std::to_string(line_no));
  return v;
}

}  // namespace

LongitudinalDataset parse_longitudinal(const std::string& text, const ColumnSchema& schema) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv(line);
      break;
    }
  }
  if (header.empty()) throw Error(ErrorKind::EmptyData, "file is empty");

  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t c = 0; c < header.size(); ++c) col.emplace(header[c], c);
  auto require = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw Error(ErrorKind::Schema, "missing column '" + name + "'");
    return it->second;
  };

  const std::size_t c_subject = require(schema.subject);
  const std::size_t c_time = require(schema.time);
  const std::size_t c_y = require(schema.response);
  auto z_names = schema.z_columns;
  auto x_names = schema.x_columns;
  if (schema.detect && z_names.empty()) z_names = detect_indexed(header, 'z');
  if (schema.detect && x_names.empty()) x_names = detect_indexed(header, 'x');
  std::vector<std::size_t> c_z, c_x;
  for (const auto& nm : z_names) c_z.push_back(require(nm));
  for (const auto& nm : x_names) c_x.push_back(require(nm));
  const std::size_t q = c_z.size(), p = c_x.size();

  struct Rows {
    std::vector<double> t, y;
    std::vector<std::vector<double>> z, x;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, Rows> groups;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + " has " +
                                        std::to_string(cells.size()) + " fields, expected " +
                                        std::to_string(header.size()));
    const auto& sid = cells[c_subject];
    auto [it, inserted] = groups.try_emplace(sid);
    if (inserted) order.push_back(sid);
    Rows& g = it->second;
    g.t.push_back(parse_number(cells[c_time], line_no, schema.time));
    g.y.push_back(parse_number(cells[c_y], line_no, schema.response));
    std::vector<double> zr(q), xr(p);
    for (std::size_t l = 0; l < q; ++l) zr[l] = parse_number(cells[c_z[l]], line_no, z_names[l]);
    for (std::size_t k = 0; k < p; ++k) xr[k] = parse_number(cells[c_x[k]], line_no, x_names[k]);
    g.z.push_back(std::move(zr));
    g.x.push_back(std::move(xr));
  }
  if (order.empty()) throw Error(ErrorKind::EmptyData, "file has a header but no data rows");

  std::vector<SubjectRecord> subjects;
  subjects.reserve(order.size());
  for (const auto& sid : order) {
    Rows& g = groups[sid];
    SubjectRecord s;
    s.id = sid;
    const auto m = static_cast<Eigen::Index>(g.t.size());
    s.times = std::move(g.t);
    s.responses = std::move(g.y);
    s.z.resize(m, static_cast<Eigen::Index>(q));
    s.x.resize(m, static_cast<Eigen::Index>(p));
    for (Eigen::Index j = 0; j < m; ++j) {
      for (std::size_t l = 0; l < q; ++l) s.z(j, l) = g.z[j][l];
      for (std::size_t k = 0; k < p; ++k) s.x(j, k) = g.x[j][k];
    }
    subjects.push_back(std::move(s));
  }
  return LongitudinalDataset(std::move(subjects), p, q);
}

LongitudinalDataset load_longitudinal(const std::string& path, const ColumnSchema& schema) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_longitudinal(ss.str(), schema);
}

std::string format_longitudinal(const LongitudinalDataset& ds) {
  std::string out = "subject,time,y";
  for (std::size_t l = 0; l < ds.q(); ++l) out += ",z" + std::to_string(l + 1);
  for (std::size_t k = 0; k < ds.p(); ++k) out += ",x" + std::to_string(k + 1);
  out += '\n';
  char buf[32];
  auto num = [&](double v) {
    // 17 significant digits round-trip every double exactly.
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += ',';
    out += buf;
  };
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t r = ds.offset(i); r < ds.offset(i + 1); ++r) {
      out += ds.id(i);
      num(ds.t(r));
      num(ds.y(r));
      for (std::size_t l = 0; l < ds.q(); ++l) num(ds.z(r, l));
      for (std::size_t k = 0; k < ds.p(); ++k) num(ds.x(r, k));
      out += '\n';
    }
  }
  return out;
}

void write_longitudinal(const std::string& path, const LongitudinalDataset& ds) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  f << format_longitudinal(ds);
}

SampleSummary summarize(const LongitudinalDataset& ds) {
  SampleSummary s;
  s.n = ds.n();
  s.N = ds.N();
  double inv_sum = 0.0, sq_sum = 0.0;
  bool balanced = true;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const double m = static_cast<double>(ds.m(i));
    inv_sum += 1.0 / m;
    sq_sum += m * m;
    balanced = balanced && ds.m(i) == ds.m(0);
  }
  const double n = static_cast<double>(s.n);
  s.nbar_h = balanced && s.n > 0 ? static_cast<double>(ds.m(0)) : n / inv_sum;
  s.nbar_2 = sq_sum / n;
  return s;
}

double subj_weight(const LongitudinalDataset& ds, std::size_t i) {
  if (i >= ds.n()) throw Error(ErrorKind::Argument, "subject index " + std::to_string(i) + " out of range");
  return 1.0 / static_cast<double>(ds.m(i));
}

}  // namespace svcam
