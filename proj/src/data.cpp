#include "pcedtr/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "pcedtr/errors.hpp"

namespace pcedtr {

namespace {

std::string row_tag(int row) {
  return row >= 0 ? " (row " + std::to_string(row) + ")" : "";
}

}  // namespace

void validate(const Trajectory& t, int row) {
  if (t.a1 != 1 && t.a1 != -1)
    throw ValidationError("a1 must be -1 or +1" + row_tag(row));
  if (!(t.d_obs1 >= 0.0 && t.d_obs1 <= 1.0))
    throw ValidationError("d_obs1 outside [0,1]" + row_tag(row));
  if (t.s != 0 && t.s != 1)
    throw ValidationError("s must be 0 or 1" + row_tag(row));
  if (!std::isfinite(t.y))
    throw ValidationError("y must be finite" + row_tag(row));
  if (t.s == 1) {
    if (t.a2 || t.d_obs2 || t.x1)
      throw ValidationError(
          "responder (s=1) must not carry a2, d_obs2 or x1" + row_tag(row));
  } else {
    if (!t.a2)
      throw ValidationError("non-responder (s=0) must carry a2" + row_tag(row));
    if (*t.a2 != 1 && *t.a2 != -1)
      throw ValidationError("a2 must be -1 or +1" + row_tag(row));
    if (*t.a2 == -1 && t.d_obs2)
      throw ValidationError("a2=-1 must not carry d_obs2" + row_tag(row));
    if (*t.a2 == 1) {
      if (!t.d_obs2)
        throw ValidationError("a2=+1 requires d_obs2" + row_tag(row));
      if (!(*t.d_obs2 >= 0.0 && *t.d_obs2 <= 1.0))
        throw ValidationError("d_obs2 outside [0,1]" + row_tag(row));
    }
  }
}

int classify_sequence(const Trajectory& t) {
  validate(t);
  if (t.a1 == 1) {
    if (t.s == 1) return 1;
    return *t.a2 == 1 ? 2 : 3;
  }
  if (t.s == 1) return 4;
  return *t.a2 == 1 ? 5 : 6;
}

std::array<SlotState, 4> slot_states(int k) {
  using S = SlotState;
  switch (k) {
    case 1: return {S::observed, S::latent, S::inert, S::inert};
    case 2: return {S::observed, S::latent, S::observed, S::inert};
    case 3: return {S::observed, S::latent, S::latent, S::inert};
    case 4: return {S::latent, S::observed, S::inert, S::inert};
    case 5: return {S::latent, S::observed, S::inert, S::observed};
    case 6: return {S::latent, S::observed, S::inert, S::latent};
    default: throw ValidationError("sequence index must be in 1..6");
  }
}

namespace {
std::vector<int> slots_with(int k, SlotState want) {
  std::vector<int> out;
  const auto st = slot_states(k);
  for (int j = 0; j < 4; ++j)
    if (st[static_cast<std::size_t>(j)] == want) out.push_back(j);
  return out;
}
}  // namespace

std::vector<int> latent_slots(int k) { return slots_with(k, SlotState::latent); }
std::vector<int> observed_slots(int k) {
  return slots_with(k, SlotState::observed);
}
std::vector<int> inert_slots(int k) { return slots_with(k, SlotState::inert); }

const std::vector<int>& active_slots(int k) {
  static const std::vector<int> tab[6] = {{0, 1},    {0, 1, 2}, {0, 1, 2},
                                          {0, 1},    {0, 1, 3}, {0, 1, 3}};
  if (k < 1 || k > 6) throw ValidationError("sequence index must be in 1..6");
  return tab[k - 1];
}

void validate(const Dataset& ds) {
  if (ds.n() < 1) throw ValidationError("dataset must contain at least one row");
  int row = 1;
  for (const auto& t : ds.trajectories) {
    if (t.x0.size() != ds.m1)
      throw ValidationError("x0 dimension mismatch" + row_tag(row));
    if (t.x1 && t.x1->size() != ds.m2)
      throw ValidationError("x1 dimension mismatch" + row_tag(row));
    validate(t, row);
    ++row;
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool empty_cell(const std::string& s) {
  for (char c : s)
    if (c != ' ' && c != '\t') return false;
  return true;
}

double parse_double(const std::string& s, const char* what, int row) {
  double v;
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{})
    throw ValidationError(std::string("cannot parse ") + what + row_tag(row));
  return v;
}

int parse_int(const std::string& s, const char* what, int row) {
  const double v = parse_double(s, what, row);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v)
    throw ValidationError(std::string(what) + " must be an integer" + row_tag(row));
  return i;
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

Dataset read_csv(std::istream& in) {
  std::string line;
  // skip comment lines, find header
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') break;
  }
  if (line.empty() || line[0] == '#')
    throw ValidationError("missing CSV header");
  const auto header = split_csv_line(line);

  int m1 = 0, m2 = 0;
  std::size_t pos = 0;
  auto expect = [&](const std::string& name) {
    if (pos >= header.size() || header[pos] != name)
      throw ValidationError("missing required column '" + name + "'");
    ++pos;
  };
  expect("id");
  while (pos < header.size() &&
         header[pos] == "x0_" + std::to_string(m1 + 1)) {
    ++m1;
    ++pos;
  }
  expect("a1");
  expect("d_obs1");
  expect("s");
  while (pos < header.size() &&
         header[pos] == "x1_" + std::to_string(m2 + 1)) {
    ++m2;
    ++pos;
  }
  expect("a2");
  expect("d_obs2");
  expect("y");
  if (pos != header.size())
    throw ValidationError("unexpected trailing columns in header");

  Dataset ds;
  ds.m1 = m1;
  ds.m2 = m2;
  const std::size_t ncols = header.size();
  int row = 1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != ncols)
      throw ValidationError("wrong column count" + row_tag(row));
    Trajectory t;
    std::size_t c = 0;
    t.id = cells[c++];
    t.x0.resize(m1);
    for (int j = 0; j < m1; ++j)
      t.x0[j] = parse_double(cells[c++], "x0", row);
    t.a1 = parse_int(cells[c++], "a1", row);
    t.d_obs1 = parse_double(cells[c++], "d_obs1", row);
    t.s = parse_int(cells[c++], "s", row);
    Eigen::VectorXd x1(m2);
    bool x1_any = false, x1_all = true;
    for (int j = 0; j < m2; ++j) {
      if (empty_cell(cells[c])) {
        x1_all = false;
        ++c;
      } else {
        x1[j] = parse_double(cells[c++], "x1", row);
        x1_any = true;
      }
    }
    if (m2 > 0 && x1_any && !x1_all)
      throw ValidationError("partially filled x1 cells" + row_tag(row));
    if (t.s == 0) t.x1 = x1;  // possibly length 0
    if (t.s == 1 && x1_any)
      throw ValidationError("responder with x1 fields" + row_tag(row));
    if (!empty_cell(cells[c])) t.a2 = parse_int(cells[c], "a2", row);
    ++c;
    if (!empty_cell(cells[c])) t.d_obs2 = parse_double(cells[c], "d_obs2", row);
    ++c;
    t.y = parse_double(cells[c++], "y", row);
    validate(t, row);
    ds.trajectories.push_back(std::move(t));
    ++row;
  }
  validate(ds);
  return ds;
}

Dataset read_csv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open file: " + path);
  return read_csv(f);
}

void write_csv(const Dataset& ds, std::ostream& out,
               const std::string& header_comment) {
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "id";
  for (int j = 1; j <= ds.m1; ++j) out << ",x0_" << j;
  out << ",a1,d_obs1,s";
  for (int j = 1; j <= ds.m2; ++j) out << ",x1_" << j;
  out << ",a2,d_obs2,y\n";
  for (const auto& t : ds.trajectories) {
    out << t.id;
    for (int j = 0; j < ds.m1; ++j) out << ',' << format_double(t.x0[j]);
    out << ',' << t.a1 << ',' << format_double(t.d_obs1) << ',' << t.s;
    for (int j = 0; j < ds.m2; ++j) {
      out << ',';
      if (t.x1) out << format_double((*t.x1)[j]);
    }
    out << ',';
    if (t.a2) out << *t.a2;
    out << ',';
    if (t.d_obs2) out << format_double(*t.d_obs2);
    out << ',' << format_double(t.y) << "\n";
  }
}

void write_csv_file(const Dataset& ds, const std::string& path,
                    const std::string& header_comment) {
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot open file for writing: " + path);
  write_csv(ds, f, header_comment);
}

}  // namespace pcedtr
