#include "partopf/network.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <queue>
#include <sstream>

namespace partopf {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

struct Row {
  std::size_t line = 0;
  std::vector<double> values;
};

struct Matrix {
  std::size_t line = 0;
  std::vector<Row> rows;
};

/// Character cursor over the case text that strips `%` comments.
class Scanner {
 public:
  explicit Scanner(std::string_view text) : text_(text) {}

  bool eof() const { return pos_ >= text_.size(); }
  std::size_t line() const { return line_; }
  char peek() const { return eof() ? '\0' : text_[pos_]; }

  char get() {
    char c = text_[pos_++];
    if (c == '\n') ++line_;
    return c;
  }

  void skip_comment() {
    while (!eof() && peek() != '\n') get();
  }

  /// Skip blanks; newlines too when `newlines` is set.
  void skip_space(bool newlines) {
    while (!eof()) {
      char c = peek();
      if (c == '%') {
        skip_comment();
      } else if (c == ' ' || c == '\t' || c == '\r' || (newlines && c == '\n')) {
        get();
      } else if (c == '.' && text_.substr(pos_, 3) == "...") {
        // line continuation
        skip_comment();
        if (!eof()) get();
      } else {
        break;
      }
    }
  }

  std::string word() {
    std::string out;
    while (!eof()) {
      char c = peek();
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
        out.push_back(get());
      } else {
        break;
      }
    }
    return out;
  }

  std::string number_token() {
    std::string out;
    while (!eof()) {
      char c = peek();
      if (std::isspace(static_cast<unsigned char>(c)) || c == ';' || c == ',' || c == ']' ||
          c == '%') {
        break;
      }
      out.push_back(get());
    }
    return out;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

double to_number(const std::string& token, std::size_t line) {
  if (token.empty()) throw ParseError(line, "expected a number");
  const char* begin = token.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end != begin + token.size()) {
    throw ParseError(line, "non-numeric token '" + token + "'");
  }
  return v;
}

Matrix read_matrix(Scanner& sc) {
  Matrix m;
  m.line = sc.line();
  sc.get();  // '['
  Row current;
  auto flush = [&] {
    if (!current.values.empty()) m.rows.push_back(std::move(current));
    current = Row{};
  };
  for (;;) {
    sc.skip_space(false);
    if (sc.eof()) throw ParseError(sc.line(), "unterminated matrix");
    char c = sc.peek();
    if (c == ']') {
      sc.get();
      flush();
      break;
    }
    if (c == ';' || c == '\n') {
      sc.get();
      flush();
      continue;
    }
    if (c == ',') {
      sc.get();
      continue;
    }
    if (current.values.empty()) current.line = sc.line();
    std::size_t line = sc.line();
    current.values.push_back(to_number(sc.number_token(), line));
  }
  return m;
}

void skip_balanced(Scanner& sc, char open, char close) {
  std::size_t start = sc.line();
  int depth = 0;
  bool in_string = false;
  while (!sc.eof()) {
    char c = sc.peek();
    if (in_string) {
      sc.get();
      if (c == '\'') in_string = false;
      continue;
    }
    if (c == '%') {
      sc.skip_comment();
      continue;
    }
    sc.get();
    if (c == '\'') {
      in_string = true;
    } else if (c == open) {
      ++depth;
    } else if (c == close && --depth == 0) {
      return;
    }
  }
  throw ParseError(start, std::string("unterminated '") + open + "'");
}

void skip_statement_end(Scanner& sc) {
  sc.skip_space(false);
  if (sc.peek() == ';') sc.get();
}

const Row& need_columns(const Row& row, std::size_t count, const char* field) {
  if (row.values.size() < count) {
    throw ParseError(row.line, std::string(field) + " row has " +
                                   std::to_string(row.values.size()) + " columns, expected at least " +
                                   std::to_string(count));
  }
  return row;
}

/// Smallest-distance double `s` with `forward(s) == target`, so that text
/// written in file units parses back to the identical per-unit value.
double invert_exactly(double target, double guess, const std::function<double(double)>& forward) {
  if (!std::isfinite(target) || forward(guess) == target) return guess;
  double lo = guess;
  double hi = guess;
  for (int step = 0; step < 64; ++step) {
    lo = std::nextafter(lo, -std::numeric_limits<double>::infinity());
    hi = std::nextafter(hi, std::numeric_limits<double>::infinity());
    if (forward(lo) == target) return lo;
    if (forward(hi) == target) return hi;
  }
  return guess;
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::size_t Network::index_of(int id) const {
  auto it = bus_index.find(id);
  if (it == bus_index.end()) throw std::out_of_range("unknown bus " + std::to_string(id));
  return it->second;
}

std::size_t Network::slack_bus() const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].kind == BusKind::slack) return i;
  }
  return buses.size();
}

double Network::slack_voltage() const {
  std::size_t s = slack_bus();
  if (s == buses.size()) return 1.0;
  for (const auto& g : generators) {
    if (g.bus == s) return g.v_setpoint;
  }
  return buses[s].v_magnitude;
}

void Network::reindex() {
  bus_index.clear();
  for (std::size_t i = 0; i < buses.size(); ++i) bus_index[buses[i].id] = i;
}

Network parse_case(std::string_view text) {
  Scanner sc(text);
  std::string name;
  std::optional<double> base;
  std::map<std::string, Matrix> matrices;

  for (;;) {
    sc.skip_space(true);
    if (sc.eof()) break;
    std::size_t line = sc.line();
    char c = sc.peek();
    if (c == ';') {
      sc.get();
      continue;
    }
    std::string head = sc.word();
    if (head.empty()) throw ParseError(line, std::string("unexpected character '") + c + "'");
    if (head == "function") {
      sc.skip_space(false);
      std::string rest;
      while (!sc.eof() && sc.peek() != '\n' && sc.peek() != '%') rest.push_back(sc.get());
      auto eq = rest.find('=');
      name = rest.substr(eq == std::string::npos ? 0 : eq + 1);
      while (!name.empty() && std::isspace(static_cast<unsigned char>(name.front()))) name.erase(0, 1);
      while (!name.empty() && std::isspace(static_cast<unsigned char>(name.back()))) name.pop_back();
      continue;
    }
    if (head.rfind("mpc.", 0) != 0 || head.size() <= 4) {
      throw ParseError(line, "expected 'mpc.<field> = ...', found '" + head + "'");
    }
    std::string field = head.substr(4);
    sc.skip_space(false);
    if (sc.peek() != '=') throw ParseError(line, "expected '=' after " + head);
    sc.get();
    sc.skip_space(false);
    bool known = field == "baseMVA" || field == "bus" || field == "gen" || field == "branch" ||
                 field == "gencost";
    char v = sc.peek();
    if (v == '[') {
      Matrix m = read_matrix(sc);
      if (known) {
        if (field == "baseMVA") throw ParseError(line, "baseMVA must be a scalar");
        matrices[field] = std::move(m);
      }
    } else if (v == '{') {
      if (known) throw ParseError(line, "cell array not allowed for " + field);
      skip_balanced(sc, '{', '}');
    } else if (v == '\'') {
      if (known) throw ParseError(line, "string not allowed for " + field);
      sc.get();
      while (!sc.eof() && sc.peek() != '\'' && sc.peek() != '\n') sc.get();
      if (sc.peek() != '\'') throw ParseError(line, "unterminated string");
      sc.get();
    } else {
      std::string token = sc.number_token();
      if (field == "baseMVA") {
        base = to_number(token, line);
      } else if (known) {
        throw ParseError(line, field + " must be a matrix");
      }
    }
    skip_statement_end(sc);
  }

  if (!base) throw ParseError(sc.line(), "missing required field baseMVA");
  for (const char* f : {"bus", "gen", "branch", "gencost"}) {
    if (!matrices.count(f)) throw ParseError(sc.line(), std::string("missing required matrix ") + f);
  }
  if (!(*base > 0.0)) throw ParseError(sc.line(), "baseMVA must be positive");

  Network net;
  net.name = name;
  net.base_mva = *base;
  const double mva = *base;

  for (const Row& row : matrices["bus"].rows) {
    need_columns(row, 13, "bus");
    const auto& r = row.values;
    Bus b;
    b.id = static_cast<int>(r[0]);
    if (static_cast<double>(b.id) != r[0]) throw ParseError(row.line, "bus id must be an integer");
    int type = static_cast<int>(r[1]);
    b.kind = type == 3 ? BusKind::slack : type == 2 ? BusKind::generator : BusKind::load;
    b.p_demand = r[2] / mva;
    b.q_demand = r[3] / mva;
    b.shunt_g = r[4] / mva;
    b.shunt_b = r[5] / mva;
    b.v_magnitude = r[7];
    b.v_max = r[11];
    b.v_min = r[12];
    if (net.bus_index.count(b.id)) {
      throw ParseError(row.line, "duplicate bus id " + std::to_string(b.id));
    }
    net.bus_index[b.id] = net.buses.size();
    net.buses.push_back(b);
  }

  auto resolve = [&](double label, std::size_t line) {
    auto it = net.bus_index.find(static_cast<int>(label));
    if (it == net.bus_index.end() || static_cast<double>(it->first) != label) {
      throw ParseError(line, "unknown bus reference " + fmt(label));
    }
    return it->second;
  };

  const auto& gen_rows = matrices["gen"].rows;
  const auto& cost_rows = matrices["gencost"].rows;
  if (cost_rows.size() < gen_rows.size()) {
    throw ParseError(matrices["gencost"].line, "gencost has fewer rows than gen");
  }
  for (std::size_t g = 0; g < gen_rows.size(); ++g) {
    const Row& row = need_columns(gen_rows[g], 10, "gen");
    const Row& cost = need_columns(cost_rows[g], 4, "gencost");
    const auto& r = row.values;
    const auto& c = cost.values;
    if (c[0] != 2.0) throw ParseError(cost.line, "only polynomial cost model 2 is supported");
    if (c[3] != 3.0) throw ParseError(cost.line, "polynomial cost must have exactly 3 coefficients");
    need_columns(cost, 7, "gencost");
    std::size_t bus = resolve(r[0], row.line);
    if (r[7] <= 0.0) continue;
    Generator gen;
    gen.bus = bus;
    gen.q_max = r[3] / mva;
    gen.q_min = r[4] / mva;
    gen.v_setpoint = r[5];
    gen.p_max = r[8] / mva;
    gen.p_min = r[9] / mva;
    gen.cost_a = c[4];
    gen.cost_b = c[5];
    gen.cost_c = c[6];
    net.generators.push_back(gen);
  }

  for (const Row& row : matrices["branch"].rows) {
    need_columns(row, 11, "branch");
    const auto& r = row.values;
    Branch br;
    br.from = resolve(r[0], row.line);
    br.to = resolve(r[1], row.line);
    br.r = r[2];
    br.x = r[3];
    br.b_charge = r[4];
    br.tap = r[8] == 0.0 ? 1.0 : r[8];
    br.shift = r[9] * kDegToRad;
    br.in_service = r[10] > 0.0;
    if (!br.in_service) continue;
    net.branches.push_back(br);
  }
  return net;
}

Network load_case(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NetworkError("cannot open case file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  Network net = parse_case(ss.str());
  if (net.name.empty()) {
    auto slash = path.find_last_of('/');
    std::string stem = path.substr(slash == std::string::npos ? 0 : slash + 1);
    net.name = stem.substr(0, stem.find('.'));
  }
  return net;
}

std::string write_case(const Network& net) {
  const double mva = net.base_mva;
  auto per_unit = [mva](double pu) {
    return fmt(invert_exactly(pu, pu * mva, [mva](double s) { return s / mva; }));
  };
  auto degrees = [](double rad) {
    return fmt(invert_exactly(rad, rad / kDegToRad, [](double d) { return d * kDegToRad; }));
  };

  std::ostringstream out;
  out << "function mpc = " << (net.name.empty() ? "network" : net.name) << "\n";
  out << "mpc.version = '2';\n";
  out << "mpc.baseMVA = " << fmt(mva) << ";\n\n";

  out << "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n";
  out << "mpc.bus = [\n";
  for (const Bus& b : net.buses) {
    int type = b.kind == BusKind::slack ? 3 : b.kind == BusKind::generator ? 2 : 1;
    out << '\t' << b.id << '\t' << type << '\t' << per_unit(b.p_demand) << '\t'
        << per_unit(b.q_demand) << '\t' << per_unit(b.shunt_g) << '\t' << per_unit(b.shunt_b)
        << "\t1\t" << fmt(b.v_magnitude) << "\t0\t0\t1\t" << fmt(b.v_max) << '\t' << fmt(b.v_min)
        << ";\n";
  }
  out << "];\n\n";

  out << "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\n";
  out << "mpc.gen = [\n";
  for (const Generator& g : net.generators) {
    out << '\t' << net.buses[g.bus].id << "\t0\t0\t" << per_unit(g.q_max) << '\t'
        << per_unit(g.q_min) << '\t' << fmt(g.v_setpoint) << '\t' << fmt(mva) << "\t1\t"
        << per_unit(g.p_max) << '\t' << per_unit(g.p_min) << ";\n";
  }
  out << "];\n\n";

  out << "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\n";
  out << "mpc.branch = [\n";
  for (const Branch& br : net.branches) {
    out << '\t' << net.buses[br.from].id << '\t' << net.buses[br.to].id << '\t' << fmt(br.r)
        << '\t' << fmt(br.x) << '\t' << fmt(br.b_charge) << "\t0\t0\t0\t" << fmt(br.tap) << '\t'
        << degrees(br.shift) << '\t' << (br.in_service ? 1 : 0) << ";\n";
  }
  out << "];\n\n";

  out << "%\t2\tstartup\tshutdown\tn\tc2\tc1\tc0\n";
  out << "mpc.gencost = [\n";
  for (const Generator& g : net.generators) {
    out << "\t2\t0\t0\t3\t" << fmt(g.cost_a) << '\t' << fmt(g.cost_b) << '\t' << fmt(g.cost_c)
        << ";\n";
  }
  out << "];\n";
  return out.str();
}

AdmittanceMatrix build_ybus(const Network& net) {
  using C = std::complex<double>;
  const auto n = static_cast<Eigen::Index>(net.buses.size());
  std::vector<Eigen::Triplet<C>> trip;
  trip.reserve(net.branches.size() * 4 + net.buses.size());
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const Bus& b = net.buses[i];
    auto ii = static_cast<Eigen::Index>(i);
    trip.emplace_back(ii, ii, C(b.shunt_g, b.shunt_b));
  }
  for (std::size_t e = 0; e < net.branches.size(); ++e) {
    const Branch& br = net.branches[e];
    if (!br.in_service) continue;
    C z(br.r, br.x);
    if (std::abs(z) == 0.0) {
      throw NetworkError("branch " + std::to_string(e) + " has zero series impedance");
    }
    C y = 1.0 / z;
    C charge(0.0, br.b_charge / 2.0);
    C t = std::polar(br.tap, br.shift);
    auto f = static_cast<Eigen::Index>(br.from);
    auto k = static_cast<Eigen::Index>(br.to);
    trip.emplace_back(f, f, (y + charge) / (br.tap * br.tap));
    trip.emplace_back(k, k, y + charge);
    trip.emplace_back(f, k, -y / std::conj(t));
    trip.emplace_back(k, f, -y / t);
  }
  AdmittanceMatrix ybus;
  ybus.y.resize(n, n);
  ybus.y.setFromTriplets(trip.begin(), trip.end());
  ybus.y.makeCompressed();
  return ybus;
}

std::vector<std::string> validate(const Network& net) {
  std::vector<std::string> out;
  const std::size_t n = net.buses.size();
  if (!(net.base_mva > 0.0)) out.emplace_back("base_mva must be positive");
  if (n == 0) {
    out.emplace_back("no buses");
    return out;
  }

  std::size_t slacks = 0;
  for (const Bus& b : net.buses) {
    if (b.kind == BusKind::slack) ++slacks;
    std::string tag = "bus " + std::to_string(b.id);
    if (!(b.v_min > 0.0)) out.push_back(tag + ": v_min must be positive");
    if (!(b.v_min <= b.v_max)) out.push_back(tag + ": v_min exceeds v_max");
  }
  if (slacks == 0) out.emplace_back("no slack bus");
  if (slacks > 1) out.emplace_back("multiple slack buses");

  if (net.generators.empty()) out.emplace_back("no generators");
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const Generator& gen = net.generators[g];
    std::string tag = "generator " + std::to_string(g);
    if (gen.bus >= n) out.push_back(tag + ": unknown bus reference");
    if (!(gen.p_min <= gen.p_max)) out.push_back(tag + ": p_min exceeds p_max");
    if (!(gen.q_min <= gen.q_max)) out.push_back(tag + ": q_min exceeds q_max");
    if (gen.cost_a < 0.0) out.push_back(tag + ": negative quadratic cost");
  }

  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t e = 0; e < net.branches.size(); ++e) {
    const Branch& br = net.branches[e];
    std::string tag = "branch " + std::to_string(e);
    if (br.from >= n || br.to >= n) {
      out.push_back(tag + ": unknown bus reference");
      continue;
    }
    if (br.from == br.to) out.push_back(tag + ": from and to bus coincide");
    if (!(br.tap > 0.0)) out.push_back(tag + ": tap must be positive");
    if (!br.in_service) continue;
    if (br.r * br.r + br.x * br.x == 0.0) out.push_back(tag + ": zero series impedance");
    adj[br.from].push_back(br.to);
    adj[br.to].push_back(br.from);
  }

  std::vector<char> seen(n, 0);
  std::queue<std::size_t> q;
  q.push(0);
  seen[0] = 1;
  std::size_t reached = 1;
  while (!q.empty()) {
    std::size_t u = q.front();
    q.pop();
    for (std::size_t v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        q.push(v);
      }
    }
  }
  if (reached != n) out.emplace_back("disconnected");
  return out;
}

}  // namespace partopf
