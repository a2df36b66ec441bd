#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/SparseCore>

namespace partopf {

enum class BusKind { slack, generator, load };

/// A network node. Power and shunt values are per-unit on the system base.
struct Bus {
  int id = 0;
  BusKind kind = BusKind::load;
  double p_demand = 0.0;
  double q_demand = 0.0;
  double shunt_g = 0.0;
  double shunt_b = 0.0;
  double v_magnitude = 1.0;  // Vm column, fallback slack set-point
  double v_min = 0.9;
  double v_max = 1.1;

  bool operator==(const Bus&) const = default;
};

/// A generator attached to `bus` (dense internal index). Injection bounds are
/// per-unit; cost coefficients apply to MW-scale power.
struct Generator {
  std::size_t bus = 0;
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  double v_setpoint = 1.0;
  double cost_a = 0.0;
  double cost_b = 0.0;
  double cost_c = 0.0;

  bool operator==(const Generator&) const = default;
};

/// Standard pi-model branch with an ideal transformer at the from end.
struct Branch {
  std::size_t from = 0;
  std::size_t to = 0;
  double r = 0.0;
  double x = 0.0;
  double b_charge = 0.0;
  double tap = 1.0;
  double shift = 0.0;  // radians
  bool in_service = true;

  bool operator==(const Branch&) const = default;
};

struct Network {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Generator> generators;
  std::vector<Branch> branches;
  std::map<int, std::size_t> bus_index;  // external label -> dense index

  std::size_t bus_count() const { return buses.size(); }

  /// Dense index of the bus labelled `id`; throws std::out_of_range.
  std::size_t index_of(int id) const;

  /// Index of the first slack bus, or bus_count() if none.
  std::size_t slack_bus() const;

  /// Voltage set-point of the reference bus: the first generator's Vg at the
  /// slack bus, or the bus's own Vm when no generator sits there.
  double slack_voltage() const;

  /// Rebuild `bus_index` from the bus list.
  void reindex();

  bool operator==(const Network& other) const {
    return base_mva == other.base_mva && buses == other.buses &&
           generators == other.generators && branches == other.branches;
  }
};

using ComplexSparse = Eigen::SparseMatrix<std::complex<double>>;

/// Bus admittance matrix Y = G + jB on dense bus indices.
struct AdmittanceMatrix {
  ComplexSparse y;

  std::complex<double> operator()(std::size_t i, std::size_t k) const {
    return y.coeff(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
  }
  Eigen::Index size() const { return y.rows(); }
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parse a MATPOWER-format case. Demands and shunts are converted to per-unit,
/// out-of-service generators and branches are dropped, file order is kept.
Network parse_case(std::string_view text);

Network load_case(const std::string& path);

/// Canonical MATPOWER text for `net`. Parsing the result reproduces `net`
/// exactly.
std::string write_case(const Network& net);

/// Throws NetworkError on a zero-impedance in-service branch.
AdmittanceMatrix build_ybus(const Network& net);

/// Human-readable invariant violations; empty iff the network is well formed
/// and its in-service branch graph is connected.
std::vector<std::string> validate(const Network& net);

}  // namespace partopf
