#pragma once

// Run specifications and the config-file front end.
//
// Config format: INI-style sections, '#' comments, key = value lines.
//
//   [model]
//   p = 1/3            # P[Y = +1]; fractions parse exactly
//   lambda = 2         # shorthand for arrival = exp:2
//   b = 1              # deterministic service time
//   # phase-type service instead of b:
//   #   mu = 2
//   #   kappa = 0.3,0.7
//   # other arrival families:
//   #   arrival = erlang:2,3 | det:1.5 | hyperexp:0.4,0.6;1,2
//
//   [engine]
//   command = md       # optional; defaults from the model shape
//   eps_tail = 1e-10
//   tol = 1e-6
//   n = 2000
//   samples = 1000000
//   burn_in = 10000
//   replications = 1
//   seed = 42
//
//   [output]
//   dir = out
//   csv = cdf.csv
//   json = summary.json
//   samples_csv =      # nonempty: dump simulator samples, one per line
//   x_max = 10
//   step = 0.01
//
// Every parse or validation error names the config line it came from.

#include <lq/dist.hpp>

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace lq {

enum class Command { Giph, Md, FixedPoint, Simulate, Validate };

inline const char* command_name(Command c) {
  switch (c) {
    case Command::Giph: return "giph";
    case Command::Md: return "md";
    case Command::FixedPoint: return "fixedpoint";
    case Command::Simulate: return "simulate";
    case Command::Validate: return "validate";
  }
  return "?";
}

inline bool command_from_name(const std::string& s, Command& out) {
  if (s == "giph") out = Command::Giph;
  else if (s == "md") out = Command::Md;
  else if (s == "fixedpoint") out = Command::FixedPoint;
  else if (s == "simulate") out = Command::Simulate;
  else if (s == "validate") out = Command::Validate;
  else return false;
  return true;
}

struct GridSpec {
  double x_max = 10.0;
  double step = 0.01;
  bool operator==(const GridSpec&) const = default;
};

struct EngineOptions {
  double eps_tail = 1e-10;
  double tol = 1e-6;
  int n = 2000;
  long samples = 1000000;
  long burn_in = 10000;
  int replications = 1;
  uint64_t seed = 42;
  bool operator==(const EngineOptions&) const = default;
};

struct OutputSpec {
  std::string dir = ".";
  std::string csv = "cdf.csv";
  std::string json = "summary.json";
  std::string samples_csv;  // empty: no sample dump
  GridSpec grid;
  bool operator==(const OutputSpec&) const = default;
};

inline bool same_law(const Interarrival& a, const Interarrival& b) {
  return a.family() == b.family() && a.shape() == b.shape() &&
         a.det_value() == b.det_value() && a.weights() == b.weights() &&
         a.rates() == b.rates();
}

inline bool same_law(const ServiceLaw& a, const ServiceLaw& b) {
  if (a.index() != b.index()) return false;
  if (const auto* m = std::get_if<MixedErlang>(&a)) {
    const auto& o = std::get<MixedErlang>(b);
    return m->mu() == o.mu() && m->kappa() == o.kappa();
  }
  return std::get<DetService>(a).b == std::get<DetService>(b).b;
}

inline bool operator==(const ModelParams& a, const ModelParams& b) {
  return a.p == b.p && same_law(a.arrival, b.arrival) &&
         same_law(a.service, b.service);
}

struct RunSpec {
  Command command = Command::Validate;
  ModelParams model{0.5, Interarrival::exponential(1.0), DetService{1.0}};
  EngineOptions engine;
  OutputSpec output;

  bool operator==(const RunSpec& o) const {
    return command == o.command && model == o.model && engine == o.engine &&
           output == o.output;
  }
};

// Engine applicability, also used to pick a default command.
inline bool md_applicable(const ModelParams& m) {
  return m.arrival.family() == ArrivalFamily::Exponential &&
         std::holds_alternative<DetService>(m.service);
}
inline bool giph_applicable(const ModelParams& m) {
  return std::holds_alternative<MixedErlang>(m.service) && m.p > 0;
}
// The iteration map is a contraction only for p < 1: the coupling argument
// needs both sign branches.
inline bool fixedpoint_applicable(const ModelParams& m) { return m.p < 1.0; }

namespace detail {

[[noreturn]] inline void fail_at(int line, int col, const std::string& msg) {
  std::ostringstream os;
  os << "line " << line;
  if (col > 0) os << ", column " << col;
  os << ": " << msg;
  throw InputError(os.str());
}

inline std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Plain decimal or scientific literal; the whole string must be consumed.
inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

// Number with exact fraction support: "1/3" divides the two parsed halves.
inline double number_at(const std::string& s, int line, int col) {
  const size_t slash = s.find('/');
  if (slash != std::string::npos) {
    double num, den;
    if (!parse_double(trim(s.substr(0, slash)), num) ||
        !parse_double(trim(s.substr(slash + 1)), den))
      fail_at(line, col, "bad fraction '" + s + "'");
    if (den == 0) fail_at(line, col, "fraction '" + s + "' divides by zero");
    return num / den;
  }
  double v;
  if (!parse_double(s, v)) fail_at(line, col, "bad number '" + s + "'");
  return v;
}

inline long integer_at(const std::string& s, int line, int col) {
  if (s.empty()) fail_at(line, col, "bad integer ''");
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size())
    fail_at(line, col, "bad integer '" + s + "'");
  return v;
}

inline uint64_t u64_at(const std::string& s, int line, int col) {
  if (s.empty() || s[0] == '-') fail_at(line, col, "bad seed '" + s + "'");
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size()) fail_at(line, col, "bad seed '" + s + "'");
  return v;
}

inline std::vector<double> number_list_at(const std::string& s, int line,
                                          int col) {
  std::vector<double> out;
  size_t pos = 0;
  while (true) {
    const size_t comma = s.find(',', pos);
    const std::string item =
        trim(comma == std::string::npos ? s.substr(pos) : s.substr(pos, comma - pos));
    out.push_back(number_at(item, line, col));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

// "family:params" per the header comment.
inline Interarrival arrival_at(const std::string& s, int line, int col) {
  const size_t colon = s.find(':');
  const std::string family = trim(s.substr(0, colon == std::string::npos ? s.size() : colon));
  const std::string rest = colon == std::string::npos ? "" : trim(s.substr(colon + 1));
  try {
    if (family == "exp") return Interarrival::exponential(number_at(rest, line, col));
    if (family == "det") return Interarrival::deterministic(number_at(rest, line, col));
    if (family == "erlang") {
      const size_t comma = rest.find(',');
      if (comma == std::string::npos)
        fail_at(line, col, "erlang arrival needs shape,rate");
      const long k = integer_at(trim(rest.substr(0, comma)), line, col);
      return Interarrival::erlang(static_cast<int>(k),
                                  number_at(trim(rest.substr(comma + 1)), line, col));
    }
    if (family == "hyperexp") {
      const size_t semi = rest.find(';');
      if (semi == std::string::npos)
        fail_at(line, col, "hyperexp arrival needs weights;rates");
      return Interarrival::hyperexp(
          number_list_at(trim(rest.substr(0, semi)), line, col),
          number_list_at(trim(rest.substr(semi + 1)), line, col));
    }
  } catch (const InputError& e) {
    // re-anchor factory validation at the config line
    const std::string w = e.what();
    if (w.rfind("line ", 0) == 0) throw;
    fail_at(line, col, w);
  }
  fail_at(line, col, "unknown arrival family '" + family + "'");
}

struct RawValue {
  std::string value;
  int line = 0;
  int col = 0;
  bool used = false;
};

}  // namespace detail

inline RunSpec parse_config(const std::string& text) {
  using detail::fail_at;
  std::map<std::string, detail::RawValue> kv;

  std::istringstream in(text);
  std::string raw;
  std::string section;
  int no = 0;
  while (std::getline(in, raw)) {
    ++no;
    const size_t hash = raw.find('#');
    std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        fail_at(no, 1, "unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "engine" && section != "output")
        fail_at(no, 1, "unknown section [" + section + "]");
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail_at(no, 1, "expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) fail_at(no, 1, "empty key");
    if (section.empty())
      fail_at(no, 1, "key '" + key + "' appears before any [section]");
    const std::string q = section + "." + key;
    if (kv.count(q))
      fail_at(no, 1, "duplicate key '" + key + "' in [" + section + "]");
    const size_t vcol = raw.find('=') + 2;
    kv[q] = {value, no, static_cast<int>(vcol)};
  }

  auto take = [&kv](const char* q) -> detail::RawValue* {
    auto it = kv.find(q);
    if (it == kv.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  };

  // [model]
  const auto* vp = take("model.p");
  if (!vp) throw InputError("[model] is missing p");
  const double p = detail::number_at(vp->value, vp->line, vp->col);
  if (!(p >= 0.0 && p <= 1.0))
    fail_at(vp->line, vp->col, "p must lie in [0, 1]");

  const auto* vlam = take("model.lambda");
  const auto* varr = take("model.arrival");
  if (vlam && varr)
    fail_at(varr->line, varr->col, "give either lambda or arrival, not both");
  if (!vlam && !varr) throw InputError("[model] needs lambda or arrival");
  Interarrival arrival = Interarrival::exponential(1.0);
  if (vlam) {
    const double lam = detail::number_at(vlam->value, vlam->line, vlam->col);
    if (!(lam > 0)) fail_at(vlam->line, vlam->col, "lambda must be positive");
    arrival = Interarrival::exponential(lam);
  } else {
    arrival = detail::arrival_at(varr->value, varr->line, varr->col);
  }

  const auto* vb = take("model.b");
  const auto* vmu = take("model.mu");
  const auto* vkap = take("model.kappa");
  if (vb && (vmu || vkap)) {
    const auto* clash = vmu ? vmu : vkap;
    fail_at(clash->line, clash->col,
            "give either b (deterministic service) or mu/kappa, not both");
  }
  if (vkap && !vmu)
    fail_at(vkap->line, vkap->col, "kappa needs mu");
  ServiceLaw service = DetService{1.0};
  if (vb) {
    const double b = detail::number_at(vb->value, vb->line, vb->col);
    if (!(b > 0)) fail_at(vb->line, vb->col, "b must be positive");
    service = DetService{b};
  } else if (vmu) {
    const double mu = detail::number_at(vmu->value, vmu->line, vmu->col);
    std::vector<double> kappa{1.0};
    if (vkap) kappa = detail::number_list_at(vkap->value, vkap->line, vkap->col);
    try {
      service = MixedErlang(mu, std::move(kappa));
    } catch (const InputError& e) {
      const auto* at = vkap ? vkap : vmu;
      fail_at(at->line, at->col, e.what());
    }
  } else {
    throw InputError("[model] needs a service law: b, or mu with kappa");
  }

  RunSpec spec;
  spec.model = ModelParams(p, std::move(arrival), std::move(service));

  // [engine]
  if (const auto* v = take("engine.command")) {
    if (!command_from_name(v->value, spec.command))
      fail_at(v->line, v->col, "unknown command '" + v->value + "'");
  } else {
    if (md_applicable(spec.model)) spec.command = Command::Md;
    else if (giph_applicable(spec.model)) spec.command = Command::Giph;
    else if (fixedpoint_applicable(spec.model)) spec.command = Command::FixedPoint;
    else spec.command = Command::Simulate;
  }
  if (const auto* v = take("engine.eps_tail")) {
    spec.engine.eps_tail = detail::number_at(v->value, v->line, v->col);
    if (!(spec.engine.eps_tail > 0))
      fail_at(v->line, v->col, "eps_tail must be positive");
  }
  if (const auto* v = take("engine.tol")) {
    spec.engine.tol = detail::number_at(v->value, v->line, v->col);
    if (!(spec.engine.tol > 0)) fail_at(v->line, v->col, "tol must be positive");
  }
  if (const auto* v = take("engine.n")) {
    const long n = detail::integer_at(v->value, v->line, v->col);
    if (n < 8) fail_at(v->line, v->col, "n must be at least 8");
    spec.engine.n = static_cast<int>(n);
  }
  if (const auto* v = take("engine.samples")) {
    spec.engine.samples = detail::integer_at(v->value, v->line, v->col);
    if (spec.engine.samples < 1)
      fail_at(v->line, v->col, "samples must be at least 1");
  }
  if (const auto* v = take("engine.burn_in")) {
    spec.engine.burn_in = detail::integer_at(v->value, v->line, v->col);
    if (spec.engine.burn_in < 0)
      fail_at(v->line, v->col, "burn_in must be nonnegative");
  }
  if (const auto* v = take("engine.replications")) {
    const long r = detail::integer_at(v->value, v->line, v->col);
    if (r < 1) fail_at(v->line, v->col, "replications must be at least 1");
    spec.engine.replications = static_cast<int>(r);
  }
  if (const auto* v = take("engine.seed"))
    spec.engine.seed = detail::u64_at(v->value, v->line, v->col);

  // [output]
  if (const auto* v = take("output.dir")) spec.output.dir = v->value;
  if (const auto* v = take("output.csv")) spec.output.csv = v->value;
  if (const auto* v = take("output.json")) spec.output.json = v->value;
  if (const auto* v = take("output.samples_csv")) spec.output.samples_csv = v->value;
  if (const auto* v = take("output.x_max")) {
    spec.output.grid.x_max = detail::number_at(v->value, v->line, v->col);
    if (!(spec.output.grid.x_max > 0))
      fail_at(v->line, v->col, "x_max must be positive");
  }
  if (const auto* v = take("output.step")) {
    spec.output.grid.step = detail::number_at(v->value, v->line, v->col);
    if (!(spec.output.grid.step > 0))
      fail_at(v->line, v->col, "step must be positive");
  }

  for (const auto& [q, v] : kv)
    if (!v.used) {
      const size_t dot = q.find('.');
      fail_at(v.line, 1, "unknown key '" + q.substr(dot + 1) + "' in [" +
                             q.substr(0, dot) + "]");
    }
  return spec;
}

namespace detail {

inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string join17(const std::vector<double>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += g17(v[i]);
  }
  return s;
}

}  // namespace detail

// Inverse of parse_config up to RunSpec equality.
inline std::string render(const RunSpec& spec) {
  using detail::g17;
  std::ostringstream os;
  os << "[model]\n";
  os << "p = " << g17(spec.model.p) << "\n";
  const Interarrival& a = spec.model.arrival;
  switch (a.family()) {
    case ArrivalFamily::Exponential:
      os << "lambda = " << g17(a.rate()) << "\n";
      break;
    case ArrivalFamily::Erlang:
      os << "arrival = erlang:" << a.shape() << "," << g17(a.rate()) << "\n";
      break;
    case ArrivalFamily::Deterministic:
      os << "arrival = det:" << g17(a.det_value()) << "\n";
      break;
    case ArrivalFamily::HyperExp:
      os << "arrival = hyperexp:" << detail::join17(a.weights()) << ";"
         << detail::join17(a.rates()) << "\n";
      break;
  }
  if (const auto* d = std::get_if<DetService>(&spec.model.service)) {
    os << "b = " << g17(d->b) << "\n";
  } else {
    const auto& m = std::get<MixedErlang>(spec.model.service);
    os << "mu = " << g17(m.mu()) << "\n";
    os << "kappa = " << detail::join17(m.kappa()) << "\n";
  }
  os << "\n[engine]\n";
  os << "command = " << command_name(spec.command) << "\n";
  os << "eps_tail = " << g17(spec.engine.eps_tail) << "\n";
  os << "tol = " << g17(spec.engine.tol) << "\n";
  os << "n = " << spec.engine.n << "\n";
  os << "samples = " << spec.engine.samples << "\n";
  os << "burn_in = " << spec.engine.burn_in << "\n";
  os << "replications = " << spec.engine.replications << "\n";
  os << "seed = " << spec.engine.seed << "\n";
  os << "\n[output]\n";
  os << "dir = " << spec.output.dir << "\n";
  os << "csv = " << spec.output.csv << "\n";
  os << "json = " << spec.output.json << "\n";
  if (!spec.output.samples_csv.empty())
    os << "samples_csv = " << spec.output.samples_csv << "\n";
  os << "x_max = " << g17(spec.output.grid.x_max) << "\n";
  os << "step = " << g17(spec.output.grid.step) << "\n";
  return os.str();
}

// "max:step" as used by the --grid flag.
inline GridSpec parse_grid(const std::string& s) {
  const size_t colon = s.find(':');
  if (colon == std::string::npos)
    throw InputError("grid must be <max>:<step>");
  GridSpec g;
  double x_max, step;
  if (!detail::parse_double(detail::trim(s.substr(0, colon)), x_max) ||
      !detail::parse_double(detail::trim(s.substr(colon + 1)), step))
    throw InputError("grid must be <max>:<step>");
  if (!(x_max > 0) || !(step > 0))
    throw InputError("grid max and step must be positive");
  g.x_max = x_max;
  g.step = step;
  return g;
}

}  // namespace lq
