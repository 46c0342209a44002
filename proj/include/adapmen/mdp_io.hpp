#pragma once

#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "adapmen/format.hpp"
#include "adapmen/mdp.hpp"

namespace adapmen {

/*
 * Text format (see docs/formats.md):
 *
 *   adapmen-mdp 1
 *   states <S> actions <A> horizon <H>
 *   transition
 *   <s> <a> <P(0|s,a)> ... <P(S-1|s,a)>      one line per (s, a), s-major
 *   reward
 *   <s> <r(s,0)> ... <r(s,A-1)>              one line per state
 *   initial
 *   <rho(0)> ... <rho(S-1)>
 *   end
 *
 * Numbers use the shortest round-trip decimal form, so dump -> load -> dump
 * is the identity on bytes and on values.
 */
inline constexpr const char* kMdpMagic = "adapmen-mdp";
inline constexpr int kMdpFormatVersion = 1;

inline void dump_mdp(const TabularMDP& mdp, std::ostream& out) {
  const std::size_t S = mdp.num_states(), A = mdp.num_actions();
  out << kMdpMagic << ' ' << kMdpFormatVersion << '\n';
  out << "states " << S << " actions " << A << " horizon " << mdp.horizon() << '\n';
  out << "transition\n";
  for (StateId s = 0; s < S; ++s)
    for (ActionId a = 0; a < A; ++a) {
      out << s << ' ' << a;
      for (double p : mdp.transition(s, a)) out << ' ' << format_double(p);
      out << '\n';
    }
  out << "reward\n";
  for (StateId s = 0; s < S; ++s) {
    out << s;
    for (ActionId a = 0; a < A; ++a) out << ' ' << format_double(mdp.reward(s, a));
    out << '\n';
  }
  out << "initial\n";
  for (StateId s = 0; s < S; ++s) out << (s ? " " : "") << format_double(mdp.initial_dist()[s]);
  out << "\nend\n";
}

inline std::string dump_mdp(const TabularMDP& mdp) {
  std::ostringstream os;
  dump_mdp(mdp, os);
  return os.str();
}

namespace detail {

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::vector<std::string> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      std::istringstream ss(line);
      std::vector<std::string> toks;
      for (std::string t; ss >> t;) toks.push_back(t);
      if (!toks.empty()) return toks;
    }
    fail("unexpected end of input");
  }

  void expect_keyword(const std::string& word) {
    const auto toks = next();
    if (toks.size() != 1 || toks[0] != word) fail("expected '" + word + "'");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw std::runtime_error("mdp text, line " + std::to_string(line_no_) + ": " + msg);
  }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

}  // namespace detail

/// Parses the text format. Structure errors name the line; the model is not
/// validated here (run validate_mdp on the result).
inline TabularMDP load_mdp(std::istream& in) {
  detail::LineReader rd(in);
  auto toks = rd.next();
  if (toks.size() != 2 || toks[0] != kMdpMagic || toks[1] != std::to_string(kMdpFormatVersion))
    rd.fail("bad header, expected '" + std::string(kMdpMagic) + " " + std::to_string(kMdpFormatVersion) + "'");
  toks = rd.next();
  if (toks.size() != 6 || toks[0] != "states" || toks[2] != "actions" || toks[4] != "horizon")
    rd.fail("expected 'states <S> actions <A> horizon <H>'");
  std::size_t S = 0, A = 0, H = 0;
  try {
    S = parse_u64(toks[1]);
    A = parse_u64(toks[3]);
    H = parse_u64(toks[5]);
  } catch (const std::invalid_argument& e) {
    rd.fail(e.what());
  }
  if (S == 0 || A == 0 || H == 0) rd.fail("counts must be positive");
  TabularMDP mdp(S, A, H);
  const auto num = [&](const std::string& t) {
    try {
      return parse_double(t);
    } catch (const std::invalid_argument& e) {
      rd.fail(e.what());
    }
  };
  const auto index = [&](const std::string& t, std::size_t expected) {
    std::uint64_t v = 0;
    try {
      v = parse_u64(t);
    } catch (const std::invalid_argument& e) {
      rd.fail(e.what());
    }
    if (v != expected) rd.fail("expected index " + std::to_string(expected) + ", got " + t);
  };
  rd.expect_keyword("transition");
  for (StateId s = 0; s < S; ++s)
    for (ActionId a = 0; a < A; ++a) {
      toks = rd.next();
      if (toks.size() != S + 2) rd.fail("transition row needs " + std::to_string(S + 2) + " fields");
      index(toks[0], s);
      index(toks[1], a);
      auto row = mdp.transition(s, a);
      for (StateId n = 0; n < S; ++n) row[n] = num(toks[n + 2]);
    }
  rd.expect_keyword("reward");
  for (StateId s = 0; s < S; ++s) {
    toks = rd.next();
    if (toks.size() != A + 1) rd.fail("reward row needs " + std::to_string(A + 1) + " fields");
    index(toks[0], s);
    for (ActionId a = 0; a < A; ++a) mdp.set_reward(s, a, num(toks[a + 1]));
  }
  rd.expect_keyword("initial");
  toks = rd.next();
  if (toks.size() != S) rd.fail("initial distribution needs " + std::to_string(S) + " fields");
  for (StateId s = 0; s < S; ++s) mdp.initial_dist()[s] = num(toks[s]);
  rd.expect_keyword("end");
  return mdp;
}

inline TabularMDP load_mdp(const std::string& text) {
  std::istringstream is(text);
  return load_mdp(is);
}

}  // namespace adapmen
