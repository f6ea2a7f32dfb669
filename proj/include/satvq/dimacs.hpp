#pragma once

// DIMACS CNF text format: `p cnf <vars> <clauses>` header, `c` comment lines,
// each clause a run of nonzero literals terminated by 0.

#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "satvq/maxsat.hpp"

namespace satvq::maxsat {

inline ClauseMatrix read_dimacs(std::istream& in) {
  std::string line;
  int vars = -1;
  int declared = -1;
  std::vector<std::vector<int>> clauses;
  std::vector<int> current;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    if (first == "c" || first[0] == 'c') continue;
    if (first == "%") break;  // SATLIB trailer
    if (first == "p") {
      std::string fmt;
      if (vars >= 0 || !(ls >> fmt >> vars >> declared) || fmt != "cnf" || vars < 1 || declared < 0)
        throw FormatError("dimacs: bad header at line " + std::to_string(line_no));
      continue;
    }
    if (vars < 0) throw FormatError("dimacs: clause before header at line " + std::to_string(line_no));
    std::istringstream body(line);
    long lit = 0;
    while (body >> lit) {
      if (lit == 0) {
        if (current.empty()) throw FormatError("dimacs: empty clause at line " + std::to_string(line_no));
        clauses.push_back(std::move(current));
        current.clear();
      } else {
        if (std::abs(lit) > vars)
          throw FormatError("dimacs: literal " + std::to_string(lit) + " exceeds declared variable count");
        current.push_back(static_cast<int>(lit));
      }
    }
    if (!body.eof()) throw FormatError("dimacs: non-integer token at line " + std::to_string(line_no));
  }
  if (vars < 0) throw FormatError("dimacs: missing `p cnf` header");
  if (!current.empty()) clauses.push_back(std::move(current));
  if (static_cast<int>(clauses.size()) != declared)
    throw FormatError("dimacs: header declares " + std::to_string(declared) + " clauses, found " +
                      std::to_string(clauses.size()));
  try {
    return ClauseMatrix::from_clauses(vars, clauses);
  } catch (const ContractError& e) {
    throw FormatError(std::string("dimacs: ") + e.what());
  }
}

inline void write_dimacs(std::ostream& out, const ClauseMatrix& s) {
  out << "p cnf " << s.n() << ' ' << s.m() << '\n';
  for (int i = 0; i < s.m(); ++i) {
    for (int lit : s.literals(i)) out << lit << ' ';
    out << "0\n";
  }
}

}  // namespace satvq::maxsat
