#include "ctp/logic.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <sstream>

namespace ctp {

bool is_variable_name(std::string_view s) {
  if (s.empty() || !(std::isupper(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin() + 1, s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  });
}

Term Term::constant(std::string symbol) {
  if (symbol.empty()) throw std::invalid_argument("constant symbol must be non-empty");
  return Term{Kind::constant, std::move(symbol)};
}

Term Term::variable(std::string name) {
  if (!is_variable_name(name)) throw std::invalid_argument("bad variable name: " + name);
  return Term{Kind::variable, std::move(name)};
}

std::size_t AtomHash::operator()(const Atom& a) const {
  std::size_t h = std::hash<std::string>{}(a.predicate);
  for (const Term& t : a.args) {
    std::size_t th = std::hash<std::string>{}(t.text) ^ (t.is_variable() ? 0x9e3779b9u : 0u);
    h ^= th + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  }
  return h;
}

Term resolve_term(const Substitution& subst, Term term) {
  std::unordered_set<std::string> seen;
  while (term.is_variable()) {
    auto it = subst.find(term.text);
    if (it == subst.end()) return term;
    if (!seen.insert(term.text).second)
      throw std::runtime_error("cyclic binding chain through variable " + term.text);
    term = it->second;
  }
  return term;
}

Atom apply_substitution(const Atom& atom, const Substitution& subst) {
  Atom out = atom;
  for (Term& arg : out.args) arg = resolve_term(subst, arg);
  return out;
}

Rule standardize_apart(const Rule& rule, VariableCounter& counter) {
  std::map<std::string, std::string> renaming;
  auto rename = [&](const Atom& atom) {
    Atom out = atom;
    for (Term& arg : out.args) {
      if (!arg.is_variable()) continue;
      auto [it, inserted] = renaming.emplace(arg.text, "");
      if (inserted) it->second = counter.fresh();
      arg = Term::variable(it->second);
    }
    return out;
  };
  Rule out;
  out.head = rename(rule.head);
  out.body.reserve(rule.body.size());
  for (const Atom& b : rule.body) out.body.push_back(rename(b));
  return out;
}

ParseError::ParseError(const std::string& message, std::size_t line, std::string offending)
    : std::runtime_error("line " + std::to_string(line) + ": " + message + " in \"" + offending +
                         "\""),
      line_no(line),
      text(std::move(offending)) {}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

Term term_from_token(std::string_view token) {
  std::string text{token};
  return is_variable_name(text) ? Term::variable(text) : Term::constant(text);
}

Atom parse_prolog(std::string_view line, std::size_t line_no) {
  std::string_view s = trim(line);
  if (!s.empty() && s.back() == '.') s = trim(s.substr(0, s.size() - 1));
  auto open = s.find('(');
  if (open == std::string_view::npos || s.back() != ')')
    throw ParseError("expected pred(a,b).", line_no, std::string{line});
  std::string_view pred = trim(s.substr(0, open));
  std::string_view inner = s.substr(open + 1, s.size() - open - 2);
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= inner.size(); ++i) {
    if (i == inner.size() || inner[i] == ',') {
      parts.push_back(trim(inner.substr(start, i - start)));
      start = i + 1;
    }
  }
  if (parts.size() != 2)
    throw ParseError("arity must be 2, got " + std::to_string(parts.size()), line_no,
                     std::string{line});
  if (pred.empty() || parts[0].empty() || parts[1].empty())
    throw ParseError("empty symbol", line_no, std::string{line});
  if (is_variable_name(pred))
    throw ParseError("predicate must be a constant symbol", line_no, std::string{line});
  return Atom{std::string{pred}, {term_from_token(parts[0]), term_from_token(parts[1])}};
}

Atom parse_tsv(std::string_view line, std::size_t line_no) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == '\t') {
      cols.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  if (cols.size() != 3)
    throw ParseError("expected subject<TAB>predicate<TAB>object", line_no, std::string{line});
  for (auto c : cols)
    if (c.empty()) throw ParseError("empty column", line_no, std::string{line});
  if (is_variable_name(cols[1]))
    throw ParseError("predicate must be a constant symbol", line_no, std::string{line});
  return Atom{std::string{cols[1]}, {term_from_token(cols[0]), term_from_token(cols[2])}};
}

}  // namespace

Atom parse_fact_line(std::string_view line, FactFormat format, std::size_t line_no) {
  if (trim(line).empty()) throw ParseError("empty line", line_no, std::string{line});
  return format == FactFormat::prolog ? parse_prolog(line, line_no) : parse_tsv(line, line_no);
}

std::string format_fact(const Atom& atom, FactFormat format) {
  if (format == FactFormat::prolog)
    return atom.predicate + "(" + atom.args[0].text + "," + atom.args[1].text + ").";
  return atom.args[0].text + "\t" + atom.predicate + "\t" + atom.args[1].text;
}

void KnowledgeBase::add_entity(const std::string& symbol) {
  if (entity_set_.insert(symbol).second) entity_vocab.push_back(symbol);
}

void KnowledgeBase::add_predicate(const std::string& symbol) {
  if (predicate_set_.insert(symbol).second) predicate_vocab.push_back(symbol);
}

void KnowledgeBase::add_fact(const Atom& fact) {
  if (!fact.ground()) throw std::invalid_argument("facts must be ground: " + fact.predicate);
  add_predicate(fact.predicate);
  add_entity(fact.args[0].text);
  add_entity(fact.args[1].text);
  if (!fact_set_.insert(fact).second) {
    ++duplicate_count;
    return;
  }
  facts.push_back(fact);
}

void KnowledgeBase::add_rule(const Rule& rule) {
  add_predicate(rule.head.predicate);
  for (const Atom& b : rule.body) add_predicate(b.predicate);
  for (const Atom* a = &rule.head; a; a = nullptr)
    for (const Term& t : a->args)
      if (t.is_constant()) add_entity(t.text);
  for (const Atom& b : rule.body)
    for (const Term& t : b.args)
      if (t.is_constant()) add_entity(t.text);
  rules.push_back(rule);
}

KnowledgeBase load_kb(const std::string& path, FactFormat format) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open KB file: " + path);
  KnowledgeBase kb;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> diagnostics;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string_view s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    try {
      Atom atom = parse_fact_line(line, format, line_no);
      if (!atom.ground()) throw ParseError("facts must be ground", line_no, line);
      kb.add_fact(atom);
    } catch (const ParseError& e) {
      diagnostics.push_back(e.what());
    }
  }
  if (!diagnostics.empty()) {
    std::ostringstream msg;
    msg << path << ": " << diagnostics.size() << " parse error(s)";
    for (const auto& d : diagnostics) msg << "\n  " << d;
    throw std::runtime_error(msg.str());
  }
  return kb;
}

KnowledgeBase kb_from_facts(const std::vector<Atom>& facts) {
  KnowledgeBase kb;
  for (const Atom& f : facts) kb.add_fact(f);
  return kb;
}

namespace {

// Exact unification of a rule-head/fact against a (possibly open) goal.
bool unify_exact(const Atom& head, const Atom& goal, Substitution& subst) {
  if (head.predicate != goal.predicate) return false;
  for (std::size_t i = 0; i < 2; ++i) {
    Term h = resolve_term(subst, head.args[i]);
    Term g = resolve_term(subst, goal.args[i]);
    if (h == g) continue;
    if (h.is_variable())
      subst.emplace(h.text, g);
    else if (g.is_variable())
      subst.emplace(g.text, h);
    else
      return false;
  }
  return true;
}

// Enumerates every substitution proving `goal` (sibling body atoms constrain
// shared variables, so the first proof of an earlier atom is not enough).
// `stop` short-circuits the walk once the top-level goal is proven.
struct SymbolicProver {
  const KnowledgeBase& kb;
  VariableCounter counter;
  bool stop = false;

  void enumerate_or(const Atom& goal, int depth, const Substitution& subst,
                    const std::function<void(const Substitution&)>& yield) {
    for (const Atom& fact : kb.facts) {
      if (stop) return;
      Substitution s = subst;
      if (unify_exact(fact, goal, s)) yield(s);
    }
    if (depth <= 0) return;
    for (const Rule& rule : kb.rules) {
      if (stop) return;
      Rule fresh = standardize_apart(rule, counter);
      Substitution s = subst;
      if (!unify_exact(fresh.head, goal, s)) continue;
      enumerate_and(fresh.body, 0, depth, s, yield);
    }
  }

  void enumerate_and(const std::vector<Atom>& body, std::size_t index, int depth,
                     const Substitution& subst,
                     const std::function<void(const Substitution&)>& yield) {
    if (stop) return;
    if (index == body.size()) {
      yield(subst);
      return;
    }
    Atom first = apply_substitution(body[index], subst);
    enumerate_or(first, depth - 1, subst, [&](const Substitution& s) {
      enumerate_and(body, index + 1, depth, s, yield);
    });
  }
};

}  // namespace

bool symbolic_entails(const KnowledgeBase& kb, const Atom& goal, int depth) {
  if (depth < 0) return false;
  SymbolicProver prover{kb, {}};
  bool proven = false;
  prover.enumerate_or(goal, depth, {}, [&](const Substitution&) {
    proven = true;
    prover.stop = true;
  });
  return proven;
}

}  // namespace ctp
