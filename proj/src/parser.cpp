#include "lakekit/parser.hpp"

#include <cctype>
#include <sstream>

#include "lakekit/errors.hpp"

namespace lakekit::lang {

namespace {

enum class Tok {
  End, Ident, Int, Float, String, Comma, LParen, RParen, Less, Minus, Question,
  // keywords
  Select, From, Join, On, Where, Group, By, As, Cast, Is, Not, Null, Sum, And,
  True, False,
};

struct Token {
  Tok kind;
  std::string text;
  int line = 1, col = 1;
};

struct Lexer {
  std::string_view src;
  size_t pos = 0;
  int line = 1, col = 1;

  [[noreturn]] void fail(const std::string& expected, int l, int c) const {
    std::ostringstream out;
    out << l << ":" << c << ": expected " << expected;
    throw Error(Errc::SyntaxError, out.str());
  }

  void advance(char c) {
    ++pos;
    if (c == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }

  void skip_space() {
    while (pos < src.size()) {
      char c = src[pos];
      if (c == '-' && pos + 1 < src.size() && src[pos + 1] == '-') {
        while (pos < src.size() && src[pos] != '\n') advance(src[pos]);
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance(c);
      } else {
        break;
      }
    }
  }

  Token next() {
    skip_space();
    Token t;
    t.line = line;
    t.col = col;
    if (pos >= src.size()) {
      t.kind = Tok::End;
      return t;
    }
    char c = src[pos];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string word;
      auto take_word = [&] {
        std::string w;
        while (pos < src.size() &&
               (std::isalnum(static_cast<unsigned char>(src[pos])) ||
                src[pos] == '_')) {
          w.push_back(src[pos]);
          advance(src[pos]);
        }
        return w;
      };
      word = take_word();
      // qualified identifier: input.col
      if (pos < src.size() && src[pos] == '.' && pos + 1 < src.size() &&
          (std::isalpha(static_cast<unsigned char>(src[pos + 1])) ||
           src[pos + 1] == '_')) {
        advance('.');
        word += "." + take_word();
        t.kind = Tok::Ident;
        t.text = word;
        return t;
      }
      static const std::pair<const char*, Tok> keywords[] = {
          {"select", Tok::Select}, {"from", Tok::From}, {"join", Tok::Join},
          {"on", Tok::On},         {"where", Tok::Where}, {"group", Tok::Group},
          {"by", Tok::By},         {"as", Tok::As},     {"cast", Tok::Cast},
          {"is", Tok::Is},         {"not", Tok::Not},   {"null", Tok::Null},
          {"sum", Tok::Sum},       {"and", Tok::And},   {"true", Tok::True},
          {"false", Tok::False},
      };
      for (const auto& [kw, kind] : keywords) {
        if (word == kw) {
          t.kind = kind;
          t.text = word;
          return t;
        }
      }
      t.kind = Tok::Ident;
      t.text = word;
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::string num;
      bool is_float = false;
      while (pos < src.size() &&
             std::isdigit(static_cast<unsigned char>(src[pos]))) {
        num.push_back(src[pos]);
        advance(src[pos]);
      }
      if (pos + 1 < src.size() && src[pos] == '.' &&
          std::isdigit(static_cast<unsigned char>(src[pos + 1]))) {
        is_float = true;
        num.push_back('.');
        advance('.');
        while (pos < src.size() &&
               std::isdigit(static_cast<unsigned char>(src[pos]))) {
          num.push_back(src[pos]);
          advance(src[pos]);
        }
      }
      t.kind = is_float ? Tok::Float : Tok::Int;
      t.text = num;
      return t;
    }
    if (c == '\'') {
      advance(c);
      std::string text;
      while (true) {
        if (pos >= src.size()) fail("closing quote", t.line, t.col);
        char ch = src[pos];
        if (ch == '\'') {
          advance(ch);
          if (pos < src.size() && src[pos] == '\'') {  // '' escapes a quote
            text.push_back('\'');
            advance('\'');
            continue;
          }
          break;
        }
        text.push_back(ch);
        advance(ch);
      }
      t.kind = Tok::String;
      t.text = text;
      return t;
    }
    switch (c) {
      case ',': t.kind = Tok::Comma; break;
      case '(': t.kind = Tok::LParen; break;
      case ')': t.kind = Tok::RParen; break;
      case '<': t.kind = Tok::Less; break;
      case '-': t.kind = Tok::Minus; break;
      case '?': t.kind = Tok::Question; break;
      default:
        fail("token", t.line, t.col);
    }
    t.text = std::string(1, c);
    advance(c);
    return t;
  }
};

struct Parser {
  Lexer lex;
  Token cur;

  explicit Parser(std::string_view src) : lex{src} { cur = lex.next(); }

  [[noreturn]] void fail(const std::string& expected) {
    std::ostringstream out;
    out << cur.line << ":" << cur.col << ": expected " << expected;
    throw Error(Errc::SyntaxError, out.str());
  }

  bool at(Tok k) const { return cur.kind == k; }

  Token eat(Tok k, const std::string& what) {
    if (!at(k)) fail(what);
    Token t = cur;
    cur = lex.next();
    return t;
  }

  bool accept(Tok k) {
    if (!at(k)) return false;
    cur = lex.next();
    return true;
  }

  std::string ident() { return eat(Tok::Ident, "identifier").text; }

  ColumnType type_name() {
    Token t = eat(Tok::Ident, "type name");
    ColumnType ct;
    try {
      ct = parse_column_type(t.text);
    } catch (const Error&) {
      std::ostringstream out;
      out << t.line << ":" << t.col << ": expected type name, got '" << t.text
          << "'";
      throw Error(Errc::SyntaxError, out.str());
    }
    if (accept(Tok::Question)) ct.nullable = true;
    return ct;
  }

  // expr := and_expr
  ExprPtr expr() { return and_expr(); }

  ExprPtr and_expr() {
    ExprPtr e = cmp_expr();
    while (accept(Tok::And)) e = Expr::logical_and(e, cmp_expr());
    return e;
  }

  // cmp := add ('<' add | 'is not null')?
  ExprPtr cmp_expr() {
    ExprPtr e = add_expr();
    if (accept(Tok::Less)) return Expr::lt(e, add_expr());
    if (accept(Tok::Is)) {
      eat(Tok::Not, "'not'");
      eat(Tok::Null, "'null'");
      return Expr::is_not_null(e);
    }
    return e;
  }

  ExprPtr add_expr() {
    ExprPtr e = primary();
    while (accept(Tok::Minus)) e = Expr::sub(e, primary());
    return e;
  }

  ExprPtr primary() {
    if (accept(Tok::LParen)) {
      ExprPtr e = expr();
      eat(Tok::RParen, "')'");
      return e;
    }
    if (at(Tok::Cast)) {
      cur = lex.next();
      eat(Tok::LParen, "'('");
      ExprPtr e = expr();
      eat(Tok::As, "'as'");
      ColumnType t = type_name();
      eat(Tok::RParen, "')'");
      return Expr::cast(e, t);
    }
    if (at(Tok::Sum)) {
      cur = lex.next();
      eat(Tok::LParen, "'('");
      ExprPtr e = expr();
      eat(Tok::RParen, "')'");
      return Expr::sum(e);
    }
    if (at(Tok::Int)) {
      int64_t v = std::stoll(cur.text);
      cur = lex.next();
      return Expr::lit(Value{v}, ColumnType{BaseType::Int64, false});
    }
    if (at(Tok::Float)) {
      double v = std::stod(cur.text);
      cur = lex.next();
      return Expr::lit(Value{v}, ColumnType{BaseType::Float64, false});
    }
    if (at(Tok::String)) {
      std::string v = cur.text;
      cur = lex.next();
      return Expr::lit(Value{v}, ColumnType{BaseType::String, false});
    }
    if (accept(Tok::True)) return Expr::lit(Value{true}, {BaseType::Bool, false});
    if (accept(Tok::False)) return Expr::lit(Value{false}, {BaseType::Bool, false});
    if (accept(Tok::Null)) return Expr::null_lit();
    if (at(Tok::Ident)) return Expr::col(ident());
    fail("expression");
  }

  ProjItem proj_item() {
    ProjItem item;
    item.expr = expr();
    if (accept(Tok::As)) item.alias = ident();
    return item;
  }

  std::vector<std::string> ident_list() {
    std::vector<std::string> out{ident()};
    while (accept(Tok::Comma)) out.push_back(ident());
    return out;
  }

  TransformPtr statement() {
    eat(Tok::Select, "'select'");
    std::vector<ProjItem> items{proj_item()};
    while (accept(Tok::Comma)) items.push_back(proj_item());

    TransformPtr base = Transform::unit();
    if (accept(Tok::From)) {
      base = Transform::input_ref(ident());
      if (accept(Tok::Join)) {
        TransformPtr right = Transform::input_ref(ident());
        eat(Tok::On, "'on'");
        eat(Tok::LParen, "'('");
        std::vector<std::string> keys = ident_list();
        eat(Tok::RParen, "')'");
        base = Transform::join(base, right, std::move(keys));
      }
    }
    if (accept(Tok::Where)) base = Transform::filter(base, expr());

    TransformPtr top;
    if (accept(Tok::Group)) {
      eat(Tok::By, "'by'");
      top = Transform::aggregate(base, ident_list(), std::move(items));
    } else {
      top = Transform::select(base, std::move(items));
    }
    eat(Tok::End, "end of statement");
    return top;
  }
};

// ---- printing --------------------------------------------------------

int prec(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::And: return 1;
    case Expr::Kind::Lt:
    case Expr::Kind::IsNotNull: return 2;
    case Expr::Kind::Sub: return 3;
    default: return 4;
  }
}

void print_expr(const Expr& e, int min_prec, std::ostream& out) {
  bool parens = prec(e) < min_prec;
  if (parens) out << "(";
  switch (e.kind) {
    case Expr::Kind::ColRef:
      out << e.column;
      break;
    case Expr::Kind::Lit:
      if (!e.lit_type) {
        out << "null";
      } else if (e.lit_type->base == BaseType::String) {
        out << "'";
        for (char c : std::get<std::string>(e.value)) {
          out << c;
          if (c == '\'') out << "'";
        }
        out << "'";
      } else if (e.lit_type->base == BaseType::Float64) {
        std::string s = format_value(e.value);
        out << s;
        if (s.find('.') == std::string::npos && s.find('e') == std::string::npos)
          out << ".0";
      } else {
        out << format_value(e.value);
      }
      break;
    case Expr::Kind::Cast:
      out << "cast(";
      print_expr(*e.a, 1, out);
      out << " as " << to_string(e.target) << ")";
      break;
    case Expr::Kind::SumAgg:
      out << "sum(";
      print_expr(*e.a, 1, out);
      out << ")";
      break;
    case Expr::Kind::IsNotNull:
      print_expr(*e.a, 3, out);
      out << " is not null";
      break;
    case Expr::Kind::Sub:
      print_expr(*e.a, 3, out);
      out << " - ";
      print_expr(*e.b, 4, out);
      break;
    case Expr::Kind::Lt:
      print_expr(*e.a, 3, out);
      out << " < ";
      print_expr(*e.b, 3, out);
      break;
    case Expr::Kind::And:
      print_expr(*e.a, 1, out);
      out << " and ";
      print_expr(*e.b, 2, out);
      break;
  }
  if (parens) out << ")";
}

void print_items(const std::vector<ProjItem>& items, std::ostream& out) {
  for (size_t i = 0; i < items.size(); ++i) {
    if (i) out << ", ";
    print_expr(*items[i].expr, 1, out);
    if (!items[i].alias.empty()) out << " as " << items[i].alias;
  }
}

void print_base(const Transform& t, std::ostream& out) {
  switch (t.kind) {
    case Transform::Kind::Unit:
      return;
    case Transform::Kind::Input:
      out << " from " << t.input;
      return;
    case Transform::Kind::Join: {
      if (t.child->kind != Transform::Kind::Input ||
          t.right->kind != Transform::Kind::Input)
        throw Error(Errc::SyntaxError, "join operands must be input tables");
      out << " from " << t.child->input << " join " << t.right->input << " on (";
      for (size_t i = 0; i < t.join_keys.size(); ++i) {
        if (i) out << ", ";
        out << t.join_keys[i];
      }
      out << ")";
      return;
    }
    case Transform::Kind::Filter:
      print_base(*t.child, out);
      out << " where ";
      print_expr(*t.predicate, 1, out);
      return;
    default:
      throw Error(Errc::SyntaxError, "tree is not a printable statement");
  }
}

}  // namespace

TransformPtr parse(std::string_view source) {
  Parser p(source);
  return p.statement();
}

std::string print(const Expr& e) {
  std::ostringstream out;
  print_expr(e, 1, out);
  return out.str();
}

std::string print(const Transform& t) {
  std::ostringstream out;
  out << "select ";
  switch (t.kind) {
    case Transform::Kind::Select:
      print_items(t.items, out);
      print_base(*t.child, out);
      break;
    case Transform::Kind::Aggregate: {
      print_items(t.items, out);
      print_base(*t.child, out);
      out << " group by ";
      for (size_t i = 0; i < t.group_by.size(); ++i) {
        if (i) out << ", ";
        out << t.group_by[i];
      }
      break;
    }
    default:
      throw Error(Errc::SyntaxError, "tree is not a printable statement");
  }
  return out.str();
}

}  // namespace lakekit::lang
