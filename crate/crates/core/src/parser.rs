//! Recursive-descent parser for TLTL specification text.
//!
//! ```text
//! spec     := decl* formula
//! decl     := "var" IDENT ":" INT ";"
//! formula  := implies
//! implies  := or ( "->" or )*                  (right-associative)
//! or       := and ( "|" and )*
//! and      := unary ( "&" unary )*
//! unary    := "!" unary | "F" unary | "G" unary | "X" unary | atom
//! atom     := "(" formula ")" | "(" formula ("U"|"T") formula ")" | pred | "true"
//! pred     := linexpr ("<"|">") NUMBER
//!           | "dist" "(" IDENT "," IDENT ";" NUMBER "," NUMBER ")" ("<"|">") NUMBER
//! linexpr  := term (("+"|"-") term)*
//! term     := NUMBER "*" IDENT | IDENT | NUMBER
//! ```
//!
//! Numbers in threshold and center positions, and the first term of a
//! linear expression, may carry a leading `-`. `#` starts a comment that
//! runs to the end of the line.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::formula::{Comparator, Formula, Predicate, PredicateFn, VariableMap, VariableMapError};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: found {found}, expected {}", fmt_expected(.expected))]
    Syntax { found: String, expected: Vec<String> },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("invalid declarations: {0}")]
    Declarations(VariableMapError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

fn fmt_expected(expected: &[String]) -> String {
    match expected {
        [] => "nothing".to_string(),
        [one] => one.clone(),
        many => format!("one of {}", many.join(", ")),
    }
}

/// A parsed specification file: variable declarations plus the formula.
#[derive(Debug, Clone, PartialEq)]
pub struct Spec {
    pub vars: VariableMap,
    pub formula: Formula,
}

impl fmt::Display for Spec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, index) in self.vars.entries() {
            writeln!(f, "var {name}: {index};")?;
        }
        writeln!(f, "{}", self.formula.display(&self.vars))
    }
}

/// Parses a whole specification file, taking the variable map from its
/// `var` declarations.
pub fn parse_spec(text: &str) -> Result<Spec, ParseError> {
    let tokens = lex(text)?;
    let mut p = Parser::new(tokens);
    let vars = p.declarations()?;
    p.vars = vars.clone();
    let formula = p.formula()?;
    p.finish()?;
    Ok(Spec { vars, formula })
}

/// Parses formula text against an externally supplied variable map.
///
/// The text may carry its own `var` declarations; they must then match
/// `vars` exactly.
pub fn parse(text: &str, vars: &VariableMap) -> Result<Formula, ParseError> {
    let tokens = lex(text)?;
    let mut p = Parser::new(tokens);
    let start = p.position();
    let declared = p.declarations()?;
    if !declared.is_empty() && declared != *vars {
        return Err(ParseError {
            line: start.0,
            column: start.1,
            kind: ParseErrorKind::DimensionMismatch(format!(
                "text declares {} variable(s) that do not match the {} supplied",
                declared.dim(),
                vars.dim()
            )),
        });
    }
    p.vars = vars.clone();
    let formula = p.formula()?;
    p.finish()?;
    Ok(formula)
}

/// Alias of [`parse`].
pub fn parse_formula(text: &str, vars: &VariableMap) -> Result<Formula, ParseError> {
    parse(text, vars)
}

/// Checks a parsed spec against an environment's state dimension.
pub fn check_spec_dim(spec: &Spec, dim: usize) -> Result<(), ParseError> {
    let mismatch = |msg: String| ParseError {
        line: 1,
        column: 1,
        kind: ParseErrorKind::DimensionMismatch(msg),
    };
    if spec.vars.dim() != dim {
        return Err(mismatch(format!(
            "spec declares {} state variable(s) but the environment state has {}",
            spec.vars.dim(),
            dim
        )));
    }
    spec.formula.check_dim(dim).map_err(mismatch)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    Comma,
    Semi,
    Colon,
    Lt,
    Gt,
    Plus,
    Minus,
    Star,
    Bang,
    Amp,
    Pipe,
    Arrow,
    Var,
    Dist,
    True,
    Eventually,
    Always,
    Next,
    Until,
    Then,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("'{}'", other.lexeme()),
        }
    }

    fn lexeme(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::Lt => "<",
            Tok::Gt => ">",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Bang => "!",
            Tok::Amp => "&",
            Tok::Pipe => "|",
            Tok::Arrow => "->",
            Tok::Var => "var",
            Tok::Dist => "dist",
            Tok::True => "true",
            Tok::Eventually => "F",
            Tok::Always => "G",
            Tok::Next => "X",
            Tok::Until => "U",
            Tok::Then => "T",
            Tok::Ident(_) => "identifier",
            Tok::Number(_) => "number",
            Tok::Eof => "end of input",
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let mut push = |tok: Tok, len: usize, i: &mut usize, col: &mut usize| {
            out.push(Token {
                tok,
                line: tl,
                column: tc,
            });
            *i += len;
            *col += len;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' => push(Tok::LParen, 1, &mut i, &mut col),
            ')' => push(Tok::RParen, 1, &mut i, &mut col),
            ',' => push(Tok::Comma, 1, &mut i, &mut col),
            ';' => push(Tok::Semi, 1, &mut i, &mut col),
            ':' => push(Tok::Colon, 1, &mut i, &mut col),
            '<' => push(Tok::Lt, 1, &mut i, &mut col),
            '>' => push(Tok::Gt, 1, &mut i, &mut col),
            '+' => push(Tok::Plus, 1, &mut i, &mut col),
            '*' => push(Tok::Star, 1, &mut i, &mut col),
            '!' => push(Tok::Bang, 1, &mut i, &mut col),
            '&' => push(Tok::Amp, 1, &mut i, &mut col),
            '|' => push(Tok::Pipe, 1, &mut i, &mut col),
            '-' if chars.get(i + 1) == Some(&'>') => push(Tok::Arrow, 2, &mut i, &mut col),
            '-' => push(Tok::Minus, 1, &mut i, &mut col),
            c if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) => {
                let start = i;
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                if j < chars.len() && chars[j] == '.' {
                    j += 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let lexeme: String = chars[start..j].iter().collect();
                let value: f64 = lexeme.parse().map_err(|_| ParseError {
                    line: tl,
                    column: tc,
                    kind: ParseErrorKind::Syntax {
                        found: format!("malformed number `{lexeme}`"),
                        expected: vec!["number".into()],
                    },
                })?;
                push(Tok::Number(value), j - start, &mut i, &mut col);
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let word: String = chars[start..j].iter().collect();
                let tok = match word.as_str() {
                    "var" => Tok::Var,
                    "dist" => Tok::Dist,
                    "true" => Tok::True,
                    "F" => Tok::Eventually,
                    "G" => Tok::Always,
                    "X" => Tok::Next,
                    "U" => Tok::Until,
                    "T" => Tok::Then,
                    _ => Tok::Ident(word),
                };
                push(tok, j - start, &mut i, &mut col);
            }
            other => {
                return Err(ParseError {
                    line: tl,
                    column: tc,
                    kind: ParseErrorKind::Syntax {
                        found: format!("character '{other}'"),
                        expected: vec!["a token".into()],
                    },
                })
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    vars: VariableMap,
    // Alternatives tried at `pos` so far; reported on a syntax error.
    tried: BTreeSet<String>,
}

impl Parser {
    fn new(tokens: Vec<Token>) -> Self {
        Self {
            tokens,
            pos: 0,
            vars: VariableMap::default(),
            tried: BTreeSet::new(),
        }
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn position(&self) -> (usize, usize) {
        let t = &self.tokens[self.pos];
        (t.line, t.column)
    }

    fn advance(&mut self) -> Tok {
        let tok = self.tokens[self.pos].tok.clone();
        if tok != Tok::Eof {
            self.pos += 1;
        }
        self.tried.clear();
        tok
    }

    /// Consumes the next token if it equals `tok`, recording it as an
    /// expected alternative otherwise.
    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            self.tried.insert(format!("'{}'", tok.lexeme()));
            false
        }
    }

    fn expect_kind(&mut self, what: &str) {
        self.tried.insert(what.to_string());
    }

    fn error(&self) -> ParseError {
        let (line, column) = self.position();
        ParseError {
            line,
            column,
            kind: ParseErrorKind::Syntax {
                found: self.peek().describe(),
                expected: self.tried.iter().cloned().collect(),
            },
        }
    }

    fn expect(&mut self, tok: &Tok) -> Result<(), ParseError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.error())
        }
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            self.tried.insert("end of input".into());
            Err(self.error())
        }
    }

    fn declarations(&mut self) -> Result<VariableMap, ParseError> {
        let mut entries = Vec::new();
        let start = self.position();
        while self.eat(&Tok::Var) {
            let name = self.ident()?;
            self.expect(&Tok::Colon)?;
            let index = match self.peek().clone() {
                Tok::Number(n) if n >= 0.0 && n.fract() == 0.0 && n < u32::MAX as f64 => {
                    self.advance();
                    n as usize
                }
                _ => {
                    self.expect_kind("non-negative integer");
                    return Err(self.error());
                }
            };
            self.expect(&Tok::Semi)?;
            entries.push((name, index));
        }
        VariableMap::new(entries).map_err(|e| ParseError {
            line: start.0,
            column: start.1,
            kind: ParseErrorKind::Declarations(e),
        })
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        if let Tok::Ident(name) = self.peek().clone() {
            self.advance();
            Ok(name)
        } else {
            self.expect_kind("identifier");
            Err(self.error())
        }
    }

    fn variable(&mut self) -> Result<usize, ParseError> {
        let (line, column) = self.position();
        let name = self.ident()?;
        self.vars.index_of(&name).ok_or(ParseError {
            line,
            column,
            kind: ParseErrorKind::UnknownVariable(name),
        })
    }

    fn signed_number(&mut self) -> Result<f64, ParseError> {
        let neg = self.eat(&Tok::Minus);
        if let Tok::Number(n) = *self.peek() {
            self.advance();
            Ok(if neg { -n } else { n })
        } else {
            self.expect_kind("number");
            Err(self.error())
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        self.implies()
    }

    fn implies(&mut self) -> Result<Formula, ParseError> {
        let mut operands = vec![self.or()?];
        while self.eat(&Tok::Arrow) {
            operands.push(self.or()?);
        }
        let mut acc = operands.pop().expect("at least one operand");
        while let Some(lhs) = operands.pop() {
            acc = Formula::implies(lhs, acc);
        }
        Ok(acc)
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut acc = self.and()?;
        while self.eat(&Tok::Pipe) {
            acc = Formula::or(acc, self.and()?);
        }
        Ok(acc)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut acc = self.unary()?;
        while self.eat(&Tok::Amp) {
            acc = Formula::and(acc, self.unary()?);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        if self.eat(&Tok::Bang) {
            return Ok(Formula::not(self.unary()?));
        }
        if self.eat(&Tok::Eventually) {
            return Ok(Formula::eventually(self.unary()?));
        }
        if self.eat(&Tok::Always) {
            return Ok(Formula::always(self.unary()?));
        }
        if self.eat(&Tok::Next) {
            return Ok(Formula::next(self.unary()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Formula, ParseError> {
        if self.eat(&Tok::LParen) {
            let lhs = self.formula()?;
            if self.eat(&Tok::Until) {
                let rhs = self.formula()?;
                self.expect(&Tok::RParen)?;
                return Ok(Formula::until(lhs, rhs));
            }
            if self.eat(&Tok::Then) {
                let rhs = self.formula()?;
                self.expect(&Tok::RParen)?;
                return Ok(Formula::then(lhs, rhs));
            }
            self.expect(&Tok::RParen)?;
            return Ok(lhs);
        }
        if self.eat(&Tok::True) {
            return Ok(Formula::True);
        }
        if self.eat(&Tok::Dist) {
            return self.distance_pred();
        }
        match self.peek() {
            Tok::Ident(_) | Tok::Number(_) | Tok::Minus => self.linear_pred(),
            _ => {
                self.expect_kind("predicate");
                Err(self.error())
            }
        }
    }

    fn comparator(&mut self) -> Result<Comparator, ParseError> {
        if self.eat(&Tok::Lt) {
            Ok(Comparator::Lt)
        } else if self.eat(&Tok::Gt) {
            Ok(Comparator::Gt)
        } else {
            Err(self.error())
        }
    }

    fn distance_pred(&mut self) -> Result<Formula, ParseError> {
        self.expect(&Tok::LParen)?;
        let i = self.variable()?;
        self.expect(&Tok::Comma)?;
        let (line, column) = self.position();
        let j = self.variable()?;
        if i == j {
            return Err(ParseError {
                line,
                column,
                kind: ParseErrorKind::DimensionMismatch(
                    "distance predicate needs two distinct components".into(),
                ),
            });
        }
        self.expect(&Tok::Semi)?;
        let cx = self.signed_number()?;
        self.expect(&Tok::Comma)?;
        let cy = self.signed_number()?;
        self.expect(&Tok::RParen)?;
        let cmp = self.comparator()?;
        let threshold = self.signed_number()?;
        Ok(Formula::pred(Predicate::new(
            PredicateFn::Distance {
                i,
                j,
                center: (cx, cy),
            },
            cmp,
            threshold,
        )))
    }

    fn linear_pred(&mut self) -> Result<Formula, ParseError> {
        let mut coeffs = vec![0.0; self.vars.dim()];
        let mut offset = 0.0;
        let mut sign = if self.eat(&Tok::Minus) { -1.0 } else { 1.0 };
        loop {
            self.term(sign, &mut coeffs, &mut offset)?;
            if self.eat(&Tok::Plus) {
                sign = 1.0;
            } else if self.eat(&Tok::Minus) {
                sign = -1.0;
            } else {
                break;
            }
        }
        let cmp = self.comparator()?;
        let threshold = self.signed_number()?;
        Ok(Formula::pred(Predicate::new(
            PredicateFn::Affine { coeffs, offset },
            cmp,
            threshold,
        )))
    }

    fn term(&mut self, sign: f64, coeffs: &mut [f64], offset: &mut f64) -> Result<(), ParseError> {
        match self.peek().clone() {
            Tok::Number(n) => {
                self.advance();
                if self.eat(&Tok::Star) {
                    let i = self.variable()?;
                    coeffs[i] += sign * n;
                } else {
                    *offset += sign * n;
                }
                Ok(())
            }
            Tok::Ident(_) => {
                let i = self.variable()?;
                coeffs[i] += sign;
                Ok(())
            }
            _ => {
                self.expect_kind("number");
                self.expect_kind("identifier");
                Err(self.error())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine(coeffs: Vec<f64>, cmp: Comparator, c: f64) -> Formula {
        Formula::pred(Predicate::new(
            PredicateFn::Affine {
                coeffs,
                offset: 0.0,
            },
            cmp,
            c,
        ))
    }

    #[test]
    fn eventually_of_band() {
        let vars = VariableMap::from_names(["s"]).unwrap();
        let f = parse("F(s > 5 & s < 10)", &vars).unwrap();
        let expected = Formula::eventually(Formula::and(
            affine(vec![1.0], Comparator::Gt, 5.0),
            affine(vec![1.0], Comparator::Lt, 10.0),
        ));
        assert_eq!(f, expected);
    }

    #[test]
    fn always_distance() {
        let vars = VariableMap::from_names(["x", "y"]).unwrap();
        let f = parse("G(dist(x,y; 3,3) > 1)", &vars).unwrap();
        let expected = Formula::always(Formula::pred(Predicate::new(
            PredicateFn::Distance {
                i: 0,
                j: 1,
                center: (3.0, 3.0),
            },
            Comparator::Gt,
            1.0,
        )));
        assert_eq!(f, expected);
    }

    #[test]
    fn unbalanced_paren_reports_end_of_input() {
        let vars = VariableMap::from_names(["q"]).unwrap();
        let err = parse("F(q > 5", &vars).unwrap_err();
        assert_eq!((err.line, err.column), (1, 8));
        match err.kind {
            ParseErrorKind::Syntax { found, expected } => {
                assert_eq!(found, "end of input");
                assert!(expected.contains(&"')'".to_string()), "{expected:?}");
                assert!(expected.contains(&"'U'".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_variable_is_located() {
        let vars = VariableMap::from_names(["x"]).unwrap();
        let err = parse("x < 1 &\n  G y > 2", &vars).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownVariable("y".into()));
        assert_eq!((err.line, err.column), (2, 5));
    }

    #[test]
    fn declarations_must_match_supplied_map() {
        let vars = VariableMap::from_names(["x", "y"]).unwrap();
        let err = parse("var x: 0; x < 1", &vars).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::DimensionMismatch(_)));
        assert!(parse("var x: 0; var y: 1; x < 1", &vars).is_ok());
    }

    #[test]
    fn spec_declarations_are_validated() {
        let err = parse_spec("var x: 0; var y: 2; x < 1").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Declarations(_)));
        let err = parse_spec("var x: 0.5; x < 1").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Syntax { .. }));
    }

    #[test]
    fn precedence_and_associativity() {
        let vars = VariableMap::from_names(["a"]).unwrap();
        let p = |c| affine(vec![1.0], Comparator::Lt, c);
        let f = parse("a<1 | a<2 & a<3 -> a<4 -> a<5", &vars).unwrap();
        let expected = Formula::implies(
            Formula::or(p(1.0), Formula::and(p(2.0), p(3.0))),
            Formula::implies(p(4.0), p(5.0)),
        );
        assert_eq!(f, expected);
        let f = parse("!F a<1 & a<2", &vars).unwrap();
        assert_eq!(
            f,
            Formula::and(Formula::not(Formula::eventually(p(1.0))), p(2.0))
        );
    }

    #[test]
    fn until_and_then_live_in_parentheses() {
        let vars = VariableMap::from_names(["s"]).unwrap();
        let f = parse("(s < 4 U s > 8) & (true T X s < 1)", &vars).unwrap();
        assert!(matches!(f, Formula::And(ref a, ref b)
            if matches!(**a, Formula::Until(..)) && matches!(**b, Formula::Then(..))));
        assert!(parse("s < 4 U s > 8", &vars).is_err());
    }

    #[test]
    fn linear_expressions_accumulate() {
        let vars = VariableMap::from_names(["x", "y"]).unwrap();
        let f = parse("-x + 2*y - 0.5*x + 3 - 1 > -2e-1", &vars).unwrap();
        let expected = Formula::pred(Predicate::new(
            PredicateFn::Affine {
                coeffs: vec![-1.5, 2.0],
                offset: 2.0,
            },
            Comparator::Gt,
            -0.2,
        ));
        assert_eq!(f, expected);
    }

    #[test]
    fn comments_and_spec_round_trip() {
        let text = "# demo\nvar s: 0;\nF(s > 5 & s < 10) # trailing\n";
        let spec = parse_spec(text).unwrap();
        let again = parse_spec(&spec.to_string()).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn dimension_check() {
        let spec = parse_spec("var x: 0; var y: 1; G dist(x, y; 0, 0) > 1").unwrap();
        assert!(check_spec_dim(&spec, 2).is_ok());
        assert!(matches!(
            check_spec_dim(&spec, 6).unwrap_err().kind,
            ParseErrorKind::DimensionMismatch(_)
        ));
    }
}
