//! Arithmetic expressions over named coordinates, for user-defined biases.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/' | '×' | '÷') unary)*
//! unary  := ('+' | '-') unary | atom
//! atom   := number | name | '(' expr ')'
//! ```

use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at character {}: {}", self.position, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Star,
    Slash,
    Open,
    Close,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        let single = match c {
            '+' => Some(Token::Plus),
            '-' | '−' => Some(Token::Minus),
            '*' | '×' => Some(Token::Star),
            '/' | '÷' => Some(Token::Slash),
            '(' => Some(Token::Open),
            ')' => Some(Token::Close),
            _ => None,
        };
        if let Some(t) = single {
            out.push((pos, t));
            i += 1;
        } else if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                i += 1;
            }
            if i < chars.len() && matches!(chars[i].1, 'e' | 'E') {
                let mut j = i + 1;
                if j < chars.len() && matches!(chars[j].1, '+' | '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].1.is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].1.is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().map(|(_, c)| c).collect();
            let v = text.parse::<f64>().map_err(|_| ParseError {
                position: pos,
                message: format!("malformed number '{text}'"),
            })?;
            out.push((pos, Token::Num(v)));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                i += 1;
            }
            out.push((pos, Token::Name(chars[start..i].iter().map(|(_, c)| c).collect())));
        } else {
            return Err(ParseError {
                position: pos,
                message: format!("unexpected character '{c}'"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(usize, Token)>,
    at: usize,
    names: &'a [String],
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.at).map(|(_, t)| t)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.at).map_or(self.end, |(p, _)| *p)
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            position: self.position(),
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.at += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.at += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.at += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Token::Slash) => {
                    self.at += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Token::Minus) => {
                self.at += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Token::Plus) => {
                self.at += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Token::Num(v)) => {
                self.at += 1;
                Ok(Expr::Const(v))
            }
            Some(Token::Name(name)) => match self.names.iter().position(|n| *n == name) {
                Some(i) => {
                    self.at += 1;
                    Ok(Expr::Var(i))
                }
                None => self.fail(format!(
                    "unknown coordinate '{name}' (known: {})",
                    self.names.join(", ")
                )),
            },
            Some(Token::Open) => {
                self.at += 1;
                let inner = self.expr()?;
                if self.peek() != Some(&Token::Close) {
                    return self.fail("expected ')'");
                }
                self.at += 1;
                Ok(inner)
            }
            Some(_) => self.fail("expected a number, coordinate name or '('"),
            None => self.fail("unexpected end of expression"),
        }
    }
}

impl Expr {
    /// Parses `src`, resolving identifiers against `names` (coordinate order).
    pub fn parse(src: &str, names: &[String]) -> Result<Self, ParseError> {
        let mut p = Parser {
            tokens: tokenize(src)?,
            at: 0,
            names,
            end: src.len(),
        };
        let e = p.expr()?;
        if p.at != p.tokens.len() {
            return p.fail("unexpected trailing input");
        }
        Ok(e)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        vec!["w".into(), "M".into()]
    }

    fn eval(src: &str, x: &[f64]) -> f64 {
        Expr::parse(src, &names()).unwrap().eval(x)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3", &[0.0, 0.0]), 7.0);
        assert_eq!(eval("(1 + 2) * 3", &[0.0, 0.0]), 9.0);
        assert_eq!(eval("8 / 4 / 2", &[0.0, 0.0]), 1.0);
        assert_eq!(eval("10 - 4 - 3", &[0.0, 0.0]), 3.0);
        assert_eq!(eval("-2 * -M", &[0.0, 1.5]), 3.0);
    }

    #[test]
    fn coordinates_and_unicode_operators() {
        assert_eq!(eval("1 ÷ (1 − M)", &[0.0, 0.5]), 2.0);
        assert_eq!(eval("w × 2e1", &[0.25, 0.0]), 5.0);
        assert_eq!(eval("1.5E-1 + w", &[1.0, 0.0]), 1.15);
    }

    #[test]
    fn errors_carry_positions() {
        let e = Expr::parse("1 + q", &names()).unwrap_err();
        assert_eq!(e.position, 4);
        assert!(e.message.contains("unknown coordinate"));
        assert!(Expr::parse("(1 + 2", &names()).is_err());
        assert!(Expr::parse("1 2", &names()).is_err());
        assert!(Expr::parse("", &names()).is_err());
        assert_eq!(Expr::parse("2 ^ 3", &names()).unwrap_err().position, 2);
    }
}
