//! A small arithmetic language for coefficients and costs in config files.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | 't' | 'x' | 'x_' digits | 'pi' | 'e'
//!          | ('exp' | 'ln' | 'sqrt') '(' expr ')' | '(' expr ')'
//! ```
//!
//! State coordinates are 1-based (`x_1 … x_d`); bare `x` means `x_1`.

use std::fmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message} at column {column} in `{source_text}`")]
pub struct ParseError {
    pub message: String,
    /// 1-based.
    pub column: usize,
    pub source_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Exp,
    Ln,
    Sqrt,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Time,
    State(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression in `t` and `x_1 … x_d`.
#[derive(Clone, PartialEq)]
pub struct Expr {
    root: Node,
    text: String,
    max_index: usize,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.text)
    }
}

impl Expr {
    /// Parse `text`, rejecting references to coordinates beyond `dim`.
    pub fn parse(text: &str, dim: usize) -> Result<Self, ParseError> {
        let mut p = Parser {
            chars: text.char_indices().collect(),
            pos: 0,
            text,
            max_index: 0,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(p.error("unexpected trailing input"));
        }
        if p.max_index > dim {
            return Err(ParseError {
                message: format!("x_{} exceeds the state dimension {dim}", p.max_index),
                column: 1,
                source_text: text.to_string(),
            });
        }
        Ok(Self {
            max_index: p.max_index,
            root,
            text: text.to_string(),
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Highest coordinate index referenced (0 if none).
    pub fn max_index(&self) -> usize {
        self.max_index
    }

    /// Whether the expression mentions neither `t` nor any `x_i`.
    pub fn constant_value(&self) -> Option<f64> {
        fn is_const(n: &Node) -> bool {
            match n {
                Node::Num(_) => true,
                Node::Time | Node::State(_) => false,
                Node::Neg(a) | Node::Call(_, a) => is_const(a),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                    is_const(a) && is_const(b)
                }
            }
        }
        is_const(&self.root).then(|| self.eval(0.0, &[]))
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        eval(&self.root, t, x)
    }
}

fn eval(n: &Node, t: f64, x: &[f64]) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Time => t,
        Node::State(i) => x[*i],
        Node::Neg(a) => -eval(a, t, x),
        Node::Add(a, b) => eval(a, t, x) + eval(b, t, x),
        Node::Sub(a, b) => eval(a, t, x) - eval(b, t, x),
        Node::Mul(a, b) => eval(a, t, x) * eval(b, t, x),
        Node::Div(a, b) => eval(a, t, x) / eval(b, t, x),
        Node::Pow(a, b) => eval(a, t, x).powf(eval(b, t, x)),
        Node::Call(f, a) => {
            let v = eval(a, t, x);
            match f {
                Func::Exp => v.exp(),
                Func::Ln => v.ln(),
                Func::Sqrt => v.sqrt(),
            }
        }
    }
}

struct Parser<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    text: &'a str,
    max_index: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ParseError {
        ParseError {
            message: message.to_string(),
            column: self.pos + 1,
            source_text: self.text.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|c| c.1)
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Node::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of expression")),
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(c) => Err(self.error(&format!("unexpected `{c}`"))),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        // exponent part, e.g. 1e-4
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+' | '-')) {
                self.pos += 1;
            }
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let s: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
        s.parse::<f64>().map(Node::Num).map_err(|_| ParseError {
            message: format!("invalid number `{s}`"),
            column: start + 1,
            source_text: self.text.to_string(),
        })
    }

    fn identifier(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        let name: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
        let func = match name.as_str() {
            "t" => return Ok(Node::Time),
            "x" => {
                self.max_index = self.max_index.max(1);
                return Ok(Node::State(0));
            }
            "pi" => return Ok(Node::Num(std::f64::consts::PI)),
            "e" => return Ok(Node::Num(std::f64::consts::E)),
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            other => {
                if let Some(i) = other.strip_prefix("x_").and_then(|d| d.parse::<usize>().ok()) {
                    if i == 0 {
                        self.pos = start;
                        return Err(self.error("coordinates are numbered from x_1"));
                    }
                    self.max_index = self.max_index.max(i);
                    return Ok(Node::State(i - 1));
                }
                self.pos = start;
                return Err(self.error(&format!("unknown name `{other}`")));
            }
        };
        if !self.eat('(') {
            return Err(self.error(&format!("expected `(` after `{name}`")));
        }
        let arg = self.expr()?;
        if !self.eat(')') {
            return Err(self.error("expected `)`"));
        }
        Ok(Node::Call(func, Box::new(arg)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, t: f64, x: &[f64]) -> f64 {
        Expr::parse(s, x.len()).unwrap().eval(t, x)
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1 + 2 * 3", 0.0, &[]), 7.0);
        assert_eq!(ev("(1 + 2) * 3", 0.0, &[]), 9.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0, &[]), 512.0);
        assert_eq!(ev("-2 ^ 2", 0.0, &[]), -4.0);
        assert_eq!(ev("2 ^ -1", 0.0, &[]), 0.5);
        assert_eq!(ev("8 / 4 / 2", 0.0, &[]), 1.0);
        assert_eq!(ev("1 - 2 - 3", 0.0, &[]), -4.0);
    }

    #[test]
    fn variables_and_functions() {
        assert_eq!(ev("t + x_2", 0.5, &[1.0, 2.0]), 2.5);
        assert_eq!(ev("x^2", 0.0, &[3.0]), 9.0);
        assert!((ev("exp(ln(2)) + sqrt(16)", 0.0, &[]) - 6.0).abs() < 1e-15);
        assert!((ev("2*pi - e", 0.0, &[]) - (2.0 * std::f64::consts::PI - std::f64::consts::E)).abs() < 1e-15);
        assert_eq!(ev("1e-3 * 2E2", 0.0, &[]), 0.2);
    }

    #[test]
    fn constant_detection() {
        assert_eq!(Expr::parse("2 * 3", 1).unwrap().constant_value(), Some(6.0));
        assert_eq!(Expr::parse("x + 1", 1).unwrap().constant_value(), None);
    }

    #[test]
    fn errors_carry_columns() {
        let e = Expr::parse("1 + foo", 1).unwrap_err();
        assert_eq!(e.column, 5);
        assert!(Expr::parse("x_3", 2).is_err());
        assert!(Expr::parse("x_0", 2).is_err());
        assert!(Expr::parse("(1 + 2", 1).is_err());
        assert!(Expr::parse("1 +", 1).is_err());
        assert!(Expr::parse("exp 2", 1).is_err());
        assert!(Expr::parse("1 2", 1).is_err());
        assert!(Expr::parse("", 1).is_err());
    }
}
