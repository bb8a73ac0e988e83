//! Recursive-descent parser for the coefficient expression grammar.
//!
//! Grammar (EBNF):
//!
//! ```text
//! expr    = term , { ("+" | "-") , term } ;
//! term    = unary , { ("*" | "/") , unary } ;
//! unary   = "-" , unary | power ;
//! power   = atom , [ "^" , exponent ] ;
//! atom    = number | "x" | func , "(" , expr , ")" | "(" , expr , ")" ;
//! func    = "sin" | "cos" | "exp" | "tanh" ;
//! exponent= [ "-" ] , digits ;
//! number  = digits , [ "." , digits ] , [ ("e"|"E") , [ "+"|"-" ] , digits ] ;
//! ```
//!
//! Exponents are integer literals; all other numbers are parsed as `f64`.
//! Errors carry the byte offset of the offending token.

use super::{Expr, ExprError};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug)]
struct Lexed {
    token: Token,
    position: usize,
}

fn syntax(position: usize, message: impl Into<String>) -> ExprError {
    ExprError::Syntax {
        position,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Lexed>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
            }
            '+' => {
                out.push(Lexed { token: Token::Plus, position: start });
                i += 1;
            }
            '-' => {
                out.push(Lexed { token: Token::Minus, position: start });
                i += 1;
            }
            '*' => {
                out.push(Lexed { token: Token::Star, position: start });
                i += 1;
            }
            '/' => {
                out.push(Lexed { token: Token::Slash, position: start });
                i += 1;
            }
            '^' => {
                out.push(Lexed { token: Token::Caret, position: start });
                i += 1;
            }
            '(' => {
                out.push(Lexed { token: Token::LParen, position: start });
                i += 1;
            }
            ')' => {
                out.push(Lexed { token: Token::RParen, position: start });
                i += 1;
            }
            '0'..='9' | '.' => {
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // optional scientific-notation suffix
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let slice = &text[start..i];
                let value: f64 = slice
                    .parse()
                    .map_err(|_| syntax(start, format!("invalid number `{slice}`")))?;
                out.push(Lexed { token: Token::Number(value), position: start });
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                while i < bytes.len()
                    && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                {
                    i += 1;
                }
                out.push(Lexed {
                    token: Token::Ident(text[start..i].to_string()),
                    position: start,
                });
            }
            other => return Err(syntax(start, format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Lexed>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|l| &l.token)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |l| l.position)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|l| l.token.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, token: Token, what: &str) -> Result<(), ExprError> {
        let position = self.position();
        match self.bump() {
            Some(t) if t == token => Ok(()),
            _ => Err(syntax(position, format!("expected {what}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.bump();
                    lhs = Expr::add(lhs, self.term()?);
                }
                Some(Token::Minus) => {
                    self.bump();
                    lhs = Expr::sub(lhs, self.term()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.bump();
                    lhs = Expr::mul(lhs, self.unary()?);
                }
                Some(Token::Slash) => {
                    self.bump();
                    lhs = Expr::div(lhs, self.unary()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.bump();
            Ok(Expr::neg(self.unary()?))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.bump();
            let k = self.exponent()?;
            Ok(Expr::pow(base, k))
        } else {
            Ok(base)
        }
    }

    fn exponent(&mut self) -> Result<i32, ExprError> {
        let position = self.position();
        let negative = if matches!(self.peek(), Some(Token::Minus)) {
            self.bump();
            true
        } else {
            false
        };
        match self.bump() {
            Some(Token::Number(v)) if v.fract() == 0.0 && v.abs() <= f64::from(i32::MAX) => {
                let k = v as i32;
                Ok(if negative { -k } else { k })
            }
            _ => Err(syntax(position, "expected integer exponent after `^`")),
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let position = self.position();
        match self.bump() {
            Some(Token::Number(v)) => Ok(Expr::Const(v)),
            Some(Token::Ident(name)) => match name.as_str() {
                "x" => Ok(Expr::Var),
                "sin" | "cos" | "exp" | "tanh" => {
                    self.expect(Token::LParen, "`(` after function name")?;
                    let arg = self.expr()?;
                    self.expect(Token::RParen, "`)` to close function argument")?;
                    Ok(match name.as_str() {
                        "sin" => Expr::sin(arg),
                        "cos" => Expr::cos(arg),
                        "exp" => Expr::exp(arg),
                        _ => Expr::tanh(arg),
                    })
                }
                _ => Err(ExprError::UnknownIdentifier { position, name }),
            },
            Some(Token::LParen) => {
                let inner = self.expr()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(inner)
            }
            _ => Err(syntax(position, "expected a number, `x`, a function call or `(`")),
        }
    }
}

/// Parse an expression string into an [`Expr`] tree.
///
/// Round-tripping through [`Expr`]'s `Display` implementation re-parses to a
/// structurally equal tree.
pub fn parse(text: &str) -> Result<Expr, ExprError> {
    let tokens = lex(text)?;
    let mut parser = Parser { tokens, pos: 0, end: text.len() };
    let e = parser.expr()?;
    if parser.pos < parser.tokens.len() {
        return Err(syntax(parser.position(), "unexpected trailing input"));
    }
    Ok(e)
}
